#![no_main]

use libfuzzer_sys::fuzz_target;
use routing_privacy::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = ExperimentConfig::from_json(text) else { return };
    // Path enumeration is exponential in the worst case; keep inputs small.
    if cfg.nodes.len() > 12 || cfg.edges.len() > 40 {
        return;
    }
    if let Ok(game) = cfg.build_game() {
        let _ = cfg.sensitivity_constants(&game);
        let _ = cfg.dynamics();
    }
});
