#![no_main]

use libfuzzer_sys::fuzz_target;
use routing_privacy::config::ExperimentConfig;
use routing_privacy::privacy::accountant;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = ExperimentConfig::from_json(text) else { return };
    if cfg.nodes.len() > 12 || cfg.edges.len() > 40 {
        return;
    }
    let Ok(game) = cfg.build_game() else { return };
    let Ok(consts) = cfg.sensitivity_constants(&game) else { return };
    let horizon = cfg.simulation.horizon.min(500);
    for &curve in &cfg.privacy.curves {
        if let Ok(report) = accountant(&consts, &cfg.accountant_params(curve, horizon.max(1))) {
            assert!(report.epsilon >= 0.0);
            assert!(report.delta >= 0.0);
        }
    }
});
