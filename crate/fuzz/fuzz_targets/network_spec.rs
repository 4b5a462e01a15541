#![no_main]

use libfuzzer_sys::fuzz_target;
use routing_privacy::network::{enumerate_paths_capped, Network, NetworkSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = NetworkSpec::from_json(text) else { return };
    if spec.nodes.len() > 12 || spec.edges.len() > 40 {
        return;
    }
    let Ok(net) = Network::build(&spec) else { return };
    if let Ok(paths) = enumerate_paths_capped(&net, 256) {
        for i in 0..paths.num_od() {
            assert!(paths.block_len(i) >= 1);
            let m = paths.incidence(i);
            assert_eq!(m.cols(), paths.block_len(i));
            assert_eq!(m.rows(), net.num_edges());
        }
    }
});
