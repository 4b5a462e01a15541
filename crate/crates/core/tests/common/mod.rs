#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use routing_privacy::config::ExperimentConfig;
use routing_privacy::game::{EdgeCost, FlowAllocation, GameInstance};
use routing_privacy::network::{enumerate_paths, Network, NetworkSpec, PathSet};

pub const STANDIN: &str = include_str!("../../../../configs/standin_two_od.json");
pub const PIGOU: &str = include_str!("../../../../configs/pigou.json");

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn standin() -> (ExperimentConfig, GameInstance) {
    let cfg = ExperimentConfig::from_json(STANDIN).unwrap();
    let game = cfg.build_game().unwrap();
    (cfg, game)
}

pub fn pigou() -> (ExperimentConfig, GameInstance) {
    let cfg = ExperimentConfig::from_json(PIGOU).unwrap();
    let game = cfg.build_game().unwrap();
    (cfg, game)
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("n{i}")).collect()
}

/// A random DAG with a guaranteed chain `n0 → n1 → … → n{n-1}`, so every
/// forward OD pair is reachable.
pub fn random_network(rng: &mut impl Rng, nodes: usize, num_od: usize) -> NetworkSpec {
    let nm = names(nodes);
    let mut edges = Vec::new();
    for i in 0..nodes - 1 {
        edges.push((nm[i].clone(), nm[i + 1].clone()));
    }
    for i in 0..nodes {
        for j in i + 2..nodes {
            if rng.random_bool(0.45) {
                edges.push((nm[i].clone(), nm[j].clone()));
            }
        }
    }
    // Occasional parallel edge.
    if rng.random_bool(0.3) {
        let i = rng.random_range(0..nodes - 1);
        edges.push((nm[i].clone(), nm[i + 1].clone()));
    }
    let od_pairs = (0..num_od)
        .map(|_| {
            let o = rng.random_range(0..nodes - 1);
            let d = rng.random_range(o + 1..nodes);
            (nm[o].clone(), nm[d].clone())
        })
        .collect();
    NetworkSpec {
        nodes: nm,
        edges,
        od_pairs,
    }
}

/// Random affine game with `populations` populations and masses in `[0, a_theta]`.
pub fn random_game(rng: &mut impl Rng, populations: usize) -> GameInstance {
    let nodes = rng.random_range(3..7);
    let num_od = rng.random_range(1..4);
    let spec = random_network(rng, nodes, num_od);
    let net = Network::build(&spec).unwrap();
    let paths = enumerate_paths(&net).unwrap();
    let costs = (0..net.num_edges())
        .map(|_| EdgeCost::affine(rng.random_range(0.05..2.0), rng.random_range(0.0..1.0)))
        .collect();
    let thetas = (0..populations)
        .map(|_| (0..num_od).map(|_| rng.random_range(0.0..1.5)).collect())
        .collect();
    GameInstance::new(net, paths, costs, thetas, Some(1.5)).unwrap()
}

/// Random point in the relative interior of every block, entries at least `floor`.
pub fn random_block_point(rng: &mut impl Rng, paths: &PathSet, floor: f64) -> Vec<f64> {
    let mut x = vec![0.0; paths.total_paths()];
    for i in 0..paths.num_od() {
        let r = paths.block(i);
        let n = r.len() as f64;
        let raw: Vec<f64> = r.clone().map(|_| rng.random_range(0.0..1.0)).collect();
        let s: f64 = raw.iter().sum();
        for (slot, v) in x[r].iter_mut().zip(raw) {
            *slot = floor + (1.0 - n * floor) * v / s;
        }
    }
    x
}

pub fn random_allocation(rng: &mut impl Rng, game: &GameInstance, floor: f64) -> FlowAllocation {
    FlowAllocation {
        x: (0..game.num_populations())
            .map(|_| random_block_point(rng, game.paths(), floor))
            .collect(),
    }
}

/// Random loss vector with entries in `[lo, hi)`.
pub fn random_vec(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}
