//! End-to-end acceptance checks. Run with `--nocapture` to see one
//! PASS/FAIL line per criterion.

mod common;

use std::time::Instant;

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use common::*;
use routing_privacy::config::CurveSpec;
use routing_privacy::dynamics::{
    block_norm, dual_block_norm, smd_update, suboptimality_bound, BoundTerm, BregmanGeometry,
    Geometry, LearningSchedule,
};
use routing_privacy::game::FlowAllocation;
use routing_privacy::privacy::{
    accountant, compose, flow_sensitivity_bound, update_sensitivity_bound, PrivacyReport,
    SensitivityConstants,
};
use routing_privacy::sim::{self, bound_terms, loss_second_moment_bound};

type Outcome = (bool, String);

fn convergence_reproduction() -> Outcome {
    let (cfg, game) = standin();
    let start = Instant::now();
    let f_star = sim::reference_potential(&game, cfg.simulation.equilibrium_tol).unwrap();
    let mut slopes = Vec::new();
    let mut terminal = Vec::new();
    for &sigma in &cfg.simulation.sigma {
        let sc = cfg.simulation_config(sigma).unwrap();
        assert_eq!(sc.window(), (50, 200));
        let stats = sim::monte_carlo(&game, &sc, f_star).unwrap();
        slopes.push(stats.slope.unwrap_or(f64::NAN));
        terminal.push(stats.terminal_mean());
    }
    let secs = start.elapsed().as_secs_f64();
    let slopes_ok = slopes.iter().all(|&s| s <= -0.15);
    let monotone = terminal.windows(2).all(|w| w[0] <= w[1]);
    (
        slopes_ok && monotone && secs <= 120.0,
        format!("slopes {slopes:.3?}, terminal means {terminal:.6?}, {secs:.2} s"),
    )
}

fn equilibrium_oracle() -> Outcome {
    let (_, game) = pigou();
    let eq = game.solve_equilibrium(1e-8).unwrap();
    let gap = game.nash_gap(&eq.allocation).unwrap();
    (
        (eq.potential - 0.5).abs() < 1e-4 && gap < 1e-4,
        format!("f* = {:.9}, gap = {gap:.2e}", eq.potential),
    )
}

fn gradient_correctness() -> Outcome {
    let mut r = rng(300);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = r.random_range(1..4);
        let game = random_game(&mut r, k);
        let x = random_allocation(&mut r, &game, 0.01);
        let grad = game.potential_gradient(&x).unwrap();
        let (mut err, mut norm) = (0.0, 0.0);
        for kk in 0..k {
            for p in 0..game.paths().total_paths() {
                let mut up = x.clone();
                let mut down = x.clone();
                up.x[kk][p] += h;
                down.x[kk][p] -= h;
                let fd = (game.potential(&up).unwrap() - game.potential(&down).unwrap()) / (2.0 * h);
                err += (fd - grad[kk][p]).powi(2);
                norm += grad[kk][p].powi(2);
            }
        }
        if norm > 0.0 {
            worst = worst.max((err / norm).sqrt());
        }
    }
    (worst < 1e-6, format!("worst relative error {worst:.2e} over 100 instances"))
}

fn sensitivity_bounds() -> Outcome {
    let mut r = rng(400);
    let geometries = [Geometry::Entropic, Geometry::Euclidean];
    let mut update_violations = 0;
    let mut flow_violations = 0;
    let mut tightest = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let game = random_game(&mut r, 1);
        let paths = game.paths();
        let kind = geometries[r.random_range(0..2)];
        let ell = BregmanGeometry::new(kind, paths).strong_convexity;
        let x = random_block_point(&mut r, paths, 0.0);
        let loss = random_vec(&mut r, paths.total_paths(), -3.0, 6.0);
        let eta = r.random_range(0.01..3.0);
        let a = random_vec(&mut r, paths.num_od(), 0.0, 1.5);
        let b = random_vec(&mut r, paths.num_od(), 0.0, 1.5);
        let xa = smd_update(kind, paths, eta, &x, &a, &loss).unwrap();
        let xb = smd_update(kind, paths, eta, &x, &b, &loss).unwrap();
        let shift = a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        let moved = block_norm(paths, &xa.iter().zip(&xb).map(|(u, v)| u - v).collect::<Vec<_>>());
        let bound = update_sensitivity_bound(eta, dual_block_norm(paths, &loss), ell, shift);
        if moved > bound * (1.0 + 1e-12) + 1e-15 {
            update_violations += 1;
        }
        if bound > 0.0 {
            tightest.0 = tightest.0.max(moved / bound);
        }
    }
    for _ in 0..1000 {
        let pops = r.random_range(1..4);
        let game = random_game(&mut r, pops);
        let paths = game.paths();
        let kind = geometries[r.random_range(0..2)];
        let ell = BregmanGeometry::new(kind, paths).strong_convexity;
        let eta = r.random_range(0.01..3.0);
        let consts = SensitivityConstants::compute(
            &game,
            vec![ell; pops],
            vec![LearningSchedule::constant(eta); pops],
        )
        .unwrap();
        let c = r.random_range(1e-4..0.5);
        let k = r.random_range(0..pops);
        let mut thetas = game.thetas().to_vec();
        for m in thetas[k].iter_mut() {
            *m = (*m + r.random_range(-c..c)).clamp(0.0, game.a_theta());
        }
        let prior = random_allocation(&mut r, &game, 0.0);
        let loss = random_vec(&mut r, paths.total_paths(), -3.0, 6.0);
        let step = |th: &[Vec<f64>]| FlowAllocation {
            x: prior
                .x
                .iter()
                .zip(th)
                .map(|(xk, t)| smd_update(kind, paths, eta, xk, t, &loss).unwrap())
                .collect(),
        };
        let phi = game.edge_flows_with(game.thetas(), &step(game.thetas())).unwrap();
        let phi2 = game.edge_flows_with(&thetas, &step(&thetas)).unwrap();
        let moved = phi.iter().zip(&phi2).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        let bound = flow_sensitivity_bound(&consts, c, eta, dual_block_norm(paths, &loss), ell);
        if moved > bound * (1.0 + 1e-12) + 1e-15 {
            flow_violations += 1;
        }
        tightest.1 = tightest.1.max(moved / bound);
    }
    (
        update_violations == 0 && flow_violations == 0,
        format!(
            "violations: update {update_violations}/1000, edge flow {flow_violations}/1000 \
             (largest ratio to bound {:.3} / {:.3})",
            tightest.0, tightest.1
        ),
    )
}

/// Checks `P(A ∈ B) ≤ e^ε P(A' ∈ B) + δ` in both directions over every grid
/// interval and every half-line at a grid point.
fn gaussian_events_violations(delta_shift: f64, sigma: f64, eps: f64, delta: f64) -> usize {
    const CELLS: usize = 10_000;
    let y = Normal::new(0.0, sigma).unwrap();
    let y2 = Normal::new(delta_shift, sigma).unwrap();
    let lo = -10.0 * sigma;
    let hi = delta_shift + 10.0 * sigma;
    let grid: Vec<f64> = (0..=CELLS).map(|j| lo + (hi - lo) * j as f64 / CELLS as f64).collect();
    let mut violations = 0;
    let mut check = |p: f64, q: f64| {
        let slack = 1e-15;
        if p > eps.exp() * q + delta + slack || q > eps.exp() * p + delta + slack {
            violations += 1;
        }
    };
    for w in grid.windows(2) {
        check(y.cdf(w[1]) - y.cdf(w[0]), y2.cdf(w[1]) - y2.cdf(w[0]));
    }
    for &g in &grid {
        check(y.cdf(g), y2.cdf(g));
        check(y.sf(g), y2.sf(g));
    }
    violations
}

fn single_step_dp() -> Outcome {
    let (cfg, game) = standin();
    let consts = cfg.sensitivity_constants(&game).unwrap();
    let curves = [(1e-6, 0.1), (1e-5, 0.3), (1e-4, 0.3)];
    let mut checked = 0;
    let mut violations = 0;
    let mut largest_eps = 0.0f64;
    for (c, sigma) in curves {
        let rep = accountant(&consts, &cfg.accountant_params(CurveSpec { c_adj: c, sigma }, 200)).unwrap();
        for s in rep.steps.iter().filter(|s| s.valid).step_by(20) {
            violations += gaussian_events_violations(s.sensitivity, sigma, s.epsilon, s.delta);
            checked += 1;
            largest_eps = largest_eps.max(s.epsilon);
        }
    }
    (
        violations == 0 && checked > 0,
        format!("{checked} releases × 30001 events, {violations} violations, ε_t up to {largest_eps:.3}"),
    )
}

fn composition() -> Outcome {
    let d0 = 1e-3;
    let g = compose(&[(0.1, d0), (0.1, d0), (0.1, d0)], 0.0);
    let want = d0 * (0.2f64.exp() + 0.1f64.exp() + 1.0);
    let err = (g.delta - want).abs().max((g.epsilon - 0.3).abs());
    (err <= 1e-12, format!("δ = {:.15e}, expected {want:.15e}", g.delta))
}

fn first_trivial_horizon(consts: &SensitivityConstants, cfg: &routing_privacy::config::ExperimentConfig, curve: CurveSpec) -> Option<usize> {
    let trivial = |t: usize| -> PrivacyReport { accountant(consts, &cfg.accountant_params(curve, t)).unwrap() };
    let (mut lo, mut hi) = (1usize, 1usize);
    while !trivial(hi).trivial {
        lo = hi;
        hi *= 2;
        if hi > 1 << 20 {
            return None;
        }
    }
    if trivial(1).trivial {
        return Some(1);
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if trivial(mid).trivial { hi = mid } else { lo = mid }
    }
    Some(hi)
}

fn accountant_ordering() -> Outcome {
    let (cfg, game) = standin();
    let consts = cfg.sensitivity_constants(&game).unwrap();
    let small = first_trivial_horizon(&consts, &cfg, CurveSpec { c_adj: 1e-6, sigma: 0.1 });
    let large = first_trivial_horizon(&consts, &cfg, CurveSpec { c_adj: 1e-5, sigma: 0.3 });
    let ok = matches!((small, large), (Some(s), Some(l)) if l < s);
    (ok, format!("first trivial T: c = 1e-6 → {small:?}, c = 1e-5 → {large:?}"))
}

fn bound_evaluation() -> Outcome {
    let term = BoundTerm {
        divergence_bound: 2f64.ln(),
        strong_convexity: 1.0,
        schedule: LearningSchedule::new(1.0, 0.5).unwrap(),
    };
    let value = suboptimality_bound(&[term], 1.0, 1).unwrap();
    let formula_ok = (value - 2.0 * (2f64.ln() + 1.0)).abs() <= 1e-12;

    let mut worst = 0.0f64;
    for (cfg, game) in [standin(), pigou()] {
        let consts = cfg.sensitivity_constants(&game).unwrap();
        let f_star = sim::reference_potential(&game, 1e-10).unwrap();
        for &sigma in &cfg.simulation.sigma {
            let sc = cfg.simulation_config(sigma).unwrap();
            let stats = sim::monte_carlo(&game, &sc, f_star).unwrap();
            let l = loss_second_moment_bound(consts.total_paths, consts.loss_bound, sigma);
            let bound = suboptimality_bound(&bound_terms(&game, &sc.dynamics), l, sc.horizon).unwrap();
            worst = worst.max((stats.terminal_mean() - f_star) / bound);
        }
    }
    (
        formula_ok && worst <= 3.0,
        format!("bound(t=1) = {value:.15}, largest realized/bound ratio {worst:.2e}"),
    )
}

fn determinism() -> Outcome {
    let (cfg, game) = standin();
    let sc = cfg.simulation_config(0.4).unwrap();
    let first = sim::monte_carlo_with_runs(&game, &sc, 2.4).unwrap();
    let second = sim::monte_carlo_with_runs(&game, &sc, 2.4).unwrap();
    let a = sim::ensemble_csv(&first.0);
    let b = sim::ensemble_csv(&second.0);
    let runs_equal = first
        .1
        .iter()
        .zip(&second.1)
        .all(|(x, y)| sim::run_csv(x) == sim::run_csv(y));
    (
        a.as_bytes() == b.as_bytes() && runs_equal,
        format!("{} ensemble bytes, {} runs compared", a.len(), first.1.len()),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("convergence on the two-OD network", convergence_reproduction),
        ("Pigou equilibrium", equilibrium_oracle),
        ("potential gradient vs finite differences", gradient_correctness),
        ("sensitivity bounds never violated", sensitivity_bounds),
        ("single-release Gaussian DP on event grid", single_step_dp),
        ("three-step composition", composition),
        ("larger radius turns trivial sooner", accountant_ordering),
        ("convergence bound evaluation", bound_evaluation),
        ("byte-identical reruns", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = check();
        println!("{} [{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" }, i + 1);
        if !ok {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
