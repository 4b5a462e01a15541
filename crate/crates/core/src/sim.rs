//! Online learning loop with noisy loss releases and Monte Carlo replication.
//!
//! Row `τ` (1-based) of a run holds the state `x^{(τ)}` reached after `τ`
//! updates, together with the release `ℓ̂^{(τ-1)}` that produced it.
//!
//! Run `r` draws its noise from a ChaCha8 generator seeded with the master
//! seed and switched to stream `r`, so runs share no state and can execute
//! in any order. Within a run, noise is drawn in path order.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{smd_update, BoundTerm, BregmanGeometry, Geometry, LearningSchedule};
use crate::error::{Error, Result};
use crate::game::{FlowAllocation, GameInstance};
use crate::simplex::{self, SIMPLEX_TOL};

/// Learning rule of one population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PopulationDynamics {
    pub geometry: Geometry,
    pub schedule: LearningSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub dynamics: Vec<PopulationDynamics>,
    /// Noise standard deviation; zero gives deterministic dynamics.
    pub sigma: f64,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    /// Inclusive `τ` range of the log-log slope fit; defaults to `[T/4, T]`.
    pub slope_window: Option<(usize, usize)>,
}

impl SimulationConfig {
    pub fn validate(&self, game: &GameInstance) -> Result<()> {
        if self.dynamics.len() != game.num_populations() {
            return Err(Error::Dimension(format!(
                "{} population dynamics for {} populations",
                self.dynamics.len(),
                game.num_populations()
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("σ must be >= 0, got {}", self.sigma)));
        }
        if self.horizon == 0 || self.runs == 0 {
            return Err(Error::InvalidArgument("T and runs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn window(&self) -> (usize, usize) {
        self.slope_window
            .unwrap_or(((self.horizon / 4).max(1), self.horizon))
    }
}

/// Generator for run `run` under master seed `seed`.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// `ℓ̂ = ℓ + σ z` with `z` i.i.d. standard normal in path order.
pub fn observe_losses<R: Rng + ?Sized>(loss: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    loss.iter()
        .map(|&l| {
            let z: f64 = rng.sample(StandardNormal);
            l + sigma * z
        })
        .collect()
}

/// Per-iteration record of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: u64,
    /// `f(x^{(τ)})`, τ = 1..=T.
    pub potential: Vec<f64>,
    pub gap: Vec<f64>,
    /// `[τ][k]` path-flow vector of population `k`.
    pub flows: Vec<Vec<Vec<f64>>>,
    /// Release `ℓ̂^{(τ-1)}` used to reach row τ.
    pub released: Vec<Vec<f64>>,
}

/// Runs the noisy mirror-descent dynamics from the uniform allocation.
pub fn run_trajectory(game: &GameInstance, cfg: &SimulationConfig, run: u64) -> Result<RunRecord> {
    cfg.validate(game)?;
    let paths = game.paths();
    let mut rng = run_rng(cfg.seed, run);
    let mut x = FlowAllocation::uniform(paths, game.num_populations());
    let mut rec = RunRecord {
        run,
        potential: Vec::with_capacity(cfg.horizon),
        gap: Vec::with_capacity(cfg.horizon),
        flows: Vec::with_capacity(cfg.horizon),
        released: Vec::with_capacity(cfg.horizon),
    };
    for t in 0..cfg.horizon {
        let loss = game.losses(&x)?;
        let released = observe_losses(&loss, cfg.sigma, &mut rng);
        for (k, dyn_k) in cfg.dynamics.iter().enumerate() {
            let eta = dyn_k.schedule.rate(t);
            x.x[k] = smd_update(dyn_k.geometry, paths, eta, &x.x[k], game.theta(k), &released)?;
        }
        for (k, xk) in x.x.iter().enumerate() {
            for i in 0..paths.num_od() {
                if !simplex::is_on_simplex(&xk[paths.block(i)], SIMPLEX_TOL) {
                    return Err(Error::Numerical(format!(
                        "run {run}, iteration {t}: population {k} left the simplex on OD {i}"
                    )));
                }
            }
        }
        let next_loss = game.losses(&x)?;
        rec.potential.push(game.potential(&x)?);
        rec.gap.push(game.nash_gap_with_losses(&x, &next_loss));
        rec.flows.push(x.x.clone());
        rec.released.push(released);
    }
    Ok(rec)
}

/// Aggregates over Monte Carlo runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub sigma: f64,
    pub runs: usize,
    pub f_mean: Vec<f64>,
    /// Population standard deviation across runs (zero for one run).
    pub f_std: Vec<f64>,
    pub gap_mean: Vec<f64>,
    /// `[τ][k][p]` mean path flows.
    pub flow_mean: Vec<Vec<Vec<f64>>>,
    pub f_star: f64,
    pub slope_window: (usize, usize),
    /// Least-squares slope of `log(f_mean − f*)` against `log τ` over the window.
    pub slope: Option<f64>,
}

impl EnsembleStats {
    pub fn terminal_mean(&self) -> f64 {
        *self.f_mean.last().expect("horizon >= 1")
    }
}

/// Potential at an equilibrium certified to `tol`, shared by all noise levels.
pub fn reference_potential(game: &GameInstance, tol: f64) -> Result<f64> {
    Ok(game.solve_equilibrium(tol)?.potential)
}

/// Executes `cfg.runs` independent trajectories and aggregates them.
pub fn monte_carlo(game: &GameInstance, cfg: &SimulationConfig, f_star: f64) -> Result<EnsembleStats> {
    Ok(monte_carlo_with_runs(game, cfg, f_star)?.0)
}

/// As [`monte_carlo`], also returning every run record in run order.
pub fn monte_carlo_with_runs(
    game: &GameInstance,
    cfg: &SimulationConfig,
    f_star: f64,
) -> Result<(EnsembleStats, Vec<RunRecord>)> {
    cfg.validate(game)?;
    if !f_star.is_finite() {
        return Err(Error::InvalidArgument("reference potential f* is not finite".into()));
    }
    let runs: Vec<RunRecord> = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|r| run_trajectory(game, cfg, r))
        .collect::<Result<_>>()?;

    let n = runs.len() as f64;
    let horizon = cfg.horizon;
    let mut f_mean = vec![0.0; horizon];
    let mut f_std = vec![0.0; horizon];
    let mut gap_mean = vec![0.0; horizon];
    let mut flow_mean: Vec<Vec<Vec<f64>>> = runs[0]
        .flows
        .iter()
        .map(|fk| fk.iter().map(|v| vec![0.0; v.len()]).collect())
        .collect();
    for rec in &runs {
        for t in 0..horizon {
            f_mean[t] += rec.potential[t] / n;
            gap_mean[t] += rec.gap[t] / n;
            for (acc, xk) in flow_mean[t].iter_mut().zip(&rec.flows[t]) {
                for (a, v) in acc.iter_mut().zip(xk) {
                    *a += v / n;
                }
            }
        }
    }
    for rec in &runs {
        for t in 0..horizon {
            f_std[t] += (rec.potential[t] - f_mean[t]).powi(2) / n;
        }
    }
    f_std.iter_mut().for_each(|v| *v = v.sqrt());

    let window = cfg.window();
    let slope = fit_loglog_slope(&f_mean, f_star, window);
    Ok((
        EnsembleStats {
            sigma: cfg.sigma,
            runs: cfg.runs,
            f_mean,
            f_std,
            gap_mean,
            flow_mean,
            f_star,
            slope_window: window,
            slope,
        },
        runs,
    ))
}

/// Slope of `log(values[τ-1] − floor)` on `log τ` for `τ` in the inclusive
/// window. Points at or below the floor are skipped.
pub fn fit_loglog_slope(values: &[f64], floor: f64, window: (usize, usize)) -> Option<f64> {
    let (lo, hi) = (window.0.max(1), window.1.min(values.len()));
    let pts: Vec<(f64, f64)> = (lo..=hi)
        .filter_map(|tau| {
            let excess = values[tau - 1] - floor;
            (excess > 0.0).then(|| ((tau as f64).ln(), excess.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(n, d), (x, y)| {
        (n + (x - mx) * (y - my), d + (x - mx).powi(2))
    });
    (den > 0.0).then(|| num / den)
}

/// Conservative `L ≥ E‖ℓ̂‖²_*`: `(Σ_i |P_i|)(M² + σ²)`.
pub fn loss_second_moment_bound(total_paths: usize, loss_bound: f64, sigma: f64) -> f64 {
    total_paths as f64 * (loss_bound * loss_bound + sigma * sigma)
}

/// Per-population terms of the convergence bound.
pub fn bound_terms(game: &GameInstance, dynamics: &[PopulationDynamics]) -> Vec<BoundTerm> {
    dynamics
        .iter()
        .map(|d| {
            let g = BregmanGeometry::new(d.geometry, game.paths());
            BoundTerm {
                divergence_bound: g.divergence_bound,
                strong_convexity: g.strong_convexity,
                schedule: d.schedule,
            }
        })
        .collect()
}

fn flow_headers(out: &mut String, flows: &[Vec<f64>]) {
    for (k, xk) in flows.iter().enumerate() {
        for p in 0..xk.len() {
            let _ = write!(out, ",flow[{k}][{p}]");
        }
    }
}

fn push_row_values(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for v in values {
        let _ = write!(out, ",{}", format_float(v));
    }
}

/// Shortest round-trip decimal, switching to exponent form for very small
/// or very large magnitudes.
pub fn format_float(v: f64) -> String {
    if v == 0.0 || !v.is_finite() || (1e-4..1e16).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Ensemble CSV: `t,f_mean,f_std,gap_mean,flow[k][p]...`.
pub fn ensemble_csv(stats: &EnsembleStats) -> String {
    let mut out = String::from("t,f_mean,f_std,gap_mean");
    if let Some(first) = stats.flow_mean.first() {
        flow_headers(&mut out, first);
    }
    out.push_str("\r\n");
    for t in 0..stats.f_mean.len() {
        let _ = write!(out, "{}", t + 1);
        push_row_values(&mut out, [stats.f_mean[t], stats.f_std[t], stats.gap_mean[t]]);
        push_row_values(&mut out, stats.flow_mean[t].iter().flatten().copied());
        out.push_str("\r\n");
    }
    out
}

/// Per-run CSV: `t,f,gap,flow[k][p]...,loss_hat[p]...`.
pub fn run_csv(rec: &RunRecord) -> String {
    let mut out = String::from("t,f,gap");
    if let Some(first) = rec.flows.first() {
        flow_headers(&mut out, first);
    }
    if let Some(first) = rec.released.first() {
        for p in 0..first.len() {
            let _ = write!(out, ",loss_hat[{p}]");
        }
    }
    out.push_str("\r\n");
    for t in 0..rec.potential.len() {
        let _ = write!(out, "{}", t + 1);
        push_row_values(&mut out, [rec.potential[t], rec.gap[t]]);
        push_row_values(&mut out, rec.flows[t].iter().flatten().copied());
        push_row_values(&mut out, rec.released[t].iter().copied());
        out.push_str("\r\n");
    }
    out
}
