//! Sensitivity of the released loss sequence and its (ε, δ) accounting.
//!
//! The chain runs from the allocation shift caused by a mass perturbation
//! ([`update_sensitivity_bound`]) through the edge-flow shift
//! ([`flow_sensitivity_bound`]) to the loss shift
//! ([`per_step_sensitivity`]). Each step's Gaussian release is then
//! calibrated with [`gaussian_epsilon`] and the whole horizon is combined
//! by [`compose`], including the tail mass [`tail_delta`] of the event on
//! which the released losses stay bounded.
//!
//! All norms follow [`crate::dynamics`]: summed per-block Euclidean norms
//! on path vectors, Euclidean norm on edge flows.

use serde::{Deserialize, Serialize};

use crate::dynamics::LearningSchedule;
use crate::error::{Error, Result};
use crate::game::GameInstance;
use crate::network::{Incidence, PathSet};

/// Largest singular value of an incidence matrix by power iteration on `MᵀM`.
pub fn spectral_norm(m: &Incidence) -> Result<f64> {
    const REL_TOL: f64 = 1e-10;
    const MAX_ITER: usize = 100_000;
    if m.cols() == 0 || m.rows() == 0 {
        return Err(Error::PowerIteration("empty matrix".into()));
    }
    // The all-ones start has positive overlap with the Perron vector of a
    // nonnegative matrix.
    let mut v = vec![1.0 / (m.cols() as f64).sqrt(); m.cols()];
    let mut sigma = 0.0;
    for _ in 0..MAX_ITER {
        let mv = m.mul_vec(&v);
        let next = mv.iter().map(|u| u * u).sum::<f64>().sqrt();
        if next == 0.0 {
            return Err(Error::PowerIteration("all-zero incidence matrix".into()));
        }
        let w = m.tr_mul_vec(&mv);
        let wn = w.iter().map(|u| u * u).sum::<f64>().sqrt();
        v = w.into_iter().map(|u| u / wn).collect();
        if (next - sigma).abs() <= REL_TOL * next {
            return Ok(next);
        }
        sigma = next;
    }
    Err(Error::PowerIteration(format!(
        "no convergence after {MAX_ITER} iterations"
    )))
}

/// `A_x = sup_{‖x‖≤1} ‖Σ_i M_i x_{P_i}‖₂ = max_i σ_max(M_i)`.
///
/// The unit ball of the summed block norm is the convex hull of the
/// per-block unit balls, so the supremum is attained inside one block.
pub fn compute_a_x(paths: &PathSet) -> Result<f64> {
    (0..paths.num_od())
        .map(|i| spectral_norm(paths.incidence(i)))
        .try_fold(0.0, |acc, s| s.map(|s| f64::max(acc, s)))
}

/// `A_Δ = sup ‖x‖` over the simplex product.
///
/// A norm is convex, so the supremum over each simplex is attained at a
/// vertex; every vertex has unit Euclidean norm and the blocks add up.
pub fn compute_a_delta(paths: &PathSet) -> f64 {
    (0..paths.num_od())
        .map(|i| {
            let n = paths.block_len(i);
            (0..n)
                .map(|p| {
                    let mut vertex = vec![0.0; n];
                    vertex[p] = 1.0;
                    crate::dynamics::l2(&vertex)
                })
                .fold(0.0, f64::max)
        })
        .sum()
}

/// Upper bound on the Lipschitz constant of `φ ↦ ℓ(φ)` from Euclidean edge
/// flows to the summed block norm: `(Σ_i σ_max(M_i)) · max_e λ_e`.
pub fn compute_a_ell(game: &GameInstance) -> Result<f64> {
    let paths = game.paths();
    let spectral: f64 = (0..paths.num_od())
        .map(|i| spectral_norm(paths.incidence(i)))
        .sum::<Result<f64>>()?;
    let lam = game
        .costs()
        .iter()
        .map(|c| c.lipschitz())
        .fold(0.0, f64::max);
    Ok(spectral * lam)
}

/// Uniform path-loss bound `M = max_p Σ_{e∈p} c_e(Φ_max)`, with `Φ_max` the
/// total mass in the game.
pub fn compute_loss_bound(game: &GameInstance) -> f64 {
    let phi_max = game.total_mass();
    let edge: Vec<f64> = game.costs().iter().map(|c| c.value(phi_max)).collect();
    game.paths()
        .iter_paths()
        .map(|(_, _, edges)| edges.iter().map(|&e| edge[e]).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `‖x(θ) − x(θ')‖ ≤ η ‖ℓ̂‖_* ‖θ − θ'‖_∞ / ℓ_ψ` for one population's update.
pub fn update_sensitivity_bound(
    eta: f64,
    loss_dual_norm: f64,
    strong_convexity: f64,
    theta_shift_inf: f64,
) -> f64 {
    eta * loss_dual_norm * theta_shift_inf / strong_convexity
}

/// Game-level constants feeding the sensitivity chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityConstants {
    pub a_theta: f64,
    pub a_delta: f64,
    pub a_x: f64,
    pub a_ell: f64,
    /// Uniform bound `M` on noiseless path losses.
    pub loss_bound: f64,
    /// `ℓ_ψk` per population.
    pub strong_convexity: Vec<f64>,
    pub schedules: Vec<LearningSchedule>,
    /// `Σ_i |P_i|`.
    pub total_paths: usize,
}

impl SensitivityConstants {
    pub fn compute(
        game: &GameInstance,
        strong_convexity: Vec<f64>,
        schedules: Vec<LearningSchedule>,
    ) -> Result<Self> {
        let k = game.num_populations();
        if strong_convexity.len() != k || schedules.len() != k {
            return Err(Error::Dimension(format!(
                "{k} populations but {} moduli and {} schedules",
                strong_convexity.len(),
                schedules.len()
            )));
        }
        if strong_convexity.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument(
                "strong-convexity moduli must be positive".into(),
            ));
        }
        Ok(SensitivityConstants {
            a_theta: game.a_theta(),
            a_delta: compute_a_delta(game.paths()),
            a_x: compute_a_x(game.paths())?,
            a_ell: compute_a_ell(game)?,
            loss_bound: compute_loss_bound(game),
            strong_convexity,
            schedules,
            total_paths: game.paths().total_paths(),
        })
    }

    pub fn min_strong_convexity(&self) -> f64 {
        self.strong_convexity
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `max_k η_k(t)`.
    pub fn max_rate(&self, t: usize) -> f64 {
        self.schedules
            .iter()
            .map(|s| s.rate(t))
            .fold(0.0, f64::max)
    }

    /// Bound on `‖ℓ̂‖_*` on the event that every noise coordinate stays within `a`:
    /// `(Σ_i |P_i|)^{1/2} (M + a)`.
    pub fn released_dual_bound(&self, a: f64) -> f64 {
        (self.total_paths as f64).sqrt() * (self.loss_bound + a)
    }
}

/// Edge-flow shift bound for adjacent masses:
/// `c A_x [A_Δ + A_θ η ‖ℓ̂‖_* / ℓ_ψ]`.
pub fn flow_sensitivity_bound(
    consts: &SensitivityConstants,
    c_adj: f64,
    eta: f64,
    loss_dual_norm: f64,
    strong_convexity: f64,
) -> f64 {
    c_adj
        * consts.a_x
        * (consts.a_delta + consts.a_theta * eta * loss_dual_norm / strong_convexity)
}

/// Sensitivity `Δ_t` of the losses produced by the update at iteration `t`
/// (zero-based), given a bound on `‖ℓ̂^{(t)}‖_*`.
pub fn per_step_sensitivity(
    consts: &SensitivityConstants,
    c_adj: f64,
    t: usize,
    loss_dual_bound: f64,
) -> f64 {
    c_adj
        * consts.a_ell
        * consts.a_x
        * (consts.a_delta
            + consts.a_theta * consts.max_rate(t) * loss_dual_bound
                / consts.min_strong_convexity())
}

/// How the noise level enters the per-step ε.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScaling {
    /// `ε = Δ √(2 ln(1.25/δ)) / σ`, the inverse of the Gaussian-mechanism calibration.
    #[default]
    Sigma,
    /// `ε = Δ √(2 ln(1.25/δ)) / σ²`, kept for comparison with the published curves.
    SigmaSquared,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianStep {
    pub epsilon: f64,
    /// Whether the mechanism's precondition `ε ∈ (0, 1)`, `b² > 0` holds.
    /// A zero-sensitivity release is exactly private and always valid.
    pub valid: bool,
}

/// Smallest ε for which `Gauss(σ²)` noise on a sensitivity-`Δ` release is
/// (ε, δ)-private under the classical Gaussian-mechanism calibration.
pub fn gaussian_epsilon(
    sensitivity: f64,
    sigma: f64,
    delta: f64,
    scaling: NoiseScaling,
) -> Result<GaussianStep> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("σ must be positive, got {sigma}")));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("δ_t must be positive, got {delta}")));
    }
    if delta > 1.25 {
        return Err(Error::InvalidArgument(format!("δ_t must not exceed 1.25, got {delta}")));
    }
    if !(sensitivity >= 0.0 && sensitivity.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sensitivity must be finite and nonnegative, got {sensitivity}"
        )));
    }
    let b = (2.0 * (1.25 / delta).ln()).sqrt();
    let denom = match scaling {
        NoiseScaling::Sigma => sigma,
        NoiseScaling::SigmaSquared => sigma * sigma,
    };
    let epsilon = sensitivity * b / denom;
    let valid = sensitivity == 0.0 || (b > 0.0 && epsilon > 0.0 && epsilon < 1.0);
    Ok(GaussianStep { epsilon, valid })
}

/// Probability mass outside `{|Z_p| ≤ a for all N observations}`:
/// `δ' = 1 − (1 − 2 e^{−a²/2σ²})^N`.
pub fn tail_delta(sigma: f64, a: f64, observations: u64) -> Result<f64> {
    if !(sigma > 0.0 && a > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tail_delta needs σ > 0 and a > 0, got σ = {sigma}, a = {a}"
        )));
    }
    let p = 2.0 * (-(a * a) / (2.0 * sigma * sigma)).exp();
    if p >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "noise σ = {sigma} too large for clip level a = {a}: 2exp(-a²/2σ²) = {p} >= 1"
        )));
    }
    if observations == 0 {
        return Ok(0.0);
    }
    Ok((-((observations as f64) * (-p).ln_1p()).exp_m1()).clamp(0.0, 1.0))
}

/// A pair `(ε, δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Guarantee {
    pub epsilon: f64,
    pub delta: f64,
}

impl Guarantee {
    /// Adaptive composition with a subsequent release `next`:
    /// `(ε₁ + ε₂, e^{ε₂} δ₁ + δ₂)`.
    pub fn then(self, next: Guarantee) -> Guarantee {
        Guarantee {
            epsilon: self.epsilon + next.epsilon,
            delta: next.epsilon.exp() * self.delta + next.delta,
        }
    }
}

/// Repeated adaptive composition of per-step `(ε_t, δ_t)` plus a tail mass
/// `δ'`: `ε = Σ ε_t`, `δ = Σ_t exp(Σ_{t'>t} ε_{t'}) δ_t + δ'`.
pub fn compose(steps: &[(f64, f64)], tail: f64) -> Guarantee {
    let mut suffix = 0.0f64;
    let mut delta = 0.0;
    for &(eps, d) in steps.iter().rev() {
        delta += suffix.exp() * d;
        suffix += eps;
    }
    Guarantee {
        epsilon: suffix,
        delta: delta + tail,
    }
}

/// Allocation of the per-step δ_t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaSplit {
    /// `δ_t = budget / T` for every step.
    Uniform { budget: f64 },
    /// Explicit δ_t, one per step; must cover the horizon.
    Explicit(Vec<f64>),
}

impl DeltaSplit {
    pub fn deltas(&self, horizon: usize) -> Result<Vec<f64>> {
        let out = match self {
            DeltaSplit::Uniform { budget } => vec![budget / horizon as f64; horizon],
            DeltaSplit::Explicit(v) => {
                if v.len() < horizon {
                    return Err(Error::InvalidArgument(format!(
                        "explicit δ split has {} entries for horizon {horizon}",
                        v.len()
                    )));
                }
                v[..horizon].to_vec()
            }
        };
        if out.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::InvalidArgument("every δ_t must be positive".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccountantParams {
    pub c_adj: f64,
    pub sigma: f64,
    /// Clip level `a` of the bounded-noise event.
    pub clip: f64,
    pub horizon: usize,
    pub delta_split: DeltaSplit,
    pub scaling: NoiseScaling,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    /// One-based release index.
    pub t: usize,
    pub sensitivity: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivacyReport {
    pub c_adj: f64,
    pub sigma: f64,
    pub clip: f64,
    pub horizon: usize,
    pub scaling: NoiseScaling,
    pub constants: SensitivityConstants,
    pub steps: Vec<StepRecord>,
    pub tail_delta: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Every step satisfies the Gaussian-mechanism precondition.
    pub valid: bool,
    /// `δ ≥ 1`: the guarantee says nothing.
    pub trivial: bool,
}

/// Privacy of the released sequence `θ ↦ (ℓ̂^{(1)}, …, ℓ̂^{(T)})`.
///
/// Release `s` is produced after the update at iteration `s − 1`, so its
/// sensitivity uses the learning rates `η(s − 1)`.
pub fn accountant(consts: &SensitivityConstants, params: &AccountantParams) -> Result<PrivacyReport> {
    if !(params.c_adj >= 0.0 && params.c_adj.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "adjacency radius must be finite and nonnegative, got {}",
            params.c_adj
        )));
    }
    if params.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let deltas = params.delta_split.deltas(params.horizon)?;
    let dual = consts.released_dual_bound(params.clip);
    let mut steps = Vec::with_capacity(params.horizon);
    for (s, &delta) in (1..=params.horizon).zip(&deltas) {
        let sensitivity = per_step_sensitivity(consts, params.c_adj, s - 1, dual);
        let step = gaussian_epsilon(sensitivity, params.sigma, delta, params.scaling)?;
        steps.push(StepRecord {
            t: s,
            sensitivity,
            epsilon: step.epsilon,
            delta,
            valid: step.valid,
        });
    }
    let observations = params.horizon as u64 * consts.total_paths as u64;
    let tail = tail_delta(params.sigma, params.clip, observations)?;
    let pairs: Vec<(f64, f64)> = steps.iter().map(|s| (s.epsilon, s.delta)).collect();
    let total = compose(&pairs, tail);
    Ok(PrivacyReport {
        c_adj: params.c_adj,
        sigma: params.sigma,
        clip: params.clip,
        horizon: params.horizon,
        scaling: params.scaling,
        constants: consts.clone(),
        valid: steps.iter().all(|s| s.valid),
        steps,
        tail_delta: tail,
        epsilon: total.epsilon,
        delta: total.delta,
        trivial: total.delta >= 1.0,
    })
}
