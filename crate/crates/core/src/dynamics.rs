//! Per-population stochastic mirror descent over a product of simplices.
//!
//! Each population keeps one distribution per OD pair. The update
//! minimizes `⟨ℓ̂, x⟩_θ + D_ψ(x, x_t) / η` over the simplex product; both
//! supported geometries separate across OD blocks, so the argmin is taken
//! block by block in closed form.
//!
//! The reference norm on a population's allocation is the sum of the
//! per-block Euclidean norms. Its dual is the largest per-block Euclidean
//! norm. With respect to this norm both geometries are `1/I`-strongly
//! convex, where `I` is the number of OD pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::PathSet;
use crate::simplex::{self, SIMPLEX_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    /// Negative entropy on each simplex (multiplicative weights).
    Entropic,
    /// Half squared Euclidean norm on each simplex (projected gradient).
    Euclidean,
}

/// A distance-generating function together with its constants on a given path set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BregmanGeometry {
    pub kind: Geometry,
    /// Modulus `ℓ_ψ` with respect to the summed block norm.
    pub strong_convexity: f64,
    /// Bound `D` on the divergence from the uniform start to any feasible point.
    pub divergence_bound: f64,
}

impl BregmanGeometry {
    pub fn new(kind: Geometry, paths: &PathSet) -> Self {
        let blocks = paths.num_od();
        let divergence_bound = (0..blocks)
            .map(|i| {
                let n = paths.block_len(i);
                match kind {
                    Geometry::Entropic => (n as f64).ln(),
                    // Two distinct vertices are √2 apart.
                    Geometry::Euclidean if n > 1 => 1.0,
                    Geometry::Euclidean => 0.0,
                }
            })
            .sum();
        BregmanGeometry {
            kind,
            strong_convexity: 1.0 / blocks as f64,
            divergence_bound,
        }
    }
}

/// Learning rates `η(t) = c (t+1)^{-α}` for the zero-based iteration counter `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningSchedule {
    pub scale: f64,
    pub decay: f64,
}

impl LearningSchedule {
    pub fn new(scale: f64, decay: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning-rate scale must be positive, got {scale}"
            )));
        }
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "learning-rate decay must lie in (0, 1), got {decay}"
            )));
        }
        Ok(LearningSchedule { scale, decay })
    }

    /// Constant step `η(t) = scale`. Not admissible in [`suboptimality_bound`].
    pub fn constant(scale: f64) -> Self {
        LearningSchedule { scale, decay: 0.0 }
    }

    pub fn rate(&self, t: usize) -> f64 {
        self.scale * ((t + 1) as f64).powf(-self.decay)
    }
}

/// `‖v‖ = Σ_i ‖v_{P_i}‖₂`.
pub fn block_norm(paths: &PathSet, v: &[f64]) -> f64 {
    (0..paths.num_od()).map(|i| l2(&v[paths.block(i)])).sum()
}

/// Dual of [`block_norm`]: `max_i ‖v_{P_i}‖₂`.
pub fn dual_block_norm(paths: &PathSet, v: &[f64]) -> f64 {
    (0..paths.num_od())
        .map(|i| l2(&v[paths.block(i)]))
        .fold(0.0, f64::max)
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|u| u * u).sum::<f64>().sqrt()
}

/// `D_ψ(x, y) = ψ(x) − ψ(y) − ⟨∇ψ(y), x − y⟩`.
pub fn bregman(kind: Geometry, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "bregman: |x| = {}, |y| = {}",
            x.len(),
            y.len()
        )));
    }
    match kind {
        Geometry::Euclidean => Ok(0.5 * x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>()),
        Geometry::Entropic => {
            if y.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidArgument(
                    "entropic divergence needs a strictly positive second argument".into(),
                ));
            }
            let d: f64 = x
                .iter()
                .zip(y)
                .map(|(&a, &b)| {
                    let xlogx = if a > 0.0 { a * (a / b).ln() } else { 0.0 };
                    xlogx - a + b
                })
                .sum();
            Ok(d.max(0.0))
        }
    }
}

/// One stochastic mirror descent step for a single population.
///
/// `x` is the population's current allocation, `theta` its mass vector and
/// `loss` the released (possibly noisy) path losses.
pub fn smd_update(
    kind: Geometry,
    paths: &PathSet,
    eta: f64,
    x: &[f64],
    theta: &[f64],
    loss: &[f64],
) -> Result<Vec<f64>> {
    let n = paths.total_paths();
    if x.len() != n || loss.len() != n || theta.len() != paths.num_od() {
        return Err(Error::Dimension(format!(
            "smd_update: |x| = {}, |ℓ̂| = {}, |θ| = {}, expected {n} paths and {} ODs",
            x.len(),
            loss.len(),
            theta.len(),
            paths.num_od()
        )));
    }
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be nonnegative, got {eta}")));
    }
    if let Some(p) = loss.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite loss at path {p}")));
    }

    let mut out = vec![0.0; n];
    for (i, &mass) in theta.iter().enumerate() {
        let r = paths.block(i);
        let xb = &x[r.clone()];
        let lb = &loss[r.clone()];
        let step = eta * mass;
        match kind {
            Geometry::Entropic => {
                if xb.iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::InvalidArgument(format!(
                        "entropic update needs a strictly positive allocation (OD {i})"
                    )));
                }
                let logits: Vec<f64> = xb.iter().zip(lb).map(|(xp, lp)| xp.ln() - step * lp).collect();
                let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let ob = &mut out[r];
                for (o, z) in ob.iter_mut().zip(&logits) {
                    // Floor at the smallest normal so later steps keep a positive support.
                    *o = (z - top).exp().max(f64::MIN_POSITIVE);
                }
                simplex::renormalize(ob);
            }
            Geometry::Euclidean => {
                let moved: Vec<f64> = xb.iter().zip(lb).map(|(xp, lp)| xp - step * lp).collect();
                out[r].copy_from_slice(&simplex::project(&moved));
            }
        }
    }
    debug_assert!((0..paths.num_od()).all(|i| simplex::is_on_simplex(&out[paths.block(i)], SIMPLEX_TOL)));
    Ok(out)
}

/// One population's contribution to the convergence bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerm {
    pub divergence_bound: f64,
    pub strong_convexity: f64,
    pub schedule: LearningSchedule,
}

/// Bound on `E f(x_t) − f*` after `t ≥ 1` steps:
/// `(1 + Σ_{τ≤t} 1/τ) Σ_k [D_k / (c_k t^{1−α_k}) + c_k L / (2 ℓ_ψk (1−α_k) t^{α_k})]`,
/// where `L` bounds the expected squared dual norm of the released losses.
pub fn suboptimality_bound(terms: &[BoundTerm], loss_second_moment: f64, t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::InvalidArgument("bound is defined for t >= 1".into()));
    }
    if !(loss_second_moment >= 0.0) {
        return Err(Error::InvalidArgument("L must be nonnegative".into()));
    }
    let tf = t as f64;
    let harmonic: f64 = (1..=t).map(|tau| 1.0 / tau as f64).sum();
    let mut total = 0.0;
    for term in terms {
        let LearningSchedule { scale, decay } = term.schedule;
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "decay exponent must lie in (0, 1), got {decay}"
            )));
        }
        if !(scale > 0.0 && term.strong_convexity > 0.0 && term.divergence_bound >= 0.0) {
            return Err(Error::InvalidArgument("bound constants out of range".into()));
        }
        total += term.divergence_bound / (scale * tf.powf(1.0 - decay))
            + scale * loss_second_moment
                / (2.0 * term.strong_convexity * (1.0 - decay) * tf.powf(decay));
    }
    Ok((1.0 + harmonic) * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{enumerate_paths, Network, NetworkSpec};

    fn two_link() -> PathSet {
        let spec = NetworkSpec {
            nodes: vec!["s".into(), "t".into()],
            edges: vec![("s".into(), "t".into()), ("s".into(), "t".into())],
            od_pairs: vec![("s".into(), "t".into())],
        };
        enumerate_paths(&Network::build(&spec).unwrap()).unwrap()
    }

    #[test]
    fn divergence_examples() {
        assert_eq!(bregman(Geometry::Entropic, &[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        let kl = bregman(Geometry::Entropic, &[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((kl - 2f64.ln()).abs() < 1e-15);
        assert_eq!(bregman(Geometry::Euclidean, &[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!(bregman(Geometry::Entropic, &[0.5, 0.5], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn entropic_closed_form_example() {
        let ps = two_link();
        let x = smd_update(Geometry::Entropic, &ps, 1.0, &[0.5, 0.5], &[1.0], &[2f64.ln(), 0.0]).unwrap();
        assert!((x[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((x[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_loss_leaves_entropic_point_fixed() {
        let ps = two_link();
        let x0 = [0.2, 0.8];
        let x = smd_update(Geometry::Entropic, &ps, 0.7, &x0, &[1.3], &[4.0, 4.0]).unwrap();
        assert!((x[0] - 0.2).abs() < 1e-15 && (x[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn vanishing_step_is_continuous() {
        let ps = two_link();
        let x0 = [0.25, 0.75];
        for kind in [Geometry::Entropic, Geometry::Euclidean] {
            let x = smd_update(kind, &ps, 1e-12, &x0, &[1.0], &[3.0, -1.0]).unwrap();
            assert!((x[0] - 0.25).abs() < 1e-10, "{kind:?}");
        }
    }

    #[test]
    fn update_rejects_bad_input() {
        let ps = two_link();
        assert!(matches!(
            smd_update(Geometry::Entropic, &ps, 1.0, &[0.5, 0.5], &[1.0], &[f64::NAN, 0.0]),
            Err(Error::Numerical(_))
        ));
        assert!(smd_update(Geometry::Entropic, &ps, 1.0, &[1.0, 0.0], &[1.0], &[0.0, 0.0]).is_err());
        assert!(smd_update(Geometry::Euclidean, &ps, 1.0, &[1.0], &[1.0], &[0.0]).is_err());
    }

    #[test]
    fn huge_losses_do_not_collapse_support() {
        let ps = two_link();
        let x = smd_update(Geometry::Entropic, &ps, 1.0, &[0.5, 0.5], &[1.0], &[1e6, 0.0]).unwrap();
        assert!(x[0] > 0.0 && x[1] == 1.0);
        assert!(smd_update(Geometry::Entropic, &ps, 1.0, &x, &[1.0], &[0.0, 0.0]).is_ok());
    }

    #[test]
    fn schedule_is_positive_and_nonincreasing() {
        let s = LearningSchedule::new(1.0, 0.5).unwrap();
        assert_eq!(s.rate(0), 1.0);
        assert!((s.rate(3) - 0.5).abs() < 1e-15);
        assert!(LearningSchedule::new(1.0, 1.0).is_err());
        assert!(LearningSchedule::new(0.0, 0.5).is_err());
    }

    #[test]
    fn bound_examples() {
        let term = BoundTerm {
            divergence_bound: 2f64.ln(),
            strong_convexity: 1.0,
            schedule: LearningSchedule::new(1.0, 0.5).unwrap(),
        };
        let b = suboptimality_bound(&[term], 1.0, 1).unwrap();
        assert!((b - 2.0 * (2f64.ln() + 1.0)).abs() < 1e-12);

        let zero = BoundTerm { divergence_bound: 0.0, ..term };
        assert_eq!(suboptimality_bound(&[zero], 0.0, 17).unwrap(), 0.0);

        let bad = BoundTerm {
            schedule: LearningSchedule::constant(1.0),
            ..term
        };
        assert!(suboptimality_bound(&[bad], 1.0, 5).is_err());
        assert!(suboptimality_bound(&[term], 1.0, 0).is_err());
    }

    #[test]
    fn geometry_constants() {
        let ps = two_link();
        let g = BregmanGeometry::new(Geometry::Entropic, &ps);
        assert_eq!(g.strong_convexity, 1.0);
        assert!((g.divergence_bound - 2f64.ln()).abs() < 1e-15);
        assert_eq!(BregmanGeometry::new(Geometry::Euclidean, &ps).divergence_bound, 1.0);
    }
}
