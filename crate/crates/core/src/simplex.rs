//! Probability-simplex utilities shared by the solver and the dynamics.

/// Feasibility tolerance for simplex membership.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Euclidean projection of `v` onto the probability simplex (sort-and-threshold).
pub fn project(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&u| (u - tau).max(0.0)).collect();
    renormalize(&mut out);
    out
}

/// Rescales a nonnegative vector to unit sum in place.
pub fn renormalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|u| *u /= s);
    }
}

pub fn is_on_simplex(v: &[f64], tol: f64) -> bool {
    !v.is_empty()
        && v.iter().all(|&u| u.is_finite() && u >= -tol)
        && (v.iter().sum::<f64>() - 1.0).abs() <= tol
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}
