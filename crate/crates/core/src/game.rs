//! Nonatomic routing game: edge flows, path losses, the Rosenthal potential
//! and Nash-gap certificates.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::network::{Network, PathSet};
use crate::simplex::{self, SIMPLEX_TOL};

/// A nondecreasing, Lipschitz edge cost supplied by the caller.
pub trait CostFunction: fmt::Debug + Send + Sync {
    fn value(&self, flow: f64) -> f64;

    /// `∫₀^flow c(u) du`, if a closed form is known.
    fn antiderivative(&self, flow: f64) -> Option<f64>;

    /// Declared Lipschitz constant on the feasible flow range.
    fn lipschitz(&self) -> f64;
}

#[derive(Debug, Clone)]
pub enum EdgeCost {
    /// `c(u) = slope * u + intercept`
    Affine { slope: f64, intercept: f64 },
    Custom(Arc<dyn CostFunction>),
}

impl PartialEq for EdgeCost {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                EdgeCost::Affine { slope, intercept },
                EdgeCost::Affine {
                    slope: s,
                    intercept: i,
                },
            ) => slope == s && intercept == i,
            (EdgeCost::Custom(a), EdgeCost::Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl EdgeCost {
    pub fn affine(slope: f64, intercept: f64) -> Self {
        EdgeCost::Affine { slope, intercept }
    }

    pub fn value(&self, flow: f64) -> f64 {
        match self {
            EdgeCost::Affine { slope, intercept } => slope * flow + intercept,
            EdgeCost::Custom(c) => c.value(flow),
        }
    }

    pub fn integral(&self, flow: f64) -> Option<f64> {
        match self {
            EdgeCost::Affine { slope, intercept } => {
                Some(0.5 * slope * flow * flow + intercept * flow)
            }
            EdgeCost::Custom(c) => c.antiderivative(flow),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            EdgeCost::Affine { slope, .. } => *slope,
            EdgeCost::Custom(c) => c.lipschitz(),
        }
    }
}

/// Path-indexed loss vector, OD blocks concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct LossVector(pub Vec<f64>);

impl std::ops::Deref for LossVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Per-population path distributions; each population's vector is the
/// concatenation of one simplex per OD pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowAllocation {
    pub x: Vec<Vec<f64>>,
}

impl FlowAllocation {
    pub fn uniform(paths: &PathSet, populations: usize) -> Self {
        let mut xk = Vec::with_capacity(paths.total_paths());
        for i in 0..paths.num_od() {
            xk.extend(simplex::uniform(paths.block_len(i)));
        }
        FlowAllocation {
            x: vec![xk; populations],
        }
    }

    pub fn population(&self, k: usize) -> &[f64] {
        &self.x[k]
    }

    pub fn num_populations(&self) -> usize {
        self.x.len()
    }

    /// Checks shape and simplex membership of every block.
    pub fn validate(&self, paths: &PathSet) -> Result<()> {
        for (k, xk) in self.x.iter().enumerate() {
            if xk.len() != paths.total_paths() {
                return Err(Error::Dimension(format!(
                    "population {k}: allocation has {} entries, expected {}",
                    xk.len(),
                    paths.total_paths()
                )));
            }
            for i in 0..paths.num_od() {
                if !simplex::is_on_simplex(&xk[paths.block(i)], SIMPLEX_TOL) {
                    return Err(Error::InvalidArgument(format!(
                        "population {k}, OD {i}: block is not on the simplex"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `⟨x, y⟩_θ = Σ_i θ_i Σ_{p∈P_i} x_p y_p`.
pub fn theta_inner(paths: &PathSet, x: &[f64], y: &[f64], theta: &[f64]) -> Result<f64> {
    if x.len() != paths.total_paths() || y.len() != x.len() || theta.len() != paths.num_od() {
        return Err(Error::Dimension(format!(
            "theta_inner: |x|={}, |y|={}, |θ|={}, paths={}, ods={}",
            x.len(),
            y.len(),
            theta.len(),
            paths.total_paths(),
            paths.num_od()
        )));
    }
    Ok((0..paths.num_od())
        .map(|i| {
            let r = paths.block(i);
            theta[i] * x[r.clone()].iter().zip(&y[r]).map(|(a, b)| a * b).sum::<f64>()
        })
        .sum())
}

/// A routing game: network, edge costs and population masses.
#[derive(Debug, Clone)]
pub struct GameInstance {
    network: Network,
    paths: PathSet,
    costs: Vec<EdgeCost>,
    thetas: Vec<Vec<f64>>,
    a_theta: f64,
}

impl GameInstance {
    /// Builds a game. `a_theta` defaults to the largest mass entry.
    pub fn new(
        network: Network,
        paths: PathSet,
        costs: Vec<EdgeCost>,
        thetas: Vec<Vec<f64>>,
        a_theta: Option<f64>,
    ) -> Result<Self> {
        if costs.len() != network.num_edges() {
            let missing = costs.len().min(network.num_edges());
            return Err(Error::Config(if costs.len() < network.num_edges() {
                format!(
                    "missing cost for edge {missing} ({})",
                    network.edge_label(missing)
                )
            } else {
                format!(
                    "{} edge costs given for {} edges",
                    costs.len(),
                    network.num_edges()
                )
            }));
        }
        if thetas.is_empty() {
            return Err(Error::InvalidArgument("no populations".into()));
        }
        for (k, th) in thetas.iter().enumerate() {
            if th.len() != network.num_od() {
                return Err(Error::Dimension(format!(
                    "population {k}: mass vector has {} entries, expected {}",
                    th.len(),
                    network.num_od()
                )));
            }
            if th.iter().any(|&m| !m.is_finite() || m < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "population {k}: masses must be finite and nonnegative"
                )));
            }
        }
        let max_theta = thetas.iter().flatten().copied().fold(0.0, f64::max);
        let a_theta = a_theta.unwrap_or(max_theta);
        if !(a_theta.is_finite() && a_theta >= max_theta) {
            return Err(Error::InvalidArgument(format!(
                "mass bound A_θ = {a_theta} is below the largest mass {max_theta}"
            )));
        }

        let total_mass: f64 = thetas.iter().flatten().sum();
        for (e, c) in costs.iter().enumerate() {
            check_cost(e, c, total_mass)?;
        }

        Ok(GameInstance {
            network,
            paths,
            costs,
            thetas,
            a_theta,
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn paths(&self) -> &PathSet {
        &self.paths
    }

    pub fn costs(&self) -> &[EdgeCost] {
        &self.costs
    }

    pub fn thetas(&self) -> &[Vec<f64>] {
        &self.thetas
    }

    pub fn theta(&self, k: usize) -> &[f64] {
        &self.thetas[k]
    }

    pub fn num_populations(&self) -> usize {
        self.thetas.len()
    }

    pub fn a_theta(&self) -> f64 {
        self.a_theta
    }

    /// Total mass `Σ_k Σ_i (θ_k)_i`, the largest flow any edge can carry.
    pub fn total_mass(&self) -> f64 {
        self.thetas.iter().flatten().sum()
    }

    /// Copy of this game with different masses (same network and costs).
    pub fn with_thetas(&self, thetas: Vec<Vec<f64>>) -> Result<Self> {
        GameInstance::new(
            self.network.clone(),
            self.paths.clone(),
            self.costs.clone(),
            thetas,
            Some(self.a_theta),
        )
    }

    fn check_allocation(&self, x: &FlowAllocation) -> Result<()> {
        if x.x.len() != self.thetas.len() {
            return Err(Error::Dimension(format!(
                "allocation has {} populations, game has {}",
                x.x.len(),
                self.thetas.len()
            )));
        }
        let n = self.paths.total_paths();
        if let Some((k, xk)) = x.x.iter().enumerate().find(|(_, xk)| xk.len() != n) {
            return Err(Error::Dimension(format!(
                "population {k}: allocation has {} entries, expected {n}",
                xk.len()
            )));
        }
        Ok(())
    }

    /// `φ = Σ_k Σ_i (θ_k)_i M_i (x_k)_{P_i}`.
    pub fn edge_flows(&self, x: &FlowAllocation) -> Result<Vec<f64>> {
        self.check_allocation(x)?;
        Ok(self.edge_flows_unchecked(&self.thetas, &x.x))
    }

    /// Edge flows under arbitrary masses `thetas` (same shape as the game's).
    pub fn edge_flows_with(&self, thetas: &[Vec<f64>], x: &FlowAllocation) -> Result<Vec<f64>> {
        self.check_allocation(x)?;
        if thetas.len() != self.thetas.len()
            || thetas.iter().any(|t| t.len() != self.paths.num_od())
        {
            return Err(Error::Dimension("mass profile shape mismatch".into()));
        }
        Ok(self.edge_flows_unchecked(thetas, &x.x))
    }

    fn edge_flows_unchecked(&self, thetas: &[Vec<f64>], x: &[Vec<f64>]) -> Vec<f64> {
        let mut phi = vec![0.0; self.paths.num_edges()];
        for (theta, xk) in thetas.iter().zip(x) {
            for (i, p, edges) in self.paths.iter_paths() {
                let mass = theta[i] * xk[p];
                if mass != 0.0 {
                    for &e in edges {
                        phi[e] += mass;
                    }
                }
            }
        }
        phi
    }

    /// `ℓ_p = Σ_{e∈p} c_e(φ_e)`.
    pub fn path_losses(&self, phi: &[f64]) -> Result<LossVector> {
        if phi.len() != self.paths.num_edges() {
            return Err(Error::Dimension(format!(
                "edge-flow vector has {} entries, expected {}",
                phi.len(),
                self.paths.num_edges()
            )));
        }
        let edge_cost: Vec<f64> = self
            .costs
            .iter()
            .zip(phi)
            .map(|(c, &u)| c.value(u))
            .collect();
        Ok(LossVector(
            self.paths
                .iter_paths()
                .map(|(_, _, edges)| edges.iter().map(|&e| edge_cost[e]).sum())
                .collect(),
        ))
    }

    /// Path losses at allocation `x`.
    pub fn losses(&self, x: &FlowAllocation) -> Result<LossVector> {
        self.path_losses(&self.edge_flows(x)?)
    }

    /// Rosenthal potential `Σ_e ∫₀^{φ_e} c_e(u) du`.
    pub fn potential(&self, x: &FlowAllocation) -> Result<f64> {
        let phi = self.edge_flows(x)?;
        self.potential_of_flows(&phi)
    }

    pub fn potential_of_flows(&self, phi: &[f64]) -> Result<f64> {
        self.costs
            .iter()
            .zip(phi)
            .enumerate()
            .map(|(e, (c, &u))| c.integral(u).ok_or(Error::MissingAntiderivative { index: e }))
            .sum()
    }

    /// `∇_{x_k} f = ((θ_k)_i ℓ_{P_i})_i` for every population.
    pub fn potential_gradient(&self, x: &FlowAllocation) -> Result<Vec<Vec<f64>>> {
        let loss = self.losses(x)?;
        Ok(self
            .thetas
            .iter()
            .map(|theta| self.scale_by_theta(theta, &loss))
            .collect())
    }

    /// Multiplies each OD block of `v` by the matching mass.
    pub fn scale_by_theta(&self, theta: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for (i, &t) in theta.iter().enumerate() {
            out[self.paths.block(i)].iter_mut().for_each(|u| *u *= t);
        }
        out
    }

    /// `Σ_k [⟨x_k, ℓ⟩_{θ_k} − min_y ⟨y, ℓ⟩_{θ_k}]`, zero exactly at Nash equilibria.
    pub fn nash_gap(&self, x: &FlowAllocation) -> Result<f64> {
        let loss = self.losses(x)?;
        Ok(self.nash_gap_with_losses(x, &loss))
    }

    pub(crate) fn nash_gap_with_losses(&self, x: &FlowAllocation, loss: &[f64]) -> f64 {
        let best: Vec<f64> = (0..self.paths.num_od())
            .map(|i| {
                loss[self.paths.block(i)]
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let gap: f64 = self
            .thetas
            .iter()
            .zip(&x.x)
            .map(|(theta, xk)| {
                (0..self.paths.num_od())
                    .map(|i| {
                        let r = self.paths.block(i);
                        let cur: f64 = xk[r.clone()].iter().zip(&loss[r]).map(|(a, b)| a * b).sum();
                        theta[i] * (cur - best[i])
                    })
                    .sum::<f64>()
            })
            .sum();
        gap.max(0.0)
    }

    /// Upper bound on the Lipschitz constant of `∇f` over the stacked
    /// allocation (Euclidean): `max_e λ_e · Σ_k Σ_i (θ_k)_i² ‖M_i‖_F²`.
    pub fn gradient_lipschitz(&self) -> f64 {
        let lam = self.costs.iter().map(EdgeCost::lipschitz).fold(0.0, f64::max);
        let frob: Vec<f64> = (0..self.paths.num_od())
            .map(|i| {
                self.paths
                    .paths(i)
                    .iter()
                    .map(|p| p.len() as f64)
                    .sum::<f64>()
            })
            .collect();
        let jac: f64 = self
            .thetas
            .iter()
            .map(|th| th.iter().zip(&frob).map(|(t, f)| t * t * f).sum::<f64>())
            .sum();
        lam * jac
    }

    /// Minimizes the potential by projected gradient steps of size `1/L`
    /// until the Nash gap drops to `tol`.
    pub fn solve_equilibrium(&self, tol: f64) -> Result<Equilibrium> {
        self.solve_equilibrium_with_budget(tol, 1_000_000)
    }

    pub fn solve_equilibrium_with_budget(&self, tol: f64, max_iter: usize) -> Result<Equilibrium> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
        }
        let mut x = FlowAllocation::uniform(&self.paths, self.thetas.len());
        let lip = self.gradient_lipschitz();
        let step = if lip > 0.0 { 1.0 / lip } else { 1.0 };
        let mut gap = f64::INFINITY;
        for it in 0..=max_iter {
            let loss = self.losses(&x)?;
            gap = self.nash_gap_with_losses(&x, &loss);
            if gap <= tol {
                let potential = self.potential(&x)?;
                return Ok(Equilibrium {
                    allocation: x,
                    potential,
                    gap,
                    iterations: it,
                });
            }
            for (theta, xk) in self.thetas.iter().zip(x.x.iter_mut()) {
                for (i, &t) in theta.iter().enumerate() {
                    let r = self.paths.block(i);
                    let moved: Vec<f64> = xk[r.clone()]
                        .iter()
                        .zip(&loss[r.clone()])
                        .map(|(xp, lp)| xp - step * t * lp)
                        .collect();
                    xk[r].copy_from_slice(&simplex::project(&moved));
                }
            }
        }
        Err(Error::NotConverged {
            iterations: max_iter,
            gap,
            tol,
        })
    }
}

/// Output of [`GameInstance::solve_equilibrium`].
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub allocation: FlowAllocation,
    /// Potential value `f*` at the returned allocation.
    pub potential: f64,
    pub gap: f64,
    pub iterations: usize,
}

fn check_cost(e: usize, cost: &EdgeCost, max_flow: f64) -> Result<()> {
    match cost {
        EdgeCost::Affine { slope, intercept } => {
            if !(slope.is_finite() && intercept.is_finite() && *slope >= 0.0 && *intercept >= 0.0)
            {
                return Err(Error::InvalidArgument(format!(
                    "edge {e}: affine cost needs finite slope >= 0 and intercept >= 0"
                )));
            }
        }
        EdgeCost::Custom(c) => {
            let lam = c.lipschitz();
            if !(lam.is_finite() && lam >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "edge {e}: Lipschitz constant must be finite and nonnegative"
                )));
            }
            // Spot-check monotonicity and the declared Lipschitz constant.
            let hi = max_flow.max(1.0);
            let n = 200;
            let mut prev = c.value(0.0);
            for j in 1..=n {
                let u = hi * j as f64 / n as f64;
                let v = c.value(u);
                let h = hi / n as f64;
                if !v.is_finite() || v < prev - 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "edge {e}: cost is not nondecreasing near u = {u}"
                    )));
                }
                if v - prev > lam * h * (1.0 + 1e-9) + 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "edge {e}: declared Lipschitz constant {lam} is violated near u = {u}"
                    )));
                }
                prev = v;
            }
        }
    }
    Ok(())
}
