//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "nodes": ["s", "t"],
//!   "edges": [["s", "t"], ["s", "t"]],
//!   "od_pairs": [["s", "t"]],
//!   "edge_costs": [{"affine": [1.0, 0.0]}, {"affine": [0.0, 1.0]}],
//!   "populations": [{"theta": [1.0], "geometry": "entropic", "c_k": 1.0, "alpha_k": 0.5}],
//!   "a_theta": 1.0,
//!   "simulation": {"T": 200, "runs": 150, "seed": 1, "sigma": [0.01, 0.1, 0.4]},
//!   "privacy": {"curves": [{"c_adj": 1e-6, "sigma": 0.1}], "a": 2.0,
//!               "delta_budget": 1e-6, "delta_split": "uniform", "noise_scaling": "sigma"},
//!   "output_dir": "out"
//! }
//! ```
//!
//! Unknown keys are rejected at every level.

use serde::{Deserialize, Serialize};

use crate::dynamics::{BregmanGeometry, Geometry, LearningSchedule};
use crate::error::{Error, Result};
use crate::game::{EdgeCost, GameInstance};
use crate::network::{enumerate_paths, Network, NetworkSpec};
use crate::privacy::{AccountantParams, DeltaSplit, NoiseScaling, SensitivityConstants};
use crate::sim::{PopulationDynamics, SimulationConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub od_pairs: Vec<(String, String)>,
    pub edge_costs: Vec<CostSpec>,
    pub populations: Vec<PopulationSpec>,
    /// Public bound on every mass entry; defaults to the largest mass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_theta: Option<f64>,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub privacy: PrivacySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    /// `[slope, intercept]`
    Affine([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub theta: Vec<f64>,
    #[serde(default = "default_geometry")]
    pub geometry: Geometry,
    #[serde(default = "default_scale")]
    pub c_k: f64,
    #[serde(default = "default_decay")]
    pub alpha_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(rename = "T", alias = "horizon", default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sigmas")]
    pub sigma: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_window: Option<(usize, usize)>,
    #[serde(default = "default_equilibrium_tol")]
    pub equilibrium_tol: f64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            horizon: default_horizon(),
            runs: default_runs(),
            seed: 0,
            sigma: default_sigmas(),
            slope_window: None,
            equilibrium_tol: default_equilibrium_tol(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub c_adj: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DeltaSplitSpec {
    Uniform,
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacySpec {
    #[serde(default = "default_curves")]
    pub curves: Vec<CurveSpec>,
    /// Clip level of the bounded-noise event.
    #[serde(default = "default_clip")]
    pub a: f64,
    #[serde(default = "default_delta_budget")]
    pub delta_budget: f64,
    #[serde(default = "default_delta_split")]
    pub delta_split: DeltaSplitSpec,
    /// `"sigma"` (default) or `"sigma_squared"` for the ε denominator.
    #[serde(default)]
    pub noise_scaling: NoiseScaling,
}

impl Default for PrivacySpec {
    fn default() -> Self {
        PrivacySpec {
            curves: default_curves(),
            a: default_clip(),
            delta_budget: default_delta_budget(),
            delta_split: default_delta_split(),
            noise_scaling: NoiseScaling::Sigma,
        }
    }
}

fn default_geometry() -> Geometry {
    Geometry::Entropic
}
fn default_scale() -> f64 {
    1.0
}
fn default_decay() -> f64 {
    0.5
}
fn default_horizon() -> usize {
    200
}
fn default_runs() -> usize {
    150
}
fn default_sigmas() -> Vec<f64> {
    vec![0.01, 0.1, 0.4]
}
fn default_equilibrium_tol() -> f64 {
    1e-8
}
fn default_curves() -> Vec<CurveSpec> {
    vec![
        CurveSpec { c_adj: 1e-6, sigma: 0.1 },
        CurveSpec { c_adj: 1e-5, sigma: 0.3 },
    ]
}
fn default_clip() -> f64 {
    2.0
}
fn default_delta_budget() -> f64 {
    1e-6
}
fn default_delta_split() -> DeltaSplitSpec {
    DeltaSplitSpec::Uniform
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.edge_costs.len() < self.edges.len() {
            let e = self.edge_costs.len();
            let (u, v) = &self.edges[e];
            return Err(Error::Config(format!("missing cost for edge {e} ({u} -> {v})")));
        }
        if self.edge_costs.len() > self.edges.len() {
            return Err(Error::Config(format!(
                "{} edge costs given for {} edges",
                self.edge_costs.len(),
                self.edges.len()
            )));
        }
        if self.populations.is_empty() {
            return Err(Error::Config("at least one population is required".into()));
        }
        if self.simulation.sigma.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Config("simulation.sigma entries must be >= 0".into()));
        }
        if !(self.simulation.equilibrium_tol > 0.0) {
            return Err(Error::Config("simulation.equilibrium_tol must be positive".into()));
        }
        if !(self.privacy.a > 0.0 && self.privacy.a.is_finite()) {
            return Err(Error::Config("privacy.a must be positive".into()));
        }
        if !(self.privacy.delta_budget > 0.0) {
            return Err(Error::Config("privacy.delta_budget must be positive".into()));
        }
        Ok(())
    }

    pub fn network_spec(&self) -> NetworkSpec {
        NetworkSpec {
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
            od_pairs: self.od_pairs.clone(),
        }
    }

    pub fn build_game(&self) -> Result<GameInstance> {
        self.check()?;
        let network = Network::build(&self.network_spec())?;
        let paths = enumerate_paths(&network)?;
        let costs = self
            .edge_costs
            .iter()
            .map(|c| match *c {
                CostSpec::Affine([slope, intercept]) => EdgeCost::affine(slope, intercept),
            })
            .collect();
        let thetas = self.populations.iter().map(|p| p.theta.clone()).collect();
        GameInstance::new(network, paths, costs, thetas, self.a_theta)
    }

    pub fn dynamics(&self) -> Result<Vec<PopulationDynamics>> {
        self.populations
            .iter()
            .map(|p| {
                Ok(PopulationDynamics {
                    geometry: p.geometry,
                    schedule: LearningSchedule::new(p.c_k, p.alpha_k)?,
                })
            })
            .collect()
    }

    pub fn simulation_config(&self, sigma: f64) -> Result<SimulationConfig> {
        Ok(SimulationConfig {
            dynamics: self.dynamics()?,
            sigma,
            horizon: self.simulation.horizon,
            runs: self.simulation.runs,
            seed: self.simulation.seed,
            slope_window: self.simulation.slope_window,
        })
    }

    pub fn sensitivity_constants(&self, game: &GameInstance) -> Result<SensitivityConstants> {
        let dynamics = self.dynamics()?;
        let moduli = dynamics
            .iter()
            .map(|d| BregmanGeometry::new(d.geometry, game.paths()).strong_convexity)
            .collect();
        let schedules = dynamics.iter().map(|d| d.schedule).collect();
        SensitivityConstants::compute(game, moduli, schedules)
    }

    pub fn accountant_params(&self, curve: CurveSpec, horizon: usize) -> AccountantParams {
        AccountantParams {
            c_adj: curve.c_adj,
            sigma: curve.sigma,
            clip: self.privacy.a,
            horizon,
            delta_split: match &self.privacy.delta_split {
                DeltaSplitSpec::Uniform => DeltaSplit::Uniform {
                    budget: self.privacy.delta_budget,
                },
                DeltaSplitSpec::Explicit(v) => DeltaSplit::Explicit(v.clone()),
            },
            scaling: self.privacy.noise_scaling,
        }
    }
}
