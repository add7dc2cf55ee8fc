//! Scenario files.
//!
//! A scenario is a TOML document; every field is optional and falls back
//! to the defaults below. Example:
//!
//! ```toml
//! rv_rate = 0.6
//! routing = true
//! policy = "heuristic"          # random | always_go | train | { checkpoint = "ckpt.json" }
//!
//! [network]
//! kind = "grid"                 # or "explicit" with `junctions` and `edges`
//! rows = 3
//! cols = 3
//! edge_length = 150.0
//!
//! [demand]
//! uniform_rate = 1.2            # veh/s spread over every stub-to-stub pair
//! flows = [{ origin = 40, destination = 27, rate = 0.05, rv_rate = 0.0 }]
//!
//! [params]
//! lambda_threat = 0.5
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use mixtraffic_core::agent::{AlwaysGo, HeuristicPolicy, LinearQ, Policy, TrainConfig, UniformRandom};
use mixtraffic_core::control::{ControlZoneConfig, Observation};
use mixtraffic_core::dynamics::Demand;
use mixtraffic_core::geometry::Point;
use mixtraffic_core::metrics::Window;
use mixtraffic_core::net::{build_grid, EdgeSpec, RoadNetwork};
use mixtraffic_core::reward::RewardWeights;
use mixtraffic_core::rng::SimRng;
use mixtraffic_core::routing::{CoordinatorConfig, RerouteConfig};
use mixtraffic_core::sim::{uniform_demand, SimConfig};
use mixtraffic_core::Action;
use serde::{Deserialize, Serialize};

/// Arrival rate per boundary stub used when a scenario gives no demand.
pub const DEFAULT_RATE_PER_SOURCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkSpec {
    Grid {
        rows: usize,
        cols: usize,
        #[serde(default = "default_edge_length")]
        edge_length: f64,
        #[serde(default = "default_speed_limit")]
        speed_limit: f64,
    },
    /// Junction coordinates `[x, y]` plus directed edges. Junctions with a
    /// single neighbour act as entry/exit stubs.
    Explicit { junctions: Vec<[f64; 2]>, edges: Vec<EdgeSpec> },
}

fn default_edge_length() -> f64 {
    150.0
}

fn default_speed_limit() -> f64 {
    13.9
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec::Grid { rows: 3, cols: 3, edge_length: default_edge_length(), speed_limit: default_speed_limit() }
    }
}

impl NetworkSpec {
    pub fn grid(rows: usize, cols: usize) -> Self {
        NetworkSpec::Grid { rows, cols, edge_length: default_edge_length(), speed_limit: default_speed_limit() }
    }

    pub fn build(&self) -> anyhow::Result<RoadNetwork> {
        let net = match self {
            NetworkSpec::Grid { rows, cols, edge_length, speed_limit } => build_grid(*rows, *cols, *edge_length, *speed_limit)?,
            NetworkSpec::Explicit { junctions, edges } => {
                RoadNetwork::new(junctions.iter().map(|p| Point::new(p[0], p[1])).collect(), edges)?
            }
        };
        Ok(net)
    }
}

/// Parses `RxC` (e.g. `3x3`).
pub fn parse_grid(s: &str) -> anyhow::Result<(usize, usize)> {
    let (r, c) = s.split_once(['x', 'X']).with_context(|| format!("grid must look like 3x3, got {s:?}"))?;
    Ok((r.trim().parse()?, c.trim().parse()?))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandSpec {
    /// Total veh/s spread evenly over all stub-to-stub pairs.
    pub uniform_rate: Option<f64>,
    /// Extra origin/destination flows, edge ids as built.
    pub flows: Vec<Demand>,
}

impl DemandSpec {
    pub fn build(&self, net: &RoadNetwork) -> Vec<Demand> {
        let uniform = match self.uniform_rate {
            Some(r) => Some(r),
            None if self.flows.is_empty() => Some(DEFAULT_RATE_PER_SOURCE * net.source_edges().len() as f64),
            None => None,
        };
        let mut demands = uniform.map(|r| uniform_demand(net, r)).unwrap_or_default();
        demands.extend(self.flows.iter().copied());
        demands
    }
}

/// Where Stop/Go decisions come from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySource {
    #[default]
    Heuristic,
    Random,
    AlwaysGo,
    /// Train a linear Q-learner first, then run it greedily.
    Train,
    Checkpoint(PathBuf),
}

/// Tunable knobs. Defaults follow the reference hyperparameter table;
/// `theta_go`, `patience` and `zone_radius` belong to this implementation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub lr: f64,
    pub gamma: f64,
    pub lambda_parity: f64,
    pub lambda_threat: f64,
    pub conflict_penalty: f64,
    pub c0: usize,
    /// Per-cell weight `w_c`, applied to all `c0` cells.
    pub cell_weight: f64,
    pub z_norm: f64,
    /// Reroute activation probability ρ.
    pub rho: f64,
    /// Detour ratio δ.
    pub delta: f64,
    pub alpha: f64,
    pub commitment_distance: f64,
    /// Steps.
    pub cooldown: usize,
    /// `None` means `rv_rate − 0.05`.
    pub p_target: Option<f64>,
    /// Steps between coordinator updates.
    pub update_interval: usize,
    /// Coverage history length `k`.
    pub history: usize,
    /// Trend extrapolation horizon `h` (steps).
    pub prediction_horizon: f64,
    pub zone_radius: f64,
    pub theta_go: f64,
    pub patience: f64,
    pub iterations: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            lr: 5e-4,
            gamma: 0.99,
            lambda_parity: 0.2,
            lambda_threat: 0.5,
            conflict_penalty: -1.0,
            c0: 3,
            cell_weight: 1.0,
            z_norm: 5.0,
            rho: 0.15,
            delta: 1.2,
            alpha: 1.0,
            commitment_distance: 50.0,
            cooldown: 60,
            p_target: None,
            update_interval: 60,
            history: 5,
            prediction_horizon: 60.0,
            zone_radius: 30.0,
            theta_go: 0.2,
            patience: 1.0,
            iterations: 200,
        }
    }
}

impl Params {
    pub fn reward(&self) -> RewardWeights {
        RewardWeights {
            lambda_parity: self.lambda_parity,
            lambda_threat: self.lambda_threat,
            conflict_penalty: self.conflict_penalty,
        }
    }

    pub fn zone(&self) -> ControlZoneConfig {
        ControlZoneConfig {
            radius: self.zone_radius,
            c0: self.c0,
            cell_weights: vec![self.cell_weight; self.c0],
            z_norm: self.z_norm,
            ..ControlZoneConfig::default()
        }
    }

    pub fn coordinator(&self, rv_rate: f64) -> CoordinatorConfig {
        let base = CoordinatorConfig::for_rv_rate(rv_rate);
        CoordinatorConfig {
            alpha: self.alpha,
            p_target: self.p_target.unwrap_or(base.p_target),
            horizon: self.prediction_horizon,
            update_interval: self.update_interval,
            window: self.history,
        }
    }

    pub fn reroute(&self) -> RerouteConfig {
        RerouteConfig {
            activation: self.rho,
            detour_ratio: self.delta,
            cooldown: self.cooldown,
            commitment_distance: self.commitment_distance,
        }
    }

    pub fn heuristic(&self) -> HeuristicPolicy {
        HeuristicPolicy { theta_go: self.theta_go, patience: self.patience }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { gamma: self.gamma, lr: self.lr, iterations: self.iterations, seed, ..TrainConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub network: NetworkSpec,
    pub demand: DemandSpec,
    pub rv_rate: f64,
    /// Seconds.
    pub horizon: f64,
    /// Measurement window `[start, end)` in seconds.
    pub window: [f64; 2],
    pub dt: f64,
    /// Number of seeds for sweeps (`0..seeds`).
    pub seeds: usize,
    pub routing: bool,
    pub policy: PolicySource,
    pub params: Params,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            network: NetworkSpec::default(),
            demand: DemandSpec::default(),
            rv_rate: 0.6,
            horizon: 1000.0,
            window: [500.0, 1000.0],
            dt: 1.0,
            seeds: 10,
            routing: true,
            policy: PolicySource::default(),
            params: Params::default(),
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> anyhow::Result<Scenario> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut s: Scenario = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        // relative checkpoint paths are relative to the scenario file
        if let PolicySource::Checkpoint(p) = &mut s.policy {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(s)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Engine configuration for `net` (built from `self.network`).
    pub fn sim_config(&self, net: &RoadNetwork) -> anyhow::Result<SimConfig> {
        let p = &self.params;
        let mut cfg = SimConfig::new(self.demand.build(net), self.rv_rate);
        cfg.horizon = self.horizon;
        cfg.window = Window::new(self.window[0], self.window[1]);
        cfg.dt = self.dt;
        cfg.routing = self.routing;
        cfg.zone = p.zone();
        cfg.reward = p.reward();
        cfg.coordinator = Some(p.coordinator(self.rv_rate));
        cfg.reroute = p.reroute();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn build(&self) -> anyhow::Result<(Arc<RoadNetwork>, SimConfig)> {
        let net = self.network.build()?;
        let cfg = self.sim_config(&net)?;
        Ok((Arc::new(net), cfg))
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).collect()
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.seeds == 0 {
            bail!("seeds must be at least 1");
        }
        self.build()?;
        self.params.train_config(0).validate()?;
        Ok(())
    }
}

/// A policy resolved from a [`PolicySource`].
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedPolicy {
    Heuristic(HeuristicPolicy),
    Random,
    AlwaysGo,
    Learned(LinearQ),
}

impl LoadedPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            LoadedPolicy::Heuristic(_) => "heuristic",
            LoadedPolicy::Random => "random",
            LoadedPolicy::AlwaysGo => "always_go",
            LoadedPolicy::Learned(_) => "learned",
        }
    }
}

impl Policy for LoadedPolicy {
    fn act(&self, obs: &Observation, explore: bool, rng: &mut SimRng) -> Action {
        match self {
            LoadedPolicy::Heuristic(p) => p.act(obs, explore, rng),
            LoadedPolicy::Random => UniformRandom.act(obs, explore, rng),
            LoadedPolicy::AlwaysGo => AlwaysGo.act(obs, explore, rng),
            LoadedPolicy::Learned(p) => p.act(obs, explore, rng),
        }
    }
}
