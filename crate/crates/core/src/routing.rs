//! Coverage-aware routing: the coordinator that turns predicted RV shortage
//! into discounted edge costs, and the per-RV reroute decision.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Place, VehicleState};
use crate::net::{shortest_path, RoadNetwork, Route};
use crate::{Error, Result, VehicleClass};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinatorConfig {
    /// Incentive strength α.
    pub alpha: f64,
    /// Target coverage.
    pub p_target: f64,
    /// Prediction horizon `h`, in steps.
    pub horizon: f64,
    /// Steps between cost-map broadcasts.
    pub update_interval: usize,
    /// History window `k`.
    pub window: usize,
}

impl CoordinatorConfig {
    /// Defaults with `P_target = rv_rate − 0.05` (floored at 0).
    pub fn for_rv_rate(rv_rate: f64) -> Self {
        CoordinatorConfig { alpha: 1.0, p_target: (rv_rate - 0.05).max(0.0), horizon: 60.0, update_interval: 60, window: 5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !(0.0..=1.0).contains(&self.p_target) || !(self.horizon >= 0.0) {
            return Err(Error::Config("need alpha >= 0, 0 <= p_target <= 1, h >= 0".into()));
        }
        if self.update_interval == 0 || self.window < 2 {
            return Err(Error::Config("update interval must be >= 1 and window >= 2".into()));
        }
        if self.alpha * self.p_target >= 1.0 {
            return Err(Error::Config("alpha * p_target must stay below 1 to keep costs positive".into()));
        }
        Ok(())
    }
}

/// Sliding window of the last `k` coverage samples of one edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageHistory {
    window: usize,
    samples: VecDeque<f64>,
}

impl CoverageHistory {
    pub fn new(window: usize) -> Self {
        CoverageHistory { window, samples: VecDeque::with_capacity(window) }
    }

    pub fn push(&mut self, p: f64) {
        if self.samples.len() == self.window {
            self.samples.pop_front();
        }
        self.samples.push_back(p);
    }

    pub fn is_full(&self) -> bool {
        self.samples.len() == self.window
    }

    pub fn latest(&self) -> Option<f64> {
        self.samples.back().copied()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> Vec<f64> {
        self.samples.iter().copied().collect()
    }
}

/// RV share of the vehicles on an edge; `None` for an empty edge.
pub fn measure_coverage(rv_count: usize, total: usize) -> Option<f64> {
    if total == 0 {
        None
    } else {
        Some(rv_count as f64 / total as f64)
    }
}

/// Ordinary-least-squares slope of the samples against their index.
pub fn trend(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return 0.0;
    }
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = samples.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in samples.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// `clip(P + m·h, 0, 1)`.
pub fn predict(p_now: f64, slope: f64, horizon: f64) -> f64 {
    (p_now + slope * horizon).clamp(0.0, 1.0)
}

/// Prediction from a history sampled every `interval` steps: trend
/// extrapolation once full, the latest sample otherwise, `None` if the edge
/// was never observed. `horizon` is in steps.
pub fn predict_from_history(history: &CoverageHistory, horizon: f64, interval: usize) -> Option<f64> {
    let p_now = history.latest()?;
    if history.is_full() {
        let per_step = trend(&history.samples()) / interval as f64;
        Some(predict(p_now, per_step, horizon))
    } else {
        Some(p_now)
    }
}

/// `max(0, P_target − P̂)`.
pub fn shortage(p_hat: f64, p_target: f64) -> f64 {
    (p_target - p_hat).max(0.0)
}

/// Adjusted costs broadcast to every RV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostMap {
    pub costs: Vec<f64>,
    pub generation: u64,
    pub time: f64,
}

/// `τ′(e) = τ(e) − α·Ŝ(e)·τ(e)`.
pub fn adjust_costs(baseline: &[f64], shortages: &[f64], alpha: f64) -> Result<Vec<f64>> {
    baseline
        .iter()
        .zip(shortages)
        .enumerate()
        .map(|(e, (&tau, &s))| {
            let adjusted = tau - alpha * s * tau;
            if adjusted > 0.0 {
                Ok(adjusted)
            } else {
                Err(Error::Config(alloc::format!("edge {e}: adjusted cost {adjusted} is not positive (alpha * shortage >= 1)")))
            }
        })
        .collect()
}

/// Output of one coordinator update.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinatorUpdate {
    pub cost_map: CostMap,
    pub shortages: Vec<f64>,
}

/// Maintains per-edge coverage histories and emits cost maps.
#[derive(Debug, Clone)]
pub struct Coordinator {
    cfg: CoordinatorConfig,
    histories: Vec<CoverageHistory>,
    baseline: Vec<f64>,
    generation: u64,
}

impl Coordinator {
    pub fn new(net: &RoadNetwork, cfg: CoordinatorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Coordinator {
            cfg,
            histories: (0..net.edges.len()).map(|_| CoverageHistory::new(cfg.window)).collect(),
            baseline: net.baseline_costs(),
            generation: 0,
        })
    }

    pub fn config(&self) -> &CoordinatorConfig {
        &self.cfg
    }

    pub fn history(&self, edge: usize) -> &CoverageHistory {
        &self.histories[edge]
    }

    /// One pass over every edge. `counts[e] = (rv, total)` currently on `e`.
    pub fn update(&mut self, counts: &[(usize, usize)], time: f64) -> Result<CoordinatorUpdate> {
        let mut shortages = Vec::with_capacity(self.histories.len());
        for (hist, &(rv, total)) in self.histories.iter_mut().zip(counts) {
            if let Some(p) = measure_coverage(rv, total) {
                hist.push(p);
            }
            let s = predict_from_history(hist, self.cfg.horizon, self.cfg.update_interval)
                .map_or(0.0, |p_hat| shortage(p_hat, self.cfg.p_target));
            shortages.push(s);
        }
        let costs = adjust_costs(&self.baseline, &shortages, self.cfg.alpha)?;
        self.generation += 1;
        Ok(CoordinatorUpdate { cost_map: CostMap { costs, generation: self.generation, time }, shortages })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerouteConfig {
    /// Activation probability ρ.
    pub activation: f64,
    /// Maximum detour ratio δ.
    pub detour_ratio: f64,
    /// Minimum steps between adopted reroutes.
    pub cooldown: usize,
    /// Minimum distance to the next junction (m).
    pub commitment_distance: f64,
}

impl Default for RerouteConfig {
    fn default() -> Self {
        RerouteConfig { activation: 0.15, detour_ratio: 1.20, cooldown: 60, commitment_distance: 50.0 }
    }
}

impl RerouteConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.activation) || !(self.detour_ratio > 1.0) || !(self.commitment_distance >= 0.0) {
            return Err(Error::Config("need 0 <= rho <= 1, delta > 1, commitment >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RerouteOutcome {
    NotEligible(Ineligible),
    /// Failed the probabilistic activation.
    Gated,
    /// No route to the destination under the adjusted costs.
    NoRoute,
    Rejected {
        candidate_cost: f64,
    },
    Adopted {
        candidate_cost: f64,
        route: Route,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ineligible {
    NotRv,
    Cooldown,
    /// Inside a junction or finished.
    NotOnEdge,
    Committed,
}

impl RerouteOutcome {
    pub fn is_eligible(&self) -> bool {
        !matches!(self, RerouteOutcome::NotEligible(_))
    }

    pub fn passed_gate(&self) -> bool {
        self.is_eligible() && !matches!(self, RerouteOutcome::Gated)
    }

    pub fn candidate_cost(&self) -> Option<f64> {
        match self {
            RerouteOutcome::Rejected { candidate_cost } | RerouteOutcome::Adopted { candidate_cost, .. } => Some(*candidate_cost),
            _ => None,
        }
    }
}

/// Eligibility checks, then the ρ gate, then a shortest path under τ′
/// verified against the baseline costs: adopt iff `Σ τ ≤ δ·C(R_base)`.
/// The returned route runs from the current edge to the destination.
pub fn consider_reroute<R: Rng + ?Sized>(
    v: &VehicleState,
    cost_map: &CostMap,
    net: &RoadNetwork,
    cfg: &RerouteConfig,
    t: f64,
    dt: f64,
    rng: &mut R,
) -> RerouteOutcome {
    if v.class != VehicleClass::Rv {
        return RerouteOutcome::NotEligible(Ineligible::NotRv);
    }
    if let Some(last) = v.last_reroute {
        if t - last < cfg.cooldown as f64 * dt {
            return RerouteOutcome::NotEligible(Ineligible::Cooldown);
        }
    }
    if v.place != Place::Edge {
        return RerouteOutcome::NotEligible(Ineligible::NotOnEdge);
    }
    match v.distance_to_stop_line(net) {
        Some(d) if d >= cfg.commitment_distance => {}
        _ => return RerouteOutcome::NotEligible(Ineligible::Committed),
    }
    if rng.gen::<f64>() > cfg.activation {
        return RerouteOutcome::Gated;
    }
    let candidate = match shortest_path(net, v.current_edge(), v.destination(), &cost_map.costs) {
        Ok(r) => r,
        Err(_) => return RerouteOutcome::NoRoute,
    };
    let candidate_cost = candidate.baseline_cost;
    if candidate_cost <= cfg.detour_ratio * v.baseline_cost {
        RerouteOutcome::Adopted { candidate_cost, route: candidate }
    } else {
        RerouteOutcome::Rejected { candidate_cost }
    }
}

/// Splices an adopted candidate onto the traversed prefix and starts the
/// cooldown. `C(R_base)` is left untouched.
pub fn apply_reroute(v: &mut VehicleState, net: &RoadNetwork, candidate: &Route, t: f64) -> Result<()> {
    debug_assert_eq!(candidate.first(), v.current_edge());
    let mut edges = v.route.edges[..v.route_index].to_vec();
    edges.extend_from_slice(&candidate.edges);
    v.route = Route::new(net, edges)?;
    v.last_reroute = Some(t);
    Ok(())
}
