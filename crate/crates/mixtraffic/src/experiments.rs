//! Fixed experiment setups shared by the acceptance suite and the CLI:
//! the single-intersection learning environment, the paired reward
//! ablations and the starved-corridor routing scenario.

use std::sync::Arc;

use mixtraffic_core::agent::{evaluate, feature_width, train, CurvePoint, Evaluation, LinearQ, Policy};
use mixtraffic_core::dynamics::Demand;
use mixtraffic_core::net::{EdgeId, JunctionId, RoadNetwork};
use mixtraffic_core::sim::{uniform_demand, Simulation};

use crate::scenario::{DemandSpec, NetworkSpec, Scenario};

/// Greedy evaluation episodes per trained agent.
pub const EVAL_EPISODES: u64 = 5;

/// Seed of training episode `iteration` for agent `seed`.
pub fn train_episode_seed(seed: u64, iteration: usize) -> u64 {
    seed * 1000 + iteration as u64
}

/// Seed of evaluation episode `episode` for agent `seed`; disjoint from
/// every training seed.
pub fn eval_episode_seed(seed: u64, episode: u64) -> u64 {
    900_000 + seed * 10 + episode
}

/// One 4-way intersection, 100 m approaches, 0.4 veh/s over the 12 OD
/// pairs, 80% RVs, routing off.
pub fn learning_scenario() -> Scenario {
    Scenario {
        network: NetworkSpec::Grid { rows: 1, cols: 1, edge_length: 100.0, speed_limit: 13.9 },
        demand: DemandSpec { uniform_rate: Some(0.4), flows: Vec::new() },
        rv_rate: 0.8,
        routing: false,
        ..Scenario::default()
    }
}

/// The learning scenario pushed to 0.7 veh/s, the lightest load at which
/// approaches starve for more than a minute.
pub fn parity_scenario() -> Scenario {
    let mut s = learning_scenario();
    s.demand.uniform_rate = Some(0.7);
    s
}

/// Trains one agent on `scenario` with the scenario's learner settings.
pub fn train_agent(scenario: &Scenario, seed: u64) -> anyhow::Result<(LinearQ, Vec<CurvePoint>)> {
    let (net, cfg) = scenario.build()?;
    let env = |it: usize| Simulation::new(Arc::clone(&net), cfg.clone(), train_episode_seed(seed, it));
    let tc = scenario.params.train_config(seed);
    Ok(train(env, &tc, feature_width(scenario.params.c0))?)
}

/// Greedy evaluation episodes of `policy` for agent `seed`.
pub fn evaluate_agent<P: Policy + ?Sized>(policy: &P, scenario: &Scenario, seed: u64) -> anyhow::Result<Vec<Evaluation>> {
    let (net, cfg) = scenario.build()?;
    (0..EVAL_EPISODES)
        .map(|e| Ok(evaluate(policy, Simulation::new(Arc::clone(&net), cfg.clone(), eval_episode_seed(seed, e))?, false)?))
        .collect()
}

/// Episode means of the quantities the ablations compare.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmSummary {
    pub mean_return: f64,
    pub w_avg: f64,
    pub c_rate: f64,
    pub w_max: f64,
}

/// Averages evaluation episodes; undefined per-episode metrics count as 0.
pub fn summarize(evals: &[Evaluation]) -> ArmSummary {
    let n = evals.len().max(1) as f64;
    let mean = |f: &dyn Fn(&Evaluation) -> f64| evals.iter().map(f).sum::<f64>() / n;
    ArmSummary {
        mean_return: mean(&|e| e.mean_return),
        w_avg: mean(&|e| e.report.w_avg.unwrap_or(0.0)),
        c_rate: mean(&|e| e.report.c_rate.unwrap_or(0.0)),
        w_max: mean(&|e| e.report.w_max),
    }
}

/// One-sided sign test: P(X >= wins) for X ~ Binomial(n, 1/2).
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut c = 1.0f64;
    let mut tail = 0.0;
    for k in 0..=n {
        if k >= wins {
            tail += c;
        }
        c = c * (n - k) as f64 / (k + 1) as f64;
    }
    tail / 2f64.powi(n as i32)
}

/// Corridor rate (veh/s, each way) of the all-HV flows in the routing scenario.
pub const CORRIDOR_RATE: f64 = 0.06;
/// Background demand of the routing scenario (veh/s).
pub const BACKGROUND_RATE: f64 = 1.0;

/// Boundary stub attached to `junction` on the west (`west = true`) or east side.
fn side_stub(net: &RoadNetwork, junction: JunctionId, west: bool) -> Option<JunctionId> {
    let x = net.junctions[junction].pos.x;
    net.sink_edges().into_iter().filter(|&e| net.edges[e].from == junction).map(|e| net.edges[e].to).find(|&j| {
        if west {
            net.junctions[j].pos.x < x
        } else {
            net.junctions[j].pos.x > x
        }
    })
}

/// Entry and exit edges of the west and east stubs on the middle row of
/// a 3×3 grid: `(west_in, west_out, east_in, east_out)`.
pub fn corridor_edges(net: &RoadNetwork) -> anyhow::Result<(EdgeId, EdgeId, EdgeId, EdgeId)> {
    let (wj, ej) = (3, 5);
    let w = side_stub(net, wj, true).ok_or_else(|| anyhow::anyhow!("no west stub at junction {wj}"))?;
    let e = side_stub(net, ej, false).ok_or_else(|| anyhow::anyhow!("no east stub at junction {ej}"))?;
    let edge = |a, b| net.edge_between(a, b).ok_or_else(|| anyhow::anyhow!("missing edge {a}->{b}"));
    Ok((edge(w, wj)?, edge(wj, w)?, edge(e, ej)?, edge(ej, e)?))
}

/// 3×3 grid (300 m blocks) at overall RV share `rv_rate`, where an
/// all-HV flow runs both ways along the middle row. Background OD pairs
/// carry a raised RV share so the network-wide share stays `rv_rate`,
/// leaving the corridor edges short of RVs and the rest over-covered.
pub fn corridor_scenario(rv_rate: f64) -> anyhow::Result<Scenario> {
    let network = NetworkSpec::Grid { rows: 3, cols: 3, edge_length: 300.0, speed_limit: 13.9 };
    let net = network.build()?;
    let (w_in, w_out, e_in, e_out) = corridor_edges(&net)?;
    let total = BACKGROUND_RATE + 2.0 * CORRIDOR_RATE;
    let background_rv = (rv_rate * total / BACKGROUND_RATE).min(1.0);
    let mut flows: Vec<Demand> =
        uniform_demand(&net, BACKGROUND_RATE).into_iter().map(|d| Demand { rv_rate: Some(background_rv), ..d }).collect();
    flows.push(Demand { origin: w_in, destination: e_out, rate: CORRIDOR_RATE, rv_rate: Some(0.0) });
    flows.push(Demand { origin: e_in, destination: w_out, rate: CORRIDOR_RATE, rv_rate: Some(0.0) });
    Ok(Scenario { network, demand: DemandSpec { uniform_rate: None, flows }, rv_rate, routing: true, ..Scenario::default() })
}

/// The 50 collision-check runs: 3×3 grid, rates 0.4..0.9 cycled, routing
/// alternating on and off, seed = run index. Returns `(scenario, seed)`.
pub fn safety_runs() -> Vec<(Scenario, u64)> {
    const RATES: [f64; 6] = [0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
    (0..50u64)
        .map(|i| {
            let s = Scenario { rv_rate: RATES[(i as usize / 2) % 6], routing: i % 2 == 0, ..Scenario::default() };
            (s, i)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_values() {
        assert_eq!(sign_test_p(0, 10), 1.0);
        assert!((sign_test_p(10, 10) - 1.0 / 1024.0).abs() < 1e-15);
        assert!((sign_test_p(9, 10) - 11.0 / 1024.0).abs() < 1e-15);
        assert!((sign_test_p(8, 10) - 56.0 / 1024.0).abs() < 1e-15);
    }

    #[test]
    fn corridor_layout() {
        let s = corridor_scenario(0.8).unwrap();
        let net = s.network.build().unwrap();
        let (w_in, w_out, e_in, e_out) = corridor_edges(&net).unwrap();
        assert_eq!(net.edges[w_in].to, 3);
        assert_eq!(net.edges[w_out].from, 3);
        assert_eq!(net.edges[e_in].to, 5);
        assert_eq!(net.edges[e_out].from, 5);
        let total: f64 = s.demand.flows.iter().map(|d| d.rate).sum();
        let rv: f64 = s.demand.flows.iter().map(|d| d.rate * d.rv_rate.unwrap()).sum();
        assert!((rv / total - 0.8).abs() < 1e-12);
    }

    #[test]
    fn safety_runs_cover_every_rate_both_ways() {
        let runs = safety_runs();
        assert_eq!(runs.len(), 50);
        for r in [0.4, 0.5, 0.6, 0.7, 0.8, 0.9] {
            for routing in [false, true] {
                assert!(runs.iter().any(|(s, _)| s.rv_rate == r && s.routing == routing));
            }
        }
    }

    #[test]
    fn seeds_disjoint() {
        let max_train = train_episode_seed(9, 999);
        assert!(eval_episode_seed(0, 0) > max_train);
    }
}
