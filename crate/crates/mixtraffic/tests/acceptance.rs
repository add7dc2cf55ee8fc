//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero if any fails. Pass criterion numbers as arguments to run
//! a subset, e.g. `cargo test -p mixtraffic --test acceptance -- 1 6`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mixtraffic::experiments::{
    corridor_scenario, evaluate_agent, learning_scenario, parity_scenario, safety_runs, sign_test_p, summarize, train_agent,
    ArmSummary,
};
use mixtraffic::output::metrics_json;
use mixtraffic::scenario::Scenario;
use mixtraffic_core::agent::{controller, HeuristicPolicy, LinearQ, UniformRandom};
use mixtraffic_core::control::threat_score;
use mixtraffic_core::geometry::Point;
use mixtraffic_core::metrics::{ApproachWaitSeries, Completion, ControlRecord, Crossing, FuelModel, Window, ZoneSample};
use mixtraffic_core::net::{route_cost, shortest_path, EdgeSpec, RoadNetwork};
use mixtraffic_core::reward::{parity_penalty, total_reward, RewardWeights};
use mixtraffic_core::rng;
use mixtraffic_core::routing::{adjust_costs, predict, shortage};
use mixtraffic_core::sim::{compute_report, RunTrace, Simulation};
use rand::Rng;
use rayon::prelude::*;
use serde::Deserialize;

const SEEDS: u64 = 10;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn within(limit: Duration, elapsed: Duration) -> String {
    format!("{:.1} s, limit {} s", elapsed.as_secs_f64(), limit.as_secs())
}

// ---------------------------------------------------------------- 1

fn parity_oracle(q: &[f64]) -> f64 {
    // mean of squared pairwise differences over n², i.e. the population variance
    let n = q.len() as f64;
    let mut s = 0.0;
    for i in 0..q.len() {
        for j in i + 1..q.len() {
            s += (q[i] - q[j]) * (q[i] - q[j]);
        }
    }
    s / (n * n)
}

fn formula_oracles() -> Verdict {
    const N: usize = 100_000;
    let start = Instant::now();
    let mut r = rng::stream(1, "acceptance-formulas", &[]);
    let mut worst = [0.0f64; 5];
    for _ in 0..N {
        let len = r.gen_range(1..=8);
        let q: Vec<f64> = (0..len).map(|_| r.gen::<f64>()).collect();
        worst[0] = worst[0].max((parity_penalty(&q) - parity_oracle(&q)).abs());

        let z = r.gen_range(0.1..10.0);
        let s = r.gen_range(0.0..3.0 * z);
        let t = if s >= z { 1.0 } else { s / z };
        worst[1] = worst[1].max((threat_score(s, z) - t).abs());

        let (p_hat, target) = (r.gen::<f64>(), r.gen::<f64>());
        let sh = if p_hat >= target { 0.0 } else { target - p_hat };
        worst[2] = worst[2].max((shortage(p_hat, target) - sh).abs());

        let (p, m, h) = (r.gen::<f64>(), r.gen_range(-0.05..0.05), r.gen_range(0.0..120.0));
        let raw = p + m * h;
        #[allow(clippy::manual_clamp)]
        let clipped = if raw < 0.0 {
            0.0
        } else if raw > 1.0 {
            1.0
        } else {
            raw
        };
        worst[3] = worst[3].max((predict(p, m, h) - clipped).abs());

        let edges = r.gen_range(1..=20);
        let tau: Vec<f64> = (0..edges).map(|_| r.gen_range(1.0..500.0)).collect();
        let short: Vec<f64> = (0..edges).map(|_| r.gen_range(0.0..1.0)).collect();
        let alpha = r.gen_range(0.0..1.0);
        let got = adjust_costs(&tau, &short, alpha).expect("alpha * shortage < 1");
        for ((g, t), s) in got.iter().zip(&tau).zip(&short) {
            worst[4] = worst[4].max((g - t * (1.0 - alpha * s)).abs());
        }
    }
    let w = RewardWeights::default();
    let plain = total_reward(0.5, 0.109375, 0.6, &w, false).total;
    let flagged = total_reward(0.5, 0.109375, 0.6, &w, true).total;
    let elapsed = start.elapsed();
    let max_err = worst.iter().cloned().fold(0.0, f64::max);
    let pass = max_err <= 1e-12 && plain == 0.178125 && flagged == -0.821875 && elapsed < Duration::from_secs(10);
    verdict(
        pass,
        format!(
            "5 x {N} random cases, max |err| {max_err:.1e} (parity {:.1e}, threat {:.1e}, shortage {:.1e}, predict {:.1e}, costs {:.1e}); \
             reward example {plain} / {flagged}; {}",
            worst[0],
            worst[1],
            worst[2],
            worst[3],
            worst[4],
            within(Duration::from_secs(10), elapsed)
        ),
    )
}

// ---------------------------------------------------------------- 2

/// `None` for an edgeless draw, which the caller redraws.
fn random_network(r: &mut rng::SimRng) -> Option<Result<RoadNetwork, String>> {
    let n = r.gen_range(2..=9);
    let mut pos: Vec<Point> = Vec::new();
    while pos.len() < n {
        let p = Point::new(r.gen_range(0.0..1000.0), r.gen_range(0.0..1000.0));
        if pos.iter().all(|q| q.sub(p).norm() > 40.0) {
            pos.push(p);
        }
    }
    let mut specs = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && r.gen_bool(0.35) {
                specs.push(EdgeSpec { from: a, to: b, length: r.gen_range(10.0..500.0), speed_limit: 13.9 });
            }
        }
    }
    if specs.is_empty() {
        return None;
    }
    Some(RoadNetwork::new(pos, &specs).map_err(|e| e.to_string()))
}

/// Cheapest edge-simple path by exhaustive depth-first enumeration.
fn enumerate_best(net: &RoadNetwork, from: usize, to: usize, costs: &[f64]) -> Option<f64> {
    fn go(net: &RoadNetwork, e: usize, to: usize, costs: &[f64], used: &mut Vec<bool>, acc: f64, best: &mut Option<f64>) {
        if e == to {
            if best.is_none_or(|b| acc < b) {
                *best = Some(acc);
            }
            return;
        }
        for &(next, _) in net.successors(e) {
            if !used[next] {
                used[next] = true;
                go(net, next, to, costs, used, acc + costs[next], best);
                used[next] = false;
            }
        }
    }
    let mut used = vec![false; net.edges.len()];
    used[from] = true;
    let mut best = None;
    go(net, from, to, costs, &mut used, costs[from], &mut best);
    best
}

fn shortest_path_oracle() -> Verdict {
    let start = Instant::now();
    let mut r = rng::stream(2, "acceptance-graphs", &[]);
    let (mut graphs, mut queries, mut reachable, mut rejected) = (0, 0, 0, 0);
    let mut failures = Vec::new();
    while graphs < 500 {
        let net = match random_network(&mut r) {
            None => {
                rejected += 1;
                continue;
            }
            Some(Err(e)) => {
                failures.push(format!("graph {graphs}: build failed: {e}"));
                graphs += 1;
                continue;
            }
            Some(Ok(net)) => net,
        };
        graphs += 1;
        let costs: Vec<f64> = (0..net.edges.len()).map(|_| r.gen_range(1.0..100.0)).collect();
        for _ in 0..10 {
            let from = r.gen_range(0..net.edges.len());
            let to = r.gen_range(0..net.edges.len());
            queries += 1;
            let oracle = enumerate_best(&net, from, to, &costs);
            match (shortest_path(&net, from, to, &costs), oracle) {
                (Err(_), None) => {}
                (Ok(route), Some(best)) => {
                    reachable += 1;
                    let c = route_cost(&route, &costs);
                    let chained = route.edges.windows(2).all(|w| net.successors(w[0]).iter().any(|s| s.0 == w[1]));
                    let ends = route.first() == from && route.last() == to;
                    if (c - best).abs() > 1e-9 * best || !chained || !ends {
                        failures.push(format!("graph {graphs}: {from}->{to} got {c} oracle {best}"));
                    }
                }
                (got, oracle) => {
                    failures.push(format!("graph {graphs}: {from}->{to} got {:?} oracle {oracle:?}", got.map(|r| r.edges)))
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(60);
    let mut detail = format!(
        "{graphs} graphs ({rejected} edgeless draws redrawn), {queries} queries, {reachable} reachable, {} mismatches; {}",
        failures.len(),
        within(Duration::from_secs(60), elapsed)
    );
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; first: {f}"));
    }
    verdict(pass, detail)
}

// ---------------------------------------------------------------- 3 and 4

struct SafetyRun {
    rv_rate: f64,
    routing: bool,
    seed: u64,
    result: Result<RunTrace, String>,
}

fn safety_traces() -> Vec<SafetyRun> {
    safety_runs()
        .into_par_iter()
        .map(|(s, seed)| {
            let result = (|| -> anyhow::Result<RunTrace> {
                let (net, cfg) = s.build()?;
                let h = s.params.heuristic();
                let (_, trace) = Simulation::new(net, cfg, seed)?.run(&mut controller(&h, false))?;
                Ok(trace)
            })()
            .map_err(|e| format!("{e:#}"));
            SafetyRun { rv_rate: s.rv_rate, routing: s.routing, seed, result }
        })
        .collect()
}

fn zero_collisions(runs: &[SafetyRun], elapsed: Duration) -> Verdict {
    let mut errors = Vec::new();
    let (mut violations, mut steps_checked, mut completed) = (0, 0usize, 0);
    for run in runs {
        match &run.result {
            Ok(t) => {
                violations += t.violations.len();
                steps_checked += t.wait_series.times.len();
                completed += t.completions.len();
            }
            Err(e) => errors.push(format!("rv {} routing {} seed {}: {e}", run.rv_rate, run.routing, run.seed)),
        }
    }
    let limit = Duration::from_secs(600);
    let pass = runs.len() == 50 && errors.is_empty() && violations == 0 && elapsed < limit;
    let mut detail = format!(
        "{} runs, {steps_checked} steps monitored, {completed} trips completed, {violations} interior conflicts, {} run errors; {}",
        runs.len(),
        errors.len(),
        within(limit, elapsed)
    );
    if let Some(e) = errors.first() {
        detail.push_str(&format!("; first error: {e}"));
    }
    verdict(pass, detail)
}

fn detour_bound(runs: &[SafetyRun]) -> Verdict {
    let delta = Scenario::default().params.delta;
    let cooldown = Scenario::default().params.cooldown as f64;
    let (mut adopted, mut over, mut close, mut runs_with_routing) = (0, 0, 0, 0);
    for run in runs {
        let Ok(t) = &run.result else { continue };
        if run.routing {
            runs_with_routing += 1;
        }
        let mut last: BTreeMap<u64, f64> = BTreeMap::new();
        for rec in t.routing_log.iter().filter(|r| r.adopted) {
            adopted += 1;
            match rec.candidate_cost {
                Some(c) if c <= delta * rec.baseline_cost => {}
                _ => over += 1,
            }
            if let Some(prev) = last.insert(rec.vehicle, rec.t) {
                // dt = 1 s, so seconds are steps
                if rec.t - prev < cooldown {
                    close += 1;
                }
            }
        }
    }
    let pass = adopted > 0 && over == 0 && close == 0 && runs.iter().all(|r| r.result.is_ok());
    verdict(
        pass,
        format!(
            "{adopted} adopted reroutes over {runs_with_routing} routing-on runs; {over} exceed {delta} x C(R_base); {close} closer than {cooldown} steps to the previous one"
        ),
    )
}

// ---------------------------------------------------------------- 5

fn determinism() -> Verdict {
    let cases = [
        (Scenario { rv_rate: 0.7, ..Scenario::default() }, 42u64, "heuristic"),
        (Scenario { rv_rate: 0.5, ..Scenario::default() }, 7, "random"),
    ];
    let mut lines = Vec::new();
    let mut pass = true;
    for (s, seed, policy) in cases {
        let jsons: Vec<String> = (0..3)
            .map(|_| {
                let (net, cfg) = s.build().unwrap();
                let sim = Simulation::new(net, cfg, seed).unwrap();
                let report = match policy {
                    "random" => sim.run(&mut controller(&UniformRandom, false)),
                    _ => sim.run(&mut controller(&s.params.heuristic(), false)),
                }
                .unwrap()
                .0;
                metrics_json(&report).unwrap()
            })
            .collect();
        let same = jsons.windows(2).all(|w| w[0] == w[1]);
        pass &= same;
        lines.push(format!(
            "{policy} rv {} seed {seed}: {} bytes x3 {}",
            s.rv_rate,
            jsons[0].len(),
            if same { "identical" } else { "DIFFER" }
        ));
    }
    verdict(pass, lines.join("; "))
}

// ---------------------------------------------------------------- 6

#[derive(Deserialize)]
struct Expected {
    w_avg: Option<f64>,
    theta_int: f64,
    theta_net: f64,
    d_avg: Option<f64>,
    w_max: f64,
    w_p99: Option<f64>,
    c_rate: Option<f64>,
    f_avg: Option<f64>,
}

#[derive(Deserialize)]
struct Fixture {
    window: Window,
    intersections: usize,
    fuel: FuelModel,
    zone_samples: Vec<ZoneSample>,
    crossings: Vec<Crossing>,
    completions: Vec<Completion>,
    control_log: Vec<ControlRecord>,
    wait_series: ApproachWaitSeries,
    expected: Expected,
}

fn golden_fixtures() -> Verdict {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut lines = Vec::new();
    let mut pass = true;
    for name in ["metrics_mixed", "metrics_saturated", "metrics_tail"] {
        let text = std::fs::read_to_string(dir.join(format!("{name}.json"))).expect("fixture readable");
        let f: Fixture = serde_json::from_str(&text).expect("fixture parses");
        let trace = RunTrace {
            zone_samples: f.zone_samples,
            crossings: f.crossings,
            completions: f.completions,
            control_log: f.control_log,
            wait_series: f.wait_series,
            ..RunTrace::default()
        };
        let got = compute_report(&trace, f.intersections, f.window, &f.fuel);
        let e = &f.expected;
        let checks = [
            ("W_avg", got.w_avg == e.w_avg, format!("{:?}", got.w_avg)),
            ("Theta_int", got.theta_int == e.theta_int, format!("{}", got.theta_int)),
            ("Theta_net", got.theta_net == e.theta_net, format!("{}", got.theta_net)),
            ("D_avg", got.d_avg == e.d_avg, format!("{:?}", got.d_avg)),
            ("W_max", got.w_max == e.w_max, format!("{}", got.w_max)),
            ("W_p99", got.w_p99 == e.w_p99, format!("{:?}", got.w_p99)),
            ("C_rate", got.c_rate == e.c_rate, format!("{:?}", got.c_rate)),
            ("F_avg", got.f_avg == e.f_avg, format!("{:?}", got.f_avg)),
        ];
        let bad: Vec<String> = checks.iter().filter(|c| !c.1).map(|c| format!("{}={}", c.0, c.2)).collect();
        pass &= bad.is_empty();
        if bad.is_empty() {
            lines.push(format!("{name}: 8/8 exact (W_max {})", got.w_max));
        } else {
            lines.push(format!("{name}: mismatched {}", bad.join(", ")));
        }
    }
    verdict(pass, lines.join("; "))
}

// ---------------------------------------------------------------- 7 to 9

struct Arm {
    seed: u64,
    summary: ArmSummary,
}

fn train_and_evaluate(s: &Scenario) -> Result<(Vec<Arm>, Vec<LinearQ>), String> {
    let out: Result<Vec<(Arm, LinearQ)>, String> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let (q, _) = train_agent(s, seed).map_err(|e| format!("seed {seed}: {e:#}"))?;
            let evals = evaluate_agent(&q, s, seed).map_err(|e| format!("seed {seed}: {e:#}"))?;
            Ok((Arm { seed, summary: summarize(&evals) }, q))
        })
        .collect();
    Ok(out?.into_iter().unzip())
}

fn baseline_arms<P: mixtraffic_core::agent::Policy + Sync>(s: &Scenario, policy: &P) -> Result<Vec<Arm>, String> {
    (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let evals = evaluate_agent(policy, s, seed).map_err(|e| format!("seed {seed}: {e:#}"))?;
            Ok(Arm { seed, summary: summarize(&evals) })
        })
        .collect()
}

fn mean(arms: &[Arm], f: impl Fn(&ArmSummary) -> f64) -> f64 {
    arms.iter().map(|a| f(&a.summary)).sum::<f64>() / arms.len() as f64
}

fn learning(trained: &Result<Vec<Arm>, String>, elapsed: Duration) -> Verdict {
    let trained = match trained {
        Ok(t) => t,
        Err(e) => return verdict(false, format!("training failed: {e}")),
    };
    let random = match baseline_arms(&learning_scenario(), &UniformRandom) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("evaluation failed: {e}")),
    };
    let wins = trained.iter().zip(&random).filter(|(t, r)| t.summary.mean_return > r.summary.mean_return).count();
    let (w_t, w_r) = (mean(trained, |s| s.w_avg), mean(&random, |s| s.w_avg));
    let limit = Duration::from_secs(1800);
    let pass = wins >= 9 && w_t <= w_r && elapsed < limit;
    let per_seed: Vec<String> = trained
        .iter()
        .zip(&random)
        .map(|(t, r)| format!("{}:{:+.3}", t.seed, t.summary.mean_return - r.summary.mean_return))
        .collect();
    verdict(
        pass,
        format!(
            "return beats random in {wins}/10 seeds (need 9); W_avg {w_t:.2} s vs random {w_r:.2} s; \
             return gaps [{}]; {}",
            per_seed.join(" "),
            within(limit, elapsed)
        ),
    )
}

fn paired(
    label: &str,
    on: &Result<Vec<Arm>, String>,
    off: &Result<Vec<Arm>, String>,
    metric: impl Fn(&ArmSummary) -> f64,
    need_sign_test: bool,
) -> Verdict {
    let (on, off) = match (on, off) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return verdict(false, format!("training failed: {e}")),
    };
    let wins = on.iter().zip(off).filter(|(a, b)| metric(&a.summary) < metric(&b.summary)).count();
    let ties = on.iter().zip(off).filter(|(a, b)| metric(&a.summary) == metric(&b.summary)).count();
    let (m_on, m_off) = (mean(on, &metric), mean(off, &metric));
    let p = sign_test_p(wins, on.len());
    let pass = m_on < m_off && (!need_sign_test || p < 0.1);
    verdict(
        pass,
        format!("{label}: {m_on:.4} with the penalty vs {m_off:.4} without; lower in {wins}/10 seeds ({ties} ties), sign test p = {p:.3}"),
    )
}

// ---------------------------------------------------------------- 10

fn routing_direction() -> Verdict {
    let s = match corridor_scenario(0.8) {
        Ok(s) => s,
        Err(e) => return verdict(false, format!("{e:#}")),
    };
    let h = HeuristicPolicy { theta_go: s.params.theta_go, patience: s.params.patience };
    let runs: Result<Vec<(f64, f64)>, String> = (0..SEEDS)
        .into_par_iter()
        .map(|seed| {
            let mut out = [0.0; 2];
            for (k, routing) in [false, true].into_iter().enumerate() {
                let sc = Scenario { routing, ..s.clone() };
                let (net, cfg) = sc.build().map_err(|e| format!("{e:#}"))?;
                let (report, _) = Simulation::new(Arc::clone(&net), cfg, seed)
                    .and_then(|sim| sim.run(&mut controller(&h, false)))
                    .map_err(|e| format!("seed {seed}: {e}"))?;
                out[k] = report.mean_total_shortage.ok_or("no coordinator samples in the window")?;
            }
            Ok((out[0], out[1]))
        })
        .collect();
    let runs = match runs {
        Ok(r) => r,
        Err(e) => return verdict(false, e),
    };
    let n = runs.len() as f64;
    let off = runs.iter().map(|r| r.0).sum::<f64>() / n;
    let on = runs.iter().map(|r| r.1).sum::<f64>() / n;
    let reduction = 1.0 - on / off;
    let wins = runs.iter().filter(|r| r.1 < r.0).count();
    verdict(
        reduction >= 0.10,
        format!(
            "mean total shortage {off:.3} off vs {on:.3} on, reduction {:.1}% (need >= 10%); lower in {wins}/10 seeds",
            100.0 * reduction
        ),
    )
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let on = |k: usize| wanted.is_empty() || wanted.contains(&k);
    let mut results: Vec<(usize, &str, Verdict, Duration)> = Vec::new();
    let mut record = |k: usize, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        if on(k) {
            let t = Instant::now();
            let v = f();
            let el = t.elapsed();
            println!("[{}] {k:>2} {name}: {} ({:.1} s)", if v.pass { "PASS" } else { "FAIL" }, v.detail, el.as_secs_f64());
            results.push((k, name, v, el));
        }
    };

    record(1, "formula oracles", &mut formula_oracles);
    record(2, "shortest-path oracle", &mut shortest_path_oracle);
    if on(3) || on(4) {
        let t = Instant::now();
        let runs = safety_traces();
        let elapsed = t.elapsed();
        record(3, "zero interior conflicts", &mut || zero_collisions(&runs, elapsed));
        record(4, "detour bound and reroute spacing", &mut || detour_bound(&runs));
    }
    record(5, "determinism", &mut determinism);
    record(6, "metric golden fixtures", &mut golden_fixtures);

    if on(7) || on(8) {
        let t = Instant::now();
        let base = train_and_evaluate(&learning_scenario()).map(|r| r.0);
        let elapsed = t.elapsed();
        record(7, "learning beats random", &mut || learning(&base, elapsed));
        record(8, "threat penalty lowers conflict rate", &mut || {
            let mut s = learning_scenario();
            s.params.lambda_threat = 0.0;
            let off = train_and_evaluate(&s).map(|r| r.0);
            paired("conflict rate", &base, &off, |a| a.c_rate, true)
        });
    }
    record(9, "parity penalty lowers starvation", &mut || {
        let s = parity_scenario();
        let on = train_and_evaluate(&s).map(|r| r.0);
        let mut s_off = s.clone();
        s_off.params.lambda_parity = 0.0;
        let off = train_and_evaluate(&s_off).map(|r| r.0);
        paired("mean W_max (s)", &on, &off, |a| a.w_max, false)
    });
    record(10, "routing reduces corridor shortage", &mut routing_direction);

    let passed = results.iter().filter(|r| r.2.pass).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
