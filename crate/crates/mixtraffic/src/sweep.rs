//! Penetration-rate sweeps: one run per (rate, seed) cell, aggregated into a
//! wide table with one column per rate.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use mixtraffic_core::agent::{controller, Policy};
use mixtraffic_core::metrics::MetricsReport;
use mixtraffic_core::sim::Simulation;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::output::{metrics_json, to_json, write_atomic};
use crate::scenario::Scenario;

/// Parses `start:end:step` (inclusive) or a comma list.
pub fn parse_rates(s: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let rates: Vec<f64> = match parts.as_slice() {
        [start, end, step] => {
            let (a, b, h): (f64, f64, f64) = (start.trim().parse()?, end.trim().parse()?, step.trim().parse()?);
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(h > 0.0) || b < a {
                bail!("rate range needs step > 0 and end >= start: {s:?}");
            }
            let n = ((b - a) / h + 1e-9).floor() as usize;
            (0..=n).map(|i| tidy(a + i as f64 * h)).collect()
        }
        [list] => list.split(',').map(|x| x.trim().parse::<f64>().map(tidy)).collect::<Result<_, _>>()?,
        _ => bail!("rates must be start:end:step or a comma list, got {s:?}"),
    };
    if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
        bail!("rates must lie in [0, 1]");
    }
    Ok(rates)
}

fn tidy(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

pub fn rate_label(r: f64) -> String {
    format!("{}", tidy(r))
}

/// One row of `runs.csv`. Metric columns are empty for failed runs and for
/// metrics that are undefined in a run (e.g. no Go decisions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub rv_rate: f64,
    pub seed: u64,
    pub routing: bool,
    pub policy: String,
    pub status: String,
    pub error: String,
    pub w_avg: Option<f64>,
    pub theta_int: Option<f64>,
    pub theta_net: Option<f64>,
    pub d_avg: Option<f64>,
    pub w_max: Option<f64>,
    pub w_p99: Option<f64>,
    pub c_rate: Option<f64>,
    pub f_avg: Option<f64>,
    pub spawned: Option<f64>,
    pub completed: Option<f64>,
    pub interior_violations: Option<f64>,
    pub reroutes_adopted: Option<f64>,
    pub mean_total_shortage: Option<f64>,
}

impl crate::output::CsvRow for RunRow {
    const HEADER: &'static [&'static str] = &[
        "rv_rate",
        "seed",
        "routing",
        "policy",
        "status",
        "error",
        "w_avg",
        "theta_int",
        "theta_net",
        "d_avg",
        "w_max",
        "w_p99",
        "c_rate",
        "f_avg",
        "spawned",
        "completed",
        "interior_violations",
        "reroutes_adopted",
        "mean_total_shortage",
    ];
}

pub const OK: &str = "ok";
pub const FAILED: &str = "failed";

type Getter = fn(&RunRow) -> Option<f64>;

/// Aggregated metrics, in output order.
pub const METRICS: &[(&str, Getter)] = &[
    ("w_avg", |r| r.w_avg),
    ("theta_int", |r| r.theta_int),
    ("theta_net", |r| r.theta_net),
    ("d_avg", |r| r.d_avg),
    ("w_max", |r| r.w_max),
    ("w_p99", |r| r.w_p99),
    ("c_rate", |r| r.c_rate),
    ("f_avg", |r| r.f_avg),
    ("spawned", |r| r.spawned),
    ("completed", |r| r.completed),
    ("interior_violations", |r| r.interior_violations),
    ("reroutes_adopted", |r| r.reroutes_adopted),
    ("mean_total_shortage", |r| r.mean_total_shortage),
];

impl RunRow {
    fn blank(rv_rate: f64, seed: u64, routing: bool, policy: &str) -> Self {
        RunRow {
            rv_rate,
            seed,
            routing,
            policy: policy.to_string(),
            status: OK.to_string(),
            error: String::new(),
            w_avg: None,
            theta_int: None,
            theta_net: None,
            d_avg: None,
            w_max: None,
            w_p99: None,
            c_rate: None,
            f_avg: None,
            spawned: None,
            completed: None,
            interior_violations: None,
            reroutes_adopted: None,
            mean_total_shortage: None,
        }
    }

    pub fn from_report(rv_rate: f64, seed: u64, routing: bool, policy: &str, m: &MetricsReport) -> Self {
        RunRow {
            w_avg: m.w_avg,
            theta_int: Some(m.theta_int),
            theta_net: Some(m.theta_net),
            d_avg: m.d_avg,
            w_max: Some(m.w_max),
            w_p99: m.w_p99,
            c_rate: m.c_rate,
            f_avg: m.f_avg,
            spawned: Some(m.spawned as f64),
            completed: Some(m.completed as f64),
            interior_violations: Some(m.interior_violations as f64),
            reroutes_adopted: Some(m.reroutes_adopted as f64),
            mean_total_shortage: m.mean_total_shortage,
            ..RunRow::blank(rv_rate, seed, routing, policy)
        }
    }

    pub fn failed(rv_rate: f64, seed: u64, routing: bool, policy: &str, error: String) -> Self {
        RunRow { status: FAILED.to_string(), error, ..RunRow::blank(rv_rate, seed, routing, policy) }
    }

    pub fn is_ok(&self) -> bool {
        self.status == OK
    }
}

/// Runs `scenario` at one rate and seed.
pub fn run_one<P: Policy + ?Sized>(scenario: &Scenario, policy: &P, rv_rate: f64, seed: u64) -> anyhow::Result<MetricsReport> {
    let s = Scenario { rv_rate, ..scenario.clone() };
    let (net, cfg) = s.build()?;
    let (report, _) = Simulation::new(net, cfg, seed)?.run(&mut controller(policy, false))?;
    Ok(report)
}

/// Runs every (rate, seed) cell in parallel. A failing cell becomes a
/// `failed` row and the sweep carries on. When `cell_dir` is given each
/// cell's metrics (or error) are written there as soon as the cell ends.
/// Rows come back sorted by rate, then seed.
pub fn sweep<P: Policy + Sync + ?Sized>(
    scenario: &Scenario,
    policy: &P,
    policy_name: &str,
    rates: &[f64],
    seeds: &[u64],
    cell_dir: Option<&Path>,
) -> anyhow::Result<Vec<RunRow>> {
    if rates.is_empty() || seeds.is_empty() {
        bail!("a sweep needs at least one rate and one seed");
    }
    let cells: Vec<(f64, u64)> = rates.iter().flat_map(|&r| seeds.iter().map(move |&s| (r, s))).collect();
    let mut rows = cells
        .par_iter()
        .map(|&(rate, seed)| -> anyhow::Result<RunRow> {
            let result = run_one(scenario, policy, rate, seed);
            let row = match &result {
                Ok(m) => RunRow::from_report(rate, seed, scenario.routing, policy_name, m),
                Err(e) => RunRow::failed(rate, seed, scenario.routing, policy_name, format!("{e:#}")),
            };
            if let Some(dir) = cell_dir {
                let path = dir.join(format!("rv{}_seed{}.json", rate_label(rate), seed));
                let body = match &result {
                    Ok(m) => metrics_json(m)?,
                    Err(e) => to_json(&BTreeMap::from([("error", format!("{e:#}"))]))?,
                };
                write_atomic(&path, body.as_bytes())?;
            }
            Ok(row)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    sort_rows(&mut rows);
    Ok(rows)
}

pub fn sort_rows(rows: &mut [RunRow]) {
    rows.sort_by(|a, b| a.rv_rate.total_cmp(&b.rv_rate).then(a.seed.cmp(&b.seed)).then(a.routing.cmp(&b.routing)));
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub metric: String,
    pub statistic: &'static str,
    /// One entry per rate column; `None` when no run defined the metric.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub rates: Vec<f64>,
    pub rows: Vec<AggregateRow>,
}

fn mean_std(values: &mut [f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    // fixed summation order whatever order the runs arrived in
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std =
        if values.len() < 2 { 0.0 } else { (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt() };
    Some((mean, std))
}

/// Per rate: mean, sample standard deviation (0 for a single run) and count
/// of every metric over successful runs, plus ok/failed run counts.
pub fn aggregate(rows: &[RunRow]) -> Aggregate {
    let mut by_rate: BTreeMap<u64, (f64, Vec<&RunRow>)> = BTreeMap::new();
    for r in rows {
        by_rate.entry(tidy(r.rv_rate).to_bits()).or_insert((tidy(r.rv_rate), Vec::new())).1.push(r);
    }
    let mut groups: Vec<(f64, Vec<&RunRow>)> = by_rate.into_values().collect();
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rates: Vec<f64> = groups.iter().map(|g| g.0).collect();

    let mut out = Vec::new();
    let count = |ok: bool| -> Vec<Option<f64>> {
        groups.iter().map(|(_, g)| Some(g.iter().filter(|r| r.is_ok() == ok).count() as f64)).collect()
    };
    out.push(AggregateRow { metric: "runs".into(), statistic: "ok", values: count(true) });
    out.push(AggregateRow { metric: "runs".into(), statistic: "failed", values: count(false) });
    for (name, get) in METRICS {
        let stats: Vec<Option<(f64, f64, usize)>> = groups
            .iter()
            .map(|(_, g)| {
                let mut v: Vec<f64> = g.iter().filter(|r| r.is_ok()).filter_map(|r| get(r)).collect();
                let n = v.len();
                mean_std(&mut v).map(|(m, s)| (m, s, n))
            })
            .collect();
        out.push(AggregateRow {
            metric: name.to_string(),
            statistic: "mean",
            values: stats.iter().map(|s| s.map(|s| s.0)).collect(),
        });
        out.push(AggregateRow {
            metric: name.to_string(),
            statistic: "std",
            values: stats.iter().map(|s| s.map(|s| s.1)).collect(),
        });
        out.push(AggregateRow {
            metric: name.to_string(),
            statistic: "n",
            values: stats.iter().map(|s| Some(s.map_or(0.0, |s| s.2 as f64))).collect(),
        });
    }
    Aggregate { rates, rows: out }
}

impl Aggregate {
    pub fn get(&self, metric: &str, statistic: &str) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.metric == metric && r.statistic == statistic)
    }

    /// `metric,statistic,<rate>,<rate>,...`
    pub fn to_csv(&self) -> anyhow::Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["metric".to_string(), "statistic".to_string()];
        header.extend(self.rates.iter().map(|&r| rate_label(r)));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.metric.clone(), row.statistic.to_string()];
            rec.extend(row.values.iter().map(|v| v.map(|x| format!("{x}")).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}

pub fn runs_csv(rows: &[RunRow]) -> anyhow::Result<String> {
    crate::output::csv_string(rows.iter())
}

pub fn read_runs(path: &Path) -> anyhow::Result<Vec<RunRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = r.deserialize().collect::<Result<Vec<RunRow>, _>>().with_context(|| format!("parsing {}", path.display()))?;
    Ok(rows)
}
