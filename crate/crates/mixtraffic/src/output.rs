//! Output directory, atomic writes and the CSV/JSON record layouts.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use mixtraffic_core::agent::CurvePoint;
use mixtraffic_core::metrics::MetricsReport;
use mixtraffic_core::sim::RunTrace;
use serde::Serialize;

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "MIXTRAFFIC_OUTPUT";

/// `--out` if given, else `$MIXTRAFFIC_OUTPUT`, else `./out`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from("out"),
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn metrics_json(report: &MetricsReport) -> anyhow::Result<String> {
    to_json(report)
}

/// A CSV row type with a fixed header, so empty files still carry one.
pub trait CsvRow: Serialize {
    const HEADER: &'static [&'static str];
}

impl<T: CsvRow> CsvRow for &T {
    const HEADER: &'static [&'static str] = T::HEADER;
}

impl CsvRow for CurvePoint {
    const HEADER: &'static [&'static str] = &["iteration", "epsilon", "mean_return", "decisions", "vehicles"];
}

pub fn csv_string<T: CsvRow>(rows: impl IntoIterator<Item = T>) -> anyhow::Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(T::HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn write_csv<T: CsvRow>(path: &Path, rows: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    write_atomic(path, csv_string(rows)?.as_bytes())
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryCsv {
    pub time: f64,
    pub id: u64,
    pub class: &'static str,
    pub edge: usize,
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
}

impl CsvRow for TrajectoryCsv {
    const HEADER: &'static [&'static str] = &["time", "id", "class", "edge", "position", "speed", "accel"];
}

#[derive(Debug, Clone, Serialize)]
pub struct ControlCsv {
    pub time: f64,
    pub intersection: usize,
    pub vehicle: u64,
    pub action: &'static str,
    pub overridden: bool,
    pub threat: f64,
}

impl CsvRow for ControlCsv {
    const HEADER: &'static [&'static str] = &["time", "intersection", "vehicle", "action", "overridden", "threat"];
}

#[derive(Debug, Clone, Serialize)]
pub struct RoutingCsv {
    pub step: u64,
    pub vehicle: u64,
    pub eligible: bool,
    pub gated: bool,
    pub candidate_cost: Option<f64>,
    pub baseline_cost: f64,
    pub adopted: bool,
}

impl CsvRow for RoutingCsv {
    const HEADER: &'static [&'static str] =
        &["step", "vehicle", "eligible", "gated", "candidate_cost", "baseline_cost", "adopted"];
}

#[derive(Debug, Clone, Serialize)]
pub struct RewardCsv {
    pub time: f64,
    pub vehicle: u64,
    pub action: &'static str,
    pub ego: f64,
    pub parity: f64,
    pub threat: f64,
    pub conflict: bool,
    pub base: f64,
    pub total: f64,
}

impl CsvRow for RewardCsv {
    const HEADER: &'static [&'static str] =
        &["time", "vehicle", "action", "ego", "parity", "threat", "conflict", "base", "total"];
}

#[derive(Debug, Clone, Serialize)]
pub struct CostMapCsv {
    pub time: f64,
    pub total_shortage: f64,
    pub generation: Option<u64>,
    pub edge: Option<usize>,
    pub cost: Option<f64>,
}

impl CsvRow for CostMapCsv {
    const HEADER: &'static [&'static str] = &["time", "total_shortage", "generation", "edge", "cost"];
}

/// Which trace files to write next to the metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TraceDumps {
    pub trajectories: bool,
    pub control: bool,
    pub routing: bool,
    pub rewards: bool,
    pub cost_maps: bool,
}

impl TraceDumps {
    pub fn any(&self) -> bool {
        self.trajectories || self.control || self.routing || self.rewards || self.cost_maps
    }
}

pub fn trajectory_rows(trace: &RunTrace) -> impl Iterator<Item = TrajectoryCsv> + '_ {
    trace.trajectories.iter().map(|r| TrajectoryCsv {
        time: r.t,
        id: r.vehicle,
        class: r.class.as_str(),
        edge: r.edge,
        position: r.position,
        speed: r.speed,
        accel: r.accel,
    })
}

pub fn control_rows(trace: &RunTrace) -> impl Iterator<Item = ControlCsv> + '_ {
    trace.control_log.iter().map(|r| ControlCsv {
        time: r.t,
        intersection: r.intersection,
        vehicle: r.vehicle,
        action: r.action.as_str(),
        overridden: r.overridden,
        threat: r.threat,
    })
}

pub fn routing_rows(trace: &RunTrace, dt: f64) -> impl Iterator<Item = RoutingCsv> + '_ {
    trace.routing_log.iter().map(move |r| RoutingCsv {
        step: (r.t / dt).round() as u64,
        vehicle: r.vehicle,
        eligible: r.eligible,
        gated: r.activated,
        candidate_cost: r.candidate_cost,
        baseline_cost: r.baseline_cost,
        adopted: r.adopted,
    })
}

pub fn reward_rows(trace: &RunTrace) -> impl Iterator<Item = RewardCsv> + '_ {
    trace.rewards.iter().map(|r| RewardCsv {
        time: r.t,
        vehicle: r.vehicle,
        action: r.action.as_str(),
        ego: r.reward.ego,
        parity: r.reward.parity,
        threat: r.reward.threat,
        conflict: r.reward.conflict,
        base: r.reward.base,
        total: r.reward.total,
    })
}

/// One row per coordinator update without a broadcast, one row per edge
/// for updates that broadcast a cost map.
pub fn cost_map_rows(trace: &RunTrace) -> Vec<CostMapCsv> {
    let mut rows = Vec::new();
    for s in &trace.shortage_log {
        match &s.cost_map {
            None => rows.push(CostMapCsv { time: s.t, total_shortage: s.total, generation: None, edge: None, cost: None }),
            Some(map) => rows.extend(map.costs.iter().enumerate().map(|(e, &c)| CostMapCsv {
                time: s.t,
                total_shortage: s.total,
                generation: Some(map.generation),
                edge: Some(e),
                cost: Some(c),
            })),
        }
    }
    rows
}

/// Writes `metrics.json` and the selected trace CSVs into `dir`.
pub fn write_run(dir: &Path, report: &MetricsReport, trace: &RunTrace, dumps: TraceDumps, dt: f64) -> anyhow::Result<()> {
    write_atomic(&dir.join("metrics.json"), metrics_json(report)?.as_bytes())?;
    if dumps.trajectories {
        write_csv(&dir.join("trajectories.csv"), trajectory_rows(trace))?;
    }
    if dumps.control {
        write_csv(&dir.join("control_log.csv"), control_rows(trace))?;
    }
    if dumps.routing {
        write_csv(&dir.join("routing_log.csv"), routing_rows(trace, dt))?;
    }
    if dumps.rewards {
        write_csv(&dir.join("rewards.csv"), reward_rows(trace))?;
    }
    if dumps.cost_maps {
        write_csv(&dir.join("cost_maps.csv"), cost_map_rows(trace))?;
    }
    Ok(())
}
