//! Evaluation metrics over the steady-state measurement window.
//!
//! Every metric is a pure function of recorded trace events and only looks
//! at events with `start <= t < end`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dynamics::{VehicleId, STOP_THRESHOLD};
use crate::net::IntersectionId;
use crate::{Action, VehicleClass};

/// Wait above which an approach counts as starving (s).
pub const STARVATION_THRESHOLD: f64 = 60.0;
/// Throughput is reported per this many seconds.
pub const THROUGHPUT_PERIOD: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Window { start, end }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// One vehicle-step inside a control zone (approach edge within the radius
/// or a junction interior). `t` is the step start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneSample {
    pub t: f64,
    pub vehicle: VehicleId,
    /// Speed after the step.
    pub speed: f64,
    pub accel: f64,
    pub dt: f64,
}

impl ZoneSample {
    pub fn stopped(&self) -> bool {
        self.speed < STOP_THRESHOLD
    }
}

/// A vehicle leaving an intersection interior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub t: f64,
    pub intersection: IntersectionId,
}

/// A finished trip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub vehicle: VehicleId,
    pub class: VehicleClass,
    pub entry_time: f64,
    pub finish_time: f64,
    /// Σ edge length / speed limit over the driven route.
    pub free_flow_time: f64,
}

/// One policy decision by a queue-leading RV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub t: f64,
    pub intersection: IntersectionId,
    pub vehicle: VehicleId,
    pub action: Action,
    pub overridden: bool,
    pub threat: f64,
}

/// Per intersection-approach mean wait of currently queued vehicles, one
/// value per step (0 when nobody is queued).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ApproachWaitSeries {
    pub dt: f64,
    pub times: Vec<f64>,
    /// `series[a][i]` belongs to `times[i]`.
    pub series: Vec<Vec<f64>>,
}

impl ApproachWaitSeries {
    pub fn new(approaches: usize, dt: f64) -> Self {
        ApproachWaitSeries { dt, times: Vec::new(), series: (0..approaches).map(|_| Vec::new()).collect() }
    }

    pub fn push(&mut self, t: f64, values: &[f64]) {
        debug_assert_eq!(values.len(), self.series.len());
        self.times.push(t);
        for (s, v) in self.series.iter_mut().zip(values) {
            s.push(*v);
        }
    }
}

/// Surrogate instantaneous fuel rate (ml/s):
/// `max(0, idle + linear·v + cubic·v³ + accel·max(0, a)·v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuelModel {
    pub idle: f64,
    pub linear: f64,
    pub cubic: f64,
    pub accel: f64,
}

impl Default for FuelModel {
    fn default() -> Self {
        FuelModel { idle: 0.35, linear: 0.045, cubic: 0.000_12, accel: 0.09 }
    }
}

impl FuelModel {
    pub fn rate(&self, speed: f64, accel: f64) -> f64 {
        (self.idle + self.linear * speed + self.cubic * speed * speed * speed + self.accel * accel.max(0.0) * speed).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub window: Window,
    /// Mean in-zone stopped time per vehicle (s).
    pub w_avg: Option<f64>,
    /// Interior exits per intersection per 500 s.
    pub theta_int: f64,
    /// Completed trips per 500 s.
    pub theta_net: f64,
    /// Mean delay over free-flow of completed trips (s).
    pub d_avg: Option<f64>,
    /// Longest starvation run (s).
    pub w_max: f64,
    /// 99th percentile of per-vehicle in-zone waits (s).
    pub w_p99: Option<f64>,
    /// Overridden share of RV Go decisions.
    pub c_rate: Option<f64>,
    /// Mean surrogate fuel rate over in-zone vehicle-steps (ml/s).
    pub f_avg: Option<f64>,
    pub spawned: usize,
    pub completed: usize,
    pub interior_violations: usize,
    pub reroutes_adopted: usize,
    /// Time-average of Σ_e Ŝ(e) over coordinator updates in the window.
    pub mean_total_shortage: Option<f64>,
}

fn zone_waits(samples: &[ZoneSample], window: Window) -> BTreeMap<VehicleId, f64> {
    let mut waits = BTreeMap::new();
    for s in samples.iter().filter(|s| window.contains(s.t)) {
        let w = waits.entry(s.vehicle).or_insert(0.0);
        if s.stopped() {
            *w += s.dt;
        }
    }
    waits
}

/// Mean over vehicles seen in a control zone during the window of their
/// stopped time there; `None` when no vehicle was seen.
pub fn avg_wait(samples: &[ZoneSample], window: Window) -> Option<f64> {
    let waits = zone_waits(samples, window);
    if waits.is_empty() {
        None
    } else {
        Some(waits.values().sum::<f64>() / waits.len() as f64)
    }
}

/// `(Θ_int, Θ_net)` scaled to vehicles per 500 s.
pub fn throughput(crossings: &[Crossing], completions: &[Completion], intersections: usize, window: Window) -> (f64, f64) {
    if window.is_empty() {
        return (0.0, 0.0);
    }
    let scale = THROUGHPUT_PERIOD / window.len();
    let crossed = crossings.iter().filter(|c| window.contains(c.t)).count() as f64;
    let theta_int = if intersections == 0 { 0.0 } else { crossed / intersections as f64 * scale };
    let done = completions.iter().filter(|c| window.contains(c.finish_time)).count() as f64;
    (theta_int, done * scale)
}

/// Mean of `actual travel time − free-flow time` over trips finished in the window.
pub fn avg_delay(completions: &[Completion], window: Window) -> Option<f64> {
    let delays: Vec<f64> = completions
        .iter()
        .filter(|c| window.contains(c.finish_time))
        .map(|c| (c.finish_time - c.entry_time) - c.free_flow_time)
        .collect();
    if delays.is_empty() {
        None
    } else {
        Some(delays.iter().sum::<f64>() / delays.len() as f64)
    }
}

/// Longest run (s) over all approaches of consecutive in-window steps whose
/// mean wait exceeds 60 s.
pub fn max_starvation(series: &ApproachWaitSeries, window: Window) -> f64 {
    let mut best = 0usize;
    for s in &series.series {
        let mut run = 0usize;
        for (t, w) in series.times.iter().zip(s) {
            if !window.contains(*t) {
                run = 0;
                continue;
            }
            if *w > STARVATION_THRESHOLD {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
    }
    best as f64 * series.dt
}

/// Nearest-rank percentile (`p` in (0, 100]).
pub fn nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = libm::ceil(p / 100.0 * v.len() as f64) as usize;
    Some(v[rank.clamp(1, v.len()) - 1])
}

/// 99th percentile of per-vehicle in-zone waits.
pub fn p99_wait(samples: &[ZoneSample], window: Window) -> Option<f64> {
    let waits: Vec<f64> = zone_waits(samples, window).into_values().collect();
    nearest_rank(&waits, 99.0)
}

/// Overridden Go decisions / all Go decisions; `None` for 0/0.
pub fn conflict_rate(log: &[ControlRecord], window: Window) -> Option<f64> {
    let goes: Vec<&ControlRecord> = log.iter().filter(|r| window.contains(r.t) && r.action == Action::Go).collect();
    if goes.is_empty() {
        return None;
    }
    Some(goes.iter().filter(|r| r.overridden).count() as f64 / goes.len() as f64)
}

/// Mean surrogate fuel rate over in-zone vehicle-steps.
pub fn fuel_avg(samples: &[ZoneSample], model: &FuelModel, window: Window) -> Option<f64> {
    let (sum, n) = samples
        .iter()
        .filter(|s| window.contains(s.t))
        .fold((0.0, 0usize), |(sum, n), s| (sum + model.rate(s.speed, s.accel), n + 1));
    if n == 0 {
        None
    } else {
        Some(sum / n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn w() -> Window {
        Window::new(500.0, 1000.0)
    }

    fn sample(t: f64, vehicle: VehicleId, speed: f64) -> ZoneSample {
        ZoneSample { t, vehicle, speed, accel: 0.0, dt: 1.0 }
    }

    #[test]
    fn avg_wait_cases() {
        assert_eq!(avg_wait(&[], w()), None);
        let moving: Vec<_> = (0..10).map(|i| sample(500.0 + i as f64, 1, 5.0)).collect();
        assert_eq!(avg_wait(&moving, w()), Some(0.0));
        let mut s = Vec::new();
        for i in 0..4 {
            s.push(sample(600.0 + i as f64, 1, 0.0));
        }
        for i in 0..6 {
            s.push(sample(700.0 + i as f64, 2, 0.0));
        }
        assert_eq!(avg_wait(&s, w()), Some(5.0));
    }

    #[test]
    fn throughput_cases() {
        assert_eq!(throughput(&[], &[], 2, w()), (0.0, 0.0));
        let c: Vec<_> = (0..10).map(|i| Crossing { t: 510.0 + i as f64, intersection: 0 }).collect();
        assert_eq!(throughput(&c, &[], 2, w()).0, 5.0);
    }

    #[test]
    fn delay_hand_subtraction() {
        let c = Completion { vehicle: 1, class: VehicleClass::Hv, entry_time: 600.0, finish_time: 615.0, free_flow_time: 10.0 };
        assert_eq!(avg_delay(&[c], w()), Some(5.0));
        let free = Completion { finish_time: 610.0, ..c };
        assert_eq!(avg_delay(&[free], w()), Some(0.0));
    }

    #[test]
    fn starvation_runs() {
        let mut s = ApproachWaitSeries::new(1, 1.0);
        for t in 500..1000 {
            s.push(t as f64, &[30.0]);
        }
        assert_eq!(max_starvation(&s, w()), 0.0);
        let mut s = ApproachWaitSeries::new(1, 1.0);
        for t in 500..1000 {
            s.push(t as f64, &[61.0]);
        }
        assert_eq!(max_starvation(&s, w()), 500.0);
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(|x| x as f64).collect();
        assert_eq!(nearest_rank(&v, 99.0), Some(99.0));
        assert_eq!(nearest_rank(&[10.0; 100], 99.0), Some(10.0));
        assert_eq!(nearest_rank(&[], 99.0), None);
    }

    #[test]
    fn conflict_rate_ratio() {
        let rec = |overridden, action| ControlRecord { t: 600.0, intersection: 0, vehicle: 1, action, overridden, threat: 0.0 };
        let mut log = vec![rec(false, Action::Go); 17];
        log.extend(vec![rec(true, Action::Go); 3]);
        log.push(rec(false, Action::Stop));
        assert_eq!(conflict_rate(&log, w()), Some(0.15));
        assert_eq!(conflict_rate(&[rec(false, Action::Stop)], w()), None);
    }

    #[test]
    fn fuel_surrogate() {
        let m = FuelModel::default();
        assert_eq!(m.rate(0.0, 0.0), m.idle);
        assert!(m.rate(10.0, 2.0) >= m.rate(10.0, 1.0));
        assert!(m.rate(10.0, -3.0) == m.rate(10.0, 0.0));
    }
}
