//! Discrete-time simulation engine.
//!
//! Step order (fixed; changing it changes every trace):
//!
//! 1. spawn arrivals and release backlogged vehicles onto entry edges;
//! 2. coordinator update every `update_interval` steps (coverage is always
//!    measured; cost maps are only broadcast when routing is enabled);
//! 3. reroute considerations for every RV after a broadcast;
//! 4. policy decisions for queue-leading RVs inside control zones (HV heads
//!    always request passage);
//! 5. safety override and grant resolution per intersection;
//! 6. reward computation for every RV decision;
//! 7. IDM / action integration;
//! 8. metric event capture and the interior-conflict monitor.
//!
//! Randomness comes from named streams (`spawn`, `policy`, `routing`), so
//! toggling routing never perturbs the demand realisation.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::control::{
    apply_action, build_observation, build_occupancy, resolve_requests, ControlZoneConfig, GrantTable, Observation, Request,
    ZoneVehicle,
};
use crate::dynamics::{
    clamp_for_step, idm_accel, integrate, Demand, IdmParams, Place, Spawner, VehicleId, VehicleState, VEHICLE_LENGTH,
};
use crate::metrics::{
    self, ApproachWaitSeries, Completion, ControlRecord, Crossing, FuelModel, MetricsReport, Window, ZoneSample,
};
use crate::net::{EdgeId, MovementId, RoadNetwork};
use crate::reward::{decision_reward, RewardBreakdown, RewardWeights};
use crate::rng::{self, SimRng};
use crate::routing::{apply_reroute, consider_reroute, Coordinator, CoordinatorConfig, CostMap, RerouteConfig, RerouteOutcome};
use crate::{Action, Error, Result, VehicleClass, APPROACH_SLOTS};

/// Gap kept to any obstacle by the kinematic guard (m).
const GUARD_MARGIN: f64 = 0.5;
/// How far ahead leaders are searched (m).
const LOOKAHEAD: f64 = 250.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub demands: Vec<Demand>,
    pub rv_rate: f64,
    /// Seconds.
    pub horizon: f64,
    pub window: Window,
    pub dt: f64,
    pub routing: bool,
    pub idm: IdmParams,
    pub zone: ControlZoneConfig,
    pub reward: RewardWeights,
    /// `None` derives the defaults from `rv_rate`.
    pub coordinator: Option<CoordinatorConfig>,
    pub reroute: RerouteConfig,
    pub fuel: FuelModel,
    pub record_trajectories: bool,
    pub record_rewards: bool,
}

impl SimConfig {
    pub fn new(demands: Vec<Demand>, rv_rate: f64) -> Self {
        SimConfig {
            demands,
            rv_rate,
            horizon: 1000.0,
            window: Window::new(500.0, 1000.0),
            dt: 1.0,
            routing: true,
            idm: IdmParams::default(),
            zone: ControlZoneConfig::default(),
            reward: RewardWeights::default(),
            coordinator: None,
            reroute: RerouteConfig::default(),
            fuel: FuelModel::default(),
            record_trajectories: false,
            record_rewards: false,
        }
    }

    pub fn coordinator_config(&self) -> CoordinatorConfig {
        self.coordinator.unwrap_or_else(|| CoordinatorConfig::for_rv_rate(self.rv_rate))
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rv_rate) {
            return Err(Error::Config("rv_rate must lie in [0, 1]".into()));
        }
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::Config("dt and horizon must be positive".into()));
        }
        if self.window.start < 0.0 || self.window.end > self.horizon || self.window.is_empty() {
            return Err(Error::Config("measurement window must be a non-empty part of [0, horizon]".into()));
        }
        self.idm.validate()?;
        self.zone.validate()?;
        self.reward.validate()?;
        self.coordinator_config().validate()?;
        self.reroute.validate()?;
        Ok(())
    }

    pub fn steps(&self) -> usize {
        libm::round(self.horizon / self.dt) as usize
    }
}

/// One reroute consideration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingRecord {
    pub t: f64,
    pub vehicle: VehicleId,
    pub eligible: bool,
    /// Passed the activation gate.
    pub activated: bool,
    pub candidate_cost: Option<f64>,
    pub baseline_cost: f64,
    pub adopted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub vehicle: VehicleId,
    pub class: VehicleClass,
    pub edge: EdgeId,
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRow {
    pub t: f64,
    pub vehicle: VehicleId,
    pub action: Action,
    pub reward: RewardBreakdown,
}

/// Snapshot of the coordinator at one update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortageRecord {
    pub t: f64,
    pub total: f64,
    pub cost_map: Option<CostMap>,
}

/// A step where conflicting movements shared an interior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteriorViolation {
    pub t: f64,
    pub intersection: usize,
    pub vehicles: (VehicleId, VehicleId),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunTrace {
    pub zone_samples: Vec<ZoneSample>,
    pub crossings: Vec<Crossing>,
    pub completions: Vec<Completion>,
    pub control_log: Vec<ControlRecord>,
    pub routing_log: Vec<RoutingRecord>,
    pub wait_series: ApproachWaitSeries,
    pub shortage_log: Vec<ShortageRecord>,
    pub trajectories: Vec<TrajectoryRow>,
    pub rewards: Vec<RewardRow>,
    pub violations: Vec<InteriorViolation>,
    pub spawned: usize,
    /// Spawn time of every released vehicle, by id.
    pub spawn_times: Vec<(VehicleId, f64)>,
}

/// One RV decision, with everything a learner needs.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub t: f64,
    pub vehicle: VehicleId,
    pub intersection: usize,
    pub observation: Observation,
    /// What the policy chose.
    pub action: Action,
    /// What was executed after the safety override.
    pub executed: Action,
    pub overridden: bool,
    pub reward: RewardBreakdown,
}

impl DecisionRecord {
    /// The vehicle obtained passage and makes no further decisions here.
    pub fn is_terminal(&self) -> bool {
        self.executed == Action::Go
    }
}

/// A Stop/Go policy as seen by the engine.
pub trait Controller {
    fn decide(&mut self, obs: &Observation, rng: &mut SimRng) -> Action;
}

impl<F: FnMut(&Observation, &mut SimRng) -> Action> Controller for F {
    fn decide(&mut self, obs: &Observation, rng: &mut SimRng) -> Action {
        self(obs, rng)
    }
}

struct Lanes {
    /// Per edge: vehicle indices sorted by position, front first.
    edges: Vec<Vec<usize>>,
    /// Per movement: vehicle indices inside that interior.
    interiors: Vec<Vec<usize>>,
}

pub struct Simulation {
    net: Arc<RoadNetwork>,
    cfg: SimConfig,
    seed: u64,
    step_index: usize,
    vehicles: Vec<VehicleState>,
    next_id: VehicleId,
    spawner: Spawner,
    coordinator: Coordinator,
    cost_map: Option<CostMap>,
    grants: Vec<GrantTable>,
    /// Vehicle ids whose last decision was an executed Go (accelerate fully).
    go_ids: Vec<VehicleId>,
    spawn_rng: SimRng,
    policy_rng: SimRng,
    queue_capacity: usize,
    trace: RunTrace,
}

impl Simulation {
    pub fn new(net: Arc<RoadNetwork>, cfg: SimConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let spawner = Spawner::new(&net, cfg.demands.clone(), cfg.dt)?;
        let coordinator = Coordinator::new(&net, cfg.coordinator_config())?;
        let approaches: usize = net.intersections.iter().map(|x| x.approaches.len()).sum();
        let queue_capacity = cfg.zone.queue_capacity(cfg.idm.min_gap);
        let trace = RunTrace { wait_series: ApproachWaitSeries::new(approaches, cfg.dt), ..Default::default() };
        Ok(Simulation {
            grants: vec![GrantTable::default(); net.intersections.len()],
            net,
            seed,
            step_index: 0,
            vehicles: Vec::new(),
            next_id: 0,
            spawner,
            coordinator,
            cost_map: None,
            go_ids: Vec::new(),
            spawn_rng: rng::stream(seed, "spawn", &[]),
            policy_rng: rng::stream(seed, "policy", &[]),
            queue_capacity,
            trace,
            cfg,
        })
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.cfg.dt
    }

    pub fn is_finished(&self) -> bool {
        self.step_index >= self.cfg.steps()
    }

    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn network(&self) -> &RoadNetwork {
        &self.net
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn trace(&self) -> &RunTrace {
        &self.trace
    }

    pub fn cost_map(&self) -> Option<&CostMap> {
        self.cost_map.as_ref()
    }

    pub fn into_trace(self) -> RunTrace {
        self.trace
    }

    /// Runs to the horizon and reports metrics over the configured window.
    pub fn run(mut self, controller: &mut dyn Controller) -> Result<(MetricsReport, RunTrace)> {
        while !self.is_finished() {
            self.step(controller)?;
        }
        let report = self.report();
        Ok((report, self.trace))
    }

    pub fn report(&self) -> MetricsReport {
        compute_report(&self.trace, self.net.intersections.len(), self.cfg.window, &self.cfg.fuel)
    }

    fn index_lanes(&self) -> Lanes {
        let mut lanes =
            Lanes { edges: vec![Vec::new(); self.net.edges.len()], interiors: vec![Vec::new(); self.net.movements.len()] };
        for (i, v) in self.vehicles.iter().enumerate() {
            match v.place {
                Place::Edge => lanes.edges[v.current_edge()].push(i),
                Place::Interior(m) => lanes.interiors[m].push(i),
                Place::Done => {}
            }
        }
        let vs = &self.vehicles;
        for l in lanes.edges.iter_mut().chain(lanes.interiors.iter_mut()) {
            l.sort_by(|&a, &b| vs[b].pos.total_cmp(&vs[a].pos).then(vs[a].id.cmp(&vs[b].id)));
        }
        lanes
    }

    /// Position of the rearmost vehicle on `edge` (the edge length if empty).
    fn tail_position(&self, lanes: &Lanes, edge: EdgeId) -> f64 {
        lanes.edges[edge].last().map_or(self.net.edges[edge].length, |&i| self.vehicles[i].pos)
    }

    /// Advances one step.
    pub fn step(&mut self, controller: &mut dyn Controller) -> Result<Vec<DecisionRecord>> {
        let t = self.time();
        let dt = self.cfg.dt;
        self.spawn(t)?;
        self.coordinate(t)?;
        let lanes = self.index_lanes();
        let decisions = self.control(&lanes, t, controller);
        let accels = self.accelerations(&lanes, t)?;
        self.advance(accels, t)?;
        self.step_index += 1;
        debug_assert!((self.time() - (t + dt)).abs() < 1e-9);
        Ok(decisions)
    }

    fn spawn(&mut self, t: f64) -> Result<()> {
        self.spawner.spawn_step(self.cfg.rv_rate, self.cfg.dt, t, &mut self.spawn_rng);
        let lanes = self.index_lanes();
        let min_gap = self.cfg.idm.min_gap;
        let headway = self.cfg.idm.headway;
        let released = self.spawner.release(|edge| match lanes.edges[edge].last() {
            None => true,
            Some(&i) => self.vehicles[i].pos - VEHICLE_LENGTH >= min_gap,
        });
        for p in released {
            let edge = p.route.first();
            let limit = self.net.edges[edge].speed_limit;
            let speed = match lanes.edges[edge].last() {
                None => limit,
                Some(&i) => {
                    let leader = &self.vehicles[i];
                    let gap = leader.pos - VEHICLE_LENGTH;
                    limit.min(leader.speed).min(((gap - min_gap) / headway).max(0.0))
                }
            };
            let id = self.next_id;
            self.next_id += 1;
            self.vehicles.push(VehicleState::new(id, p.class, p.route, speed, t));
            self.trace.spawned += 1;
            self.trace.spawn_times.push((id, t));
        }
        Ok(())
    }

    fn coordinate(&mut self, t: f64) -> Result<()> {
        let interval = self.coordinator.config().update_interval;
        if !self.step_index.is_multiple_of(interval) {
            return Ok(());
        }
        let mut counts = vec![(0usize, 0usize); self.net.edges.len()];
        for v in self.vehicles.iter().filter(|v| v.place == Place::Edge) {
            let c = &mut counts[v.current_edge()];
            c.1 += 1;
            if v.class == VehicleClass::Rv {
                c.0 += 1;
            }
        }
        let update = self.coordinator.update(&counts, t)?;
        let total: f64 = update.shortages.iter().sum();
        if !self.cfg.routing {
            self.trace.shortage_log.push(ShortageRecord { t, total, cost_map: None });
            return Ok(());
        }
        self.trace.shortage_log.push(ShortageRecord { t, total, cost_map: Some(update.cost_map.clone()) });
        let map = update.cost_map;
        for i in 0..self.vehicles.len() {
            let v = &self.vehicles[i];
            if v.class != VehicleClass::Rv || v.is_done() {
                continue;
            }
            let granted = self.holds_grant(v.id);
            let mut stream = rng::stream(self.seed, "routing", &[v.id, map.generation]);
            let outcome = if granted {
                RerouteOutcome::NotEligible(crate::routing::Ineligible::Committed)
            } else {
                consider_reroute(v, &map, &self.net, &self.cfg.reroute, t, self.cfg.dt, &mut stream)
            };
            let record = RoutingRecord {
                t,
                vehicle: v.id,
                eligible: outcome.is_eligible(),
                activated: outcome.passed_gate(),
                candidate_cost: outcome.candidate_cost(),
                baseline_cost: v.baseline_cost,
                adopted: matches!(outcome, RerouteOutcome::Adopted { .. }),
            };
            if let RerouteOutcome::Adopted { route, .. } = &outcome {
                apply_reroute(&mut self.vehicles[i], &self.net, route, t)?;
            }
            self.trace.routing_log.push(record);
        }
        self.cost_map = Some(map);
        Ok(())
    }

    fn holds_grant(&self, id: VehicleId) -> bool {
        self.grants.iter().any(|g| g.holds(id))
    }

    /// Interior movements currently occupied at each intersection.
    fn interior_movements(&self, lanes: &Lanes, intersection: usize) -> Vec<MovementId> {
        self.net.intersections[intersection].movements.iter().copied().filter(|&m| !lanes.interiors[m].is_empty()).collect()
    }

    fn zone_vehicles(&self, lanes: &Lanes, intersection: usize) -> Vec<(usize, ZoneVehicle)> {
        let x = &self.net.intersections[intersection];
        let mut out = Vec::new();
        for (slot, &edge) in x.approaches.iter().enumerate() {
            let len = self.net.edges[edge].length;
            for &i in &lanes.edges[edge] {
                let v = &self.vehicles[i];
                let distance = len - v.pos;
                if distance > self.cfg.zone.radius {
                    break;
                }
                let Some(movement) = v.next_movement(&self.net) else { continue };
                out.push((
                    i,
                    ZoneVehicle {
                        id: v.id,
                        class: v.class,
                        slot,
                        movement,
                        distance,
                        speed: v.speed,
                        wait: v.approach_wait,
                        granted: self.grants[intersection].holds(v.id),
                    },
                ));
            }
        }
        out
    }

    /// Whether the outgoing edge can take one more vehicle once everything
    /// already heading there has arrived.
    fn has_room(&self, lanes: &Lanes, intersection: usize, to_edge: EdgeId) -> bool {
        let pending = self.grants[intersection].movements().filter(|&m| self.net.movements[m].to_edge == to_edge).count()
            + self.net.movements.iter().filter(|m| m.to_edge == to_edge).map(|m| lanes.interiors[m.id].len()).sum::<usize>();
        let slot = VEHICLE_LENGTH + self.cfg.idm.min_gap;
        self.tail_position(lanes, to_edge) - pending as f64 * slot >= slot
    }

    fn control(&mut self, lanes: &Lanes, t: f64, controller: &mut dyn Controller) -> Vec<DecisionRecord> {
        let mut decisions = Vec::new();
        for x in 0..self.net.intersections.len() {
            let zone = self.zone_vehicles(lanes, x);
            if zone.is_empty() {
                continue;
            }
            let zvs: Vec<ZoneVehicle> = zone.iter().map(|(_, z)| *z).collect();
            let interior = self.interior_movements(lanes, x);
            let grid = build_occupancy(&self.net.intersections[x], &zvs, &self.cfg.zone);

            let mut heads: [Option<ZoneVehicle>; APPROACH_SLOTS] = [None; APPROACH_SLOTS];
            for z in zvs.iter().filter(|z| !z.granted) {
                if heads[z.slot].is_none_or(|h| z.distance < h.distance) {
                    heads[z.slot] = Some(*z);
                }
            }
            let mut requests = Vec::new();
            let mut pending: Vec<(ZoneVehicle, Observation, Action)> = Vec::new();
            for head in heads.iter().flatten() {
                let to_edge = self.net.movements[head.movement].to_edge;
                if !self.has_room(lanes, x, to_edge) {
                    continue;
                }
                let action = match head.class {
                    VehicleClass::Hv => Action::Go,
                    VehicleClass::Rv => {
                        let obs = build_observation(
                            head.slot,
                            &grid,
                            &zvs,
                            &self.grants[x],
                            &interior,
                            &self.net.conflicts,
                            &self.cfg.zone,
                            self.queue_capacity,
                        );
                        let a = controller.decide(&obs, &mut self.policy_rng);
                        pending.push((*head, obs, a));
                        a
                    }
                };
                requests.push(Request { vehicle: head.id, movement: head.movement, wait: head.wait, action });
            }
            let resolutions = resolve_requests(&mut self.grants[x], &interior, &self.net.conflicts, &requests);
            for r in &resolutions {
                if r.action == Action::Go {
                    self.go_ids.push(r.vehicle);
                }
            }
            for (head, obs, action) in pending {
                let r = resolutions.iter().find(|r| r.vehicle == head.id).expect("every request resolves");
                let reward =
                    decision_reward(obs.ego_wait(), &obs.queues, obs.ego_threat(), action, r.overridden, &self.cfg.reward);
                self.trace.control_log.push(ControlRecord {
                    t,
                    intersection: x,
                    vehicle: head.id,
                    action,
                    overridden: r.overridden,
                    threat: obs.ego_threat(),
                });
                if self.cfg.record_rewards {
                    self.trace.rewards.push(RewardRow { t, vehicle: head.id, action, reward });
                }
                decisions.push(DecisionRecord {
                    t,
                    vehicle: head.id,
                    intersection: x,
                    observation: obs,
                    action,
                    executed: r.action,
                    overridden: r.overridden,
                    reward,
                });
            }
        }
        decisions
    }

    /// Nearest obstacle ahead along the route: `(gap, leader speed)`.
    fn leader(&self, lanes: &Lanes, i: usize) -> Option<(f64, f64)> {
        let v = &self.vehicles[i];
        let net = &*self.net;
        let ahead_on = |list: &[usize], offset: f64, min_pos: f64| -> Option<(f64, f64)> {
            list.iter()
                .rev()
                .map(|&j| &self.vehicles[j])
                .find(|o| o.id != v.id && o.pos > min_pos)
                .map(|o| (offset + o.pos - VEHICLE_LENGTH, o.speed))
        };
        // same lane
        let same = match v.place {
            Place::Edge => ahead_on(&lanes.edges[v.current_edge()], -v.pos, v.pos),
            Place::Interior(m) => self.interior_leader(lanes, m, -v.pos, v.pos, v.id),
            Place::Done => return None,
        };
        if same.is_some() {
            return same;
        }
        let mut offset = v.lane_length(net) - v.pos;
        let mut idx = v.route_index;
        let mut in_interior = matches!(v.place, Place::Interior(_));
        while offset < LOOKAHEAD {
            if in_interior {
                idx += 1;
                let e = v.route.edges[idx];
                if let Some(found) = ahead_on(&lanes.edges[e], offset, f64::NEG_INFINITY) {
                    return Some(found);
                }
                offset += net.edges[e].length;
                in_interior = false;
            } else {
                let next = v.route.edges.get(idx + 1)?;
                let m = net.movement_between(v.route.edges[idx], *next)?;
                if let Some(found) = self.interior_leader(lanes, m, offset, f64::NEG_INFINITY, v.id) {
                    return Some(found);
                }
                offset += net.movements[m].length;
                in_interior = true;
            }
        }
        None
    }

    /// Leader inside the junction when following movement `m`: occupants
    /// of movements sharing its entry or its exit.
    fn interior_leader(&self, lanes: &Lanes, m: MovementId, offset: f64, min_pos: f64, ego: VehicleId) -> Option<(f64, f64)> {
        let net = &*self.net;
        let mv = &net.movements[m];
        let junction_movements = match mv.intersection {
            Some(x) => &net.intersections[x].movements[..],
            None => core::slice::from_ref(&mv.id),
        };
        let mut best: Option<(f64, f64)> = None;
        for &other in junction_movements {
            let om = &net.movements[other];
            if om.from_edge != mv.from_edge && om.to_edge != mv.to_edge {
                continue;
            }
            for &j in &lanes.interiors[other] {
                let o = &self.vehicles[j];
                if o.id == ego || o.pos <= min_pos {
                    continue;
                }
                // merging occupants are measured from the shared exit
                // and never placed behind the junction entry
                let pos = if om.from_edge == mv.from_edge {
                    o.pos
                } else {
                    (mv.length - (om.length - o.pos)).max(VEHICLE_LENGTH + GUARD_MARGIN)
                };
                let gap = offset + pos - VEHICLE_LENGTH;
                if best.is_none_or(|(g, _)| gap < g) {
                    best = Some((gap, o.speed));
                }
            }
        }
        best
    }

    fn accelerations(&self, lanes: &Lanes, t: f64) -> Result<Vec<f64>> {
        let net = &*self.net;
        let dt = self.cfg.dt;
        let mut out = Vec::with_capacity(self.vehicles.len());
        for (i, v) in self.vehicles.iter().enumerate() {
            let limit = v.speed_limit(net);
            let leader = self.leader(lanes, i);
            let (gap, leader_speed) = leader.unwrap_or((f64::INFINITY, 0.0));
            if gap <= 0.0 {
                return Err(Error::Collision { vehicle: v.id, gap, time: t });
            }
            let follow = idm_accel(v.speed, gap, leader_speed, limit, &self.cfg.idm)?;
            let mut obstacle = gap;

            let approaching =
                v.place == Place::Edge && net.intersection_ahead(v.current_edge()).is_some() && v.next_edge().is_some();
            let granted = approaching && self.holds_grant(v.id);
            let mut accel = follow;
            if approaching && !granted {
                let d = net.edges[v.current_edge()].length - v.pos;
                obstacle = obstacle.min(d);
                if let Some(r) = self.trace.control_log.last().filter(|r| r.t == t && r.vehicle == v.id) {
                    debug_assert!(r.action == Action::Stop || r.overridden);
                    accel = apply_action(v.speed, Action::Stop, d, self.cfg.idm.max_accel, None).min(follow);
                } else if d > 0.0 {
                    let stop_line = idm_accel(v.speed, d, 0.0, limit, &self.cfg.idm)?;
                    accel = follow.min(stop_line);
                } else {
                    accel = -v.speed / dt;
                }
            } else if v.class == VehicleClass::Rv && self.go_ids.contains(&v.id) {
                accel = apply_action(v.speed, Action::Go, 0.0, self.cfg.idm.max_accel, Some(follow));
            }
            // never move past the obstacle within this step
            if obstacle.is_finite() {
                let allowed = ((obstacle - GUARD_MARGIN).max(0.0) / dt).min(limit);
                accel = accel.min((allowed - v.speed) / dt);
            }
            out.push(clamp_for_step(accel, v.speed, dt));
        }
        Ok(out)
    }

    fn advance(&mut self, accels: Vec<f64>, t: f64) -> Result<()> {
        let dt = self.cfg.dt;
        let net = Arc::clone(&self.net);
        let mut inside: Vec<Vec<(VehicleId, MovementId)>> = vec![Vec::new(); net.intersections.len()];
        let mut finished = Vec::new();
        for (i, a) in accels.into_iter().enumerate() {
            let v = &mut self.vehicles[i];
            let motion = integrate(v, &net, a, dt, t);
            for &m in &motion.swept {
                if let Some(x) = net.movements[m].intersection {
                    inside[x].push((v.id, m));
                }
            }
            if let Place::Interior(m) = v.place {
                if let Some(x) = net.movements[m].intersection {
                    inside[x].push((v.id, m));
                }
            }
            for &m in &motion.exited {
                if let Some(x) = net.movements[m].intersection {
                    self.trace.crossings.push(Crossing { t, intersection: x });
                    self.grants[x].release(v.id);
                    self.go_ids.retain(|&g| g != v.id);
                }
            }
            if motion.completed {
                finished.push(i);
            }
        }

        for (x, occ) in inside.iter_mut().enumerate() {
            occ.sort_unstable();
            occ.dedup();
            for (a, &(va, ma)) in occ.iter().enumerate() {
                for &(vb, mb) in &occ[a + 1..] {
                    if va != vb && net.conflicts.conflicts(ma, mb) {
                        self.trace.violations.push(InteriorViolation { t, intersection: x, vehicles: (va, vb) });
                    }
                }
            }
        }

        self.capture(t);

        for &i in finished.iter().rev() {
            let v = self.vehicles.remove(i);
            self.trace.completions.push(Completion {
                vehicle: v.id,
                class: v.class,
                entry_time: v.spawn_time,
                finish_time: v.finish_time.unwrap_or(t + dt),
                free_flow_time: net.free_flow_time(&v.route.edges),
            });
            for g in self.grants.iter_mut() {
                g.release(v.id);
            }
            self.go_ids.retain(|&g| g != v.id);
        }
        Ok(())
    }

    fn capture(&mut self, t: f64) {
        let net = &*self.net;
        let dt = self.cfg.dt;
        let radius = self.cfg.zone.radius;
        let mut series = Vec::with_capacity(self.trace.wait_series.series.len());
        let mut slot_base = Vec::with_capacity(net.intersections.len());
        let mut acc = 0;
        for x in &net.intersections {
            slot_base.push(acc);
            acc += x.approaches.len();
        }
        let mut sums = vec![(0.0f64, 0usize); acc];
        for v in &self.vehicles {
            let in_zone = match v.place {
                Place::Edge => {
                    let e = v.current_edge();
                    match net.intersection_ahead(e) {
                        Some(x) if v.next_edge().is_some() => {
                            let d = net.edges[e].length - v.pos;
                            if d <= radius {
                                if v.approach_wait > 0.0 {
                                    let slot = net.intersections[x].slot_of(e).unwrap_or(0);
                                    let s = &mut sums[slot_base[x] + slot];
                                    s.0 += v.approach_wait;
                                    s.1 += 1;
                                }
                                true
                            } else {
                                false
                            }
                        }
                        _ => false,
                    }
                }
                Place::Interior(m) => net.movements[m].intersection.is_some(),
                Place::Done => false,
            };
            if in_zone {
                self.trace.zone_samples.push(ZoneSample { t, vehicle: v.id, speed: v.speed, accel: v.accel, dt });
            }
            if self.cfg.record_trajectories {
                self.trace.trajectories.push(TrajectoryRow {
                    t,
                    vehicle: v.id,
                    class: v.class,
                    edge: v.current_edge(),
                    position: v.pos,
                    speed: v.speed,
                    accel: v.accel,
                });
            }
        }
        for (sum, n) in sums {
            series.push(if n == 0 { 0.0 } else { sum / n as f64 });
        }
        self.trace.wait_series.push(t, &series);
    }
}

/// Aggregates a trace into the metrics report for `window`.
pub fn compute_report(trace: &RunTrace, intersections: usize, window: Window, fuel: &FuelModel) -> MetricsReport {
    let (theta_int, theta_net) = metrics::throughput(&trace.crossings, &trace.completions, intersections, window);
    let shortages: Vec<f64> = trace.shortage_log.iter().filter(|s| window.contains(s.t)).map(|s| s.total).collect();
    MetricsReport {
        window,
        w_avg: metrics::avg_wait(&trace.zone_samples, window),
        theta_int,
        theta_net,
        d_avg: metrics::avg_delay(&trace.completions, window),
        w_max: metrics::max_starvation(&trace.wait_series, window),
        w_p99: metrics::p99_wait(&trace.zone_samples, window),
        c_rate: metrics::conflict_rate(&trace.control_log, window),
        f_avg: metrics::fuel_avg(&trace.zone_samples, fuel, window),
        spawned: trace.spawned,
        completed: trace.completions.len(),
        interior_violations: trace.violations.len(),
        reroutes_adopted: trace.routing_log.iter().filter(|r| r.adopted).count(),
        mean_total_shortage: if shortages.is_empty() {
            None
        } else {
            Some(shortages.iter().sum::<f64>() / shortages.len() as f64)
        },
    }
}

/// Uniform demand over every entry/exit stub pair of a network, except
/// leaving through the stub the vehicle entered from.
pub fn uniform_demand(net: &RoadNetwork, total_rate: f64) -> Vec<Demand> {
    let sources = net.source_edges();
    let sinks = net.sink_edges();
    let pairs: Vec<(EdgeId, EdgeId)> = sources
        .iter()
        .flat_map(|&s| sinks.iter().map(move |&d| (s, d)))
        .filter(|&(s, d)| net.edges[s].from != net.edges[d].to)
        .collect();
    let rate = if pairs.is_empty() { 0.0 } else { total_rate / pairs.len() as f64 };
    pairs.into_iter().map(|(origin, destination)| Demand { origin, destination, rate, rv_rate: None }).collect()
}
