//! Vehicle state, IDM car-following, explicit-Euler integration along a
//! route, and demand-driven spawning.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::net::{shortest_path, EdgeId, MovementId, RoadNetwork, Route};
use crate::{Error, Result, VehicleClass};

/// Speeds below this count as stopped (m/s).
pub const STOP_THRESHOLD: f64 = 0.1;
/// Physical vehicle length (m).
pub const VEHICLE_LENGTH: f64 = 5.0;

pub type VehicleId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    /// Desired speed; `None` means the current lane's speed limit.
    pub desired_speed: Option<f64>,
    pub max_accel: f64,
    pub comfortable_decel: f64,
    pub min_gap: f64,
    pub headway: f64,
    pub exponent: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams { desired_speed: None, max_accel: 2.6, comfortable_decel: 4.5, min_gap: 2.0, headway: 1.0, exponent: 4.0 }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.desired_speed.is_none_or(|v| v > 0.0)
            && self.max_accel > 0.0
            && self.comfortable_decel > 0.0
            && self.min_gap > 0.0
            && self.headway > 0.0
            && self.exponent > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("IDM parameters must be strictly positive".into()))
        }
    }
}

/// Intelligent Driver Model acceleration.
///
/// `gap` is the bumper-to-bumper distance to the leader (`f64::INFINITY`
/// when there is none); `desired_speed` is `v0`.
pub fn idm_accel(ego_speed: f64, gap: f64, leader_speed: f64, desired_speed: f64, params: &IdmParams) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(Error::Collision { vehicle: 0, gap, time: f64::NAN });
    }
    let v0 = params.desired_speed.unwrap_or(desired_speed);
    let free = libm::pow(ego_speed / v0, params.exponent);
    let interaction = if gap.is_finite() {
        let dv = ego_speed - leader_speed;
        let dynamic =
            ego_speed * params.headway + ego_speed * dv / (2.0 * libm::sqrt(params.max_accel * params.comfortable_decel));
        let s_star = params.min_gap + dynamic.max(0.0);
        let r = s_star / gap;
        r * r
    } else {
        0.0
    };
    Ok(params.max_accel * (1.0 - free - interaction))
}

/// Largest deceleration magnitude the step allows without reversing.
pub fn clamp_for_step(accel: f64, speed: f64, dt: f64) -> f64 {
    accel.max(-speed / dt)
}

/// Where along its route a vehicle currently is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Place {
    /// On `route.edges[route_index]`.
    Edge,
    /// Inside the junction after `route.edges[route_index]`, on this movement.
    Interior(MovementId),
    /// Reached the end of its last edge.
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    pub class: VehicleClass,
    pub route: Route,
    pub route_index: usize,
    pub place: Place,
    /// Meters along the current edge or interior path.
    pub pos: f64,
    pub speed: f64,
    pub accel: f64,
    /// Total stopped time (s).
    pub stopped_time: f64,
    /// Stopped time since entering the current edge (s).
    pub approach_wait: f64,
    pub stop_start: Option<f64>,
    /// Spawn-time shortest-path cost; never rebased.
    pub baseline_cost: f64,
    pub last_reroute: Option<f64>,
    pub spawn_time: f64,
    pub finish_time: Option<f64>,
}

impl VehicleState {
    pub fn new(id: VehicleId, class: VehicleClass, route: Route, speed: f64, t: f64) -> VehicleState {
        let baseline_cost = route.baseline_cost;
        VehicleState {
            id,
            class,
            route,
            route_index: 0,
            place: Place::Edge,
            pos: 0.0,
            speed,
            accel: 0.0,
            stopped_time: 0.0,
            approach_wait: 0.0,
            stop_start: None,
            baseline_cost,
            last_reroute: None,
            spawn_time: t,
            finish_time: None,
        }
    }

    pub fn current_edge(&self) -> EdgeId {
        self.route.edges[self.route_index]
    }

    pub fn destination(&self) -> EdgeId {
        self.route.last()
    }

    pub fn next_edge(&self) -> Option<EdgeId> {
        self.route.edges.get(self.route_index + 1).copied()
    }

    /// Movement this vehicle will take (or is taking) at the end of its current edge.
    pub fn next_movement(&self, net: &RoadNetwork) -> Option<MovementId> {
        match self.place {
            Place::Interior(m) => Some(m),
            Place::Edge => self.next_edge().and_then(|n| net.movement_between(self.current_edge(), n)),
            Place::Done => None,
        }
    }

    pub fn is_done(&self) -> bool {
        self.place == Place::Done
    }

    /// Distance to the end of the current edge (stop line), if on an edge.
    pub fn distance_to_stop_line(&self, net: &RoadNetwork) -> Option<f64> {
        match self.place {
            Place::Edge => Some(net.edges[self.current_edge()].length - self.pos),
            _ => None,
        }
    }

    pub fn lane_length(&self, net: &RoadNetwork) -> f64 {
        match self.place {
            Place::Edge | Place::Done => net.edges[self.current_edge()].length,
            Place::Interior(m) => net.movements[m].length,
        }
    }

    pub fn speed_limit(&self, net: &RoadNetwork) -> f64 {
        match self.place {
            Place::Edge | Place::Done => net.edges[self.current_edge()].speed_limit,
            Place::Interior(m) => {
                let mv = &net.movements[m];
                net.edges[mv.from_edge].speed_limit.min(net.edges[mv.to_edge].speed_limit)
            }
        }
    }
}

/// Lane transitions that happened during one integration step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Motion {
    /// Interiors the vehicle was inside at some point during the step.
    pub swept: Vec<MovementId>,
    /// Interiors the vehicle left during the step.
    pub exited: Vec<MovementId>,
    pub completed: bool,
}

/// Explicit-Euler step: `v' = clamp(u + a·dt, 0, limit)`, position advances by
/// `v'·dt`, with hand-off across edges and junction interiors.
pub fn integrate(v: &mut VehicleState, net: &RoadNetwork, accel: f64, dt: f64, t: f64) -> Motion {
    debug_assert!(dt > 0.0);
    let mut motion = Motion::default();
    if v.is_done() {
        return motion;
    }
    if let Place::Interior(m) = v.place {
        motion.swept.push(m);
    }
    let limit = v.speed_limit(net);
    let speed = (v.speed + accel * dt).clamp(0.0, limit);
    v.accel = accel;
    v.speed = speed;
    v.pos += speed * dt;

    if speed < STOP_THRESHOLD {
        v.stopped_time += dt;
        v.approach_wait += dt;
        v.stop_start.get_or_insert(t);
    } else {
        v.stop_start = None;
    }

    loop {
        let len = v.lane_length(net);
        if v.pos < len {
            break;
        }
        match v.place {
            Place::Edge => match v.next_edge() {
                None => {
                    v.pos = len;
                    v.place = Place::Done;
                    v.finish_time = Some(t + dt);
                    motion.completed = true;
                    break;
                }
                Some(next) => {
                    let m = net.movement_between(v.current_edge(), next).expect("route edges are joined by a movement");
                    v.pos -= len;
                    v.place = Place::Interior(m);
                    motion.swept.push(m);
                }
            },
            Place::Interior(m) => {
                v.pos -= len;
                v.place = Place::Edge;
                v.route_index += 1;
                v.approach_wait = 0.0;
                motion.exited.push(m);
            }
            Place::Done => break,
        }
    }
    motion
}

/// Origin–destination demand entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub origin: EdgeId,
    pub destination: EdgeId,
    /// Arrivals per second.
    pub rate: f64,
    /// Per-OD RV share overriding the scenario rate.
    pub rv_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendingVehicle {
    pub class: VehicleClass,
    pub route: Route,
    pub arrival_time: f64,
}

/// Independent Bernoulli(rv_rate) class draw.
pub fn draw_class<R: Rng + ?Sized>(rng: &mut R, rv_rate: f64) -> VehicleClass {
    if rng.gen::<f64>() < rv_rate {
        VehicleClass::Rv
    } else {
        VehicleClass::Hv
    }
}

/// Bernoulli-per-step arrivals per OD pair, with a FIFO backlog per origin
/// edge for arrivals that cannot enter yet.
#[derive(Debug, Clone)]
pub struct Spawner {
    demands: Vec<Demand>,
    routes: Vec<Route>,
    origins: Vec<EdgeId>,
    backlog: Vec<VecDeque<PendingVehicle>>,
}

impl Spawner {
    /// Precomputes every OD pair's baseline shortest path under τ.
    pub fn new(net: &RoadNetwork, demands: Vec<Demand>, dt: f64) -> Result<Spawner> {
        let costs = net.baseline_costs();
        let mut routes = Vec::with_capacity(demands.len());
        let mut origins: Vec<EdgeId> = demands.iter().map(|d| d.origin).collect();
        origins.sort_unstable();
        origins.dedup();
        let sources = net.source_edges();
        for d in &demands {
            if !sources.contains(&d.origin) {
                return Err(Error::Config(alloc::format!("demand origin {} is not an entry edge", d.origin)));
            }
            if !(d.rate >= 0.0) || d.rate * dt > 1.0 {
                return Err(Error::Config(alloc::format!("demand rate {} veh/s is outside [0, 1/dt]", d.rate)));
            }
            if let Some(r) = d.rv_rate {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::Config("per-OD rv_rate must lie in [0, 1]".into()));
                }
            }
            routes.push(shortest_path(net, d.origin, d.destination, &costs)?);
        }
        let backlog = origins.iter().map(|_| VecDeque::new()).collect();
        Ok(Spawner { demands, routes, origins, backlog })
    }

    pub fn demands(&self) -> &[Demand] {
        &self.demands
    }

    /// Draws this step's arrivals into the backlog; returns how many arrived.
    pub fn spawn_step<R: Rng + ?Sized>(&mut self, rv_rate: f64, dt: f64, t: f64, rng: &mut R) -> usize {
        let mut arrived = 0;
        for (i, d) in self.demands.iter().enumerate() {
            if rng.gen::<f64>() >= d.rate * dt {
                continue;
            }
            let class = draw_class(rng, d.rv_rate.unwrap_or(rv_rate));
            let slot = self.origins.binary_search(&d.origin).expect("origin indexed");
            self.backlog[slot].push_back(PendingVehicle { class, route: self.routes[i].clone(), arrival_time: t });
            arrived += 1;
        }
        arrived
    }

    /// Releases at most one backlogged vehicle per origin edge for which
    /// `can_enter(edge)` holds.
    pub fn release(&mut self, mut can_enter: impl FnMut(EdgeId) -> bool) -> Vec<PendingVehicle> {
        let mut out = Vec::new();
        for (slot, &edge) in self.origins.iter().enumerate() {
            if self.backlog[slot].is_empty() || !can_enter(edge) {
                continue;
            }
            if let Some(p) = self.backlog[slot].pop_front() {
                out.push(p);
            }
        }
        out
    }

    pub fn backlog_len(&self) -> usize {
        self.backlog.iter().map(|b| b.len()).sum()
    }
}
