//! Intersection control zone: occupancy grid, conflict threat vector,
//! observation assembly, Stop/Go execution and the grant-based safety
//! override.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dynamics::{VehicleId, VEHICLE_LENGTH};
use crate::net::{ConflictMap, Intersection, MovementId};
use crate::{Action, Error, Result, VehicleClass, APPROACH_SLOTS};

/// Braking used when a Stop has no room left before the stop line (m/s²).
pub const MAX_BRAKE: f64 = 9.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlZoneConfig {
    /// Zone radius (m).
    pub radius: f64,
    /// Length of one occupancy cell (m).
    pub cell_length: f64,
    /// Cells counted in the conflict pressure, nearest first.
    pub c0: usize,
    /// Per-cell weights `w_c`, length `c0`.
    pub cell_weights: Vec<f64>,
    /// Threat normaliser `Z_j`.
    pub z_norm: f64,
    /// Wait normaliser (s).
    pub wait_cap: f64,
}

impl Default for ControlZoneConfig {
    fn default() -> Self {
        ControlZoneConfig { radius: 30.0, cell_length: 10.0, c0: 3, cell_weights: vec![1.0; 3], z_norm: 5.0, wait_cap: 60.0 }
    }
}

impl ControlZoneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !(self.cell_length > 0.0) {
            return Err(Error::Config("zone radius and cell length must be positive".into()));
        }
        if self.c0 < 1 || self.cell_weights.len() != self.c0 {
            return Err(Error::Config("need c0 >= 1 and one weight per counted cell".into()));
        }
        if self.cell_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("cell weights must be non-negative".into()));
        }
        if !(self.z_norm > 0.0) || !(self.wait_cap > 0.0) {
            return Err(Error::Config("threat and wait normalisers must be positive".into()));
        }
        Ok(())
    }

    /// Cells covering the zone.
    pub fn n_cells(&self) -> usize {
        (libm::ceil(self.radius / self.cell_length) as usize).max(self.c0)
    }

    /// Queue capacity per approach: ⌊radius / (s0 + vehicle length)⌋.
    pub fn queue_capacity(&self, min_gap: f64) -> usize {
        (libm::floor(self.radius / (min_gap + VEHICLE_LENGTH)) as usize).max(1)
    }

    /// Width of the flattened observation `q ⊕ w ⊕ T ⊕ G`.
    pub fn observation_width(&self) -> usize {
        APPROACH_SLOTS * (4 + self.c0)
    }
}

/// A vehicle on an approach edge, as seen by the intersection controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneVehicle {
    pub id: VehicleId,
    pub class: VehicleClass,
    pub slot: usize,
    pub movement: MovementId,
    /// Distance to the stop line (m).
    pub distance: f64,
    pub speed: f64,
    /// Stopped time accumulated on this approach (s).
    pub wait: f64,
    pub granted: bool,
}

impl ZoneVehicle {
    /// Queued: inside the zone and has stopped at least once on this approach.
    pub fn is_queued(&self, cfg: &ControlZoneConfig) -> bool {
        self.distance <= cfg.radius && self.wait > 0.0
    }
}

/// Occupancy counts `G(j, p, c)` for every movement of one intersection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    n_cells: usize,
    movements: Vec<MovementId>,
    counts: Vec<u32>,
}

impl OccupancyGrid {
    pub fn empty(intersection: &Intersection, n_cells: usize) -> Self {
        OccupancyGrid {
            n_cells,
            movements: intersection.movements.clone(),
            counts: vec![0; intersection.movements.len() * n_cells],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    fn index(&self, movement: MovementId, cell: usize) -> Option<usize> {
        if cell == 0 || cell > self.n_cells {
            return None;
        }
        let local = self.movements.binary_search(&movement).ok()?;
        Some(local * self.n_cells + cell - 1)
    }

    /// Count in 1-based `cell` of `movement` (0 for foreign movements).
    pub fn count(&self, movement: MovementId, cell: usize) -> u32 {
        self.index(movement, cell).map_or(0, |i| self.counts[i])
    }

    pub fn add(&mut self, movement: MovementId, cell: usize) {
        if let Some(i) = self.index(movement, cell) {
            self.counts[i] += 1;
        }
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }
}

/// Cell (1 = nearest the conflict region) for a distance to the stop line.
pub fn cell_of(distance: f64, cfg: &ControlZoneConfig) -> Option<usize> {
    if !(distance >= 0.0) || distance > cfg.radius {
        return None;
    }
    let c = libm::floor(distance / cfg.cell_length) as usize + 1;
    Some(c.min(cfg.n_cells()))
}

/// Bins every zone vehicle into exactly one `(movement, cell)`.
pub fn build_occupancy(intersection: &Intersection, vehicles: &[ZoneVehicle], cfg: &ControlZoneConfig) -> OccupancyGrid {
    let mut grid = OccupancyGrid::empty(intersection, cfg.n_cells());
    for v in vehicles {
        if let Some(c) = cell_of(v.distance, cfg) {
            grid.add(v.movement, c);
        }
    }
    grid
}

/// `S = Σ_{p ∈ C(k)} Σ_{c ≤ C0} w_c · G(p, c)` for reference movement `k`.
pub fn conflict_pressure(grid: &OccupancyGrid, movement: MovementId, conflicts: &ConflictMap, cfg: &ControlZoneConfig) -> f64 {
    conflicts
        .conflicts_of(movement)
        .iter()
        .map(|&p| (1..=cfg.c0).map(|c| cfg.cell_weights[c - 1] * grid.count(p, c) as f64).sum::<f64>())
        .sum()
}

/// `T = min(S / Z, 1)`.
pub fn threat_score(pressure: f64, z_norm: f64) -> f64 {
    (pressure / z_norm).min(1.0)
}

/// Per-slot threat `T_k ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThreatVector(pub [f64; APPROACH_SLOTS]);

/// The reference movement of each slot: the movement of the nearest
/// ungranted vehicle on that approach.
pub fn head_movements(vehicles: &[ZoneVehicle], cfg: &ControlZoneConfig) -> [Option<(MovementId, f64)>; APPROACH_SLOTS] {
    let mut heads: [Option<(MovementId, f64)>; APPROACH_SLOTS] = [None; APPROACH_SLOTS];
    for v in vehicles.iter().filter(|v| !v.granted && v.distance <= cfg.radius) {
        let better = match heads[v.slot] {
            None => true,
            Some((_, d)) => v.distance < d,
        };
        if better {
            heads[v.slot] = Some((v.movement, v.distance));
        }
    }
    heads
}

pub fn threat_vector(
    grid: &OccupancyGrid,
    vehicles: &[ZoneVehicle],
    conflicts: &ConflictMap,
    cfg: &ControlZoneConfig,
) -> ThreatVector {
    let mut t = [0.0; APPROACH_SLOTS];
    for (slot, head) in head_movements(vehicles, cfg).iter().enumerate() {
        if let Some((m, _)) = head {
            t[slot] = threat_score(conflict_pressure(grid, *m, conflicts, cfg), cfg.z_norm);
        }
    }
    ThreatVector(t)
}

/// `o = q ⊕ w ⊕ T ⊕ G` plus the ego's slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub queues: [f64; APPROACH_SLOTS],
    pub waits: [f64; APPROACH_SLOTS],
    pub threat: ThreatVector,
    /// 1 when the interior holds (or has granted) a movement conflicting
    /// with that slot's reference movement.
    pub interior: [f64; APPROACH_SLOTS],
    /// Entry-cell occupancy bits, `slot * c0 + (c - 1)`.
    pub cells: Vec<f64>,
    pub ego: usize,
}

impl Observation {
    pub fn zeros(ego: usize, c0: usize) -> Self {
        Observation {
            queues: [0.0; APPROACH_SLOTS],
            waits: [0.0; APPROACH_SLOTS],
            threat: ThreatVector::default(),
            interior: [0.0; APPROACH_SLOTS],
            cells: vec![0.0; APPROACH_SLOTS * c0],
            ego,
        }
    }

    pub fn ego_threat(&self) -> f64 {
        self.threat.0[self.ego]
    }

    pub fn ego_wait(&self) -> f64 {
        self.waits[self.ego]
    }

    pub fn ego_interior_blocked(&self) -> bool {
        self.interior[self.ego] > 0.0
    }

    /// Flattened `q ⊕ w ⊕ T ⊕ G`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(APPROACH_SLOTS * 4 + self.cells.len());
        v.extend_from_slice(&self.queues);
        v.extend_from_slice(&self.waits);
        v.extend_from_slice(&self.threat.0);
        v.extend_from_slice(&self.interior);
        v.extend_from_slice(&self.cells);
        v
    }
}

/// Active passage grants at one intersection. A granted vehicle keeps its
/// grant until it leaves the interior.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GrantTable {
    grants: Vec<(VehicleId, MovementId)>,
}

impl GrantTable {
    pub fn grant(&mut self, vehicle: VehicleId, movement: MovementId) {
        if !self.holds(vehicle) {
            self.grants.push((vehicle, movement));
        }
    }

    pub fn release(&mut self, vehicle: VehicleId) {
        self.grants.retain(|&(v, _)| v != vehicle);
    }

    pub fn holds(&self, vehicle: VehicleId) -> bool {
        self.grants.iter().any(|&(v, _)| v == vehicle)
    }

    pub fn movements(&self) -> impl Iterator<Item = MovementId> + '_ {
        self.grants.iter().map(|&(_, m)| m)
    }

    pub fn is_empty(&self) -> bool {
        self.grants.is_empty()
    }

    pub fn len(&self) -> usize {
        self.grants.len()
    }

    /// True if a grant or an interior occupant conflicts with `movement`.
    pub fn blocks(&self, movement: MovementId, interior: &[MovementId], conflicts: &ConflictMap) -> bool {
        self.movements().chain(interior.iter().copied()).any(|m| conflicts.conflicts(m, movement))
    }
}

/// Assembles the observation for a decision on slot `ego`.
#[allow(clippy::too_many_arguments)]
pub fn build_observation(
    ego: usize,
    grid: &OccupancyGrid,
    vehicles: &[ZoneVehicle],
    grants: &GrantTable,
    interior: &[MovementId],
    conflicts: &ConflictMap,
    cfg: &ControlZoneConfig,
    queue_capacity: usize,
) -> Observation {
    let mut obs = Observation::zeros(ego, cfg.c0);
    let mut queued = [0usize; APPROACH_SLOTS];
    let mut wait_sum = [0.0; APPROACH_SLOTS];
    for v in vehicles.iter().filter(|v| v.is_queued(cfg)) {
        queued[v.slot] += 1;
        wait_sum[v.slot] += v.wait;
    }
    for i in 0..APPROACH_SLOTS {
        obs.queues[i] = (queued[i] as f64 / queue_capacity as f64).min(1.0);
        if queued[i] > 0 {
            obs.waits[i] = (wait_sum[i] / queued[i] as f64 / cfg.wait_cap).min(1.0);
        }
    }
    obs.threat = threat_vector(grid, vehicles, conflicts, cfg);
    for (slot, head) in head_movements(vehicles, cfg).iter().enumerate() {
        if let Some((m, _)) = head {
            if grants.blocks(*m, interior, conflicts) {
                obs.interior[slot] = 1.0;
            }
        }
    }
    for v in vehicles {
        if let Some(c) = cell_of(v.distance, cfg) {
            if c <= cfg.c0 {
                obs.cells[v.slot * cfg.c0 + c - 1] = 1.0;
            }
        }
    }
    obs
}

/// Commanded acceleration for a Stop/Go decision.
///
/// Stop brakes at `u² / (2·d_int)`; Go uses `max_accel`, capped by the
/// car-following limit when one is supplied.
pub fn apply_action(speed: f64, action: Action, d_int: f64, max_accel: f64, follow_cap: Option<f64>) -> f64 {
    match action {
        Action::Stop => {
            if speed <= 0.0 {
                0.0
            } else if d_int <= 0.0 {
                -MAX_BRAKE
            } else {
                -(speed * speed) / (2.0 * d_int)
            }
        }
        Action::Go => follow_cap.map_or(max_accel, |cap| cap.min(max_accel)),
    }
}

/// Overrides a Go to Stop when a conflicting movement occupies the interior
/// or holds a grant. Stop is never overridden. Returns `(final, conflict)`.
pub fn safety_override(
    grants: &GrantTable,
    interior: &[MovementId],
    conflicts: &ConflictMap,
    movement: MovementId,
    action: Action,
) -> (Action, bool) {
    match action {
        Action::Stop => (Action::Stop, false),
        Action::Go if grants.blocks(movement, interior, conflicts) => (Action::Stop, true),
        Action::Go => (Action::Go, false),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Request {
    pub vehicle: VehicleId,
    pub movement: MovementId,
    pub wait: f64,
    pub action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    pub vehicle: VehicleId,
    pub movement: MovementId,
    pub requested: Action,
    pub action: Action,
    pub overridden: bool,
}

/// Resolves one step's requests in priority order (longer wait first, then
/// lower vehicle id), granting each surviving Go.
pub fn resolve_requests(
    grants: &mut GrantTable,
    interior: &[MovementId],
    conflicts: &ConflictMap,
    requests: &[Request],
) -> Vec<Resolution> {
    let mut order: Vec<&Request> = requests.iter().collect();
    order.sort_by(|a, b| b.wait.total_cmp(&a.wait).then(a.vehicle.cmp(&b.vehicle)));
    order
        .into_iter()
        .map(|r| {
            let (action, overridden) = safety_override(grants, interior, conflicts, r.movement, r.action);
            if action == Action::Go {
                grants.grant(r.vehicle, r.movement);
            }
            Resolution { vehicle: r.vehicle, movement: r.movement, requested: r.action, action, overridden }
        })
        .collect()
}
