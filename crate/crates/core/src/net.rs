//! Road network: junctions, directed edges, movements through junctions,
//! the movement conflict map and edge-based shortest paths.
//!
//! Approach slots at an intersection are assigned clockwise starting from
//! north, by the bearing of the upstream junction as seen from the
//! intersection. Every junction with at least two neighbours gets one
//! movement per (incoming, outgoing) edge pair except U-turns; junctions with
//! three or more neighbours are controlled intersections.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::vec;
use alloc::vec::Vec;
use alloc::{format, string::String};
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geometry::{self, Point};
use crate::{Error, Result, APPROACH_SLOTS};

pub type JunctionId = usize;
pub type EdgeId = usize;
pub type MovementId = usize;
pub type IntersectionId = usize;

/// Half-width of the square junction box in meters.
pub const JUNCTION_HALF_WIDTH: f64 = 6.0;
/// Lateral offset of a lane centre from the road centreline (right-hand traffic).
pub const LANE_OFFSET: f64 = 1.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub id: JunctionId,
    pub pos: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub from: JunctionId,
    pub to: JunctionId,
    /// Meters, > 0. Also the baseline routing cost τ(e).
    pub length: f64,
    /// m/s, > 0.
    pub speed_limit: f64,
}

impl Edge {
    pub fn free_flow_time(&self) -> f64 {
        self.length / self.speed_limit
    }
}

/// Input description of an edge for [`RoadNetwork::new`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from: JunctionId,
    pub to: JunctionId,
    pub length: f64,
    pub speed_limit: f64,
}

/// A path through a junction from one incoming edge to one outgoing edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Movement {
    pub id: MovementId,
    pub junction: JunctionId,
    /// Controlled intersection this movement belongs to, if any.
    pub intersection: Option<IntersectionId>,
    /// Approach slot `k` of the incoming edge (0 at uncontrolled junctions).
    pub approach: usize,
    pub from_edge: EdgeId,
    pub to_edge: EdgeId,
    /// Interior polyline through the junction box.
    pub path: Vec<Point>,
    /// Length of `path` in meters.
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub id: IntersectionId,
    pub junction: JunctionId,
    /// Incoming edges in slot order; slot `k` is `approaches[k]`.
    pub approaches: Vec<EdgeId>,
    /// Movements through this intersection, ascending id.
    pub movements: Vec<MovementId>,
}

impl Intersection {
    pub fn slot_of(&self, edge: EdgeId) -> Option<usize> {
        self.approaches.iter().position(|&e| e == edge)
    }
}

/// Per movement, the sorted list of movements it conflicts with.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConflictMap {
    conflicts: Vec<Vec<MovementId>>,
}

impl ConflictMap {
    pub fn conflicts_of(&self, m: MovementId) -> &[MovementId] {
        &self.conflicts[m]
    }

    pub fn conflicts(&self, a: MovementId, b: MovementId) -> bool {
        self.conflicts[a].binary_search(&b).is_ok()
    }

    pub fn len(&self) -> usize {
        self.conflicts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conflicts.is_empty()
    }
}

/// An ordered list of consecutive edges with its cached baseline cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub edges: Vec<EdgeId>,
    /// Σ length over `edges`.
    pub baseline_cost: f64,
}

impl Route {
    /// Validates adjacency (a movement must join consecutive edges).
    pub fn new(net: &RoadNetwork, edges: Vec<EdgeId>) -> Result<Route> {
        if edges.is_empty() {
            return Err(Error::Network("empty route".into()));
        }
        for &e in &edges {
            if e >= net.edges.len() {
                return Err(Error::Network(format!("unknown edge {e}")));
            }
        }
        for w in edges.windows(2) {
            if net.movement_between(w[0], w[1]).is_none() {
                return Err(Error::Network(format!("edges {} and {} are not joined", w[0], w[1])));
            }
        }
        let baseline_cost = edges.iter().map(|&e| net.edges[e].length).sum();
        Ok(Route { edges, baseline_cost })
    }

    pub fn first(&self) -> EdgeId {
        self.edges[0]
    }

    pub fn last(&self) -> EdgeId {
        self.edges[self.edges.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub junctions: Vec<Junction>,
    pub edges: Vec<Edge>,
    pub movements: Vec<Movement>,
    pub intersections: Vec<Intersection>,
    pub conflicts: ConflictMap,
    /// Per edge: `(next edge, movement)` sorted by next edge id.
    successors: Vec<Vec<(EdgeId, MovementId)>>,
    movement_index: BTreeMap<(EdgeId, EdgeId), MovementId>,
    junction_intersection: Vec<Option<IntersectionId>>,
    neighbour_count: Vec<usize>,
}

impl RoadNetwork {
    /// Builds a network from junction positions and edges, deriving
    /// movements, approach slotting and the conflict map.
    pub fn new(junction_pos: Vec<Point>, specs: &[EdgeSpec]) -> Result<RoadNetwork> {
        let junctions: Vec<Junction> = junction_pos.into_iter().enumerate().map(|(id, pos)| Junction { id, pos }).collect();
        let nj = junctions.len();
        let mut edges = Vec::with_capacity(specs.len());
        let mut seen = BTreeMap::new();
        for (id, s) in specs.iter().enumerate() {
            if s.from >= nj || s.to >= nj {
                return Err(Error::Network(format!("edge {id} references a missing junction")));
            }
            if s.from == s.to {
                return Err(Error::Network(format!("edge {id} is a self-loop")));
            }
            if !(s.length > 0.0) || !s.length.is_finite() {
                return Err(Error::Network(format!("edge {id} has non-positive length")));
            }
            if !(s.speed_limit > 0.0) || !s.speed_limit.is_finite() {
                return Err(Error::Network(format!("edge {id} has non-positive speed limit")));
            }
            if seen.insert((s.from, s.to), id).is_some() {
                return Err(Error::Network(format!("duplicate edge {} -> {}", s.from, s.to)));
            }
            edges.push(Edge { id, from: s.from, to: s.to, length: s.length, speed_limit: s.speed_limit });
        }

        let mut neighbours: Vec<Vec<JunctionId>> = vec![Vec::new(); nj];
        for e in &edges {
            neighbours[e.from].push(e.to);
            neighbours[e.to].push(e.from);
        }
        for n in neighbours.iter_mut() {
            n.sort_unstable();
            n.dedup();
        }
        let neighbour_count: Vec<usize> = neighbours.iter().map(|n| n.len()).collect();

        let mut incoming: Vec<Vec<EdgeId>> = vec![Vec::new(); nj];
        let mut outgoing: Vec<Vec<EdgeId>> = vec![Vec::new(); nj];
        for e in &edges {
            incoming[e.to].push(e.id);
            outgoing[e.from].push(e.id);
        }

        let mut intersections = Vec::new();
        let mut junction_intersection = vec![None; nj];
        for j in 0..nj {
            if neighbour_count[j] < 3 || incoming[j].is_empty() {
                continue;
            }
            let centre = junctions[j].pos;
            let mut approaches = incoming[j].clone();
            approaches.sort_by(|&a, &b| {
                let ba = junctions[edges[a].from].pos.sub(centre).bearing();
                let bb = junctions[edges[b].from].pos.sub(centre).bearing();
                ba.total_cmp(&bb).then(a.cmp(&b))
            });
            if approaches.len() > APPROACH_SLOTS {
                return Err(Error::Network(format!(
                    "junction {j} has {} approaches, at most {APPROACH_SLOTS} supported",
                    approaches.len()
                )));
            }
            junction_intersection[j] = Some(intersections.len());
            intersections.push(Intersection { id: intersections.len(), junction: j, approaches, movements: Vec::new() });
        }

        let mut movements = Vec::new();
        let mut movement_index = BTreeMap::new();
        let mut successors = vec![Vec::new(); edges.len()];
        for j in 0..nj {
            if neighbour_count[j] < 2 {
                continue;
            }
            let mut ins = incoming[j].clone();
            ins.sort_unstable();
            let mut outs = outgoing[j].clone();
            outs.sort_unstable();
            for &i in &ins {
                for &o in &outs {
                    if edges[o].to == edges[i].from {
                        continue;
                    }
                    let id = movements.len();
                    let (intersection, approach) = match junction_intersection[j] {
                        Some(x) => (Some(x), intersections[x].slot_of(i).unwrap_or(0)),
                        None => (None, 0),
                    };
                    let path = interior_path(&junctions, &edges[i], &edges[o]);
                    let length = geometry::polyline_length(&path);
                    movements.push(Movement { id, junction: j, intersection, approach, from_edge: i, to_edge: o, path, length });
                    movement_index.insert((i, o), id);
                    successors[i].push((o, id));
                    if let Some(x) = intersection {
                        intersections[x].movements.push(id);
                    }
                }
            }
        }
        for s in successors.iter_mut() {
            s.sort_unstable();
        }

        let mut net = RoadNetwork {
            junctions,
            edges,
            movements,
            intersections,
            conflicts: ConflictMap::default(),
            successors,
            movement_index,
            junction_intersection,
            neighbour_count,
        };
        net.conflicts = derive_conflicts(&net)?;
        Ok(net)
    }

    pub fn successors(&self, edge: EdgeId) -> &[(EdgeId, MovementId)] {
        &self.successors[edge]
    }

    pub fn movement_between(&self, from: EdgeId, to: EdgeId) -> Option<MovementId> {
        self.movement_index.get(&(from, to)).copied()
    }

    pub fn intersection_at(&self, junction: JunctionId) -> Option<IntersectionId> {
        self.junction_intersection[junction]
    }

    /// Intersection at the downstream end of `edge`, if controlled.
    pub fn intersection_ahead(&self, edge: EdgeId) -> Option<IntersectionId> {
        self.junction_intersection[self.edges[edge].to]
    }

    /// Edges entering the network from a dead-end junction.
    pub fn source_edges(&self) -> Vec<EdgeId> {
        self.edges.iter().filter(|e| self.neighbour_count[e.from] == 1).map(|e| e.id).collect()
    }

    /// Edges leaving the network into a dead-end junction.
    pub fn sink_edges(&self) -> Vec<EdgeId> {
        self.edges.iter().filter(|e| self.neighbour_count[e.to] == 1).map(|e| e.id).collect()
    }

    /// Baseline cost vector τ(e) = edge length.
    pub fn baseline_costs(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.length).collect()
    }

    /// Free-flow traversal time of a list of edges (interiors excluded).
    pub fn free_flow_time(&self, edges: &[EdgeId]) -> f64 {
        edges.iter().map(|&e| self.edges[e].free_flow_time()).sum()
    }

    pub fn edge_between(&self, from: JunctionId, to: JunctionId) -> Option<EdgeId> {
        self.edges.iter().find(|e| e.from == from && e.to == to).map(|e| e.id)
    }
}

/// Entry point on the stop line, exit point on the outgoing edge, and a
/// single knee where the two lane lines meet (straight when parallel).
const TURN_SEGMENTS: usize = 8;

fn interior_path(junctions: &[Junction], inc: &Edge, out: &Edge) -> Vec<Point> {
    let c = junctions[inc.to].pos;
    let in_dir = c.sub(junctions[inc.from].pos).unit();
    let out_dir = junctions[out.to].pos.sub(c).unit();
    let entry = c.sub(in_dir.scale(JUNCTION_HALF_WIDTH)).add(in_dir.right().scale(LANE_OFFSET));
    let exit = c.add(out_dir.scale(JUNCTION_HALF_WIDTH)).add(out_dir.right().scale(LANE_OFFSET));
    match geometry::line_intersection(entry, in_dir, exit, out_dir) {
        Some(knee)
            if knee.distance(c) <= 2.0 * JUNCTION_HALF_WIDTH
                && knee.sub(entry).dot(in_dir) > 1e-9
                && exit.sub(knee).dot(out_dir) > 1e-9 =>
        {
            // quadratic Bezier through the knee's corner, so turns stay
            // inside the corner instead of touching it
            (0..=TURN_SEGMENTS)
                .map(|i| {
                    let t = i as f64 / TURN_SEGMENTS as f64;
                    let u = 1.0 - t;
                    entry.scale(u * u).add(knee.scale(2.0 * u * t)).add(exit.scale(t * t))
                })
                .collect()
        }
        _ => vec![entry, exit],
    }
}

/// Derives the conflict map: two movements through the same junction
/// conflict iff they come from different approaches and either share the
/// outgoing edge (merge) or their interior polylines touch.
pub fn derive_conflicts(net: &RoadNetwork) -> Result<ConflictMap> {
    for m in &net.movements {
        if m.path.len() < 2 || !(m.length > 0.0) {
            return Err(Error::DegeneratePath { movement: m.id });
        }
    }
    let mut by_junction: BTreeMap<JunctionId, Vec<MovementId>> = BTreeMap::new();
    for m in &net.movements {
        by_junction.entry(m.junction).or_default().push(m.id);
    }
    let mut conflicts = vec![Vec::new(); net.movements.len()];
    for ids in by_junction.values() {
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                if movements_conflict(&net.movements[a], &net.movements[b]) {
                    conflicts[a].push(b);
                    conflicts[b].push(a);
                }
            }
        }
    }
    for c in conflicts.iter_mut() {
        c.sort_unstable();
    }
    Ok(ConflictMap { conflicts })
}

/// Pairwise conflict rule on two movements of the same junction.
pub fn movements_conflict(a: &Movement, b: &Movement) -> bool {
    if a.id == b.id || a.from_edge == b.from_edge {
        return false;
    }
    a.to_edge == b.to_edge || geometry::polylines_intersect(&a.path, &b.path)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    cost: f64,
    edge: EdgeId,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (cost, edge)
        other.cost.total_cmp(&self.cost).then_with(|| other.edge.cmp(&self.edge))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn check_costs(net: &RoadNetwork, costs: &[f64]) -> Result<()> {
    if costs.len() != net.edges.len() {
        return Err(Error::Config(format!("cost map has {} entries for {} edges", costs.len(), net.edges.len())));
    }
    if let Some(i) = costs.iter().position(|c| !(*c > 0.0) || !c.is_finite()) {
        return Err(Error::Config(format!("edge {i} has non-positive cost {}", costs[i])));
    }
    Ok(())
}

/// Minimum-cost edge sequence from `from` to `to` (both inclusive) under
/// `costs`, following movements only. Equal-cost predecessors resolve to
/// the smallest edge id.
pub fn shortest_path(net: &RoadNetwork, from: EdgeId, to: EdgeId, costs: &[f64]) -> Result<Route> {
    if from >= net.edges.len() || to >= net.edges.len() {
        return Err(Error::Network(String::from("unknown edge in shortest-path query")));
    }
    check_costs(net, costs)?;
    let n = net.edges.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<EdgeId>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[from] = costs[from];
    heap.push(HeapEntry { cost: dist[from], edge: from });
    while let Some(HeapEntry { cost, edge }) = heap.pop() {
        if done[edge] {
            continue;
        }
        done[edge] = true;
        if edge == to {
            break;
        }
        for &(next, _) in net.successors(edge) {
            if done[next] {
                continue;
            }
            let cand = cost + costs[next];
            let better = cand < dist[next] || (cand == dist[next] && pred[next].is_some_and(|p| edge < p));
            if better {
                dist[next] = cand;
                pred[next] = Some(edge);
                heap.push(HeapEntry { cost: cand, edge: next });
            }
        }
    }
    if !done[to] {
        return Err(Error::NoRoute { from, to });
    }
    let mut edges = vec![to];
    let mut cur = to;
    while cur != from {
        cur = pred[cur].expect("settled edge has a predecessor");
        edges.push(cur);
    }
    edges.reverse();
    let baseline_cost = edges.iter().map(|&e| net.edges[e].length).sum();
    Ok(Route { edges, baseline_cost })
}

/// Exact sum of per-edge costs along a route.
pub fn route_cost(route: &Route, costs: &[f64]) -> f64 {
    route.edges.iter().map(|&e| costs[e]).sum()
}

/// Manhattan grid of `rows × cols` four-way intersections with
/// bidirectional edges between neighbours and a source/sink stub pair on
/// every boundary side. Row 0 is the northernmost row.
pub fn build_grid(rows: usize, cols: usize, edge_length: f64, speed_limit: f64) -> Result<RoadNetwork> {
    if rows == 0 || cols == 0 {
        return Err(Error::Config(String::from("grid dimensions must be at least 1x1")));
    }
    if !(edge_length > 0.0) || !(speed_limit > 0.0) {
        return Err(Error::Config(String::from("edge length and speed limit must be positive")));
    }
    let l = edge_length;
    let node = |r: usize, c: usize| r * cols + c;
    let mut pos = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            pos.push(Point::new(c as f64 * l, (rows - 1 - r) as f64 * l));
        }
    }
    let mut specs = Vec::new();
    let pair = |specs: &mut Vec<EdgeSpec>, a: usize, b: usize| {
        specs.push(EdgeSpec { from: a, to: b, length: l, speed_limit });
        specs.push(EdgeSpec { from: b, to: a, length: l, speed_limit });
    };
    for r in 0..rows {
        for c in 0..cols.saturating_sub(1) {
            pair(&mut specs, node(r, c), node(r, c + 1));
        }
    }
    for r in 0..rows.saturating_sub(1) {
        for c in 0..cols {
            pair(&mut specs, node(r, c), node(r + 1, c));
        }
    }
    // stubs: north, east, south, west
    let stub = |specs: &mut Vec<EdgeSpec>, pos: &mut Vec<Point>, at: usize, offset: Point| {
        let id = pos.len();
        pos.push(pos[at].add(offset));
        specs.push(EdgeSpec { from: id, to: at, length: l, speed_limit });
        specs.push(EdgeSpec { from: at, to: id, length: l, speed_limit });
    };
    for c in 0..cols {
        stub(&mut specs, &mut pos, node(0, c), Point::new(0.0, l));
    }
    for r in 0..rows {
        stub(&mut specs, &mut pos, node(r, cols - 1), Point::new(l, 0.0));
    }
    for c in 0..cols {
        stub(&mut specs, &mut pos, node(rows - 1, c), Point::new(0.0, -l));
    }
    for r in 0..rows {
        stub(&mut specs, &mut pos, node(r, 0), Point::new(-l, 0.0));
    }
    RoadNetwork::new(pos, &specs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn movement(net: &RoadNetwork, from_j: JunctionId, via: JunctionId, to_j: JunctionId) -> MovementId {
        let a = net.edge_between(from_j, via).unwrap();
        let b = net.edge_between(via, to_j).unwrap();
        net.movement_between(a, b).unwrap()
    }

    // 1x1 grid: centre 0, stubs N=1, E=2, S=3, W=4
    #[test]
    fn single_intersection_layout() {
        let net = build_grid(1, 1, 100.0, 13.9).unwrap();
        assert_eq!(net.intersections.len(), 1);
        let x = &net.intersections[0];
        assert_eq!(x.approaches.len(), 4);
        assert_eq!(x.movements.len(), 12);
        let from = |j: usize| net.edges[x.approaches[j]].from;
        assert_eq!([from(0), from(1), from(2), from(3)], [1, 2, 3, 4]);
    }

    #[test]
    fn grid_2x2_topology() {
        let net = build_grid(2, 2, 100.0, 13.9).unwrap();
        assert_eq!(net.intersections.len(), 4);
        let interior = net.edges.iter().filter(|e| e.from < 4 && e.to < 4).count();
        assert_eq!(interior, 8);
        assert_eq!(net.edges.len(), 8 + 2 * 8);
        assert_eq!(net.source_edges().len(), 8);
    }

    #[test]
    fn perpendicular_throughs_conflict() {
        let net = build_grid(1, 1, 100.0, 13.9).unwrap();
        let ns = movement(&net, 1, 0, 3);
        let ew = movement(&net, 2, 0, 4);
        assert!(net.conflicts.conflicts(ns, ew));
    }

    #[test]
    fn opposite_throughs_do_not_conflict() {
        let net = build_grid(1, 1, 100.0, 13.9).unwrap();
        let ns = movement(&net, 1, 0, 3);
        let sn = movement(&net, 3, 0, 1);
        assert!(!net.conflicts.conflicts(ns, sn));
    }

    #[test]
    fn left_turn_conflicts_with_oncoming_through() {
        let net = build_grid(1, 1, 100.0, 13.9).unwrap();
        // northbound (from south) turning left to west
        let left = movement(&net, 3, 0, 4);
        let oncoming = movement(&net, 1, 0, 3);
        assert!(net.conflicts.conflicts(left, oncoming));
    }

    #[test]
    fn right_turn_only_merges() {
        let net = build_grid(1, 1, 100.0, 13.9).unwrap();
        // northbound turning right to east
        let right = movement(&net, 3, 0, 2);
        let expect: Vec<MovementId> =
            net.movements.iter().filter(|m| m.to_edge == net.movements[right].to_edge && m.id != right).map(|m| m.id).collect();
        assert_eq!(net.conflicts.conflicts_of(right), expect.as_slice());
    }

    #[test]
    fn conflict_map_is_symmetric_and_irreflexive() {
        let net = build_grid(3, 3, 150.0, 13.9).unwrap();
        for m in &net.movements {
            assert!(!net.conflicts.conflicts(m.id, m.id));
            for &p in net.conflicts.conflicts_of(m.id) {
                assert!(net.conflicts.conflicts(p, m.id));
            }
        }
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(build_grid(0, 3, 100.0, 13.9).is_err());
        assert!(build_grid(3, 0, 100.0, 13.9).is_err());
        assert!(build_grid(2, 2, 0.0, 13.9).is_err());
    }

    #[test]
    fn degenerate_interior_rejected() {
        let mut net = build_grid(1, 1, 100.0, 13.9).unwrap();
        let p = net.movements[0].path[0];
        net.movements[0].path = vec![p, p];
        net.movements[0].length = 0.0;
        assert_eq!(derive_conflicts(&net), Err(Error::DegeneratePath { movement: 0 }));
    }

    #[test]
    fn identity_route() {
        let net = build_grid(2, 2, 100.0, 13.9).unwrap();
        let costs = net.baseline_costs();
        let r = shortest_path(&net, 3, 3, &costs).unwrap();
        assert_eq!(r.edges, vec![3]);
        assert_eq!(route_cost(&r, &costs), 100.0);
    }

    #[test]
    fn triangle_two_hops_beat_direct() {
        // a ring a->b->c->a plus chord a->c; the stub d makes every junction
        // reachable without U-turns.
        let pos = vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(5.0, 8.0), Point::new(-10.0, 0.0)];
        let specs = [
            EdgeSpec { from: 3, to: 0, length: 10.0, speed_limit: 10.0 },
            EdgeSpec { from: 0, to: 1, length: 10.0, speed_limit: 10.0 },
            EdgeSpec { from: 1, to: 2, length: 10.0, speed_limit: 10.0 },
            EdgeSpec { from: 0, to: 2, length: 10.0, speed_limit: 10.0 },
            EdgeSpec { from: 2, to: 3, length: 10.0, speed_limit: 10.0 },
        ];
        let net = RoadNetwork::new(pos, &specs).unwrap();
        let costs = [1.0, 1.0, 1.0, 3.0, 1.0];
        // from the entry edge (3->0) to the exit (2->3)
        let r = shortest_path(&net, 0, 4, &costs).unwrap();
        assert_eq!(r.edges, vec![0, 1, 2, 4]);
        assert_eq!(route_cost(&r, &costs), 4.0);
        let direct = [1.0, 1.0, 1.0, 1.5, 1.0];
        let r = shortest_path(&net, 0, 4, &direct).unwrap();
        assert_eq!(r.edges, vec![0, 3, 4]);
    }

    #[test]
    fn unreachable_is_no_route() {
        let pos = vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(20.0, 0.0)];
        let specs = [
            EdgeSpec { from: 0, to: 1, length: 10.0, speed_limit: 10.0 },
            EdgeSpec { from: 2, to: 1, length: 10.0, speed_limit: 10.0 },
        ];
        let net = RoadNetwork::new(pos, &specs).unwrap();
        let costs = net.baseline_costs();
        assert_eq!(shortest_path(&net, 0, 1, &costs), Err(Error::NoRoute { from: 0, to: 1 }));
    }

    #[test]
    fn non_positive_costs_rejected() {
        let net = build_grid(1, 1, 100.0, 13.9).unwrap();
        let mut costs = net.baseline_costs();
        costs[2] = 0.0;
        assert!(matches!(shortest_path(&net, 0, 1, &costs), Err(Error::Config(_))));
    }

    #[test]
    fn route_cost_sums() {
        let r = Route { edges: vec![0, 1, 2], baseline_cost: 450.0 };
        assert_eq!(route_cost(&r, &[100.0, 150.0, 200.0]), 450.0);
        let single = Route { edges: vec![0], baseline_cost: 100.0 };
        assert_eq!(route_cost(&single, &[100.0]), 100.0);
    }

    #[test]
    fn route_validation() {
        let net = build_grid(1, 1, 100.0, 13.9).unwrap();
        let inbound = net.edge_between(1, 0).unwrap();
        let outbound = net.edge_between(0, 3).unwrap();
        let r = Route::new(&net, vec![inbound, outbound]).unwrap();
        assert_eq!(r.baseline_cost, 200.0);
        let uturn = net.edge_between(0, 1).unwrap();
        assert!(Route::new(&net, vec![inbound, uturn]).is_err());
    }
}
