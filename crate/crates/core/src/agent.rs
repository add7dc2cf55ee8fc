//! Stop/Go policies: a heuristic baseline, a uniform-random baseline and a
//! linear Q-learner trained centrally with replay and a target copy.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::control::Observation;
use crate::dynamics::VehicleId;
use crate::metrics::MetricsReport;
use crate::rng::{self, SimRng};
use crate::sim::{DecisionRecord, Simulation};
use crate::{Action, Error, Result};

/// Extra ego features appended to the flattened observation, plus a bias.
const EGO_FEATURES: usize = 5;

pub trait Policy {
    fn act(&self, obs: &Observation, explore: bool, rng: &mut SimRng) -> Action;
}

/// Adapts a policy to the engine's controller interface.
pub fn controller<P: Policy + ?Sized>(policy: &P, explore: bool) -> impl FnMut(&Observation, &mut SimRng) -> Action + '_ {
    move |o: &Observation, r: &mut SimRng| policy.act(o, explore, r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicPolicy {
    pub theta_go: f64,
    /// Normalised ego wait at which threat is ignored. Without it, queues
    /// of RVs on every approach see each other as threats and all stop.
    pub patience: f64,
}

impl Default for HeuristicPolicy {
    fn default() -> Self {
        HeuristicPolicy { theta_go: 0.2, patience: 1.0 }
    }
}

impl HeuristicPolicy {
    pub fn decide(&self, obs: &Observation) -> Action {
        let calm = obs.ego_threat() <= self.theta_go || obs.ego_wait() >= self.patience;
        if calm && !obs.ego_interior_blocked() {
            Action::Go
        } else {
            Action::Stop
        }
    }
}

impl Policy for HeuristicPolicy {
    fn act(&self, obs: &Observation, _explore: bool, _rng: &mut SimRng) -> Action {
        self.decide(obs)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UniformRandom;

impl Policy for UniformRandom {
    fn act(&self, _obs: &Observation, _explore: bool, rng: &mut SimRng) -> Action {
        random_action(rng)
    }
}

/// Always requests passage; the safety override still applies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AlwaysGo;

impl Policy for AlwaysGo {
    fn act(&self, _obs: &Observation, _explore: bool, _rng: &mut SimRng) -> Action {
        Action::Go
    }
}

fn random_action(rng: &mut SimRng) -> Action {
    if rng.gen_bool(0.5) {
        Action::Go
    } else {
        Action::Stop
    }
}

/// Learner input: the observation, the ego slot's own values and a bias.
pub fn features(obs: &Observation) -> Vec<f64> {
    let mut f = obs.to_vec();
    f.extend_from_slice(&[obs.ego_wait(), obs.queues[obs.ego], obs.ego_threat(), obs.interior[obs.ego], 1.0]);
    f
}

pub fn feature_width(c0: usize) -> usize {
    crate::APPROACH_SLOTS * (4 + c0) + EGO_FEATURES
}

/// Per-action linear weights; the bias is the last feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub width: usize,
    /// Indexed by [`Action::index`].
    pub weights: [Vec<f64>; 2],
}

impl ValueFunction {
    pub fn zeros(width: usize) -> Self {
        ValueFunction { width, weights: [vec![0.0; width], vec![0.0; width]] }
    }

    pub fn q(&self, features: &[f64]) -> [f64; 2] {
        debug_assert_eq!(features.len(), self.width);
        let dot = |w: &[f64]| w.iter().zip(features).map(|(a, b)| a * b).sum::<f64>();
        [dot(&self.weights[0]), dot(&self.weights[1])]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().flatten().all(|w| w.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| w.len() != self.width) {
            return Err(Error::Config("weight vector width does not match feature width".into()));
        }
        if !self.is_finite() {
            return Err(Error::Config("non-finite policy weights".into()));
        }
        Ok(())
    }
}

/// Greedy action over two values; ties go to Stop.
pub fn greedy(q: [f64; 2]) -> Action {
    if q[Action::Go.index()] > q[Action::Stop.index()] {
        Action::Go
    } else {
        Action::Stop
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQ {
    pub value: ValueFunction,
    /// Exploration rate used when `explore` is set.
    pub epsilon: f64,
}

impl LinearQ {
    pub fn new(width: usize) -> Self {
        LinearQ { value: ValueFunction::zeros(width), epsilon: 0.0 }
    }
}

impl Policy for LinearQ {
    fn act(&self, obs: &Observation, explore: bool, rng: &mut SimRng) -> Action {
        if explore && rng.gen::<f64>() < self.epsilon {
            return random_action(rng);
        }
        greedy(self.value.q(&features(obs)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lr: f64,
    pub iterations: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the iterations over which ε decays linearly.
    pub epsilon_decay: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Gradient steps between target syncs.
    pub target_sync: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            lr: 5e-4,
            iterations: 200,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 0.5,
            replay_capacity: 50_000,
            batch_size: 32,
            target_sync: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config("gamma must lie in (0, 1)".into()));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config("learning rate must be non-negative".into()));
        }
        let eps = 0.0..=1.0;
        if !eps.contains(&self.epsilon_start) || !eps.contains(&self.epsilon_end) || !eps.contains(&self.epsilon_decay) {
            return Err(Error::Config("epsilon schedule values must lie in [0, 1]".into()));
        }
        if self.replay_capacity == 0 || self.batch_size == 0 || self.target_sync == 0 {
            return Err(Error::Config("replay capacity, batch size and target sync must be positive".into()));
        }
        Ok(())
    }

    pub fn epsilon(&self, iteration: usize) -> f64 {
        let span = self.epsilon_decay * self.iterations as f64;
        if span <= 0.0 {
            return self.epsilon_end;
        }
        let frac = iteration as f64 / span;
        if frac >= 1.0 {
            return self.epsilon_end;
        }
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub features: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    /// `None` when the decision ended the vehicle's sequence.
    pub next: Option<Vec<f64>>,
}

/// FIFO replay buffer with seeded uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Indices of `n` draws with replacement.
    pub fn sample_indices(&self, n: usize, rng: &mut SimRng) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..self.items.len())).collect()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }
}

/// Turns each vehicle's decision sequence into transitions. Decisions still
/// pending when the caller stops feeding records are dropped.
#[derive(Debug, Default)]
pub struct TransitionBuilder {
    pending: BTreeMap<VehicleId, (Vec<f64>, Action, f64)>,
}

impl TransitionBuilder {
    pub fn feed(&mut self, d: &DecisionRecord, out: &mut Vec<Transition>) {
        let f = features(&d.observation);
        if let Some((pf, pa, pr)) = self.pending.remove(&d.vehicle) {
            out.push(Transition { features: pf, action: pa, reward: pr, next: Some(f.clone()) });
        }
        if d.is_terminal() {
            out.push(Transition { features: f, action: d.action, reward: d.reward.total, next: None });
        } else {
            self.pending.insert(d.vehicle, (f, d.action, d.reward.total));
        }
    }
}

/// Per-vehicle undiscounted returns, accumulated from decisions.
#[derive(Debug, Clone, Default)]
pub struct ReturnTracker {
    per_vehicle: BTreeMap<VehicleId, f64>,
}

impl ReturnTracker {
    pub fn feed(&mut self, d: &DecisionRecord) {
        *self.per_vehicle.entry(d.vehicle).or_insert(0.0) += d.reward.total;
    }

    /// Mean return over vehicles that made at least one decision.
    pub fn mean(&self) -> f64 {
        if self.per_vehicle.is_empty() {
            0.0
        } else {
            self.per_vehicle.values().sum::<f64>() / self.per_vehicle.len() as f64
        }
    }

    pub fn vehicles(&self) -> usize {
        self.per_vehicle.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub epsilon: f64,
    pub mean_return: f64,
    pub decisions: usize,
    pub vehicles: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean_return: f64,
    pub decisions: usize,
    pub report: MetricsReport,
}

/// Runs one episode without learning.
pub fn evaluate<P: Policy + ?Sized>(policy: &P, mut sim: Simulation, explore: bool) -> Result<Evaluation> {
    let mut returns = ReturnTracker::default();
    let mut decisions = 0;
    let mut ctl = controller(policy, explore);
    while !sim.is_finished() {
        for d in sim.step(&mut ctl)? {
            returns.feed(&d);
            decisions += 1;
        }
    }
    Ok(Evaluation { mean_return: returns.mean(), decisions, report: sim.report() })
}

/// One semi-gradient TD(0) update on a single transition.
fn td_update(online: &mut ValueFunction, target: &ValueFunction, t: &Transition, gamma: f64, lr: f64) {
    let bootstrap = match &t.next {
        Some(next) => {
            let q = target.q(next);
            q[0].max(q[1])
        }
        None => 0.0,
    };
    let a = t.action.index();
    let predicted = online.q(&t.features)[a];
    let err = t.reward + gamma * bootstrap - predicted;
    for (w, x) in online.weights[a].iter_mut().zip(&t.features) {
        *w += lr * err * x;
    }
}

/// Trains one shared linear Q-function. `env` builds the episode for each
/// iteration; all RVs in an episode query the same weights within a step.
pub fn train<F>(mut env: F, cfg: &TrainConfig, width: usize) -> Result<(LinearQ, Vec<CurvePoint>)>
where
    F: FnMut(usize) -> Result<Simulation>,
{
    cfg.validate()?;
    let mut policy = LinearQ::new(width);
    let mut target = policy.value.clone();
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let mut replay_rng = rng::stream(cfg.seed, "replay", &[]);
    let mut gradient_steps = 0usize;
    let mut curve = Vec::with_capacity(cfg.iterations);
    let mut fresh = Vec::new();

    for iteration in 0..cfg.iterations {
        policy.epsilon = cfg.epsilon(iteration);
        let mut sim = env(iteration)?;
        let mut builder = TransitionBuilder::default();
        let mut returns = ReturnTracker::default();
        let mut decisions = 0;
        while !sim.is_finished() {
            let records = {
                let mut ctl = controller(&policy, true);
                sim.step(&mut ctl)?
            };
            for d in &records {
                returns.feed(d);
                builder.feed(d, &mut fresh);
                decisions += 1;
            }
            for t in fresh.drain(..) {
                replay.push(t);
            }
            if replay.len() >= cfg.batch_size && !records.is_empty() {
                for i in replay.sample_indices(cfg.batch_size, &mut replay_rng) {
                    td_update(&mut policy.value, &target, replay.get(i), cfg.gamma, cfg.lr);
                }
                gradient_steps += 1;
                if gradient_steps.is_multiple_of(cfg.target_sync) {
                    target = policy.value.clone();
                }
                if !policy.value.is_finite() {
                    return Err(Error::Diverged { iteration });
                }
            }
        }
        curve.push(CurvePoint {
            iteration,
            epsilon: policy.epsilon,
            mean_return: returns.mean(),
            decisions,
            vehicles: returns.vehicles(),
        });
    }
    policy.epsilon = 0.0;
    Ok((policy, curve))
}
