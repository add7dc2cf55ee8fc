//! Multi-objective reward: ego wait, queue parity, threat and the hard
//! conflict penalty.

use serde::{Deserialize, Serialize};

use crate::{Action, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub lambda_parity: f64,
    pub lambda_threat: f64,
    /// Penalty added when a Go is overridden; negative.
    pub conflict_penalty: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights { lambda_parity: 0.2, lambda_threat: 0.5, conflict_penalty: -1.0 }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_parity >= 0.0) || !(self.lambda_threat >= 0.0) {
            return Err(Error::Config("reward weights must be non-negative".into()));
        }
        if !(self.conflict_penalty < 0.0) {
            return Err(Error::Config("conflict penalty must be negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub ego: f64,
    pub parity: f64,
    pub threat: f64,
    pub conflict: bool,
    pub base: f64,
    pub total: f64,
}

/// `+w` for Go, `−w` for Stop.
pub fn ego_reward(ego_wait: f64, action: Action) -> f64 {
    match action {
        Action::Go => ego_wait,
        Action::Stop => -ego_wait,
    }
}

/// Population variance of the normalised queue lengths.
pub fn parity_penalty(queues: &[f64]) -> f64 {
    if queues.is_empty() {
        return 0.0;
    }
    let n = queues.len() as f64;
    let mean = queues.iter().sum::<f64>() / n;
    queues.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>() / n
}

/// A Go pays its ego-approach threat; a Stop pays nothing.
pub fn threat_penalty(action: Action, ego_threat: f64) -> f64 {
    match action {
        Action::Go => ego_threat,
        Action::Stop => 0.0,
    }
}

/// Composes the base reward and adds the conflict penalty when flagged.
pub fn total_reward(ego: f64, parity: f64, threat: f64, weights: &RewardWeights, conflict: bool) -> RewardBreakdown {
    let base = ego - weights.lambda_threat * threat - weights.lambda_parity * parity;
    let total = if conflict { base + weights.conflict_penalty } else { base };
    RewardBreakdown { ego, parity, threat, conflict, base, total }
}

/// Reward for one decision. `action` is the policy's choice (the one being
/// credited); `conflict` is whether it was overridden.
pub fn decision_reward(
    ego_wait: f64,
    queues: &[f64],
    ego_threat: f64,
    action: Action,
    conflict: bool,
    weights: &RewardWeights,
) -> RewardBreakdown {
    total_reward(ego_reward(ego_wait, action), parity_penalty(queues), threat_penalty(action, ego_threat), weights, conflict)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ego_sign_convention() {
        assert_eq!(ego_reward(0.0, Action::Go), 0.0);
        assert_eq!(ego_reward(0.0, Action::Stop), 0.0);
        assert_eq!(ego_reward(0.5, Action::Go), 0.5);
        assert_eq!(ego_reward(0.8, Action::Stop), -0.8);
    }

    #[test]
    fn parity_values() {
        assert_eq!(parity_penalty(&[0.25; 8]), 0.0);
        assert_eq!(parity_penalty(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]), 0.109375);
        assert_eq!(parity_penalty(&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]), 0.109375);
    }

    #[test]
    fn threat_values() {
        assert_eq!(threat_penalty(Action::Stop, 0.9), 0.0);
        assert_eq!(threat_penalty(Action::Go, 0.0), 0.0);
        assert_eq!(threat_penalty(Action::Go, 0.6), 0.6);
    }

    #[test]
    fn hand_composed_total() {
        let w = RewardWeights::default();
        let r = total_reward(0.5, 0.109375, 0.6, &w, false);
        assert_eq!(r.total, 0.178125);
        let r = total_reward(0.5, 0.109375, 0.6, &w, true);
        assert_eq!(r.total, -0.821875);
        let r = decision_reward(0.0, &[0.0; 8], 0.0, Action::Stop, false, &w);
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn weights_validation() {
        assert!(RewardWeights::default().validate().is_ok());
        assert!(RewardWeights { conflict_penalty: 0.0, ..Default::default() }.validate().is_err());
        assert!(RewardWeights { lambda_threat: -0.1, ..Default::default() }.validate().is_err());
    }
}
