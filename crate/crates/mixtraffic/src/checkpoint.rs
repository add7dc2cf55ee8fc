//! Policy checkpoints and learning curves.
//!
//! A checkpoint is a JSON object:
//!
//! | key             | meaning                                              |
//! |-----------------|------------------------------------------------------|
//! | `format`        | always `"mixtraffic-linear-q/1"`                     |
//! | `feature_width` | length of each weight vector                         |
//! | `c0`            | counted cells per approach (fixes the feature layout) |
//! | `weights`       | `{ "stop": [...], "go": [...] }`, bias last          |
//! | `train`         | training configuration used                          |
//! | `scenario`      | the scenario trained on                              |

use std::path::Path;

use anyhow::{bail, Context};
use mixtraffic_core::agent::{feature_width, CurvePoint, LinearQ, TrainConfig, ValueFunction};
use serde::{Deserialize, Serialize};

use crate::output::{to_json, write_atomic, write_csv};
use crate::scenario::Scenario;

pub const FORMAT: &str = "mixtraffic-linear-q/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub stop: Vec<f64>,
    pub go: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub feature_width: usize,
    pub c0: usize,
    pub weights: Weights,
    pub train: TrainConfig,
    pub scenario: Scenario,
}

impl Checkpoint {
    pub fn new(policy: &LinearQ, train: TrainConfig, scenario: &Scenario) -> Self {
        let [stop, go] = policy.value.weights.clone();
        Checkpoint {
            format: FORMAT.to_string(),
            feature_width: policy.value.width,
            c0: scenario.params.c0,
            weights: Weights { stop, go },
            train,
            scenario: scenario.clone(),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.format != FORMAT {
            bail!("unsupported checkpoint format {:?}", self.format);
        }
        if self.feature_width != feature_width(self.c0) {
            bail!("feature width {} does not match c0 = {}", self.feature_width, self.c0);
        }
        self.value().validate()?;
        Ok(())
    }

    fn value(&self) -> ValueFunction {
        ValueFunction { width: self.feature_width, weights: [self.weights.stop.clone(), self.weights.go.clone()] }
    }

    /// Greedy policy from the stored weights.
    pub fn policy(&self) -> LinearQ {
        LinearQ { value: self.value(), epsilon: 0.0 }
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        write_atomic(path, to_json(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> anyhow::Result<Checkpoint> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let ck: Checkpoint = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        ck.validate().with_context(|| format!("checking {}", path.display()))?;
        Ok(ck)
    }
}

/// `iteration,epsilon,mean_return,decisions,vehicles`, one row per episode.
pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> anyhow::Result<()> {
    write_csv(path, curve.iter())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut q = LinearQ::new(feature_width(3));
        q.value.weights[1][0] = 0.25;
        q.value.weights[0][60] = -1.5;
        let ck = Checkpoint::new(&q, TrainConfig::default(), &Scenario::default());
        let p = dir.path().join("ck.json");
        ck.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.policy().value, q.value);
    }

    #[test]
    fn mismatched_width_rejected() {
        let q = LinearQ::new(10);
        let ck = Checkpoint::new(&q, TrainConfig::default(), &Scenario::default());
        assert!(ck.validate().is_err());
        let mut ck = Checkpoint::new(&LinearQ::new(feature_width(3)), TrainConfig::default(), &Scenario::default());
        ck.format = "other".into();
        assert!(ck.validate().is_err());
    }

    #[test]
    fn curve_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        write_curve(&p, &[CurvePoint { iteration: 0, epsilon: 1.0, mean_return: -0.5, decisions: 4, vehicles: 2 }]).unwrap();
        let s = std::fs::read_to_string(p).unwrap();
        assert!(s.starts_with("iteration,epsilon,mean_return,decisions,vehicles\n0,1.0,-0.5,4,2"));
    }
}
