use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;

/// Fate probabilities for a selected masking position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSplit {
    pub mask_prob: f64,
    pub random_prob: f64,
    pub keep_prob: f64,
}

impl Default for MaskSplit {
    fn default() -> Self {
        Self {
            mask_prob: 0.8,
            random_prob: 0.1,
            keep_prob: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub mask_ratio: f64,
    pub mask_split: MaskSplit,
    pub max_steps: u64,
    pub seed: u64,
    /// Log (and checkpoint, when a path is set) every this many steps; 0
    /// disables periodic work.
    pub eval_every: u64,
    pub checkpoint_path: Option<PathBuf>,
    /// Freeze everything but the classification head while fine-tuning.
    pub head_only: bool,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl TrainConfig {
    pub fn paper() -> Self {
        Self {
            batch_size: 256,
            lr: 5e-5,
            weight_decay: 0.0,
            dropout: 0.1,
            mask_ratio: 0.15,
            mask_split: MaskSplit::default(),
            max_steps: 800_000,
            seed: 42,
            eval_every: 1000,
            checkpoint_path: None,
            head_only: false,
            exec: Exec::Parallel,
        }
    }

    /// Desk-scale settings for the tiny model.
    pub fn tiny() -> Self {
        Self {
            batch_size: 32,
            lr: 5e-3,
            dropout: 0.0,
            max_steps: 500,
            eval_every: 50,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let s = self.mask_split;
        if [s.mask_prob, s.random_prob, s.keep_prob].iter().any(|p| !(0.0..=1.0).contains(p))
            || (s.mask_prob + s.random_prob + s.keep_prob - 1.0).abs() > 1e-9
        {
            return bad(format!("mask split {s:?} must be probabilities summing to 1"));
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return bad(format!("mask_ratio {} not in [0, 1]", self.mask_ratio));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) || !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("lr {} / weight_decay {} must be finite and non-negative", self.lr, self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        TrainConfig::paper().validate().unwrap();
        TrainConfig::tiny().validate().unwrap();
        let mut c = TrainConfig::tiny();
        c.mask_split.keep_prob = 0.2;
        assert!(c.validate().is_err());
        c = TrainConfig::tiny();
        c.batch_size = 0;
        assert!(c.validate().is_err());
        c = TrainConfig::tiny();
        c.mask_ratio = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unspecified_fields_take_full_scale_values() {
        let c: TrainConfig = serde_json::from_str(r#"{"seed": 7, "max_steps": 10}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.lr, 5e-5);
        assert_eq!(c.batch_size, 256);
        assert_eq!(c.mask_split, MaskSplit::default());
    }
}
