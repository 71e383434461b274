use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::RggcnnConfig;
use crate::vq::PhaseConfig;

fn default_model() -> RggcnnConfig {
    RggcnnConfig::rggcnn2()
}

fn default_test_fraction() -> f64 {
    1.0 / 6.0
}

/// Settings of one two-phase (or baseline) training run and its evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Labelled fraction n1 / (n1 + n2).
    pub ratio: f64,
    pub seed: u64,
    pub phase1: PhaseConfig,
    pub phase2: PhaseConfig,
    pub beta: f64,
    /// Gaussian smoothing of Q before the argmax, in pixels; 0 disables it.
    pub smooth_sigma: f64,
    pub iou_threshold: f64,
    /// Radians.
    pub angle_threshold: f64,
    /// Held-out fraction for sweeps, drawn before any ratio split.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_model")]
    pub model: RggcnnConfig,
}

impl Default for TrainConfig {
    /// Desk-scale defaults for 64×64 synthetic scenes.
    fn default() -> Self {
        TrainConfig {
            ratio: 0.5,
            seed: 0,
            phase1: PhaseConfig {
                epochs: 400,
                batch: 8,
                lr: 1e-3,
                max_steps: Some(600),
                cosine_decay: false,
            },
            phase2: PhaseConfig {
                epochs: 400,
                batch: 4,
                lr: 1e-3,
                max_steps: Some(1500),
                cosine_decay: true,
            },
            beta: 0.25,
            smooth_sigma: 1.0,
            iou_threshold: 0.25,
            angle_threshold: std::f64::consts::FRAC_PI_6,
            test_fraction: default_test_fraction(),
            model: default_model(),
        }
    }
}

impl TrainConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::Config(format!("ratio must be in (0, 1], got {}", self.ratio)));
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::Config(format!("iou_threshold must be in (0, 1), got {}", self.iou_threshold)));
        }
        if !(self.angle_threshold > 0.0 && self.angle_threshold <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config(format!(
                "angle_threshold must be in (0, pi/2], got {}",
                self.angle_threshold
            )));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.smooth_sigma >= 0.0) {
            return Err(Error::Config(format!("smooth_sigma must be >= 0, got {}", self.smooth_sigma)));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction must be in (0, 1), got {}", self.test_fraction)));
        }
        for (name, p) in [("phase1", &self.phase1), ("phase2", &self.phase2)] {
            if p.batch == 0 || !(p.lr > 0.0) {
                return Err(Error::Config(format!("{name}: batch and lr must be positive")));
            }
        }
        Ok(())
    }

    /// The VQ-VAE settings with this run's β.
    pub fn vq_config(&self) -> crate::vq::VqVaeConfig {
        let mut c = self.model.vq.clone();
        c.beta = self.beta;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn threshold_ranges() {
        let mut c = TrainConfig { iou_threshold: 1.0, ..Default::default() };
        assert!(c.validate().is_err());
        c.iou_threshold = 0.25;
        c.angle_threshold = 2.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = TrainConfig::default();
        let text = toml::to_string(&c).unwrap();
        let back: TrainConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
