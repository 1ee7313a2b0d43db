//! Versioned run configuration.
//!
//! One JSON file drives every command; absent fields fall back to defaults
//! and unknown fields are rejected so typos surface instead of silently
//! doing nothing. Seeds are not part of the file: they come from the
//! command line so the same configuration can be rerun under many seeds.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::SegmentParams;
use crate::io::{data_err, io_err, json_err};
use crate::loss::LossWeights;
use crate::modulator::{DEFAULT_HIDDEN, DEFAULT_OMEGA};
use crate::synth::SynthConfig;
use crate::train::OptimizerConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Base coefficient values the modulator's corrections act on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OmegaConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for OmegaConfig {
    fn default() -> Self {
        OmegaConfig {
            alpha: DEFAULT_OMEGA[0],
            beta: DEFAULT_OMEGA[1],
            gamma: DEFAULT_OMEGA[2],
        }
    }
}

impl OmegaConfig {
    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    /// Fraction of sequences held out for validation.
    pub val_fraction: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 12,
            optimizer: OptimizerConfig::default(),
            val_fraction: 0.2,
        }
    }
}

impl TrainSettings {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        self.optimizer.validate()?;
        if !(self.val_fraction.is_finite()
            && self.val_fraction > 0.0
            && self.val_fraction < 1.0)
        {
            return Err(Error::invalid("val_fraction must lie strictly in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    /// Overlap thresholds the detection quality is averaged over.
    pub iou_thresholds: Vec<f64>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            iou_thresholds: vec![0.3, 0.4, 0.5, 0.6, 0.7],
        }
    }
}

impl EvalSettings {
    fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::invalid("iou_thresholds must not be empty"));
        }
        for (i, &t) in self.iou_thresholds.iter().enumerate() {
            if !(t.is_finite() && t > 0.0 && t <= 1.0) {
                return Err(Error::invalid(format!(
                    "iou_thresholds[{i}] must lie in (0, 1], got {t}"
                )));
            }
            if i > 0 && t <= self.iou_thresholds[i - 1] {
                return Err(Error::invalid(format!(
                    "iou_thresholds[{i}] must increase past {}",
                    self.iou_thresholds[i - 1]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub format_version: u32,
    /// Modulator hidden width.
    pub hidden: usize,
    pub omega: OmegaConfig,
    pub segmentation: SegmentParams,
    pub loss: LossWeights,
    pub train: TrainSettings,
    pub eval: EvalSettings,
    /// Generator settings; the teacher's base values default to `omega`.
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            format_version: CONFIG_VERSION,
            hidden: DEFAULT_HIDDEN,
            omega: OmegaConfig::default(),
            segmentation: SegmentParams::default(),
            loss: LossWeights::default(),
            train: TrainSettings::default(),
            eval: EvalSettings::default(),
            synth: SynthConfig::default(),
        }
    }
}

fn scoped(scope: &str, e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::invalid(format!("{scope}: {m}")),
        other => other,
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_VERSION {
            return Err(Error::invalid(format!(
                "unsupported config version {} (this build reads {CONFIG_VERSION})",
                self.format_version
            )));
        }
        if self.hidden == 0 {
            return Err(Error::invalid("hidden must be positive"));
        }
        self.omega.validate().map_err(|e| scoped("omega", e))?;
        self.segmentation
            .validate()
            .map_err(|e| scoped("segmentation", e))?;
        self.loss.validate().map_err(|e| scoped("loss", e))?;
        self.train.validate().map_err(|e| scoped("train", e))?;
        self.eval.validate().map_err(|e| scoped("eval", e))?;
        self.synth.validate().map_err(|e| scoped("synth", e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
        cfg.validate()
            .map_err(|e| data_err(path, e.to_string()))?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(path, text).map_err(|e| io_err(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.hidden, cfg.hidden);
        assert_eq!(back.omega, cfg.omega);
        assert_eq!(back.eval.iou_thresholds, cfg.eval.iou_thresholds);
    }

    #[test]
    fn missing_fields_fall_back_to_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"hidden": 32}"#).unwrap();
        assert_eq!(cfg.hidden, 32);
        assert_eq!(cfg.train.epochs, TrainSettings::default().epochs);
        assert_eq!(cfg.omega, OmegaConfig::default());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"hiden": 32}"#).unwrap_err();
        assert!(err.to_string().contains("hiden"));
        let err =
            serde_json::from_str::<RunConfig>(r#"{"train": {"epochz": 3}}"#).unwrap_err();
        assert!(err.to_string().contains("epochz"));
    }

    #[test]
    fn validation_errors_name_the_field() {
        let mut cfg = RunConfig::default();
        cfg.train.optimizer.lr = -1.0;
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("train") && msg.contains("lr"), "{msg}");

        let mut cfg = RunConfig::default();
        cfg.eval.iou_thresholds = vec![0.5, 0.4];
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("iou_thresholds[1]"), "{msg}");

        let mut cfg = RunConfig::default();
        cfg.synth.arrival_rates = vec![2.0; 11];
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("synth") && msg.contains("arrival_rates"), "{msg}");

        let mut cfg = RunConfig::default();
        cfg.format_version = 2;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn files_round_trip_and_bad_files_fail_with_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let mut cfg = RunConfig::default();
        cfg.train.epochs = 7;
        cfg.save(&path).unwrap();
        let back = RunConfig::load(&path).unwrap();
        assert_eq!(back.train.epochs, 7);

        std::fs::write(&path, "{\"hidden\": 0}").unwrap();
        let msg = RunConfig::load(&path).unwrap_err().to_string();
        assert!(msg.contains("run.json"), "{msg}");
        assert!(msg.contains("hidden"), "{msg}");
    }
}
