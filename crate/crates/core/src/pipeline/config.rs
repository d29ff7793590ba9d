use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::error::{Error, Result};
use crate::losses::{LossOptions, LossWeights};
use crate::networks::{NetConfig, Variant};

/// Everything a training run depends on. Unknown JSON keys are rejected;
/// missing keys take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub net: NetConfig,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub loss: LossWeights,
    pub loss_options: LossOptions,
    pub seed: u64,
    pub dataset: PathBuf,
    pub train_split: Split,
    /// Split scored at every epoch boundary; skipped when empty.
    pub heldout_split: Split,
    pub checkpoint: PathBuf,
    pub teacher_checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Teacher,
            net: NetConfig::default(),
            lr: 1e-3,
            steps: 300,
            batch_size: 2,
            clip_norm: 5.0,
            loss: LossWeights::default(),
            loss_options: LossOptions::default(),
            seed: 0,
            dataset: PathBuf::from("data"),
            train_split: Split::Known,
            heldout_split: Split::Novel,
            checkpoint: PathBuf::from("model.ckpt"),
            teacher_checkpoint: None,
            log: None,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.loss.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::config("clip_norm must be > 0"));
        }
        Ok(())
    }
}

/// Sidecar written next to every checkpoint so it can be rebuilt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub variant: Variant,
    pub net: NetConfig,
}

impl CheckpointMeta {
    pub fn path_for(ckpt: &Path) -> PathBuf {
        let mut s = ckpt.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    pub fn save(&self, ckpt: &Path) -> Result<()> {
        let path = Self::path_for(ckpt);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(ckpt: &Path) -> Result<Self> {
        let path = Self::path_for(ckpt);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
