//! Consistent feature correlation: convolutional consistency scores gate
//! the RGB and depth features before they are added.

use crate::error::{Error, Result};
use crate::numerics::nn::{BatchNorm, Conv2d};
use crate::numerics::{concat, Bound, Mode, ParamStore, Var};
use crate::rng::DetRng;

/// How the raw consistency score is mapped before gating.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSquash {
    Sigmoid,
    Identity,
}

/// Whether a score is produced per feature channel or as one map shared
/// by all channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreChannels {
    PerChannel,
    Single,
}

#[derive(Clone, Copy, Debug)]
pub struct CfcmConfig {
    pub squash: ScoreSquash,
    pub score_channels: ScoreChannels,
}

impl Default for CfcmConfig {
    fn default() -> Self {
        CfcmConfig { squash: ScoreSquash::Sigmoid, score_channels: ScoreChannels::PerChannel }
    }
}

/// One score branch: `squash(conv1x1(conv1x1(own) ++ other))`.
#[derive(Clone, Debug)]
pub struct ConsistencyScore {
    pub aggregate: Conv2d,
    pub score: Conv2d,
    channels: usize,
    cfg: CfcmConfig,
}

impl ConsistencyScore {
    pub fn new(store: &mut ParamStore, path: &str, channels: usize, cfg: CfcmConfig, rng: &mut DetRng) -> Result<Self> {
        let wide = 2 * channels;
        let out = match cfg.score_channels {
            ScoreChannels::PerChannel => channels,
            ScoreChannels::Single => 1,
        };
        Ok(ConsistencyScore {
            aggregate: Conv2d::new(store, &format!("{path}.aggregate"), channels, wide, 1, 1, 0, rng)?,
            score: Conv2d::new(store, &format!("{path}.score"), wide + channels, out, 1, 1, 0, rng)?,
            channels,
            cfg,
        })
    }

    /// Score map for `own` given `other`; both `[N, C, H, W]`. The result is
    /// `[N, C, H, W]` (single-channel scores are broadcast).
    pub fn forward<'t>(&self, p: &Bound<'t>, own: &Var<'t>, other: &Var<'t>) -> Result<Var<'t>> {
        if own.dims() != other.dims() {
            return Err(Error::shape(format!("consistency score on {:?} and {:?}", own.dims(), other.dims())));
        }
        let agg = self.aggregate.forward(p, own)?;
        let raw = self.score.forward(p, &concat(&[agg, *other], 1)?)?;
        let s = match self.cfg.squash {
            ScoreSquash::Sigmoid => raw.sigmoid()?,
            ScoreSquash::Identity => raw,
        };
        match self.cfg.score_channels {
            ScoreChannels::PerChannel => Ok(s),
            ScoreChannels::Single => s.broadcast_channels(self.channels),
        }
    }
}

/// `F = C_I * I + C_D * D`, elementwise.
pub fn cfcm_fuse<'t>(rgb: &Var<'t>, depth: &Var<'t>, score_rgb: &Var<'t>, score_depth: &Var<'t>) -> Result<Var<'t>> {
    score_rgb.mul(rgb)?.add(&score_depth.mul(depth)?)
}

#[derive(Clone, Debug)]
pub struct Cfcm {
    pub rgb_branch: ConsistencyScore,
    pub depth_branch: ConsistencyScore,
}

impl Cfcm {
    pub fn new(store: &mut ParamStore, path: &str, channels: usize, cfg: CfcmConfig, rng: &mut DetRng) -> Result<Self> {
        Ok(Cfcm {
            rgb_branch: ConsistencyScore::new(store, &format!("{path}.score_rgb"), channels, cfg, rng)?,
            depth_branch: ConsistencyScore::new(store, &format!("{path}.score_depth"), channels, cfg, rng)?,
        })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, rgb: &Var<'t>, depth: &Var<'t>) -> Result<Var<'t>> {
        let c_i = self.rgb_branch.forward(p, rgb, depth)?;
        let c_d = self.depth_branch.forward(p, depth, rgb)?;
        cfcm_fuse(rgb, depth, &c_i, &c_d)
    }
}

/// `conv3x3(batch_norm(relu(x)))`, channel preserving.
#[derive(Clone, Debug)]
pub struct CnnBlock {
    pub bn: BatchNorm,
    pub conv: Conv2d,
}

impl CnnBlock {
    pub fn new(store: &mut ParamStore, path: &str, channels: usize, rng: &mut DetRng) -> Result<Self> {
        Ok(CnnBlock {
            bn: BatchNorm::new(store, &format!("{path}.bn"), channels)?,
            conv: Conv2d::new(store, &format!("{path}.conv"), channels, channels, 3, 1, 1, rng)?,
        })
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: &Var<'t>, mode: Mode) -> Result<Var<'t>> {
        let h = self.bn.forward(p, &x.relu()?, mode)?;
        self.conv.forward(p, &h)
    }
}
