//! End-to-end depth-completion networks: the correlation-attention teacher
//! and the convolutional student, plus their ablation variants.

mod checkpoint;
mod student;
mod teacher;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use student::{FuseKind, StudentNet};
pub use teacher::{StreamKind, TeacherNet};

use crate::blocks::{CfcmConfig, ScoreChannels, ScoreSquash};
use crate::error::{Error, Result};
use crate::numerics::{Bound, Mode, ParamStore, Tape, Tensor, Var};
use crate::rng::DetRng;

pub const TEACHER_PREFIX: &str = "teacher";
pub const STUDENT_PREFIX: &str = "student";

/// `softplus^-1(1)`: head bias so that freshly built nets predict about 1 m.
pub(crate) const HEAD_BIAS_INIT: f64 = 0.541_324_854_612_918_1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Teacher,
    TchSaRgb,
    TchSaDepth,
    Student,
    StuNoCfcm,
    StuNoDl,
    StuAlone,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Teacher,
        Variant::TchSaRgb,
        Variant::TchSaDepth,
        Variant::Student,
        Variant::StuNoCfcm,
        Variant::StuNoDl,
        Variant::StuAlone,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Teacher => "teacher",
            Variant::TchSaRgb => "tch_sa_rgb",
            Variant::TchSaDepth => "tch_sa_depth",
            Variant::Student => "student",
            Variant::StuNoCfcm => "stu_no_cfcm",
            Variant::StuNoDl => "stu_no_dl",
            Variant::StuAlone => "stu_alone",
        }
    }

    pub fn is_teacher(self) -> bool {
        matches!(self, Variant::Teacher | Variant::TchSaRgb | Variant::TchSaDepth)
    }

    /// Whether training this variant consumes a teacher's predictions.
    pub fn needs_teacher(self) -> bool {
        matches!(self, Variant::Student | Variant::StuNoCfcm | Variant::StuNoDl)
    }

    pub fn prefix(self) -> &'static str {
        if self.is_teacher() {
            TEACHER_PREFIX
        } else {
            STUDENT_PREFIX
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Variant::ALL.into_iter().find(|v| v.name() == norm).ok_or_else(|| {
            let known: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
            Error::config(format!("unknown variant {s:?}; expected one of {}", known.join(", ")))
        })
    }
}

/// Architecture hyperparameters shared by both network families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub stages: usize,
    pub window: usize,
    pub patch: usize,
    pub teacher_width: usize,
    /// Attention heads per teacher stage.
    pub teacher_heads: Vec<usize>,
    pub student_width: usize,
    pub scale_scores: bool,
    pub mask_shifted: bool,
    pub score_squash: ScoreSquash,
    pub score_channels: ScoreChannels,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            stages: 4,
            window: 4,
            patch: 4,
            teacher_width: 32,
            teacher_heads: vec![1, 2, 4, 8],
            student_width: 16,
            scale_scores: true,
            mask_shifted: false,
            score_squash: ScoreSquash::Sigmoid,
            score_channels: ScoreChannels::PerChannel,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 {
            return Err(Error::config("stages must be >= 1"));
        }
        if self.teacher_heads.len() != self.stages {
            return Err(Error::config(format!(
                "{} teacher head counts for {} stages",
                self.teacher_heads.len(),
                self.stages
            )));
        }
        if self.patch < 2 || !self.patch.is_multiple_of(2) {
            return Err(Error::config(format!("patch must be even and >= 2, got {}", self.patch)));
        }
        if self.window == 0 || self.teacher_width == 0 || self.student_width < 2 {
            return Err(Error::config("window and widths must be positive"));
        }
        Ok(())
    }

    pub fn cfcm(&self) -> CfcmConfig {
        CfcmConfig { squash: self.score_squash, score_channels: self.score_channels }
    }

    /// Side length every input must be a multiple of for `variant`.
    pub fn alignment(&self, variant: Variant) -> usize {
        let down = 1usize << (self.stages - 1);
        if variant.is_teacher() {
            self.patch * down
        } else {
            2 * down
        }
    }

    pub fn check_input(&self, variant: Variant, h: usize, w: usize) -> Result<()> {
        let a = self.alignment(variant);
        if h == 0 || w == 0 || !h.is_multiple_of(a) || !w.is_multiple_of(a) {
            return Err(Error::shape(format!("{variant} needs input sides divisible by {a}, got {h}x{w}")));
        }
        Ok(())
    }
}

/// A depth-completion network evaluated on batched `[N, 3, H, W]` RGB and
/// `[N, 1, H, W]` masked depth, returning `[N, 1, H, W]` positive depth.
pub trait DepthNet {
    fn variant(&self) -> Variant;

    fn config(&self) -> &NetConfig;

    fn forward<'t>(&self, p: &Bound<'t>, rgb: &Var<'t>, depth: &Var<'t>, mode: Mode) -> Result<Var<'t>>;

    fn prefix(&self) -> &'static str {
        self.variant().prefix()
    }
}

/// Either network family behind one type.
#[derive(Clone, Debug)]
pub enum Network {
    Teacher(TeacherNet),
    Student(StudentNet),
}

impl DepthNet for Network {
    fn variant(&self) -> Variant {
        match self {
            Network::Teacher(n) => n.variant(),
            Network::Student(n) => n.variant(),
        }
    }

    fn config(&self) -> &NetConfig {
        match self {
            Network::Teacher(n) => n.config(),
            Network::Student(n) => n.config(),
        }
    }

    fn forward<'t>(&self, p: &Bound<'t>, rgb: &Var<'t>, depth: &Var<'t>, mode: Mode) -> Result<Var<'t>> {
        match self {
            Network::Teacher(n) => n.forward(p, rgb, depth, mode),
            Network::Student(n) => n.forward(p, rgb, depth, mode),
        }
    }
}

/// Builds the network for `variant`, registering its parameters in `store`.
pub fn build_variant(variant: Variant, cfg: &NetConfig, store: &mut ParamStore, rng: &mut DetRng) -> Result<Network> {
    cfg.validate()?;
    Ok(if variant.is_teacher() {
        Network::Teacher(TeacherNet::new(variant, cfg, store, rng)?)
    } else {
        Network::Student(StudentNet::new(variant, cfg, store, rng)?)
    })
}

/// Zeroes depth wherever `mask` is 1. `mask` must be binary and match
/// `depth` in shape.
pub fn mask_depth(depth: &Tensor, mask: &Tensor) -> Result<Tensor> {
    if depth.dims() != mask.dims() {
        return Err(Error::shape(format!("depth {:?} vs mask {:?}", depth.dims(), mask.dims())));
    }
    if let Some(bad) = mask.data().iter().find(|&&m| m != 0.0 && m != 1.0) {
        return Err(Error::input(format!("mask must be binary, found {bad}")));
    }
    depth.zip_map(mask, |d, m| if m == 1.0 { 0.0 } else { d })
}

/// Stacks per-sample `[C, H, W]` (or `[H, W]`) tensors into `[N, C, H, W]`.
pub fn stack(items: &[&Tensor]) -> Result<Tensor> {
    let first = items.first().ok_or_else(|| Error::input("cannot stack an empty batch"))?;
    let inner: Vec<usize> = match first.rank() {
        2 => vec![1, first.dims()[0], first.dims()[1]],
        3 => first.dims().to_vec(),
        r => return Err(Error::shape(format!("cannot stack rank-{r} tensors"))),
    };
    let mut data = Vec::with_capacity(items.len() * first.numel());
    for t in items {
        if t.dims() != first.dims() {
            return Err(Error::shape(format!("batch items differ: {:?} vs {:?}", first.dims(), t.dims())));
        }
        data.extend_from_slice(t.data());
    }
    let mut dims = vec![items.len()];
    dims.extend(inner);
    Tensor::new(&dims, data)
}

/// Runs `net` without recording gradients and returns `[N, 1, H, W]` depth.
/// `depth` must already be masked.
pub fn predict(net: &impl DepthNet, store: &ParamStore, rgb: &Tensor, depth: &Tensor) -> Result<Tensor> {
    let tape = Tape::new();
    let p = store.bind(&tape, true);
    let out = net.forward(&p, &tape.constant(rgb.clone()), &tape.constant(depth.clone()), Mode::Eval)?;
    let value = out.value();
    Ok((*value).clone())
}

/// Single-sample convenience: `rgb [3, H, W]`, `raw [H, W]`, `mask [H, W]`
/// to a completed `[H, W]` depth map.
pub fn complete_sample(
    net: &impl DepthNet,
    store: &ParamStore,
    rgb: &Tensor,
    raw: &Tensor,
    mask: &Tensor,
) -> Result<Tensor> {
    let masked = mask_depth(raw, mask)?;
    let out = predict(net, store, &stack(&[rgb])?, &stack(&[&masked])?)?;
    out.reshape(raw.dims())
}
