//! Depth-completion objectives: scale-invariant log distance, structural
//! similarity of covariance maps, masked edge variations, and their
//! weighted combinations for teacher and student training.
//!
//! Depth arguments are `[.., H, W]` variables; every leading axis is
//! treated as batch. Per-sample losses are averaged over the batch.

mod structural;

use serde::{Deserialize, Serialize};

pub use structural::{structural_map, StructWindow, STRUCT_WINDOW};

use crate::error::{Error, Result};
use crate::networks::Variant;
use crate::numerics::{Tape, Tensor, Var};

pub const LOG_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub theta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 3.0, beta: 7.0, lambda: 0.85, theta: 1e-4, lambda1: 0.1, lambda2: 0.3, lambda3: 0.7 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.lambda, self.theta, self.lambda1, self.lambda2, self.lambda3];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config("loss weights must be finite and nonnegative"));
        }
        if self.lambda > 1.0 {
            return Err(Error::config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.theta == 0.0 {
            return Err(Error::config("theta must be > 0"));
        }
        Ok(())
    }
}

/// Which pair of structural maps the structural loss compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructuralPairing {
    /// `MSE(C(gt, t), C(t, s))`
    #[default]
    Eq10,
    /// `MSE(C(gt, s), C(t, s))`
    Prose,
}

/// Pixels counted by the distance term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceRegion {
    #[default]
    AllValid,
    /// Valid pixels inside the transparency mask.
    Masked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LossOptions {
    pub structural_pairing: StructuralPairing,
    /// Use one whole-image window instead of sliding 7x7 windows.
    pub structural_global: bool,
    pub distance_region: DistanceRegion,
}

impl LossOptions {
    pub fn struct_window(&self) -> StructWindow {
        if self.structural_global {
            StructWindow::Global
        } else {
            StructWindow::Sliding(STRUCT_WINDOW)
        }
    }
}

pub(crate) fn batch_hw(dims: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    if dims.len() < 2 {
        return Err(Error::shape(format!("{what} needs [.., H, W], got {dims:?}")));
    }
    let (h, w) = (dims[dims.len() - 2], dims[dims.len() - 1]);
    Ok((dims[..dims.len() - 2].iter().product(), h, w))
}

/// Binary map of pixels with usable ground truth, with per-sample counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidMask {
    mask: Tensor,
    counts: Vec<usize>,
}

impl ValidMask {
    /// Pixels where `gt > 0`.
    pub fn from_gt(gt: &Tensor) -> Result<Self> {
        Self::from_mask(gt.map(|g| if g > 0.0 { 1.0 } else { 0.0 }))
    }

    /// Wraps an existing binary map.
    pub fn from_mask(mask: Tensor) -> Result<Self> {
        if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::input("valid mask must be binary"));
        }
        let (b, h, w) = batch_hw(mask.dims(), "valid mask")?;
        let counts =
            (0..b).map(|s| mask.data()[s * h * w..(s + 1) * h * w].iter().filter(|&&m| m == 1.0).count()).collect();
        Ok(ValidMask { mask, counts })
    }

    /// Intersection with another binary map of the same shape.
    pub fn restrict(&self, other: &Tensor) -> Result<Self> {
        Self::from_mask(self.mask.zip_map(other, |a, b| if a == 1.0 && b == 1.0 { 1.0 } else { 0.0 })?)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.mask
    }

    /// Valid pixel count per sample.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
}

fn check_same(a: &[usize], b: &[usize], what: &str) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("{what}: {a:?} vs {b:?}")));
    }
    Ok(())
}

/// Row sums of a `[B, P]` variable as `[B, 1]`.
fn row_sums<'t>(x: &Var<'t>) -> Result<Var<'t>> {
    let p = x.dims()[1];
    x.matmul(&x.tape().constant(Tensor::ones(&[p, 1])))
}

/// Per-sample `sqrt(mean(d^2) - lambda * mean(d)^2)` over valid pixels with
/// `d = log(pred) - log(target)`, averaged over the batch.
pub fn silog_term<'t>(pred: &Var<'t>, target: &Var<'t>, valid: &ValidMask, lambda: f64) -> Result<Var<'t>> {
    check_same(&pred.dims(), &target.dims(), "silog inputs")?;
    check_same(&pred.dims(), valid.tensor().dims(), "silog valid mask")?;
    let (b, h, w) = batch_hw(&pred.dims(), "silog")?;
    if let Some(s) = valid.counts().iter().position(|&k| k == 0) {
        return Err(Error::input(format!("sample {s} has no valid pixels")));
    }
    for (name, v) in [("prediction", pred), ("target", target)] {
        let val = v.value();
        let neg = val.data().iter().zip(valid.tensor().data()).any(|(&d, &m)| m == 1.0 && d < 0.0);
        if neg {
            return Err(Error::input(format!("negative {name} depth on a valid pixel")));
        }
    }
    let tape = pred.tape();
    let m = tape.constant(valid.tensor().reshape(&[b, h * w])?);
    let inv_k = tape.constant(Tensor::new(&[b, 1], valid.counts().iter().map(|&k| 1.0 / k as f64).collect())?);
    let d = pred.log_clamped(LOG_EPS)?.sub(&target.log_clamped(LOG_EPS)?)?.reshape(&[b, h * w])?.mul(&m)?;
    let mean_sq = row_sums(&d.square()?)?.mul(&inv_k)?;
    let mean = row_sums(&d)?.mul(&inv_k)?;
    mean_sq.sub(&mean.square()?.scale(lambda)?)?.sqrt_clamped()?.mean()
}

/// `alpha * silog(s, gt) + beta * silog(s, t)`.
pub fn silog_loss<'t>(
    d_s: &Var<'t>,
    d_t: &Var<'t>,
    d_gt: &Var<'t>,
    valid: &ValidMask,
    w: &LossWeights,
) -> Result<Var<'t>> {
    let gt_term = silog_term(d_s, d_gt, valid, w.lambda)?.scale(w.alpha)?;
    let t_term = silog_term(d_s, d_t, valid, w.lambda)?.scale(w.beta)?;
    gt_term.add(&t_term)
}

/// Ground-truth half of the distance loss, used to train the teacher.
pub fn teacher_loss<'t>(d_t: &Var<'t>, d_gt: &Var<'t>, valid: &ValidMask, w: &LossWeights) -> Result<Var<'t>> {
    silog_term(d_t, d_gt, valid, w.lambda)?.scale(w.alpha)
}

pub fn mse<'t>(a: &Var<'t>, b: &Var<'t>) -> Result<Var<'t>> {
    check_same(&a.dims(), &b.dims(), "mse")?;
    a.sub(b)?.square()?.mean()
}

/// Mean squared difference between two structural maps, selected by
/// `pairing`.
pub fn structural_loss<'t>(
    d_gt: &Var<'t>,
    d_t: &Var<'t>,
    d_s: &Var<'t>,
    theta: f64,
    opts: &LossOptions,
) -> Result<Var<'t>> {
    let win = opts.struct_window();
    let reference = match opts.structural_pairing {
        StructuralPairing::Eq10 => structural_map(d_gt, d_t, win, theta)?,
        StructuralPairing::Prose => structural_map(d_gt, d_s, win, theta)?,
    };
    let student = structural_map(d_t, d_s, win, theta)?;
    mse(&reference, &student)
}

/// Horizontal `[.., H, W-1]` and vertical `[.., H-1, W]` absolute
/// differences, kept only where both endpoints are inside `mask`.
pub fn edge_variations<'t>(d: &Var<'t>, mask: &Tensor) -> Result<(Var<'t>, Var<'t>)> {
    check_same(&d.dims(), mask.dims(), "edge variations")?;
    let (b, h, w) = batch_hw(&d.dims(), "edge variations")?;
    if h < 2 || w < 2 {
        return Err(Error::shape(format!("edge variations need H, W >= 2, got {h}x{w}")));
    }
    let x = d.reshape(&[b, h, w])?;
    let tape = d.tape();
    let m = mask.data();
    let mx = Tensor::from_fn(&[b, h, w - 1], |i| {
        let (s, r, c) = (i / (h * (w - 1)), (i / (w - 1)) % h, i % (w - 1));
        let at = s * h * w + r * w + c;
        m[at] * m[at + 1]
    });
    let my = Tensor::from_fn(&[b, h - 1, w], |i| {
        let (s, r, c) = (i / ((h - 1) * w), (i / w) % (h - 1), i % w);
        let at = s * h * w + r * w + c;
        m[at] * m[at + w]
    });
    let vx = x.narrow(2, 0, w - 1)?.sub(&x.narrow(2, 1, w - 1)?)?.abs()?.mul(&tape.constant(mx))?;
    let vy = x.narrow(1, 0, h - 1)?.sub(&x.narrow(1, 1, h - 1)?)?.abs()?.mul(&tape.constant(my))?;
    Ok((vx, vy))
}

/// `MSE(V_x^a, V_x^b) + MSE(V_y^a, V_y^b)`.
pub fn edge_loss<'t>(d_a: &Var<'t>, d_b: &Var<'t>, mask: &Tensor) -> Result<Var<'t>> {
    let (ax, ay) = edge_variations(d_a, mask)?;
    let (bx, by) = edge_variations(d_b, mask)?;
    mse(&ax, &bx)?.add(&mse(&ay, &by)?)
}

/// Named loss terms of one evaluation. Absent terms are `None`.
pub struct LossParts<'t> {
    pub total: Var<'t>,
    pub distance: Var<'t>,
    pub structural: Option<Var<'t>>,
    pub edge_gt: Option<Var<'t>>,
    pub edge_teacher: Option<Var<'t>>,
}

impl LossParts<'_> {
    /// `(name, value)` pairs for logging.
    pub fn values(&self) -> Vec<(&'static str, f64)> {
        let mut v = vec![("total", self.total.item()), ("distance", self.distance.item())];
        for (name, t) in
            [("structural", &self.structural), ("edge_gt", &self.edge_gt), ("edge_teacher", &self.edge_teacher)]
        {
            if let Some(t) = t {
                v.push((name, t.item()));
            }
        }
        v
    }
}

/// `L_d + lambda1 * L_s + lambda2 * L_e(gt, s) + lambda3 * L_e(t, s)`.
#[allow(clippy::too_many_arguments)]
pub fn total_loss<'t>(
    d_s: &Var<'t>,
    d_t: &Var<'t>,
    d_gt: &Var<'t>,
    valid: &ValidMask,
    mask: &Tensor,
    w: &LossWeights,
    opts: &LossOptions,
) -> Result<LossParts<'t>> {
    let valid = distance_valid(valid, mask, opts)?;
    let distance = silog_loss(d_s, d_t, d_gt, &valid, w)?;
    let structural = structural_loss(d_gt, d_t, d_s, w.theta, opts)?;
    let edge_gt = edge_loss(d_gt, d_s, mask)?;
    let edge_teacher = edge_loss(d_t, d_s, mask)?;
    let total = distance
        .add(&structural.scale(w.lambda1)?)?
        .add(&edge_gt.scale(w.lambda2)?)?
        .add(&edge_teacher.scale(w.lambda3)?)?;
    Ok(LossParts {
        total,
        distance,
        structural: Some(structural),
        edge_gt: Some(edge_gt),
        edge_teacher: Some(edge_teacher),
    })
}

fn distance_valid(valid: &ValidMask, mask: &Tensor, opts: &LossOptions) -> Result<ValidMask> {
    match opts.distance_region {
        DistanceRegion::AllValid => Ok(valid.clone()),
        DistanceRegion::Masked => valid.restrict(mask),
    }
}

/// Root mean squared error over valid pixels, per sample then batch mean.
pub fn rmse_loss<'t>(pred: &Var<'t>, target: &Var<'t>, valid: &ValidMask) -> Result<Var<'t>> {
    check_same(&pred.dims(), &target.dims(), "rmse inputs")?;
    let (b, h, w) = batch_hw(&pred.dims(), "rmse")?;
    if let Some(s) = valid.counts().iter().position(|&k| k == 0) {
        return Err(Error::input(format!("sample {s} has no valid pixels")));
    }
    let tape = pred.tape();
    let m = tape.constant(valid.tensor().reshape(&[b, h * w])?);
    let inv_k = tape.constant(Tensor::new(&[b, 1], valid.counts().iter().map(|&k| 1.0 / k as f64).collect())?);
    let d = pred.sub(target)?.reshape(&[b, h * w])?.mul(&m)?;
    row_sums(&d.square()?)?.mul(&inv_k)?.sqrt_clamped()?.mean()
}

/// Student objective for `variant`. `d_t` is required exactly when the
/// variant trains against a teacher.
#[allow(clippy::too_many_arguments)]
pub fn student_objective<'t>(
    variant: Variant,
    d_s: &Var<'t>,
    d_t: Option<&Var<'t>>,
    d_gt: &Var<'t>,
    valid: &ValidMask,
    mask: &Tensor,
    w: &LossWeights,
    opts: &LossOptions,
) -> Result<LossParts<'t>> {
    let need_teacher = || d_t.ok_or_else(|| Error::config(format!("{variant} needs teacher predictions")));
    match variant {
        Variant::Student | Variant::StuNoCfcm => total_loss(d_s, need_teacher()?, d_gt, valid, mask, w, opts),
        Variant::StuNoDl => {
            let d_t = need_teacher()?;
            let valid = distance_valid(valid, mask, opts)?;
            let distance = rmse_loss(d_s, d_gt, &valid)?.add(&rmse_loss(d_s, d_t, &valid)?)?;
            Ok(LossParts { total: distance, distance, structural: None, edge_gt: None, edge_teacher: None })
        }
        Variant::StuAlone => {
            let valid = distance_valid(valid, mask, opts)?;
            let distance = silog_term(d_s, d_gt, &valid, w.lambda)?.scale(w.alpha)?;
            let edge_gt = edge_loss(d_gt, d_s, mask)?;
            Ok(LossParts {
                total: distance.add(&edge_gt.scale(w.lambda2)?)?,
                distance,
                structural: None,
                edge_gt: Some(edge_gt),
                edge_teacher: None,
            })
        }
        teacher => Err(Error::config(format!("{teacher} is not a student variant"))),
    }
}

/// Evaluates `f` on a fresh tape over constant copies of `tensors` and
/// returns the scalar result. Convenient for tensor-level loss values.
pub fn eval_scalar(tensors: &[&Tensor], f: impl for<'t> Fn(&[Var<'t>]) -> Result<Var<'t>>) -> Result<f64> {
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = tensors.iter().map(|t| tape.constant((*t).clone())).collect();
    Ok(f(&vars)?.item())
}
