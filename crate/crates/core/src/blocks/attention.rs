use std::rc::Rc;

use super::window::shifted_window_mask;
use crate::error::{Error, Result};
use crate::numerics::nn::Linear;
use crate::numerics::{Bound, ParamKind, ParamStore, Tape, Tensor, Var};
use crate::rng::DetRng;

/// Attention hyperparameters of one stage.
#[derive(Clone, Copy, Debug)]
pub struct AttentionConfig {
    /// Configured window side; the bias table is sized for it.
    pub window: usize,
    pub heads: usize,
    pub head_dim: usize,
    /// Divide scores by `sqrt(head_dim)`.
    pub scale_scores: bool,
    /// Mask token pairs that only became neighbours through the cyclic shift.
    pub mask_shifted: bool,
}

impl AttentionConfig {
    pub fn new(window: usize, channels: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !channels.is_multiple_of(heads) {
            return Err(Error::config(format!("{heads} heads do not divide {channels} channels")));
        }
        if window == 0 {
            return Err(Error::config("window must be >= 1"));
        }
        Ok(AttentionConfig { window, heads, head_dim: channels / heads, scale_scores: true, mask_shifted: false })
    }

    pub fn channels(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn default_shift(&self) -> usize {
        self.window / 2
    }
}

/// Learnable `[(2W - 1)^2, heads]` table of relative position biases.
#[derive(Clone, Debug)]
pub struct RelPosBiasTable {
    name: String,
    window: usize,
    heads: usize,
}

impl RelPosBiasTable {
    pub fn new(store: &mut ParamStore, name: &str, window: usize, heads: usize) -> Result<Self> {
        let side = 2 * window - 1;
        store.insert(name, Tensor::zeros(&[side * side, heads]), ParamKind::Trainable)?;
        Ok(RelPosBiasTable { name: name.to_string(), window, heads })
    }

    /// Flat table index for every `(head, i, j)` of an `eff x eff` window,
    /// with `eff <= window`. Depends only on the window geometry.
    pub fn index_map(&self, eff: usize) -> Vec<usize> {
        let t = eff * eff;
        let side = 2 * self.window - 1;
        let off = self.window as isize - 1;
        let mut idx = Vec::with_capacity(self.heads * t * t);
        for h in 0..self.heads {
            for i in 0..t {
                for j in 0..t {
                    let dy = (i / eff) as isize - (j / eff) as isize + off;
                    let dx = (i % eff) as isize - (j % eff) as isize + off;
                    let row = dy as usize * side + dx as usize;
                    idx.push(row * self.heads + h);
                }
            }
        }
        idx
    }

    /// Gathered `[heads, T, T]` bias for an `eff x eff` window.
    pub fn bias<'t>(&self, p: &Bound<'t>, eff: usize) -> Result<Var<'t>> {
        if eff > self.window {
            return Err(Error::shape(format!("window {eff} exceeds bias table window {}", self.window)));
        }
        let t = eff * eff;
        p.var(&self.name)?.gather(Rc::new(self.index_map(eff)), &[self.heads, t, t])
    }
}

/// Windowed multi-head attention where queries and keys come from one token
/// source and values from another, followed by an output projection and a
/// residual add.
#[derive(Clone, Debug)]
pub struct WindowAttention {
    pub cfg: AttentionConfig,
    q: Linear,
    k: Linear,
    v: Linear,
    proj: Linear,
    pub bias: RelPosBiasTable,
}

/// Output of [`WindowAttention::forward`].
pub struct AttentionOutput<'t> {
    /// `[B, T, C]`, residual included.
    pub out: Var<'t>,
    /// `[B * heads, T, T]` softmax weights.
    pub weights: Var<'t>,
}

impl WindowAttention {
    pub fn new(store: &mut ParamStore, path: &str, cfg: AttentionConfig, rng: &mut DetRng) -> Result<Self> {
        let c = cfg.channels();
        Ok(WindowAttention {
            cfg,
            q: Linear::new(store, &format!("{path}.q"), c, c, true, rng)?,
            k: Linear::new(store, &format!("{path}.k"), c, c, true, rng)?,
            v: Linear::new(store, &format!("{path}.v"), c, c, true, rng)?,
            proj: Linear::new(store, &format!("{path}.proj"), c, c, true, rng)?,
            bias: RelPosBiasTable::new(store, &format!("{path}.bias_table"), cfg.window, cfg.heads)?,
        })
    }

    /// Projection layers in `q, k, v, proj` order.
    pub fn projections(&self) -> [&Linear; 4] {
        [&self.q, &self.k, &self.v, &self.proj]
    }

    /// `softmax(Q K^T [/ sqrt(d)] + B [+ mask]) V`, projected, plus `residual`.
    ///
    /// All token inputs are `[B, T, C]` windows with `T = eff^2`. `mask`
    /// describes the shifted grid geometry `(h, w, shift)` when masking is
    /// enabled.
    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        query_src: &Var<'t>,
        value_src: &Var<'t>,
        residual: &Var<'t>,
        mask: Option<(usize, usize, usize)>,
    ) -> Result<AttentionOutput<'t>> {
        let dims = query_src.dims();
        let [b, t, c] = dims[..] else {
            return Err(Error::shape(format!("attention expects [B, T, C], got {dims:?}")));
        };
        if value_src.dims() != dims || residual.dims() != dims {
            return Err(Error::shape(format!(
                "attention inputs differ: {dims:?} / {:?} / {:?}",
                value_src.dims(),
                residual.dims()
            )));
        }
        if c != self.cfg.channels() {
            return Err(Error::shape(format!("attention built for {} channels, got {c}", self.cfg.channels())));
        }
        let eff = (t as f64).sqrt().round() as usize;
        if eff * eff != t {
            return Err(Error::shape(format!("window token count {t} is not square")));
        }
        let (heads, hd) = (self.cfg.heads, self.cfg.head_dim);
        let split = |x: Var<'t>| -> Result<Var<'t>> {
            x.reshape(&[b, t, heads, hd])?.permute(&[0, 2, 1, 3])?.reshape(&[b * heads, t, hd])
        };
        let q = split(self.q.forward(p, query_src)?)?;
        let k = split(self.k.forward(p, query_src)?)?;
        let v = split(self.v.forward(p, value_src)?)?;

        let mut scores = q.bmm(&k, true)?;
        if self.cfg.scale_scores {
            scores = scores.scale(1.0 / (hd as f64).sqrt())?;
        }
        let bias = self.bias.bias(p, eff)?.reshape(&[heads * t * t])?;
        scores = scores.reshape(&[b, heads * t * t])?.add_bias(&bias)?;
        if let Some((h, w, shift)) = mask.filter(|m| self.cfg.mask_shifted && m.2 > 0) {
            scores = scores.add(&mask_constant(scores.tape(), b, heads, h, w, eff, shift)?)?;
        }
        let weights = scores.reshape(&[b * heads, t, t])?.softmax_last()?;
        let out = weights.bmm(&v, false)?.reshape(&[b, heads, t, hd])?.permute(&[0, 2, 1, 3])?.reshape(&[b, t, c])?;
        let out = self.proj.forward(p, &out)?.add(residual)?;
        Ok(AttentionOutput { out, weights })
    }
}

fn mask_constant<'t>(
    tape: &'t Tape,
    b: usize,
    heads: usize,
    h: usize,
    w: usize,
    eff: usize,
    shift: usize,
) -> Result<Var<'t>> {
    let per_window = shifted_window_mask(h, w, eff, shift);
    let t2 = eff * eff * eff * eff;
    let n_win = per_window.len() / t2;
    if !b.is_multiple_of(n_win) {
        return Err(Error::shape(format!("{b} windows do not tile a {h}x{w} grid")));
    }
    let mut data = Vec::with_capacity(b * heads * t2);
    for wi in 0..b {
        let m = &per_window[(wi % n_win) * t2..(wi % n_win + 1) * t2];
        for _ in 0..heads {
            data.extend_from_slice(m);
        }
    }
    Ok(tape.constant(Tensor::new(&[b, heads * t2], data)?))
}
