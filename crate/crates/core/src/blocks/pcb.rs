//! Position correlation block: RGB tokens query RGB keys and read depth
//! values, first in regular windows and then in shifted windows.

use super::attention::{AttentionConfig, AttentionOutput, WindowAttention};
use super::window::{effective_window, shift_for, window_partition, window_reverse};
use crate::error::{Error, Result};
use crate::numerics::nn::{LayerNorm, Mlp};
use crate::numerics::{Bound, ParamStore, Var};
use crate::rng::DetRng;

/// Windowed cross-attention: queries and keys from `x_i`, values from `x_d`,
/// residual `rgb` (the un-normalized RGB windows).
pub fn pcb_attention<'t>(
    p: &Bound<'t>,
    attn: &WindowAttention,
    x_i: &Var<'t>,
    x_d: &Var<'t>,
    rgb: &Var<'t>,
) -> Result<AttentionOutput<'t>> {
    attn.forward(p, x_i, x_d, rgb, None)
}

/// Which token streams feed the block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockMode {
    /// Queries/keys from the RGB stream, values from the depth stream.
    Correlation,
    /// Plain windowed self-attention over a single stream.
    SelfAttention,
}

#[derive(Clone, Debug)]
pub struct PcbBlock {
    pub mode: BlockMode,
    pub cfg: AttentionConfig,
    ln_query: LayerNorm,
    ln_value: Option<LayerNorm>,
    attn1: WindowAttention,
    ln_mlp1: LayerNorm,
    mlp1: Mlp,
    ln_query2: LayerNorm,
    attn2: WindowAttention,
    ln_mlp2: LayerNorm,
    mlp2: Mlp,
}

impl PcbBlock {
    pub fn new(
        store: &mut ParamStore,
        path: &str,
        cfg: AttentionConfig,
        mode: BlockMode,
        rng: &mut DetRng,
    ) -> Result<Self> {
        let c = cfg.channels();
        let ln_value = match mode {
            BlockMode::Correlation => Some(LayerNorm::new(store, &format!("{path}.ln_d"), c)?),
            BlockMode::SelfAttention => None,
        };
        Ok(PcbBlock {
            mode,
            cfg,
            ln_query: LayerNorm::new(store, &format!("{path}.ln_i"), c)?,
            ln_value,
            attn1: WindowAttention::new(store, &format!("{path}.attn1"), cfg, rng)?,
            ln_mlp1: LayerNorm::new(store, &format!("{path}.ln_mlp1"), c)?,
            mlp1: Mlp::new(store, &format!("{path}.mlp1"), c, rng)?,
            ln_query2: LayerNorm::new(store, &format!("{path}.ln_i2"), c)?,
            attn2: WindowAttention::new(store, &format!("{path}.attn2"), cfg, rng)?,
            ln_mlp2: LayerNorm::new(store, &format!("{path}.ln_mlp2"), c)?,
            mlp2: Mlp::new(store, &format!("{path}.mlp2"), c, rng)?,
        })
    }

    pub fn attention(&self) -> [&WindowAttention; 2] {
        [&self.attn1, &self.attn2]
    }

    /// `rgb` and `depth` are channels-last `[N, H, W, C]` grids. In
    /// self-attention mode `depth` is ignored and `rgb` is the single stream.
    ///
    /// ```text
    /// x_i = LN(I), x_d = LN(D)
    /// F_qkv  = Attn(q,k <- x_i, v <- x_d) + I           regular windows
    /// F_corr = MLP(LN(F_qkv)) + F_qkv
    /// G      = Attn(q,k <- LN(F_corr), v <- x_d) + F_corr  shifted windows
    /// out    = MLP(LN(G)) + G
    /// ```
    pub fn forward<'t>(&self, p: &Bound<'t>, rgb: &Var<'t>, depth: &Var<'t>) -> Result<Var<'t>> {
        let dims = rgb.dims();
        let [n, h, w, c] = dims[..] else {
            return Err(Error::shape(format!("pcb expects [N, H, W, C], got {dims:?}")));
        };
        if c != self.cfg.channels() {
            return Err(Error::shape(format!("pcb built for {} channels, got {c}", self.cfg.channels())));
        }
        if self.mode == BlockMode::Correlation && depth.dims() != dims {
            return Err(Error::shape(format!("pcb rgb {dims:?} vs depth {:?}", depth.dims())));
        }
        let win = effective_window(h, w, self.cfg.window);
        let shift = shift_for(h, w, win);
        let part = |x: &Var<'t>, s: usize| window_partition(x, win, s);

        let x_i = self.ln_query.forward(p, rgb)?;
        let x_d = match (&self.ln_value, self.mode) {
            (Some(ln), BlockMode::Correlation) => ln.forward(p, depth)?,
            _ => x_i,
        };
        let f_qkv = self.attn1.forward(p, &part(&x_i, 0)?, &part(&x_d, 0)?, &part(rgb, 0)?, None)?.out;
        let f_qkv = window_reverse(&f_qkv, n, h, w, win, 0)?;
        let f_corr = self.mlp1.forward(p, &self.ln_mlp1.forward(p, &f_qkv)?)?.add(&f_qkv)?;

        let q2 = self.ln_query2.forward(p, &f_corr)?;
        let v2 = match self.mode {
            BlockMode::Correlation => x_d,
            BlockMode::SelfAttention => q2,
        };
        let g = self
            .attn2
            .forward(p, &part(&q2, shift)?, &part(&v2, shift)?, &part(&f_corr, shift)?, Some((h, w, shift)))?
            .out;
        let g = window_reverse(&g, n, h, w, win, shift)?;
        self.mlp2.forward(p, &self.ln_mlp2.forward(p, &g)?)?.add(&g)
    }
}
