use super::{DepthNet, NetConfig, Variant, HEAD_BIAS_INIT, TEACHER_PREFIX};
use crate::blocks::{AttentionConfig, BlockMode, PatchEmbed, PatchMerge, PcbBlock};
use crate::error::{Error, Result};
use crate::numerics::nn::Linear;
use crate::numerics::{concat, Bound, Mode, ParamStore, Tensor, Var};
use crate::rng::DetRng;

/// Which modalities feed the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamKind {
    /// RGB queries/keys, depth values.
    Correlation,
    /// Self-attention over RGB only.
    RgbOnly,
    /// Self-attention over depth only.
    DepthOnly,
}

#[derive(Clone, Debug)]
struct EncoderStage {
    pcb: PcbBlock,
    merge_query: Option<PatchMerge>,
    merge_depth: Option<PatchMerge>,
}

#[derive(Clone, Debug)]
struct DecoderStage {
    fuse: Linear,
    attn: PcbBlock,
    up: Linear,
}

/// Patch embedding, four correlation stages joined by patch merging, and an
/// attention decoder that upsamples with pixel shuffle.
#[derive(Clone, Debug)]
pub struct TeacherNet {
    variant: Variant,
    cfg: NetConfig,
    pub streams: StreamKind,
    embed_rgb: Option<PatchEmbed>,
    embed_depth: Option<PatchEmbed>,
    encoder: Vec<EncoderStage>,
    decoder: Vec<DecoderStage>,
    head: Linear,
}

fn attention_cfg(cfg: &NetConfig, channels: usize, heads: usize) -> Result<AttentionConfig> {
    let mut a = AttentionConfig::new(cfg.window, channels, heads)?;
    a.scale_scores = cfg.scale_scores;
    a.mask_shifted = cfg.mask_shifted;
    Ok(a)
}

impl TeacherNet {
    pub fn new(variant: Variant, cfg: &NetConfig, store: &mut ParamStore, rng: &mut DetRng) -> Result<Self> {
        let streams = match variant {
            Variant::Teacher => StreamKind::Correlation,
            Variant::TchSaRgb => StreamKind::RgbOnly,
            Variant::TchSaDepth => StreamKind::DepthOnly,
            other => return Err(Error::config(format!("{other} is not a teacher variant"))),
        };
        let pre = TEACHER_PREFIX;
        let c0 = cfg.teacher_width;
        let width = |s: usize| c0 << s;
        let embed_rgb = match streams {
            StreamKind::DepthOnly => None,
            _ => Some(PatchEmbed::new(store, &format!("{pre}.embed_rgb"), 3, cfg.patch, c0, rng)?),
        };
        let embed_depth = match streams {
            StreamKind::RgbOnly => None,
            _ => Some(PatchEmbed::new(store, &format!("{pre}.embed_depth"), 1, cfg.patch, c0, rng)?),
        };
        let mode = match streams {
            StreamKind::Correlation => BlockMode::Correlation,
            _ => BlockMode::SelfAttention,
        };

        let mut encoder = Vec::with_capacity(cfg.stages);
        for s in 0..cfg.stages {
            let path = format!("{pre}.stage{s}");
            let acfg = attention_cfg(cfg, width(s), cfg.teacher_heads[s])?;
            let pcb = PcbBlock::new(store, &format!("{path}.pcb"), acfg, mode, rng)?;
            let last = s + 1 == cfg.stages;
            let merge_query =
                if last { None } else { Some(PatchMerge::new(store, &format!("{path}.merge_query"), width(s), rng)?) };
            let merge_depth = if last || streams != StreamKind::Correlation {
                None
            } else {
                Some(PatchMerge::new(store, &format!("{path}.merge_depth"), width(s), rng)?)
            };
            encoder.push(EncoderStage { pcb, merge_query, merge_depth });
        }

        let out_width = (c0 / 2).max(1);
        let mut decoder = Vec::with_capacity(cfg.stages);
        for s in (0..cfg.stages).rev() {
            let path = format!("{pre}.dec{s}");
            let c = width(s);
            let fan_in = if s + 1 == cfg.stages { c } else { 2 * c };
            let next = if s == 0 { out_width } else { width(s - 1) };
            let acfg = attention_cfg(cfg, c, cfg.teacher_heads[s])?;
            decoder.push(DecoderStage {
                fuse: Linear::new(store, &format!("{path}.fuse"), fan_in, c, true, rng)?,
                attn: PcbBlock::new(store, &format!("{path}.attn"), acfg, BlockMode::SelfAttention, rng)?,
                up: Linear::new(store, &format!("{path}.up"), c, 4 * next, true, rng)?,
            });
        }
        let head = Linear::new(store, &format!("{pre}.head"), out_width, 1, true, rng)?;
        if let Some(b) = head.bias_name() {
            store.set_value(b, Tensor::full(&[1], HEAD_BIAS_INIT))?;
        }
        Ok(TeacherNet { variant, cfg: cfg.clone(), streams, embed_rgb, embed_depth, encoder, decoder, head })
    }

    /// Encoder outputs, finest first, as channels-last `[N, h, w, C]` grids.
    pub fn encode<'t>(&self, p: &Bound<'t>, rgb: &Var<'t>, depth: &Var<'t>) -> Result<Vec<Var<'t>>> {
        let rgb_tok = match &self.embed_rgb {
            Some(e) => Some(e.forward(p, rgb)?),
            None => None,
        };
        let depth_tok = match &self.embed_depth {
            Some(e) => Some(e.forward(p, depth)?),
            None => None,
        };
        let (mut query, mut values) = match (rgb_tok, depth_tok) {
            (Some(r), Some(d)) => (r, d),
            (Some(r), None) => (r, r),
            (None, Some(d)) => (d, d),
            (None, None) => unreachable!("teacher always embeds one modality"),
        };
        let mut skips = Vec::with_capacity(self.encoder.len());
        for stage in &self.encoder {
            let f = stage.pcb.forward(p, &query, &values)?;
            skips.push(f);
            if let Some(m) = &stage.merge_query {
                query = m.forward(p, &f)?;
                values = match &stage.merge_depth {
                    Some(md) => md.forward(p, &values)?,
                    None => query,
                };
            }
        }
        Ok(skips)
    }
}

impl DepthNet for TeacherNet {
    fn variant(&self) -> Variant {
        self.variant
    }

    fn config(&self) -> &NetConfig {
        &self.cfg
    }

    fn forward<'t>(&self, p: &Bound<'t>, rgb: &Var<'t>, depth: &Var<'t>, _mode: Mode) -> Result<Var<'t>> {
        let rd = rgb.dims();
        let [n, 3, h, w] = rd[..] else {
            return Err(Error::shape(format!("teacher rgb must be [N, 3, H, W], got {rd:?}")));
        };
        if depth.dims() != [n, 1, h, w] {
            return Err(Error::shape(format!("teacher depth must be [{n}, 1, {h}, {w}], got {:?}", depth.dims())));
        }
        self.cfg.check_input(self.variant, h, w)?;

        let skips = self.encode(p, rgb, depth)?;
        let mut x: Option<Var<'t>> = None;
        for (stage, skip) in self.decoder.iter().zip(skips.iter().rev()) {
            let input = match x {
                Some(up) => concat(&[up, *skip], 3)?,
                None => *skip,
            };
            let fused = stage.fuse.forward(p, &input)?;
            let refined = stage.attn.forward(p, &fused, &fused)?;
            // [N, h, w, 4C'] -> [N, 4C', h, w] -> shuffle -> back to channels-last
            let up = stage.up.forward(p, &refined)?.permute(&[0, 3, 1, 2])?.pixel_shuffle()?.permute(&[0, 2, 3, 1])?;
            x = Some(up);
        }
        let feats = x.expect("at least one decoder stage");
        let depth_map = self.head.forward(p, &feats)?.permute(&[0, 3, 1, 2])?;
        depth_map.upsample_bilinear(self.cfg.patch / 2)?.softplus()
    }
}
