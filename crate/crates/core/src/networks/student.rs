use super::{DepthNet, NetConfig, Variant, HEAD_BIAS_INIT, STUDENT_PREFIX};
use crate::blocks::{Cfcm, CnnBlock};
use crate::error::{Error, Result};
use crate::numerics::nn::Conv2d;
use crate::numerics::{concat, Bound, Mode, ParamStore, Tensor, Var};
use crate::rng::DetRng;

/// How a stage merges its RGB and depth features.
#[derive(Clone, Debug)]
pub enum FuseKind {
    Cfcm(Cfcm),
    /// Channel concat followed by a 1x1 convolution.
    Concat(Conv2d),
}

impl FuseKind {
    fn forward<'t>(&self, p: &Bound<'t>, rgb: &Var<'t>, depth: &Var<'t>) -> Result<Var<'t>> {
        match self {
            FuseKind::Cfcm(m) => m.forward(p, rgb, depth),
            FuseKind::Concat(conv) => conv.forward(p, &concat(&[*rgb, *depth], 1)?),
        }
    }
}

#[derive(Clone, Debug)]
struct EncoderStage {
    fuse: FuseKind,
    block: CnnBlock,
    down_rgb: Option<Conv2d>,
    down_fused: Option<Conv2d>,
}

#[derive(Clone, Debug)]
struct DecoderBlock {
    reduce: Conv2d,
    conv: Conv2d,
}

/// Stride-2 stems, four fusion stages with stride-2 downsampling between
/// them, and a conv + nearest-upsample decoder with skip connections.
#[derive(Clone, Debug)]
pub struct StudentNet {
    variant: Variant,
    cfg: NetConfig,
    stem_rgb: Conv2d,
    stem_depth: Conv2d,
    encoder: Vec<EncoderStage>,
    decoder: Vec<DecoderBlock>,
    head: Conv2d,
}

impl StudentNet {
    pub fn new(variant: Variant, cfg: &NetConfig, store: &mut ParamStore, rng: &mut DetRng) -> Result<Self> {
        if variant.is_teacher() {
            return Err(Error::config(format!("{variant} is not a student variant")));
        }
        let pre = STUDENT_PREFIX;
        let c0 = cfg.student_width;
        let width = |s: usize| c0 << s;
        let stem_rgb = Conv2d::new(store, &format!("{pre}.stem_rgb"), 3, c0, 3, 2, 1, rng)?;
        let stem_depth = Conv2d::new(store, &format!("{pre}.stem_depth"), 1, c0, 3, 2, 1, rng)?;

        let mut encoder = Vec::with_capacity(cfg.stages);
        for s in 0..cfg.stages {
            let path = format!("{pre}.stage{s}");
            let c = width(s);
            let fuse = if variant == Variant::StuNoCfcm {
                FuseKind::Concat(Conv2d::new(store, &format!("{path}.fuse"), 2 * c, c, 1, 1, 0, rng)?)
            } else {
                FuseKind::Cfcm(Cfcm::new(store, &format!("{path}.cfcm"), c, cfg.cfcm(), rng)?)
            };
            let block = CnnBlock::new(store, &format!("{path}.cnn"), c, rng)?;
            let (down_rgb, down_fused) = if s + 1 == cfg.stages {
                (None, None)
            } else {
                (
                    Some(Conv2d::new(store, &format!("{path}.down_rgb"), c, 2 * c, 3, 2, 1, rng)?),
                    Some(Conv2d::new(store, &format!("{path}.down_fused"), c, 2 * c, 3, 2, 1, rng)?),
                )
            };
            encoder.push(EncoderStage { fuse, block, down_rgb, down_fused });
        }

        let out_width = (c0 / 2).max(1);
        let mut decoder = Vec::with_capacity(cfg.stages);
        for s in (0..cfg.stages).rev() {
            let path = format!("{pre}.dec{s}");
            let c = width(s);
            let fan_in = if s + 1 == cfg.stages { c } else { 2 * c };
            let next = if s == 0 { out_width } else { width(s - 1) };
            decoder.push(DecoderBlock {
                reduce: Conv2d::new(store, &format!("{path}.reduce"), fan_in, c, 1, 1, 0, rng)?,
                conv: Conv2d::new(store, &format!("{path}.conv"), c, next, 3, 1, 1, rng)?,
            });
        }
        let head = Conv2d::new(store, &format!("{pre}.head"), out_width, 1, 1, 1, 0, rng)?;
        store.set_value(&format!("{pre}.head.bias"), Tensor::full(&[1], HEAD_BIAS_INIT))?;
        Ok(StudentNet { variant, cfg: cfg.clone(), stem_rgb, stem_depth, encoder, decoder, head })
    }

    /// Fused encoder features, finest first, as `[N, C, h, w]`.
    pub fn encode<'t>(&self, p: &Bound<'t>, rgb: &Var<'t>, depth: &Var<'t>, mode: Mode) -> Result<Vec<Var<'t>>> {
        let mut i = self.stem_rgb.forward(p, rgb)?;
        let mut d = self.stem_depth.forward(p, depth)?;
        let mut skips = Vec::with_capacity(self.encoder.len());
        for stage in &self.encoder {
            let f = stage.block.forward(p, &stage.fuse.forward(p, &i, &d)?, mode)?;
            skips.push(f);
            if let (Some(dr), Some(df)) = (&stage.down_rgb, &stage.down_fused) {
                i = dr.forward(p, &i)?;
                d = df.forward(p, &f)?;
            }
        }
        Ok(skips)
    }
}

impl DepthNet for StudentNet {
    fn variant(&self) -> Variant {
        self.variant
    }

    fn config(&self) -> &NetConfig {
        &self.cfg
    }

    fn forward<'t>(&self, p: &Bound<'t>, rgb: &Var<'t>, depth: &Var<'t>, mode: Mode) -> Result<Var<'t>> {
        let rd = rgb.dims();
        let [n, 3, h, w] = rd[..] else {
            return Err(Error::shape(format!("student rgb must be [N, 3, H, W], got {rd:?}")));
        };
        if depth.dims() != [n, 1, h, w] {
            return Err(Error::shape(format!("student depth must be [{n}, 1, {h}, {w}], got {:?}", depth.dims())));
        }
        self.cfg.check_input(self.variant, h, w)?;

        let skips = self.encode(p, rgb, depth, mode)?;
        let mut x: Option<Var<'t>> = None;
        for (block, skip) in self.decoder.iter().zip(skips.iter().rev()) {
            let input = match x {
                Some(up) => concat(&[up, *skip], 1)?,
                None => *skip,
            };
            let y = block.conv.forward(p, &block.reduce.forward(p, &input)?)?.relu()?;
            x = Some(y.upsample_nearest(2)?);
        }
        let feats = x.expect("at least one decoder block");
        self.head.forward(p, &feats)?.softplus()
    }
}
