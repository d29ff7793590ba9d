//! Cross-modal correlation blocks and their windowing/embedding primitives.

pub mod attention;
pub mod cfcm;
pub mod embed;
pub mod pcb;
pub mod window;

pub use attention::{AttentionConfig, AttentionOutput, RelPosBiasTable, WindowAttention};
pub use cfcm::{cfcm_fuse, Cfcm, CfcmConfig, CnnBlock, ConsistencyScore, ScoreChannels, ScoreSquash};
pub use embed::{merge_neighbourhoods, PatchEmbed, PatchMerge};
pub use pcb::{pcb_attention, BlockMode, PcbBlock};
pub use window::{effective_window, shift_for, window_partition, window_reverse};

use crate::numerics::Var;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    Rgb,
    Depth,
    Fused,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// `[N, C, H, W]`
    ChannelsFirst,
    /// `[N, H, W, C]`
    ChannelsLast,
}

/// A feature tensor annotated with where it sits in an encoder/decoder.
#[derive(Clone, Copy)]
pub struct FeatureMap<'t> {
    pub tensor: Var<'t>,
    pub stage: usize,
    pub modality: Modality,
    pub layout: Layout,
}

impl<'t> FeatureMap<'t> {
    pub fn new(tensor: Var<'t>, stage: usize, modality: Modality, layout: Layout) -> Self {
        FeatureMap { tensor, stage, modality, layout }
    }

    /// `(channels, height, width)` regardless of layout.
    pub fn chw(&self) -> (usize, usize, usize) {
        let d = self.tensor.dims();
        match self.layout {
            Layout::ChannelsFirst => (d[1], d[2], d[3]),
            Layout::ChannelsLast => (d[3], d[1], d[2]),
        }
    }
}
