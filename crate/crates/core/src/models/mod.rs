//! The module grid: a fixed convolutional trunk, three context choices
//! (none / BLSTM / PPM), and three prediction heads (CTC / attention /
//! segmentation).

mod attn;
mod classset;
mod cntx;
mod config;
mod ctc;
mod init;
mod model;
mod seg;
mod trunk;

pub use attn::{AttnForward, AttnHead};
pub use classset::{ClassSet, NUM_CHAR_CLASSES};
pub use config::{CntxKind, ModelConfig, ModelDims, PredKind};
pub use ctc::ctc_greedy_decode;
pub use model::{Batch, HeadForward, Model};
pub use seg::{seg_decode, seg_vote, sort_regions, SegRegion};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("segmentation head is incompatible with BLSTM context")]
    SegWithBlstm,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("bad input size/shape {0:?}")]
    BadInputSize(Vec<usize>),
    #[error("empty feature sequence")]
    EmptyFeatures,
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Ad(#[from] crate::autodiff::AdError),
    #[error(transparent)]
    Render(#[from] crate::render::RenderError),
}
