//! Gated multimodal machine translation at desk scale.
//!
//! A frozen text-only encoder-decoder transformer is incrementally turned
//! into a multimodal one: cached vision encodings are projected, resampled
//! to a fixed number of vision tokens by a perceiver resampler, and injected
//! through zero-initialized tanh-gated cross-attention adapters. The crate
//! also ships the vision-masked data pipeline, the training schedules, and
//! the evaluation protocol (BLEU4, contrastive disambiguation score,
//! non-matching-image probe).

pub mod datapipe;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};

/// Reserved token ids; every vocabulary places them at these positions.
pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";
