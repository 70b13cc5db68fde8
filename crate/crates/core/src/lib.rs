//! Closed-set speaker identification with LPCC features.
//!
//! Two recognizers are provided: per-speaker vector-quantization codebooks
//! (including a combined codebook built from both of a bilingual speaker's
//! languages) and per-speaker covariance matrices compared with the
//! arithmetic-harmonic sphericity measure. The [`eval`] module runs the
//! cross-language identification grids on a manifest-described or
//! synthetic corpus.

pub mod cli;
pub mod cm;
pub mod corpus;
pub mod decision;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod vq;

pub use error::{Error, Result};
