//! Circular-shift-equivariant vision transformer building blocks.
//!
//! The crate provides the adaptive counterparts of the usual ViT layers
//! (patch embedding, window attention, patch merging, relative position
//! bias), a tiny classifier and encoder-decoder built from them, the
//! consistency metrics used to measure shift robustness, and a harness that
//! checks the equivariance properties by exhaustive and randomized search.
//!
//! Shifts are circular throughout: `S^m x` reads `x[(n + m) mod N]`.

pub mod align;
pub mod attention;
pub mod error;
pub mod harness;
pub mod merging;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod tokenizer;
pub mod trace;

pub use error::{Error, Result};
pub use numerics::{GridSignal, Matrix, OffsetVector};
pub use tokenizer::TokenMatrix;
pub use trace::{Selection, SelectionKind, SelectionTrace};
