//! Entity type completion for knowledge bases.
//!
//! Build a two-snapshot dataset, featurize entities from their known types
//! and text, train linear or bilinear ranking models, and score held-out
//! facts with MAP, GAP and G@k.

pub mod adagrad;
pub mod commands;
pub mod dataset;
pub mod embedding;
pub mod eval;
pub mod error;
pub mod features;
pub mod io_util;
pub mod kb;
pub mod linear;
pub mod model;
pub mod pipeline;
pub mod sampler;
pub mod sparse;
pub mod synth;

pub use error::{KbcError, Result};
pub use kb::{EntityId, Kb, KbSnapshot, TypeId, Vocab, VocabMode};
pub use sparse::SparseVector;
