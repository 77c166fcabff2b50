//! Simulation of generated-evidence pollution in multimodal evidence corpora,
//! and cross-modal defenses for out-of-context misinformation detection.
//!
//! The pipeline: load a [`corpus`], embed it into a joint image-text space
//! ([`embedding`]), inject generated evidence ([`pollution`]), rank and select
//! evidence ([`strategies`]), produce verdicts ([`detector`]) and measure
//! robustness ([`eval`]).

pub mod corpus;
pub mod detector;
pub mod embedding;
pub mod eval;
pub mod fixture;
pub mod images;
pub mod par;
pub mod pollution;
mod seeding;
pub mod sidecar;
pub mod strategies;

pub use par::{Exec, ExecMode};
