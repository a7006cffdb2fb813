//! Hybrid multimodal video classification on precomputed features.
//!
//! Two LSTM streams model frame-order dynamics, a fusion network trained
//! by proximal gradient descent learns a row-sparse joint representation
//! of spatial, motion and audio descriptors, and the resulting scores are
//! averaged and refined with a validation confusion matrix.

pub mod baseline;
pub mod context;
pub mod data;
pub mod fusion;
pub mod gradcheck;
pub mod linalg;
pub mod lstm;
pub mod metrics;
pub mod params;
pub mod scorefusion;
pub mod scores;

pub use linalg::{Matrix, RngStream, ShapeError};
pub use params::Parameters;
pub use scores::{ScoreKind, ScoreMatrix};
