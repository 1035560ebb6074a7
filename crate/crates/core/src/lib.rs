//! Pseudo-label synthesis for human-object interaction (HOI) detection.
//!
//! The pipeline turns object detections plus pre-computed image and text
//! embeddings into `<human, action, object>` labels:
//!
//! 1. [`candidates`]: denoise detections, pair every human with every object
//!    and describe the crop each pair should be encoded from.
//! 2. [`similarity`]: cosine similarity between candidate embeddings and the
//!    two text-template families, summed into one score per HOI category.
//! 3. [`inference`]: affordance masking, correlated-action amplification,
//!    the max-minus-mean interaction test and band selection of actions.
//!
//! [`eval`] scores labels against ground truth and renders SVG overlays,
//! [`fixtures`] synthesizes seeded inputs so the whole chain runs without any
//! model, and [`pipeline`] wires the file formats together.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`). On-disk
//! embeddings and similarities are 32-bit, so the file-facing entry points
//! use the `f32` aliases below.

pub mod candidates;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod geometry;
pub mod inference;
pub mod kb;
pub mod overlay;
pub mod pipeline;
pub mod scalar;
pub mod similarity;

mod io_util;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use candidates::{BackgroundMode, CandidatePair, Detection};
pub use embedding::{EmbeddingKind, EmbeddingMatrix};
pub use geometry::BBox;
pub use inference::{HoiLabel, InferenceConfig};
pub use kb::KnowledgeBase;
pub use similarity::SimilarityMatrix;

/// Scalar used by every file-backed stage.
pub type Real = f32;

pub type BBoxF32 = BBox<f32>;
pub type BBoxF64 = BBox<f64>;
pub type DetectionF32 = Detection<f32>;
pub type DetectionF64 = Detection<f64>;
pub type CandidatePairF32 = CandidatePair<f32>;
pub type CandidatePairF64 = CandidatePair<f64>;
pub type EmbeddingMatrixF32 = EmbeddingMatrix<f32>;
pub type EmbeddingMatrixF64 = EmbeddingMatrix<f64>;
pub type SimilarityMatrixF32 = SimilarityMatrix<f32>;
pub type SimilarityMatrixF64 = SimilarityMatrix<f64>;
pub type HoiLabelF32 = HoiLabel<f32>;
pub type HoiLabelF64 = HoiLabel<f64>;
