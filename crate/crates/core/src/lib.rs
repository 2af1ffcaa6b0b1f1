//! Corpus curation and alignment-data construction.
//!
//! The crate is organised as pipeline stages over shared domain types:
//!
//! * [`ingest`] normalizes extracted markdown and filters unusable documents,
//! * [`distiller`] removes semantic near-duplicates,
//! * [`litref`] selects core papers from a citation network,
//! * [`quality`] runs the score / repair / re-score loop over instruction samples,
//! * [`rlhf`] builds preference pairs and rejection-sampling gold sets,
//! * [`bench`] grades benchmark answers,
//! * [`gateway`] is the only module that talks to remote models.
//!
//! Numeric kernels are generic over [`Real`] (`f32` or `f64`); the aliases
//! below pin the `f64` instantiations used by the pipeline.

pub mod bench;
pub mod distiller;
pub mod gateway;
pub mod ingest;
pub mod jsonl;
pub mod linalg;
pub mod litref;
pub mod model;
pub mod quality;
pub mod rlhf;
pub mod scalar;

pub use scalar::Real;

pub type Matrix = linalg::Matrix<f64>;
pub type Embedding = distiller::EmbeddingVector<f64>;
pub type Embedding32 = distiller::EmbeddingVector<f32>;
pub type Similarity = litref::SimilarityMatrix<f64>;
pub type LoraLayer = rlhf::LoraLayer<f64>;
pub type LoraLayer32 = rlhf::LoraLayer<f32>;
pub type LinearScorer = rlhf::LinearFeatureScorer<f64>;
