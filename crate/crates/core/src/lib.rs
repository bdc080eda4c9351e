//! Tensor component analysis for studying how representations change across
//! training snapshots.
//!
//! A 3-way tensor (units × inputs × snapshots) is approximated by a sum of
//! rank-1 components. The crate covers fitting those models
//! ([`solvers`]), comparing fitted models ([`compare`]), picking a rank from
//! replicate stability ([`rank`]), planting synthetic ground truth
//! ([`synth`]), curating task splits from 2-D class embeddings
//! ([`curation`]) and the file formats around all of it ([`ingest`]).

pub mod assignment;
pub mod compare;
pub mod curation;
pub mod hull;
pub mod ingest;
pub mod kruskal;
pub mod rank;
pub mod solvers;
pub mod synth;
pub mod tensor;

pub use compare::{align, similarity_score, SimilarityResult};
pub use kruskal::{normalized_error, KruskalFactors};
pub use solvers::{fit, Algorithm, FitOptions, FitResult};
pub use tensor::{Dense3Tensor, Matrix};
