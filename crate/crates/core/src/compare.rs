//! Comparing two CP models: components are matched by solving an
//! assignment problem on the per-component similarity matrix, and the score
//! is the mean matched similarity.
//!
//! The similarity between two components is the product of the cosines of
//! their U, V and W columns, so rescaling between modes has no effect.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{solve_assignment, AssignmentError};
use crate::kruskal::{KruskalError, KruskalFactors};
use crate::tensor::{Matrix, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompareError {
    #[error("rank mismatch: {left} vs {right}")]
    RankMismatch { left: usize, right: usize },
    #[error("factor rows differ: {left:?} vs {right:?}")]
    DimMismatch { left: [usize; 3], right: [usize; 3] },
    #[error("model is not in normalized form")]
    NotNormalized,
    #[error(transparent)]
    Kruskal(#[from] KruskalError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityOptions {
    /// Multiply each matched similarity by `1 − |λa − λb| / max(λa, λb)`.
    pub penalize_weights: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityResult {
    pub score: f64,
    /// `permutation[r]` is the component of `b` matched to component `r` of `a`.
    pub permutation: Vec<usize>,
    pub per_component: Vec<f64>,
}

fn check_pair(a: &KruskalFactors, b: &KruskalFactors) -> Result<(), CompareError> {
    if a.rank() != b.rank() {
        return Err(CompareError::RankMismatch {
            left: a.rank(),
            right: b.rank(),
        });
    }
    if a.dims() != b.dims() {
        return Err(CompareError::DimMismatch {
            left: a.dims(),
            right: b.dims(),
        });
    }
    Ok(())
}

/// `S[r, s] = Π_mode ⟨a_mode[:, r], b_mode[:, s]⟩` for normalized models.
pub fn component_similarity_matrix(
    a: &KruskalFactors,
    b: &KruskalFactors,
) -> Result<Matrix, CompareError> {
    check_pair(a, b)?;
    if !a.is_normalized() || !b.is_normalized() {
        return Err(CompareError::NotNormalized);
    }
    let rank = a.rank();
    let mut out = Matrix::new(rank, rank, vec![1.0; rank * rank])?;
    for mode in 0..3 {
        let cross = a.factor(mode).transpose().matmul(b.factor(mode));
        out = out.hadamard(&cross);
    }
    Ok(out)
}

fn prepare(f: &KruskalFactors) -> Result<KruskalFactors, CompareError> {
    if f.is_normalized() {
        Ok(f.clone())
    } else {
        Ok(f.normalize_columns()?)
    }
}

pub fn similarity_score(
    a: &KruskalFactors,
    b: &KruskalFactors,
) -> Result<SimilarityResult, CompareError> {
    similarity_score_with(a, b, SimilarityOptions::default())
}

pub fn similarity_score_with(
    a: &KruskalFactors,
    b: &KruskalFactors,
    opts: SimilarityOptions,
) -> Result<SimilarityResult, CompareError> {
    check_pair(a, b)?;
    let (a, b) = (prepare(a)?, prepare(b)?);
    let mut sim = component_similarity_matrix(&a, &b)?;
    if opts.penalize_weights {
        let rank = a.rank();
        let mut penalized = sim.data().to_vec();
        for r in 0..rank {
            for s in 0..rank {
                let (la, lb) = (a.weights()[r], b.weights()[s]);
                let hi = la.max(lb);
                let factor = if hi > 0.0 { 1.0 - (la - lb).abs() / hi } else { 1.0 };
                penalized[r * rank + s] *= factor;
            }
        }
        sim = Matrix::new(rank, rank, penalized)?;
    }
    let permutation = solve_assignment(&sim, true)?;
    let per_component: Vec<f64> = permutation
        .iter()
        .enumerate()
        .map(|(r, &s)| sim.get(r, s))
        .collect();
    let score = per_component.iter().sum::<f64>() / per_component.len() as f64;
    Ok(SimilarityResult {
        score,
        permutation,
        per_component,
    })
}

/// `b` with its components reordered to line up with `a`.
pub fn align(a: &KruskalFactors, b: &KruskalFactors) -> Result<KruskalFactors, CompareError> {
    let result = similarity_score(a, b)?;
    Ok(b.permute(&result.permutation))
}
