//! Kruskal (CP) representation: a weight vector plus one factor matrix per
//! mode, `X̂(i,j,k) = Σ_r λ_r U[i,r] V[j,r] W[k,r]`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Dense3Tensor, Matrix, TensorError};

/// Column norms within this distance of one count as normalized.
pub const UNIT_NORM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KruskalError {
    #[error("factor matrices disagree on rank: {0:?}")]
    RankMismatch([usize; 3]),
    #[error("weights have length {weights}, rank is {rank}")]
    WeightLength { weights: usize, rank: usize },
    #[error("factor rows {factors:?} do not match tensor dims {dims:?}")]
    DimMismatch { factors: [usize; 3], dims: [usize; 3] },
    #[error("tensor has zero Frobenius norm")]
    ZeroTensor,
    #[error("component {0} has a zero column but nonzero weight")]
    DegenerateComponent(usize),
    #[error("component index {index} out of range for rank {rank}")]
    IndexOutOfRange { index: usize, rank: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KruskalFactors {
    weights: Vec<f64>,
    factors: [Matrix; 3],
}

/// Borrowed view of a single rank-1 component.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl KruskalFactors {
    pub fn new(weights: Vec<f64>, u: Matrix, v: Matrix, w: Matrix) -> Result<Self, KruskalError> {
        let cols = [u.cols(), v.cols(), w.cols()];
        if cols[0] != cols[1] || cols[1] != cols[2] {
            return Err(KruskalError::RankMismatch(cols));
        }
        if weights.len() != cols[0] {
            return Err(KruskalError::WeightLength {
                weights: weights.len(),
                rank: cols[0],
            });
        }
        if let Some(index) = weights.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFiniteEntry { index }.into());
        }
        Ok(Self {
            weights,
            factors: [u, v, w],
        })
    }

    /// Factors with all weights set to one.
    pub fn unweighted(u: Matrix, v: Matrix, w: Matrix) -> Result<Self, KruskalError> {
        Self::new(vec![1.0; u.cols()], u, v, w)
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn factor(&self, mode: usize) -> &Matrix {
        &self.factors[mode]
    }

    pub fn factors(&self) -> &[Matrix; 3] {
        &self.factors
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Vec<f64>, &mut [Matrix; 3]) {
        (&mut self.weights, &mut self.factors)
    }

    pub fn dims(&self) -> [usize; 3] {
        [
            self.factors[0].rows(),
            self.factors[1].rows(),
            self.factors[2].rows(),
        ]
    }

    pub fn component(&self, r: usize) -> Result<Component, KruskalError> {
        if r >= self.rank() {
            return Err(KruskalError::IndexOutOfRange {
                index: r,
                rank: self.rank(),
            });
        }
        Ok(Component {
            weight: self.weights[r],
            u: self.factors[0].column(r),
            v: self.factors[1].column(r),
            w: self.factors[2].column(r),
        })
    }

    /// Reorders components; `order[new] = old`.
    pub fn permute(&self, order: &[usize]) -> KruskalFactors {
        KruskalFactors {
            weights: order.iter().map(|&o| self.weights[o]).collect(),
            factors: [
                self.factors[0].select_columns(order),
                self.factors[1].select_columns(order),
                self.factors[2].select_columns(order),
            ],
        }
    }

    fn check_dims(&self, dims: [usize; 3]) -> Result<(), KruskalError> {
        if self.dims() != dims {
            return Err(KruskalError::DimMismatch {
                factors: self.dims(),
                dims,
            });
        }
        Ok(())
    }

    pub fn reconstruct(&self, dims: [usize; 3]) -> Result<Dense3Tensor, KruskalError> {
        self.check_dims(dims)?;
        let [ni, nj, nk] = dims;
        let rank = self.rank();
        let (u, v, w) = (
            self.factors[0].data(),
            self.factors[1].data(),
            self.factors[2].data(),
        );
        let mut data = vec![0.0; ni * nj * nk];
        let mut coef = vec![0.0; rank];
        for i in 0..ni {
            for j in 0..nj {
                for r in 0..rank {
                    coef[r] = self.weights[r] * u[i * rank + r] * v[j * rank + r];
                }
                let base = (i * nj + j) * nk;
                for k in 0..nk {
                    let wrow = &w[k * rank..(k + 1) * rank];
                    data[base + k] = coef.iter().zip(wrow).map(|(a, b)| a * b).sum();
                }
            }
        }
        Ok(Dense3Tensor::new(dims, data)?)
    }

    /// Scales every column to unit norm, folds the norms into the weights
    /// and sorts components by descending weight. Components with zero
    /// weight keep whatever columns they had, zero or not.
    pub fn normalize_components(&self) -> Result<KruskalFactors, KruskalError> {
        let out = self.normalize_columns()?;
        let order = canonical_order(&out);
        Ok(out.permute(&order))
    }

    /// As [`normalize_components`](Self::normalize_components) but keeps the
    /// component order.
    pub fn normalize_columns(&self) -> Result<KruskalFactors, KruskalError> {
        let mut out = self.clone();
        for r in 0..self.rank() {
            let norms = [
                self.factors[0].column_norm(r),
                self.factors[1].column_norm(r),
                self.factors[2].column_norm(r),
            ];
            if norms.contains(&0.0) {
                if self.weights[r] != 0.0 {
                    return Err(KruskalError::DegenerateComponent(r));
                }
                continue;
            }
            for (mode, n) in norms.iter().enumerate() {
                out.factors[mode].scale_column(r, 1.0 / n);
            }
            out.weights[r] *= norms.iter().product::<f64>();
        }
        // Keep the sign on the weight nonnegative by flipping one column.
        for r in 0..out.rank() {
            if out.weights[r] < 0.0 {
                out.weights[r] = -out.weights[r];
                out.factors[0].scale_column(r, -1.0);
            }
        }
        Ok(out)
    }

    /// True when every component either has unit-norm columns or zero weight.
    pub fn is_normalized(&self) -> bool {
        (0..self.rank()).all(|r| {
            self.weights[r] == 0.0
                || self
                    .factors
                    .iter()
                    .all(|f| (f.column_norm(r) - 1.0).abs() <= UNIT_NORM_TOL)
        })
    }
}

/// Descending weight, ties broken by lexicographic order of the U columns.
fn canonical_order(f: &KruskalFactors) -> Vec<usize> {
    let mut order: Vec<usize> = (0..f.rank()).collect();
    let cols: Vec<Vec<f64>> = (0..f.rank()).map(|r| f.factors[0].column(r)).collect();
    order.sort_by(|&a, &b| {
        f.weights[b]
            .total_cmp(&f.weights[a])
            .then_with(|| lexicographic(&cols[a], &cols[b]))
            .then(a.cmp(&b))
    });
    order
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

pub fn reconstruct(f: &KruskalFactors, dims: [usize; 3]) -> Result<Dense3Tensor, KruskalError> {
    f.reconstruct(dims)
}

/// `‖X − X̂‖_F / ‖X‖_F`.
pub fn normalized_error(x: &Dense3Tensor, f: &KruskalFactors) -> Result<f64, KruskalError> {
    f.check_dims(x.dims())?;
    let norm = x.frobenius_norm();
    if norm == 0.0 {
        return Err(KruskalError::ZeroTensor);
    }
    Ok(residual_norm(x, f) / norm)
}

/// `‖X − X̂‖_F` without materializing `X̂`.
pub(crate) fn residual_norm(x: &Dense3Tensor, f: &KruskalFactors) -> f64 {
    let [ni, nj, nk] = x.dims();
    let rank = f.rank();
    let (u, v, w) = (
        f.factors[0].data(),
        f.factors[1].data(),
        f.factors[2].data(),
    );
    let xd = x.data();
    let mut coef = vec![0.0; rank];
    let mut total = 0.0;
    for i in 0..ni {
        for j in 0..nj {
            for r in 0..rank {
                coef[r] = f.weights[r] * u[i * rank + r] * v[j * rank + r];
            }
            let base = (i * nj + j) * nk;
            for k in 0..nk {
                let wrow = &w[k * rank..(k + 1) * rank];
                let approx: f64 = coef.iter().zip(wrow).map(|(a, b)| a * b).sum();
                let d = xd[base + k] - approx;
                total += d * d;
            }
        }
    }
    total.sqrt()
}

pub fn normalize_components(f: &KruskalFactors) -> Result<KruskalFactors, KruskalError> {
    f.normalize_components()
}

pub fn component_slice(f: &KruskalFactors, r: usize) -> Result<Component, KruskalError> {
    f.component(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_factors(dims: [usize; 3], rank: usize, seed: u64) -> KruskalFactors {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mat = |rows: usize| {
            Matrix::new(
                rows,
                rank,
                (0..rows * rank).map(|_| rng.random::<f64>() - 0.3).collect(),
            )
            .unwrap()
        };
        let (u, v, w) = (mat(dims[0]), mat(dims[1]), mat(dims[2]));
        let weights = (0..rank).map(|r| 0.5 + r as f64).collect();
        KruskalFactors::new(weights, u, v, w).unwrap()
    }

    fn triple_loop(f: &KruskalFactors, dims: [usize; 3]) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let mut s = 0.0;
                    for r in 0..f.rank() {
                        s += f.weights()[r]
                            * f.factor(0).get(i, r)
                            * f.factor(1).get(j, r)
                            * f.factor(2).get(k, r);
                    }
                    out.push(s);
                }
            }
        }
        out
    }

    fn assert_close(a: &[f64], b: &[f64], rel: f64) {
        let scale = b.iter().map(|v| v.abs()).fold(1e-300, f64::max);
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= rel * scale, "{x} vs {y}");
        }
    }

    #[test]
    fn rank_one_ones() {
        let ones = |n| Matrix::new(n, 1, vec![1.0; n]).unwrap();
        let f = KruskalFactors::unweighted(ones(2), ones(3), ones(2)).unwrap();
        let t = f.reconstruct([2, 3, 2]).unwrap();
        assert!(t.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_weight_component_is_inert() {
        let f = random_factors([3, 2, 4], 2, 1);
        let mut w = f.weights().to_vec();
        w[1] = 0.0;
        let with_zero = KruskalFactors::new(
            w.clone(),
            f.factor(0).clone(),
            f.factor(1).clone(),
            f.factor(2).clone(),
        )
        .unwrap();
        let single = KruskalFactors::new(
            vec![w[0]],
            f.factor(0).select_columns(&[0]),
            f.factor(1).select_columns(&[0]),
            f.factor(2).select_columns(&[0]),
        )
        .unwrap();
        assert_eq!(
            with_zero.reconstruct([3, 2, 4]).unwrap(),
            single.reconstruct([3, 2, 4]).unwrap()
        );
    }

    #[test]
    fn reconstruct_matches_triple_loop() {
        let f = random_factors([4, 3, 5], 3, 7);
        let t = f.reconstruct([4, 3, 5]).unwrap();
        assert_close(t.data(), &triple_loop(&f, [4, 3, 5]), 1e-12);
        assert!(matches!(
            f.reconstruct([4, 3, 6]),
            Err(KruskalError::DimMismatch { .. })
        ));
    }

    #[test]
    fn normalized_error_examples() {
        let f = random_factors([3, 3, 3], 2, 3);
        let x = f.reconstruct([3, 3, 3]).unwrap();
        assert_eq!(normalized_error(&x, &f).unwrap(), 0.0);

        let zero = KruskalFactors::new(
            vec![1.0, 1.0],
            Matrix::zeros(3, 2),
            Matrix::zeros(3, 2),
            Matrix::zeros(3, 2),
        )
        .unwrap();
        assert_eq!(normalized_error(&x, &zero).unwrap(), 1.0);

        let x = Dense3Tensor::new([1, 1, 2], vec![3.0, 4.0]).unwrap();
        let col = |v: Vec<f64>| Matrix::new(v.len(), 1, v).unwrap();
        let f = KruskalFactors::unweighted(col(vec![3.0]), col(vec![1.0]), col(vec![1.0, 0.0]))
            .unwrap();
        assert!((normalized_error(&x, &f).unwrap() - 0.8).abs() < 1e-15);

        let z = Dense3Tensor::new([1, 1, 2], vec![0.0, 0.0]).unwrap();
        assert_eq!(normalized_error(&z, &f), Err(KruskalError::ZeroTensor));
    }

    #[test]
    fn normalization_preserves_reconstruction_and_sorts() {
        let f = random_factors([5, 4, 3], 4, 11);
        let n = f.normalize_components().unwrap();
        assert!(n.is_normalized());
        let before = f.reconstruct([5, 4, 3]).unwrap();
        let after = n.reconstruct([5, 4, 3]).unwrap();
        assert_close(after.data(), before.data(), 1e-12);
        let slices: Vec<f64> = (0..4).map(|r| n.component(r).unwrap().weight).collect();
        assert!(slices.windows(2).all(|w| w[0] >= w[1]));
        assert!(slices.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn doubling_a_column_doubles_the_weight() {
        let f = random_factors([4, 3, 2], 1, 5).normalize_components().unwrap();
        let mut u = f.factor(0).clone();
        u.scale_column(0, 2.0);
        let scaled = KruskalFactors::new(
            f.weights().to_vec(),
            u,
            f.factor(1).clone(),
            f.factor(2).clone(),
        )
        .unwrap();
        let g = scaled.normalize_components().unwrap();
        assert!((g.weights()[0] - 2.0 * f.weights()[0]).abs() < 1e-12);
        assert_close(g.factor(0).data(), f.factor(0).data(), 1e-12);
        assert_close(
            g.reconstruct([4, 3, 2]).unwrap().data(),
            scaled.reconstruct([4, 3, 2]).unwrap().data(),
            1e-12,
        );
    }

    #[test]
    fn normalizing_twice_is_stable() {
        let n = random_factors([4, 4, 4], 3, 2).normalize_components().unwrap();
        let m = n.normalize_components().unwrap();
        assert_close(m.weights(), n.weights(), 1e-12);
        for mode in 0..3 {
            assert_close(m.factor(mode).data(), n.factor(mode).data(), 1e-12);
        }
    }

    #[test]
    fn degenerate_component_rejected() {
        let f = KruskalFactors::unweighted(
            Matrix::zeros(2, 1),
            Matrix::new(2, 1, vec![1.0, 1.0]).unwrap(),
            Matrix::new(2, 1, vec![1.0, 1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(
            f.normalize_components(),
            Err(KruskalError::DegenerateComponent(0))
        );
    }

    #[test]
    fn component_slice_bounds() {
        let f = random_factors([2, 2, 2], 1, 0);
        let c = component_slice(&f, 0).unwrap();
        assert_eq!(c.u, f.factor(0).column(0));
        assert_eq!(
            component_slice(&f, 1),
            Err(KruskalError::IndexOutOfRange { index: 1, rank: 1 })
        );
    }

    #[test]
    fn multilinear_rescaling_and_permutation() {
        let dims = [4, 5, 3];
        let f = random_factors(dims, 3, 9);
        let x = random_factors(dims, 2, 10).reconstruct(dims).unwrap();
        let base = f.reconstruct(dims).unwrap();

        let mut g = f.clone();
        {
            let (w, factors) = g.parts_mut();
            factors[1].scale_column(2, 3.5);
            w[2] /= 3.5;
        }
        assert_close(g.reconstruct(dims).unwrap().data(), base.data(), 1e-12);

        let p = f.permute(&[2, 0, 1]);
        let e1 = normalized_error(&x, &f).unwrap();
        let e2 = normalized_error(&x, &p).unwrap();
        assert!((e1 - e2).abs() < 1e-12);
    }

    #[test]
    fn nonnegative_factors_reconstruct_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut mat = |rows: usize| {
            Matrix::new(rows, 3, (0..rows * 3).map(|_| rng.random::<f64>()).collect()).unwrap()
        };
        let f = KruskalFactors::unweighted(mat(6), mat(5), mat(4)).unwrap();
        assert!(f.reconstruct([6, 5, 4]).unwrap().min_entry() >= 0.0);
    }
}
