use nalgebra::DMatrix;

use crate::tensor::Matrix;

/// Least-squares update `A ← M G⁻¹`. Falls back to the pseudoinverse when
/// `G` is not positive definite and reports that it did.
pub(super) fn update(factor: &mut Matrix, mttkrp: &Matrix, gram: &Matrix) -> bool {
    let r = gram.rows();
    let g = DMatrix::from_row_slice(r, r, gram.data());
    // Solve G Aᵀ = Mᵀ; G is symmetric.
    let rhs = DMatrix::from_row_slice(mttkrp.rows(), r, mttkrp.data()).transpose();
    let (solution, singular) = match g.clone().cholesky() {
        Some(chol) => (chol.solve(&rhs), false),
        None => {
            let tol = 1e-12 * g.amax().max(f64::MIN_POSITIVE);
            let pinv = g
                .pseudo_inverse(tol)
                .unwrap_or_else(|_| DMatrix::zeros(r, r));
            (pinv * rhs, true)
        }
    };
    let out = factor.data_mut();
    for i in 0..solution.ncols() {
        for c in 0..r {
            let v = solution[(c, i)];
            out[i * r + c] = if v.is_finite() { v } else { 0.0 };
        }
    }
    singular
}
