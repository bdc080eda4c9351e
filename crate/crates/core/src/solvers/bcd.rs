use crate::tensor::Matrix;

/// Multiplicative block update `A ← A ∘ (M) ⊘ (A G + ε)`.
pub(super) fn update(factor: &mut Matrix, mttkrp: &Matrix, gram: &Matrix, eps: f64) {
    let denom = factor.matmul(gram);
    let m = mttkrp.data();
    for ((a, num), den) in factor.data_mut().iter_mut().zip(m).zip(denom.data()) {
        if *a == 0.0 {
            continue;
        }
        *a *= num.max(0.0) / (den + eps);
    }
}
