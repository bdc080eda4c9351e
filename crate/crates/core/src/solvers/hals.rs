use crate::tensor::Matrix;

/// One HALS pass over the columns of `factor`:
/// `a_r ← max(0, a_r + (M e_r − A G e_r) / max(G_rr, ε))`, columns updated
/// in place so later columns see earlier ones.
pub(super) fn update(factor: &mut Matrix, mttkrp: &Matrix, gram: &Matrix, eps: f64) {
    let rank = factor.cols();
    let rows = factor.rows();
    let g = gram.data();
    let m = mttkrp.data();
    let a = factor.data_mut();
    for r in 0..rank {
        let denom = g[r * rank + r].max(eps);
        let grow = &g[r * rank..(r + 1) * rank];
        for i in 0..rows {
            let row = &a[i * rank..(i + 1) * rank];
            let ag: f64 = row.iter().zip(grow).map(|(x, y)| x * y).sum();
            let next = row[r] + (m[i * rank + r] - ag) / denom;
            a[i * rank + r] = next.max(0.0);
        }
    }
}
