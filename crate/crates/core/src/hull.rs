//! 2-D convex hull by QuickHull.

use thiserror::Error;

/// Cross products with magnitude at or below this count as collinear.
pub const ORIENTATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HullError {
    #[error("hull needs at least 3 distinct, non-collinear points")]
    DegenerateInput,
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
}

/// `(q − p) × (s − p)`; positive when `s` is left of the directed line `p → q`.
#[inline]
pub fn cross(p: (f64, f64), q: (f64, f64), s: (f64, f64)) -> f64 {
    (q.0 - p.0) * (s.1 - p.1) - (q.1 - p.1) * (s.0 - p.0)
}

/// Indices of the hull vertices in counter-clockwise order, starting from
/// the point with the lowest y (then lowest x). Points interior to the hull
/// or on the inside of a hull edge are left out; among duplicate points the
/// lowest index is reported.
pub fn quickhull(points: &[(f64, f64)]) -> Result<Vec<usize>, HullError> {
    if let Some(i) = points
        .iter()
        .position(|p| !p.0.is_finite() || !p.1.is_finite())
    {
        return Err(HullError::NonFinite(i));
    }
    if points.len() < 3 {
        return Err(HullError::DegenerateInput);
    }
    let lex = |a: &usize, b: &usize| {
        let (pa, pb) = (points[*a], points[*b]);
        pa.0.total_cmp(&pb.0)
            .then(pa.1.total_cmp(&pb.1))
            .then(a.cmp(b))
    };
    let all: Vec<usize> = (0..points.len()).collect();
    let left = *all.iter().min_by(|a, b| lex(a, b)).expect("nonempty");
    // Lowest index among the points sharing the maximal coordinates.
    let right = *all
        .iter()
        .min_by(|a, b| {
            let (pa, pb) = (points[**a], points[**b]);
            pb.0.total_cmp(&pa.0)
                .then(pb.1.total_cmp(&pa.1))
                .then(a.cmp(b))
        })
        .expect("nonempty");
    let (pl, pr) = (points[left], points[right]);
    if pl == pr {
        return Err(HullError::DegenerateInput);
    }

    let below: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&i| cross(pl, pr, points[i]) < -ORIENTATION_TOL)
        .collect();
    let above: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&i| cross(pl, pr, points[i]) > ORIENTATION_TOL)
        .collect();
    if below.is_empty() && above.is_empty() {
        return Err(HullError::DegenerateInput);
    }

    let mut hull = vec![left];
    chain(points, left, right, &below, &mut hull);
    hull.push(right);
    chain(points, right, left, &above, &mut hull);

    let start = hull
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            let (pa, pb) = (points[**a], points[**b]);
            pa.1.total_cmp(&pb.1).then(pa.0.total_cmp(&pb.0))
        })
        .map(|(pos, _)| pos)
        .expect("nonempty hull");
    hull.rotate_left(start);
    Ok(hull)
}

/// Appends, in order from `p` to `q`, the hull vertices among `candidates`
/// lying strictly to the right of `p → q`.
fn chain(points: &[(f64, f64)], p: usize, q: usize, candidates: &[usize], out: &mut Vec<usize>) {
    let (pp, pq) = (points[p], points[q]);
    // Ties in distance go to the point nearest `p` along `p → q`, so a run of
    // points parallel to the edge is entered at its end rather than its middle.
    let along = |s: (f64, f64)| (s.0 - pp.0) * (pq.0 - pp.0) + (s.1 - pp.1) * (pq.1 - pp.1);
    let mut farthest: Option<(usize, f64, f64)> = None;
    for &i in candidates {
        let d = -cross(pp, pq, points[i]);
        if d <= ORIENTATION_TOL {
            continue;
        }
        let t = along(points[i]);
        match farthest {
            Some((_, best, best_t)) if d < best || (d == best && t >= best_t) => {}
            _ => farthest = Some((i, d, t)),
        }
    }
    let Some((f, _, _)) = farthest else {
        return;
    };
    let pf = points[f];
    let first: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&i| -cross(pp, pf, points[i]) > ORIENTATION_TOL)
        .collect();
    let second: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&i| -cross(pf, pq, points[i]) > ORIENTATION_TOL)
        .collect();
    chain(points, p, f, &first, out);
    out.push(f);
    chain(points, f, q, &second, out);
}
