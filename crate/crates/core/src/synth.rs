//! Planted-component tensors with known ground truth.
//!
//! `TaskGated` plants the pattern the analysis looks for in trained
//! networks: each component is a sparse group of units, tuned to one input,
//! that is active only while one task is being learned.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kruskal::KruskalFactors;
use crate::tensor::{Dense3Tensor, Matrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid planted spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// Factors i.i.d. uniform on `[0, 1)`.
    DenseNonneg,
    TaskGated {
        /// Exclusive end of each task's snapshot window; the last equals K.
        task_ends: Vec<usize>,
        /// Fraction of units in each component's support.
        support_fraction: f64,
    },
}

impl Structure {
    /// `tasks` equal windows of `snapshots_per_task` snapshots each.
    pub fn even_tasks(tasks: usize, snapshots_per_task: usize, support_fraction: f64) -> Self {
        Structure::TaskGated {
            task_ends: (1..=tasks).map(|t| t * snapshots_per_task).collect(),
            support_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub dims: [usize; 3],
    pub rank: usize,
    pub seed: u64,
    /// Noise norm as a fraction of the signal's Frobenius norm.
    #[serde(default)]
    pub noise_level: f64,
    pub structure: Structure,
}

impl PlantedSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let invalid = |m: String| Err(SynthError::InvalidSpec(m));
        let [ni, nj, nk] = self.dims;
        if self.dims.contains(&0) {
            return invalid(format!("dims must be positive, got {:?}", self.dims));
        }
        if self.rank == 0 {
            return invalid("rank must be at least 1".into());
        }
        let bound = (ni * nj).min(nj * nk).min(ni * nk);
        if self.rank > bound {
            return invalid(format!("rank {} exceeds bound {bound}", self.rank));
        }
        if !(0.0..1.0).contains(&self.noise_level) {
            return invalid(format!("noise_level must be in [0, 1), got {}", self.noise_level));
        }
        if let Structure::TaskGated {
            task_ends,
            support_fraction,
        } = &self.structure
        {
            if task_ends.is_empty() {
                return invalid("task_gated needs at least one task".into());
            }
            let mut prev = 0;
            for &end in task_ends {
                if end <= prev {
                    return invalid(format!("task_ends must be strictly increasing: {task_ends:?}"));
                }
                prev = end;
            }
            if prev != nk {
                return invalid(format!("last task end {prev} must equal K = {nk}"));
            }
            if !(*support_fraction > 0.0 && *support_fraction <= 1.0) {
                return invalid(format!("support_fraction must be in (0, 1], got {support_fraction}"));
            }
        }
        Ok(())
    }
}

/// Returns the planted tensor and its normalized ground-truth factors.
pub fn generate(spec: &PlantedSpec) -> Result<(Dense3Tensor, KruskalFactors), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = match &spec.structure {
        Structure::DenseNonneg => dense_factors(spec.dims, spec.rank, &mut rng),
        Structure::TaskGated {
            task_ends,
            support_fraction,
        } => gated_factors(spec.dims, spec.rank, task_ends, *support_fraction, &mut rng),
    };
    let signal = truth.reconstruct(spec.dims).expect("dims match");
    let data = if spec.noise_level > 0.0 {
        add_clipped_noise(signal.data(), spec.noise_level, &mut rng)
    } else {
        signal.data().to_vec()
    };
    let tensor = Dense3Tensor::new(spec.dims, data).expect("finite data");
    let truth = truth.normalize_components().expect("planted components are nonzero");
    Ok((tensor, truth))
}

fn dense_factors(dims: [usize; 3], rank: usize, rng: &mut ChaCha8Rng) -> KruskalFactors {
    let mut mat = |rows: usize| {
        Matrix::new(rows, rank, (0..rows * rank).map(|_| rng.random::<f64>()).collect())
            .expect("positive dims")
    };
    let (u, v, w) = (mat(dims[0]), mat(dims[1]), mat(dims[2]));
    KruskalFactors::unweighted(u, v, w).expect("consistent rank")
}

fn gated_factors(
    dims: [usize; 3],
    rank: usize,
    task_ends: &[usize],
    support_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> KruskalFactors {
    let [ni, nj, nk] = dims;
    let mut u = Matrix::zeros(ni, rank);
    let mut v = Matrix::zeros(nj, rank);
    let mut w = Matrix::zeros(nk, rank);

    let support = ((support_fraction * ni as f64).round() as usize).clamp(1, ni);
    let mut units: Vec<usize> = (0..ni).collect();
    let mut inputs: Vec<usize> = (0..nj).collect();
    inputs.shuffle(rng);

    for r in 0..rank {
        units.shuffle(rng);
        for &i in &units[..support] {
            u.set(i, r, rng.random_range(0.5..1.5));
        }

        let peak = inputs[r % nj];
        for j in 0..nj {
            let value = if j == peak {
                1.0
            } else {
                rng.random_range(0.0..0.15)
            };
            v.set(j, r, value);
        }

        let task = r % task_ends.len();
        let start = if task == 0 { 0 } else { task_ends[task - 1] };
        let end = task_ends[task];
        let len = (end - start) as f64;
        for k in start..end {
            let phase = (k - start + 1) as f64 / (len + 1.0);
            w.set(k, r, 0.5 * (1.0 - (2.0 * std::f64::consts::PI * phase).cos()));
        }
    }
    KruskalFactors::unweighted(u, v, w).expect("consistent rank")
}

/// Adds Gaussian noise and clips at zero, with the amplitude found by
/// bisection so that `‖X − S‖_F = level · ‖S‖_F` after clipping.
fn add_clipped_noise(signal: &[f64], level: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let noise: Vec<f64> = (0..signal.len())
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let signal_norm = signal.iter().map(|v| v * v).sum::<f64>().sqrt();
    let target = level * signal_norm;
    let deviation = |scale: f64| {
        signal
            .iter()
            .zip(&noise)
            .map(|(s, n)| {
                let d = (s + scale * n).max(0.0) - s;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };
    let noise_norm = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
    // Clipping only shrinks the deviation, so the unclipped scale is a lower bound.
    let mut lo = target / noise_norm;
    let mut hi = lo;
    while deviation(hi) < target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if deviation(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    signal
        .iter()
        .zip(&noise)
        .map(|(s, n)| (s + hi * n).max(0.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kruskal::normalized_error;

    fn gated(noise: f64) -> PlantedSpec {
        PlantedSpec {
            dims: [60, 8, 24],
            rank: 4,
            seed: 3,
            noise_level: noise,
            structure: Structure::even_tasks(3, 8, 0.5),
        }
    }

    #[test]
    fn noiseless_tensor_is_exact() {
        for structure in [Structure::DenseNonneg, Structure::even_tasks(3, 8, 0.3)] {
            let spec = PlantedSpec {
                structure,
                ..gated(0.0)
            };
            let (x, truth) = generate(&spec).unwrap();
            assert!(normalized_error(&x, &truth).unwrap() < 1e-12);
        }
    }

    #[test]
    fn noise_hits_target_ratio() {
        let (x, truth) = generate(&gated(0.05)).unwrap();
        let err = normalized_error(&x, &truth).unwrap();
        assert!((0.045..=0.055).contains(&err), "{err}");
        assert!(x.min_entry() >= 0.0);
        let signal = truth.reconstruct(x.dims()).unwrap();
        let dev: f64 = x
            .data()
            .iter()
            .zip(signal.data())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((dev / signal.frobenius_norm() - 0.05).abs() < 1e-9);
    }

    #[test]
    fn temporal_support_within_one_window() {
        let spec = PlantedSpec {
            rank: 5,
            ..gated(0.0)
        };
        let (_, truth) = generate(&spec).unwrap();
        for r in 0..truth.rank() {
            let w = truth.factor(2).column(r);
            let active: Vec<usize> = (0..24).filter(|&k| w[k] > 0.0).collect();
            assert_eq!(active.len(), 8);
            let window = active[0] / 8;
            assert!(active.iter().all(|&k| k / 8 == window));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        assert_eq!(generate(&gated(0.1)).unwrap(), generate(&gated(0.1)).unwrap());
        let other = PlantedSpec {
            seed: 4,
            ..gated(0.1)
        };
        assert_ne!(generate(&gated(0.1)).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            PlantedSpec { rank: 0, ..gated(0.0) },
            PlantedSpec { noise_level: 1.0, ..gated(0.0) },
            PlantedSpec { dims: [2, 2, 24], rank: 5, ..gated(0.0) },
            PlantedSpec {
                structure: Structure::TaskGated { task_ends: vec![8, 8, 24], support_fraction: 0.5 },
                ..gated(0.0)
            },
            PlantedSpec {
                structure: Structure::TaskGated { task_ends: vec![8, 16], support_fraction: 0.5 },
                ..gated(0.0)
            },
            PlantedSpec {
                structure: Structure::even_tasks(3, 8, 0.0),
                ..gated(0.0)
            },
        ];
        for spec in bad {
            assert!(matches!(generate(&spec), Err(SynthError::InvalidSpec(_))), "{spec:?}");
        }
    }

    #[test]
    fn spec_json_shape() {
        let json = serde_json::to_value(gated(0.05)).unwrap();
        assert_eq!(json["structure"]["task_gated"]["task_ends"], serde_json::json!([8, 16, 24]));
        let back: PlantedSpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, gated(0.05));
    }
}
