//! CP fitting: unconstrained ALS, nonnegative HALS and nonnegative
//! multiplicative block updates, sharing one driver loop.
//!
//! Every solver works on unnormalized factors with unit weights, sweeps the
//! modes in the order U, V, W, and records the normalized error after each
//! sweep. Results are returned in normalized Kruskal form.

mod als;
mod bcd;
mod hals;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kruskal::{residual_norm, KruskalError, KruskalFactors};
use crate::tensor::{mttkrp, Dense3Tensor, Matrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("rank must be at least 1")]
    ZeroRank,
    #[error("invalid fit options: {0}")]
    InvalidOptions(&'static str),
    #[error("tensor has zero Frobenius norm")]
    ZeroTensor,
    #[error("nonnegative solver given a negative entry at flat index {index} ({value})")]
    NegativeInput { index: usize, value: f64 },
    #[error("initial factors have dims {init:?}, tensor has {dims:?}")]
    InitDimMismatch { init: [usize; 3], dims: [usize; 3] },
    #[error(transparent)]
    Kruskal(#[from] KruskalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "ALS")]
    Als,
    #[serde(rename = "NN_HALS")]
    NnHals,
    #[serde(rename = "NN_BCD")]
    NnBcd,
}

impl Algorithm {
    pub fn is_nonnegative(self) -> bool {
        !matches!(self, Algorithm::Als)
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            Algorithm::Als => "als",
            Algorithm::NnHals => "nn-hals",
            Algorithm::NnBcd => "nn-bcd",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "als" => Ok(Algorithm::Als),
            "nn-hals" | "hals" => Ok(Algorithm::NnHals),
            "nn-bcd" | "bcd" => Ok(Algorithm::NnBcd),
            other => Err(format!("unknown algorithm '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iters: usize,
    /// Stop once the relative change in normalized error over one sweep
    /// drops below this.
    pub rel_tol: f64,
    pub seed: u64,
    /// Nonnegative initialization. Always on for the nonnegative solvers.
    pub nonnegative: bool,
    /// Denominator guard for the HALS and multiplicative updates.
    pub epsilon_div: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            rel_tol: 1e-6,
            seed: 0,
            nonnegative: true,
            epsilon_div: 1e-12,
        }
    }
}

impl FitOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn validate(&self) -> Result<(), FitError> {
        if self.max_iters == 0 {
            return Err(FitError::InvalidOptions("max_iters must be at least 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(FitError::InvalidOptions("rel_tol must be positive"));
        }
        if !(self.epsilon_div > 0.0) {
            return Err(FitError::InvalidOptions("epsilon_div must be positive"));
        }
        Ok(())
    }
}

/// Non-fatal events raised during a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitWarning {
    /// The normal equations were singular; a pseudoinverse was used.
    SingularUpdate { iteration: usize, mode: usize },
    /// A column collapsed to zero and the component was re-seeded from the
    /// positive part of the residual.
    ComponentRescued { component: usize, iteration: usize },
    /// The component is identically zero in the returned model. Indices
    /// refer to the component order during fitting, before canonical sorting.
    DegenerateComponent { component: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub factors: KruskalFactors,
    /// Normalized error of the initialization followed by one entry per sweep.
    pub error_trace: Vec<f64>,
    pub final_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub warnings: Vec<FitWarning>,
}

impl FitResult {
    pub fn degenerate_components(&self) -> usize {
        self.warnings
            .iter()
            .filter(|w| matches!(w, FitWarning::DegenerateComponent { .. }))
            .count()
    }
}

/// Random factors with unit weights: uniform on `[0, 1)` when `nonnegative`,
/// standard normal otherwise.
pub fn init_random(dims: [usize; 3], rank: usize, seed: u64, nonnegative: bool) -> KruskalFactors {
    assert!(rank >= 1, "rank must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mat = |rows: usize| {
        let data = (0..rows * rank)
            .map(|_| {
                if nonnegative {
                    rng.random::<f64>()
                } else {
                    rng.sample::<f64, _>(StandardNormal)
                }
            })
            .collect();
        Matrix::new(rows, rank, data).expect("positive dims")
    };
    let (u, v, w) = (mat(dims[0]), mat(dims[1]), mat(dims[2]));
    KruskalFactors::unweighted(u, v, w).expect("consistent rank")
}

pub fn fit_cp_als(x: &Dense3Tensor, rank: usize, opts: &FitOptions) -> Result<FitResult, FitError> {
    fit(x, rank, Algorithm::Als, opts)
}

pub fn fit_nn_hals(x: &Dense3Tensor, rank: usize, opts: &FitOptions) -> Result<FitResult, FitError> {
    fit(x, rank, Algorithm::NnHals, opts)
}

pub fn fit_nn_bcd(x: &Dense3Tensor, rank: usize, opts: &FitOptions) -> Result<FitResult, FitError> {
    fit(x, rank, Algorithm::NnBcd, opts)
}

/// Fits `x` from a seeded random initialization.
pub fn fit(
    x: &Dense3Tensor,
    rank: usize,
    algorithm: Algorithm,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    if rank == 0 {
        return Err(FitError::ZeroRank);
    }
    check_input(x, algorithm, opts)?;
    let nonneg = opts.nonnegative || algorithm.is_nonnegative();
    let init = init_random(x.dims(), rank, opts.seed, nonneg);
    run(x, init, algorithm, opts)
}

/// Fits `x` starting from the given factors. Weights are folded into U.
pub fn fit_from(
    x: &Dense3Tensor,
    init: &KruskalFactors,
    algorithm: Algorithm,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    if init.dims() != x.dims() {
        return Err(FitError::InitDimMismatch {
            init: init.dims(),
            dims: x.dims(),
        });
    }
    check_input(x, algorithm, opts)?;
    let mut start = init.clone();
    {
        let (w, f) = start.parts_mut();
        for (r, weight) in w.iter_mut().enumerate() {
            f[0].scale_column(r, *weight);
            *weight = 1.0;
        }
    }
    run(x, start, algorithm, opts)
}

fn check_input(x: &Dense3Tensor, algorithm: Algorithm, opts: &FitOptions) -> Result<(), FitError> {
    opts.validate()?;
    if algorithm.is_nonnegative() {
        if let Some(index) = x.data().iter().position(|&v| v < 0.0) {
            return Err(FitError::NegativeInput {
                index,
                value: x.data()[index],
            });
        }
    }
    if x.frobenius_norm() == 0.0 {
        return Err(FitError::ZeroTensor);
    }
    Ok(())
}

/// Mutable fitting state: unnormalized factors with weights pinned at one.
pub(crate) struct Model {
    pub factors: [Matrix; 3],
    pub rank: usize,
}

impl Model {
    fn gram_excluding(&self, mode: usize) -> Matrix {
        let others: Vec<usize> = (0..3).filter(|&m| m != mode).collect();
        self.factors[others[0]]
            .gram()
            .hadamard(&self.factors[others[1]].gram())
    }

    fn as_kruskal(&self) -> KruskalFactors {
        KruskalFactors::unweighted(
            self.factors[0].clone(),
            self.factors[1].clone(),
            self.factors[2].clone(),
        )
        .expect("consistent rank")
    }

    fn column_is_zero(&self, mode: usize, r: usize) -> bool {
        let f = &self.factors[mode];
        (0..f.rows()).all(|i| f.get(i, r) == 0.0)
    }

    fn component_has_zero_column(&self, r: usize) -> bool {
        (0..3).any(|m| self.column_is_zero(m, r))
    }

    fn zero_component(&mut self, r: usize) {
        for f in self.factors.iter_mut() {
            f.scale_column(r, 0.0);
        }
    }

    /// Squared norm of the model via `1ᵀ (G_U ∘ G_V ∘ G_W) 1`.
    fn norm_sq(&self) -> f64 {
        let g = self.factors[0]
            .gram()
            .hadamard(&self.factors[1].gram())
            .hadamard(&self.factors[2].gram());
        g.data().iter().sum()
    }

    /// Equalizes column norms across modes per component.
    fn rebalance(&mut self) {
        for r in 0..self.rank {
            let norms: Vec<f64> = self.factors.iter().map(|f| f.column_norm(r)).collect();
            if norms.iter().any(|&n| n == 0.0) {
                continue;
            }
            let target = norms.iter().product::<f64>().cbrt();
            for (f, n) in self.factors.iter_mut().zip(&norms) {
                f.scale_column(r, target / n);
            }
        }
    }
}

fn run(
    x: &Dense3Tensor,
    init: KruskalFactors,
    algorithm: Algorithm,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    let norm_x = x.frobenius_norm();
    let rank = init.rank();
    let [u, v, w] = init.factors().clone();
    let mut model = Model {
        factors: [u, v, w],
        rank,
    };

    let mut warnings = Vec::new();
    let mut degenerate = vec![false; rank];
    let mut rescued = vec![false; rank];
    if algorithm.is_nonnegative() {
        for (r, flag) in degenerate.iter_mut().enumerate() {
            if model.component_has_zero_column(r) {
                *flag = true;
                model.zero_component(r);
                warnings.push(FitWarning::DegenerateComponent { component: r });
            }
        }
    }

    // Match the scale of the data so the first sweep starts from a sensible point.
    let model_norm = model.norm_sq().sqrt();
    if model_norm > 0.0 {
        let s = (norm_x / model_norm).cbrt();
        for f in model.factors.iter_mut() {
            for c in 0..rank {
                f.scale_column(c, s);
            }
        }
    }

    let error_of = |m: &Model| residual_norm(x, &m.as_kruskal()) / norm_x;
    let mut trace = vec![error_of(&model)];
    let mut converged = false;
    let mut iterations = 0;
    let mut singular_reported = false;

    while iterations < opts.max_iters {
        iterations += 1;
        for mode in 0..3 {
            let mttkrp = {
                let [a, b, c] = &model.factors;
                mttkrp(x, [a, b, c], mode)
            };
            let gram = model.gram_excluding(mode);
            match algorithm {
                Algorithm::Als => {
                    let singular = als::update(&mut model.factors[mode], &mttkrp, &gram);
                    if singular && !singular_reported {
                        log::warn!("singular normal equations at iteration {iterations}, mode {mode}; using pseudoinverse");
                        warnings.push(FitWarning::SingularUpdate {
                            iteration: iterations,
                            mode,
                        });
                        singular_reported = true;
                    }
                }
                Algorithm::NnHals => {
                    hals::update(&mut model.factors[mode], &mttkrp, &gram, opts.epsilon_div)
                }
                Algorithm::NnBcd => {
                    bcd::update(&mut model.factors[mode], &mttkrp, &gram, opts.epsilon_div)
                }
            }
        }

        if algorithm.is_nonnegative() {
            for r in 0..rank {
                if degenerate[r] || !model.component_has_zero_column(r) {
                    continue;
                }
                if !rescued[r] && rescue_component(x, &mut model, r) {
                    rescued[r] = true;
                    warnings.push(FitWarning::ComponentRescued {
                        component: r,
                        iteration: iterations,
                    });
                } else {
                    degenerate[r] = true;
                    model.zero_component(r);
                    warnings.push(FitWarning::DegenerateComponent { component: r });
                }
            }
        }
        model.rebalance();

        let err = error_of(&model);
        let prev = *trace.last().expect("trace starts with the initial error");
        trace.push(err);
        if prev == 0.0 || (prev - err).abs() < opts.rel_tol * prev {
            converged = true;
            break;
        }
    }

    let mut weights = vec![1.0; rank];
    for (r, w) in weights.iter_mut().enumerate() {
        if model.component_has_zero_column(r) {
            *w = 0.0;
        }
    }
    let [u, v, w] = model.factors;
    let factors = KruskalFactors::new(weights, u, v, w)?.normalize_components()?;
    let final_error = *trace.last().expect("nonempty trace");
    Ok(FitResult {
        factors,
        error_trace: trace,
        final_error,
        iterations,
        converged,
        seed: opts.seed,
        algorithm,
        warnings,
    })
}

/// Re-seeds component `r` from a rank-1 fit to the positive part of the
/// residual, scaled by the optimal nonnegative step against the full
/// residual. Returns false when no nonnegative step lowers the error.
fn rescue_component(x: &Dense3Tensor, model: &mut Model, r: usize) -> bool {
    model.zero_component(r);
    let dims = x.dims();
    let [ni, nj, nk] = dims;
    let approx = model.as_kruskal().reconstruct(dims).expect("dims match");
    let residual: Vec<f64> = x
        .data()
        .iter()
        .zip(approx.data())
        .map(|(a, b)| a - b)
        .collect();
    let positive = Dense3Tensor::new(dims, residual.iter().map(|v| v.max(0.0)).collect())
        .expect("finite residual");
    if positive.frobenius_norm() == 0.0 {
        return false;
    }

    let ones = |n: usize| Matrix::new(n, 1, vec![1.0; n]).expect("positive dims");
    let mut cols = [ones(ni), ones(nj), ones(nk)];
    for _ in 0..5 {
        for mode in 0..3 {
            let m = {
                let [a, b, c] = &cols;
                mttkrp(&positive, [a, b, c], mode)
            };
            let others: f64 = (0..3)
                .filter(|&o| o != mode)
                .map(|o| cols[o].column_norm(0).powi(2))
                .product();
            if others == 0.0 {
                return false;
            }
            let data: Vec<f64> = m.data().iter().map(|v| v / others).collect();
            cols[mode] = Matrix::new(m.rows(), 1, data).expect("finite");
        }
    }

    let inner: f64 = {
        let residual = Dense3Tensor::new(dims, residual).expect("finite residual");
        let [a, b, c] = &cols;
        let m = mttkrp(&residual, [a, b, c], 0);
        (0..ni).map(|i| m.get(i, 0) * a.get(i, 0)).sum()
    };
    let t_norm_sq: f64 = cols.iter().map(|c| c.column_norm(0).powi(2)).product();
    if !(inner > 0.0) || t_norm_sq == 0.0 {
        return false;
    }
    let step = (inner / t_norm_sq).cbrt();
    for (mode, c) in cols.iter().enumerate() {
        let scaled: Vec<f64> = c.data().iter().map(|v| v * step).collect();
        model.factors[mode].set_column(r, &scaled);
    }
    true
}
