//! Factor directories: `U.npy`, `V.npy`, `W.npy` (each dim × rank),
//! `lambda.npy` (rank) and `meta.json`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::npy::{read_npy, write_npy, NpyError};
use super::AxisLabels;
use crate::kruskal::{KruskalError, KruskalFactors};
use crate::solvers::{Algorithm, FitResult};
use crate::tensor::Matrix;

pub const FACTOR_FILES: [&str; 3] = ["U.npy", "V.npy", "W.npy"];
pub const WEIGHT_FILE: &str = "lambda.npy";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Npy {
        path: PathBuf,
        #[source]
        source: NpyError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: unexpected shape {shape:?}")]
    Shape { path: PathBuf, shape: Vec<usize> },
    #[error("meta.json says rank {meta}, factor files have rank {files}")]
    MetaMismatch { meta: usize, files: usize },
    #[error(transparent)]
    Kruskal(#[from] KruskalError),
}

impl ExportError {
    pub fn is_io(&self) -> bool {
        match self {
            ExportError::Io { .. } => true,
            ExportError::Npy { source, .. } => matches!(source, NpyError::Io(_)),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMeta {
    pub algorithm: Option<Algorithm>,
    pub rank: usize,
    pub dims: [usize; 3],
    pub seed: Option<u64>,
    pub final_error: Option<f64>,
    pub axis_labels: Option<AxisLabels>,
}

impl FactorMeta {
    pub fn for_fit(result: &FitResult, axis_labels: Option<AxisLabels>) -> Self {
        FactorMeta {
            algorithm: Some(result.algorithm),
            rank: result.factors.rank(),
            dims: result.factors.dims(),
            seed: Some(result.seed),
            final_error: Some(result.final_error),
            axis_labels,
        }
    }

    pub fn bare(f: &KruskalFactors) -> Self {
        FactorMeta {
            algorithm: None,
            rank: f.rank(),
            dims: f.dims(),
            seed: None,
            final_error: None,
            axis_labels: None,
        }
    }
}

pub fn export_factors(
    result: &FitResult,
    axis_labels: Option<AxisLabels>,
    dir: impl AsRef<Path>,
) -> Result<FactorMeta, ExportError> {
    let meta = FactorMeta::for_fit(result, axis_labels);
    write_factors(&result.factors, &meta, dir)?;
    Ok(meta)
}

pub fn write_factors(
    f: &KruskalFactors,
    meta: &FactorMeta,
    dir: impl AsRef<Path>,
) -> Result<(), ExportError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| ExportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let npy = |name: &str, shape: &[usize], data: &[f64]| {
        let path = dir.join(name);
        write_npy(&path, shape, data).map_err(|source| ExportError::Npy { path, source })
    };
    for (mode, name) in FACTOR_FILES.iter().enumerate() {
        let m = f.factor(mode);
        npy(name, &[m.rows(), m.cols()], m.data())?;
    }
    npy(WEIGHT_FILE, &[f.rank()], f.weights())?;
    let path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(meta).expect("meta serializes");
    fs::write(&path, json + "\n").map_err(|source| ExportError::Io { path, source })
}

pub fn import_factors(dir: impl AsRef<Path>) -> Result<(KruskalFactors, FactorMeta), ExportError> {
    let dir = dir.as_ref();
    let load = |name: &str| {
        let path = dir.join(name);
        read_npy(&path)
            .map(|a| (path.clone(), a))
            .map_err(|source| ExportError::Npy { path, source })
    };
    let mut mats = Vec::with_capacity(3);
    for name in FACTOR_FILES {
        let (path, arr) = load(name)?;
        if arr.shape.len() != 2 {
            return Err(ExportError::Shape { path, shape: arr.shape });
        }
        let m = Matrix::new(arr.shape[0], arr.shape[1], arr.data).map_err(KruskalError::from)?;
        mats.push(m);
    }
    let (path, lambda) = load(WEIGHT_FILE)?;
    if lambda.shape.len() != 1 {
        return Err(ExportError::Shape { path, shape: lambda.shape });
    }
    let w = mats.pop().expect("three factors");
    let v = mats.pop().expect("three factors");
    let u = mats.pop().expect("three factors");
    let f = KruskalFactors::new(lambda.data, u, v, w)?;

    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|source| ExportError::Io {
        path: path.clone(),
        source,
    })?;
    let meta: FactorMeta =
        serde_json::from_str(&text).map_err(|source| ExportError::Json { path, source })?;
    if meta.rank != f.rank() {
        return Err(ExportError::MetaMismatch {
            meta: meta.rank,
            files: f.rank(),
        });
    }
    Ok((f, meta))
}
