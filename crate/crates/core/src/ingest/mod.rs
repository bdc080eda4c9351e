//! File formats: `.npy` arrays, snapshot manifests, exported factors and
//! neuron masks.
//!
//! A tensor on disk is a 3-D `'<f8'` `.npy` file. Axis labels, when present,
//! live next to it in `<stem>.labels.json`.

pub mod export;
pub mod manifest;
pub mod mask;
pub mod npy;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Dense3Tensor, TensorError};
use manifest::{assemble_tensor, ManifestError, SnapshotManifest};
use npy::{read_npy, write_npy, NpyError};

/// Names for the three tensor axes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisLabels {
    pub units: Vec<String>,
    pub inputs: Vec<String>,
    pub snapshots: Vec<String>,
}

impl AxisLabels {
    pub fn from_tensor(x: &Dense3Tensor) -> Option<Self> {
        x.labels().map(|[u, i, s]| AxisLabels {
            units: u.clone(),
            inputs: i.clone(),
            snapshots: s.clone(),
        })
    }

    pub fn into_array(self) -> [Vec<String>; 3] {
        [self.units, self.inputs, self.snapshots]
    }
}

#[derive(Debug, Error)]
pub enum TensorFileError {
    #[error("{path}: {source}")]
    Npy {
        path: PathBuf,
        #[source]
        source: NpyError,
    },
    #[error("{path}: expected a 3-D array, got shape {shape:?}")]
    NotThreeDimensional { path: PathBuf, shape: Vec<usize> },
    #[error("{path}: {source}")]
    Labels {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
}

impl TensorFileError {
    /// True for failures to read or write the filesystem, as opposed to
    /// malformed content.
    pub fn is_io(&self) -> bool {
        match self {
            TensorFileError::Io { .. } => true,
            TensorFileError::Npy { source, .. } => matches!(source, NpyError::Io(_)),
            TensorFileError::Manifest(m) => m.is_io(),
            _ => false,
        }
    }
}

pub fn labels_path(tensor_path: &Path) -> PathBuf {
    let stem = tensor_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    tensor_path.with_file_name(format!("{stem}.labels.json"))
}

pub fn write_tensor(path: impl AsRef<Path>, x: &Dense3Tensor) -> Result<(), TensorFileError> {
    let path = path.as_ref();
    write_npy(path, &x.dims(), x.data()).map_err(|source| TensorFileError::Npy {
        path: path.to_path_buf(),
        source,
    })?;
    if let Some(labels) = AxisLabels::from_tensor(x) {
        let lp = labels_path(path);
        let json = serde_json::to_string_pretty(&labels).expect("labels serialize");
        fs::write(&lp, json + "\n").map_err(|source| TensorFileError::Io { path: lp, source })?;
    }
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Dense3Tensor, TensorFileError> {
    let path = path.as_ref();
    let arr = read_npy(path).map_err(|source| TensorFileError::Npy {
        path: path.to_path_buf(),
        source,
    })?;
    let dims: [usize; 3] = arr
        .shape
        .as_slice()
        .try_into()
        .map_err(|_| TensorFileError::NotThreeDimensional {
            path: path.to_path_buf(),
            shape: arr.shape.clone(),
        })?;
    let x = Dense3Tensor::new(dims, arr.data)?;
    let lp = labels_path(path);
    if !lp.exists() {
        return Ok(x);
    }
    let text = fs::read_to_string(&lp).map_err(|source| TensorFileError::Io {
        path: lp.clone(),
        source,
    })?;
    let labels: AxisLabels =
        serde_json::from_str(&text).map_err(|source| TensorFileError::Labels { path: lp, source })?;
    Ok(x.with_labels(labels.into_array())?)
}

/// Reads a `.npy` tensor, or assembles one when given a `.json` manifest.
pub fn load_tensor(path: impl AsRef<Path>) -> Result<Dense3Tensor, TensorFileError> {
    let path = path.as_ref();
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let manifest = SnapshotManifest::load(path)?;
        Ok(assemble_tensor(&manifest)?)
    } else {
        read_tensor(path)
    }
}
