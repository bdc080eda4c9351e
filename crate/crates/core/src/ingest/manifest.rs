//! Snapshot manifests: an ordered list of per-snapshot 2-D arrays that stack
//! into a units × inputs × snapshots tensor.
//!
//! ```json
//! {
//!   "layout": "activations",
//!   "snapshots": [{"task": 1, "epoch": 10, "path": "t1_e10.npy"}],
//!   "input_labels": ["cat", "dog"]
//! }
//! ```
//!
//! Each file holds an inputs × units array. Relative paths resolve against
//! the manifest's directory.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::npy::{read_npy, NpyArray, NpyError};
use crate::tensor::{Dense3Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest lists no snapshots")]
    EmptyManifest,
    #[error("snapshot {index} ({task}, {epoch}) is not after its predecessor")]
    Unordered { index: usize, task: u64, epoch: u64 },
    #[error("{path}: shape {found:?} differs from the first snapshot's {expected:?}")]
    ShapeMismatchAcrossSnapshots {
        path: PathBuf,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("{path}: expected a 2-D inputs x units array, got shape {shape:?}")]
    NotTwoDimensional { path: PathBuf, shape: Vec<usize> },
    #[error("{labels} input labels for {inputs} inputs")]
    InputLabelCount { labels: usize, inputs: usize },
    #[error("{path}: {source}")]
    Npy {
        path: PathBuf,
        #[source]
        source: NpyError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl ManifestError {
    pub fn is_io(&self) -> bool {
        match self {
            ManifestError::Io { .. } => true,
            ManifestError::Npy { source, .. } => matches!(source, NpyError::Io(_)),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Rows are representative inputs, columns flattened activations.
    Activations,
    /// Rows are filters, columns the flattened optimized image.
    FilterImages,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub task: u64,
    pub epoch: u64,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub layout: Layout,
    pub snapshots: Vec<SnapshotEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_labels: Option<Vec<String>>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl SnapshotManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut manifest: SnapshotManifest =
            serde_json::from_str(&text).map_err(|source| ManifestError::Json {
                path: path.to_path_buf(),
                source,
            })?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate()?;
        Ok(manifest)
    }

    /// Checks ordering only; file shapes are checked on assembly.
    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.snapshots.is_empty() {
            return Err(ManifestError::EmptyManifest);
        }
        for (index, pair) in self.snapshots.windows(2).enumerate() {
            if (pair[1].task, pair[1].epoch) <= (pair[0].task, pair[0].epoch) {
                return Err(ManifestError::Unordered {
                    index: index + 1,
                    task: pair[1].task,
                    epoch: pair[1].epoch,
                });
            }
        }
        Ok(())
    }

    pub fn resolve(&self, entry: &SnapshotEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    pub fn snapshot_labels(&self) -> Vec<String> {
        self.snapshots
            .iter()
            .map(|s| format!("(task {}, epoch {})", s.task, s.epoch))
            .collect()
    }
}

/// Stacks the snapshot files so that entry `(i, j, k)` is unit `i` of row
/// `j` in the `k`-th file.
pub fn assemble_tensor(manifest: &SnapshotManifest) -> Result<Dense3Tensor, ManifestError> {
    manifest.validate()?;
    let arrays: Vec<(PathBuf, NpyArray)> = manifest
        .snapshots
        .par_iter()
        .map(|entry| {
            let path = manifest.resolve(entry);
            read_npy(&path)
                .map(|a| (path.clone(), a))
                .map_err(|source| ManifestError::Npy { path, source })
        })
        .collect::<Result<_, _>>()?;

    let (first_path, first) = &arrays[0];
    if first.shape.len() != 2 {
        return Err(ManifestError::NotTwoDimensional {
            path: first_path.clone(),
            shape: first.shape.clone(),
        });
    }
    for (path, arr) in &arrays[1..] {
        if arr.shape != first.shape {
            return Err(ManifestError::ShapeMismatchAcrossSnapshots {
                path: path.clone(),
                expected: first.shape.clone(),
                found: arr.shape.clone(),
            });
        }
    }
    let (nj, ni, nk) = (first.shape[0], first.shape[1], arrays.len());

    let mut data = vec![0.0; ni * nj * nk];
    for (k, (_, arr)) in arrays.iter().enumerate() {
        for j in 0..nj {
            let row = &arr.data[j * ni..(j + 1) * ni];
            for (i, &value) in row.iter().enumerate() {
                data[(i * nj + j) * nk + k] = value;
            }
        }
    }

    let inputs = match &manifest.input_labels {
        Some(l) if l.len() != nj => {
            return Err(ManifestError::InputLabelCount {
                labels: l.len(),
                inputs: nj,
            })
        }
        Some(l) => l.clone(),
        None => (0..nj).map(|j| j.to_string()).collect(),
    };
    let units = (0..ni).map(|i| i.to_string()).collect();
    let x = Dense3Tensor::new([ni, nj, nk], data)?;
    Ok(x.with_labels([units, inputs, manifest.snapshot_labels()])?)
}
