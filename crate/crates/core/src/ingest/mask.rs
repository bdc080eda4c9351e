//! Unit masks built from one component's activation factor, for masking
//! experiments run elsewhere.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::npy::{write_npy_bool, NpyError};
use crate::kruskal::{KruskalError, KruskalFactors};

#[derive(Debug, Error)]
pub enum MaskError {
    #[error(transparent)]
    IndexOutOfRange(#[from] KruskalError),
    #[error("top_k {top_k} exceeds {units} units")]
    TopKTooLarge { top_k: usize, units: usize },
    #[error(transparent)]
    Npy(#[from] NpyError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronMask {
    pub layer: Option<String>,
    #[serde(skip)]
    pub mask: Vec<bool>,
    pub component: usize,
    pub top_k: usize,
    /// Where the factors came from, usually a factor directory.
    pub source: Option<String>,
    pub units: usize,
    /// Indices of the selected units, ascending.
    pub selected: Vec<usize>,
}

/// Selects the `top_k` largest entries of `u^r`; ties go to the lower index.
pub fn export_neuron_mask(
    f: &KruskalFactors,
    component: usize,
    top_k: usize,
) -> Result<NeuronMask, MaskError> {
    let u = f.component(component)?.u;
    if top_k > u.len() {
        return Err(MaskError::TopKTooLarge {
            top_k,
            units: u.len(),
        });
    }
    let mut order: Vec<usize> = (0..u.len()).collect();
    order.sort_by(|&a, &b| u[b].total_cmp(&u[a]).then(a.cmp(&b)));
    let mut selected = order[..top_k].to_vec();
    selected.sort_unstable();
    let mut mask = vec![false; u.len()];
    for &i in &selected {
        mask[i] = true;
    }
    Ok(NeuronMask {
        layer: None,
        mask,
        component,
        top_k,
        source: None,
        units: u.len(),
        selected,
    })
}

/// Writes the boolean vector to `path` and provenance to `path` with a
/// `.json` extension.
pub fn write_mask(mask: &NeuronMask, path: impl AsRef<Path>) -> Result<PathBuf, MaskError> {
    let path = path.as_ref();
    write_npy_bool(path, &mask.mask)?;
    let sidecar = path.with_extension("json");
    let json = serde_json::to_string_pretty(mask).expect("mask serializes");
    fs::write(&sidecar, json + "\n").map_err(|source| MaskError::Io {
        path: sidecar.clone(),
        source,
    })?;
    Ok(sidecar)
}
