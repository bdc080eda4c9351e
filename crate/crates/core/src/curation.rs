//! Curated task splits from 2-D class embeddings: per-class centroids, the
//! convex hull over those centroids, an initial task drawn from hull classes
//! and an even random split of everything else.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hull::{quickhull, HullError};
use crate::ingest::npy::{read_npy, NpyError};

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("no embedded points")]
    EmptyClassSet,
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Hull(#[from] HullError),
    #[error("hull has {hull} classes, {requested} requested for the initial task")]
    HullTooSmall { hull: usize, requested: usize },
    #[error("{remaining} remaining classes cannot fill {tasks} later tasks")]
    TooManyTasks { remaining: usize, tasks: usize },
    #[error("{0} classes remain but no later tasks were requested")]
    NoLaterTasks(usize),
    #[error("embedding file: {0}")]
    Format(String),
    #[error(transparent)]
    Npy(#[from] NpyError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Class identifiers order numerically when both parse as integers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub String);

impl ClassId {
    fn numeric(&self) -> Option<i64> {
        self.0.trim().parse().ok()
    }
}

impl Ord for ClassId {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.numeric(), other.numeric()) {
            (Some(a), Some(b)) => a.cmp(&b).then_with(|| self.0.cmp(&other.0)),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => self.0.cmp(&other.0),
        }
    }
}

impl PartialOrd for ClassId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl From<&str> for ClassId {
    fn from(s: &str) -> Self {
        ClassId(s.to_string())
    }
}

impl std::fmt::Display for ClassId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedPoint {
    pub x: f64,
    pub y: f64,
    pub class: ClassId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub class: ClassId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPlan {
    #[serde(rename = "initial")]
    pub initial_classes: Vec<ClassId>,
    #[serde(rename = "tasks")]
    pub later_tasks: Vec<Vec<ClassId>>,
    /// Hull classes in counter-clockwise order.
    #[serde(rename = "hull")]
    pub hull_classes: Vec<ClassId>,
    pub seed: u64,
}

/// Per-class mean of the embedding coordinates, ordered by class id.
pub fn class_centroids(points: &[EmbeddedPoint]) -> Result<Vec<Centroid>, CurationError> {
    if points.is_empty() {
        return Err(CurationError::EmptyClassSet);
    }
    let mut sums: BTreeMap<&ClassId, (f64, f64, usize)> = BTreeMap::new();
    for (n, p) in points.iter().enumerate() {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(CurationError::NonFinite(n));
        }
        let entry = sums.entry(&p.class).or_insert((0.0, 0.0, 0));
        entry.0 += p.x;
        entry.1 += p.y;
        entry.2 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(class, (sx, sy, n))| Centroid {
            class: class.clone(),
            x: sx / n as f64,
            y: sy / n as f64,
        })
        .collect())
}

/// Draws `num_initial` hull classes for the first task and deals the rest,
/// shuffled, round-robin into `num_later_tasks` tasks.
pub fn curate_tasks(
    centroids: &[Centroid],
    num_initial: usize,
    num_later_tasks: usize,
    seed: u64,
) -> Result<TaskPlan, CurationError> {
    if centroids.is_empty() {
        return Err(CurationError::EmptyClassSet);
    }
    let coords: Vec<(f64, f64)> = centroids.iter().map(|c| (c.x, c.y)).collect();
    let hull_idx = quickhull(&coords)?;
    let hull_classes: Vec<ClassId> = hull_idx.iter().map(|&i| centroids[i].class.clone()).collect();
    if hull_classes.len() < num_initial {
        return Err(CurationError::HullTooSmall {
            hull: hull_classes.len(),
            requested: num_initial,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = hull_classes.clone();
    pool.sort();
    pool.shuffle(&mut rng);
    let initial_classes: Vec<ClassId> = pool[..num_initial].to_vec();

    let chosen: BTreeSet<&ClassId> = initial_classes.iter().collect();
    let mut remaining: Vec<ClassId> = centroids
        .iter()
        .map(|c| c.class.clone())
        .filter(|c| !chosen.contains(c))
        .collect();
    remaining.sort();
    remaining.dedup();
    if num_later_tasks == 0 {
        if !remaining.is_empty() {
            return Err(CurationError::NoLaterTasks(remaining.len()));
        }
    } else if remaining.len() < num_later_tasks {
        return Err(CurationError::TooManyTasks {
            remaining: remaining.len(),
            tasks: num_later_tasks,
        });
    }
    remaining.shuffle(&mut rng);
    let mut later_tasks = vec![Vec::new(); num_later_tasks];
    for (n, class) in remaining.into_iter().enumerate() {
        later_tasks[n % num_later_tasks].push(class);
    }
    Ok(TaskPlan {
        initial_classes,
        later_tasks,
        hull_classes,
        seed,
    })
}

/// Reads a CSV with header `class,x,y`.
pub fn read_embedding_csv(path: impl AsRef<Path>) -> Result<Vec<EmbeddedPoint>, CurationError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CurationError::Format(format!("missing column '{name}'")))
    };
    let (ci, xi, yi) = (col("class")?, col("x")?, col("y")?);
    let mut points = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let num = |idx: usize| -> Result<f64, CurationError> {
            record
                .get(idx)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| CurationError::Format(format!("bad number on data row {}", line + 1)))
        };
        points.push(EmbeddedPoint {
            x: num(xi)?,
            y: num(yi)?,
            class: ClassId(record.get(ci).unwrap_or_default().to_string()),
        });
    }
    Ok(points)
}

/// Reads an `N x 2` coordinate array and a length-`N` integer label array.
pub fn read_embedding_npy(
    coords: impl AsRef<Path>,
    labels: impl AsRef<Path>,
) -> Result<Vec<EmbeddedPoint>, CurationError> {
    let coords = read_npy(coords)?;
    let labels = read_npy(labels)?;
    if coords.shape.len() != 2 || coords.shape[1] != 2 {
        return Err(CurationError::Format(format!(
            "coordinates must be N x 2, got {:?}",
            coords.shape
        )));
    }
    let n = coords.shape[0];
    if labels.data.len() != n {
        return Err(CurationError::Format(format!(
            "{} labels for {n} points",
            labels.data.len()
        )));
    }
    labels
        .data
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            if label.fract() != 0.0 || !label.is_finite() {
                return Err(CurationError::Format(format!("label {label} is not an integer")));
            }
            Ok(EmbeddedPoint {
                x: coords.data[2 * i],
                y: coords.data[2 * i + 1],
                class: ClassId((label as i64).to_string()),
            })
        })
        .collect()
}
