//! Rank selection: sweep a range of ranks with several seeded replicates
//! each, find where the error curve flattens, then take the lowest rank in
//! that range whose replicates agree with each other.

use std::fmt::Write as _;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compare::similarity_score;
use crate::solvers::{fit, Algorithm, FitOptions, FitResult};
use crate::tensor::Dense3Tensor;

/// Default relative-improvement cutoff for the elbow rule.
pub const ELBOW_IMPROVEMENT: f64 = 0.05;
/// Default replicate-agreement threshold.
pub const STABILITY_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RankError {
    #[error("rank range is empty or starts at zero")]
    EmptyRange,
    #[error("need at least one replicate")]
    NoReplicates,
    #[error("elbow detection needs at least 3 ranks, got {0}")]
    TooFewRanks(usize),
    #[error("non-finite error for rank {0}")]
    NonFiniteError(usize),
    #[error("rank {0} has no successful fit")]
    IncompleteSweep(usize),
    #[error("replicate similarities are unavailable (need at least 2 replicates per rank)")]
    MissingSimilarities,
    #[error("no rank in {lo}..={hi} clears the threshold; best was rank {best_rank} at {best_similarity:.3}")]
    NoStableRank {
        lo: usize,
        hi: usize,
        best_rank: usize,
        best_similarity: f64,
    },
}

/// Seed for replicate `replicate` at `rank`; adding ranks never shifts
/// the seeds of existing replicates.
pub fn replicate_seed(seed_base: u64, rank: usize, replicate: usize) -> u64 {
    seed_base
        .wrapping_add(1000 * rank as u64)
        .wrapping_add(replicate as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub final_error: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub rank: usize,
    pub replicates: Vec<ReplicateRecord>,
    pub min_error: Option<f64>,
    pub mean_error: Option<f64>,
    pub std_error: Option<f64>,
    /// Mean similarity over all pairs of successful replicates.
    pub mean_similarity: Option<f64>,
    pub min_similarity: Option<f64>,
    /// Full fits, indexed by replicate. Not serialized.
    #[serde(skip)]
    pub fits: Vec<Option<FitResult>>,
}

impl RankSummary {
    pub fn best_fit(&self) -> Option<&FitResult> {
        self.fits
            .iter()
            .flatten()
            .min_by(|a, b| a.final_error.total_cmp(&b.final_error))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rank_range: (usize, usize),
    pub n_replicates: usize,
    pub algorithm: Algorithm,
    pub seed_base: u64,
    pub ranks: Vec<RankSummary>,
}

impl SweepReport {
    pub fn min_errors(&self) -> Vec<Option<f64>> {
        self.ranks.iter().map(|r| r.min_error).collect()
    }

    pub fn summary(&self, rank: usize) -> Option<&RankSummary> {
        self.ranks.iter().find(|r| r.rank == rank)
    }

    /// One row per replicate: `rank,replicate,error,mean_similarity`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,replicate,error,mean_similarity\n");
        for summary in &self.ranks {
            let sim = summary
                .mean_similarity
                .map(|s| s.to_string())
                .unwrap_or_default();
            for rec in &summary.replicates {
                let err = rec.final_error.map(|e| e.to_string()).unwrap_or_default();
                let _ = writeln!(out, "{},{},{},{}", summary.rank, rec.replicate, err, sim);
            }
        }
        out
    }
}

fn stats(values: &[f64]) -> (Option<f64>, Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None, None);
    }
    let n = values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (Some(min), Some(mean), Some(var.sqrt()))
}

fn summarize(rank: usize, outcomes: Vec<(u64, Result<FitResult, String>)>) -> RankSummary {
    let mut replicates = Vec::with_capacity(outcomes.len());
    let mut fits = Vec::with_capacity(outcomes.len());
    for (replicate, (seed, outcome)) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(fit) => {
                replicates.push(ReplicateRecord {
                    replicate,
                    seed,
                    final_error: Some(fit.final_error),
                    iterations: Some(fit.iterations),
                    converged: Some(fit.converged),
                    error: None,
                });
                fits.push(Some(fit));
            }
            Err(e) => {
                replicates.push(ReplicateRecord {
                    replicate,
                    seed,
                    final_error: None,
                    iterations: None,
                    converged: None,
                    error: Some(e),
                });
                fits.push(None);
            }
        }
    }
    let errors: Vec<f64> = replicates.iter().filter_map(|r| r.final_error).collect();
    let (min_error, mean_error, std_error) = stats(&errors);

    let ok: Vec<&FitResult> = fits.iter().flatten().collect();
    let mut pairs = Vec::new();
    for a in 0..ok.len() {
        for b in a + 1..ok.len() {
            if let Ok(s) = similarity_score(&ok[a].factors, &ok[b].factors) {
                pairs.push(s.score);
            }
        }
    }
    let (min_similarity, mean_similarity, _) = stats(&pairs);
    RankSummary {
        rank,
        replicates,
        min_error,
        mean_error,
        std_error,
        mean_similarity,
        min_similarity,
        fits,
    }
}

/// Fits `n_replicates` models at every rank in `ranks`. Replicates run on the
/// current rayon pool; results are keyed by (rank, replicate), so the report
/// does not depend on scheduling. Individual fit failures are recorded.
pub fn sweep_ranks(
    x: &Dense3Tensor,
    ranks: RangeInclusive<usize>,
    n_replicates: usize,
    algorithm: Algorithm,
    opts: &FitOptions,
) -> Result<SweepReport, RankError> {
    let (lo, hi) = (*ranks.start(), *ranks.end());
    if lo == 0 || lo > hi {
        return Err(RankError::EmptyRange);
    }
    if n_replicates == 0 {
        return Err(RankError::NoReplicates);
    }
    let jobs: Vec<(usize, usize)> = (lo..=hi)
        .flat_map(|r| (0..n_replicates).map(move |rep| (r, rep)))
        .collect();
    let mut outcomes: Vec<(usize, usize, u64, Result<FitResult, String>)> = jobs
        .into_par_iter()
        .map(|(rank, rep)| {
            let seed = replicate_seed(opts.seed, rank, rep);
            let run_opts = FitOptions { seed, ..*opts };
            let outcome = fit(x, rank, algorithm, &run_opts).map_err(|e| e.to_string());
            (rank, rep, seed, outcome)
        })
        .collect();
    outcomes.sort_by_key(|(rank, rep, _, _)| (*rank, *rep));

    let mut summaries = Vec::new();
    let mut iter = outcomes.into_iter().peekable();
    for rank in lo..=hi {
        let mut per_rank = Vec::with_capacity(n_replicates);
        while let Some((_, _, seed, outcome)) = iter.next_if(|(r, _, _, _)| *r == rank) {
            per_rank.push((seed, outcome));
        }
        summaries.push(summarize(rank, per_rank));
    }
    Ok(SweepReport {
        rank_range: (lo, hi),
        n_replicates,
        algorithm,
        seed_base: opts.seed,
        ranks: summaries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Elbow {
    pub rank: usize,
    /// Inclusive range of candidate ranks.
    pub interval: (usize, usize),
    /// Set when the curve never flattens; `rank` is then the top of the range.
    pub no_elbow: bool,
}

/// `errors[n]` is the error at rank `first_rank + n`. The elbow is the
/// smallest rank from which every further step improves the error by less
/// than `improvement` (relative); the interval spans it and the next two
/// ranks, clipped to the range.
pub fn detect_elbow(first_rank: usize, errors: &[f64], improvement: f64) -> Result<Elbow, RankError> {
    if errors.len() < 3 {
        return Err(RankError::TooFewRanks(errors.len()));
    }
    if let Some(n) = errors.iter().position(|e| !e.is_finite()) {
        return Err(RankError::NonFiniteError(first_rank + n));
    }
    let last = first_rank + errors.len() - 1;
    let flat: Vec<bool> = errors
        .windows(2)
        .map(|w| {
            let gain = if w[0] > 0.0 { (w[0] - w[1]) / w[0] } else { 0.0 };
            gain < improvement
        })
        .collect();
    // Smallest n with flat[n..] all true.
    let mut start = flat.len();
    while start > 0 && flat[start - 1] {
        start -= 1;
    }
    if start == flat.len() {
        return Ok(Elbow {
            rank: last,
            interval: (last, last),
            no_elbow: true,
        });
    }
    let rank = first_rank + start;
    Ok(Elbow {
        rank,
        interval: (rank, (rank + 2).min(last)),
        no_elbow: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRule {
    pub similarity_threshold: f64,
    pub elbow_improvement: f64,
}

impl Default for SelectionRule {
    fn default() -> Self {
        Self {
            similarity_threshold: STABILITY_THRESHOLD,
            elbow_improvement: ELBOW_IMPROVEMENT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSelection {
    pub rank: usize,
    pub mean_similarity: f64,
    pub elbow: Elbow,
}

pub fn select_rank(report: &SweepReport, threshold: f64) -> Result<RankSelection, RankError> {
    select_rank_with(
        report,
        SelectionRule {
            similarity_threshold: threshold,
            ..SelectionRule::default()
        },
    )
}

/// Lowest rank inside the elbow interval whose mean pairwise replicate
/// similarity exceeds the threshold.
pub fn select_rank_with(report: &SweepReport, rule: SelectionRule) -> Result<RankSelection, RankError> {
    if report.n_replicates < 2 {
        return Err(RankError::MissingSimilarities);
    }
    let errors = report
        .ranks
        .iter()
        .map(|r| r.min_error.ok_or(RankError::IncompleteSweep(r.rank)))
        .collect::<Result<Vec<_>, _>>()?;
    let elbow = detect_elbow(report.rank_range.0, &errors, rule.elbow_improvement)?;
    let (lo, hi) = elbow.interval;
    let mut best: Option<(usize, f64)> = None;
    for rank in lo..=hi {
        let sim = report
            .summary(rank)
            .and_then(|s| s.mean_similarity)
            .ok_or(RankError::MissingSimilarities)?;
        if sim > rule.similarity_threshold {
            return Ok(RankSelection {
                rank,
                mean_similarity: sim,
                elbow,
            });
        }
        if best.is_none_or(|(_, b)| sim > b) {
            best = Some((rank, sim));
        }
    }
    let (best_rank, best_similarity) = best.expect("interval is nonempty");
    Err(RankError::NoStableRank {
        lo,
        hi,
        best_rank,
        best_similarity,
    })
}
