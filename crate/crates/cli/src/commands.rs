use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use tca_core::compare::{similarity_score_with, SimilarityOptions};
use tca_core::curation::{
    class_centroids, curate_tasks, read_embedding_csv, read_embedding_npy, TaskPlan,
};
use tca_core::ingest::export::{export_factors, import_factors, write_factors, FactorMeta};
use tca_core::ingest::manifest::{assemble_tensor, SnapshotManifest};
use tca_core::ingest::mask::{export_neuron_mask, write_mask};
use tca_core::ingest::{load_tensor, write_tensor, AxisLabels, TensorFileError};
use tca_core::rank::{replicate_seed, select_rank, sweep_ranks, RankError, RankSelection, SweepReport};
use tca_core::solvers::{fit, FitError, FitOptions, FitResult, FitWarning};
use tca_core::synth::{generate, PlantedSpec};
use tca_core::{Algorithm, Dense3Tensor};

use crate::{
    BuildTensorArgs, Cli, CliError, Command, CompareArgs, CurateArgs, FitArgs, MaskArgs,
    SolverArgs, SweepArgs, SynthArgs,
};

pub const FIT_REPORT: &str = "fit_report.json";
pub const FACTORS_DIR: &str = "factors";
pub const SWEEP_JSON: &str = "sweep.json";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const COMPARE_JSON: &str = "compare.json";
pub const COMPARE_CSV: &str = "compare.csv";
pub const ALIGNED_DIR: &str = "aligned_b";
pub const TASK_PLAN: &str = "task_plan.json";
pub const TRUTH_DIR: &str = "truth";

pub(crate) fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Fit(args) => cmd_fit(args, seed, &cli.out_dir),
        Command::Sweep(args) => cmd_sweep(args, seed, &cli.out_dir),
        Command::Compare(args) => cmd_compare(args, &cli.out_dir),
        Command::Curate(args) => cmd_curate(args, seed, &cli.out_dir),
        Command::BuildTensor(args) => cmd_build_tensor(args, &cli.out_dir),
        Command::Synth(args) => cmd_synth(args, cli.seed, &cli.out_dir),
        Command::Mask(args) => cmd_mask(args, &cli.out_dir),
    }
}

fn require_exists(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::io(path.display(), "no such file or directory"))
    }
}

fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path.display(), e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path.display(), e))
}

fn read_tensor_input(path: &Path) -> Result<Dense3Tensor, CliError> {
    load_tensor(path).map_err(|e| match e {
        TensorFileError::Tensor(t) => CliError::Usage(format!("{}: {t}", path.display())),
        other => other.into(),
    })
}

fn solver_options(args: &SolverArgs, seed: u64) -> Result<FitOptions, CliError> {
    let opts = FitOptions::default()
        .with_seed(seed)
        .with_max_iters(args.max_iters)
        .with_rel_tol(args.tol);
    opts.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(opts)
}

/// Rejects inputs no replicate could fit, before any work starts.
fn check_fit_preconditions(x: &Dense3Tensor, algorithm: Algorithm) -> Result<(), CliError> {
    if x.frobenius_norm() == 0.0 {
        return Err(CliError::Usage(FitError::ZeroTensor.to_string()));
    }
    if algorithm.is_nonnegative() {
        if let Some((index, &value)) = x.data().iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(CliError::Usage(format!(
                "{}; use --algorithm als for signed data",
                FitError::NegativeInput { index, value }
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReplicate {
    pub replicate: usize,
    pub seed: u64,
    pub final_error: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub degenerate_components: Option<usize>,
    pub warnings: Vec<FitWarning>,
    pub error: Option<String>,
    pub usable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub tensor: String,
    pub dims: [usize; 3],
    pub rank: usize,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    pub replicates: Vec<FitReplicate>,
    pub best_replicate: Option<usize>,
    pub final_error: Option<f64>,
    pub factors_dir: Option<String>,
}

fn fit_replicates(
    x: &Dense3Tensor,
    rank: usize,
    n: usize,
    algorithm: Algorithm,
    opts: &FitOptions,
) -> Vec<(FitReplicate, Option<FitResult>)> {
    (0..n)
        .into_par_iter()
        .map(|replicate| {
            let seed = replicate_seed(opts.seed, rank, replicate);
            let run_opts = FitOptions { seed, ..*opts };
            match fit(x, rank, algorithm, &run_opts) {
                Ok(result) => {
                    let degenerate = result.degenerate_components();
                    let usable = result.final_error.is_finite() && degenerate < rank;
                    let record = FitReplicate {
                        replicate,
                        seed,
                        final_error: Some(result.final_error),
                        iterations: Some(result.iterations),
                        converged: Some(result.converged),
                        degenerate_components: Some(degenerate),
                        warnings: result.warnings.clone(),
                        error: None,
                        usable,
                    };
                    (record, Some(result))
                }
                Err(e) => (
                    FitReplicate {
                        replicate,
                        seed,
                        final_error: None,
                        iterations: None,
                        converged: None,
                        degenerate_components: None,
                        warnings: Vec::new(),
                        error: Some(e.to_string()),
                        usable: false,
                    },
                    None,
                ),
            }
        })
        .collect()
}

fn cmd_fit(args: &FitArgs, seed: u64, out_dir: &Path) -> Result<(), CliError> {
    require_exists(&args.tensor)?;
    let opts = solver_options(&args.solver, seed)?;
    prepare_out_dir(out_dir)?;
    let x = read_tensor_input(&args.tensor)?;
    let algorithm = args.solver.algorithm;
    check_fit_preconditions(&x, algorithm)?;
    let rank = args.rank as usize;

    info!("fitting rank {rank} with {algorithm}, {} replicate(s)", args.replicates);
    let outcomes = fit_replicates(&x, rank, args.replicates as usize, algorithm, &opts);
    let best = outcomes
        .iter()
        .filter(|(rec, _)| rec.usable)
        .min_by(|(a, _), (b, _)| {
            a.final_error
                .unwrap_or(f64::INFINITY)
                .total_cmp(&b.final_error.unwrap_or(f64::INFINITY))
                .then(a.replicate.cmp(&b.replicate))
        })
        .map(|(rec, result)| (rec.replicate, result.as_ref().expect("usable fits exist")));

    let mut report = FitReport {
        tensor: args.tensor.display().to_string(),
        dims: x.dims(),
        rank,
        algorithm,
        seed,
        max_iters: opts.max_iters,
        tol: opts.rel_tol,
        replicates: outcomes.iter().map(|(rec, _)| rec.clone()).collect(),
        best_replicate: None,
        final_error: None,
        factors_dir: None,
    };
    let Some((best_rep, result)) = best else {
        write_json(&out_dir.join(FIT_REPORT), &report)?;
        let reasons: Vec<String> = outcomes
            .iter()
            .map(|(rec, _)| {
                rec.error
                    .clone()
                    .unwrap_or_else(|| "all components degenerate".into())
            })
            .collect();
        return Err(CliError::NoUsableReplicate(reasons.join("; ")));
    };
    for warning in &result.warnings {
        warn!("replicate {best_rep}: {warning:?}");
    }
    export_factors(result, AxisLabels::from_tensor(&x), out_dir.join(FACTORS_DIR))?;
    report.best_replicate = Some(best_rep);
    report.final_error = Some(result.final_error);
    report.factors_dir = Some(FACTORS_DIR.into());
    write_json(&out_dir.join(FIT_REPORT), &report)?;
    println!(
        "rank {rank} {algorithm}: best error {:.6} (replicate {best_rep} of {})",
        result.final_error, args.replicates
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub tensor: String,
    #[serde(flatten)]
    pub report: SweepReport,
    pub max_iters: usize,
    pub tol: f64,
    pub selection: Option<RankSelection>,
    pub selection_error: Option<String>,
}

fn cmd_sweep(args: &SweepArgs, seed: u64, out_dir: &Path) -> Result<(), CliError> {
    let (lo, hi) = args.ranks;
    if args.select {
        if args.replicates < 2 {
            return Err(CliError::Usage(
                "--select needs at least 2 replicates to measure stability".into(),
            ));
        }
        if hi - lo + 1 < 3 {
            return Err(CliError::Usage("--select needs a range of at least 3 ranks".into()));
        }
    }
    if !(args.threshold > 0.0 && args.threshold <= 1.0) {
        return Err(CliError::Usage("--threshold must be in (0, 1]".into()));
    }
    require_exists(&args.tensor)?;
    let opts = solver_options(&args.solver, seed)?;
    prepare_out_dir(out_dir)?;
    let x = read_tensor_input(&args.tensor)?;
    let algorithm = args.solver.algorithm;
    check_fit_preconditions(&x, algorithm)?;

    info!("sweeping ranks {lo}..={hi} with {algorithm}, {} replicates", args.replicates);
    let report = sweep_ranks(&x, lo..=hi, args.replicates as usize, algorithm, &opts)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    for summary in &report.ranks {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".into(), |v| format!("{v:.6}"));
        println!(
            "rank {:>3}: min error {}  mean similarity {}",
            summary.rank,
            fmt(summary.min_error),
            fmt(summary.mean_similarity)
        );
    }

    let mut output = SweepOutput {
        tensor: args.tensor.display().to_string(),
        report,
        max_iters: opts.max_iters,
        tol: opts.rel_tol,
        selection: None,
        selection_error: None,
    };
    let mut outcome = Ok(());
    if args.select {
        match select_rank(&output.report, args.threshold) {
            Ok(selection) => {
                let best = output
                    .report
                    .summary(selection.rank)
                    .and_then(|s| s.best_fit())
                    .expect("selected rank has fits");
                export_factors(best, AxisLabels::from_tensor(&x), out_dir.join(FACTORS_DIR))?;
                println!(
                    "selected rank {} (mean similarity {:.3}, elbow {})",
                    selection.rank, selection.mean_similarity, selection.elbow.rank
                );
                output.selection = Some(selection);
            }
            Err(e) => {
                output.selection_error = Some(e.to_string());
                outcome = Err(match e {
                    RankError::NoStableRank { .. } => CliError::NoStableRank(e.to_string()),
                    RankError::IncompleteSweep(_) => CliError::NoUsableReplicate(e.to_string()),
                    other => CliError::Usage(other.to_string()),
                });
            }
        }
    }
    write_json(&out_dir.join(SWEEP_JSON), &output)?;
    write_text(&out_dir.join(SWEEP_CSV), &output.report.to_csv())?;
    outcome
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub a: String,
    pub b: String,
    pub score: f64,
    pub penalize_weights: bool,
    /// `permutation[r]` is the component of B matched to component `r` of A.
    pub permutation: Vec<usize>,
    pub per_component: Vec<f64>,
    pub aligned_dir: String,
}

fn cmd_compare(args: &CompareArgs, out_dir: &Path) -> Result<(), CliError> {
    require_exists(&args.a)?;
    require_exists(&args.b)?;
    prepare_out_dir(out_dir)?;
    let (a, _) = import_factors(&args.a)?;
    let (b, meta_b) = import_factors(&args.b)?;
    let opts = SimilarityOptions {
        penalize_weights: args.penalize_weights,
    };
    let result = similarity_score_with(&a, &b, opts)?;

    let aligned = b.permute(&result.permutation);
    write_factors(&aligned, &meta_b, out_dir.join(ALIGNED_DIR))?;
    let mut table = String::from("component,matched,similarity,weight_a,weight_b\n");
    for (r, (&s, sim)) in result.permutation.iter().zip(&result.per_component).enumerate() {
        let _ = writeln!(table, "{r},{s},{sim},{},{}", a.weights()[r], b.weights()[s]);
    }
    write_text(&out_dir.join(COMPARE_CSV), &table)?;
    let report = CompareReport {
        a: args.a.display().to_string(),
        b: args.b.display().to_string(),
        score: result.score,
        penalize_weights: args.penalize_weights,
        permutation: result.permutation.clone(),
        per_component: result.per_component.clone(),
        aligned_dir: ALIGNED_DIR.into(),
    };
    write_json(&out_dir.join(COMPARE_JSON), &report)?;
    println!("similarity {:.6}", result.score);
    println!("permutation {:?}", result.permutation);
    Ok(())
}

fn cmd_curate(args: &CurateArgs, seed: u64, out_dir: &Path) -> Result<(), CliError> {
    require_exists(&args.embedding)?;
    let is_npy = args
        .embedding
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("npy"));
    if is_npy && args.labels.is_none() {
        return Err(CliError::Usage("a .npy embedding needs --labels".into()));
    }
    if let Some(labels) = &args.labels {
        require_exists(labels)?;
    }
    prepare_out_dir(out_dir)?;
    let points = match &args.labels {
        Some(labels) if is_npy => read_embedding_npy(&args.embedding, labels)?,
        _ => read_embedding_csv(&args.embedding)?,
    };
    let centroids = class_centroids(&points)?;
    let plan: TaskPlan = curate_tasks(&centroids, args.initial, args.tasks, seed)?;
    write_json(&out_dir.join(TASK_PLAN), &plan)?;
    println!("{}", serde_json::to_string(&plan).expect("plan serializes"));
    Ok(())
}

fn cmd_build_tensor(args: &BuildTensorArgs, out_dir: &Path) -> Result<(), CliError> {
    require_exists(&args.manifest)?;
    prepare_out_dir(out_dir)?;
    let manifest = SnapshotManifest::load(&args.manifest).map_err(manifest_error)?;
    let x = assemble_tensor(&manifest).map_err(manifest_error)?;
    let path = out_dir.join(&args.output);
    write_tensor(&path, &x)?;
    println!("wrote {} with dims {:?}", path.display(), x.dims());
    Ok(())
}

fn manifest_error(e: tca_core::ingest::manifest::ManifestError) -> CliError {
    CliError::from(TensorFileError::from(e))
}

/// On-disk planted spec; `seed` may be left to the command line.
#[derive(Debug, Deserialize)]
struct SpecFile {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(flatten)]
    rest: serde_json::Map<String, serde_json::Value>,
}

fn cmd_synth(args: &SynthArgs, seed: Option<u64>, out_dir: &Path) -> Result<(), CliError> {
    require_exists(&args.spec)?;
    prepare_out_dir(out_dir)?;
    let text = fs::read_to_string(&args.spec).map_err(|e| CliError::io(args.spec.display(), e))?;
    let file: SpecFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.spec.display())))?;
    let mut fields = file.rest;
    let seed = seed.or(file.seed).unwrap_or(0);
    fields.insert("seed".into(), seed.into());
    let spec: PlantedSpec = serde_json::from_value(serde_json::Value::Object(fields))
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.spec.display())))?;
    let (x, truth) = generate(&spec).map_err(|e| CliError::Usage(e.to_string()))?;

    write_tensor(out_dir.join("tensor.npy"), &x)?;
    write_factors(&truth, &FactorMeta::bare(&truth), out_dir.join(TRUTH_DIR))?;
    write_json(&out_dir.join("spec.json"), &spec)?;
    println!("wrote tensor {:?} with planted rank {}", x.dims(), spec.rank);
    Ok(())
}

fn cmd_mask(args: &MaskArgs, out_dir: &Path) -> Result<(), CliError> {
    require_exists(&args.factors)?;
    prepare_out_dir(out_dir)?;
    let (f, _) = import_factors(&args.factors)?;
    let mut mask = export_neuron_mask(&f, args.component, args.top_k)?;
    mask.layer = args.layer.clone();
    mask.source = Some(args.factors.display().to_string());
    let path: PathBuf = out_dir.join(&args.output);
    let sidecar = write_mask(&mask, &path)?;
    println!(
        "wrote {} and {} ({} of {} units)",
        path.display(),
        sidecar.display(),
        mask.top_k,
        mask.units
    );
    Ok(())
}
