mod support;

use std::fs;
use std::path::Path;

use tca_core::ingest::export::{import_factors, write_factors, FactorMeta};
use tca_core::ingest::manifest::{Layout, SnapshotEntry, SnapshotManifest};
use tca_core::ingest::npy::{read_npy, write_npy};
use tca_core::ingest::{read_tensor, write_tensor};
use tca_core::Dense3Tensor;

use support::{assert_valid, p, read_json, snapshot_dir, tca, validate};

fn write_spec(dir: &Path, json: &str) -> String {
    let path = dir.join("spec.json");
    fs::write(&path, json).unwrap();
    p(&path)
}

/// Noiseless dense rank-3 tensor written by `synth` into `dir`.
fn synth_rank3(dir: &Path) -> String {
    let spec = write_spec(
        dir,
        r#"{"dims": [20, 8, 10], "rank": 3, "noise_level": 0.0, "structure": "dense_nonneg"}"#,
    );
    let out = dir.join("synth");
    assert_eq!(tca(&["synth", "--spec", &spec, "--seed", "5", "--out-dir", &p(&out)]), 0);
    p(&out.join("tensor.npy"))
}

#[test]
fn synth_then_fit_recovers_noiseless_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let tensor = synth_rank3(dir.path());
    let out = dir.path().join("fit");
    let code = tca(&[
        "fit", "--tensor", &tensor, "--rank", "3", "--replicates", "3", "--max-iters", "5000",
        "--tol", "1e-12", "--out-dir", &p(&out),
    ]);
    assert_eq!(code, 0);
    let report = read_json(out.join("fit_report.json"));
    let err = report["final_error"].as_f64().unwrap();
    assert!(err <= 1e-4, "{err}");
    assert_eq!(report["algorithm"], "NN_BCD");
    assert_eq!(report["replicates"].as_array().unwrap().len(), 3);
    assert_valid(out.join("fit_report.json"), "fit_report");
    assert_valid(out.join("factors/meta.json"), "meta");
    assert_valid(dir.path().join("synth/spec.json"), "planted_spec");
    assert_valid(dir.path().join("synth/truth/meta.json"), "meta");
}

#[test]
fn rank_zero_is_rejected_with_usage() {
    assert_eq!(tca(&["fit", "--tensor", "missing.npy", "--rank", "0"]), 2);
}

#[test]
fn signed_data_needs_als() {
    let dir = tempfile::tempdir().unwrap();
    let data: Vec<f64> = (0..60).map(|n| ((n * 37) % 11) as f64 - 5.0).collect();
    let path = dir.path().join("signed.npy");
    write_tensor(&path, &Dense3Tensor::new([5, 4, 3], data).unwrap()).unwrap();
    let out = p(&dir.path().join("out"));
    let base = ["fit", "--tensor", &p(&path), "--rank", "2", "--out-dir", &out];
    let with_algo = |a: &str| {
        let mut args: Vec<&str> = base.to_vec();
        args.extend(["--algorithm", a]);
        tca(&args)
    };
    assert_eq!(with_algo("als"), 0);
    assert_eq!(with_algo("nn-hals"), 2);
    assert_eq!(with_algo("nn-bcd"), 2);
}

#[test]
fn io_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(&dir.path().join("out"));
    assert_eq!(tca(&["fit", "--tensor", "does/not/exist.npy", "--rank", "2", "--out-dir", &out]), 3);
    let junk = dir.path().join("junk.npy");
    fs::write(&junk, b"not an array").unwrap();
    assert_eq!(tca(&["fit", "--tensor", &p(&junk), "--rank", "2", "--out-dir", &out]), 3);
    assert_eq!(tca(&["compare", "--a", "nowhere", "--b", "nowhere", "--out-dir", &out]), 3);
}

#[test]
fn sweep_argument_errors() {
    let dir = tempfile::tempdir().unwrap();
    let tensor = synth_rank3(dir.path());
    let out = p(&dir.path().join("sweep"));
    assert_eq!(tca(&["sweep", "--tensor", &tensor, "--ranks", "8..3", "--out-dir", &out]), 2);
    assert_eq!(
        tca(&["sweep", "--tensor", &tensor, "--ranks", "1..4", "--replicates", "1", "--select", "--out-dir", &out]),
        2
    );
    assert_eq!(
        tca(&["sweep", "--tensor", &tensor, "--ranks", "1..2", "--replicates", "3", "--select", "--out-dir", &out]),
        2
    );
    assert!(!Path::new(&out).join("sweep.json").exists());
}

#[test]
fn sweep_writes_reports_and_reports_no_stable_rank() {
    let dir = tempfile::tempdir().unwrap();
    let tensor = synth_rank3(dir.path());
    let out = dir.path().join("sweep");
    let code = tca(&[
        "sweep", "--tensor", &tensor, "--ranks", "1..4", "--replicates", "3", "--algorithm",
        "nn-hals", "--select", "--threshold", "1.0", "--out-dir", &p(&out),
    ]);
    assert_eq!(code, 5);
    assert_valid(out.join("sweep.json"), "sweep");
    let report = read_json(out.join("sweep.json"));
    assert!(report["selection"].is_null());
    assert!(report["selection_error"].as_str().unwrap().contains("no rank"));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("rank,replicate,error,mean_similarity"));
    assert_eq!(lines.count(), 12);
}

#[test]
fn sweep_selects_planted_rank() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        r#"{"dims": [60, 8, 12], "rank": 3, "noise_level": 0.02,
            "structure": {"task_gated": {"task_ends": [4, 8, 12], "support_fraction": 0.4}}}"#,
    );
    let synth = dir.path().join("synth");
    assert_eq!(tca(&["synth", "--spec", &spec, "--seed", "8", "--out-dir", &p(&synth)]), 0);
    let out = dir.path().join("sweep");
    let code = tca(&[
        "sweep", "--tensor", &p(&synth.join("tensor.npy")), "--ranks", "1..5", "--replicates",
        "4", "--algorithm", "nn-hals", "--select", "--seed", "1", "--out-dir", &p(&out),
    ]);
    assert_eq!(code, 0);
    let report = read_json(out.join("sweep.json"));
    assert_eq!(report["selection"]["rank"], 3);
    let (f, meta) = import_factors(out.join("factors")).unwrap();
    assert_eq!(f.rank(), 3);
    assert_eq!(meta.dims, [60, 8, 12]);
}

#[test]
fn compare_self_shuffled_and_mismatched() {
    let dir = tempfile::tempdir().unwrap();
    let tensor = synth_rank3(dir.path());
    let fit_dir = |rank: &str, name: &str| {
        let out = dir.path().join(name);
        let code = tca(&["fit", "--tensor", &tensor, "--rank", rank, "--algorithm", "nn-hals", "--out-dir", &p(&out)]);
        assert_eq!(code, 0);
        out.join("factors")
    };
    let a = fit_dir("3", "a");
    let two = fit_dir("2", "two");

    let out = dir.path().join("cmp_self");
    assert_eq!(tca(&["compare", "--a", &p(&a), "--b", &p(&a), "--out-dir", &p(&out)]), 0);
    let report = read_json(out.join("compare.json"));
    assert!((report["score"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_valid(out.join("compare.json"), "compare");

    let (f, meta) = import_factors(&a).unwrap();
    let shuffled_dir = dir.path().join("shuffled");
    write_factors(&f.permute(&[2, 0, 1]), &meta, &shuffled_dir).unwrap();
    let out = dir.path().join("cmp_shuffled");
    assert_eq!(tca(&["compare", "--a", &p(&a), "--b", &p(&shuffled_dir), "--out-dir", &p(&out)]), 0);
    let report = read_json(out.join("compare.json"));
    assert!((report["score"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(report["permutation"], serde_json::json!([1, 2, 0]));
    let (aligned, _) = import_factors(out.join("aligned_b")).unwrap();
    assert_eq!(aligned, f);
    let table = fs::read_to_string(out.join("compare.csv")).unwrap();
    assert!(table.starts_with("component,matched,similarity,weight_a,weight_b\n0,1,"));

    let out = dir.path().join("cmp_mismatch");
    assert_eq!(tca(&["compare", "--a", &p(&a), "--b", &p(&two), "--out-dir", &p(&out)]), 6);
}

#[test]
fn curate_toy_embedding() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("emb.csv");
    let mut text = String::from("class,x,y\n");
    let centers = [(0, 0.0, 0.0), (1, 10.0, 0.0), (2, 10.0, 10.0), (3, 0.0, 10.0), (4, 5.0, 5.0), (5, 4.0, 6.0), (6, 6.0, 3.0)];
    for (c, x, y) in centers {
        for d in [-0.5, 0.5] {
            text.push_str(&format!("{c},{},{}\n", x + d, y - d));
        }
    }
    fs::write(&csv, text).unwrap();
    let run = |initial: &str, name: &str| {
        let out = dir.path().join(name);
        let code = tca(&[
            "curate", "--embedding", &p(&csv), "--initial", initial, "--tasks", "2", "--seed", "3",
            "--out-dir", &p(&out),
        ]);
        (code, out.join("task_plan.json"))
    };
    let (code, plan_path) = run("4", "one");
    assert_eq!(code, 0);
    assert_valid(&plan_path, "task_plan");
    let plan = read_json(&plan_path);
    let mut hull: Vec<&str> = plan["hull"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    hull.sort();
    assert_eq!(hull, vec!["0", "1", "2", "3"]);
    for c in plan["initial"].as_array().unwrap() {
        assert!(hull.contains(&c.as_str().unwrap()));
    }
    let (_, again) = run("4", "two");
    assert_eq!(fs::read(&plan_path).unwrap(), fs::read(again).unwrap());
    assert_eq!(run("5", "too_many").0, 7);
}

#[test]
fn curate_reads_npy_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let coords = dir.path().join("coords.npy");
    let labels = dir.path().join("labels.npy");
    write_npy(&coords, &[4, 2], &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.2, 0.2]).unwrap();
    write_npy(&labels, &[4], &[0.0, 1.0, 2.0, 3.0]).unwrap();
    let out = dir.path().join("out");
    let args = ["curate", "--embedding", &p(&coords), "--initial", "3", "--tasks", "1", "--out-dir", &p(&out)];
    assert_eq!(tca(&args), 2);
    let mut args = args.to_vec();
    let labels = p(&labels);
    args.extend(["--labels", &labels]);
    assert_eq!(tca(&args), 0);
    let plan = read_json(out.join("task_plan.json"));
    assert_eq!(plan["tasks"], serde_json::json!([["3"]]));
}

#[test]
fn build_tensor_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut snapshots = Vec::new();
    let mut files = Vec::new();
    for k in 0..3u64 {
        let data: Vec<f64> = (0..40).map(|n| (100 * k + n) as f64).collect();
        let name = format!("s{k}.npy");
        write_npy(dir.path().join(&name), &[4, 10], &data).unwrap();
        snapshots.push(SnapshotEntry { task: 1 + k / 2, epoch: 10 * (k + 1), path: name.into() });
        files.push(data);
    }
    let manifest = SnapshotManifest {
        layout: Layout::Activations,
        snapshots,
        input_labels: Some(vec!["a".into(), "b".into(), "c".into(), "d".into()]),
        base_dir: Default::default(),
    };
    let manifest_path = dir.path().join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    assert_valid(&manifest_path, "manifest");

    let out = dir.path().join("out");
    assert_eq!(tca(&["build-tensor", "--manifest", &p(&manifest_path), "--out-dir", &p(&out)]), 0);
    let x = read_tensor(out.join("tensor.npy")).unwrap();
    assert_eq!(x.dims(), [10, 4, 3]);
    for i in 0..10 {
        for j in 0..4 {
            for k in 0..3 {
                assert_eq!(x.get(i, j, k), files[k][j * 10 + i]);
            }
        }
    }
    assert_eq!(x.labels().unwrap()[2][1], "(task 1, epoch 20)");
    assert_valid(out.join("tensor.labels.json"), "axis_labels");

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"layout": "activations", "snapshots": []}"#).unwrap();
    assert_eq!(tca(&["build-tensor", "--manifest", &p(&bad), "--out-dir", &p(&out)]), 3);
}

#[test]
fn mask_exports() {
    let dir = tempfile::tempdir().unwrap();
    let tensor = synth_rank3(dir.path());
    let fit_out = dir.path().join("fit");
    assert_eq!(tca(&["fit", "--tensor", &tensor, "--rank", "3", "--out-dir", &p(&fit_out)]), 0);
    let factors = p(&fit_out.join("factors"));
    let out = dir.path().join("mask");
    assert_eq!(tca(&["mask", "--factors", &factors, "--component", "0", "--top-k", "0", "--out-dir", &p(&out)]), 0);
    let arr = read_npy(out.join("mask.npy")).unwrap();
    assert_eq!(arr.shape, vec![20]);
    assert!(arr.data.iter().all(|&b| b == 0.0));
    assert_valid(out.join("mask.json"), "mask");

    let code = tca(&[
        "mask", "--factors", &factors, "--component", "1", "--top-k", "5", "--layer", "conv2",
        "--output", "c1.npy", "--out-dir", &p(&out),
    ]);
    assert_eq!(code, 0);
    let arr = read_npy(out.join("c1.npy")).unwrap();
    assert_eq!(arr.data.iter().filter(|&&b| b == 1.0).count(), 5);
    assert_eq!(read_json(out.join("c1.json"))["layer"], "conv2");
    assert_eq!(tca(&["mask", "--factors", &factors, "--component", "3", "--top-k", "1", "--out-dir", &p(&out)]), 2);
    assert_eq!(tca(&["mask", "--factors", &factors, "--component", "0", "--top-k", "21", "--out-dir", &p(&out)]), 2);
}

#[test]
fn artifacts_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let tensor = synth_rank3(dir.path());
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let fit = tca(&[
            "fit", "--tensor", &tensor, "--rank", "2", "--replicates", "4", "--seed", "9",
            "--threads", threads, "--out-dir", &p(&out.join("fit")),
        ]);
        let sweep = tca(&[
            "sweep", "--tensor", &tensor, "--ranks", "1..3", "--replicates", "3", "--seed", "9",
            "--threads", threads, "--select", "--out-dir", &p(&out.join("sweep")),
        ]);
        assert_eq!(fit, 0);
        assert!(sweep == 0 || sweep == 5);
        snapshot_dir(&out)
    };
    let first = run("one", "1");
    assert!(!first.is_empty());
    assert_eq!(first, run("two", "1"));
    assert_eq!(first, run("three", "2"));
}

#[test]
fn binary_reads_seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let tensor = synth_rank3(dir.path());
    let out = dir.path().join("env");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_tca"))
        .args(["fit", "--tensor", &tensor, "--rank", "2", "--out-dir", &p(&out)])
        .env("TCA_SEED", "77")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(read_json(out.join("fit_report.json"))["seed"], 77);

    let status = std::process::Command::new(env!("CARGO_BIN_EXE_tca"))
        .args(["fit", "--tensor", &tensor, "--rank", "0"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn schema_checker_rejects_bad_documents() {
    let plan = serde_json::json!({"initial": [], "tasks": [], "hull": ["a", "b", "c"]});
    assert!(validate(&plan, &support::schema("task_plan")).is_err());
    let plan = serde_json::json!({"initial": [], "tasks": [], "hull": ["a", "b", "c"], "seed": -1});
    assert!(validate(&plan, &support::schema("task_plan")).is_err());
    let plan = serde_json::json!({"initial": [], "tasks": [[1]], "hull": ["a", "b", "c"], "seed": 1});
    assert!(validate(&plan, &support::schema("task_plan")).is_err());
    let meta = FactorMeta::bare(&tca_core::solvers::init_random([2, 2, 2], 1, 0, true));
    assert!(validate(&serde_json::to_value(meta).unwrap(), &support::schema("meta")).is_ok());
}
