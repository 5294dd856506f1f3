//! End-to-end behavior of the `ppdl` binary: file contracts, resumability,
//! determinism, and the privacy discipline.

mod common;

use std::fs;

use common::*;

#[test]
fn prepare_writes_the_expected_files() {
    let root = fresh_dir("prepare_files");
    let config = write_config(&root, &quick_config("\"ll\"", "\"desc\"", "0", false));
    run_ok(&[
        "prepare",
        "--config",
        config.to_str().unwrap(),
        "--data-root",
        root.to_str().unwrap(),
    ]);
    let exp = experiment_dir(&root);
    let files = walk_files(&exp.join("prepare"));
    // 3 institutions x 3 splits + stats exchange + assignment summary.
    assert_eq!(files.len(), 11, "{files:?}");
    let csvs = files
        .iter()
        .filter(|f| f.extension().is_some_and(|e| e == "csv"))
        .count();
    assert_eq!(csvs, 9);
    assert!(exp.join("prepare/stats_exchange.json").exists());
    assert!(exp.join("prepare/assignment.json").exists());
}

#[test]
fn privacy_flag_rejects_cds_before_any_work() {
    let root = fresh_dir("privacy_cds");
    let config = write_config(&root, &quick_config("\"cds\"", "\"desc\"", "0", true));
    let out = run_cli(&[
        "prepare",
        "--config",
        config.to_str().unwrap(),
        "--data-root",
        root.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error:"), "stderr: {stderr}");
    assert!(stderr.contains("privacy"), "stderr: {stderr}");
    assert!(!root.join("out").exists(), "no work should have been done");
}

#[test]
fn prepare_rerun_is_byte_identical() {
    let root = fresh_dir("prepare_rerun");
    let config = write_config(&root, &quick_config("\"ll\"", "\"desc\"", "0", false));
    let args = [
        "prepare",
        "--config",
        config.to_str().unwrap(),
        "--data-root",
        root.to_str().unwrap(),
    ];
    run_ok(&args);
    let first = snapshot(&experiment_dir(&root));
    run_ok(&args);
    let second = snapshot(&experiment_dir(&root));
    assert_eq!(first, second);
}

#[test]
fn ll_run_produces_one_checkpoint_per_institution() {
    let root = fresh_dir("ll_checkpoints");
    let config = write_config(&root, &quick_config("\"ll\"", "\"desc\"", "0", false));
    let args: Vec<String> = vec![
        "--config".into(),
        config.to_string_lossy().into_owned(),
        "--data-root".into(),
        root.to_string_lossy().into_owned(),
    ];
    for cmd in ["prepare", "train"] {
        let mut full = vec![cmd.to_string()];
        full.extend(args.clone());
        run_ok(&full.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let run_dir = experiment_dir(&root).join("runs/ll_seed0");
    let checkpoints = walk_files(&run_dir)
        .into_iter()
        .filter(|f| {
            f.file_name()
                .unwrap()
                .to_string_lossy()
                .starts_with("visit_")
        })
        .count();
    assert_eq!(checkpoints, 3);
}

#[test]
fn run_matrix_expands_to_algorithms_times_orders_times_seeds() {
    let root = fresh_dir("run_matrix");
    let config = write_config(
        &root,
        &quick_config(
            "\"rl\", \"tl\"",
            "\"asc\", \"desc\"",
            "0, 1, 2, 3, 4",
            false,
        ),
    );
    let args: Vec<String> = vec![
        "--config".into(),
        config.to_string_lossy().into_owned(),
        "--data-root".into(),
        root.to_string_lossy().into_owned(),
    ];
    for cmd in ["prepare", "train"] {
        let mut full = vec![cmd.to_string()];
        full.extend(args.clone());
        run_ok(&full.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let runs_dir = experiment_dir(&root).join("runs");
    let run_dirs: Vec<_> = fs::read_dir(&runs_dir).unwrap().collect();
    // 2 algorithms x 2 orders x 5 seeds.
    assert_eq!(run_dirs.len(), 20);
}

#[test]
fn interrupted_run_resumes_without_retraining_completed_visits() {
    let root = fresh_dir("resume");
    let config = write_config(&root, &quick_config("\"tl\"", "\"desc\"", "3", false));
    let args: Vec<String> = vec![
        "--config".into(),
        config.to_string_lossy().into_owned(),
        "--data-root".into(),
        root.to_string_lossy().into_owned(),
    ];
    let run = |cmd: &str| {
        let mut full = vec![cmd.to_string()];
        full.extend(args.clone());
        run_ok(&full.iter().map(String::as_str).collect::<Vec<_>>());
    };
    run("prepare");
    run("train");
    let run_dir = experiment_dir(&root).join("runs/tl_desc_seed3");
    let full_run = snapshot(&run_dir);

    // Simulate an interruption after the first visit: truncate the manifest
    // and drop the later checkpoints.
    let manifest_path = run_dir.join("manifest.json");
    let mut manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
    let visits = manifest["visits"].as_array().unwrap().clone();
    assert_eq!(visits.len(), 3);
    manifest["visits"] = serde_json::Value::Array(visits[..1].to_vec());
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .unwrap();
    for visit in &visits[1..] {
        fs::remove_file(run_dir.join(visit["checkpoint"].as_str().unwrap())).unwrap();
    }
    let first_checkpoint = run_dir.join(visits[0]["checkpoint"].as_str().unwrap());
    let first_bytes = fs::read(&first_checkpoint).unwrap();

    run("train");
    // Completed visit untouched, and the resumed run reproduces the full
    // run's artifacts byte for byte.
    assert_eq!(fs::read(&first_checkpoint).unwrap(), first_bytes);
    assert_eq!(snapshot(&run_dir), full_run);
}

#[test]
fn evaluate_grid_covers_visits_by_institutions() {
    let root = fresh_dir("eval_grid");
    let config = write_config(&root, &quick_config("\"tl\"", "\"desc\"", "0, 1", false));
    let args: Vec<String> = vec![
        "--config".into(),
        config.to_string_lossy().into_owned(),
        "--data-root".into(),
        root.to_string_lossy().into_owned(),
    ];
    for cmd in ["prepare", "train", "evaluate", "report"] {
        let mut full = vec![cmd.to_string()];
        full.extend(args.clone());
        run_ok(&full.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let exp = experiment_dir(&root);

    // Local-score grid: rows = visits, columns = institutions in
    // "local 1..n" order.
    let grid = fs::read_to_string(exp.join("report/local_mcc_grid_tl_desc.csv")).unwrap();
    let lines: Vec<&str> = grid.lines().collect();
    assert_eq!(lines[0], "model_visit,local 1,local 2,local 3");
    assert_eq!(lines.len(), 1 + 3);
    assert!(lines[1].starts_with("0:local 1"));
    assert!(lines[3].starts_with("2:local 3"));

    // The flat table holds (3 institutions + global) per visit per seed.
    let metrics = fs::read_to_string(exp.join("eval/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 2 * 3 * 4);
}

#[test]
fn summary_matches_hand_recomputation_from_the_flat_table() {
    let root = fresh_dir("summary_recompute");
    let config = write_config(&root, &quick_config("\"ll\"", "\"desc\"", "0, 1, 2", false));
    let args: Vec<String> = vec![
        "--config".into(),
        config.to_string_lossy().into_owned(),
        "--data-root".into(),
        root.to_string_lossy().into_owned(),
    ];
    for cmd in ["prepare", "train", "evaluate"] {
        let mut full = vec![cmd.to_string()];
        full.extend(args.clone());
        run_ok(&full.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let exp = experiment_dir(&root);
    let metrics = fs::read_to_string(exp.join("eval/metrics.csv")).unwrap();
    let summary = fs::read_to_string(exp.join("eval/summary.csv")).unwrap();

    // Recompute one summary row by hand: ll visit 0 on "local 2".
    let samples: Vec<f64> = metrics
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|f| f[0] == "ll" && f[3] == "0" && f[5] == "local 2")
        .map(|f| f[6].parse().unwrap())
        .collect();
    assert_eq!(samples.len(), 3);
    let mean = samples.iter().sum::<f64>() / 3.0;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 2.0;
    let se = (var / 3.0).sqrt();

    let row = summary
        .lines()
        .find(|l| l.starts_with("ll,-,0,local 1,local 2"))
        .expect("summary row exists");
    let fields: Vec<&str> = row.split(',').collect();
    let got_mean: f64 = fields[5].parse().unwrap();
    let got_se: f64 = fields[6].parse().unwrap();
    assert!((got_mean - mean).abs() < 1e-12);
    assert!((got_se - se).abs() < 1e-12);
    assert_eq!(fields[9], "3");
}

#[test]
fn report_trajectories_join_back_to_the_flat_table() {
    let root = fresh_dir("report_join");
    let config = write_config(
        &root,
        &quick_config("\"rl\", \"tl\"", "\"asc\", \"desc\"", "0", false),
    );
    let args: Vec<String> = vec![
        "--config".into(),
        config.to_string_lossy().into_owned(),
        "--data-root".into(),
        root.to_string_lossy().into_owned(),
    ];
    for cmd in ["prepare", "train", "evaluate", "report"] {
        let mut full = vec![cmd.to_string()];
        full.extend(args.clone());
        run_ok(&full.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let exp = experiment_dir(&root);
    let trajectories =
        fs::read_to_string(exp.join("report/global_auroc_trajectories.csv")).unwrap();
    let metrics = fs::read_to_string(exp.join("eval/metrics.csv")).unwrap();

    // 2 algorithms x 2 orders = 4 series.
    let mut series: Vec<(String, String)> = trajectories
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_owned(), f[1].to_owned())
        })
        .collect();
    series.sort();
    series.dedup();
    assert_eq!(series.len(), 4);

    // With one seed, every trajectory mean equals the single flat value.
    for line in trajectories.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let flat_value: f64 = metrics
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .find(|m| m[0] == f[0] && m[1] == f[1] && m[3] == f[2] && m[5] == "global")
            .map(|m| m[6].parse().unwrap())
            .expect("flat row exists");
        let traj_value: f64 = f[4].parse().unwrap();
        assert_eq!(traj_value, flat_value);
    }
}

#[test]
fn csv_mode_runs_end_to_end() {
    let root = fresh_dir("csv_mode");
    // Three hand-written institutions over one binary and one continuous
    // column, sized so the descending-size naming is exercised.
    let make_rows = |n: usize, offset: f64| -> String {
        let mut out = String::from("b0,c0,label\n");
        for i in 0..n {
            let label = u8::from(i % 4 == 0);
            let value = offset + i as f64 * 0.25 + if label == 1 { 3.0 } else { -3.0 };
            out.push_str(&format!("{},{},{}\n", i % 2, value, label));
        }
        out
    };
    fs::write(root.join("alpha.csv"), make_rows(60, 0.0)).unwrap();
    fs::write(root.join("beta.csv"), make_rows(80, 1.0)).unwrap();
    fs::write(root.join("gamma.csv"), make_rows(40, -1.0)).unwrap();
    let config = write_config(
        &root,
        r#"{
  "data": {
    "csv": {
      "columns": [
        {"name": "b0", "kind": "binary"},
        {"name": "c0", "kind": "continuous"}
      ],
      "institutions": [
        {"name": "alpha", "path": "alpha.csv"},
        {"name": "beta", "path": "beta.csv"},
        {"name": "gamma", "path": "gamma.csv"}
      ]
    }
  },
  "algorithms": ["tl"],
  "orders": ["desc"],
  "seeds": [0],
  "hyper": {
    "hidden_layers": [4],
    "batch_size": 16,
    "max_epochs": 2,
    "eval_interval_updates": 1,
    "patience": 10
  },
  "output_dir": "out"
}"#,
    );
    let args: Vec<String> = vec![
        "--config".into(),
        config.to_string_lossy().into_owned(),
        "--data-root".into(),
        root.to_string_lossy().into_owned(),
    ];
    for cmd in ["prepare", "train", "evaluate", "report"] {
        let mut full = vec![cmd.to_string()];
        full.extend(args.clone());
        run_ok(&full.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let exp = experiment_dir(&root);
    // Visits run in descending data size: beta, alpha, gamma.
    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(exp.join("runs/tl_desc_seed0/manifest.json")).unwrap(),
    )
    .unwrap();
    let visited: Vec<&str> = manifest["visits"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["institution"].as_str().unwrap())
        .collect();
    assert_eq!(visited, vec!["beta", "alpha", "gamma"]);
    let grid = fs::read_to_string(exp.join("report/local_mcc_grid_tl_desc.csv")).unwrap();
    assert!(grid.starts_with("model_visit,beta,alpha,gamma"));
}

#[test]
fn csv_mode_rejects_colliding_institution_names() {
    let root = fresh_dir("csv_names");
    let config = write_config(
        &root,
        r#"{
  "data": {
    "csv": {
      "columns": [{"name": "c0", "kind": "continuous"}],
      "institutions": [
        {"name": "site a", "path": "a.csv"},
        {"name": "site_a", "path": "b.csv"}
      ]
    }
  },
  "algorithms": ["ll"],
  "seeds": [0],
  "output_dir": "out"
}"#,
    );
    let out = run_cli(&[
        "prepare",
        "--config",
        config.to_str().unwrap(),
        "--data-root",
        root.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("collide"));
}

#[test]
fn train_without_prepare_is_an_actionable_error() {
    let root = fresh_dir("no_prepare");
    let config = write_config(&root, &quick_config("\"ll\"", "\"desc\"", "0", false));
    let out = run_cli(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data-root",
        root.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("prepare"), "stderr: {stderr}");
}

#[test]
fn seed_and_algo_overrides_narrow_the_run_set() {
    let root = fresh_dir("overrides");
    let config = write_config(
        &root,
        &quick_config("\"ll\", \"tl\"", "\"desc\"", "0, 1", false),
    );
    let base: Vec<String> = vec![
        "--config".into(),
        config.to_string_lossy().into_owned(),
        "--data-root".into(),
        root.to_string_lossy().into_owned(),
    ];
    let run = |cmd: &str, extra: &[&str]| {
        let mut full = vec![cmd.to_string()];
        full.extend(base.clone());
        full.extend(extra.iter().map(|s| s.to_string()));
        run_ok(&full.iter().map(String::as_str).collect::<Vec<_>>());
    };
    // Overrides change the effective config, hence the experiment hash:
    // prepare and train must agree on the overrides.
    run("prepare", &["--algo", "ll", "--seed", "1"]);
    run("train", &["--algo", "ll", "--seed", "1"]);
    let exp = experiment_dir(&root);
    let runs: Vec<String> = fs::read_dir(exp.join("runs"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(runs, vec!["ll_seed1"]);
}

#[test]
fn unknown_flags_and_commands_fail_cleanly() {
    let out = run_cli(&["frobnicate", "--config", "x.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = run_cli(&["train", "--config", "x.json", "--wat"]);
    assert!(!out.status.success());
    let out = run_cli(&["--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("USAGE"));
}
