//! Shared helpers for driving the `ppdl` binary in tests.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ppdl")
}

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("ppdl binary runs")
}

pub fn run_ok(args: &[&str]) {
    let out = run_cli(args);
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn fresh_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ppdl_{tag}_{}", std::process::id()));
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    fs::create_dir_all(&dir).unwrap();
    dir
}

pub fn write_config(dir: &Path, contents: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, contents).unwrap();
    path
}

/// The single experiment directory (config-hash named) under `root/out`.
pub fn experiment_dir(root: &Path) -> PathBuf {
    let out = root.join("out");
    let mut entries: Vec<PathBuf> = fs::read_dir(&out)
        .unwrap_or_else(|_| panic!("no outputs under {}", out.display()))
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(entries.len(), 1, "expected one experiment dir");
    entries.pop().unwrap()
}

pub fn walk_files(dir: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push(path);
            }
        }
    }
    files.sort();
    files
}

/// Relative path -> raw bytes for every file under `dir`.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    walk_files(dir)
        .into_iter()
        .map(|p| {
            let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            (rel, fs::read(&p).unwrap())
        })
        .collect()
}

/// A small synthetic three-institution config that trains in seconds.
pub fn quick_config(algorithms: &str, orders: &str, seeds: &str, privacy: bool) -> String {
    format!(
        r#"{{
  "data": {{
    "synthetic": {{
      "mode": "direct",
      "n_binary": 1,
      "n_continuous": 3,
      "institutions": [
        {{"rows": 200, "angle_deg": 0.0}},
        {{"rows": 180, "angle_deg": 90.0}},
        {{"rows": 160, "angle_deg": 135.0}}
      ],
      "case_ratio": 0.25,
      "data_seed": 11
    }}
  }},
  "algorithms": [{algorithms}],
  "orders": [{orders}],
  "seeds": [{seeds}],
  "hyper": {{
    "hidden_layers": [8],
    "batch_size": 32,
    "max_epochs": 2,
    "eval_interval_updates": 2,
    "patience": 10,
    "n_generated": 8,
    "max_extraction_steps": 30
  }},
  "output_dir": "out",
  "privacy": {privacy}
}}"#
    )
}
