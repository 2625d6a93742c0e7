//! Helpers for driving the `hiboost` binary from tests.

#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

pub fn hiboost() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hiboost"))
}

pub fn run(args: &[&str]) -> Output {
    hiboost().args(args).output().expect("binary runs")
}

pub fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// Every column of a CSV except `cumulative_time_ms`.
pub fn without_time_column(csv: &str) -> Vec<Vec<String>> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let time = header.iter().position(|h| *h == "cumulative_time_ms");
    csv.lines()
        .map(|line| {
            line.split(',')
                .enumerate()
                .filter(|(i, _)| Some(*i) != time)
                .map(|(_, cell)| cell.to_string())
                .collect()
        })
        .collect()
}

/// Two `train` runs with the same flags and seed: identical model files and
/// identical loss columns in the convergence log.
pub fn check_train_determinism(dir: &Path) -> Result<String, String> {
    let mut models = Vec::new();
    let mut logs = Vec::new();
    for run_index in 0..2 {
        let model = dir.join(format!("model{run_index}.json"));
        let log = dir.join(format!("log{run_index}.csv"));
        let output = run(&[
            "train",
            "--synthetic",
            "3000,8",
            "--seed",
            "7",
            "--order",
            "3",
            "--rounds",
            "30",
            "--model",
            model.to_str().unwrap(),
            "--log",
            log.to_str().unwrap(),
        ]);
        if !output.status.success() {
            return Err(format!("train failed: {}", stderr(&output)));
        }
        models.push(fs::read(&model).map_err(|e| e.to_string())?);
        logs.push(fs::read_to_string(&log).map_err(|e| e.to_string())?);
    }
    if models[0] != models[1] {
        return Err("model files differ".into());
    }
    let (a, b) = (without_time_column(&logs[0]), without_time_column(&logs[1]));
    if a != b {
        return Err("loss columns differ".into());
    }
    if a.len() != 31 {
        return Err(format!("expected 30 logged rounds, got {}", a.len() - 1));
    }
    Ok(format!(
        "model files identical ({} bytes), {} logged rounds identical",
        models[0].len(),
        a.len() - 1
    ))
}
