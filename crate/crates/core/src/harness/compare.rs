use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::losses::RegKind;

use super::config::ExperimentConfig;
use super::run::{prepare_output_dir, run_on, write_run, RunSummary};

pub const COMPARE_FILE: &str = "compare.csv";

/// One (kind, seed) cell of a comparison.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub kind: RegKind,
    pub seed: u64,
    pub summary: RunSummary,
}

/// The base config with only the regularizer kind and seed replaced.
pub fn cell_config(base: &ExperimentConfig, kind: RegKind, seed: u64) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.regularizer.kind = kind;
    cfg.seed = seed;
    cfg.output_dir = None;
    cfg
}

pub fn cell_dir(out: &Path, kind: RegKind, seed: u64) -> PathBuf {
    out.join(kind.name()).join(format!("seed_{seed}"))
}

/// Trains every cell, kinds outer and seeds inner. With `out`, each cell is
/// written under `<out>/<kind>/seed_<seed>/`. The dataset is loaded once.
pub fn run_matrix(
    base: &ExperimentConfig,
    kinds: &[RegKind],
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<Vec<CellResult>> {
    if kinds.is_empty() || seeds.is_empty() {
        return Err(Error::Usage(
            "compare needs at least one kind and one seed".into(),
        ));
    }
    base.validate()?;
    let (train, val) = base.load_data()?;
    let mut cells = Vec::with_capacity(kinds.len() * seeds.len());
    for &kind in kinds {
        for &seed in seeds {
            let cfg = cell_config(base, kind, seed);
            // Long-tail subsampling is keyed by the run seed.
            let split = if cfg.imbalance.is_some() {
                Some(cfg.load_data()?)
            } else {
                None
            };
            let (tr, va) = split.as_ref().map_or((&train, &val), |(t, v)| (t, v));
            let output = run_on(&cfg, tr, va)
                .map_err(|e| Error::Usage(format!("cell kind={kind} seed={seed} failed: {e}")))?;
            if let Some(out) = out {
                let dir = cell_dir(out, kind, seed);
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                write_run(&output, &dir)?;
            }
            cells.push(CellResult {
                kind,
                seed,
                summary: output.summary,
            });
        }
    }
    Ok(cells)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

const METRICS: [&str; 5] = ["val_acc", "d_within", "r_squared", "ece", "nll"];

fn metric(s: &RunSummary, name: &str) -> f64 {
    match name {
        "val_acc" => s.val_accuracy,
        "d_within" => s.feature_quality.d_within,
        "r_squared" => s.feature_quality.r_squared,
        "ece" => s.ece,
        "nll" => s.nll,
        _ => unreachable!("unknown metric {name}"),
    }
}

/// One row per kind in `kinds` order: run count, then mean and std of each
/// metric.
pub fn render_compare_csv(kinds: &[RegKind], cells: &[CellResult]) -> String {
    let mut out = String::from("kind,runs");
    for m in METRICS {
        let _ = write!(out, ",{m}_mean,{m}_std");
    }
    out.push('\n');
    for &kind in kinds {
        let runs: Vec<&RunSummary> = cells
            .iter()
            .filter(|c| c.kind == kind)
            .map(|c| &c.summary)
            .collect();
        let _ = write!(out, "{kind},{}", runs.len());
        for m in METRICS {
            let values: Vec<f64> = runs.iter().map(|s| metric(s, m)).collect();
            let (mean, std) = mean_std(&values);
            let _ = write!(out, ",{mean},{std}");
        }
        out.push('\n');
    }
    out
}

/// `compare` subcommand.
pub fn cmd_compare(
    base: &ExperimentConfig,
    kinds: &[RegKind],
    seeds: &[u64],
    out: &Path,
    overwrite: bool,
) -> Result<Vec<CellResult>> {
    prepare_output_dir(out, overwrite)?;
    let cells = run_matrix(base, kinds, seeds, Some(out))?;
    let path = out.join(COMPARE_FILE);
    std::fs::write(&path, render_compare_csv(kinds, &cells)).map_err(|e| Error::io(&path, e))?;
    Ok(cells)
}

/// Parses `a,b,c` into values.
pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Usage(format!("bad {what} `{s}`")))
        })
        .collect()
}
