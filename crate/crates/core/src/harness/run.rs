//! Single training runs and their on-disk layout:
//!
//! ```text
//! <out>/run.jsonl            one EpochRow per line
//! <out>/summary.json         RunSummary
//! <out>/features_train.csv   label,f0,f1,... penultimate activations
//! <out>/features_val.csv
//! ```

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::data::{write_csv, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{
    accuracy, calibration, feature_quality, group_accuracy, softmax_rows, FeatureMatrix,
    FeatureQuality, GroupAccuracy, GroupThresholds,
};
use crate::model::{
    epoch_batches, init_params, predict, train_epoch, EpochSettings, MlpConfig, OptimState, Params,
};
use crate::schedules::{alpha_at, lr_at};

pub const RUN_LOG: &str = "run.jsonl";
pub const SUMMARY: &str = "summary.json";
pub const FEATURES_TRAIN: &str = "features_train.csv";
pub const FEATURES_VAL: &str = "features_val.csv";

/// The only nondeterministic key in `summary.json`.
pub const WALL_TIME_KEY: &str = "wall_time_secs";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub alpha: f64,
    pub lr: f64,
    /// Mean label-smoothing regularization component (zero unless `ls`).
    pub reg_term: f64,
    /// Mean label-smoothing error-amplification component (zero unless `ls`).
    pub err_term: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub kind: String,
    pub epochs: usize,
    pub final_train_loss: f64,
    pub final_train_acc: f64,
    pub val_accuracy: f64,
    pub ece: f64,
    pub nll: f64,
    pub feature_quality: FeatureQuality,
    pub group_accuracy: GroupAccuracy,
    pub config: ExperimentConfig,
    pub wall_time_secs: f64,
}

/// Keys every `summary.json` carries.
pub const SUMMARY_KEYS: [&str; 12] = [
    "seed",
    "kind",
    "epochs",
    "final_train_loss",
    "final_train_acc",
    "val_accuracy",
    "ece",
    "nll",
    "feature_quality",
    "group_accuracy",
    "config",
    WALL_TIME_KEY,
];

/// Checks a parsed `summary.json` for every required key and finite metrics.
pub fn validate_summary(value: &serde_json::Value) -> Result<()> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::config("summary", "not a JSON object"))?;
    for key in SUMMARY_KEYS {
        if !obj.contains_key(key) {
            return Err(Error::config(key, "missing from summary"));
        }
    }
    let finite = |key: &str, v: &serde_json::Value| {
        v.as_f64()
            .filter(|x| x.is_finite())
            .map(|_| ())
            .ok_or_else(|| Error::config(key, "not a finite number"))
    };
    for key in [
        "final_train_loss",
        "final_train_acc",
        "val_accuracy",
        "ece",
        "nll",
        WALL_TIME_KEY,
    ] {
        finite(key, &obj[key])?;
    }
    for key in ["d_within", "d_total", "r_squared"] {
        let v = obj["feature_quality"]
            .get(key)
            .ok_or_else(|| Error::config(format!("feature_quality.{key}"), "missing"))?;
        finite(key, v)?;
    }
    Ok(())
}

/// A finished run held in memory.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub rows: Vec<EpochRow>,
    pub summary: RunSummary,
    pub params: Params,
    pub train_features: FeatureMatrix,
    pub val_features: FeatureMatrix,
}

/// Trains on already-loaded splits.
pub fn run_on(cfg: &ExperimentConfig, train: &Dataset, val: &Dataset) -> Result<RunOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let k = train.num_classes.max(val.num_classes);
    let mlp = MlpConfig {
        input_dim: train.dim(),
        hidden_dims: cfg.model.hidden_dims.clone(),
        num_classes: k,
        seed: cfg.seed,
    };
    let mut params = init_params(&mlp)?;
    let mut opt = OptimState::new(&params, cfg.momentum, cfg.weight_decay)?;
    let alpha_schedule = cfg.effective_alpha_schedule();

    let mut rows = Vec::with_capacity(cfg.epochs);
    for t in 0..cfg.epochs {
        let alpha = alpha_at(&alpha_schedule, t, cfg.epochs)?;
        let lr = lr_at(&cfg.lr_schedule, t, cfg.epochs)?;
        let mut spec = cfg.regularizer;
        spec.alpha = alpha;
        let settings = EpochSettings {
            spec,
            lr,
            mixup_concentration: cfg.mixup_concentration,
            mixup_seed: cfg.seed ^ ((t as u64) << 32),
        };
        let batches = epoch_batches(train.len(), cfg.batch_size, cfg.seed, t);
        let stats = train_epoch(&mut params, &mut opt, train, &batches, &settings)?;
        let (val_logits, _) = predict(&params, val.inputs.view())?;
        rows.push(EpochRow {
            epoch: t + 1,
            train_loss: stats.mean_loss,
            train_acc: stats.accuracy,
            val_acc: accuracy(val_logits.view(), &val.labels),
            alpha,
            lr,
            reg_term: stats.mean_reg_term,
            err_term: stats.mean_err_term,
        });
        if !stats.mean_loss.is_finite() {
            return Err(Error::Degenerate(format!(
                "training diverged at epoch {}",
                t + 1
            )));
        }
    }

    let (_, train_feats) = predict(&params, train.inputs.view())?;
    let (val_logits, val_feats) = predict(&params, val.inputs.view())?;
    let probs = softmax_rows(val_logits.view());
    let calib = calibration(probs.view(), &val.labels)?;
    let val_features = FeatureMatrix::new(val_feats, val.labels.clone())?;
    let quality = feature_quality(&val_features)?;
    let groups = group_accuracy(
        val_logits.view(),
        &val.labels,
        &train.class_counts,
        GroupThresholds::default(),
    )?;
    let last = rows.last().expect("epochs >= 1");

    let summary = RunSummary {
        seed: cfg.seed,
        kind: cfg.regularizer.kind.to_string(),
        epochs: cfg.epochs,
        final_train_loss: last.train_loss,
        final_train_acc: last.train_acc,
        val_accuracy: groups.overall,
        ece: calib.ece,
        nll: calib.nll,
        feature_quality: quality,
        group_accuracy: groups,
        config: cfg.clone(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        rows,
        summary,
        params,
        train_features: FeatureMatrix::new(train_feats, train.labels.clone())?,
        val_features,
    })
}

/// Loads the configured data and trains.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (train, val) = cfg.load_data()?;
    run_on(cfg, &train, &val)
}

/// Creates `dir`, refusing a non-empty existing directory unless `overwrite`.
pub fn prepare_output_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        let occupied = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .next()
            .is_some();
        if occupied && !overwrite {
            return Err(Error::Usage(format!(
                "output directory {} is not empty (pass --overwrite to replace)",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// One JSON object per epoch, newline-terminated.
pub fn render_run_log(rows: &[EpochRow]) -> Result<String> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents).map_err(|e| Error::io(path, e))
}

pub fn write_run(output: &RunOutput, dir: &Path) -> Result<()> {
    write_file(&dir.join(RUN_LOG), render_run_log(&output.rows)?.as_bytes())?;
    let mut summary = serde_json::to_string_pretty(&output.summary)?;
    summary.push('\n');
    write_file(&dir.join(SUMMARY), summary.as_bytes())?;
    write_csv(
        dir.join(FEATURES_TRAIN),
        &output.train_features.rows,
        &output.train_features.labels,
    )?;
    write_csv(
        dir.join(FEATURES_VAL),
        &output.val_features.rows,
        &output.val_features.labels,
    )?;
    Ok(())
}

/// `train` subcommand: run and persist.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path, overwrite: bool) -> Result<RunOutput> {
    prepare_output_dir(out, overwrite)?;
    let output = run(cfg)?;
    write_run(&output, out)?;
    Ok(output)
}

/// A summary document with the wall-time key removed, for byte comparisons.
pub fn strip_wall_time(summary_json: &str) -> Result<String> {
    let mut value: serde_json::Value = serde_json::from_str(summary_json)?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove(WALL_TIME_KEY);
    }
    Ok(serde_json::to_string_pretty(&value)?)
}
