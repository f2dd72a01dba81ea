use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    load_csv, load_idx, make_blob_splits, subsample_longtail, BlobSpec, Dataset, ImbalanceSpec,
};
use crate::error::{Error, Result};
use crate::losses::RegularizerSpec;
use crate::schedules::{AlphaSchedule, LrSchedule};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Blobs {
        spec: BlobSpec,
        val_per_class: usize,
    },
    Csv {
        train: PathBuf,
        val: PathBuf,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        val_images: PathBuf,
        val_labels: PathBuf,
    },
}

/// Network shape; input width and class count come from the data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_dims: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub dataset: DatasetSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imbalance: Option<ImbalanceSpec>,
    pub model: ModelSection,
    pub regularizer: RegularizerSpec,
    /// Overrides `regularizer.alpha` epoch by epoch when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_schedule: Option<AlphaSchedule>,
    pub lr_schedule: LrSchedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Beta(a, a) concentration for `ls_mixup` pairing.
    #[serde(default = "default_mixup_concentration")]
    pub mixup_concentration: f64,
    /// Drives parameter init, batch order and mixup draws. The dataset has
    /// its own seed.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_mixup_concentration() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; relative dataset and output paths resolve against its
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(dir) = &mut self.output_dir {
            fix(dir);
        }
        match &mut self.dataset {
            DatasetSource::Blobs { .. } => {}
            DatasetSource::Csv { train, val } => {
                fix(train);
                fix(val);
            }
            DatasetSource::Idx {
                train_images,
                train_labels,
                val_images,
                val_labels,
            } => {
                fix(train_images);
                fix(train_labels);
                fix(val_images);
                fix(val_labels);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(
                "version",
                format!(
                    "unsupported version {}, expected {CONFIG_VERSION}",
                    self.version
                ),
            ));
        }
        if let DatasetSource::Blobs {
            spec,
            val_per_class,
        } = &self.dataset
        {
            spec.validate()
                .map_err(|e| prefix_field("dataset.spec", e))?;
            if *val_per_class == 0 {
                return Err(Error::config("dataset.val_per_class", "must be >= 1"));
            }
        }
        if let Some(imb) = &self.imbalance {
            if !(imb.ratio.is_finite() && imb.ratio >= 1.0) {
                return Err(Error::config("imbalance.ratio", "must be >= 1"));
            }
        }
        if self.model.hidden_dims.contains(&0) {
            return Err(Error::config(
                "model.hidden_dims",
                "every width must be >= 1",
            ));
        }
        self.regularizer
            .validate()
            .map_err(|e| Error::config("regularizer", e.to_string()))?;
        if let Some(s) = &self.alpha_schedule {
            s.validate()
                .map_err(|e| Error::config("alpha_schedule", e.to_string()))?;
        }
        self.lr_schedule
            .validate()
            .map_err(|e| Error::config("lr_schedule", e.to_string()))?;
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must be in [0, 1)"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be >= 0"));
        }
        if !(self.mixup_concentration.is_finite() && self.mixup_concentration > 0.0) {
            return Err(Error::config("mixup_concentration", "must be > 0"));
        }
        Ok(())
    }

    /// Smoothing weight for a 0-based epoch index.
    pub fn effective_alpha_schedule(&self) -> AlphaSchedule {
        self.alpha_schedule.unwrap_or(AlphaSchedule::Constant {
            alpha0: self.regularizer.alpha,
        })
    }

    /// Training and validation splits, with long-tail subsampling applied to
    /// the training split when configured.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        let (train, val) = match &self.dataset {
            DatasetSource::Blobs {
                spec,
                val_per_class,
            } => make_blob_splits(spec, *val_per_class)?,
            DatasetSource::Csv { train, val } => (load_csv(train)?, load_csv(val)?),
            DatasetSource::Idx {
                train_images,
                train_labels,
                val_images,
                val_labels,
            } => (
                load_idx(train_images, train_labels)?,
                load_idx(val_images, val_labels)?,
            ),
        };
        if train.dim() != val.dim() {
            return Err(Error::config(
                "dataset",
                format!("train width {} != val width {}", train.dim(), val.dim()),
            ));
        }
        let k = train.num_classes.max(val.num_classes);
        let train = train.with_num_classes(k)?;
        let val = val.with_num_classes(k)?;
        let train = match &self.imbalance {
            Some(imb) => subsample_longtail(&train, imb, self.seed)?,
            None => train,
        };
        Ok((train, val))
    }
}

fn prefix_field(prefix: &str, e: Error) -> Error {
    match e {
        Error::Config { field, message } => Error::config(format!("{prefix}.{field}"), message),
        other => Error::config(prefix, other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"{
        "version": 1,
        "dataset": {
            "kind": "blobs",
            "spec": {"num_classes": 3, "dim": 4, "samples_per_class": 20,
                     "within_std": 1.0, "mean_radius": 3.0, "label_noise": 0.1, "seed": 5},
            "val_per_class": 10
        },
        "model": {"hidden_dims": [8]},
        "regularizer": {"kind": "maxsup", "alpha": 0.1},
        "lr_schedule": {"kind": "cosine", "base_lr": 0.1},
        "epochs": 3,
        "batch_size": 16,
        "momentum": 0.9,
        "weight_decay": 0.0001,
        "seed": 1
    }"#;

    #[test]
    fn sample_parses() {
        let cfg = ExperimentConfig::from_json(SAMPLE).unwrap();
        assert_eq!(cfg.regularizer.beta, 0.1);
        assert_eq!(
            cfg.effective_alpha_schedule(),
            AlphaSchedule::Constant { alpha0: 0.1 }
        );
        let (train, val) = cfg.load_data().unwrap();
        assert_eq!((train.len(), val.len()), (60, 30));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = SAMPLE.replace("\"epochs\": 3", "\"epochs\": 3, \"epoch\": 4");
        match ExperimentConfig::from_json(&text) {
            Err(Error::Config { message, .. }) => assert!(message.contains("epoch"), "{message}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_values_name_the_field() {
        let cases = [
            ("\"version\": 1", "\"version\": 2", "version"),
            ("\"epochs\": 3", "\"epochs\": 0", "epochs"),
            ("\"batch_size\": 16", "\"batch_size\": 0", "batch_size"),
            ("\"momentum\": 0.9", "\"momentum\": 1.0", "momentum"),
            ("\"alpha\": 0.1", "\"alpha\": 1.5", "regularizer"),
            (
                "\"within_std\": 1.0",
                "\"within_std\": 0.0",
                "dataset.spec.within_std",
            ),
        ];
        for (from, to, field_name) in cases {
            let text = SAMPLE.replace(from, to);
            match ExperimentConfig::from_json(&text) {
                Err(Error::Config { field, .. }) => assert_eq!(field, field_name),
                other => panic!("{to}: expected config error, got {other:?}"),
            }
        }
    }
}
