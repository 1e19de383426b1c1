//! Run configuration files and run manifests.
//!
//! A config file is a flat list of `key = value` lines; `#` starts a
//! comment. Keys mirror the [`RunConfig`] field names.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DatasetPaths, TripleFormat};
use crate::error::{Error, Result};
use crate::model::{ModelKind, ModelSpec, TransENorm};
use crate::train::TrainConfig;

pub const BATCH_SIZE_GRID: [usize; 3] = [10_000, 20_000, 50_000];
pub const WEIGHT_DECAY_GRID: [f64; 3] = [0.001, 0.01, 0.1];
pub const HIDDEN_MULTIPLIER_GRID: [usize; 2] = [10, 20];
pub const DIM_GRID: [usize; 2] = [100, 200];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: String,
    pub train: PathBuf,
    pub valid: Option<PathBuf>,
    pub test: PathBuf,
    pub format: TripleFormat,
    pub model: ModelKind,
    pub dim: usize,
    pub hidden_multiplier: usize,
    pub transe_norm: TransENorm,
    pub train_config: TrainConfig,
    pub out_dir: PathBuf,
    /// Lifts the hyperparameter grid restriction.
    pub allow_any: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: "dataset".into(),
            train: PathBuf::new(),
            valid: None,
            test: PathBuf::new(),
            format: TripleFormat::Plain,
            model: ModelKind::ErMlp,
            dim: 100,
            hidden_multiplier: 10,
            transe_norm: TransENorm::L2,
            train_config: TrainConfig::default(),
            out_dir: PathBuf::new(),
            allow_any: false,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid value `{value}` for `{key}`"))),
    }
}

impl RunConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let tc = &mut self.train_config;
        match key {
            "dataset" => self.dataset = value.to_owned(),
            "train" => self.train = PathBuf::from(value),
            "valid" => self.valid = (!value.is_empty()).then(|| PathBuf::from(value)),
            "test" => self.test = PathBuf::from(value),
            "format" => self.format = value.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "model" => self.model = value.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "dim" => self.dim = parse_value(key, value)?,
            "hidden_multiplier" => self.hidden_multiplier = parse_value(key, value)?,
            "transe_norm" => self.transe_norm = value.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "batch_size" => tc.batch_size = parse_value(key, value)?,
            "learning_rate" => tc.learning_rate = parse_value(key, value)?,
            "weight_decay" => tc.weight_decay = parse_value(key, value)?,
            "dropout" => tc.dropout_p = parse_value(key, value)?,
            "negatives" => tc.negatives_per_positive = parse_value(key, value)?,
            "epochs" => tc.epochs = parse_value(key, value)?,
            "seed" => tc.seed = parse_value(key, value)?,
            "eval_every" => tc.eval_every = parse_value(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "allow_any" => self.allow_any = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.train);
        resolve(&mut cfg.test);
        resolve(&mut cfg.out_dir);
        if let Some(v) = cfg.valid.as_mut() {
            resolve(v);
        }
        Ok(cfg)
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Canonical `key = value` text; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let tc = &self.train_config;
        let mut kv: Vec<(&str, String)> = vec![
            ("dataset", self.dataset.clone()),
            ("train", self.train.display().to_string()),
            ("valid", self.valid.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            ("test", self.test.display().to_string()),
            ("format", self.format.to_string()),
            ("model", self.model.to_string()),
            ("dim", self.dim.to_string()),
            ("hidden_multiplier", self.hidden_multiplier.to_string()),
            ("transe_norm", self.transe_norm.to_string()),
            ("batch_size", tc.batch_size.to_string()),
            ("learning_rate", tc.learning_rate.to_string()),
            ("weight_decay", tc.weight_decay.to_string()),
            ("dropout", tc.dropout_p.to_string()),
            ("negatives", tc.negatives_per_positive.to_string()),
            ("epochs", tc.epochs.to_string()),
            ("seed", tc.seed.to_string()),
            ("eval_every", tc.eval_every.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("allow_any", self.allow_any.to_string()),
        ];
        kv.iter_mut()
            .map(|(k, v)| format!("{k} = {}\n", std::mem::take(v)))
            .collect()
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.model,
            dim: self.dim,
            hidden_multiplier: self.hidden_multiplier,
            transe_norm: self.transe_norm,
        }
    }

    pub fn dataset_paths(&self) -> DatasetPaths {
        DatasetPaths {
            train: self.train.clone(),
            valid: self.valid.clone(),
            test: self.test.clone(),
            format: self.format,
        }
    }

    /// Checks the grids (unless `allow_any`), value ranges and that every
    /// input file exists.
    pub fn validate(&self) -> Result<()> {
        self.model_spec().validate()?;
        self.train_config.validate()?;
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::Config("out_dir is not set".into()));
        }
        if !self.allow_any {
            let tc = &self.train_config;
            if !BATCH_SIZE_GRID.contains(&tc.batch_size) {
                return Err(Error::Config(format!(
                    "batch_size {} not in {BATCH_SIZE_GRID:?} (set allow_any = true to override)",
                    tc.batch_size
                )));
            }
            if !WEIGHT_DECAY_GRID.contains(&tc.weight_decay) {
                return Err(Error::Config(format!(
                    "weight_decay {} not in {WEIGHT_DECAY_GRID:?} (set allow_any = true to override)",
                    tc.weight_decay
                )));
            }
            if !DIM_GRID.contains(&self.dim) {
                return Err(Error::Config(format!(
                    "dim {} not in {DIM_GRID:?} (set allow_any = true to override)",
                    self.dim
                )));
            }
            if self.model.is_mlp() && !HIDDEN_MULTIPLIER_GRID.contains(&self.hidden_multiplier) {
                return Err(Error::Config(format!(
                    "hidden_multiplier {} not in {HIDDEN_MULTIPLIER_GRID:?} (set allow_any = true to override)",
                    self.hidden_multiplier
                )));
            }
        }
        for p in [Some(&self.train), self.valid.as_ref(), Some(&self.test)].into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::Config(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

/// Record of one training run, written before training and finalized after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_snapshot: String,
    pub seed: u64,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub artifacts: BTreeMap<String, PathBuf>,
    /// SHA-256 of each artifact, hex encoded.
    pub checksums: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn start(config: &RunConfig) -> Self {
        RunManifest {
            config_snapshot: config.to_text(),
            seed: config.train_config.seed,
            code_version: env!("CARGO_PKG_VERSION").to_owned(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: None,
            artifacts: BTreeMap::new(),
            checksums: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> Result<RunConfig> {
        RunConfig::parse(&self.config_snapshot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let text = "# toy run\nmodel = ER-MLP-2d\ndim = 16\ntrain = a/train.txt\ntest = a/test.txt\n\
                    learning_rate = 0.0005\nweight_decay = 0.01 # grid value\nseed = 42\nout_dir = runs/x\nallow_any = true\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.model, ModelKind::ErMlp2d);
        assert_eq!(cfg.dim, 16);
        assert_eq!(cfg.train_config.learning_rate, 0.0005);
        assert_eq!(cfg.train_config.seed, 42);
        assert!(cfg.allow_any);
        let again = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_key_and_bad_value() {
        assert!(RunConfig::parse("colour = red").is_err());
        let err = RunConfig::parse("\n\ndim = lots").unwrap_err();
        assert!(err.to_string().contains("line 3"));
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::parse("epochs = 5").unwrap();
        cfg.apply_overrides(&["epochs=7", "model = hole"]).unwrap();
        assert_eq!(cfg.train_config.epochs, 7);
        assert_eq!(cfg.model, ModelKind::HolE);
        assert!(cfg.apply_overrides(&["epochs"]).is_err());
    }

    #[test]
    fn grid_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("t.txt");
        std::fs::write(&f, "a\tr\tb\n").unwrap();
        let mut cfg = RunConfig {
            train: f.clone(),
            test: f.clone(),
            out_dir: dir.path().join("out"),
            ..Default::default()
        };
        cfg.validate().unwrap();
        cfg.train_config.batch_size = 128;
        assert!(cfg.validate().unwrap_err().to_string().contains("batch_size"));
        cfg.allow_any = true;
        cfg.validate().unwrap();
        cfg.test = dir.path().join("missing.txt");
        assert!(cfg.validate().unwrap_err().to_string().contains("missing.txt"));
    }

    #[test]
    fn manifest_snapshot_reparses() {
        let mut cfg = RunConfig::default();
        cfg.set("valid", "v.txt").unwrap();
        cfg.train_config.learning_rate = 0.1 + 0.2;
        let m = RunManifest::start(&cfg);
        assert_eq!(m.config().unwrap(), cfg);
    }
}
