//! The `kgbench` command line.
//!
//! Exit codes: 0 success, 1 runtime or numeric failure, 2 usage or
//! validation failure.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::bias;
use crate::config::{RunConfig, RunManifest};
use crate::data::{Dataset, DatasetPaths, TripleFormat};
use crate::error::Error;
use crate::eval::{evaluate, Protocol};
use crate::model::checkpoint::{encode, read_checkpoint, CheckpointHeader};
use crate::model::{param_count, ModelKind, ModelSpec};
use crate::train::train_with;

pub const THREADS_ENV: &str = "KGBENCH_THREADS";

#[derive(Debug, Parser)]
#[command(name = "kgbench", version, about = "Knowledge-graph embedding training, evaluation and bias auditing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect inverse relation pairs and count trivial test triples.
    AuditBias {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long, default_value_t = bias::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value = "plain")]
        format: TripleFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// `key=value` overrides applied after the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Accept hyperparameters outside the standard grids.
        #[arg(long)]
        allow_any: bool,
    },
    /// Evaluate a checkpoint on a dataset's test split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        test: PathBuf,
        /// Raw instead of filtered ranking.
        #[arg(long)]
        raw: bool,
        #[arg(long, default_value = "plain")]
        format: TripleFormat,
        /// Report path; defaults to `<checkpoint>.report.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dataset label in the report.
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Print the parameter count of a model on a dataset.
    ParamCount {
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 10)]
        hidden_multiplier: usize,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, default_value = "plain")]
        format: TripleFormat,
    },
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. }
            | Error::ParseFile { .. }
            | Error::Encoding(_)
            | Error::Argument(_)
            | Error::Config(_)
            | Error::Checkpoint(_) => 2,
            Error::Io { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 1,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::runtime(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn require_file(path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("input file {} does not exist", path.display())))
    }
}

fn load_dataset(train: &Path, valid: Option<&Path>, test: Option<&Path>, format: TripleFormat) -> CliResult<Dataset> {
    for p in [Some(train), valid, test].into_iter().flatten() {
        require_file(p)?;
    }
    let paths = DatasetPaths {
        train: train.to_path_buf(),
        valid: valid.map(Path::to_path_buf),
        test: test.map(Path::to_path_buf).unwrap_or_else(|| train.to_path_buf()),
        format,
    };
    let mut ds = Dataset::load(&paths)?;
    if test.is_none() {
        ds = Dataset {
            store: crate::data::TripleStore::from_splits(
                ds.store.train.clone(),
                ds.store.valid.clone(),
                Vec::new(),
                ds.store.num_entities(),
                ds.store.num_relations(),
            )?,
            vocab: ds.vocab,
        };
    }
    Ok(ds)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Exclusive marker file in an output directory, removed on drop.
struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> CliResult<Self> {
        let path = dir.join(".kgbench.lock");
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|_| CliError::usage(format!("{} is locked by another run ({})", dir.display(), path.display())))?;
        Ok(DirLock(path))
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn audit_bias(
    train: &Path,
    valid: Option<&Path>,
    test: &Path,
    threshold: f64,
    format: TripleFormat,
    out: &Path,
    stdout: &mut dyn Write,
) -> CliResult {
    let ds = load_dataset(train, valid, Some(test), format)?;
    let report = bias::audit(&ds.store.train, &ds.store.test, threshold)?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let summary = report.summary(Some(&ds.vocab));
    write_file(&out.join("bias_report.json"), report.to_json(Some(&ds.vocab)).as_bytes())?;
    write_file(&out.join("bias_summary.txt"), summary.as_bytes())?;
    stdout.write_all(summary.as_bytes()).map_err(|e| CliError::runtime(e.to_string()))?;
    Ok(())
}

fn train_cmd(config: &Path, overrides: &[String], allow_any: bool, stdout: &mut dyn Write) -> CliResult {
    require_file(config)?;
    let mut cfg = RunConfig::load(config)?;
    cfg.apply_overrides(overrides)?;
    cfg.allow_any |= allow_any;
    cfg.validate()?;
    let ds = Dataset::load(&cfg.dataset_paths())?;
    let spec = cfg.model_spec();
    let out = cfg.out_dir.clone();
    fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    let _lock = DirLock::acquire(&out)?;

    let last = out.join("checkpoint_last.kgb");
    let best = out.join("checkpoint_best.kgb");
    let history = out.join("history.jsonl");
    let manifest_path = out.join("manifest.json");
    let mut manifest = RunManifest::start(&cfg);
    for (k, p) in [("checkpoint_last", &last), ("checkpoint_best", &best), ("history", &history)] {
        manifest.artifacts.insert(k.to_owned(), p.clone());
    }
    let write_manifest = |m: &RunManifest| -> CliResult {
        let json = serde_json::to_string_pretty(m).map_err(|e| CliError::runtime(e.to_string()))?;
        write_file(&manifest_path, json.as_bytes())
    };
    write_manifest(&manifest)?;

    let header = CheckpointHeader::new(&spec, ds.store.num_entities(), ds.store.num_relations(), cfg.train_config.seed);
    let mut hist_file = File::create(&history).map_err(|e| io_err(&history, e))?;
    let mut best_mrr = f64::NEG_INFINITY;
    let mut io_failure: Option<CliError> = None;
    let outcome = train_with(&spec, &ds.store, &cfg.train_config, |rec, params| {
        let line = serde_json::to_string(rec).expect("history record serializes");
        if let Err(e) = writeln!(hist_file, "{line}") {
            io_failure = Some(io_err(&history, e));
            return Err(Error::Checkpoint(format!("cannot write {}", history.display())));
        }
        if let Some(mrr) = rec.valid_mrr {
            if mrr > best_mrr {
                best_mrr = mrr;
                if let Err(e) = fs::write(&best, encode(&header, params)?) {
                    io_failure = Some(io_err(&best, e));
                    return Err(Error::Checkpoint(format!("cannot write {}", best.display())));
                }
            }
        }
        Ok(())
    });
    let outcome = match (outcome, io_failure) {
        (_, Some(e)) => return Err(e),
        (Err(e), None) => return Err(CliError::runtime(e.to_string())),
        (Ok(o), None) => o,
    };
    let last_bytes = encode(&header, &outcome.params)?;
    write_file(&last, &last_bytes)?;
    if !best_mrr.is_finite() {
        write_file(&best, &last_bytes)?;
    }
    for (k, p) in [("checkpoint_last", &last), ("checkpoint_best", &best), ("history", &history)] {
        let bytes = fs::read(p).map_err(|e| io_err(p, e))?;
        manifest.checksums.insert(k.to_owned(), sha256_hex(&bytes));
    }
    manifest.finished_at = Some(chrono::Utc::now().to_rfc3339());
    write_manifest(&manifest)?;
    if let Some(rec) = outcome.history.last() {
        writeln!(stdout, "epoch {}\tloss {:.6}", rec.epoch, rec.loss).map_err(|e| CliError::runtime(e.to_string()))?;
    }
    writeln!(stdout, "checkpoint {}", last.display()).map_err(|e| CliError::runtime(e.to_string()))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn evaluate_cmd(
    checkpoint: &Path,
    train: &Path,
    valid: Option<&Path>,
    test: &Path,
    raw: bool,
    format: TripleFormat,
    out: Option<&Path>,
    dataset: Option<&str>,
    stdout: &mut dyn Write,
) -> CliResult {
    require_file(checkpoint)?;
    let (header, params) = read_checkpoint(checkpoint)?;
    let ds = load_dataset(train, valid, Some(test), format)?;
    let (ne, nr) = (ds.store.num_entities(), ds.store.num_relations());
    if header.num_entities != ne || header.num_relations != nr {
        return Err(CliError::usage(format!(
            "checkpoint has N_e={}, N_r={} but the dataset has N_e={ne}, N_r={nr}",
            header.num_entities, header.num_relations
        )));
    }
    let protocol = if raw { Protocol::Raw } else { Protocol::Filtered };
    let spec = header.spec();
    let report = evaluate(&spec, &params, &ds.store.test, ds.store.known(), protocol)?;
    let label = dataset.map(str::to_owned).unwrap_or_else(|| {
        test.parent()
            .and_then(Path::file_name)
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    });
    let doc = report.document(spec.kind.name(), &label);
    let json = serde_json::to_string_pretty(&doc).map_err(|e| CliError::runtime(e.to_string()))?;
    let out_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(format!("{}.report.json", checkpoint.display())));
    write_file(&out_path, json.as_bytes())?;
    writeln!(stdout, "model\tdataset\tHits@10\tMR\tMRR\n{}\t{}\t{}", spec.kind.label(), label, report.table_row())
        .map_err(|e| CliError::runtime(e.to_string()))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn param_count_cmd(
    model: ModelKind,
    dim: usize,
    hidden_multiplier: usize,
    train: &Path,
    valid: Option<&Path>,
    test: Option<&Path>,
    format: TripleFormat,
    stdout: &mut dyn Write,
) -> CliResult {
    let spec = ModelSpec::new(model, dim).with_hidden_multiplier(hidden_multiplier);
    spec.validate()?;
    let ds = load_dataset(train, valid, test, format)?;
    let count = param_count(&spec, ds.store.num_entities(), ds.store.num_relations());
    writeln!(
        stdout,
        "model\t{}\nN_e\t{}\nN_r\t{}\nformula\t{}\ncensus\t{}",
        model.label(),
        ds.store.num_entities(),
        ds.store.num_relations(),
        count.formula,
        count.census
    )
    .map_err(|e| CliError::runtime(e.to_string()))?;
    Ok(())
}

/// Runs one parsed command, writing human-readable output to `stdout`.
pub fn run_with(cli: Cli, stdout: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::AuditBias {
            train,
            test,
            valid,
            threshold,
            format,
            out,
        } => audit_bias(&train, valid.as_deref(), &test, threshold, format, &out, stdout),
        Command::Train { config, set, allow_any } => train_cmd(&config, &set, allow_any, stdout),
        Command::Evaluate {
            checkpoint,
            train,
            valid,
            test,
            raw,
            format,
            out,
            dataset,
        } => evaluate_cmd(
            &checkpoint,
            &train,
            valid.as_deref(),
            &test,
            raw,
            format,
            out.as_deref(),
            dataset.as_deref(),
            stdout,
        ),
        Command::ParamCount {
            model,
            dim,
            hidden_multiplier,
            train,
            valid,
            test,
            format,
        } => param_count_cmd(
            model,
            dim,
            hidden_multiplier,
            &train,
            valid.as_deref(),
            test.as_deref(),
            format,
            stdout,
        ),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the exit code; errors go to stderr.
pub fn run_from_args<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run_with(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("kgbench: {e}");
            e.code
        }
    }
}

/// Caps the rayon pool at `KGBENCH_THREADS` when set.
pub fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}
