//! `fwlstm` command-line runner.
//!
//! Exit codes: 0 success, 1 usage error (bad flags, unreadable or invalid
//! config), 2 runtime failure.

pub mod manifest;
pub mod report;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use fwlstm::checkpoint::load_model;
use fwlstm::tasks::{read_split, SplitSizes};
use fwlstm::trainer::{self, evaluate, BEST_CHECKPOINT, FINAL_CHECKPOINT, METRICS_FILE};
use fwlstm::{Dataset, TaskKind, TrainConfig};
use serde::Serialize;

use manifest::{Artifacts, DatasetFingerprint, RunManifest, RunResults};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

pub const GRID_FILE: &str = "grid.csv";
pub const DATA_DIR: &str = "data";

#[derive(Debug, Parser)]
#[command(name = "fwlstm", version, about = "Fast-weight LSTM experiments on associative retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate train/validation/test split files.
    Gen {
        /// `art` (interleaved pairs) or `mart` (all keys, then all values).
        #[arg(long)]
        task: TaskKind,
        /// Sequence difficulty: K/2 key-value pairs, even, 2 to 52.
        #[arg(long)]
        k: usize,
        /// Train, validation and test sizes, comma separated.
        #[arg(long, value_parser = parse_sizes)]
        sizes: SplitSizes,
        #[arg(long)]
        seed: u64,
        /// Output directory for train.txt, validation.txt and test.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model; writes metrics, checkpoints and a manifest.
    Train {
        /// JSON training config; unknown keys are rejected.
        #[arg(long)]
        config: PathBuf,
        /// Directory holding split files; generated from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Run directory: manifest, metrics and checkpoints go here.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on one split file and print JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the hyperparameter grid and write a ranked CSV.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Epochs per trial; defaults to the config's max_epochs.
        #[arg(long)]
        budget: Option<usize>,
        /// Trials trained concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Summarize run manifests under a directory as CSV.
    Report {
        #[arg(long)]
        runs: PathBuf,
        /// Also write the CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_sizes(s: &str) -> Result<SplitSizes, String> {
    let parts = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    match parts[..] {
        [train, validation, test] => Ok(SplitSizes::new(train, validation, test)),
        _ => Err(format!("expected three comma-separated sizes, got {}", parts.len())),
    }
}

/// Failure classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<fwlstm::Error> for CliError {
    fn from(e: fwlstm::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Usage(e.into())
}

/// Parse `argv` (including the program name), run the subcommand, print
/// diagnostics to stderr, and return the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("fwlstm: {}", line.trim_start_matches("error: "));
            return EXIT_USAGE;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(e)) => {
            eprintln!("fwlstm: {}", one_line(&e));
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("fwlstm: {}", one_line(&e));
            EXIT_RUNTIME
        }
    }
}

fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").replace('\n', " ")
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Gen {
            task,
            k,
            sizes,
            seed,
            out,
        } => {
            fwlstm::tasks::check_k(k).map_err(usage)?;
            let data = Dataset::build(task, k, sizes, seed).map_err(usage)?;
            data.write_dir(&out)?;
            Ok(())
        }
        Command::Train { config, data, out } => train_command(&config, data.as_deref(), &out),
        Command::Eval { checkpoint, data } => {
            let params = load_model(&checkpoint)?;
            let (_, examples) = read_split(&data)?;
            let encoded = trainer::encode_split(&examples)?;
            let result = evaluate(&params, &encoded)?;
            #[derive(Serialize)]
            struct Out {
                loss: f64,
                accuracy: f64,
                n: usize,
            }
            let out = Out {
                loss: result.loss,
                accuracy: result.accuracy,
                n: result.n,
            };
            println!("{}", serde_json::to_string(&out).map_err(anyhow::Error::from)?);
            Ok(())
        }
        Command::Grid {
            config,
            data,
            out,
            budget,
            parallel,
        } => {
            let cfg = load_config(&config)?;
            let dataset = load_or_generate(&cfg, data.as_deref(), &out)?;
            let budget = budget.unwrap_or(cfg.max_epochs);
            let trials = trainer::grid_search(&cfg, &dataset, budget, parallel, Some(&out)).map_err(|e| match e {
                fwlstm::Error::Config(_) => usage(e),
                e => e.into(),
            })?;
            trainer::write_grid_csv(&trials, &out.join(GRID_FILE))?;
            if let Some(best) = trials.first() {
                println!(
                    "best trial {}: eta={} lambda={} grad_clip={} lr={} anneal={} val_acc={:.4}",
                    best.index,
                    best.point.eta,
                    best.point.lambda,
                    best.point.grad_clip,
                    best.point.learning_rate,
                    best.point.anneal_rate,
                    best.best_val_acc
                );
            }
            Ok(())
        }
        Command::Report { runs, out } => {
            let csv = report::report(&runs)?;
            if let Some(path) = out {
                fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
            }
            print!("{csv}");
            Ok(())
        }
    }
}

fn load_config(path: &Path) -> CliResult<TrainConfig> {
    TrainConfig::load(path).map_err(usage)
}

/// Read split files from `data`, checking they match the config's task, or
/// generate them from the config seed and write them under `out/data`.
fn load_or_generate(cfg: &TrainConfig, data: Option<&Path>, out: &Path) -> CliResult<Dataset> {
    match data {
        Some(dir) => {
            let dataset = Dataset::read_dir(dir)?;
            if dataset.kind != cfg.task.kind || dataset.k != cfg.task.k {
                return Err(usage(anyhow!(
                    "data in {} is {} K={}, config asks for {} K={}",
                    dir.display(),
                    dataset.kind,
                    dataset.k,
                    cfg.task.kind,
                    cfg.task.k
                )));
            }
            Ok(dataset)
        }
        None => {
            let dataset = Dataset::build(cfg.task.kind, cfg.task.k, cfg.task.sizes, cfg.seed)?;
            dataset.write_dir(&out.join(DATA_DIR))?;
            Ok(dataset)
        }
    }
}

fn train_command(config: &Path, data: Option<&Path>, out: &Path) -> CliResult<()> {
    let cfg = load_config(config)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let dataset = load_or_generate(&cfg, data, out)?;
    let artifacts = Artifacts {
        data_dir: data.map_or_else(|| PathBuf::from(DATA_DIR), Path::to_path_buf),
        metrics: METRICS_FILE.into(),
        best_checkpoint: BEST_CHECKPOINT.into(),
        final_checkpoint: FINAL_CHECKPOINT.into(),
    };
    let mut manifest = RunManifest::start(&cfg, DatasetFingerprint::of(&dataset), artifacts);
    manifest.write(out)?;

    let run = || -> anyhow::Result<RunResults> {
        let outcome = trainer::train(&cfg, &dataset, Some(out))?;
        let test = evaluate(&outcome.best_params, &trainer::encode_split(&dataset.test)?)?;
        Ok(RunResults {
            epochs_completed: outcome.metrics.len(),
            best_epoch: outcome.best_epoch,
            best_val_acc: outcome.best_val_acc,
            test_loss: test.loss,
            test_accuracy: test.accuracy,
        })
    };
    match run() {
        Ok(results) => {
            println!(
                "completed {} epochs; best val acc {:.4} at epoch {}; test acc {:.4}",
                results.epochs_completed, results.best_val_acc, results.best_epoch, results.test_accuracy
            );
            manifest.complete(results);
            manifest.write(out)?;
            Ok(())
        }
        Err(e) => {
            manifest.fail(one_line(&e));
            manifest.write(out)?;
            Err(CliError::Runtime(e))
        }
    }
}

/// Re-export so tests can check a run without touching private types.
pub fn read_manifest(dir: &Path) -> anyhow::Result<RunManifest> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    RunManifest::read(&dir.join(manifest::MANIFEST_FILE))
}
