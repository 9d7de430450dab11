use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tabtext::evalkit::{all_importances, permutation_importance};
use tabtext::frame::read_csv;
use tabtext_bench::runner::{self, ModelManifest, RESULTS_CSV, RESULTS_TABLE};
use tabtext_bench::synth::{write_synthetic, SyntheticSpec};
use tabtext_bench::RunConfig;

/// Exit code for runs where a dataset could not be read or split.
const DATASET_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "tabtext", version, about = "Multimodal tabular AutoML benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every configured strategy on every dataset and seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent cells; defaults to the config's `workers`, then the
        /// number of CPUs.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Generate a synthetic train/test pair from a JSON spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Permutation importance of a refitted model on labelled data.
    Importance {
        /// Model manifest written by `run` (under `models/`).
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Column to permute; all feature columns when omitted.
        #[arg(long)]
        column: Option<String>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render the tables of an existing results CSV.
    Report {
        #[arg(long)]
        results: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, out, workers } => {
            let config = RunConfig::load(&config)?;
            let Some(out) = out.or_else(|| config.output_dir.clone()) else {
                bail!("no output directory: pass --out or set output_dir");
            };
            let workers = workers
                .or(config.workers)
                .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
            let report = runner::run(&config, &out, workers)?;
            print!("{}", fs::read_to_string(out.join(RESULTS_TABLE))?);
            println!("results: {}", out.join(RESULTS_CSV).display());
            if report.dataset_errors.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for (d, e) in &report.dataset_errors {
                    eprintln!("dataset {d}: {e}");
                }
                Ok(ExitCode::from(DATASET_ERROR))
            }
        }
        Command::Synth { spec, out } => {
            let text = fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let spec: SyntheticSpec = serde_json::from_str(&text).context("parsing synthetic spec")?;
            write_synthetic(&spec, &out)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Importance {
            model,
            data,
            column,
            repeats,
            seed,
        } => {
            let text = fs::read_to_string(&model).with_context(|| format!("reading {}", model.display()))?;
            let manifest: ModelManifest = serde_json::from_str(&text).context("parsing model manifest")?;
            let fitted = runner::refit(&manifest)?;
            let d = &manifest.dataset;
            let table = read_csv(&data, &d.type_overrides)?.with_target(&d.target, d.task)?;
            let train_classes = runner::load_dataset(d)?.pool.classes().to_vec();
            let table = table.with_classes(train_classes);
            let metric = d.metric();
            println!("column,importance");
            match column {
                Some(c) => println!("{c},{}", permutation_importance(fitted.as_ref(), &table, &c, metric, repeats, seed)?),
                None => {
                    for (c, v) in all_importances(fitted.as_ref(), &table, metric, repeats, seed)? {
                        println!("{c},{v}");
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { results } => {
            let cells = runner::read_results_csv(&results)?;
            print!("{}", runner::render_report(&cells)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
