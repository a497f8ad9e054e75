use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pdprog::commands::{self, ExperimentConfig, ImportanceOptions};
use pdprog::synthcohort::SynthSpec;

#[derive(Parser)]
#[command(
    name = "pdprog",
    version,
    about = "Parkinson's progression modelling pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 = one per core, 1 = serial.
    #[arg(long)]
    workers: Option<usize>,
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Data {
    #[arg(long)]
    clinical: PathBuf,
    #[arg(long)]
    device: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort with planted signal.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_subjects: Option<usize>,
        #[arg(long)]
        target_r2: Option<f64>,
    },
    /// Run the nested cross-validated search over the result grid.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        /// Fast-progressor cut on PctChange24.
        #[arg(long)]
        threshold: Option<f64>,
        /// Configurations sampled per outer fold, for both families.
        #[arg(long)]
        n_configs: Option<usize>,
        /// Save each outer fold's refit model.
        #[arg(long)]
        save_models: bool,
    },
    /// Permutation importance of a saved model on its held-out subjects.
    Importance {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = pdprog::metrics::DEFAULT_REPEATS)]
        repeats: usize,
        /// Score every subject instead of the held-out fold.
        #[arg(long)]
        all_subjects: bool,
    },
    /// Per-visit score summary and paired tests against baseline.
    Progression {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth {
            common,
            n_subjects,
            target_r2,
        } => {
            let mut spec = match &common.config {
                Some(p) => commands::load_synth_spec(p)
                    .with_context(|| format!("reading {}", p.display()))?,
                None => SynthSpec::default(),
            };
            if let Some(s) = common.seed {
                spec.seed = s;
            }
            if let Some(n) = n_subjects {
                spec.n_subjects = n;
            }
            if let Some(r) = target_r2 {
                spec.target_r2 = r;
            }
            let out = commands::cmd_synth(&spec, &common.out)?;
            println!("{}", out.clinical.display());
            println!("{}", out.device.display());
            println!("{}", out.truth.display());
        }
        Command::Run {
            common,
            data,
            threshold,
            n_configs,
            save_models,
        } => {
            let mut cfg = match &common.config {
                Some(p) => {
                    ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?
                }
                None => ExperimentConfig::default(),
            };
            if let Some(s) = common.seed {
                cfg.request.master_seed = s;
            }
            if let Some(w) = common.workers {
                cfg.workers = w;
            }
            if let Some(t) = threshold {
                cfg.request.threshold = t;
            }
            if let Some(n) = n_configs {
                cfg.request.n_configs.trees = n;
                cfg.request.n_configs.net = n;
            }
            cfg.save_models |= save_models;
            let outcome = commands::cmd_run(
                &cfg,
                &data.clinical,
                &data.device,
                &common.out,
                common.config.as_deref(),
            )?;
            println!("{}", outcome.grid_csv.display());
            if !outcome.complete {
                eprintln!("warning: partial grid; see status column");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Importance {
            common,
            data,
            model,
            repeats,
            all_subjects,
        } => {
            let opts = ImportanceOptions {
                n_repeats: repeats,
                seed: common.seed.unwrap_or(0),
                workers: common.workers.unwrap_or(0),
                all_subjects,
            };
            let report =
                commands::cmd_importance(&model, &data.clinical, &data.device, &common.out, &opts)?;
            for f in report.top(commands::TOP_FEATURES) {
                println!("{}\t{}\t{}", f.feature, f.mean_delta_r2, f.std);
            }
        }
        Command::Progression { common, data } => {
            let summary = commands::cmd_progression(&data.clinical, &data.device, &common.out)?;
            for c in &summary.comparisons {
                println!(
                    "month {} vs 0: t = {}, df = {}, p = {}",
                    c.month, c.test.t, c.test.df, c.test.p
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
