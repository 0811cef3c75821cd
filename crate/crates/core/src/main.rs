//! Command-line front end: single training runs, hyper-parameter sweeps,
//! loss timing comparisons, and checkpoint evaluation.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use aucbench::data::{kfold_split, load_csv, synth_gaussian};
use aucbench::harness::{
    emit_results, prepare_data, run_sweep, run_trial_model, time_iterations, DatasetSource,
    ExperimentConfig, OutputFormat, TrialSetup,
};
use aucbench::harness::config::parse_dataset_arg;
use aucbench::harness::trial::eval_auroc;
use aucbench::model::Mlp;
use aucbench::{Error, Result};

#[derive(Parser)]
#[command(name = "aucbench", about = "AUROC-maximization training toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model on the first cross-validation fold of a config
    Train {
        #[arg(long)]
        config: PathBuf,
        /// overrides the first seed in the config
        #[arg(long)]
        seed: Option<u64>,
        /// write the best-validation-epoch model here
        #[arg(long)]
        save_model: Option<PathBuf>,
        /// write the per-epoch record here as JSON (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured sweep and emit one aggregated row per setting
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// overrides the config dataset; a CSV path or
        /// "synth:n=..,dim=..,pr=..,sep=.."
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: String,
        /// worker threads (default: all cores)
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Time matched pairwise/composite losses over 40-iteration windows
    BenchTime {
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a saved model on a dataset and report its AUROC
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// a CSV path or a "synth:..." spec
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "label")]
        label_column: String,
    },
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(std::io::stdout()),
    })
}

fn cmd_train(
    config: &Path,
    seed: Option<u64>,
    save_model: &Option<PathBuf>,
    out: &Option<PathBuf>,
) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let data = prepare_data(&cfg)?;
    let seed = seed.unwrap_or_else(|| cfg.seeds.first().copied().unwrap_or(0));
    let folds = kfold_split(&data.train, cfg.cv_folds, seed)?;
    let (train_idx, val_idx) = folds[0].clone();
    let setup = TrialSetup {
        train: &data.train,
        train_idx,
        val_idx,
        test: &data.test,
        loss: cfg.loss,
        optimizer: cfg.optimizer.clone(),
        sampler: cfg.sampler,
        hidden: cfg.model.hidden.clone(),
        head: cfg.model.head,
        epochs: cfg.epochs,
        seed,
        fold: 0,
    };
    let (result, model) = run_trial_model(&setup)?;
    if let Some(path) = save_model {
        model.save(path)?;
    }
    let mut w = open_out(out)?;
    serde_json::to_writer_pretty(&mut w, &result).map_err(|e| Error::Config(e.to_string()))?;
    writeln!(w)?;
    eprintln!(
        "loss={} best_epoch={} val={:.4} test={:.4}",
        cfg.loss.label(),
        result.best_epoch,
        result.val_at_best,
        result.test_at_best
    );
    Ok(())
}

fn cmd_sweep(
    config: &Path,
    dataset: &Option<String>,
    out: &Option<PathBuf>,
    format: &str,
    jobs: Option<usize>,
) -> Result<()> {
    let format = OutputFormat::parse(format)
        .ok_or_else(|| Error::Config(format!("unknown format {format:?}")))?;
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(arg) = dataset {
        cfg.dataset = parse_dataset_arg(arg, "label")?;
        cfg.normalize()?;
    }
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let table = run_sweep(&cfg)?;
    emit_results(&table, format, &mut *open_out(out)?)
}

fn cmd_bench_time(repeats: usize, out: &Option<PathBuf>) -> Result<()> {
    let table = time_iterations(repeats)?;
    let mut w = open_out(out)?;
    writeln!(w, "loss,ms_per_40_iters_mean,ms_per_40_iters_min")?;
    for row in &table.rows {
        writeln!(
            w,
            "{},{:.3},{:.3}",
            row.loss, row.ms_per_40_iters_mean, row.ms_per_40_iters_min
        )?;
    }
    Ok(())
}

fn cmd_eval(checkpoint: &Path, dataset: &str, label_column: &str) -> Result<()> {
    let model = Mlp::load(checkpoint)?;
    let ds = match parse_dataset_arg(dataset, label_column)? {
        DatasetSource::Csv { path, label_column, .. } => load_csv(&path, &label_column)?,
        DatasetSource::Synth { n, dim, pr, separation, seed, .. } => {
            synth_gaussian(n, dim, pr, separation, seed)?
        }
    };
    let all: Vec<usize> = (0..ds.len()).collect();
    let auc = eval_auroc(&model, &ds, &all)?;
    println!("{:.6}", auc);
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io(_)
        | Error::Csv(_)
        | Error::Parse { .. }
        | Error::SingleClass
        | Error::TargetTooHigh { .. }
        | Error::TooFewSamples { .. }
        | Error::EmptyClass
        | Error::ShapeMismatch { .. } => 2,
        Error::DivergedLoss { .. } | Error::EmptyResults => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Train { config, seed, save_model, out } => cmd_train(config, *seed, save_model, out),
        Command::Sweep { config, dataset, out, format, jobs } => {
            cmd_sweep(config, dataset, out, format, *jobs)
        }
        Command::BenchTime { repeats, out } => cmd_bench_time(*repeats, out),
        Command::Eval { checkpoint, dataset, label_column } => {
            cmd_eval(checkpoint, dataset, label_column)
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
