use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lpcad::checkpoint::{load_checkpoint, save_checkpoint};
use lpcad::data::{load_dataset, parse_labels, synth_generate, write_dataset, SynthSpec};
use lpcad::detect::{detect, read_score_dump, write_score_dump, NoiseMode};
use lpcad::metrics::{aggregate, auroc, point_adjust, prf, threshold_search, write_report, RunMetrics};
use lpcad::model::Variant;
use lpcad::plot::emit_plot_data;
use lpcad::protocol::{load_collection, run, score_series, train_bundle, RunOptions};
use lpcad::train::{write_loss_history, TrainConfig};
use lpcad::{Error, Result};

#[derive(Parser)]
#[command(
    name = "lpcad",
    version,
    about = "Latent predictive coding anomaly detection for multivariate time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AurocMode {
    Adjusted,
    Raw,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with labeled anomalies.
    Synth {
        /// key=value spec; defaults are used when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset's train split and save a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's variant (sa, s, l, ae, n).
        #[arg(long)]
        variant: Option<Variant>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Writes `epoch,mean_loss` lines here.
        #[arg(long)]
        loss_history: Option<PathBuf>,
    },
    /// Score a dataset's test split and flag points at or above the threshold.
    Detect {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        lambda: f64,
        /// sample, deterministic or mc:<k>.
        #[arg(long, default_value = "deterministic")]
        noise: NoiseMode,
        /// Seed for the sample and mc modes.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        scores: PathBuf,
        /// Per-timestamp CSV with values, reconstructions, score, flag and label.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// SVG of the first dimension; needs --plot.
        #[arg(long, requires = "plot")]
        svg: Option<PathBuf>,
    },
    /// Compute point-adjusted metrics for a score dump.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Pick the threshold maximizing F1 instead of using the dump's flags.
        #[arg(long)]
        search_lambda: bool,
        #[arg(long, value_enum, default_value = "adjusted")]
        auroc: AurocMode,
        #[arg(long)]
        report: PathBuf,
    },
    /// Train, score, search the threshold and aggregate over repeats.
    Run {
        /// One dataset directory, or a directory of them.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long, default_value = "deterministic")]
        noise: NoiseMode,
        #[arg(long, value_enum, default_value = "adjusted")]
        auroc: AurocMode,
        #[arg(long)]
        report: PathBuf,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A config file that does not parse is a usage error, not a data error.
fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => TrainConfig::parse(&read(p)?, &p.display().to_string()).map_err(|e| match e {
            Error::Parse { .. } => Error::Config(e.to_string()),
            other => other,
        }),
        None => Ok(TrainConfig::default()),
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth { spec, out } => {
            let spec = match spec {
                Some(p) => SynthSpec::parse(&read(&p)?, &p.display().to_string())?,
                None => SynthSpec::default(),
            };
            let synth = synth_generate(&spec)?;
            write_dataset(&synth.bundle, &out)?;
            eprintln!(
                "wrote {} train and {} test rows with {} anomaly segments to {}",
                synth.bundle.train.len(),
                synth.bundle.test.len(),
                synth.segments.len(),
                out.display()
            );
        }
        Command::Train {
            data,
            config,
            variant,
            seed,
            out,
            loss_history,
        } => {
            let mut config = load_config(config.as_deref())?;
            config.variant = variant.unwrap_or(config.variant);
            config.seed = seed.unwrap_or(config.seed);
            let bundle = load_dataset(&data)?;
            let (ckpt, history) = train_bundle(&bundle.train, &config)?;
            save_checkpoint(&ckpt, &out)?;
            if let Some(p) = loss_history {
                write_loss_history(&history, &p)?;
            }
            if let Some(last) = history.last() {
                eprintln!("trained {} epochs, final mean loss {last:.6}", history.len());
            }
        }
        Command::Detect {
            ckpt,
            data,
            lambda,
            noise,
            seed,
            scores,
            plot,
            svg,
        } => {
            let ckpt = load_checkpoint(&ckpt)?;
            let bundle = load_dataset(&data)?;
            let scored = score_series(&ckpt, &bundle.test, noise.with_seed(seed))?;
            let report = detect(&scored, lambda)?;
            write_score_dump(&report, &scores)?;
            if let Some(p) = plot {
                emit_plot_data(&bundle.test, &scored, &report, bundle.test_labels(), &p, svg.as_deref())?;
            }
            let flagged = report.flags.iter().filter(|f| **f == 1).count();
            eprintln!("flagged {flagged} of {} scored timestamps", report.flags.len());
        }
        Command::Eval {
            scores,
            labels,
            search_lambda,
            auroc: mode,
            report,
        } => {
            let dump = read_score_dump(&scores)?;
            let all_labels = parse_labels(&read(&labels)?, &labels.display().to_string())?;
            let labels = dump.align_labels(&all_labels)?;
            let (lambda, metrics) = if search_lambda {
                let best = threshold_search(&dump.scores, &labels)?;
                (best.lambda, best.prf)
            } else {
                let lambda = dump
                    .lambda
                    .ok_or_else(|| Error::Data("score dump has no lambda line; use --search-lambda".into()))?;
                (lambda, prf(&point_adjust(&dump.flags, &labels)?, &labels)?)
            };
            let run = RunMetrics {
                series: scores.display().to_string(),
                repeat: 0,
                precision: metrics.precision,
                recall: metrics.recall,
                f1: metrics.f1,
                auroc: auroc(&dump.scores, &labels, matches!(mode, AurocMode::Adjusted))?,
                lambda,
            };
            let bundle = aggregate(&[run], 1, 1)?;
            write_report(&bundle, &report)?;
            eprintln!(
                "F1 {:.4}  AUROC {:.4}  lambda {}",
                bundle.f1, bundle.auroc, bundle.lambda
            );
        }
        Command::Run {
            data,
            config,
            repeats,
            variant,
            noise,
            auroc: mode,
            report,
        } => {
            let mut config = load_config(config.as_deref())?;
            config.variant = variant.unwrap_or(config.variant);
            let bundles = load_collection(&data)?;
            let options = RunOptions {
                repeats,
                noise,
                adjust_auroc: matches!(mode, AurocMode::Adjusted),
            };
            let bundle = run(&bundles, &config, &options)?;
            write_report(&bundle, &report)?;
            eprintln!(
                "F1 {:.4}  F1* {:.4}  AUROC {:.4} over {} series x {repeats} repeats",
                bundle.f1,
                bundle.f1_star,
                bundle.auroc,
                bundles.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
