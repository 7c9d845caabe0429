use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use scr::augmentor::{CandidateSource, CountingTransport, LlmSource, UreqTransport};
use scr::cli::{self, RunConfig};
use scr::corpus::Format;
use scr::trainer::TrainStrategy;

#[derive(Parser)]
#[command(name = "scr", version, about = "Semi-supervised sentiment experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run config; defaults apply to anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Proceed even if the input corpus changed since `prepare`.
    #[arg(long)]
    force: bool,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Split the corpus and sample the labeled regime.
    Prepare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        format: Option<Format>,
        #[arg(long)]
        labels_per_class: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fetch strong-view candidates for every unlabeled text.
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strategy: TrainStrategy,
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Use the deterministic offline rewriter; no network, no credential.
        #[arg(long)]
        offline_mock: bool,
    },
    /// Train and keep the best validation checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strategy: Option<TrainStrategy>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        offline_mock: bool,
    },
    /// Score a checkpoint on a prepared split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out_dir>/model.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Write trend and token-frequency tables from a run directory.
    Report {
        #[arg(long)]
        log_dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare {
            common,
            input,
            format,
            labels_per_class,
            seed,
        } => {
            let mut cfg = common.load()?;
            if input.is_some() {
                cfg.data.input = input;
            }
            if format.is_some() {
                cfg.data.format = format;
            }
            if let Some(n) = labels_per_class {
                cfg.regime.labels_per_class = n;
            }
            if let Some(s) = seed {
                cfg.train.master_seed = s;
            }
            let s = cli::cmd_prepare(&cfg, common.force)?;
            eprintln!(
                "prepared {}: train {} (labeled {}, unlabeled {}), val {}, test {}",
                cfg.out_dir.display(),
                s.train,
                s.labeled,
                s.unlabeled,
                s.val,
                s.test
            );
        }
        Command::Augment {
            common,
            strategy,
            cache,
            offline_mock,
        } => {
            let mut cfg = common.load()?;
            if cache.is_some() {
                cfg.cache = cache;
            }
            cfg.offline_mock |= offline_mock;
            let strategy = cli::augment_strategy(strategy)?;
            let progress = |done: usize, total: usize| {
                if done == total || done % (total / 10).max(1) == 0 {
                    eprintln!("augment: {done}/{total}");
                }
            };
            let (s, requests) = if cfg.offline_mock {
                let source = cfg.mock_source()?;
                (cli::cmd_augment(&cfg, strategy, &source, 1, common.force, &progress)?, 0)
            } else {
                let transport = CountingTransport::new(UreqTransport);
                let counter = transport.counter();
                let mut source = LlmSource::from_env(cfg.augment.clone(), transport)?;
                for t in cfg.prompt_templates()? {
                    source = source.with_template(t);
                }
                let source: &dyn CandidateSource = &source;
                let res = cli::cmd_augment(
                    &cfg,
                    strategy,
                    source,
                    cfg.augment.concurrency_limit,
                    common.force,
                    &progress,
                );
                let requests = counter.load(std::sync::atomic::Ordering::SeqCst);
                match res {
                    Ok(s) => (s, requests),
                    Err(e) => {
                        eprintln!("augment: {requests} requests before failure; partial cache kept");
                        return Err(e.into());
                    }
                }
            };
            println!("{} fetched, {} cached, {requests} requests", s.fetched, s.cached);
        }
        Command::Train {
            common,
            strategy,
            cache,
            offline_mock,
        } => {
            let mut cfg = common.load()?;
            if let Some(s) = strategy {
                cfg.train.strategy = s;
            }
            if cache.is_some() {
                cfg.cache = cache;
            }
            cfg.offline_mock |= offline_mock;
            let s = cli::cmd_train(&cfg, common.force)?;
            eprintln!(
                "trained {} epochs; best epoch {} with val accuracy {:.4}; checkpoint {}",
                s.epochs_run,
                s.best_epoch,
                s.best_val_acc,
                s.checkpoint.display()
            );
        }
        Command::Eval {
            common,
            checkpoint,
            split,
        } => {
            let cfg = common.load()?;
            let ckpt = checkpoint.unwrap_or_else(|| cfg.out_dir.join("model.ckpt"));
            let s = cli::cmd_eval(&cfg.out_dir, &ckpt, &split, common.force)?;
            eprintln!(
                "{}: {} examples, accuracy {:.4}, macro-F1 {:.4} -> {}",
                s.split,
                s.examples,
                s.accuracy,
                s.macro_f1,
                s.metrics_csv.display()
            );
        }
        Command::Report { log_dir } => {
            if !log_dir.is_dir() {
                bail!("log dir {} does not exist", log_dir.display());
            }
            let s = cli::cmd_report(&log_dir)
                .with_context(|| format!("report on {}", log_dir.display()))?;
            eprintln!("{} epochs; wrote {} files", s.epochs, s.files.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
