//! `dialeval` command-line interface.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 invalid or
//! missing data, 3 numerical failure.

mod commands;
mod config;
mod output;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{RunConfig, SynthKind};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<dialeval::Error> for CliError {
    fn from(e: dialeval::Error) -> Self {
        match e {
            dialeval::Error::NonFinite(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "dialeval", version, about = "Dialogue response evaluation pipeline")]
struct Cli {
    /// TOML configuration file; flags override it, it overrides defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed (run.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run batch work on one thread (run.parallel = false).
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

/// Where embedded examples come from: a prepared text corpus plus an
/// encoder checkpoint, or pre-embedded triples from `synth`.
#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Output directory of `prepare`.
    #[arg(long, conflicts_with = "embeddings")]
    pub prepared: Option<PathBuf>,
    /// Encoder checkpoint written by `pretrain`.
    #[arg(long, conflicts_with = "embeddings")]
    pub encoder: Option<PathBuf>,
    /// Directory of `*.emb.jsonl` splits written by `synth`.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        kind: Option<SynthKind>,
        #[arg(long)]
        contexts: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Split a dataset by context and learn BPE merges and a vocabulary.
    Prepare {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bpe_merges: Option<usize>,
        #[arg(long)]
        vocab_size: Option<usize>,
        #[arg(long)]
        keep_speaker_tokens: bool,
    },
    /// Pre-train the dialogue encoder as part of a VHRED model.
    Pretrain {
        #[arg(long)]
        prepared: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        batches: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Fit the PCA projection on training embeddings.
    FitPca {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pca_dim: Option<usize>,
    },
    /// Train the ADEM scorer.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Projection from `fit-pca`; fitted on the training split if absent.
        #[arg(long)]
        pca: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        pca_dim: Option<usize>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        /// Train on the original examples without length sub-sampling.
        #[arg(long)]
        no_subsample: bool,
    },
    /// Score one split with ADEM and the word-overlap metrics.
    Score {
        #[command(flatten)]
        data: DataArgs,
        /// ADEM checkpoint from `train`.
        #[arg(long)]
        adem: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
        /// Also write `timing.json` with wall-clock times (not reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Correlation, bias and failure tables from a `score` directory.
    Eval {
        /// Directory holding `scores.csv` and `meta.csv`.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        delta_w_threshold: Option<usize>,
    },
    /// Data-efficiency and leave-one-out retraining sweeps.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated training fractions.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        no_leave_one_out: bool,
    },
    /// Human-readable report from an `eval` directory.
    Report {
        /// Output directory of `eval`.
        #[arg(long)]
        results: PathBuf,
        /// Output directory of `sweep`.
        #[arg(long)]
        sweep: Option<PathBuf>,
        /// `timing.json` from `score --timing`.
        #[arg(long)]
        timing: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Applies the command's flags on top of the file configuration.
fn apply_flags(cfg: &mut RunConfig, cli: &Cli) {
    set(&mut cfg.run.seed, cli.seed);
    if cli.sequential {
        cfg.run.parallel = false;
    }
    match &cli.command {
        Command::Synth {
            kind,
            contexts,
            dim,
            ..
        } => {
            set(&mut cfg.synth.kind, *kind);
            set(&mut cfg.synth.contexts, *contexts);
            set(&mut cfg.synth.dim, *dim);
        }
        Command::Prepare {
            bpe_merges,
            vocab_size,
            keep_speaker_tokens,
            ..
        } => {
            set(&mut cfg.prepare.bpe_merges, *bpe_merges);
            set(&mut cfg.prepare.vocab_size, *vocab_size);
            if *keep_speaker_tokens {
                cfg.prepare.keep_speaker_tokens = true;
            }
        }
        Command::Pretrain {
            batches,
            batch_size,
            lr,
            ..
        } => {
            set(&mut cfg.pretrain.batches, *batches);
            set(&mut cfg.pretrain.batch_size, *batch_size);
            set(&mut cfg.pretrain.lr, *lr);
        }
        Command::FitPca { pca_dim, .. } => set(&mut cfg.adem.pca_dim, *pca_dim),
        Command::Train {
            gamma,
            lr,
            batch_size,
            pca_dim,
            max_epochs,
            patience,
            no_subsample,
            ..
        } => {
            set(&mut cfg.adem.gamma, *gamma);
            set(&mut cfg.adem.lr, *lr);
            set(&mut cfg.adem.batch_size, *batch_size);
            set(&mut cfg.adem.pca_dim, *pca_dim);
            set(&mut cfg.adem.max_epochs, *max_epochs);
            set(&mut cfg.adem.patience, *patience);
            if *no_subsample {
                cfg.adem.subsample = false;
            }
        }
        Command::Eval {
            delta_w_threshold, ..
        } => set(&mut cfg.eval.delta_w_threshold, *delta_w_threshold),
        Command::Sweep {
            fractions,
            seeds,
            max_epochs,
            no_leave_one_out,
            ..
        } => {
            set(&mut cfg.sweep.fractions, fractions.clone());
            set(&mut cfg.sweep.seeds, *seeds);
            set(&mut cfg.adem.max_epochs, *max_epochs);
            if *no_leave_one_out {
                cfg.sweep.leave_one_out = false;
            }
        }
        Command::Score { .. } | Command::Report { .. } => {}
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::from_file(cli.config.as_deref()).map_err(CliError::Usage)?;
    apply_flags(&mut cfg, &cli);
    let problems = cfg.violations();
    if !problems.is_empty() {
        let list: Vec<String> = problems.iter().map(|p| format!("  - {p}")).collect();
        return Err(CliError::Usage(format!(
            "invalid configuration:\n{}",
            list.join("\n")
        )));
    }
    let toml = cfg.to_toml();
    println!("# resolved configuration (seed {})", cfg.run.seed);
    print!("{toml}");

    match cli.command {
        Command::Synth { out, .. } => commands::synth(&cfg, &toml, &out),
        Command::Prepare { dataset, out, .. } => commands::prepare(&cfg, &toml, &dataset, &out),
        Command::Pretrain { prepared, out, .. } => commands::pretrain(&cfg, &toml, &prepared, &out),
        Command::FitPca { data, out, .. } => commands::fit_pca(&cfg, &toml, &data, &out),
        Command::Train { data, pca, out, .. } => {
            commands::train(&cfg, &toml, &data, pca.as_deref(), &out)
        }
        Command::Score {
            data,
            adem,
            split,
            out,
            timing,
        } => commands::score(&cfg, &toml, &data, adem.as_deref(), split, &out, timing),
        Command::Eval { scores, out, .. } => commands::eval(&cfg, &toml, &scores, &out),
        Command::Sweep { data, out, .. } => commands::sweep(&cfg, &toml, &data, &out),
        Command::Report {
            results,
            sweep,
            timing,
            out,
        } => report::report(&cfg, &toml, &results, sweep.as_deref(), timing.as_deref(), &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
