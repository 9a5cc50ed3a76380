//! `pragref`: prepare corpora, train the base models, evaluate listeners,
//! run the exact RSA demo and export speaker and density analyses.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pragref::Error;

use commands::{EvalAgent, ModelKind};
use config::{FileConfig, FlagValues, PragmaticsOverrides, RunConfig, TrainOverrides};

#[derive(Debug, Parser)]
#[command(
    name = "pragref",
    version,
    about = "Neural and exact RSA agents for color reference games"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON-lines corpus.
    #[arg(long, global = true, env = "PRAGREF_DATA")]
    corpus: Option<PathBuf>,
    /// train, dev or test.
    #[arg(long, global = true)]
    split: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    checkpoint_dir: Option<PathBuf>,
    /// Output directory (or file, for `synth` and `density`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    alpha_neural: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    beta_a: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    beta_b: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    m: Option<usize>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    L0,
    S0,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AgentArg {
    L0,
    L1,
    L2,
    La,
    Lb,
    Le,
    All,
    Human,
    Uniform,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter and split a corpus; write split files, vocabularies and stats to --out.
    Prepare,
    /// Write a synthetic template corpus to --out.
    Synth {
        #[arg(long, default_value_t = 6000)]
        trials: usize,
    },
    /// Train a base model; checkpoints go to --checkpoint-dir.
    Train {
        #[arg(value_enum)]
        model: ModelArg,
        /// Continue from the existing checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a listener on --split.
    Eval {
        #[arg(value_enum)]
        agent: AgentArg,
        /// Also write per-trial probabilities to --out.
        #[arg(long)]
        dump: bool,
    },
    /// Print exact RSA tables for a truth-value lexicon.
    RsaDemo {
        /// Lexicon JSON; defaults to the bundled three-color example.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Multiplier on utterance costs.
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
    },
    /// Compare S0 and S1 speaker behavior on sampled contexts.
    Analyze {
        /// Contexts per condition.
        #[arg(long, default_value_t = 1000)]
        contexts: usize,
        /// S0 samples S1 chooses among; defaults to --m.
        #[arg(long)]
        pool: Option<usize>,
    },
    /// Export the listener's color density for an utterance.
    Density {
        utterance: String,
        #[arg(long, default_value_t = 90)]
        hue_bins: usize,
        #[arg(long, default_value_t = 50)]
        sat_bins: usize,
        #[arg(long, default_value_t = 50)]
        value_bins: usize,
    },
}

/// Exit status per error class; clap uses 2 for usage errors.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 3,
        Error::Parse { .. } | Error::MissingField { .. } | Error::Json(_) => 4,
        Error::MissingCheckpoint(_) | Error::Checkpoint(_) => 5,
        Error::Io(_) => 6,
        Error::NonFiniteGradient(_) => 7,
        Error::VacuousUtterance(_) | Error::NoTrueUtterance(_) | Error::EmptyUtterance => 8,
        Error::SamplingBudgetExceeded { .. } => 9,
        _ => 1,
    }
}

fn resolve(c: CommonArgs) -> pragref::Result<RunConfig> {
    let file = c.config.as_deref().map(FileConfig::load).transpose()?;
    let flags = FlagValues {
        corpus: c.corpus,
        checkpoint_dir: c.checkpoint_dir,
        out: c.out,
        seed: c.seed,
        split: c.split,
        pragmatics: PragmaticsOverrides {
            alpha: c.alpha,
            alpha_neural: c.alpha_neural,
            m: c.m,
            n: c.n,
            beta_a: c.beta_a,
            beta_b: c.beta_b,
            gamma: c.gamma,
        },
        train: TrainOverrides {
            epochs: c.epochs,
            batch_size: c.batch_size,
            lr: c.lr,
        },
    };
    RunConfig::resolve(flags, file)
}

fn run(cli: Cli) -> pragref::Result<()> {
    let cfg = resolve(cli.common)?;
    match cli.command {
        Command::Prepare => commands::cmd_prepare(&cfg),
        Command::Synth { trials } => commands::cmd_synth(&cfg, trials),
        Command::Train { model, resume } => {
            let kind = match model {
                ModelArg::L0 => ModelKind::L0,
                ModelArg::S0 => ModelKind::S0,
            };
            commands::cmd_train(&cfg, kind, resume)
        }
        Command::Eval { agent, dump } => {
            let agent = match agent {
                AgentArg::L0 => EvalAgent::L0,
                AgentArg::L1 => EvalAgent::L1,
                AgentArg::L2 => EvalAgent::L2,
                AgentArg::La => EvalAgent::La,
                AgentArg::Lb => EvalAgent::Lb,
                AgentArg::Le => EvalAgent::Le,
                AgentArg::All => EvalAgent::All,
                AgentArg::Human => EvalAgent::Human,
                AgentArg::Uniform => EvalAgent::Uniform,
            };
            commands::cmd_eval(&cfg, agent, dump)
        }
        Command::RsaDemo { lexicon, kappa } => {
            commands::cmd_rsa_demo(&cfg, lexicon.as_deref(), kappa)
        }
        Command::Analyze { contexts, pool } => commands::cmd_analyze(&cfg, contexts, pool),
        Command::Density {
            utterance,
            hue_bins,
            sat_bins,
            value_bins,
        } => commands::cmd_density(&cfg, &utterance, [hue_bins, sat_bins, value_bins]),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
