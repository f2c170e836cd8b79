use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod error;
mod rundir;
mod store;
mod world;

use config::LoadedConfig;
use error::{CliError, CliResult};

/// Multilingual system-prompt evaluation, reward modeling and search.
#[derive(Debug, Parser)]
#[command(name = "polyprompt", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured run id.
    #[arg(long, global = true)]
    run_id: Option<String>,
    /// Overrides the configured concurrency limit for model calls.
    #[arg(long, global = true)]
    max_in_flight: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Component corpus tools.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Evaluate a prompt set on every configured model and benchmark.
    Eval {
        #[arg(long, value_enum, default_value_t = PromptSet::Random)]
        set: PromptSet,
    },
    /// Surrogate reward model.
    #[command(subcommand)]
    Reward(RewardCmd),
    /// Surrogate-guided prompt search.
    Optimize {
        /// Reward params; defaults to the run's trained params.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Segment, language-tag and label the reasoning in stored responses.
    Trace,
    /// Write the CSV report bundle.
    Report {
        /// Run directories to report on; the configured run when empty.
        run_dirs: Vec<PathBuf>,
        /// Output directory; the first run's reports/ when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum CorpusCmd {
    /// Grow every category to the configured target with a model.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Compose random prompts from a corpus.
    Compose {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value = "rand-")]
        prefix: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a corpus file and list every violation.
    Validate {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum RewardCmd {
    /// Fit params to prompt metrics.
    Train {
        /// Prompt file; defaults to the run's random population.
        #[arg(long)]
        prompts: Option<PathBuf>,
        /// JSONL of `{"prompt_id", "target": [4 numbers]}`; defaults to the run's normalized metrics.
        #[arg(long)]
        targets: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank correlation of params against targets.
    Eval {
        #[arg(long)]
        params: PathBuf,
        /// Featurizer JSON to build features with; the params' own when absent.
        #[arg(long)]
        featurizer: Option<PathBuf>,
        #[arg(long)]
        prompts: Option<PathBuf>,
        #[arg(long)]
        targets: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PromptSet {
    Random,
    Optimized,
}

impl PromptSet {
    pub fn name(self) -> &'static str {
        match self {
            PromptSet::Random => "random",
            PromptSet::Optimized => "optimized",
        }
    }
}

/// What every command gets: the config, when one was given, and overrides.
pub struct Ctx {
    pub config: Option<LoadedConfig>,
    pub seed: Option<u64>,
    pub max_in_flight: Option<usize>,
}

impl Ctx {
    pub fn config(&self) -> CliResult<&LoadedConfig> {
        self.config.as_ref().ok_or_else(|| CliError::validation("config", "this command needs --config"))
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.or_else(|| self.config.as_ref().map(|c| c.config.max_in_flight)).unwrap_or(8).max(1)
    }

    pub fn seed(&self) -> u64 {
        self.seed.or_else(|| self.config.as_ref().map(|c| c.config.seed)).unwrap_or(0)
    }
}

fn load(cli: &Cli) -> CliResult<Ctx> {
    let config = match &cli.config {
        Some(path) => {
            let mut cfg = LoadedConfig::load(path)?;
            if let Some(seed) = cli.seed {
                cfg.config.seed = seed;
            }
            if let Some(id) = &cli.run_id {
                cfg.config.run_id = Some(id.clone());
            }
            cfg.validate()?;
            Some(cfg)
        }
        None => None,
    };
    Ok(Ctx { config, seed: cli.seed, max_in_flight: cli.max_in_flight })
}

fn dispatch(cli: Cli) -> CliResult<serde_json::Value> {
    let ctx = load(&cli)?;
    match cli.command {
        Command::Corpus(CorpusCmd::Synth { out }) => commands::corpus::synth(&ctx, &out),
        Command::Corpus(CorpusCmd::Compose { corpus, n, prefix, out }) => {
            commands::corpus::compose(&ctx, corpus.as_deref(), n, &prefix, &out)
        }
        Command::Corpus(CorpusCmd::Validate { corpus }) => commands::corpus::validate(&ctx, corpus.as_deref()),
        Command::Eval { set } => commands::eval::run(&ctx, set),
        Command::Reward(RewardCmd::Train { prompts, targets, out }) => {
            commands::reward::train(&ctx, prompts.as_deref(), targets.as_deref(), out.as_deref())
        }
        Command::Reward(RewardCmd::Eval { params, featurizer, prompts, targets, out }) => commands::reward::eval(
            &ctx,
            &params,
            featurizer.as_deref(),
            prompts.as_deref(),
            targets.as_deref(),
            out.as_deref(),
        ),
        Command::Optimize { params } => commands::optimize::run(&ctx, params.as_deref()),
        Command::Trace => commands::trace::run(&ctx),
        Command::Report { run_dirs, out } => commands::report::run(&ctx, &run_dirs, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::validation("usage", e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match dispatch(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
