use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use weaklab::pipeline::{Pipeline, PipelineError};
use weaklab::PipelineConfig;

/// Weak supervision pipeline: label, aggregate, train, evaluate, report.
#[derive(Debug, Parser)]
#[command(name = "weaklab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every weak source over every split.
    Label(Common),
    /// Aggregate the label matrices into training labels.
    Aggregate(Common),
    /// Train the classifier on the aggregated labels.
    Train(Common),
    /// Evaluate sources, majority vote and classifier.
    Eval(Common),
    /// Render the result tables from the evaluation.
    Report(Common),
    /// All stages in order.
    Run(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Pipeline config file (TOML or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Label(c)
            | Command::Aggregate(c)
            | Command::Train(c)
            | Command::Eval(c)
            | Command::Report(c)
            | Command::Run(c) => c,
        }
    }
}

fn prepare(common: &Common) -> Result<Pipeline, PipelineError> {
    let mut config = PipelineConfig::load(&common.config).map_err(PipelineError::Validation)?;
    if let Some(seed) = common.seed {
        config.set_seed(seed);
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    Pipeline::prepare(config)
}

fn execute(command: &Command) -> Result<(), PipelineError> {
    let pipeline = prepare(command.common())?;
    let out = pipeline.out_dir().display().to_string();
    match command {
        Command::Label(_) => pipeline.label()?,
        Command::Aggregate(_) => pipeline.aggregate()?,
        Command::Train(_) => pipeline.train()?,
        Command::Eval(_) => {
            pipeline.eval()?;
        }
        Command::Report(_) => print!("{}", pipeline.report()?),
        Command::Run(_) => print!("{}", pipeline.run()?),
    }
    log::info!("artifacts in {out}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
