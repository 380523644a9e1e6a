use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlbeta::io::{run, Command, Format, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "nlbeta", version, about = "Nonlinear beta regression with bias-corrected estimators")]
struct Cli {
    /// Worker threads for bootstrap and Monte Carlo loops.
    #[arg(long, global = true, env = "NLBETA_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a model and report the corrected estimates.
    Fit(Common),
    /// Run a Monte Carlo scenario.
    Simulate(Common),
    /// Likelihood ratio and score tests of nested restrictions.
    Test(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// text, csv or structured.
    #[arg(long, value_parser = parse_format)]
    format: Option<Format>,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: nlbeta::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let (command, common) = match cli.command {
        Cmd::Fit(c) => (Command::Fit, c),
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Test(c) => (Command::Test, c),
    };
    let overrides = Overrides {
        seed: common.seed,
        format: common.format,
        output: common.output,
    };
    let result = RunConfig::from_file(&common.config).and_then(|cfg| run(command, &cfg, &overrides));
    match result {
        Ok(Some(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
