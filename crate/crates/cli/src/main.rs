use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use msgarch_core::run::{diagnose_dir, fit, run_compare, simulate, RunConfig, RunMode};

#[derive(Parser)]
#[command(name = "msgarch", version, about = "Bayesian estimation of Markov-switching GARCH models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate returns and regimes from `model`.
    Simulate(Common),
    /// Run the Gibbs sampler on `data` (or on data simulated from `model`).
    Fit(Common),
    /// Summarize existing `trace_*.csv` files.
    Diagnose(Common),
    /// Run several samplers on the same data and compare their efficiency.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chains: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn load(common: &Common, mode: RunMode) -> Result<RunConfig, msgarch_core::Error> {
    let mut cfg = RunConfig::load(&common.config)?;
    cfg.mode = mode;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(c) = common.chains {
        cfg.chains = c;
    }
    if let Some(o) = &common.out {
        cfg.output = Some(o.clone());
    }
    Ok(cfg)
}

fn execute(cmd: &Command) -> Result<String, msgarch_core::Error> {
    let (common, mode) = match cmd {
        Command::Simulate(c) => (c, RunMode::Simulate),
        Command::Fit(c) => (c, RunMode::Fit),
        Command::Diagnose(c) => (c, RunMode::Diagnose),
        Command::Compare(c) => (c, RunMode::Compare),
    };
    let cfg = load(common, mode)?;
    let out = cfg.output_dir();
    match mode {
        RunMode::Simulate => {
            simulate(&cfg)?;
        }
        RunMode::Fit => {
            let traces = fit(&cfg)?;
            for t in &traces {
                eprintln!(
                    "chain {}: state acceptance {:.3}",
                    t.chain,
                    t.acceptance.state_rate()
                );
            }
        }
        RunMode::Diagnose => {
            diagnose_dir(&cfg)?;
        }
        RunMode::Compare => {
            let report = run_compare(&cfg)?;
            for s in &report.samplers {
                eprintln!(
                    "{}: {:.2}s/chain, state acceptance {:.3}",
                    s.label, s.seconds, s.state_acceptance
                );
            }
        }
    }
    Ok(out.display().to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = if e.is_config() { EXIT_CONFIG } else { EXIT_NUMERIC };
            let err = anyhow::Error::new(e).context("msgarch failed");
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
