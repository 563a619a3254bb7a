use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hedgenet_cli::commands::{self, NetArgs, RunOptions};

#[derive(Parser)]
#[command(
    name = "hedgenet",
    version,
    about = "Discrete hedging error experiments on eta-nets"
)]
struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,
    /// Write wall_ms = 0 everywhere so reruns are byte-identical.
    #[arg(long, global = true)]
    no_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (JSON).
    config: PathBuf,
    /// Output directory; defaults to output.directory of the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print or write the knots of an eta-net.
    Net {
        #[arg(long = "T", default_value_t = 1.0)]
        horizon: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.0, value_parser = parse_eta, allow_negative_numbers = true)]
        eta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Error curves per net family and fitted convergence rates.
    Rate(ConfigArgs),
    /// Estimate the blow-up exponent theta and choose eta.
    Theta(ConfigArgs),
    /// Scan H^2(u) over [0.1 T, 0.9 T].
    H2(ConfigArgs),
    /// Error estimates for every family and n, without fitting.
    Simulate(ConfigArgs),
    /// Aggregate the runs below a directory.
    Report { dir: PathBuf },
}

fn parse_eta(s: &str) -> Result<f64, String> {
    let eta: f64 = s
        .parse()
        .map_err(|e| format!("{s:?} is not a number: {e}"))?;
    if !(eta >= 0.0) {
        return Err(format!("eta must be >= 0, got {eta}"));
    }
    if eta >= 1.0 {
        return Err(format!("eta must be < 1, got {eta}"));
    }
    Ok(eta)
}

fn run(cli: Cli) -> Result<()> {
    let timing = !cli.no_timing;
    let opts = |a: ConfigArgs| RunOptions {
        config: a.config,
        out: a.out,
        timing,
    };
    let job = move || match cli.command {
        Command::Net {
            horizon,
            n,
            eta,
            out,
        } => commands::cmd_net(&NetArgs {
            horizon,
            n,
            eta,
            out,
        }),
        Command::Rate(a) => commands::cmd_rate(&opts(a)),
        Command::Theta(a) => commands::cmd_theta(&opts(a)),
        Command::H2(a) => commands::cmd_h2(&opts(a)),
        Command::Simulate(a) => commands::cmd_simulate(&opts(a)),
        Command::Report { dir } => commands::cmd_report(&dir),
    };
    match cli.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.into())
            .build()
            .context("starting the worker pool")?
            .install(job),
        None => job(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
