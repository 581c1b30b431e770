//! `dnsite`: run scenarios, replay traces, analyze logs and serve DNS.

mod analyze;
mod output;
mod replay;
mod serve;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dnsite_core::balancer::Policy;

use crate::output::Invalid;

#[derive(Debug, Parser)]
#[command(name = "dnsite", version, about = "DNS-based ingress traffic engineering lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file (or a bundled one, by name) and write traces,
    /// error series and decision logs.
    Simulate(simulate::SimulateArgs),
    /// Re-decide the DNS requests of a trace under other windows.
    Replay(replay::ReplayArgs),
    /// Associate clients with LDNS servers and fit their distributions.
    Analyze(analyze::AnalyzeArgs),
    /// Answer A queries for a zone over UDP until interrupted.
    Serve(serve::ServeArgs),
    /// List the bundled scenario files, or print one.
    Scenarios {
        name: Option<String>,
    },
}

/// Flags shared by the commands that write files.
#[derive(Debug, Args)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = "DNSITE_OUT", default_value = "dnsite-out")]
    out: PathBuf,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse().map_err(|e: dnsite_core::Error| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Replay(a) => replay::run(a),
        Command::Analyze(a) => analyze::run(a),
        Command::Serve(a) => serve::run(a),
        Command::Scenarios { name } => scenarios(name.as_deref()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(output::exit_code(&e))
        }
    }
}

fn scenarios(name: Option<&str>) -> anyhow::Result<()> {
    match name {
        None => {
            for (n, _) in dnsite_core::sim::BUNDLED {
                println!("{n}");
            }
        }
        Some(n) => match dnsite_core::sim::bundled(n) {
            Some(text) => print!("{text}"),
            None => return Err(Invalid(format!("no bundled scenario `{n}`")).into()),
        },
    }
    Ok(())
}
