//! `crossrsa`: train, extract, score and compare from the command line.
//!
//! Exit status: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure (degenerate RDMs, divergence).

mod analysis;
mod args;
mod config;
mod error;
mod pipeline;
mod report;
mod svg;
mod table;

use clap::Parser;

use args::{Cli, Command};
use error::Result;

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.config.as_deref().map(config::load).transpose()?;
    let name = cli.command.name();
    let section = cfg.as_ref().and_then(|c| c.get(name));
    match cli.command {
        Command::Train(a) => pipeline::train(&config::merge(a, section, name)?),
        Command::Extract(a) => pipeline::extract(&config::merge(a, section, name)?),
        Command::Score(a) => pipeline::score(&config::merge(a, section, name)?),
        Command::Ceiling(a) => pipeline::ceiling(&config::merge(a, section, name)?),
        Command::Compare(a) => analysis::compare(&config::merge(a, section, name)?),
        Command::Stimcontrol(a) => analysis::stimcontrol(&config::merge(a, section, name)?),
        Command::Report(a) => report::report(&config::merge(a, section, name)?),
        Command::Synth(a) => pipeline::synth(&config::merge(a, section, name)?),
    }
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
