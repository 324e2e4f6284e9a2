//! `spinboson`: scenario runner for the time-dependent spin-boson model.

mod commands;
mod config;
mod expr;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};

use commands::{describe_files, Context, Outcome};
use config::{Config, FIG1_PRESET};

#[derive(Parser)]
#[command(name = "spinboson", version, about = "Spectra, Dyson maps and transitions of the time-dependent spin-boson model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Config file (`[section]` blocks of `key = expression`).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in configuration, used when no `--config` is given.
    #[arg(long, global = true)]
    preset: Option<Preset>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    out: PathBuf,
    /// Override `[hilbert] cutoff`; the guard band becomes a quarter of it.
    #[arg(long, global = true, value_name = "N")]
    cutoff: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,
    /// Also write an SVG plot next to every CSV.
    #[arg(long, global = true)]
    svg: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Fig1,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Check the Hermiticity conditions, the Dyson equation and the spectra on a grid.
    Verify,
    /// Closed-form levels and second-order corrections over time.
    Spectrum,
    /// Perturbative levels against exact diagonalisation, with matrix elements.
    Perturb,
    /// Transition amplitude for the delta-pulse protocol, optionally swept over t2.
    Pulse,
    /// Transition amplitude for smooth quenches of the boundary parameter.
    Quench,
    /// Sideband amplitude under periodic driving, swept over the drive frequency.
    Periodic,
    /// Propagate a dressed state under the Hermitian partner.
    Evolve,
    /// Level diagram from the built-in example (spectrum with the fig1 preset and SVG).
    Fig1,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Spectrum => "spectrum",
            Command::Perturb => "perturb",
            Command::Pulse => "pulse",
            Command::Quench => "quench",
            Command::Periodic => "periodic",
            Command::Evolve => "evolve",
            Command::Fig1 => "fig1",
        }
    }
}

fn load(cli: &Cli) -> Result<Config> {
    let preset = match (cli.preset, cli.command) {
        (Some(p), _) => Some(p),
        (None, Command::Fig1) => Some(Preset::Fig1),
        _ => None,
    };
    let mut cfg = match (&cli.config, preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Config::parse(&text, &path.display().to_string())?
        }
        (None, Some(Preset::Fig1)) => Config::parse(FIG1_PRESET, "preset fig1")?,
        (None, None) => bail!("no configuration: pass --config PATH or --preset fig1"),
    };
    if let Some(n) = cli.cutoff {
        cfg.set("hilbert", "cutoff", &n.to_string());
        cfg.set("hilbert", "guard_band", &(n / 4).to_string());
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Outcome> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global().context("configuring the thread pool")?;
    }
    let cfg = load(cli)?;
    let svg = cli.svg || cli.command == Command::Fig1 || cfg.count("output", "svg", Some(0))? != 0;
    let ctx = Context { cfg, out: cli.out.clone(), svg };
    match cli.command {
        Command::Verify => commands::verify(&ctx),
        Command::Spectrum => commands::spectrum(&ctx),
        Command::Perturb => commands::perturb(&ctx),
        Command::Pulse => commands::pulse(&ctx),
        Command::Quench => commands::quench(&ctx),
        Command::Periodic => commands::periodic(&ctx),
        Command::Evolve => commands::evolve(&ctx),
        Command::Fig1 => commands::fig1(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            if let Some(text) = &outcome.stdout {
                print!("{text}");
            } else {
                println!("{}: wrote {}", cli.command.name(), describe_files(&outcome.files, &cli.out));
            }
            if let Some(m) = &outcome.message {
                eprintln!("{m}");
            }
            ExitCode::from(outcome.exit_code)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
