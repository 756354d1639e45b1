//! `clockprobe` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clockprobe::scenario::{load_config, run_scenario, Overrides, ScenarioConfig, ScenarioName};
use clockprobe::Error;

#[derive(Parser)]
#[command(
    name = "clockprobe",
    version,
    about = "Dispersive probing of a cesium clock-state ensemble"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation scenario and write CSV outputs plus a manifest.
    Simulate {
        #[arg(value_parser = ["rabi-fig2", "rabi-fig3", "noise-fig4"])]
        scenario: String,
        #[command(flatten)]
        common: Common,
        /// Output directory (default: out/<scenario>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve for the second-color detuning that balances the two-color phase.
    Balance {
        /// Color A detuning from F=4 -> F'=5, MHz.
        #[arg(long, allow_negative_numbers = true)]
        delta45: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a Wigner 3j or 6j symbol exactly.
    Wigner {
        #[arg(value_parser = ["3j", "6j"])]
        symbol: String,
        /// Six angular momenta or projections, e.g. 3/2 or 2.
        #[arg(num_args = 6, allow_hyphen_values = true, required = true)]
        args: Vec<String>,
    },
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// TOML configuration or run manifest layered over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Refused(_) => 3,
        Error::Config(_) | Error::Parse(_) | Error::Domain(_) | Error::TomlDecode(_) => 2,
        _ => 1,
    }
}

fn load(name: ScenarioName, common: Option<&Common>) -> Result<ScenarioConfig, Error> {
    let Some(c) = common else {
        return load_config(name, None, &Overrides::default());
    };
    let text = c.config.as_ref().map(std::fs::read_to_string).transpose()?;
    load_config(
        name,
        text.as_deref(),
        &Overrides {
            seed: c.seed,
            reps: c.reps,
        },
    )
}

fn run(cli: Cli) -> Result<(), Error> {
    let (cfg, out) = match cli.command {
        Command::Simulate { scenario, common, out } => {
            let name: ScenarioName = scenario.parse()?;
            let out = out.unwrap_or_else(|| PathBuf::from("out").join(name.as_str()));
            (load(name, Some(&common))?, Some(out))
        }
        Command::Balance { delta45, common } => {
            let mut cfg = load(ScenarioName::Balance, Some(&common))?;
            if let Some(d) = delta45 {
                cfg.balance.delta45_mhz = d;
            }
            (cfg, None)
        }
        Command::Wigner { symbol, args } => {
            let mut cfg = load(ScenarioName::Wigner, None)?;
            cfg.wigner.symbol = symbol;
            cfg.wigner.args = args;
            (cfg, None)
        }
    };

    let report = run_scenario(&cfg, out.as_deref())?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for line in &report.lines {
        println!("{line}");
    }
    for f in &report.files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if let Error::NoRoot { diagnostic, .. } = &err {
                eprintln!("{diagnostic}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
