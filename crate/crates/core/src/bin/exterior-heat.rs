use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use exterior_heat::config::{Scenario, ScenarioConfig};
use exterior_heat::scenarios::{run_scenario, sweep, write_sweep, Axis};
use exterior_heat::Error;

/// Radial heat flow with absorption on exterior domains: preset runs and sweeps.
#[derive(Parser)]
#[command(name = "exterior-heat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory (overrides the config's `output` key; default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    cells: Option<usize>,

    /// Only print errors and the final status.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario described by a config file.
    Run { config: PathBuf },
    /// Run the cartesian product of one or more axes over a base config.
    Sweep {
        config: PathBuf,
        /// `key=v1,v2,...`; repeat for more axes.
        #[arg(long)]
        axis: Vec<String>,
    },
    /// Print the preset scenario keys.
    ListScenarios,
}

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Io(_) | Error::InvalidArgument(_) | Error::Geometry(_) => {
            EXIT_USAGE
        }
        _ => EXIT_FAIL,
    }
}

fn output_dir(cli_out: &Option<PathBuf>, cfg: &ScenarioConfig) -> PathBuf {
    cli_out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load(path: &PathBuf) -> Result<ScenarioConfig, Error> {
    ScenarioConfig::load(path).map_err(|e| match e {
        Error::Config { line, msg } => Error::Config {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

fn execute(cli: &Cli) -> Result<bool, Error> {
    match &cli.command {
        Command::ListScenarios => {
            let mut stdout = std::io::stdout().lock();
            for s in Scenario::ALL {
                // A closed pipe (`| head`) is not an error.
                if writeln!(stdout, "{:<20} {}", s.key(), s.description()).is_err() {
                    break;
                }
            }
            Ok(true)
        }
        Command::Run { config } => {
            let cfg = load(config)?;
            let dir = output_dir(&cli.out, &cfg);
            let outcome = run_scenario(&cfg)?;
            outcome.write_to(&dir)?;
            if !cli.quiet {
                for (k, v) in &outcome.metrics {
                    println!("{k} = {v}");
                }
                for c in &outcome.checks {
                    let tag = if c.passed { "pass" } else { "FAIL" };
                    println!("[{tag}] {}: {}", c.name, c.detail);
                }
            }
            for c in outcome.failed_checks() {
                eprintln!("assertion failed: {} ({})", c.name, c.detail);
            }
            println!(
                "{} {}: {}",
                cfg.scenario,
                dir.display(),
                if outcome.passed() { "pass" } else { "FAIL" }
            );
            Ok(outcome.passed())
        }
        Command::Sweep { config, axis } => {
            let cfg = load(config)?;
            let dir = output_dir(&cli.out, &cfg);
            let axes = axis
                .iter()
                .map(|a| a.parse::<Axis>())
                .collect::<Result<Vec<_>, _>>()?;
            let cells = sweep(&cfg, &axes, cli.cells)?;
            write_sweep(&cells, &dir)?;
            for (k, cell) in cells.iter().enumerate() {
                let label = if cell.label.is_empty() { "base" } else { &cell.label };
                match &cell.outcome {
                    Ok(o) => {
                        if !cli.quiet {
                            if let Some(c) = o.metric("classification") {
                                println!("{c}");
                            }
                        }
                        println!(
                            "cell {k} {label}: {}",
                            if o.passed() { "pass" } else { "FAIL" }
                        );
                    }
                    Err(e) => println!("cell {k} {label}: ERROR {e}"),
                }
            }
            Ok(cells.iter().all(|c| c.passed()))
        }
    }
}
