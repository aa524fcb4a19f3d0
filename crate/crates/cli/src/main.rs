use std::path::PathBuf;
use std::process::ExitCode;

use casimir_lab_cli::config::{parse_config, read_raw, resolve, Preset};
use casimir_lab_cli::output::{summary_text, write_artifacts};
use casimir_lab_cli::presets::{plan, run_preset};
use clap::{Parser, Subcommand};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "casimir-lab", version, about = "Hamiltonian flows, Casimir invariants and conservation diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset and write series.csv and summary.json.
    Run {
        preset: String,
        /// JSON configuration file; its `preset` field must match.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a key, e.g. `--set dt=0.005` or `--set initial.c=2`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// List the available presets.
    ListPresets,
    /// Check a configuration file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::ListPresets => {
            for p in Preset::ALL {
                println!("{:<16} {}", p.name(), p.description());
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config, overrides } => {
            let checked = read_raw(&config, &overrides)
                .and_then(resolve)
                .map_err(|e| e.to_string())
                .and_then(|cfg| plan(&cfg).map(|_| cfg).map_err(|e| e.to_string()));
            match checked {
                Ok(cfg) => {
                    println!("{}: ok (preset {}, {} steps)", config.display(), cfg.preset, cfg.steps());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        }
        Command::Run { preset, config, overrides } => {
            let cfg = match parse_config(&preset, config.as_deref(), &overrides) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let report = match run_preset(&cfg) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            print!("{}", summary_text(&report));
            match write_artifacts(&report) {
                Ok(dir) => println!("wrote {}", dir.display()),
                Err(e) => {
                    eprintln!("error: cannot write output: {e}");
                    return ExitCode::from(EXIT_IO);
                }
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CHECK_FAILED)
            }
        }
    }
}
