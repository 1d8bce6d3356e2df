//! `dirac-mech`: verify, compose, simulate and self-test Lagrange-Dirac
//! systems described by JSON configuration files.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dirac_mech::integrator::Scheme;
use dirac_mech::systems::{self, Params};

use config::{Config, Overrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Usage(_) | CliError::Schema(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "dirac-mech", version, about = "Dirac structures and Lagrange-Dirac simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the interconnected Dirac structure at sampled points.
    Verify {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Integrate a system and write its trajectory as CSV.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long = "t-final")]
        t_final: Option<f64>,
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Newton tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Print the interconnected structure at one point.
    Compose {
        config: PathBuf,
        /// `q` or `q,p`, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Option<Vec<f64>>,
    },
    /// Run the randomized property suites.
    Selftest {
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
        /// Multiplier on every suite's case count.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Write a config file for a builtin system.
    Export {
        name: String,
        /// `name=value`, repeatable.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
        /// Refer to the builtin by name instead of writing its terms out.
        #[arg(long)]
        by_name: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the builtin systems and their parameters.
    List,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected name=value")?;
    let v: f64 = v.parse().map_err(|e| format!("{v}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn list() -> String {
    let mut out = String::new();
    for t in systems::list_builtins() {
        out.push_str(&format!(
            "{} (n = {}, constraint rows = {}): {}\n",
            t.name, t.config_dim, t.constraint_rows, t.description
        ));
        for p in t.params {
            out.push_str(&format!("    {} = {} ({:?}) {}\n", p.name, p.default, p.bound, p.doc));
        }
    }
    out
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Verify { config, seed } => {
            let cfg = Config::load(&config)?;
            print!("{}", commands::verify(&cfg, seed)?);
        }
        Command::Simulate {
            config,
            h,
            t_final,
            scheme,
            out,
            seed,
            tol,
        } => {
            let cfg = Config::load(&config)?;
            let o = Overrides {
                h,
                t_final,
                scheme,
                out,
                seed,
                tol,
            };
            let outcome = commands::simulate(&cfg, &o)?;
            if outcome.csv_on_stdout {
                eprintln!("{}", outcome.summary);
            } else {
                println!("{}", outcome.summary);
            }
        }
        Command::Compose { config, point } => {
            let cfg = Config::load(&config)?;
            print!("{}", commands::compose(&cfg, point.as_deref())?);
        }
        Command::Selftest { seed, scale } => {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(CliError::Usage("--scale must be positive".into()));
            }
            print!("{}", commands::selftest_run(seed, scale)?);
        }
        Command::Export {
            name,
            params,
            by_name,
            out,
        } => {
            let params: Params = params.into_iter().collect();
            let cfg = commands::export(&name, &params, by_name)?;
            let text = serde_json::to_string_pretty(&cfg).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?,
                None => print!("{text}"),
            }
        }
        Command::List => print!("{}", list()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dirac-mech: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
