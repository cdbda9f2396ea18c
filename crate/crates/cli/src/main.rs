//! `wickchaos` scenario runner.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wickchaos::suites::Suite;
use wickchaos::WeightSpec;

mod commands;
mod config;

use commands::{Failure, McSuite, Outcome};
use config::{BasisConfig, McConfig, Scenario};

#[derive(Parser, Debug)]
#[command(name = "wickchaos", version, about = "Chaos expansion solvers and verification suites")]
struct Cli {
    /// Worker threads for the parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Orthogonal polynomial triangle of one law.
    Basis {
        /// Distribution JSON file, e.g. {"kind":"gaussian"}.
        #[arg(long, conflicts_with = "config")]
        dist: Option<PathBuf>,
        #[arg(long, requires = "dist")]
        degree: Option<usize>,
        /// Scenario file of kind `basis`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coefficient-level identity suites.
    Verify {
        #[arg(long, value_parser = parse_suite)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Linear Wick SDE; writes the t,multiindex,coefficient table.
    Sde {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parabolic SPDE on a periodic grid; writes the binary field layout.
    Parabolic {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stationary problem; writes the coefficient table.
    Elliptic {
        #[arg(long)]
        config: PathBuf,
        /// Weight sequence JSON, overriding the config.
        #[arg(long)]
        weights: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo oracle suites.
    Mc {
        #[arg(long, value_enum)]
        suite: McSuite,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scenario file of kind `mc`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Any scenario file, dispatched on its `kind`.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Suite for `mc` scenarios.
        #[arg(long, value_enum, default_value = "gbm")]
        suite: McSuite,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: wickchaos::Error| e.to_string())
}

fn scenario(s: Scenario, out: Option<&Path>, suite: McSuite, samples: usize, seed: u64) -> Outcome {
    match s {
        Scenario::Basis(c) => commands::basis(&c, out),
        Scenario::Sde(c) => commands::sde(&c, out),
        Scenario::Parabolic(c) => commands::parabolic(&c, out),
        Scenario::Elliptic(c) => commands::elliptic(&c, None, out),
        Scenario::Mc(c) => report_to(commands::mc(suite, &c, samples, seed), out),
    }
}

/// Also writes the report to `out` for commands whose only artifact is the report.
fn report_to(r: Outcome, out: Option<&Path>) -> Outcome {
    if let Some(out) = out {
        let v = match &r {
            Ok(v) | Err(Failure::Verification(v)) => v,
            Err(_) => return r,
        };
        commands::write_json(out, v)?;
    }
    r
}

fn execute(cli: Cli) -> Outcome {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(e.to_string()))?;
    }
    match cli.command {
        Command::Basis { dist, degree, config, out } => {
            let cfg = match (dist, degree, config) {
                (Some(d), Some(n), None) => {
                    let v = commands::read_json(&d)?;
                    let distribution = serde_path_to_error::deserialize(v).map_err(|e| Failure::Config {
                        path: Some(format!("{}: {}", d.display(), e.path())),
                        message: e.into_inner().to_string(),
                    })?;
                    BasisConfig { distribution, degree: n }
                }
                (None, None, Some(c)) => match commands::load(&c, "basis")? {
                    Scenario::Basis(b) => b,
                    _ => unreachable!("kind checked"),
                },
                _ => return Err(Failure::config("basis needs --dist with --degree, or --config")),
            };
            commands::basis(&cfg, out.as_deref())
        }
        Command::Verify { suite, seed, trials, out } => report_to(commands::verify(suite, trials, seed), out.as_deref()),
        Command::Sde { config, out } => scenario(commands::load(&config, "sde")?, out.as_deref(), McSuite::Gbm, 0, 0),
        Command::Parabolic { config, out } => {
            scenario(commands::load(&config, "parabolic")?, out.as_deref(), McSuite::Gbm, 0, 0)
        }
        Command::Elliptic { config, weights, out } => {
            let w = match weights {
                Some(w) => {
                    let v: serde_json::Value = serde_json::from_str(&w)
                        .map_err(|e| Failure::Config { message: e.to_string(), path: Some("--weights".into()) })?;
                    let spec: WeightSpec = serde_path_to_error::deserialize(v).map_err(|e| Failure::Config {
                        path: Some(format!("--weights: {}", e.path())),
                        message: e.into_inner().to_string(),
                    })?;
                    Some(spec)
                }
                None => None,
            };
            match commands::load(&config, "elliptic")? {
                Scenario::Elliptic(c) => commands::elliptic(&c, w, out.as_deref()),
                _ => unreachable!("kind checked"),
            }
        }
        Command::Mc { suite, samples, seed, config, out } => {
            let cfg = match config {
                Some(c) => match commands::load(&c, "mc")? {
                    Scenario::Mc(m) => m,
                    _ => unreachable!("kind checked"),
                },
                None => McConfig::default(),
            };
            report_to(commands::mc(suite, &cfg, samples, seed), out.as_deref())
        }
        Command::Run { config, out, suite, samples, seed } => {
            let s = commands::parse_scenario(commands::read_json(&config)?)?;
            scenario(s, out.as_deref(), suite, samples, seed)
        }
    }
}

fn print_json(v: &serde_json::Value) {
    // A closed pipe downstream is not an error of the run.
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(v).expect("json"));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(report) => {
            print_json(&report);
            ExitCode::SUCCESS
        }
        Err(f) => {
            if let Failure::Verification(report) = &f {
                print_json(report);
            }
            eprintln!("{}", serde_json::to_string(&f.to_json()).expect("json"));
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
