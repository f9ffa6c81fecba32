//! Command-line front end: every pipeline stage with reproducible,
//! machine-readable output. Exit codes: 0 success, 1 domain-level
//! negative (not allowable, failed verification), 2 usage errors.

mod cmds;
mod util;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use cmds::SystemSpec;
use util::{parse_format, CliError, Sink};

#[derive(Parser)]
#[command(
    name = "greedy-beta",
    version,
    about = "Greedy β-expansions with deleted digits: exact densities, interval trees and extension towers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SystemArgs {
    /// β: a named constant (golden, one_plus_sqrt2, sqrt<d>), a rational
    /// or decimal literal, or an exact triple p:q:d meaning p + q·√d
    #[arg(long)]
    beta: String,
    /// Comma-separated digit set in the same grammar; omit to use the
    /// complete classical digit set {0, …, ⌊β⌋}
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    digits: Vec<String>,
    /// Arithmetic backend: exact | float
    #[arg(long, default_value = "exact")]
    backend: String,
}

impl SystemArgs {
    fn spec(&self) -> SystemSpec {
        SystemSpec {
            beta_raw: self.beta.clone(),
            digits_raw: self.digits.clone(),
            backend_raw: self.backend.clone(),
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Output format: json | csv | dot (command-dependent)
    #[arg(long, default_value = "json")]
    format: String,
    /// Write to this file instead of stdout; CSV output also writes an
    /// exact JSON sidecar at <out>.json
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Allowability, the strict classification window, and the support case
    Check {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Orbit of a point with exact cycle detection
    Orbit {
        #[command(flatten)]
        sys: SystemArgs,
        /// The starting point (scalar grammar)
        #[arg(long)]
        x: String,
        /// Maximum number of steps
        #[arg(long, default_value_t = 100)]
        depth: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Greedy digit expansion of a point
    Expand {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long)]
        x: String,
        /// Number of digits
        #[arg(long, default_value_t = 20)]
        depth: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Evaluate a digit word (optionally with a repeating tail) at β
    Evaluate {
        #[command(flatten)]
        sys: SystemArgs,
        /// Comma-separated digit values
        #[arg(long, value_delimiter = ',')]
        word: Vec<String>,
        /// Comma-separated repeating tail digits
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        tail: Vec<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Level-count table, counting bounds and full-interval mass
    Kappa {
        #[command(flatten)]
        sys: SystemArgs,
        /// Number of levels (defaults to the level budget)
        #[arg(long)]
        depth: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Enumerate the non-full interval tree (exact endpoints)
    Levels {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, default_value_t = 8)]
        depth: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Stacked-rectangle extension: manifest, conservation, constants
    Tower {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, default_value_t = 12)]
        depth: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// The invariant density, exact or truncated with certified tails
    Density {
        #[command(flatten)]
        sys: SystemArgs,
        /// auto | closed | truncated
        #[arg(long, default_value = "auto")]
        mode: String,
        /// Truncation depth (only with --mode truncated)
        #[arg(long)]
        depth: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Full verification pass: lemmas, bounds, transfer fixed point
    Verify {
        #[command(flatten)]
        sys: SystemArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte-Carlo orbit statistics against the exact density
    Simulate {
        #[command(flatten)]
        sys: SystemArgs,
        #[arg(long, default_value_t = 1_000_000)]
        iterations: u64,
        #[arg(long, default_value_t = 64)]
        bins: usize,
        /// Seeds for independent runs
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        /// Fixed starting point (seeded uniform start when omitted)
        #[arg(long)]
        x0: Option<f64>,
        /// Worker threads for the seed sweep (defaults to the number of
        /// available execution units)
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Check { sys, output } => {
            let format = parse_format(&output.format).map_err(CliError::Usage)?;
            cmds::cmd_check(&sys.spec(), format, &Sink::new(output.out.clone()))
        }
        Command::Orbit {
            sys,
            x,
            depth,
            output,
        } => {
            let format = parse_format(&output.format).map_err(CliError::Usage)?;
            cmds::cmd_orbit(&sys.spec(), x, *depth, format, &Sink::new(output.out.clone()))
        }
        Command::Expand {
            sys,
            x,
            depth,
            output,
        } => {
            let format = parse_format(&output.format).map_err(CliError::Usage)?;
            cmds::cmd_expand(&sys.spec(), x, *depth, format, &Sink::new(output.out.clone()))
        }
        Command::Evaluate {
            sys,
            word,
            tail,
            output,
        } => {
            let format = parse_format(&output.format).map_err(CliError::Usage)?;
            cmds::cmd_evaluate(&sys.spec(), word, tail, format, &Sink::new(output.out.clone()))
        }
        Command::Kappa { sys, depth, output } => {
            let format = parse_format(&output.format).map_err(CliError::Usage)?;
            cmds::cmd_kappa(&sys.spec(), *depth, format, &Sink::new(output.out.clone()))
        }
        Command::Levels { sys, depth, output } => {
            let format = parse_format(&output.format).map_err(CliError::Usage)?;
            cmds::cmd_levels(&sys.spec(), *depth, format, &Sink::new(output.out.clone()))
        }
        Command::Tower { sys, depth, output } => {
            let format = parse_format(&output.format).map_err(CliError::Usage)?;
            cmds::cmd_tower(&sys.spec(), *depth, format, &Sink::new(output.out.clone()))
        }
        Command::Density {
            sys,
            mode,
            depth,
            output,
        } => {
            let format = parse_format(&output.format).map_err(CliError::Usage)?;
            cmds::cmd_density(
                &sys.spec(),
                mode,
                *depth,
                format,
                &Sink::new(output.out.clone()),
            )
        }
        Command::Verify { sys, output } => {
            let format = parse_format(&output.format).map_err(CliError::Usage)?;
            cmds::cmd_verify(&sys.spec(), format, &Sink::new(output.out.clone()))
        }
        Command::Simulate {
            sys,
            iterations,
            bins,
            seeds,
            x0,
            jobs,
            output,
        } => {
            let format = parse_format(&output.format).map_err(CliError::Usage)?;
            let jobs = jobs.unwrap_or_else(|| {
                std::thread::available_parallelism()
                    .map(|n| n.get())
                    .unwrap_or(1)
            });
            cmds::cmd_simulate(
                &sys.spec(),
                *iterations,
                *bins,
                seeds,
                *x0,
                jobs,
                format,
                &Sink::new(output.out.clone()),
            )
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(CliError::Usage(msg)) => {
            eprintln!(
                "{}",
                serde_json::json!({"error": {"kind": "usage", "message": msg}})
            );
            std::process::exit(2);
        }
        Err(CliError::Domain(msg)) => {
            eprintln!(
                "{}",
                serde_json::json!({"error": {"kind": "domain", "message": msg}})
            );
            std::process::exit(1);
        }
    }
}
