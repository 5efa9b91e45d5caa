//! `memkernel`: validate, simulate and classify memory-kernel master equations
//! for random-unitary qubit evolution.

mod commands;
mod examples;
mod invlaplace;
mod output;
mod report;
mod spec_file;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use memkernel::markovianity::{DEFAULT_PROBES, DEFAULT_SEED};

use commands::{is_solver_failure, Context, Inversion, Route, EXIT_SOLVER, EXIT_USAGE};
use output::Format;
use spec_file::{parse_grid, GridSection};

#[derive(Debug, Parser)]
#[command(name = "memkernel", version, about)]
struct Cli {
    /// Directory receiving trajectories and the run report.
    #[arg(
        long,
        global = true,
        env = "MEMKERNEL_OUT_DIR",
        default_value = "memkernel-out"
    )]
    out: PathBuf,

    /// Trajectory file format (also the stdout format of `invlaplace`).
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Time grid as `t_max:n_steps`, overriding the kernel-spec file.
    #[arg(long, global = true, value_parser = parse_grid)]
    grid: Option<GridSection>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every admissibility check on a kernel spec.
    Validate { spec: PathBuf },
    /// Solve for the dynamical map by one or all routes.
    Simulate {
        spec: PathBuf,
        #[arg(long, value_enum, default_value_t = Route::All)]
        route: Route,
        /// Inverter used by the Laplace route.
        #[arg(long, value_enum, default_value_t = Inversion::default())]
        inversion: Inversion,
        /// Simulate even when the kernel is not admissible.
        #[arg(long)]
        force: bool,
    },
    /// CPTP, CP-divisibility and BLP classification.
    Classify {
        spec: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PROBES)]
        probes: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Regenerate a worked example and compare it with its closed forms.
    Example {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=4))]
        n: u8,
        #[arg(long, default_value_t = DEFAULT_PROBES)]
        probes: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Invert a rational Laplace transform N(s)/D(s).
    Invlaplace {
        /// Numerator coefficients, highest power first.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        num: Vec<f64>,
        /// Denominator coefficients, highest power first.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        den: Vec<f64>,
        /// Comma-separated sample times.
        #[arg(long = "t", value_delimiter = ',', required = true)]
        times: Vec<f64>,
        #[arg(long, value_enum, default_value_t = invlaplace::Method::default())]
        method: invlaplace::Method,
    },
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let ctx = Context {
        out: cli.out,
        format: cli.format,
        grid: cli.grid,
    };
    match cli.command {
        Command::Validate { spec } => commands::validate(&ctx, &spec),
        Command::Simulate {
            spec,
            route,
            inversion,
            force,
        } => commands::simulate(&ctx, &spec, route, inversion, force),
        Command::Classify { spec, probes, seed } => commands::classify(&ctx, &spec, probes, seed),
        Command::Example { n, probes, seed } => examples::run(&ctx, n, probes, seed),
        Command::Invlaplace {
            num,
            den,
            times,
            method,
        } => invlaplace::run(&num, &den, &times, method, ctx.format),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let solver = err
        .chain()
        .filter_map(|e| e.downcast_ref::<memkernel::Error>())
        .any(is_solver_failure);
    if solver {
        EXIT_SOLVER
    } else {
        EXIT_USAGE
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
