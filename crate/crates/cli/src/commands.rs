//! `validate`, `simulate` and `classify`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Result};
use clap::ValueEnum;
use memkernel::evolution::{
    closed_form_lambdas, laplace_domain_solve, trajectory_cptp_scan, volterra_solve,
    InversionMethod,
};
use memkernel::kernel_families::{blp_sufficient_check, kernel_time_domain};
use memkernel::laplace_tools::{
    DEFAULT_GAVER_WYNN_ORDER, DEFAULT_STEHFEST_ORDER, DEFAULT_TALBOT_ORDER,
};
use memkernel::markovianity::{
    blp_condition_check, blp_measure, cp_divisibility_check, local_rates_from_f,
    local_rates_from_lambdas, LocalRates,
};
use memkernel::{Error, KernelSpec, TimeGrid, TrajectorySet, Verdict};

use crate::output::{trajectory_path, Format, TrajectoryTable};
use crate::report::{
    admissibility, verdict_line, Classification, RouteDiscrepancy, RunReport, TrajectoryEntry,
    REPORT_FILE,
};
use crate::spec_file::{GridSection, KernelSpecFile, Output};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INADMISSIBLE: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;

/// Options shared by every subcommand.
#[derive(Clone, Debug)]
pub struct Context {
    pub out: PathBuf,
    pub format: Format,
    pub grid: Option<GridSection>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Route {
    Closed,
    Volterra,
    Laplace,
    All,
}

impl Route {
    fn expand(self) -> Vec<Route> {
        match self {
            Route::All => vec![Route::Closed, Route::Volterra, Route::Laplace],
            r => vec![r],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Route::Closed => "closed",
            Route::Volterra => "volterra",
            Route::Laplace => "laplace",
            Route::All => "all",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Inversion {
    #[default]
    Stehfest,
    GaverWynn,
    Talbot,
}

impl Inversion {
    pub fn method(self) -> InversionMethod {
        match self {
            Inversion::Stehfest => InversionMethod::Stehfest {
                order: DEFAULT_STEHFEST_ORDER,
            },
            Inversion::GaverWynn => InversionMethod::GaverWynn {
                order: DEFAULT_GAVER_WYNN_ORDER,
            },
            Inversion::Talbot => InversionMethod::Talbot {
                order: DEFAULT_TALBOT_ORDER,
            },
        }
    }
}

/// True for errors that mean the numerics failed rather than the input.
pub fn is_solver_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::BlowUp { .. }
            | Error::Inversion { .. }
            | Error::QuadratureNoConvergence { .. }
            | Error::Pole { .. }
    )
}

struct Loaded {
    file: KernelSpecFile,
    spec: KernelSpec,
    grid: TimeGrid,
}

fn load(ctx: &Context, path: &Path) -> Result<Loaded> {
    let file = KernelSpecFile::load(path)?;
    let spec = file.build()?;
    let grid = file.grid(ctx.grid)?;
    Ok(Loaded { file, spec, grid })
}

/// Fills the kernel echo and admissibility sections and prints the verdicts.
fn assess(report: &mut RunReport, loaded: &Loaded) -> Result<bool> {
    let (decisive, info) = admissibility(&loaded.spec, &loaded.grid)?;
    let admissible = decisive.iter().all(|v| v.passed);
    for v in &decisive {
        println!("{}", verdict_line(v));
    }
    println!(
        "{}",
        if admissible {
            "kernel is admissible"
        } else {
            "kernel is NOT admissible"
        }
    );
    report.spec = Some(loaded.file.clone());
    report.grid = Some(GridSection {
        t_max: loaded.grid.t_max,
        n_steps: loaded.grid.n_steps,
    });
    report.admissible = Some(admissible);
    if loaded.file.wants(Output::Verdicts) {
        report.admissibility = decisive;
        report.diagnostics = info;
    }
    Ok(admissible)
}

fn finish(ctx: &Context, mut report: RunReport, started: Instant, code: u8) -> Result<u8> {
    report.exit_code = code;
    report.wall_time_s = started.elapsed().as_secs_f64();
    report.write(&ctx.out)?;
    println!("report: {}", ctx.out.join(REPORT_FILE).display());
    Ok(code)
}

pub fn validate(ctx: &Context, path: &Path) -> Result<u8> {
    let started = Instant::now();
    let loaded = load(ctx, path)?;
    let mut report = RunReport::new("validate");
    let admissible = assess(&mut report, &loaded)?;
    finish(
        ctx,
        report,
        started,
        if admissible {
            EXIT_OK
        } else {
            EXIT_INADMISSIBLE
        },
    )
}

/// Writes one route's trajectory (and rates when requested) and records it.
pub fn emit_trajectory(
    ctx: &Context,
    report: &mut RunReport,
    traj: &TrajectorySet,
    cumulative: &[f64],
    rates: Option<&LocalRates>,
) -> Result<()> {
    let route = traj.provenance.name();
    let path = trajectory_path(&ctx.out, route, ctx.format);
    TrajectoryTable {
        traj,
        cumulative,
        rates,
    }
    .write(&path, ctx.format)?;
    let cptp = trajectory_cptp_scan(traj);
    println!("{route:>8}: {}", path.display());
    println!("          {}", verdict_line(&cptp));
    let file = path
        .file_name()
        .expect("file path")
        .to_string_lossy()
        .into_owned();
    report.trajectories.push(TrajectoryEntry {
        route: route.into(),
        file,
        cptp,
    });
    report
        .notes
        .extend(traj.notes.iter().map(|n| format!("{route}: {n}")));
    if let Some(r) = rates {
        report
            .notes
            .extend(r.notes.iter().map(|n| format!("{route} rates: {n}")));
    }
    Ok(())
}

fn solve(
    spec: &KernelSpec,
    grid: &TimeGrid,
    route: Route,
    inversion: Inversion,
) -> memkernel::Result<TrajectorySet> {
    match route {
        Route::Closed => Ok(closed_form_lambdas(spec, grid)),
        Route::Volterra => volterra_solve(&kernel_time_domain(spec)?, grid),
        Route::Laplace => laplace_domain_solve(spec, grid, inversion.method()),
        Route::All => unreachable!("expanded before solving"),
    }
}

pub fn simulate(
    ctx: &Context,
    path: &Path,
    route: Route,
    inversion: Inversion,
    force: bool,
) -> Result<u8> {
    let started = Instant::now();
    let loaded = load(ctx, path)?;
    let mut report = RunReport::new(format!("simulate --route {}", route.name()));
    let admissible = assess(&mut report, &loaded)?;
    if !admissible && !force {
        eprintln!("refusing to simulate an inadmissible kernel; pass --force to override");
        return finish(ctx, report, started, EXIT_INADMISSIBLE);
    }
    if !admissible {
        report
            .notes
            .push("simulated with --force despite failed admissibility checks".into());
    }
    let Loaded { file, spec, grid } = &loaded;
    let cumulative = closed_form_lambdas(spec, grid)
        .cumulative
        .expect("closed form carries F");
    let want_table = [Output::Lambdas, Output::Probs, Output::Rates]
        .iter()
        .any(|&o| file.wants(o));
    let mut solved: Vec<TrajectorySet> = Vec::new();
    let mut code = if admissible {
        EXIT_OK
    } else {
        EXIT_INADMISSIBLE
    };
    for r in route.expand() {
        match solve(spec, grid, r, inversion) {
            Ok(traj) => {
                if want_table {
                    let rates = file.wants(Output::Rates).then(|| match r {
                        Route::Closed => local_rates_from_f(spec, grid),
                        _ => local_rates_from_lambdas(&traj),
                    });
                    emit_trajectory(ctx, &mut report, &traj, &cumulative, rates.as_ref())?;
                }
                solved.push(traj);
            }
            Err(e @ Error::Unsupported(_)) if route == Route::All => {
                println!("{:>8}: skipped ({e})", r.name());
                report.notes.push(format!("{}: skipped, {e}", r.name()));
            }
            Err(e) if is_solver_failure(&e) => {
                eprintln!("{}: solver failure: {e}", r.name());
                report
                    .notes
                    .push(format!("{}: solver failure: {e}", r.name()));
                code = EXIT_SOLVER;
            }
            Err(e) => bail!(e),
        }
    }
    for i in 0..solved.len() {
        for j in i + 1..solved.len() {
            let (a, b) = (&solved[i], &solved[j]);
            let d = a.max_lambda_difference(b)?;
            println!(
                "max |lambda_{} - lambda_{}| = {d:.3e}",
                a.provenance.name(),
                b.provenance.name()
            );
            report.cross_route.push(RouteDiscrepancy {
                routes: [a.provenance.name().into(), b.provenance.name().into()],
                max_lambda_difference: d,
            });
        }
    }
    finish(ctx, report, started, code)
}

/// CPTP scan, CP-divisibility, BLP condition and measure on the closed-form trajectory.
pub fn classification(
    spec: &KernelSpec,
    grid: &TimeGrid,
    traj: &TrajectorySet,
    probes: usize,
    seed: u64,
) -> Result<Classification> {
    let cptp = trajectory_cptp_scan(traj);
    let cp = cp_divisibility_check(spec, grid);
    let blp = blp_condition_check(traj)?;
    let measure = blp_measure(traj, probes, seed)?;
    let sufficient = blp_sufficient_check(spec, grid)?;
    let at = |v: &Verdict| v.first_violation.as_ref().and_then(|x| x.at);
    Ok(Classification {
        cptp: cptp.passed,
        cptp_broken_at: at(&cptp),
        cp_divisible: cp.passed,
        cp_divisible_until: at(&cp),
        blp_markovian: blp.passed,
        blp_measure: measure.measure,
        blp_probes: probes,
        blp_seed: seed,
        blp_maximizing_probe: measure.probe_pairs[measure.argmax].0,
        verdicts: vec![cptp, cp, blp, sufficient],
    })
}

pub fn print_classification(c: &Classification, grid: &TimeGrid) {
    let when = |t: Option<f64>| {
        t.map(|t| format!("at t = {t:.6}"))
            .unwrap_or_else(|| "off-grid".into())
    };
    let yes_no = |ok: bool, t: Option<f64>, what: &str| {
        if ok {
            format!("yes on [0, {}]", grid.t_max)
        } else {
            format!("no, {what} {}", when(t))
        }
    };
    println!(
        "CPTP:          {}",
        yes_no(c.cptp, c.cptp_broken_at, "positivity breaks")
    );
    println!(
        "CP-divisible:  {}",
        yes_no(c.cp_divisible, c.cp_divisible_until, "breaks")
    );
    println!(
        "BLP-Markovian: {} (BLP measure {:.6e} over {} probes, seed {})",
        if c.blp_markovian { "yes" } else { "no" },
        c.blp_measure,
        c.blp_probes,
        c.blp_seed
    );
}

pub fn classify(ctx: &Context, path: &Path, probes: usize, seed: u64) -> Result<u8> {
    let started = Instant::now();
    let loaded = load(ctx, path)?;
    let mut report = RunReport::new("classify");
    let admissible = assess(&mut report, &loaded)?;
    if !admissible {
        report
            .notes
            .push("classified despite failed admissibility checks".into());
    }
    let Loaded { spec, grid, .. } = &loaded;
    let traj = closed_form_lambdas(spec, grid);
    let cumulative = traj.cumulative.clone().expect("closed form carries F");
    let rates = local_rates_from_f(spec, grid);
    emit_trajectory(ctx, &mut report, &traj, &cumulative, Some(&rates))?;
    let c = classification(spec, grid, &traj, probes, seed)?;
    print_classification(&c, grid);
    report.classification = Some(c);
    finish(
        ctx,
        report,
        started,
        if admissible {
            EXIT_OK
        } else {
            EXIT_INADMISSIBLE
        },
    )
}
