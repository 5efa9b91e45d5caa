//! Golden reproductions of the four worked examples. Each run regenerates the
//! λ, p and γ curves and compares them with the printed closed forms.

use std::collections::BTreeMap;
use std::time::Instant;

use anyhow::Result;
use memkernel::evolution::{closed_form_lambdas, convex_semigroup_mixture, volterra_solve};
use memkernel::kernel_families::kernel_time_domain;
use memkernel::markovianity::{local_rates_from_f, local_rates_from_lambdas, LocalRates};
use memkernel::TrajectorySet;

use crate::commands::{
    classification, emit_trajectory, print_classification, Context, EXIT_OK, EXIT_SOLVER,
};
use crate::report::{admissibility, verdict_line, GoldenCheck, RunReport, REPORT_FILE};
use crate::spec_file::{AEntry, FamilyName, GridSection, KernelSpecFile};

pub const GOLDEN_TOLERANCE: f64 = 1e-6;
pub const VOLTERRA_TOLERANCE: f64 = 1e-4;

/// Printed closed forms of one example at a single time.
struct Curves {
    lambda: [f64; 3],
    p: [f64; 4],
    gamma: [f64; 3],
}

type Golden = Box<dyn Fn(f64) -> Curves>;

fn spec_file(
    family: FamilyName,
    params: &[(&str, f64)],
    a: [f64; 3],
    grid: GridSection,
) -> KernelSpecFile {
    KernelSpecFile {
        family,
        params: params
            .iter()
            .map(|&(k, v)| (k.to_string(), v))
            .collect::<BTreeMap<_, _>>(),
        a: a.iter().map(|&x| AEntry::from_value(x)).collect(),
        grid: Some(grid),
        outputs: None,
        tabulated: None,
    }
}

/// Curves written in terms of `f` and `F` for a family without a bespoke printed form.
fn from_f(
    a: [f64; 3],
    f: impl Fn(f64) -> f64 + 'static,
    big_f: impl Fn(f64) -> f64 + 'static,
) -> Golden {
    let inv = a.map(|x| 1.0 / x);
    Box::new(move |t| {
        let x = big_f(t);
        let pk: [f64; 3] =
            std::array::from_fn(|k| 0.25 * (inv[(k + 1) % 3] + inv[(k + 2) % 3] - inv[k]) * x);
        let d = a.map(|ak| {
            if ak.is_infinite() {
                0.0
            } else {
                1.0 / (ak - x)
            }
        });
        Curves {
            lambda: inv.map(|i| 1.0 - i * x),
            p: [1.0 - pk.iter().sum::<f64>(), pk[0], pk[1], pk[2]],
            gamma: std::array::from_fn(|k| 0.25 * f(t) * (d[(k + 1) % 3] + d[(k + 2) % 3] - d[k])),
        }
    })
}

/// Spec and printed closed forms for example `n` with its default parameters.
fn example(n: u8, grid: GridSection) -> (KernelSpecFile, Golden) {
    match n {
        1 => {
            let (z, a) = (1.0_f64, 1.0_f64);
            let file = spec_file(FamilyName::Exponential, &[("z", z)], [a; 3], grid);
            let golden: Golden = Box::new(move |t| {
                let e = (-z * t).exp();
                let q = 0.25 * (1.0 - e) / (z * a);
                Curves {
                    lambda: [1.0 - (1.0 - e) / (z * a); 3],
                    p: [1.0 - 3.0 * q, q, q, q],
                    gamma: [0.25 * z * e / (z * a - 1.0 + e); 3],
                }
            });
            (file, golden)
        }
        2 => {
            let c = 1.0_f64;
            let file = spec_file(
                FamilyName::Exponential,
                &[("z", 2.0 * c)],
                [1.0 / c, 1.0 / c, 0.5 / c],
                grid,
            );
            let golden: Golden = Box::new(move |t| {
                let e = (-2.0 * c * t).exp();
                Curves {
                    lambda: [0.5 * (1.0 + e), 0.5 * (1.0 + e), e],
                    p: [0.5 * (1.0 + e), 0.25 * (1.0 - e), 0.25 * (1.0 - e), 0.0],
                    gamma: [0.5 * c, 0.5 * c, -0.5 * c * (c * t).tanh()],
                }
            });
            (file, golden)
        }
        3 => {
            let (c1, c2, a) = (1.0_f64, 2.0_f64, [1.0; 3]);
            let file = spec_file(
                FamilyName::BiExponential,
                &[("c1", c1), ("c2", c2)],
                a,
                grid,
            );
            let f = move |t: f64| ((-c1 * t).exp() - (-c2 * t).exp()) / (c2 - c1);
            let big_f = move |t: f64| {
                ((1.0 - (-c1 * t).exp()) / c1 - (1.0 - (-c2 * t).exp()) / c2) / (c2 - c1)
            };
            (file, from_f(a, f, big_f))
        }
        4 => {
            let omega = 1.0_f64;
            let a1 = 1.0 / (omega * omega);
            let file = spec_file(
                FamilyName::Sinusoidal,
                &[("omega", omega)],
                [a1, a1, f64::INFINITY],
                grid,
            );
            let golden: Golden = Box::new(move |t| {
                let c = (omega * t).cos();
                Curves {
                    lambda: [c, c, 1.0],
                    p: [0.5 * (1.0 + c), 0.0, 0.0, 0.5 * (1.0 - c)],
                    gamma: [0.0, 0.0, 0.5 * omega * (omega * t).tan()],
                }
            });
            (file, golden)
        }
        _ => unreachable!("example number validated by the argument parser"),
    }
}

fn check(name: &str, max_error: f64, tolerance: f64) -> GoldenCheck {
    GoldenCheck {
        name: name.into(),
        max_error,
        tolerance,
        passed: max_error <= tolerance,
    }
}

fn golden_checks(
    n: u8,
    golden: &Golden,
    traj: &TrajectorySet,
    rates: &LocalRates,
) -> Vec<GoldenCheck> {
    let grid = traj.grid;
    let (mut e_lambda, mut e_p, mut e_gamma) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut compared = 0usize;
    for (i, t) in grid.times().enumerate() {
        let Curves {
            lambda: l,
            p,
            gamma: g,
        } = golden(t);
        for k in 0..3 {
            e_lambda = e_lambda.max((traj.lambda[k][i] - l[k]).abs());
            if let Some(x) = rates.gamma[k][i] {
                e_gamma = e_gamma.max((x - g[k]).abs() / g[k].abs().max(1.0));
                compared += 1;
            }
        }
        for (alpha, expected) in p.iter().enumerate() {
            e_p = e_p.max((traj.p[alpha][i] - expected).abs());
        }
    }
    let mut checks = vec![
        check("lambda", e_lambda, GOLDEN_TOLERANCE),
        check("p", e_p, GOLDEN_TOLERANCE),
        check(
            &format!("gamma ({compared} unmasked values)"),
            e_gamma,
            GOLDEN_TOLERANCE,
        ),
    ];
    let last = grid.len() - 1;
    match n {
        1 => {
            // p0 decreases towards 1 - 3/(4za) = 1/4 and never crosses it.
            checks.push(check(
                "p0_asymptote",
                (traj.p[0][last] - 0.25).abs(),
                GOLDEN_TOLERANCE,
            ));
            let min_p0 = traj.p[0].iter().copied().fold(f64::INFINITY, f64::min);
            checks.push(check("p0_lower_bound", (0.25 - min_p0).max(0.0), 1e-12));
        }
        2 => {
            if let Ok(mixture) = convex_semigroup_mixture(1.0, &grid) {
                let d = traj
                    .max_lambda_difference(&mixture)
                    .unwrap_or(f64::INFINITY);
                checks.push(check("semigroup_mixture", d, GOLDEN_TOLERANCE));
            }
        }
        _ => {}
    }
    checks
}

pub fn run(ctx: &Context, n: u8, probes: usize, seed: u64) -> Result<u8> {
    let started = Instant::now();
    let grid = ctx.grid.unwrap_or(GridSection {
        t_max: crate::spec_file::DEFAULT_T_MAX,
        n_steps: crate::spec_file::DEFAULT_N_STEPS,
    });
    let (file, golden) = example(n, grid);
    let spec = file.build()?;
    let grid = file.grid(None)?;
    let mut report = RunReport::new(format!("example {n}"));
    let (decisive, info) = admissibility(&spec, &grid)?;
    for v in &decisive {
        println!("{}", verdict_line(v));
    }
    report.admissible = Some(decisive.iter().all(|v| v.passed));
    report.admissibility = decisive;
    report.diagnostics = info;
    report.spec = Some(file);
    report.grid = Some(GridSection {
        t_max: grid.t_max,
        n_steps: grid.n_steps,
    });

    let closed = closed_form_lambdas(&spec, &grid);
    let cumulative = closed.cumulative.clone().expect("closed form carries F");
    let rates = local_rates_from_f(&spec, &grid);
    emit_trajectory(ctx, &mut report, &closed, &cumulative, Some(&rates))?;
    report.golden = golden_checks(n, &golden, &closed, &rates);

    match kernel_time_domain(&spec).and_then(|k| volterra_solve(&k, &grid)) {
        Ok(volterra) => {
            let vr = local_rates_from_lambdas(&volterra);
            emit_trajectory(ctx, &mut report, &volterra, &cumulative, Some(&vr))?;
            let d = volterra.max_lambda_difference(&closed)?;
            report
                .golden
                .push(check("volterra_route", d, VOLTERRA_TOLERANCE));
        }
        Err(e) => {
            report.notes.push(format!("volterra: {e}"));
            report
                .golden
                .push(check("volterra_route", f64::INFINITY, VOLTERRA_TOLERANCE));
        }
    }

    let c = classification(&spec, &grid, &closed, probes, seed)?;
    print_classification(&c, &grid);
    report.classification = Some(c);

    let mut all_passed = true;
    for g in &report.golden {
        all_passed &= g.passed;
        println!(
            "{} golden {:<28} max error {:.3e} (tolerance {:.0e})",
            if g.passed { "PASS" } else { "FAIL" },
            g.name,
            g.max_error,
            g.tolerance
        );
    }
    let code = if all_passed { EXIT_OK } else { EXIT_SOLVER };
    report.exit_code = code;
    report.wall_time_s = started.elapsed().as_secs_f64();
    report.write(&ctx.out)?;
    println!("report: {}", ctx.out.join(REPORT_FILE).display());
    Ok(code)
}
