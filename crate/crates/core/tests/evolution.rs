mod common;

use std::f64::consts::{LN_2, PI};

use approx::{assert_abs_diff_eq, assert_relative_eq};
use common::{Kind, ALL_KINDS};
use memkernel::evolution::{
    closed_form_lambdas, convex_semigroup_mixture, laplace_domain_solve, markovian_semigroup,
    solve_axis, trajectory_cptp_scan, volterra_solve, InversionMethod, LaplaceKernel, TimeGrid,
    TrajectorySet,
};
use memkernel::kernel_families::{
    kernel_time_domain, AnisotropyParameters, DeltaPlusRegular, ExpTerm, KernelSpec,
    WaitingFunction,
};
use memkernel::Result;
use num_complex::Complex64;
use rand::Rng;

fn spec(w: WaitingFunction, a: [f64; 3]) -> KernelSpec {
    KernelSpec::new(w, AnisotropyParameters::new(a).unwrap())
}

fn max_error(traj: &TrajectorySet, oracle: impl Fn(usize, f64) -> f64) -> f64 {
    (0..3)
        .flat_map(|k| (0..traj.grid.len()).map(move |i| (k, i)))
        .map(|(k, i)| (traj.lambda[k][i] - oracle(k, traj.grid.t(i))).abs())
        .fold(0.0, f64::max)
}

/// Constant kernel eigenvalue `κ̃(s) = −γ` on every axis.
struct ConstantTransform(f64);

impl LaplaceKernel for ConstantTransform {
    fn kappa(&self, _axis: usize, _s: f64) -> Result<f64> {
        Ok(-self.0)
    }
    fn kappa_complex(&self, _axis: usize, _s: Complex64) -> Result<Complex64> {
        Ok(Complex64::new(-self.0, 0.0))
    }
}

#[test]
fn grid_validation() {
    assert!(TimeGrid::new(1.0, 1).is_err());
    assert!(TimeGrid::new(0.0, 10).is_err());
    let g = TimeGrid::new(2.0, 8).unwrap();
    assert_eq!(g.len(), 9);
    assert_eq!(g.step(), 0.25);
    assert_eq!(g.t(8), 2.0);
}

#[test]
fn closed_form_examples() {
    let grid = TimeGrid::new(10.0, 100).unwrap();
    let (z, a) = (1.3, [0.8, 1.6, 2.4]);
    let traj = closed_form_lambdas(&spec(WaitingFunction::exponential(z).unwrap(), a), &grid);
    assert!(max_error(&traj, |k, t| 1.0 - (1.0 - (-z * t).exp()) / (z * a[k])) <= 1e-14);

    let omega = 1.7;
    let traj = closed_form_lambdas(&spec(WaitingFunction::sinusoidal(omega).unwrap(), a), &grid);
    assert!(
        max_error(&traj, |k, t| 1.0
            + ((omega * t).cos() - 1.0) / (a[k] * omega * omega))
            <= 1e-14
    );

    let none = WaitingFunction::tabulated(vec![0.0, 5.0, 10.0], vec![0.0; 3]).unwrap();
    let traj = closed_form_lambdas(&spec(none, a), &grid);
    assert!(max_error(&traj, |_, _| 1.0) == 0.0);
    assert!(trajectory_cptp_scan(&traj).passed);
}

#[test]
fn volterra_examples() {
    // κ = −1: λ̇ = −∫λ gives cos t.
    let n = (PI / 2.0 / 1e-3).round() as usize;
    let grid = TimeGrid::new(PI / 2.0, n).unwrap();
    let constant = DeltaPlusRegular::terms(0.0, vec![ExpTerm::exponential(-1.0, 0.0)]);
    let lambda = solve_axis(&constant, &grid, 0).unwrap();
    assert!(lambda[n].abs() <= 1e-5, "{}", lambda[n]);

    let grid = TimeGrid::new(5.0, 500).unwrap();
    let zero = DeltaPlusRegular::zero();
    let traj = volterra_solve(&[zero.clone(), zero.clone(), zero], &grid).unwrap();
    assert!(max_error(&traj, |_, _| 1.0) == 0.0);

    let c = 0.7;
    let traj = volterra_solve(
        &[
            DeltaPlusRegular::zero(),
            DeltaPlusRegular::zero(),
            DeltaPlusRegular::delta(-2.0 * c),
        ],
        &grid,
    )
    .unwrap();
    // A pure delta kernel is an ODE; the trapezoid rule is second order.
    let worst = (0..grid.len())
        .map(|i| (traj.lambda[2][i] - (-2.0 * c * grid.t(i)).exp()).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-5, "{worst}");
}

#[test]
fn volterra_reports_blowup() {
    let grid = TimeGrid::new(20.0, 2000).unwrap();
    let growing = DeltaPlusRegular::terms(0.0, vec![ExpTerm::exponential(4.0, 0.0)]);
    assert!(solve_axis(&growing, &grid, 0).is_err());
}

#[test]
fn laplace_route_examples() {
    let grid = TimeGrid::new(5.0, 50).unwrap();
    let traj =
        laplace_domain_solve(&ConstantTransform(0.0), &grid, InversionMethod::default()).unwrap();
    assert!(max_error(&traj, |_, _| 1.0) <= 1e-6);

    let gamma = 0.8;
    for method in [InversionMethod::default(), InversionMethod::talbot()] {
        let traj = laplace_domain_solve(&ConstantTransform(gamma), &grid, method).unwrap();
        assert!(max_error(&traj, |_, t| (-gamma * t).exp()) <= 1e-4);
    }

    let (z, a) = (1.0, [1.0, 2.0, 2.5]);
    let s = spec(WaitingFunction::exponential(z).unwrap(), a);
    let grid = TimeGrid::new(20.0, 200).unwrap();
    let closed = closed_form_lambdas(&s, &grid);
    let talbot = laplace_domain_solve(&s, &grid, InversionMethod::talbot()).unwrap();
    assert!(talbot.max_lambda_difference(&closed).unwrap() <= 1e-5);
    let stehfest = laplace_domain_solve(&s, &grid, InversionMethod::default()).unwrap();
    assert!(stehfest.max_lambda_difference(&closed).unwrap() <= 1e-4);
}

#[test]
fn laplace_route_flags_oscillatory_specs() {
    let s = spec(WaitingFunction::sinusoidal(1.0).unwrap(), [2.0; 3]);
    let grid = TimeGrid::new(20.0, 40).unwrap();
    let traj = laplace_domain_solve(&s, &grid, InversionMethod::default()).unwrap();
    assert!(!traj.notes.is_empty());
    // Fixed Talbot resolves the imaginary-axis poles while its contour still encloses them.
    let short = TimeGrid::new(5.0, 10).unwrap();
    let talbot = laplace_domain_solve(&s, &short, InversionMethod::talbot()).unwrap();
    assert!(
        talbot
            .max_lambda_difference(&closed_form_lambdas(&s, &short))
            .unwrap()
            <= 1e-5
    );
}

#[test]
fn semigroup_examples() {
    let grid = TimeGrid::new(3.0, 30).unwrap();
    let c = 0.9;
    let m = markovian_semigroup([0.0, 0.0, c], &grid).unwrap();
    assert!(
        max_error(&m.trajectory, |k, t| if k < 2 {
            (-2.0 * c * t).exp()
        } else {
            1.0
        }) <= 1e-15
    );
    assert_relative_eq!(m.relaxation_times[0], 1.0 / c);
    assert!(m.relaxation_times[2].is_infinite());
    assert!(m.verdict.passed);

    let identity = markovian_semigroup([0.0; 3], &grid).unwrap();
    assert!(max_error(&identity.trajectory, |_, _| 1.0) == 0.0);
    assert!(markovian_semigroup([-0.1, 0.0, 0.0], &grid).is_err());
}

#[test]
fn semigroup_mixture_examples() {
    let t = LN_2 / 2.0;
    let grid = TimeGrid::new(t, 4).unwrap();
    let mix = convex_semigroup_mixture(1.0, &grid).unwrap();
    assert_eq!(mix.eigenvalues(0).0, [1.0; 4]);
    assert_abs_diff_eq!(mix.lambda[2][4], 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(mix.lambda[0][4], 0.75, epsilon = 1e-15);
    assert_abs_diff_eq!(mix.lambda[1][4], 0.75, epsilon = 1e-15);

    let long = convex_semigroup_mixture(1.0, &TimeGrid::new(40.0, 40).unwrap()).unwrap();
    let end = long.eigenvalues(40).0;
    assert_abs_diff_eq!(end[1], 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(end[3], 0.0, epsilon = 1e-15);
    assert!(convex_semigroup_mixture(0.0, &grid).is_err());
}

#[test]
fn cptp_scan_locates_bound_crossing() {
    let s = spec(WaitingFunction::exponential(1.0).unwrap(), [0.2; 3]);
    let grid = TimeGrid::new(2.0, 2000).unwrap();
    let verdict = trajectory_cptp_scan(&closed_form_lambdas(&s, &grid));
    assert!(!verdict.passed);
    let t_star = -(1.0 - 4.0 / 15.0f64).ln();
    let at = verdict.first_violation.unwrap().at.unwrap();
    assert!(
        at > t_star && at <= t_star + grid.step() + 1e-12,
        "{at} vs {t_star}"
    );
}

/// `max_t |λ_volterra − λ_closed|` for a closed family on a grid of `n` steps.
fn volterra_error(s: &KernelSpec, t_max: f64, n: usize) -> f64 {
    let grid = TimeGrid::new(t_max, n).unwrap();
    let kappa = kernel_time_domain(s).unwrap();
    let v = volterra_solve(&kappa, &grid).unwrap();
    v.max_lambda_difference(&closed_form_lambdas(s, &grid))
        .unwrap()
}

/// Fastest time scale of the kernel: delta weights, exponents, frequencies and
/// `√|c|` for regular amplitudes `c`.
fn kernel_rate(s: &KernelSpec) -> f64 {
    kernel_time_domain(s)
        .unwrap()
        .iter()
        .flat_map(|k| {
            let memkernel::kernel_families::Regular::Terms(terms) = &k.regular else {
                unreachable!()
            };
            let amplitudes = terms.iter().map(|e| {
                e.exponent
                    .abs()
                    .max(e.frequency)
                    .max(e.cos_coef.hypot(e.sin_coef).sqrt())
            });
            std::iter::once(k.delta_weight.abs())
                .chain(amplitudes)
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

#[test]
fn volterra_converges_at_second_order() {
    let mut rng = common::rng(307);
    for kind in ALL_KINDS {
        let mut ratios = Vec::new();
        for _ in 0..50 {
            let s = common::admissible(&mut rng, &[kind]);
            let t_max = if kind == Kind::Sinusoidal {
                2.0 * PI
            } else {
                8.0
            };
            // Resolve the fastest scale with at least 20 steps per unit rate.
            let rate = kernel_rate(&s);
            let n = ((20.0 * rate * t_max).ceil() as usize).max(400);
            let (coarse, fine) = (
                volterra_error(&s, t_max, n),
                volterra_error(&s, t_max, 2 * n),
            );
            let h = t_max / n as f64;
            assert!(
                coarse <= 10.0 * (h * rate).powi(2),
                "{kind:?}: error {coarse} at h = {h} for {s:?}"
            );
            ratios.push((coarse / fine, s));
        }
        for (ratio, s) in &ratios {
            assert!(
                (3.3..=4.7).contains(ratio),
                "{kind:?}: halving ratio {ratio} for {s:?}"
            );
        }
    }
}

#[test]
fn trajectories_start_at_identity_and_preserve_trace() {
    let mut rng = common::rng(311);
    for _ in 0..30 {
        let s = common::admissible(&mut rng, &ALL_KINDS);
        let grid = TimeGrid::new(rng.random_range(1.0..10.0), 300).unwrap();
        let routes = [
            closed_form_lambdas(&s, &grid),
            volterra_solve(&kernel_time_domain(&s).unwrap(), &grid).unwrap(),
            laplace_domain_solve(&s, &grid, InversionMethod::talbot()).unwrap(),
        ];
        for traj in &routes {
            assert_eq!(traj.eigenvalues(0).0, [1.0; 4]);
            for i in 0..grid.len() {
                assert_eq!(traj.eigenvalues(i).0[0], 1.0);
                let total: f64 = traj.p.iter().map(|row| row[i]).sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            }
        }
    }
}

#[test]
fn memory_kernel_asymptote_falls_below_local_floor() {
    let grid = TimeGrid::new(40.0, 400).unwrap();
    for za in [0.8, 0.9, 1.0, 2.0, 5.0] {
        let traj = closed_form_lambdas(
            &spec(WaitingFunction::exponential(1.0).unwrap(), [za; 3]),
            &grid,
        );
        let p0 = traj.p[0][400];
        assert_abs_diff_eq!(p0, 1.0 - 3.0 / (4.0 * za), epsilon = 1e-12);
        assert_eq!(p0 < 0.25, za < 1.0);
    }
    let mut rng = common::rng(313);
    for _ in 0..50 {
        let gamma = [0; 3].map(|_| rng.random_range(0.0..4.0));
        let m = markovian_semigroup(gamma, &grid).unwrap();
        assert!(m.trajectory.p[0].iter().all(|&p| p >= 0.25 - 1e-15));
    }
}

#[test]
fn admissible_specs_pass_cptp_scan() {
    let mut rng = common::rng(317);
    for _ in 0..100 {
        let s = common::admissible(&mut rng, &ALL_KINDS);
        let grid = common::grid_for(&s.waiting, 1000);
        assert!(
            trajectory_cptp_scan(&closed_form_lambdas(&s, &grid)).passed,
            "{s:?}"
        );
    }
}
