//! Classification of Pauli-diagonal dynamics: time-local decoherence rates,
//! CP-divisibility and the BLP (trace-distance) criterion and measure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::evolution::{TimeGrid, TrajectorySet};
use crate::exec::map_range;
use crate::kernel_families::KernelSpec;
use crate::pauli_channel::{trace_distance, BlochVector};
use crate::verdict::{tolerance, GridScan, Margin, Verdict, Violation};

/// Relative distance to `a_k − F(t) = 0` below which rates are masked.
pub const SINGULAR_MASK: f64 = 1e-6;
/// Increments of the trace distance at or below this are treated as noise.
pub const BLP_INCREMENT_FLOOR: f64 = 1e-12;
pub const DEFAULT_PROBES: usize = 512;
pub const DEFAULT_SEED: u64 = 0x00C0_FFEE;

/// Time-local rates `γ_k(t_i)`; `None` marks a masked (singular or undefined) point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalRates {
    pub grid: TimeGrid,
    pub gamma: [Vec<Option<f64>>; 3],
    /// Times where some `a_k − F(t)` vanishes (or changes sign between samples).
    pub singular_times: Vec<f64>,
    pub notes: Vec<String>,
}

impl LocalRates {
    /// `min_k γ_k(t_i)` at unmasked points.
    pub fn min_at(&self, i: usize) -> Option<f64> {
        let v: Option<Vec<f64>> = (0..3).map(|k| self.gamma[k][i]).collect();
        v.map(|v| v.into_iter().fold(f64::INFINITY, f64::min))
    }
}

fn rates_at(a: &[f64; 3], f: f64, big_f: f64) -> [f64; 3] {
    let inv: [f64; 3] = a.map(|ak| {
        if ak.is_infinite() {
            0.0
        } else {
            1.0 / (ak - big_f)
        }
    });
    std::array::from_fn(|k| 0.25 * f * (inv[(k + 1) % 3] + inv[(k + 2) % 3] - inv[k]))
}

/// `γ1 = (f/4)(−1/(a1−F) + 1/(a2−F) + 1/(a3−F))` and cyclic.
pub fn local_rates_from_f(spec: &KernelSpec, grid: &TimeGrid) -> LocalRates {
    let n = grid.len();
    let a = spec.aniso.a;
    let samples = map_range(n, |i| {
        let t = grid.t(i);
        (spec.waiting.f(t), spec.waiting.cumulative(t))
    });
    let gap = |i: usize, k: usize| a[k] - samples[i].1;
    let mut masked = vec![false; n];
    let mut singular_times = Vec::new();
    for k in (0..3).filter(|&k| a[k].is_finite()) {
        for i in 0..n {
            if gap(i, k).abs() <= SINGULAR_MASK * a[k] {
                masked[i] = true;
                singular_times.push(grid.t(i));
            } else if i + 1 < n && gap(i, k) * gap(i + 1, k) < 0.0 {
                masked[i] = true;
                masked[i + 1] = true;
                let (g0, g1) = (gap(i, k), gap(i + 1, k));
                singular_times.push(grid.t(i) + grid.step() * g0 / (g0 - g1));
            }
        }
    }
    singular_times.sort_by(f64::total_cmp);
    singular_times.dedup();
    let mut gamma: [Vec<Option<f64>>; 3] = std::array::from_fn(|_| Vec::with_capacity(n));
    for i in 0..n {
        let g = rates_at(&a, samples[i].0, samples[i].1);
        for k in 0..3 {
            gamma[k].push((!masked[i]).then_some(g[k]));
        }
    }
    LocalRates {
        grid: *grid,
        gamma,
        singular_times,
        notes: Vec::new(),
    }
}

/// Rates recovered from sampled eigenvalues: `μ_k = −½ d/dt ln λ_k` by
/// second-order differences, then `γ1 = ½(μ2 + μ3 − μ1)` and cyclic.
pub fn local_rates_from_lambdas(traj: &TrajectorySet) -> LocalRates {
    let grid = traj.grid;
    let n = grid.len();
    let h = grid.step();
    let logs: [Vec<Option<f64>>; 3] = std::array::from_fn(|k| {
        traj.lambda[k]
            .iter()
            .map(|&l| (l > 0.0).then(|| l.ln()))
            .collect()
    });
    let deriv = |y: &[Option<f64>], i: usize| -> Option<f64> {
        if i == 0 {
            Some((-3.0 * y[0]? + 4.0 * y[1]? - y[2]?) / (2.0 * h))
        } else if i == n - 1 {
            Some((3.0 * y[i]? - 4.0 * y[i - 1]? + y[i - 2]?) / (2.0 * h))
        } else {
            Some((y[i + 1]? - y[i - 1]?) / (2.0 * h))
        }
    };
    let mut gamma: [Vec<Option<f64>>; 3] = std::array::from_fn(|_| Vec::with_capacity(n));
    let mut undefined = 0usize;
    for i in 0..n {
        let mu: Option<Vec<f64>> = (0..3)
            .map(|k| deriv(&logs[k], i).map(|d| -0.5 * d))
            .collect();
        match mu {
            Some(mu) => {
                for k in 0..3 {
                    gamma[k].push(Some(0.5 * (mu[(k + 1) % 3] + mu[(k + 2) % 3] - mu[k])));
                }
            }
            None => {
                undefined += 1;
                for row in gamma.iter_mut() {
                    row.push(None);
                }
            }
        }
    }
    let mut notes = Vec::new();
    if undefined > 0 {
        notes.push(format!(
            "{undefined} grid points masked: some lambda_k <= 0 in the difference stencil"
        ));
    }
    LocalRates {
        grid,
        gamma,
        singular_times: Vec::new(),
        notes,
    }
}

/// `a1 − √((a2 − a1)(a3 − a1))` for ascending `a`.
pub fn cp_divisibility_bound(a: &[f64; 3]) -> f64 {
    let mut s = *a;
    s.sort_by(f64::total_cmp);
    let [a1, a2, a3] = s;
    if a1.is_infinite() {
        return f64::INFINITY;
    }
    if a2 == a1 {
        return a1;
    }
    if a3.is_infinite() {
        return f64::NEG_INFINITY;
    }
    a1 - ((a2 - a1) * (a3 - a1)).sqrt()
}

/// CP-divisibility of the kernel's dynamics: `F(t)` must stay below
/// [`cp_divisibility_bound`] (for `f ≥ 0`), cross-checked by scanning the rates
/// directly where `F(t) < min a_k` (everywhere when `f` takes negative values).
pub fn cp_divisibility_check(spec: &KernelSpec, grid: &TimeGrid) -> Verdict {
    let tol = tolerance();
    let bound = cp_divisibility_bound(&spec.aniso.a);
    let a_min = spec.aniso.min();
    let rates = local_rates_from_f(spec, grid);

    let nonnegative = spec.waiting.is_nonnegative();
    let mut direct = GridScan::new(["gamma_min"], tol);
    for i in 0..grid.len() {
        if !nonnegative || spec.waiting.cumulative(grid.t(i)) < a_min {
            if let Some(m) = rates.min_at(i) {
                direct.observe(grid.t(i), &[m]);
            }
        }
    }
    let direct = direct.finish("gamma_scan");

    if !nonnegative {
        let mut v = direct;
        v.check = "cp_divisibility".into();
        return v.with_note("f(t) takes negative values; the F-bound does not apply, verdict from the direct rate scan");
    }

    let mut scan = GridScan::new(["bound_minus_F"], tol);
    for t in grid.times() {
        let big_f = spec.waiting.cumulative(t);
        // Before the waiting function switches on, every rate vanishes.
        let margin = if big_f == 0.0 && spec.waiting.f(t) == 0.0 {
            bound.max(0.0)
        } else {
            bound - big_f
        };
        scan.observe(t, &[margin]);
    }
    let mut v = scan.finish("cp_divisibility");
    v.margins.extend(direct.margins.iter().cloned());
    v.margins.push(Margin::new("bound", bound));
    let t_bound = v.first_violation.as_ref().and_then(|x| x.at);
    let t_direct = direct.first_violation.as_ref().and_then(|x| x.at);
    let agree = match (t_bound, t_direct) {
        (None, None) => true,
        (Some(a), Some(b)) => (a - b).abs() <= grid.step() * (1.0 + 1e-9),
        // The direct scan only sees F < min a; a later bound crossing is invisible to it.
        (Some(a), None) => grid
            .times()
            .filter(|&t| t >= a)
            .all(|t| spec.waiting.cumulative(t) >= a_min),
        (None, Some(_)) => false,
    };
    let note = format!(
        "F-bound first violation {t_bound:?}, direct rate scan first violation {t_direct:?}: {}",
        if agree { "consistent" } else { "INCONSISTENT" }
    );
    v.with_note(note)
}

/// BLP measure: supremum over probe directions of the summed positive
/// increments of the trace distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlpResult {
    pub measure: f64,
    /// Index (into `probe_pairs`) of the maximizing probe.
    pub argmax: usize,
    pub growth_intervals: Vec<GrowthInterval>,
    pub probe_pairs: Vec<BlochVector>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthInterval {
    pub probe: usize,
    pub t_start: f64,
    pub t_end: f64,
}

/// Three coordinate axes followed by uniformly distributed unit vectors.
pub fn probe_directions(n_probes: usize, seed: u64) -> Vec<BlochVector> {
    let axes = [
        BlochVector([1.0, 0.0, 0.0]),
        BlochVector([0.0, 1.0, 0.0]),
        BlochVector([0.0, 0.0, 1.0]),
    ];
    let mut out: Vec<BlochVector> = axes.into_iter().take(n_probes).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < n_probes {
        let z: f64 = rng.random_range(-1.0..=1.0);
        let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let r = (1.0 - z * z).max(0.0).sqrt();
        out.push(BlochVector([r * phi.cos(), r * phi.sin(), z]));
    }
    out
}

pub fn blp_measure(traj: &TrajectorySet, n_probes: usize, seed: u64) -> Result<BlpResult> {
    if n_probes == 0 {
        return Err(invalid("at least one probe is required"));
    }
    let probes = probe_directions(n_probes, seed);
    let n = traj.grid.len();
    let per_probe = map_range(probes.len(), |p| {
        let v = &probes[p];
        let mut total = 0.0;
        let mut intervals: Vec<GrowthInterval> = Vec::new();
        let mut prev = trace_distance(&traj.eigenvalues(0), v);
        for i in 1..n {
            let d = trace_distance(&traj.eigenvalues(i), v);
            let inc = d - prev;
            if inc > BLP_INCREMENT_FLOOR {
                total += inc;
                let (t0, t1) = (traj.grid.t(i - 1), traj.grid.t(i));
                match intervals.last_mut() {
                    Some(last) if last.t_end == t0 => last.t_end = t1,
                    _ => intervals.push(GrowthInterval {
                        probe: p,
                        t_start: t0,
                        t_end: t1,
                    }),
                }
            }
            prev = d;
        }
        (total, intervals)
    });
    let mut measure = 0.0;
    let mut argmax = 0;
    let mut growth_intervals = Vec::new();
    for (p, (total, intervals)) in per_probe.into_iter().enumerate() {
        if total > measure {
            measure = total;
            argmax = p;
        }
        growth_intervals.extend(intervals);
    }
    Ok(BlpResult {
        measure,
        argmax,
        growth_intervals,
        probe_pairs: probes,
        seed,
    })
}

/// BLP condition. With all `λ_k ≥ 0` it is equivalent to every `λ_k` being
/// non-increasing; otherwise the probe-sampled measure must vanish.
///
/// For this class of channels P-divisibility coincides with the BLP condition,
/// so this verdict answers both questions.
pub fn blp_condition_check(traj: &TrajectorySet) -> Result<Verdict> {
    let tol = tolerance();
    let min_lambda = traj
        .lambda
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_lambda >= -tol {
        let labels = ["lambda1_increase", "lambda2_increase", "lambda3_increase"];
        let mut scan = GridScan::new(labels, tol);
        for i in 1..traj.grid.len() {
            let inc: Vec<f64> = (0..3)
                .map(|k| -(traj.lambda[k][i] - traj.lambda[k][i - 1]))
                .collect();
            scan.observe(traj.grid.t(i), &inc);
        }
        return Ok(scan.finish("blp_condition"));
    }
    let result = blp_measure(traj, DEFAULT_PROBES, DEFAULT_SEED)?;
    let mut v = Verdict::from_margins("blp_condition", vec![Margin::new("blp_measure", -result.measure)], 0.0)
        .with_note(format!("some lambda_k < 0 (min {min_lambda}); decided by the BLP measure over {DEFAULT_PROBES} probes"));
    if let (Some(first), Some(viol)) = (result.growth_intervals.first(), v.first_violation.as_mut())
    {
        *viol = Violation {
            at: Some(first.t_start),
            ..viol.clone()
        };
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{closed_form_lambdas, markovian_semigroup};
    use crate::kernel_families::{AnisotropyParameters, WaitingFunction};
    use approx::assert_abs_diff_eq;

    #[test]
    fn bound_special_cases() {
        assert_eq!(cp_divisibility_bound(&[1.0, 1.0, 1.0]), 1.0);
        assert_abs_diff_eq!(
            cp_divisibility_bound(&[3.0, 1.0, 2.0]),
            1.0 - 2f64.sqrt(),
            epsilon = 1e-15
        );
        assert_eq!(cp_divisibility_bound(&[1.0, 1.0, f64::INFINITY]), 1.0);
        assert_eq!(
            cp_divisibility_bound(&[1.0, 2.0, f64::INFINITY]),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn dephasing_mixture_rates() {
        let c = 1.0;
        let spec = KernelSpec::new(
            WaitingFunction::exponential(2.0 * c).unwrap(),
            AnisotropyParameters::new([1.0 / c, 1.0 / c, 0.5 / c]).unwrap(),
        );
        let grid = TimeGrid::new(2.0, 200).unwrap();
        let r = local_rates_from_f(&spec, &grid);
        assert_abs_diff_eq!(
            r.gamma[2][100].unwrap(),
            -0.5 * 1f64.tanh(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(r.gamma[0][100].unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn semigroup_round_trip() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let traj = markovian_semigroup([0.0, 0.0, 0.7], &grid)
            .unwrap()
            .trajectory;
        let r = local_rates_from_lambdas(&traj);
        for i in 0..grid.len() {
            assert_abs_diff_eq!(r.gamma[2][i].unwrap(), 0.7, epsilon = 1e-9);
            assert_abs_diff_eq!(r.gamma[0][i].unwrap(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn cp_divisibility_breaks_immediately_for_spread_a() {
        let spec = KernelSpec::new(
            WaitingFunction::exponential(2.0).unwrap(),
            AnisotropyParameters::new([1.0, 2.0, 3.0]).unwrap(),
        );
        let v = cp_divisibility_check(&spec, &TimeGrid::new(5.0, 500).unwrap());
        assert!(!v.passed);
        assert_eq!(v.first_violation.as_ref().unwrap().at, Some(0.0));
        assert!(v.notes[0].ends_with("consistent"));
    }

    #[test]
    fn oscillating_eigenvalue_has_unit_measure() {
        let spec = KernelSpec::new(
            WaitingFunction::sinusoidal(1.0).unwrap(),
            AnisotropyParameters::new([1.0, 1.0, f64::INFINITY]).unwrap(),
        );
        let grid = TimeGrid::new(std::f64::consts::TAU, 6283).unwrap();
        let traj = closed_form_lambdas(&spec, &grid);
        let r = blp_measure(&traj, 3, DEFAULT_SEED).unwrap();
        assert!(r.measure >= 1.0 - 1e-3);
        assert!(!blp_condition_check(&traj).unwrap().passed);
    }

    #[test]
    fn identity_dynamics_is_markovian() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let traj = markovian_semigroup([0.0; 3], &grid).unwrap().trajectory;
        let r = blp_measure(&traj, 16, 1).unwrap();
        assert_eq!(r.measure, 0.0);
        assert!(r.growth_intervals.is_empty());
        assert!(blp_condition_check(&traj).unwrap().passed);
    }
}
