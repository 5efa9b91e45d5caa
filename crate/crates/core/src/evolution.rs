//! Trajectories `λ_k(t)`, `p_α(t)` on uniform grids: closed form, direct
//! Volterra integration of `λ̇ = ∫₀ᵗ κ(t−τ) λ(τ) dτ`, and Laplace-domain
//! solution `λ̃ = 1/(s − κ̃)` with numerical inversion.

use std::cell::RefCell;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::map_range;
use crate::kernel_families::{DeltaPlusRegular, KernelSpec, Regular, SemiMarkovKernel};
use crate::laplace_tools::{
    inverse_laplace_checked, talbot, RealInversion, DEFAULT_STEHFEST_ORDER, DEFAULT_TALBOT_ORDER,
};
use crate::pauli_channel::{cptp_margins, PauliEigenvalues, CPTP_LABELS, HADAMARD};
use crate::verdict::{tolerance, GridScan, Margin, Verdict};

/// Uniform grid `t_i = i·t_max/n_steps`, `i = 0..=n_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_max: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, n_steps: usize) -> Result<Self> {
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(invalid(format!(
                "t_max must be positive and finite, got {t_max}"
            )));
        }
        if n_steps < 2 {
            return Err(invalid(format!(
                "n_steps must be at least 2, got {n_steps}"
            )));
        }
        Ok(Self { t_max, n_steps })
    }

    pub fn step(&self) -> f64 {
        self.t_max / self.n_steps as f64
    }

    /// Number of grid points (`n_steps + 1`).
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.t_max
        } else {
            i as f64 * self.step()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.t(i))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    Volterra,
    LaplaceInversion,
}

impl Provenance {
    pub fn name(&self) -> &'static str {
        match self {
            Provenance::ClosedForm => "closed",
            Provenance::Volterra => "volterra",
            Provenance::LaplaceInversion => "laplace",
        }
    }
}

/// Sampled Pauli eigenvalues and probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub grid: TimeGrid,
    /// `lambda[k][i] = λ_{k+1}(t_i)`.
    pub lambda: [Vec<f64>; 3],
    /// `p[α][i] = p_α(t_i)`.
    pub p: [Vec<f64>; 4],
    /// `F(t_i)` when the trajectory was generated from a waiting function.
    pub cumulative: Option<Vec<f64>>,
    pub provenance: Provenance,
    pub notes: Vec<String>,
}

impl TrajectorySet {
    /// Builds the probabilities `p = Hλ/4` from eigenvalue rows.
    pub fn from_lambdas(
        grid: TimeGrid,
        lambda: [Vec<f64>; 3],
        provenance: Provenance,
    ) -> Result<Self> {
        if lambda.iter().any(|row| row.len() != grid.len()) {
            return Err(invalid("eigenvalue rows must match the grid length"));
        }
        let n = grid.len();
        let mut p: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n));
        for i in 0..n {
            let l = [1.0, lambda[0][i], lambda[1][i], lambda[2][i]];
            for (alpha, row) in HADAMARD.iter().enumerate() {
                p[alpha].push(
                    0.25 * row
                        .iter()
                        .zip(&l)
                        .map(|(&h, &x)| f64::from(h) * x)
                        .sum::<f64>(),
                );
            }
        }
        Ok(Self {
            grid,
            lambda,
            p,
            cumulative: None,
            provenance,
            notes: Vec::new(),
        })
    }

    pub fn eigenvalues(&self, i: usize) -> PauliEigenvalues {
        PauliEigenvalues::new(self.lambda[0][i], self.lambda[1][i], self.lambda[2][i])
    }

    /// Largest `|λ_k(t_i) − other.λ_k(t_i)|` over the common grid.
    pub fn max_lambda_difference(&self, other: &TrajectorySet) -> Result<f64> {
        if self.grid != other.grid {
            return Err(invalid("trajectories live on different grids"));
        }
        Ok((0..3)
            .flat_map(|k| {
                self.lambda[k]
                    .iter()
                    .zip(&other.lambda[k])
                    .map(|(a, b)| (a - b).abs())
            })
            .fold(0.0, f64::max))
    }
}

/// `λ_k(t) = 1 − F(t)/a_k`, with `p_k = ¼(1/a_i + 1/a_j − 1/a_k)F`.
pub fn closed_form_lambdas(spec: &KernelSpec, grid: &TimeGrid) -> TrajectorySet {
    let n = grid.len();
    let cumulative: Vec<f64> = map_range(n, |i| spec.waiting.cumulative(grid.t(i)));
    let mut lambda: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(n));
    let mut p: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n));
    let probes = map_range(n, |i| spec.probabilities(grid.t(i)));
    for i in 0..n {
        for (k, row) in lambda.iter_mut().enumerate() {
            row.push(1.0 - cumulative[i] / spec.aniso.a[k]);
        }
        for (alpha, row) in p.iter_mut().enumerate() {
            row.push(probes[i][alpha]);
        }
    }
    TrajectorySet {
        grid: *grid,
        lambda,
        p,
        cumulative: Some(cumulative),
        provenance: Provenance::ClosedForm,
        notes: Vec::new(),
    }
}

/// Magnitude beyond which the Volterra solver reports a blow-up.
pub const BLOWUP_THRESHOLD: f64 = 1e6;

/// Solves `λ̇ = d·λ + ∫₀ᵗ r(t−τ) λ(τ) dτ`, `λ(0) = 1`, for one axis.
///
/// Trapezoidal rule in time and for the convolution, implicit in the newest
/// sample, so every step is one scalar linear solve. Exponential-sum kernels
/// update the convolution recursively in O(terms) per step; sampled kernels use
/// the direct O(n) sum.
pub fn solve_axis(kappa: &DeltaPlusRegular, grid: &TimeGrid, axis: usize) -> Result<Vec<f64>> {
    let n = grid.len();
    let h = grid.step();
    let d = kappa.delta_weight;
    let r: Vec<f64> = (0..n).map(|i| kappa.regular_at(grid.t(i))).collect();
    let mut lambda = Vec::with_capacity(n);
    lambda.push(1.0);
    let mut history = History::new(kappa, h);
    let denom = 1.0 - 0.5 * h * (d + 0.5 * h * r[0]);
    let mut g_prev = d; // G_0 = d·λ_0
    for step in 0..n - 1 {
        // K = ½ r(t_{step+1}) λ_0 + Σ_{j=1}^{step} r(t_{step+1} − t_j) λ_j
        let k = history.next(&r, &lambda);
        let rhs = lambda[step] + 0.5 * h * g_prev + 0.5 * h * h * k;
        let next = rhs / denom;
        if !(next.abs() <= BLOWUP_THRESHOLD) {
            return Err(Error::BlowUp {
                axis: axis + 1,
                t: grid.t(step + 1),
                value: next.abs(),
            });
        }
        lambda.push(next);
        g_prev = d * next + h * (k + 0.5 * r[0] * next);
    }
    Ok(lambda)
}

/// Convolution history `K_N = ½ r(t_N) λ_0 + Σ_{j=1}^{N−1} r(t_N − t_j) λ_j`.
///
/// The `λ_0` term stays inside the recursive accumulator: for growing kernel
/// terms the history is a small difference of exponentially large parts, and
/// splitting it off as `½ r(t_N)` lets rounding grow like the kernel.
enum History {
    Direct,
    Recursive {
        terms: Vec<TermState>,
        decay: Vec<Complex64>,
        h: f64,
    },
}

struct TermState {
    amplitude: Complex64,
    power: usize,
    /// `A^{(l)} = Σ_j w_j ((N−j)h)^l e^{q(N−j)h} λ_j` for `l = 0..=power`, `w_0 = ½`, else 1.
    acc: Vec<Complex64>,
}

impl History {
    fn new(kappa: &DeltaPlusRegular, h: f64) -> Self {
        match &kappa.regular {
            Regular::Terms(terms) => History::Recursive {
                decay: terms
                    .iter()
                    .map(|e| (Complex64::new(e.exponent, e.frequency) * h).exp())
                    .collect(),
                terms: terms
                    .iter()
                    .map(|e| TermState {
                        amplitude: Complex64::new(e.cos_coef, -e.sin_coef),
                        power: e.power as usize,
                        acc: vec![Complex64::new(0.0, 0.0); e.power as usize + 1],
                    })
                    .collect(),
                h,
            },
            Regular::Sampled { .. } => History::Direct,
        }
    }

    /// Advances to `N = lambda.len()` and returns `K_N`.
    fn next(&mut self, r: &[f64], lambda: &[f64]) -> f64 {
        let n = lambda.len();
        match self {
            History::Direct => {
                0.5 * r[n] * lambda[0] + (1..n).map(|j| r[n - j] * lambda[j]).sum::<f64>()
            }
            History::Recursive { terms, decay, h } => {
                // lambda[n−1] joins the sum with lag zero before the shift by h;
                // lambda[0] carries the trapezoid end weight.
                let newest = if n >= 2 {
                    lambda[n - 1]
                } else {
                    0.5 * lambda[0]
                };
                let mut total = 0.0;
                for (term, &e) in terms.iter_mut().zip(decay.iter()) {
                    let old = term.acc.clone();
                    for k in 0..=term.power {
                        let mut sum = Complex64::new(0.0, 0.0);
                        let mut binom = 1.0;
                        for (l, &a) in old.iter().enumerate().take(k + 1) {
                            let base = if l == 0 { a + newest } else { a };
                            sum += binom * h.powi((k - l) as i32) * base;
                            binom = binom * (k - l) as f64 / (l + 1) as f64;
                        }
                        term.acc[k] = e * sum;
                    }
                    total += (term.amplitude * term.acc[term.power]).re;
                }
                total
            }
        }
    }
}

/// Volterra solution of the three axes (in parallel when enabled).
pub fn volterra_solve(kappa: &[DeltaPlusRegular; 3], grid: &TimeGrid) -> Result<TrajectorySet> {
    let rows = map_range(3, |axis| solve_axis(&kappa[axis], grid, axis));
    let mut lambda: [Vec<f64>; 3] = Default::default();
    for (axis, row) in rows.into_iter().enumerate() {
        lambda[axis] = row?;
    }
    TrajectorySet::from_lambdas(*grid, lambda, Provenance::Volterra)
}

/// Laplace-domain kernel eigenvalues `κ̃_k(s)`.
pub trait LaplaceKernel: Sync {
    fn kappa(&self, axis: usize, s: f64) -> Result<f64>;
    fn kappa_complex(&self, axis: usize, s: Complex64) -> Result<Complex64>;
}

impl LaplaceKernel for KernelSpec {
    fn kappa(&self, axis: usize, s: f64) -> Result<f64> {
        self.kappa_laplace(axis, s)
    }
    fn kappa_complex(&self, axis: usize, s: Complex64) -> Result<Complex64> {
        self.kappa_laplace_complex(axis, s)
    }
}

impl LaplaceKernel for SemiMarkovKernel {
    fn kappa(&self, axis: usize, s: f64) -> Result<f64> {
        Ok(self.kappa_laplace(axis, s))
    }
    fn kappa_complex(&self, axis: usize, s: Complex64) -> Result<Complex64> {
        Ok(self.kappa_laplace_complex(axis, s))
    }
}

/// Constant kernels `κ̃_k(s) = c_k` (i.e. `κ_k(t) = c_k δ(t)`).
impl LaplaceKernel for [f64; 3] {
    fn kappa(&self, axis: usize, _s: f64) -> Result<f64> {
        Ok(self[axis])
    }
    fn kappa_complex(&self, axis: usize, _s: Complex64) -> Result<Complex64> {
        Ok(Complex64::new(self[axis], 0.0))
    }
}

/// Inversion algorithm for [`laplace_domain_solve`]. The default is
/// Gaver–Stehfest: over long horizons its error stays smooth and small, while
/// the Wynn acceleration of [`GaverWynn`](InversionMethod::GaverWynn) is more
/// accurate at moderate `t` but occasionally breaks down.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionMethod {
    GaverWynn { order: usize },
    Stehfest { order: usize },
    Talbot { order: usize },
}

impl Default for InversionMethod {
    fn default() -> Self {
        InversionMethod::Stehfest {
            order: DEFAULT_STEHFEST_ORDER,
        }
    }
}

impl InversionMethod {
    pub fn talbot() -> Self {
        InversionMethod::Talbot {
            order: DEFAULT_TALBOT_ORDER,
        }
    }

    /// The real-axis algorithm behind this method, if it is one.
    pub fn real(&self) -> Option<RealInversion> {
        match *self {
            InversionMethod::GaverWynn { order } => Some(RealInversion::GaverWynn { order }),
            InversionMethod::Stehfest { order } => Some(RealInversion::Stehfest { order }),
            InversionMethod::Talbot { .. } => None,
        }
    }
}

/// `λ_k(t)` by inverting `λ̃_k(s) = 1/(s − κ̃_k(s))` at every grid time.
pub fn laplace_domain_solve<K: LaplaceKernel>(
    kernel: &K,
    grid: &TimeGrid,
    method: InversionMethod,
) -> Result<TrajectorySet> {
    let n = grid.len();
    let mut lambda: [Vec<f64>; 3] = Default::default();
    let mut degraded = 0usize;
    for (axis, row) in lambda.iter_mut().enumerate() {
        let values = map_range(n, |i| -> Result<(f64, bool)> {
            let t = grid.t(i);
            if i == 0 {
                return Ok((1.0, false));
            }
            match method {
                InversionMethod::GaverWynn { .. } | InversionMethod::Stehfest { .. } => {
                    let real = method.real().expect("real-axis method");
                    let failure = RefCell::new(None);
                    let c = inverse_laplace_checked(
                        |s| match kernel.kappa(axis, s) {
                            Ok(k) => 1.0 / (s - k),
                            Err(e) => {
                                failure.borrow_mut().get_or_insert(e);
                                f64::NAN
                            }
                        },
                        t,
                        real,
                    );
                    if let Some(e) = failure.into_inner() {
                        return Err(e);
                    }
                    let c = c?;
                    Ok((c.value, c.degraded))
                }
                InversionMethod::Talbot { order } => {
                    let failure = RefCell::new(None);
                    let v = talbot(
                        |s| match kernel.kappa_complex(axis, s) {
                            Ok(k) => 1.0 / (s - k),
                            Err(e) => {
                                failure.borrow_mut().get_or_insert(e);
                                Complex64::new(f64::NAN, 0.0)
                            }
                        },
                        t,
                        order,
                    );
                    if let Some(e) = failure.into_inner() {
                        return Err(e);
                    }
                    Ok((v?, false))
                }
            }
        });
        for v in values {
            let (value, flag) = v?;
            degraded += usize::from(flag);
            row.push(value);
        }
    }
    let mut traj = TrajectorySet::from_lambdas(*grid, lambda, Provenance::LaplaceInversion)?;
    if degraded > 0 {
        traj.notes.push(format!(
            "inversion flagged degraded at {degraded} (axis, time) points; the target is likely oscillatory"
        ));
    }
    Ok(traj)
}

/// Markovian semigroup with constant rates and its relaxation times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovianSemigroup {
    pub trajectory: TrajectorySet,
    /// `T_k = 1/(γ_i + γ_j)`.
    pub relaxation_times: [f64; 3],
    /// Complete positivity in terms of relaxation times:
    /// `1/T_i + 1/T_j − 1/T_k = 2γ_k ≥ 0`.
    pub verdict: Verdict,
}

/// `λ1 = e^{−2(γ2+γ3)t}` and cyclic.
pub fn markovian_semigroup(gamma: [f64; 3], grid: &TimeGrid) -> Result<MarkovianSemigroup> {
    if gamma.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
        return Err(invalid(format!(
            "rates must be non-negative and finite, got {gamma:?}"
        )));
    }
    let decay = [
        gamma[1] + gamma[2],
        gamma[2] + gamma[0],
        gamma[0] + gamma[1],
    ];
    let lambda: [Vec<f64>; 3] =
        std::array::from_fn(|k| grid.times().map(|t| (-2.0 * decay[k] * t).exp()).collect());
    let trajectory = TrajectorySet::from_lambdas(*grid, lambda, Provenance::ClosedForm)?;
    let inv_t = decay;
    let margins = (0..3)
        .map(|k| {
            Margin::new(
                format!("relaxation{}", k + 1),
                inv_t[(k + 1) % 3] + inv_t[(k + 2) % 3] - inv_t[k],
            )
        })
        .collect();
    Ok(MarkovianSemigroup {
        trajectory,
        relaxation_times: decay.map(|d| 1.0 / d),
        verdict: Verdict::from_margins("relaxation_times", margins, tolerance()),
    })
}

/// `½(e^{tL1} + e^{tL2})` with `L1`, `L2` the dephasing semigroups along axes 1 and 2:
/// `λ1 = λ2 = ½(1 + e^{−2ct})`, `λ3 = e^{−2ct}`.
pub fn convex_semigroup_mixture(c: f64, grid: &TimeGrid) -> Result<TrajectorySet> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid(format!("rate must be positive, got {c}")));
    }
    let a = markovian_semigroup([c, 0.0, 0.0], grid)?.trajectory;
    let b = markovian_semigroup([0.0, c, 0.0], grid)?.trajectory;
    let lambda = std::array::from_fn(|k| {
        a.lambda[k]
            .iter()
            .zip(&b.lambda[k])
            .map(|(x, y)| 0.5 * (x + y))
            .collect()
    });
    TrajectorySet::from_lambdas(*grid, lambda, Provenance::ClosedForm)
}

/// CPTP margins at every grid point; reports the first failing time.
pub fn trajectory_cptp_scan(traj: &TrajectorySet) -> Verdict {
    let mut scan = GridScan::new(CPTP_LABELS, tolerance());
    for i in 0..traj.grid.len() {
        scan.observe(traj.grid.t(i), &cptp_margins(&traj.eigenvalues(i)));
    }
    scan.finish("trajectory_cptp")
}
