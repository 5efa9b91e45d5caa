//! Candidate memory kernels in the `(f, a1, a2, a3)` parameterization:
//! waiting functions, anisotropy parameters, admissibility checks and the
//! kernel eigenvalues in the Laplace and time domains.
//!
//! Axis `k` of the kernel has Laplace transform
//! `κ̃_k(s) = −s f̃(s) / (a_k − f̃(s)) = −s / (a_k W(s) − 1)` with `W = 1/f̃`,
//! and the resulting Pauli eigenvalues are `λ_k(t) = 1 − F(t)/a_k`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evolution::TimeGrid;
use crate::laplace_tools::{
    cm_check, cm_check_rational, numeric_laplace, partial_fraction_with_direct, CmOptions,
    CmVerdict,
};
use crate::poly::{Poly, RationalFunction};
use crate::verdict::{tolerance, GridScan, Margin, Verdict};

pub use crate::laplace_tools::ExpTerm;

/// Parameters of a waiting-function family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `f(t) = e^{-zt}`, `W(s) = s + z`.
    Exponential { z: f64 },
    /// `f(t) = (e^{-c1 t} − e^{-c2 t})/(c2 − c1)`, `W(s) = (s + c1)(s + c2)`.
    BiExponential { c1: f64, c2: f64 },
    /// `f(t) = sin(ωt)/ω`, `W(s) = s² + ω²`.
    Sinusoidal { omega: f64 },
    /// `W(s) = ∏(s + z_i)`.
    PolynomialW { roots: Vec<f64> },
    /// Samples `f(t_i)`, linearly interpolated and zero past the last sample.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

/// The scalar function `f(t)` that generates a kernel family, with its
/// integral `F(t)` and Laplace transform `f̃(s) = 1/W(s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Family", try_from = "Family")]
pub struct WaitingFunction {
    family: Family,
    /// Running trapezoid integral at the samples of a tabulated `f`.
    cumulative: Vec<f64>,
}

impl From<WaitingFunction> for Family {
    fn from(w: WaitingFunction) -> Family {
        w.family
    }
}

impl TryFrom<Family> for WaitingFunction {
    type Error = Error;
    fn try_from(family: Family) -> Result<Self> {
        WaitingFunction::new(family)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl WaitingFunction {
    pub fn new(family: Family) -> Result<Self> {
        let mut w = Self {
            family,
            cumulative: Vec::new(),
        };
        match &w.family {
            Family::Exponential { z } => positive("z", *z)?,
            Family::BiExponential { c1, c2 } => {
                positive("c1", *c1)?;
                positive("c2", *c2)?;
                if c2 <= c1 {
                    return Err(invalid(format!(
                        "bi-exponential rates need c2 > c1, got c1 = {c1}, c2 = {c2}"
                    )));
                }
            }
            Family::Sinusoidal { omega } => positive("omega", *omega)?,
            Family::PolynomialW { roots } => {
                if roots.is_empty() {
                    return Err(invalid("polynomial W needs at least one root"));
                }
                for &z in roots {
                    positive("polynomial root z_i", z)?;
                }
            }
            Family::Tabulated { times, values } => {
                if times.len() != values.len() || times.len() < 2 {
                    return Err(invalid("tabulated waiting function needs matching time/value arrays of length >= 2"));
                }
                if times[0] != 0.0 {
                    return Err(invalid("tabulated times must start at 0"));
                }
                if times.windows(2).any(|p| !(p[1] > p[0])) || times.iter().any(|t| !t.is_finite())
                {
                    return Err(invalid(
                        "tabulated times must be finite and strictly increasing",
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("tabulated values must be finite"));
                }
                let mut acc = vec![0.0];
                for i in 1..times.len() {
                    let h = times[i] - times[i - 1];
                    acc.push(acc[i - 1] + 0.5 * h * (values[i] + values[i - 1]));
                }
                w.cumulative = acc;
            }
        }
        Ok(w)
    }

    pub fn exponential(z: f64) -> Result<Self> {
        Self::new(Family::Exponential { z })
    }

    pub fn bi_exponential(c1: f64, c2: f64) -> Result<Self> {
        Self::new(Family::BiExponential { c1, c2 })
    }

    pub fn sinusoidal(omega: f64) -> Result<Self> {
        Self::new(Family::Sinusoidal { omega })
    }

    pub fn polynomial(roots: Vec<f64>) -> Result<Self> {
        Self::new(Family::PolynomialW { roots })
    }

    pub fn tabulated(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(Family::Tabulated { times, values })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// `W(s)` for the families where it is a polynomial.
    pub fn w_poly(&self) -> Option<Poly> {
        match &self.family {
            Family::Exponential { z } => Some(Poly::new(vec![*z, 1.0])),
            Family::BiExponential { c1, c2 } => Some(Poly::from_shifts(&[*c1, *c2])),
            Family::Sinusoidal { omega } => Some(Poly::new(vec![omega * omega, 0.0, 1.0])),
            Family::PolynomialW { roots } => Some(Poly::from_shifts(roots)),
            Family::Tabulated { .. } => None,
        }
    }

    /// `f̃(s) = 1/W(s)` as a rational function, when available.
    pub fn laplace_rational(&self) -> Option<RationalFunction> {
        self.w_poly()
            .map(|w| RationalFunction::new(Poly::constant(1.0), w))
    }

    pub fn f(&self, t: f64) -> f64 {
        match &self.family {
            Family::Exponential { z } => (-z * t).exp(),
            Family::BiExponential { c1, c2 } => ((-c1 * t).exp() - (-c2 * t).exp()) / (c2 - c1),
            Family::Sinusoidal { omega } => (omega * t).sin() / omega,
            Family::PolynomialW { roots } => inverse_of_product(roots, t),
            Family::Tabulated { times, values } => interpolate(times, values, t),
        }
    }

    /// `F(t) = ∫₀ᵗ f`.
    pub fn cumulative(&self, t: f64) -> f64 {
        match &self.family {
            Family::Exponential { z } => -(-z * t).exp_m1() / z,
            Family::BiExponential { c1, c2 } => {
                (-(-c1 * t).exp_m1() / c1 - (-(-c2 * t).exp_m1()) / c2) / (c2 - c1)
            }
            Family::Sinusoidal { omega } => {
                let half = (0.5 * omega * t).sin();
                2.0 * half * half / (omega * omega)
            }
            Family::PolynomialW { roots } => {
                let nodes: Vec<f64> = std::iter::once(0.0).chain(roots.iter().copied()).collect();
                inverse_of_product(&nodes, t)
            }
            Family::Tabulated { times, values } => {
                if t <= 0.0 {
                    return 0.0;
                }
                let last = times.len() - 1;
                if t >= times[last] {
                    return self.cumulative[last];
                }
                let i = segment(times, t);
                let h = t - times[i];
                let ft = interpolate(times, values, t);
                self.cumulative[i] + 0.5 * h * (values[i] + ft)
            }
        }
    }

    /// `sup_t F(t)` over `[0, ∞)` where it is known in closed form.
    pub fn cumulative_sup(&self) -> Option<f64> {
        match &self.family {
            Family::Exponential { z } => Some(1.0 / z),
            Family::BiExponential { c1, c2 } => Some(1.0 / (c1 * c2)),
            Family::Sinusoidal { omega } => Some(2.0 / (omega * omega)),
            Family::PolynomialW { roots } => Some(1.0 / roots.iter().product::<f64>()),
            Family::Tabulated { .. } => self.cumulative.iter().copied().reduce(f64::max),
        }
    }

    /// `f̃(s)`.
    pub fn laplace(&self, s: f64) -> f64 {
        match &self.family {
            Family::Tabulated { .. } => self.laplace_complex(Complex64::new(s, 0.0)).re,
            _ => 1.0 / self.w_eval(s),
        }
    }

    /// `f̃(s)` at complex `s` (right of all poles).
    pub fn laplace_complex(&self, s: Complex64) -> Complex64 {
        match &self.family {
            Family::Tabulated { times, values } => tabulated_laplace(times, values, s),
            _ => 1.0 / self.w_eval(s),
        }
    }

    /// `W(s)` without building the polynomial; only called for polynomial families.
    fn w_eval<T>(&self, s: T) -> T
    where
        T: Copy + std::ops::Add<f64, Output = T> + std::ops::Mul<Output = T>,
    {
        match &self.family {
            Family::Exponential { z } => s + *z,
            Family::BiExponential { c1, c2 } => (s + *c1) * (s + *c2),
            Family::Sinusoidal { omega } => s * s + omega * omega,
            Family::PolynomialW { roots } => roots
                .iter()
                .skip(1)
                .fold(s + roots[0], |acc, &z| acc * (s + z)),
            Family::Tabulated { .. } => {
                unreachable!("tabulated waiting functions have no polynomial W")
            }
        }
    }

    /// Whether `f(t) ≥ 0` for all `t`.
    pub fn is_nonnegative(&self) -> bool {
        match &self.family {
            Family::Sinusoidal { .. } => false,
            Family::Tabulated { values, .. } => values.iter().all(|&v| v >= 0.0),
            _ => true,
        }
    }

    /// The identically zero waiting function (as a tabulation), giving identity dynamics.
    pub fn zero() -> Self {
        Self::tabulated(vec![0.0, 1.0], vec![0.0, 0.0]).expect("valid tabulation")
    }
}

/// `L⁻¹[1/∏(s + nodes_i)](t)`: the corner entry of `exp(tA)` for the lower
/// bidiagonal `A` with diagonal `−nodes` and unit subdiagonal. Unlike a sum of
/// partial fractions this does not cancel catastrophically for clustered nodes.
fn inverse_of_product(nodes: &[f64], t: f64) -> f64 {
    let m = nodes.len();
    if t <= 0.0 {
        return if m == 1 { 1.0 } else { 0.0 };
    }
    let mut a = DMatrix::zeros(m, m);
    for (i, &z) in nodes.iter().enumerate() {
        a[(i, i)] = -z * t;
        if i + 1 < m {
            a[(i + 1, i)] = t;
        }
    }
    a.exp()[(m - 1, 0)]
}

fn segment(times: &[f64], t: f64) -> usize {
    times
        .partition_point(|&x| x <= t)
        .saturating_sub(1)
        .min(times.len() - 2)
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    let last = times.len() - 1;
    if t < 0.0 || t > times[last] {
        return 0.0;
    }
    let i = segment(times, t);
    let w = (t - times[i]) / (times[i + 1] - times[i]);
    values[i] + w * (values[i + 1] - values[i])
}

/// `(1 − e^{−x})/x` and `(1 − e^{−x}(1 + x))/x²`.
fn segment_kernels(x: Complex64) -> (Complex64, Complex64) {
    if x.norm() < 0.5 {
        let mut p0 = Complex64::new(0.0, 0.0);
        let mut p1 = Complex64::new(0.0, 0.0);
        let mut pow = Complex64::new(1.0, 0.0);
        let mut fact = 1.0; // n!
        for n in 0..20usize {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let f1 = fact * (n + 1) as f64;
            let f2 = f1 * (n + 2) as f64;
            p0 += sign * pow / f1;
            p1 += sign * (n + 1) as f64 * pow / f2;
            pow *= x;
            fact = f1;
        }
        (p0, p1)
    } else {
        let e = (-x).exp();
        ((1.0 - e) / x, (1.0 - e * (1.0 + x)) / (x * x))
    }
}

/// Exact Laplace transform of the piecewise-linear interpolant.
fn tabulated_laplace(times: &[f64], values: &[f64], s: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..times.len() - 1 {
        let h = times[i + 1] - times[i];
        let (p0, p1) = segment_kernels(s * h);
        let seg = values[i] * h * p0 + (values[i + 1] - values[i]) * h * p1;
        acc += (-s * times[i]).exp() * seg;
    }
    acc
}

/// Positive anisotropy parameters `a_k`; `+∞` disables an axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnisotropyParameters {
    pub a: [f64; 3],
}

impl AnisotropyParameters {
    pub fn new(a: [f64; 3]) -> Result<Self> {
        for (k, &ak) in a.iter().enumerate() {
            if !(ak > 0.0) {
                return Err(invalid(format!(
                    "a{} must be positive or inf, got {ak}",
                    k + 1
                )));
            }
        }
        Ok(Self { a })
    }

    pub fn symmetric(a: f64) -> Result<Self> {
        Self::new([a; 3])
    }

    pub fn reciprocals(&self) -> [f64; 3] {
        self.a.map(|a| 1.0 / a)
    }

    pub fn reciprocal_sum(&self) -> f64 {
        self.reciprocals().iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.a.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `1/a_i + 1/a_j − 1/a_k` for `k = 1, 2, 3`.
pub fn triangle_margins(a: &AnisotropyParameters) -> [f64; 3] {
    let r = a.reciprocals();
    [r[1] + r[2] - r[0], r[2] + r[0] - r[1], r[0] + r[1] - r[2]]
}

pub fn triangle_check(a: &AnisotropyParameters) -> Verdict {
    let margins = triangle_margins(a)
        .iter()
        .enumerate()
        .map(|(k, &m)| Margin::new(format!("triangle{}", k + 1), m))
        .collect();
    Verdict::from_margins("triangle", margins, tolerance())
}

/// `(1/a1 + 1/a2 + 1/a3) F(t) ≤ 4` at every grid point.
pub fn integral_bound_check(spec: &KernelSpec, grid: &TimeGrid) -> Verdict {
    let r = spec.aniso.reciprocal_sum();
    let mut scan = GridScan::new(["integral_bound"], tolerance());
    for t in grid.times() {
        scan.observe(t, &[4.0 - r * spec.waiting.cumulative(t)]);
    }
    scan.finish("integral_bound")
}

/// Rates `b_k > 0` with `p_k(t) = F(t)/b_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BRates {
    pub b: [f64; 3],
}

/// `1/b_k = ¼(1/a_i + 1/a_j − 1/a_k)`; a zero triangle margin gives `b_k = +∞`.
pub fn b_from_a(a: &AnisotropyParameters) -> Result<BRates> {
    let m = triangle_margins(a);
    if m.iter().any(|&x| x < 0.0) {
        return Err(invalid(format!(
            "anisotropy parameters violate the triangle conditions: margins {m:?}"
        )));
    }
    Ok(BRates {
        b: m.map(|x| 4.0 / x),
    })
}

/// Inverse of [`b_from_a`]: `1/a_k = 2(1/b_i + 1/b_j)`.
pub fn a_from_b(b: &BRates) -> Result<AnisotropyParameters> {
    if b.b.iter().any(|&x| !(x > 0.0)) {
        return Err(invalid(format!(
            "b rates must be positive or inf, got {:?}",
            b.b
        )));
    }
    let r = b.b.map(|x| 1.0 / x);
    AnisotropyParameters::new([
        0.5 / (r[1] + r[2]),
        0.5 / (r[2] + r[0]),
        0.5 / (r[0] + r[1]),
    ])
}

/// A full kernel: waiting function plus anisotropy parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub waiting: WaitingFunction,
    pub aniso: AnisotropyParameters,
}

impl KernelSpec {
    pub fn new(waiting: WaitingFunction, aniso: AnisotropyParameters) -> Self {
        Self { waiting, aniso }
    }

    /// `λ_k(t) = 1 − F(t)/a_k`.
    pub fn lambdas(&self, t: f64) -> [f64; 3] {
        let f = self.waiting.cumulative(t);
        self.aniso.a.map(|a| 1.0 - f / a)
    }

    /// `p_k(t) = ¼(1/a_i + 1/a_j − 1/a_k) F(t)` for `k = 1..3` and `p_0 = 1 − Σ p_k`.
    pub fn probabilities(&self, t: f64) -> [f64; 4] {
        let f = self.waiting.cumulative(t);
        let m = triangle_margins(&self.aniso).map(|x| 0.25 * x * f);
        [1.0 - m.iter().sum::<f64>(), m[0], m[1], m[2]]
    }

    /// `κ̃_k(s)`; zero for a disabled axis.
    pub fn kappa_laplace(&self, axis: usize, s: f64) -> Result<f64> {
        let a = self.aniso.a[axis];
        if a.is_infinite() {
            return Ok(0.0);
        }
        let ft = self.waiting.laplace(s);
        let den = a - ft;
        if den.abs() <= 1e-14 * a {
            return Err(Error::Pole { axis: axis + 1, s });
        }
        Ok(-s * ft / den)
    }

    pub fn kappa_laplace_complex(&self, axis: usize, s: Complex64) -> Result<Complex64> {
        let a = self.aniso.a[axis];
        if a.is_infinite() {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let ft = self.waiting.laplace_complex(s);
        let den = a - ft;
        if den.norm() <= 1e-14 * a {
            return Err(Error::Pole {
                axis: axis + 1,
                s: s.re,
            });
        }
        Ok(-s * ft / den)
    }

    /// `λ̃_k(s) = (1/s)(1 − f̃(s)/a_k)`.
    pub fn lambda_laplace(&self, axis: usize, s: f64) -> f64 {
        (1.0 - self.waiting.laplace(s) / self.aniso.a[axis]) / s
    }

    /// `κ̃_k = −s/(a_k W − 1)` as a rational function, for polynomial `W`.
    pub fn kappa_rational(&self, axis: usize) -> Option<RationalFunction> {
        let a = self.aniso.a[axis];
        let w = self.waiting.w_poly()?;
        if a.is_infinite() {
            return Some(RationalFunction::new(
                Poly::constant(0.0),
                Poly::constant(1.0),
            ));
        }
        Some(RationalFunction::new(
            Poly::new(vec![0.0, -1.0]),
            &w.scale(a) - &Poly::constant(1.0),
        ))
    }
}

/// Laplace-domain evaluator of one kernel eigenvalue.
#[derive(Clone, Debug)]
pub struct KappaLaplace {
    spec: KernelSpec,
    axis: usize,
}

impl KappaLaplace {
    pub fn eval(&self, s: f64) -> Result<f64> {
        self.spec.kappa_laplace(self.axis, s)
    }

    pub fn eval_complex(&self, s: Complex64) -> Result<Complex64> {
        self.spec.kappa_laplace_complex(self.axis, s)
    }
}

pub fn kernel_eigenvalues_laplace(spec: &KernelSpec) -> [KappaLaplace; 3] {
    [0, 1, 2].map(|axis| KappaLaplace {
        spec: spec.clone(),
        axis,
    })
}

/// Closed-form admissibility conditions for polynomial `W = ∏(s + z_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialAdmissibility {
    /// Triangle conditions and `∏z_i ≥ ¼ Σ 1/a_k`.
    pub verdict: Verdict,
    /// The stronger `∏z_i ≥ 1/a_k` for every axis.
    pub blp_zero: Verdict,
}

pub fn polynomial_admissibility_check(
    z: &[f64],
    a: &AnisotropyParameters,
) -> Result<PolynomialAdmissibility> {
    if z.is_empty() {
        return Err(invalid("at least one root is required"));
    }
    for &zi in z {
        positive("polynomial root z_i", zi)?;
    }
    let prod: f64 = z.iter().product();
    let mut margins = triangle_check(a).margins;
    margins.push(Margin::new("product", prod - 0.25 * a.reciprocal_sum()));
    let verdict = Verdict::from_margins("polynomial_admissibility", margins, tolerance());
    let blp = a
        .reciprocals()
        .iter()
        .enumerate()
        .map(|(k, r)| Margin::new(format!("blp_zero{}", k + 1), prod - r))
        .collect();
    Ok(PolynomialAdmissibility {
        verdict,
        blp_zero: Verdict::from_margins("blp_zero", blp, tolerance()),
    })
}

/// Regular part of a kernel eigenvalue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Regular {
    Terms(Vec<ExpTerm>),
    /// Samples at `t = i·step`, linearly interpolated.
    Sampled {
        step: f64,
        values: Vec<f64>,
    },
}

/// `κ(t) = delta_weight·δ(t) + r(t)`; the delta contributes `delta_weight·λ(t)`
/// to the convolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaPlusRegular {
    pub delta_weight: f64,
    pub regular: Regular,
}

impl DeltaPlusRegular {
    pub fn zero() -> Self {
        Self {
            delta_weight: 0.0,
            regular: Regular::Terms(Vec::new()),
        }
    }

    pub fn delta(weight: f64) -> Self {
        Self {
            delta_weight: weight,
            regular: Regular::Terms(Vec::new()),
        }
    }

    pub fn terms(delta_weight: f64, terms: Vec<ExpTerm>) -> Self {
        Self {
            delta_weight,
            regular: Regular::Terms(terms),
        }
    }

    pub fn regular_at(&self, t: f64) -> f64 {
        match &self.regular {
            Regular::Terms(terms) => terms.iter().map(|e| e.eval(t)).sum(),
            Regular::Sampled { step, values } => {
                let x = t / step;
                let i = (x.floor() as usize).min(values.len().saturating_sub(2));
                let w = x - i as f64;
                match values.len() {
                    0 => 0.0,
                    1 => values[0],
                    _ => values[i] + w * (values[i + 1] - values[i]),
                }
            }
        }
    }

    /// Laplace transform `d + r̃(s)`.
    pub fn laplace(&self, s: f64) -> Result<f64> {
        let reg = match &self.regular {
            Regular::Terms(terms) => terms
                .iter()
                .map(|e| e.laplace(Complex64::new(s, 0.0)).re)
                .sum(),
            Regular::Sampled { step, values } => {
                let end = step * (values.len().saturating_sub(1)) as f64;
                numeric_laplace(|t| if t <= end { self.regular_at(t) } else { 0.0 }, s)?
            }
        };
        Ok(self.delta_weight + reg)
    }

    /// `Σ c_i κ_i`. Sampled parts must share a step; exponential terms are
    /// sampled onto it when mixed.
    pub fn combine(parts: &[(f64, &DeltaPlusRegular)]) -> Result<DeltaPlusRegular> {
        let delta_weight = parts.iter().map(|(c, k)| c * k.delta_weight).sum();
        let sampled = parts.iter().find_map(|(_, k)| match &k.regular {
            Regular::Sampled { step, values } => Some((*step, values.len())),
            Regular::Terms(_) => None,
        });
        let regular = match sampled {
            None => Regular::Terms(
                parts
                    .iter()
                    .flat_map(|(c, k)| match &k.regular {
                        Regular::Terms(t) => t
                            .iter()
                            .map(|e| ExpTerm {
                                cos_coef: c * e.cos_coef,
                                sin_coef: c * e.sin_coef,
                                ..*e
                            })
                            .filter(|e| e.cos_coef != 0.0 || e.sin_coef != 0.0)
                            .collect::<Vec<_>>(),
                        Regular::Sampled { .. } => unreachable!(),
                    })
                    .collect(),
            ),
            Some((step, n)) => {
                let mut values = vec![0.0; n];
                for (c, k) in parts {
                    if let Regular::Sampled {
                        step: s2,
                        values: v2,
                    } = &k.regular
                    {
                        if *s2 != step || v2.len() != n {
                            return Err(invalid("sampled kernels must share their grid"));
                        }
                    }
                    for (i, v) in values.iter_mut().enumerate() {
                        *v += c * k.regular_at(i as f64 * step);
                    }
                }
                Regular::Sampled { step, values }
            }
        };
        Ok(DeltaPlusRegular {
            delta_weight,
            regular,
        })
    }
}

fn sinusoidal_axis(omega: f64, a: f64) -> DeltaPlusRegular {
    let r = 1.0 / a;
    let mu2 = omega * omega - r;
    let terms = if mu2 > 0.0 {
        vec![ExpTerm {
            power: 0,
            exponent: 0.0,
            frequency: mu2.sqrt(),
            cos_coef: -r,
            sin_coef: 0.0,
        }]
    } else if mu2 < 0.0 {
        let nu = (-mu2).sqrt();
        vec![
            ExpTerm::exponential(-0.5 * r, nu),
            ExpTerm::exponential(-0.5 * r, -nu),
        ]
    } else {
        vec![ExpTerm::exponential(-r, 0.0)]
    };
    DeltaPlusRegular::terms(0.0, terms)
}

/// Time-domain kernel eigenvalues by partial fractions of `−s/(a_k W(s) − 1)`
/// (closed cos/cosh forms for the sinusoidal family).
pub fn kernel_time_domain(spec: &KernelSpec) -> Result<[DeltaPlusRegular; 3]> {
    let mut out = [
        DeltaPlusRegular::zero(),
        DeltaPlusRegular::zero(),
        DeltaPlusRegular::zero(),
    ];
    for (axis, slot) in out.iter_mut().enumerate() {
        let a = spec.aniso.a[axis];
        if a.is_infinite() {
            continue;
        }
        if let Family::Sinusoidal { omega } = spec.waiting.family() {
            *slot = sinusoidal_axis(*omega, a);
            continue;
        }
        let r = spec.kappa_rational(axis).ok_or_else(|| {
            Error::Unsupported(
                "time-domain kernel needs a polynomial W (not available for tabulated f)".into(),
            )
        })?;
        let pfe = partial_fraction_with_direct(&r.num, &r.den)?;
        *slot = DeltaPlusRegular::terms(pfe.direct_term, pfe.exp_terms());
    }
    Ok(out)
}

/// Rates `k_i` of the GKSL-shaped kernel, related to the eigenvalues by
/// `κ1 = −2(k2 + k3)` and cyclic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliKernelRates {
    pub k: [DeltaPlusRegular; 3],
}

/// `k1 = (κ1 − κ2 − κ3)/4` and cyclic.
pub fn kernel_rates_from_eigenvalues(kappa: &[DeltaPlusRegular; 3]) -> Result<PauliKernelRates> {
    let k = |i: usize, j: usize, l: usize| {
        DeltaPlusRegular::combine(&[(0.25, &kappa[i]), (-0.25, &kappa[j]), (-0.25, &kappa[l])])
    };
    Ok(PauliKernelRates {
        k: [k(0, 1, 2)?, k(1, 2, 0)?, k(2, 0, 1)?],
    })
}

/// `κ1 = −2(k2 + k3)` and cyclic.
pub fn kernel_eigenvalues_from_rates(rates: &PauliKernelRates) -> Result<[DeltaPlusRegular; 3]> {
    let k = &rates.k;
    let kap = |j: usize, l: usize| DeltaPlusRegular::combine(&[(-2.0, &k[j]), (-2.0, &k[l])]);
    Ok([kap(1, 2)?, kap(2, 0)?, kap(0, 1)?])
}

/// Semi-Markov kernel built from the waiting-time density `weight·f(t)`:
/// `k̃3(s) = s w f̃/(1 − w f̃)`, `k1 = k2 = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiMarkovKernel {
    pub waiting: WaitingFunction,
    pub weight: f64,
}

pub fn semi_markov_kernel(f: &WaitingFunction, weight: f64) -> Result<SemiMarkovKernel> {
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(invalid(format!(
            "density weight must be non-negative, got {weight}"
        )));
    }
    if !f.is_nonnegative() {
        return Err(invalid("semi-Markov waiting density must be non-negative"));
    }
    let total = weight * f.laplace(0.0);
    if total > 1.0 + 1e-12 {
        return Err(invalid(format!(
            "waiting density integrates to {total} > 1"
        )));
    }
    Ok(SemiMarkovKernel {
        waiting: f.clone(),
        weight,
    })
}

impl SemiMarkovKernel {
    pub fn k3_laplace(&self, s: f64) -> f64 {
        let g = self.weight * self.waiting.laplace(s);
        s * g / (1.0 - g)
    }

    /// `κ̃1 = κ̃2 = −2 k̃3`, `κ̃3 = 0`.
    pub fn kappa_laplace(&self, axis: usize, s: f64) -> f64 {
        if axis == 2 {
            0.0
        } else {
            -2.0 * self.k3_laplace(s)
        }
    }

    pub fn kappa_laplace_complex(&self, axis: usize, s: Complex64) -> Complex64 {
        if axis == 2 {
            return Complex64::new(0.0, 0.0);
        }
        let g = self.weight * self.waiting.laplace_complex(s);
        -2.0 * s * g / (1.0 - g)
    }

    /// `k3(t)` for polynomial `W`: partial fractions of `s w/(W − w)`.
    pub fn k3_time_domain(&self) -> Result<DeltaPlusRegular> {
        let w = self.waiting.w_poly().ok_or_else(|| {
            Error::Unsupported("semi-Markov time-domain kernel needs a polynomial W".into())
        })?;
        if self.weight == 0.0 {
            return Ok(DeltaPlusRegular::zero());
        }
        let pfe = partial_fraction_with_direct(
            &Poly::new(vec![0.0, self.weight]),
            &(&w - &Poly::constant(self.weight)),
        )?;
        Ok(DeltaPlusRegular::terms(pfe.direct_term, pfe.exp_terms()))
    }

    pub fn kernel_time_domain(&self) -> Result<[DeltaPlusRegular; 3]> {
        let k3 = self.k3_time_domain()?;
        let k12 = DeltaPlusRegular::combine(&[(-2.0, &k3)])?;
        Ok([k12.clone(), k12, DeltaPlusRegular::zero()])
    }
}

/// Sufficient condition for vanishing BLP measure: `F(t) ≤ min a_k` on the
/// grid and `f̃` completely monotone.
pub fn blp_sufficient_check(spec: &KernelSpec, grid: &TimeGrid) -> Result<Verdict> {
    let a_min = spec.aniso.min();
    let mut scan = GridScan::new(["integral_vs_a_min"], tolerance());
    for t in grid.times() {
        scan.observe(t, &[a_min - spec.waiting.cumulative(t)]);
    }
    let scanned = scan.finish("blp_sufficient");
    let cm = waiting_cm_check(&spec.waiting, false)?;
    let mut margins = scanned.margins;
    let cm_verdict = cm.to_verdict("cm");
    margins.extend(cm_verdict.margins);
    let mut v = Verdict::from_margins("blp_sufficient", margins, tolerance());
    v.first_violation = scanned.first_violation.or(cm_verdict.first_violation);
    v.passed = v.first_violation.is_none();
    Ok(v)
}

/// CM test of `f̃` (or of `f̃/s` when `divide_by_s`), exact for polynomial `W`.
pub fn waiting_cm_check(w: &WaitingFunction, divide_by_s: bool) -> Result<CmVerdict> {
    let opts = CmOptions::default();
    match w.laplace_rational() {
        Some(r) => Ok(cm_check_rational(
            &if divide_by_s { r.divide_by_s() } else { r },
            &opts,
        )),
        None if divide_by_s => cm_check(|s| w.laplace(s) / s, &opts),
        None => cm_check(|s| w.laplace(s), &opts),
    }
}
