//! Numerical Laplace transforms and inversion, complete-monotonicity
//! falsification, and partial-fraction machinery for rational transforms.

use std::f64::consts::{LN_2, PI};
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dd::{CDd, Dd};
use crate::error::{invalid, Error, Result};
use crate::exec::map_range;
use crate::poly::{series_divide, taylor_shift, Poly, RationalFunction};
use crate::verdict::{Margin, Verdict};

// ---------------------------------------------------------------------------
// Forward transform
// ---------------------------------------------------------------------------

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadratureOptions {
    pub rel_tol: f64,
    /// The semi-infinite range is cut where `e^{-sT} max|f| / s` drops below
    /// this fraction of the accumulated integral.
    pub truncation: f64,
    pub max_evaluations: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            truncation: 1e-14,
            max_evaluations: 2_000_000,
        }
    }
}

struct Panel<'a, F> {
    f: &'a F,
    s: f64,
    evals: usize,
    max_abs_f: f64,
}

impl<F: Fn(f64) -> f64> Panel<'_, F> {
    fn gk15(&mut self, a: f64, b: f64) -> (f64, f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut g = |t: f64| {
            let v = (self.f)(t);
            self.max_abs_f = self.max_abs_f.max(v.abs());
            v * (-self.s * t).exp()
        };
        let fc = g(c);
        let mut kron = fc * WGK[7];
        let mut gauss = fc * WG[3];
        for j in 0..7 {
            let x = h * XGK[j];
            let pair = g(c - x) + g(c + x);
            kron += WGK[j] * pair;
            if j % 2 == 1 {
                gauss += WG[j / 2] * pair;
            }
        }
        self.evals += 15;
        (kron * h, ((kron - gauss) * h).abs())
    }

    fn adaptive(&mut self, a: f64, b: f64, abs_tol: f64, depth: u32, budget: usize) -> Option<f64> {
        let (k, err) = self.gk15(a, b);
        if !k.is_finite() {
            return None;
        }
        if err <= abs_tol.max(1e-15 * k.abs()) || depth == 0 {
            return if err <= abs_tol.max(1e-15 * k.abs()) || err <= 1e3 * abs_tol {
                Some(k)
            } else {
                None
            };
        }
        if self.evals > budget {
            return None;
        }
        let m = 0.5 * (a + b);
        let left = self.adaptive(a, m, 0.5 * abs_tol, depth - 1, budget)?;
        let right = self.adaptive(m, b, 0.5 * abs_tol, depth - 1, budget)?;
        Some(left + right)
    }
}

/// `∫₀^∞ e^{-st} f(t) dt` by adaptive Gauss–Kronrod on panels of width `2/s`.
pub fn numeric_laplace<F: Fn(f64) -> f64>(f: F, s: f64) -> Result<f64> {
    numeric_laplace_with(f, s, &QuadratureOptions::default())
}

pub fn numeric_laplace_with<F: Fn(f64) -> f64>(
    f: F,
    s: f64,
    opts: &QuadratureOptions,
) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(invalid(format!(
            "Laplace variable must be positive, got {s}"
        )));
    }
    let width = 2.0 / s;
    let mut panel = Panel {
        f: &f,
        s,
        evals: 0,
        max_abs_f: 0.0,
    };
    let mut total = 0.0;
    let mut a = 0.0;
    loop {
        let b = a + width;
        let (guess, _) = panel.gk15(a, b);
        let abs_tol = opts.rel_tol * (total + guess).abs().max(1e-300);
        match panel.adaptive(a, b, abs_tol, 40, opts.max_evaluations) {
            Some(v) => total += v,
            None => return Err(Error::QuadratureNoConvergence { s, partial: total }),
        }
        a = b;
        let tail = (-s * a).exp() * panel.max_abs_f / s;
        if tail <= opts.truncation * total.abs() || (panel.max_abs_f == 0.0 && s * a > 40.0) {
            return Ok(total);
        }
        if s * a > 2000.0 || panel.evals > opts.max_evaluations {
            return Err(Error::QuadratureNoConvergence { s, partial: total });
        }
    }
}

// ---------------------------------------------------------------------------
// Inversion
// ---------------------------------------------------------------------------

/// Default Gaver–Stehfest order.
pub const DEFAULT_STEHFEST_ORDER: usize = 16;
/// Default number of nodes on the fixed Talbot contour.
pub const DEFAULT_TALBOT_ORDER: usize = 24;
const MAX_STEHFEST_ORDER: usize = 30;

fn binomial(n: u128, k: u128) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Gaver–Stehfest weights `V_1..V_M` for even `order = M`.
pub fn stehfest_weights(order: usize) -> Result<Vec<f64>> {
    cached_stehfest_weights(order).map(<[f64]>::to_vec)
}

fn cached_stehfest_weights(order: usize) -> Result<&'static [f64]> {
    static TABLE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    if order < 2 || !order.is_multiple_of(2) || order > MAX_STEHFEST_ORDER {
        return Err(invalid(format!(
            "Stehfest order must be even and in 2..={MAX_STEHFEST_ORDER}, got {order}"
        )));
    }
    let table = TABLE.get_or_init(|| {
        (1..=MAX_STEHFEST_ORDER / 2)
            .map(|n| compute_stehfest_weights(2 * n))
            .collect()
    });
    Ok(&table[order / 2 - 1])
}

fn compute_stehfest_weights(order: usize) -> Vec<f64> {
    let n = order / 2;
    let n_fact = Dd::from_u128((1..=n as u128).product());
    (1..=order)
        .map(|k| {
            let mut sum: i128 = 0;
            for j in k.div_ceil(2)..=k.min(n) {
                let (j, k) = (j as u128, k as u128);
                let term = j.pow(n as u32 + 1)
                    * binomial(n as u128, j)
                    * binomial(2 * j, j)
                    * binomial(j, k - j);
                sum += term as i128;
            }
            let sign = if (k + n).is_multiple_of(2) { 1.0 } else { -1.0 };
            sign * (Dd::from_u128(sum as u128) / n_fact).to_f64()
        })
        .collect()
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Inversion {
            t,
            reason: "time must be positive".into(),
        });
    }
    Ok(())
}

/// Gaver–Stehfest inversion of a transform sampled on the positive real axis.
pub fn gaver_stehfest<F: Fn(f64) -> f64>(f: F, t: f64, order: usize) -> Result<f64> {
    check_time(t)?;
    let weights = cached_stehfest_weights(order)?;
    let scale = LN_2 / t;
    let mut acc = Dd::ZERO;
    for (k, w) in weights.iter().enumerate() {
        let v = f(scale * (k + 1) as f64);
        if !v.is_finite() {
            return Err(Error::Inversion {
                t,
                reason: format!("transform not finite at s = {}", scale * (k + 1) as f64),
            });
        }
        acc = acc + Dd::from(*w) * Dd::from(v);
    }
    Ok(acc.to_f64() * scale)
}

/// Default number of Gaver functionals for [`gaver_wynn`] (odd).
pub const DEFAULT_GAVER_WYNN_ORDER: usize = 9;
const MAX_GAVER_WYNN_ORDER: usize = 15;

/// Gaver functionals accelerated by Wynn's rho algorithm, with the functionals
/// and the rho table in double-double arithmetic. `order` is the (odd) number
/// of functionals; the transform is sampled at `k ln2/t`, `k = 1..2·order`.
pub fn gaver_wynn<F: Fn(f64) -> f64>(f: F, t: f64, order: usize) -> Result<f64> {
    check_time(t)?;
    if order < 3 || order.is_multiple_of(2) || order > MAX_GAVER_WYNN_ORDER {
        return Err(invalid(format!(
            "Gaver-Wynn order must be odd and in 3..={MAX_GAVER_WYNN_ORDER}, got {order}"
        )));
    }
    let scale = LN_2 / t;
    let mut samples = Vec::with_capacity(2 * order);
    for k in 1..=2 * order {
        let s = scale * k as f64;
        let v = f(s);
        if !v.is_finite() {
            return Err(Error::Inversion {
                t,
                reason: format!("transform not finite at s = {s}"),
            });
        }
        samples.push(Dd::from(v));
    }
    let functionals: Vec<Dd> = (1..=order)
        .map(|n| {
            let mut acc = Dd::ZERO;
            for j in 0..=n {
                let term = Dd::from_u128(binomial(n as u128, j as u128)) * samples[n + j - 1];
                acc = if j % 2 == 0 { acc + term } else { acc - term };
            }
            acc * Dd::from_u128(binomial(2 * n as u128, n as u128)) * Dd::from(n as f64 * scale)
        })
        .collect();

    // rho_{-1} = 0, rho_0 = functionals, rho_k[i] = rho_{k-2}[i+1] + k/(rho_{k-1}[i+1] - rho_{k-1}[i]).
    let mut before = vec![Dd::ZERO; order + 1];
    let mut current = functionals.clone();
    let mut estimate = functionals[order - 1].to_f64();
    for k in 1..order {
        let next: Vec<Dd> = (0..current.len() - 1)
            .map(|i| before[i + 1] + Dd::from(k as f64) / (current[i + 1] - current[i]))
            .collect();
        before = current;
        current = next;
        if k % 2 == 0 {
            let v = current[0].to_f64();
            if !v.is_finite() {
                break;
            }
            estimate = v;
        }
    }
    Ok(estimate)
}

/// Real-axis inversion with the default method: [`gaver_wynn`] with
/// [`DEFAULT_GAVER_WYNN_ORDER`] functionals.
pub fn inverse_laplace<F: Fn(f64) -> f64>(f: F, t: f64) -> Result<f64> {
    gaver_wynn(f, t, DEFAULT_GAVER_WYNN_ORDER)
}

/// Real-axis inversion algorithm and its order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum RealInversion {
    GaverWynn { order: usize },
    Stehfest { order: usize },
}

impl Default for RealInversion {
    fn default() -> Self {
        RealInversion::GaverWynn {
            order: DEFAULT_GAVER_WYNN_ORDER,
        }
    }
}

impl RealInversion {
    pub fn invert<F: Fn(f64) -> f64>(&self, f: F, t: f64) -> Result<f64> {
        match *self {
            RealInversion::GaverWynn { order } => gaver_wynn(f, t, order),
            RealInversion::Stehfest { order } => gaver_stehfest(f, t, order),
        }
    }

    /// The same method two orders lower, used as a consistency reference.
    fn lower(&self) -> Self {
        match *self {
            RealInversion::GaverWynn { order } => RealInversion::GaverWynn {
                order: order.saturating_sub(2).max(3),
            },
            RealInversion::Stehfest { order } => RealInversion::Stehfest {
                order: order.saturating_sub(2).max(2),
            },
        }
    }
}

/// Inversion result with a self-consistency estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckedInversion {
    pub value: f64,
    /// Difference between the requested order and two orders lower.
    pub spread: f64,
    /// Set when the spread indicates the transform is outside the regime where
    /// real-axis inversion is reliable (typically oscillatory time functions).
    pub degraded: bool,
}

pub fn inverse_laplace_checked<F: Fn(f64) -> f64>(
    f: F,
    t: f64,
    method: RealInversion,
) -> Result<CheckedInversion> {
    let value = method.invert(&f, t)?;
    let lower = method.lower().invert(&f, t)?;
    let spread = (value - lower).abs();
    Ok(CheckedInversion {
        value,
        spread,
        degraded: spread > 1e-4 * value.abs().max(1.0),
    })
}

/// Fixed-Talbot inversion; needs the transform off the real axis but handles
/// oscillatory time functions.
pub fn talbot<F: Fn(Complex64) -> Complex64>(f: F, t: f64, order: usize) -> Result<f64> {
    check_time(t)?;
    if order < 2 {
        return Err(invalid("Talbot order must be at least 2"));
    }
    let m = order as f64;
    let r = 2.0 * m / (5.0 * t);
    let f0 = f(Complex64::new(r, 0.0));
    let mut acc = 0.5 * f0.re * (r * t).exp();
    for k in 1..order {
        let theta = k as f64 * PI / m;
        let cot = theta.cos() / theta.sin();
        let s = Complex64::new(r * theta * cot, r * theta);
        let sigma = theta + (theta * cot - 1.0) * cot;
        let term = (s * t).exp() * f(s) * Complex64::new(1.0, sigma);
        acc += term.re;
    }
    let v = acc * r / m;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Inversion {
            t,
            reason: "Talbot sum is not finite".into(),
        })
    }
}

// ---------------------------------------------------------------------------
// Complete monotonicity
// ---------------------------------------------------------------------------

const MAX_FD_ORDER: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CmStatus {
    PassedUpToOrder(usize),
    /// `value` is `(-1)^n f^{(n)}(s)`.
    Violated {
        order: usize,
        s: f64,
        value: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmVerdict {
    pub status: CmStatus,
    pub orders_tested: usize,
    pub grid: Vec<f64>,
    /// Grid points where the function could not be evaluated.
    pub skipped: Vec<f64>,
}

impl CmVerdict {
    pub fn passed(&self) -> bool {
        matches!(self.status, CmStatus::PassedUpToOrder(_))
    }

    pub fn to_verdict(&self, check: &str) -> Verdict {
        let (margin, at) = match self.status {
            CmStatus::PassedUpToOrder(_) => (0.0, None),
            CmStatus::Violated { s, value, .. } => (value, Some(s)),
        };
        let mut v = Verdict::from_margins(check, vec![Margin::new("cm", margin)], 0.0);
        if let CmStatus::Violated { order, .. } = self.status {
            if let Some(viol) = v.first_violation.as_mut() {
                viol.at = at;
                viol.label = format!("cm order {order}");
            }
        }
        if !self.skipped.is_empty() {
            v.notes.push(format!(
                "{} grid points skipped (evaluation failed or underflowed)",
                self.skipped.len()
            ));
        }
        v
    }
}

#[derive(Clone, Debug)]
pub struct CmOptions {
    pub max_order: usize,
    pub grid: Vec<f64>,
}

impl Default for CmOptions {
    fn default() -> Self {
        Self {
            max_order: 8,
            grid: log_grid(1e-3, 1e3, 64),
        }
    }
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1).max(1) as f64).exp())
        .collect()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `(-1)^n f^{(n)}(s) s^n / n!` by a central difference with step `c·s`.
fn scaled_difference<F: Fn(f64) -> f64>(f: &F, s: f64, n: usize, c: f64) -> f64 {
    let mut acc = 0.0;
    let mut binom = 1.0;
    for k in 0..=n {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binom * f(s * (1.0 + (n as f64 / 2.0 - k as f64) * c));
        binom = binom * (n - k) as f64 / (k + 1) as f64;
    }
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * acc / (factorial(n) * c.powi(n as i32))
}

/// Ridders extrapolation of the scaled central difference as the relative step
/// shrinks geometrically from `c0`. Returns `(estimate, error estimate)`.
fn ridders<F: Fn(f64) -> f64>(f: &F, s: f64, n: usize, c0: f64) -> (f64, f64) {
    const SHRINK: f64 = 1.4;
    const LEVELS: usize = 12;
    let fac0 = SHRINK * SHRINK;
    let mut c = c0;
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(LEVELS);
    let mut best = (f64::INFINITY, f64::NAN);
    for i in 0..LEVELS {
        let mut row = vec![scaled_difference(f, s, n, c)];
        let mut fac = fac0;
        for j in 1..=i {
            let v = (row[j - 1] * fac - table[i - 1][j - 1]) / (fac - 1.0);
            fac *= fac0;
            let err = (v - row[j - 1]).abs().max((v - table[i - 1][j - 1]).abs());
            if err <= best.0 {
                best = (err, v);
            }
            row.push(v);
        }
        if i > 0 && (row[i] - table[i - 1][i - 1]).abs() >= 2.0 * best.0 {
            break;
        }
        table.push(row);
        c /= SHRINK;
    }
    (best.1, best.0)
}

/// Scaled derivative `(-1)^n f^{(n)}(s) s^n / n!` with an error estimate. The
/// function's natural scale near `s` is unknown (it may be `s` itself or much
/// smaller), so Ridders runs from several starting steps and the estimate with
/// the smallest error wins.
fn scaled_derivative<F: Fn(f64) -> f64>(f: &F, s: f64, n: usize) -> (f64, f64) {
    if n == 0 {
        return (f(s), 0.0);
    }
    [0.5, 0.05, 0.005]
        .iter()
        .map(|&c| ridders(f, s, n, c / n as f64))
        .filter(|(v, e)| v.is_finite() && e.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((f64::NAN, f64::NAN))
}

/// Tolerance, relative to `|f(s)|`, for the finite-difference path.
pub const CM_TOLERANCE: f64 = 1e-7;
/// Tolerance, relative to `|f(s)|`, for exactly differentiated rational inputs.
pub const CM_TOLERANCE_RATIONAL: f64 = 1e-12;

fn first_violation(rows: Vec<Option<Vec<f64>>>, opts: &CmOptions, tol: f64) -> CmVerdict {
    let mut skipped = Vec::new();
    let mut worst: Option<(usize, usize, f64)> = None;
    for (i, row) in rows.iter().enumerate() {
        let Some(d) = row else {
            skipped.push(opts.grid[i]);
            continue;
        };
        let s = opts.grid[i];
        let scale = d[0].abs().max(f64::MIN_POSITIVE);
        for (n, &dn) in d.iter().enumerate() {
            if !(dn >= -tol * scale) {
                let raw = dn * factorial(n) / s.powi(n as i32);
                if worst.is_none_or(|(wn, wi, _)| (n, i) < (wn, wi)) {
                    worst = Some((n, i, raw));
                }
                break;
            }
        }
    }
    let status = match worst {
        None => CmStatus::PassedUpToOrder(opts.max_order),
        Some((order, i, value)) => CmStatus::Violated {
            order,
            s: opts.grid[i],
            value,
        },
    };
    CmVerdict {
        status,
        orders_tested: opts.max_order,
        grid: opts.grid.clone(),
        skipped,
    }
}

/// Values this close to underflow carry too few significant bits to difference.
const UNDERFLOW_GUARD: f64 = 1e-250;

/// Falsification test of complete monotonicity for a function known only by
/// point evaluation. Grid points where `|f|` is within reach of underflow are
/// skipped. Derivatives up to order 12 are supported.
pub fn cm_check<F: Fn(f64) -> f64 + Sync>(f: F, opts: &CmOptions) -> Result<CmVerdict> {
    if opts.max_order > MAX_FD_ORDER {
        return Err(Error::Unsupported(format!(
            "finite-difference CM check supports orders up to {MAX_FD_ORDER}"
        )));
    }
    let rows = map_range(opts.grid.len(), |i| {
        let s = opts.grid[i];
        let value = f(s);
        if value != 0.0 && value.abs() < UNDERFLOW_GUARD {
            return None;
        }
        // Only a violation beyond the estimated differencing error counts.
        let d: Vec<f64> = (0..=opts.max_order)
            .map(|n| {
                let (v, err) = scaled_derivative(&f, s, n);
                if v < 0.0 {
                    (v + err).min(0.0)
                } else {
                    v
                }
            })
            .collect();
        d.iter().all(|v| v.is_finite()).then_some(d)
    });
    Ok(first_violation(rows, opts, CM_TOLERANCE))
}

/// Complete-monotonicity test of a rational function using exact Taylor coefficients.
pub fn cm_check_rational(r: &RationalFunction, opts: &CmOptions) -> CmVerdict {
    let rows = map_range(opts.grid.len(), |i| {
        let s = opts.grid[i];
        let c = r.taylor(s, opts.max_order);
        let d: Vec<f64> = c
            .iter()
            .enumerate()
            .map(|(n, cn)| if n % 2 == 0 { 1.0 } else { -1.0 } * cn * s.powi(n as i32))
            .collect();
        d.iter().all(|v| v.is_finite()).then_some(d)
    });
    first_violation(rows, opts, CM_TOLERANCE_RATIONAL)
}

// ---------------------------------------------------------------------------
// Exponential sums and partial fractions
// ---------------------------------------------------------------------------

/// `t^power · e^{exponent·t} · (cos_coef·cos(frequency·t) + sin_coef·sin(frequency·t))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    pub power: u32,
    pub exponent: f64,
    pub frequency: f64,
    pub cos_coef: f64,
    pub sin_coef: f64,
}

impl ExpTerm {
    pub fn exponential(coef: f64, exponent: f64) -> Self {
        Self {
            power: 0,
            exponent,
            frequency: 0.0,
            cos_coef: coef,
            sin_coef: 0.0,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let osc = if self.frequency == 0.0 {
            self.cos_coef
        } else {
            let (s, c) = (self.frequency * t).sin_cos();
            self.cos_coef * c + self.sin_coef * s
        };
        t.powi(self.power as i32) * (self.exponent * t).exp() * osc
    }

    /// Complex amplitude `c` with `term = Re[c · t^m e^{(σ+iμ)t}]`.
    fn amplitude(&self) -> Complex64 {
        Complex64::new(self.cos_coef, -self.sin_coef)
    }

    pub fn pole(&self) -> Complex64 {
        Complex64::new(self.exponent, self.frequency)
    }

    /// Laplace transform at complex `s` (valid right of the pole).
    pub fn laplace(&self, s: Complex64) -> Complex64 {
        let m = self.power as i32;
        let k = factorial(self.power as usize);
        let c = self.amplitude();
        let p = self.pole();
        if self.frequency == 0.0 {
            return c.re * k / (s - p).powi(m + 1);
        }
        0.5 * k * (c / (s - p).powi(m + 1) + c.conj() / (s - p.conj()).powi(m + 1))
    }
}

/// One pole of a partial-fraction expansion; `residues[j]` multiplies `1/(s-pole)^{j+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolePart {
    pub pole: Complex64,
    pub multiplicity: usize,
    pub residues: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialFractionExpansion {
    pub poles: Vec<PolePart>,
    pub direct_term: f64,
    /// Largest relative mismatch between expansion and input at the probe points.
    pub recombination_error: f64,
}

impl PartialFractionExpansion {
    pub fn eval_complex(&self, s: Complex64) -> Complex64 {
        let mut acc = Complex64::new(self.direct_term, 0.0);
        for part in &self.poles {
            let d = s - part.pole;
            for (j, r) in part.residues.iter().enumerate() {
                acc += r / d.powi(j as i32 + 1);
            }
        }
        acc
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.eval_complex(Complex64::new(s, 0.0)).re
    }

    /// Inverse transform of the strictly proper part as real exponential terms.
    pub fn exp_terms(&self) -> Vec<ExpTerm> {
        let mut out = Vec::new();
        for part in &self.poles {
            if part.pole.im < 0.0 {
                continue;
            }
            let doubled = if part.pole.im > 0.0 { 2.0 } else { 1.0 };
            for (j, r) in part.residues.iter().enumerate() {
                let c = doubled * r / factorial(j);
                if c == Complex64::new(0.0, 0.0) {
                    continue;
                }
                out.push(ExpTerm {
                    power: j as u32,
                    exponent: part.pole.re,
                    frequency: part.pole.im,
                    cos_coef: c.re,
                    sin_coef: if part.pole.im > 0.0 { -c.im } else { 0.0 },
                });
            }
        }
        out
    }

    /// Inverse transform of the strictly proper part at time `t`.
    pub fn time_domain(&self, t: f64) -> f64 {
        self.exp_terms().iter().map(|e| e.eval(t)).sum()
    }
}

/// Partial fractions of a strictly proper rational function.
pub fn partial_fraction_decompose(num: &Poly, den: &Poly) -> Result<PartialFractionExpansion> {
    if den.is_zero() {
        return Err(invalid("zero denominator"));
    }
    if !num.is_zero() && num.degree() >= den.degree() {
        return Err(invalid(format!(
            "numerator degree {} must be below denominator degree {}",
            num.degree(),
            den.degree()
        )));
    }
    decompose(num, den)
}

/// Like [`partial_fraction_decompose`] but also accepts equal degrees, splitting
/// off the constant direct term.
pub fn partial_fraction_with_direct(num: &Poly, den: &Poly) -> Result<PartialFractionExpansion> {
    if den.is_zero() {
        return Err(invalid("zero denominator"));
    }
    if num.is_zero() || num.degree() < den.degree() {
        return decompose(num, den);
    }
    if num.degree() > den.degree() {
        return Err(invalid("numerator degree exceeds denominator degree"));
    }
    let direct = num.leading() / den.leading();
    let mut rest = (num - &den.scale(direct)).coeffs().to_vec();
    rest.truncate(den.degree());
    let mut pfe = decompose(&Poly::new(rest), den)?;
    pfe.direct_term = direct;
    pfe.recombination_error =
        recombination_error(&pfe, &RationalFunction::new(num.clone(), den.clone()));
    Ok(pfe)
}

fn decompose(num: &Poly, den: &Poly) -> Result<PartialFractionExpansion> {
    let roots = den.roots_with_multiplicity();
    let nc: Vec<Complex64> = num
        .coeffs()
        .iter()
        .map(|&c| Complex64::new(c, 0.0))
        .collect();
    let dc: Vec<Complex64> = den
        .coeffs()
        .iter()
        .map(|&c| Complex64::new(c, 0.0))
        .collect();
    let mut poles = Vec::with_capacity(roots.len());
    for &(p, m) in &roots {
        if m == 1 {
            // Residues of nearby simple poles are large and cancel in the sum, so
            // both the root and N/D' are refined in double-double.
            let (pole, residue) = if p.im < 0.0 {
                let (q, r) = simple_pole(num.coeffs(), den.coeffs(), p.conj());
                (q.conj(), r.conj())
            } else {
                simple_pole(num.coeffs(), den.coeffs(), p)
            };
            poles.push(PolePart {
                pole,
                multiplicity: 1,
                residues: vec![residue],
            });
            continue;
        }
        let n_shift = taylor_shift(&nc, p);
        let d_shift = taylor_shift(&dc, p);
        let q = &d_shift[m.min(d_shift.len() - 1)..];
        if q[0].norm() == 0.0 {
            return Err(invalid(format!("could not isolate denominator root {p}")));
        }
        let g = series_divide(&n_shift, q, m);
        // g_j multiplies (s-p)^{j-m}
        let residues = (0..m).map(|j| g[m - 1 - j]).collect();
        poles.push(PolePart {
            pole: p,
            multiplicity: m,
            residues,
        });
    }
    // Make conjugate poles carry exactly conjugate residues.
    for i in 0..poles.len() {
        if poles[i].pole.im > 0.0 {
            if let Some(j) = poles.iter().position(|q| q.pole == poles[i].pole.conj()) {
                let res: Vec<Complex64> = poles[i].residues.iter().map(|r| r.conj()).collect();
                poles[j].residues = res;
            }
        }
    }
    let mut pfe = PartialFractionExpansion {
        poles,
        direct_term: 0.0,
        recombination_error: 0.0,
    };
    pfe.recombination_error =
        recombination_error(&pfe, &RationalFunction::new(num.clone(), den.clone()));
    Ok(pfe)
}

/// Horner evaluation of `P(z)` and `P'(z)` in double-double.
fn horner_dd(coeffs: &[f64], z: CDd) -> (CDd, CDd) {
    let mut p = CDd::default();
    let mut dp = CDd::default();
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + CDd::from(Complex64::new(c, 0.0));
    }
    (p, dp)
}

/// Newton-refines a simple root of `den` and returns it with its residue `num/den'`.
fn simple_pole(num: &[f64], den: &[f64], guess: Complex64) -> (Complex64, Complex64) {
    let mut z = CDd::from(guess);
    for _ in 0..3 {
        let (p, dp) = horner_dd(den, z);
        if p.is_zero() || dp.is_zero() {
            break;
        }
        z = z - p / dp;
    }
    if guess.im == 0.0 {
        z.im = Dd::ZERO;
    }
    let (_, dp) = horner_dd(den, z);
    let (n, _) = horner_dd(num, z);
    if dp.is_zero() {
        return (guess, Complex64::new(f64::NAN, f64::NAN));
    }
    (z.to_c64(), (n / dp).to_c64())
}

fn recombination_error(pfe: &PartialFractionExpansion, r: &RationalFunction) -> f64 {
    let radius = pfe.poles.iter().map(|p| p.pole.norm()).fold(1.0, f64::max);
    [
        Complex64::new(1.7, 0.3),
        Complex64::new(-0.4, 2.2),
        Complex64::new(3.1, -1.1),
        Complex64::new(0.25, 0.9),
    ]
    .iter()
    .map(|&u| {
        let s = u * radius;
        let want = r.eval_complex(s);
        (pfe.eval_complex(s) - want).norm() / want.norm().max(f64::MIN_POSITIVE)
    })
    .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Identity checks
// ---------------------------------------------------------------------------

/// Relative tolerance of [`lemma_identity_check`].
pub const LEMMA_TOLERANCE: f64 = 1e-10;

/// Checks, in double-double arithmetic, the telescoping decomposition
/// `1/(s∏(s+z_i)) = A(1/s − Σ_i ∏_{j<i} z_j / ∏_{j≤i}(s+z_j))`, `A = 1/∏z_i`,
/// together with the polynomial identity behind it
/// `∏z_i = ∏(s+z_i) − s Σ_i ∏_{j<i} z_j ∏_{j>i}(s+z_j)`, at every probe `s`.
pub fn lemma_identity_check(z: &[f64], probes: &[f64]) -> Result<Verdict> {
    if z.iter().any(|&zi| !(zi > 0.0 && zi.is_finite())) {
        return Err(invalid("roots must be positive and finite"));
    }
    if probes.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(invalid("probe points must be positive"));
    }
    let zd: Vec<Dd> = z.iter().map(|&v| Dd::from(v)).collect();
    let prod_z = zd.iter().fold(Dd::ONE, |a, &b| a * b);
    let mut worst_decomposition: f64 = 0.0;
    let mut worst_polynomial: f64 = 0.0;
    for &s in probes {
        let sd = Dd::from(s);
        let shifted: Vec<Dd> = zd.iter().map(|&zi| sd + zi).collect();
        let prod_shifted = shifted.iter().fold(Dd::ONE, |a, &b| a * b);
        let lhs = Dd::ONE / (sd * prod_shifted);

        let mut bracket = Dd::ONE / sd;
        let mut z_prefix = Dd::ONE;
        let mut shifted_prefix = Dd::ONE;
        for i in 0..z.len() {
            shifted_prefix = shifted_prefix * shifted[i];
            bracket = bracket - z_prefix / shifted_prefix;
            z_prefix = z_prefix * zd[i];
        }
        let rhs = bracket / prod_z;
        worst_decomposition = worst_decomposition.max(((lhs - rhs).to_f64() / lhs.to_f64()).abs());

        let mut sum = Dd::ZERO;
        let mut z_prefix = Dd::ONE;
        for i in 0..z.len() {
            let tail = shifted[i + 1..].iter().fold(Dd::ONE, |a, &b| a * b);
            sum = sum + z_prefix * tail;
            z_prefix = z_prefix * zd[i];
        }
        let rhs_poly = prod_shifted - sd * sum;
        let rel = ((prod_z - rhs_poly).to_f64() / prod_z.to_f64()).abs();
        worst_polynomial = worst_polynomial.max(rel);
    }
    Ok(Verdict::from_margins(
        "lemma_identity",
        vec![
            Margin::new("decomposition", LEMMA_TOLERANCE - worst_decomposition),
            Margin::new("polynomial", LEMMA_TOLERANCE - worst_polynomial),
        ],
        0.0,
    ))
}

/// Extrapolates `s·f̃(s)` to `s → ∞` from samples at `10³..10⁶` and compares
/// with `expected` (absolute tolerance `1e-4`).
pub fn initial_value_check<F: Fn(f64) -> f64>(f: F, expected: f64) -> Verdict {
    let s = [1e3, 1e4, 1e5, 1e6];
    let v: Vec<f64> = s.iter().map(|&si| si * f(si)).collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Verdict::from_margins("initial_value", vec![Margin::new("limit", f64::NAN)], 0.0)
            .with_note(format!("s·f(s) not finite: {v:?}"));
    }
    // Fit v = L + c/s through the two largest s.
    let limit = (s[3] * v[3] - s[2] * v[2]) / (s[3] - s[2]);
    let steps = [v[1] - v[0], v[2] - v[1], v[3] - v[2]];
    let converging =
        steps[2].abs() <= steps[1].abs() + 1e-12 && steps[1].abs() <= steps[0].abs() + 1e-12;
    let mut verdict = Verdict::from_margins(
        "initial_value",
        vec![
            Margin::new("limit", 1e-4 - (limit - expected).abs()),
            Margin::new("convergence", if converging { 0.0 } else { -1.0 }),
        ],
        0.0,
    );
    verdict
        .notes
        .push(format!("s·f(s) samples {v:?}, extrapolated limit {limit}"));
    verdict
}
