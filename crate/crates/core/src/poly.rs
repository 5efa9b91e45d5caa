//! Real polynomials and rational functions: evaluation, Taylor expansion and
//! root finding (companion-matrix eigenvalues, Newton-polished).

use std::ops::{Add, Div, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Roots closer than this (relative) are always treated as one repeated root.
pub const REPEATED_ROOT_SPACING: f64 = 1e-8;
/// Roots closer than this are merged when the derivatives confirm multiplicity.
const CLUSTER_CANDIDATE_SPACING: f64 = 1e-5;
const MULTIPLICITY_RESIDUAL: f64 = 1e-9;

/// Polynomial with real coefficients, stored in ascending powers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    /// Builds a polynomial from coefficients in descending powers.
    pub fn from_descending(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().rev().copied().collect())
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// The monomial `s`.
    pub fn s() -> Self {
        Self::new(vec![0.0, 1.0])
    }

    /// `∏ (s + z_i)`.
    pub fn from_shifts(shifts: &[f64]) -> Self {
        shifts.iter().fold(Poly::constant(1.0), |acc, &z| {
            &acc * &Poly::new(vec![z, 1.0])
        })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == 0.0
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, x: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
    }

    pub fn scale(&self, k: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * k).collect())
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() == 1 {
            return Poly::constant(0.0);
        }
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * k as f64)
                .collect(),
        )
    }

    /// Coefficients of `P(x0 + u)` in ascending powers of `u`.
    pub fn taylor_shift(&self, x0: f64) -> Vec<f64> {
        taylor_shift(&self.coeffs, x0)
    }

    pub fn taylor_shift_complex(&self, x0: Complex64) -> Vec<Complex64> {
        let c: Vec<Complex64> = self
            .coeffs
            .iter()
            .map(|&c| Complex64::new(c, 0.0))
            .collect();
        taylor_shift(&c, x0)
    }

    /// All complex roots, repeated according to multiplicity.
    pub fn roots(&self) -> Vec<Complex64> {
        self.roots_with_multiplicity()
            .into_iter()
            .flat_map(|(r, m)| std::iter::repeat_n(r, m))
            .collect()
    }

    /// Distinct roots with multiplicities. Complex roots come in exact
    /// conjugate pairs; exact zero roots are split off before the eigen-solve.
    pub fn roots_with_multiplicity(&self) -> Vec<(Complex64, usize)> {
        let n = self.degree();
        if n == 0 {
            return Vec::new();
        }
        let zeros = self.coeffs.iter().take_while(|&&c| c == 0.0).count();
        let reduced = Poly::new(self.coeffs[zeros..].to_vec());
        let mut out = Vec::new();
        if zeros > 0 {
            out.push((Complex64::new(0.0, 0.0), zeros));
        }
        if reduced.degree() == 0 {
            return out;
        }
        let raw: Vec<Complex64> = reduced
            .companion_eigenvalues()
            .into_iter()
            .map(|r| reduced.polish(r))
            .collect();
        out.extend(reduced.cluster(raw));
        out
    }

    fn companion_eigenvalues(&self) -> Vec<Complex64> {
        let n = self.degree();
        let lead = self.leading();
        if n == 1 {
            return vec![Complex64::new(-self.coeffs[0] / lead, 0.0)];
        }
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 1..n {
            m[(i, i - 1)] = 1.0;
        }
        for i in 0..n {
            m[(i, n - 1)] = -self.coeffs[i] / lead;
        }
        m.complex_eigenvalues()
            .iter()
            .map(|z| Complex64::new(z.re, z.im))
            .collect()
    }

    fn polish(&self, mut z: Complex64) -> Complex64 {
        let d = self.derivative();
        let mut res = self.eval_complex(z).norm();
        for _ in 0..4 {
            let dp = d.eval_complex(z);
            if dp.norm() == 0.0 {
                break;
            }
            let cand = z - self.eval_complex(z) / dp;
            let cres = self.eval_complex(cand).norm();
            if cres < res {
                z = cand;
                res = cres;
            } else {
                break;
            }
        }
        z
    }

    /// Magnitude bound for `P^{(j)}` at `x`, used to judge residuals.
    fn derivative_scale(&self, j: usize, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(j)
            .map(|(k, c)| c.abs() * falling(k, j) * x.powi((k - j) as i32))
            .sum::<f64>()
            .max(f64::MIN_POSITIVE)
    }

    fn confirms_multiplicity(&self, c: Complex64, m: usize) -> bool {
        let mut p = self.clone();
        for j in 0..m {
            let r = p.eval_complex(c).norm() / self.derivative_scale(j, c.norm());
            if r > MULTIPLICITY_RESIDUAL {
                return false;
            }
            p = p.derivative();
        }
        true
    }

    fn cluster(&self, mut roots: Vec<Complex64>) -> Vec<(Complex64, usize)> {
        roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let mut used = vec![false; roots.len()];
        let mut out: Vec<(Complex64, usize)> = Vec::new();
        for i in 0..roots.len() {
            if used[i] {
                continue;
            }
            let scale = roots[i].norm().max(1.0);
            let members: Vec<usize> = (i..roots.len())
                .filter(|&j| {
                    !used[j] && (roots[j] - roots[i]).norm() <= CLUSTER_CANDIDATE_SPACING * scale
                })
                .collect();
            let center =
                members.iter().map(|&j| roots[j]).sum::<Complex64>() / members.len() as f64;
            let tight = members
                .iter()
                .all(|&j| (roots[j] - roots[i]).norm() <= REPEATED_ROOT_SPACING * scale);
            if members.len() > 1 && (tight || self.confirms_multiplicity(center, members.len())) {
                for &j in &members {
                    used[j] = true;
                }
                out.push((center, members.len()));
            } else {
                used[i] = true;
                out.push((roots[i], 1));
            }
        }
        // Real coefficients: snap near-real roots and enforce exact conjugate pairs.
        for (r, _) in &mut out {
            if r.im.abs() <= 1e-12 * r.norm().max(1.0) {
                r.im = 0.0;
            }
        }
        let upper: Vec<(Complex64, usize)> =
            out.iter().filter(|(r, _)| r.im > 0.0).copied().collect();
        let lower = out.iter().filter(|(r, _)| r.im < 0.0).count();
        if upper.len() == lower {
            out.retain(|(r, _)| r.im == 0.0);
            for (r, m) in upper {
                out.push((r, m));
                out.push((r.conj(), m));
            }
        }
        out
    }
}

fn falling(k: usize, j: usize) -> f64 {
    (0..j).map(|i| (k - i) as f64).product()
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, o: &Poly) -> Poly {
        let n = self.coeffs.len().max(o.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) + o.coeff(k)).collect())
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, o: &Poly) -> Poly {
        let n = self.coeffs.len().max(o.coeffs.len());
        Poly::new((0..n).map(|k| self.coeff(k) - o.coeff(k)).collect())
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, o: &Poly) -> Poly {
        Poly::new(convolve(&self.coeffs, &o.coeffs))
    }
}

pub(crate) fn convolve<T>(a: &[T], b: &[T]) -> Vec<T>
where
    T: Copy + Default + Add<Output = T> + Mul<Output = T>,
{
    let mut out = vec![T::default(); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = out[i + j] + x * y;
        }
    }
    out
}

/// Coefficients of `P(x0 + u)` in powers of `u`, by repeated synthetic division.
pub(crate) fn taylor_shift<T>(coeffs: &[T], x0: T) -> Vec<T>
where
    T: Copy + Add<Output = T> + Mul<Output = T>,
{
    let mut a = coeffs.to_vec();
    let n = a.len() - 1;
    for k in 0..n {
        for j in (k..n).rev() {
            a[j] = a[j] + x0 * a[j + 1];
        }
    }
    a
}

/// First `terms` coefficients of the power series `num(u) / den(u)`; `den[0] != 0`.
pub(crate) fn series_divide<T>(num: &[T], den: &[T], terms: usize) -> Vec<T>
where
    T: Copy + Default + Add<Output = T> + Sub<Output = T> + Mul<Output = T> + Div<Output = T>,
{
    let mut g: Vec<T> = Vec::with_capacity(terms);
    for r in 0..terms {
        let mut acc = num.get(r).copied().unwrap_or_default();
        for i in 1..=r.min(den.len().saturating_sub(1)) {
            acc = acc - den[i] * g[r - i];
        }
        g.push(acc / den[0]);
    }
    g
}

/// Quotient of two real polynomials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalFunction {
    pub num: Poly,
    pub den: Poly,
}

impl RationalFunction {
    pub fn new(num: Poly, den: Poly) -> Self {
        Self { num, den }
    }

    /// `1 / (s + s0)`.
    pub fn simple_pole(s0: f64) -> Self {
        Self::new(Poly::constant(1.0), Poly::new(vec![s0, 1.0]))
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.num.eval(s) / self.den.eval(s)
    }

    pub fn eval_complex(&self, s: Complex64) -> Complex64 {
        self.num.eval_complex(s) / self.den.eval_complex(s)
    }

    pub fn mul(&self, o: &RationalFunction) -> RationalFunction {
        RationalFunction::new(&self.num * &o.num, &self.den * &o.den)
    }

    pub fn add(&self, o: &RationalFunction) -> RationalFunction {
        let num = &(&self.num * &o.den) + &(&o.num * &self.den);
        RationalFunction::new(num, &self.den * &o.den)
    }

    pub fn scale(&self, k: f64) -> RationalFunction {
        RationalFunction::new(self.num.scale(k), self.den.clone())
    }

    /// `1/s · self`.
    pub fn divide_by_s(&self) -> RationalFunction {
        RationalFunction::new(self.num.clone(), &self.den * &Poly::s())
    }

    /// Taylor coefficients `f^{(n)}(s0) / n!` for `n = 0..=order`.
    pub fn taylor(&self, s0: f64, order: usize) -> Vec<f64> {
        let n = self.num.taylor_shift(s0);
        let d = self.den.taylor_shift(s0);
        series_divide(&n, &d, order + 1)
    }
}
