//! Random kernel-spec generators shared by the integration suites.
#![allow(dead_code)]

use memkernel::evolution::TimeGrid;
use memkernel::kernel_families::{
    a_from_b, AnisotropyParameters, BRates, Family, KernelSpec, WaitingFunction,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kind {
    Exponential,
    BiExponential,
    Sinusoidal,
    Polynomial,
}

pub const ALL_KINDS: [Kind; 4] = [
    Kind::Exponential,
    Kind::BiExponential,
    Kind::Sinusoidal,
    Kind::Polynomial,
];
/// Families whose transform `f̃ = 1/W` is completely monotone.
pub const CM_KINDS: [Kind; 3] = [Kind::Exponential, Kind::BiExponential, Kind::Polynomial];

pub fn waiting(rng: &mut ChaCha8Rng, kind: Kind) -> WaitingFunction {
    match kind {
        Kind::Exponential => WaitingFunction::exponential(rng.random_range(0.2..5.0)).unwrap(),
        Kind::BiExponential => {
            let c1 = rng.random_range(0.2..3.0);
            WaitingFunction::bi_exponential(c1, c1 + rng.random_range(0.1..3.0)).unwrap()
        }
        Kind::Sinusoidal => WaitingFunction::sinusoidal(rng.random_range(0.3..3.0)).unwrap(),
        Kind::Polynomial => {
            let n = rng.random_range(1..=4);
            WaitingFunction::polynomial((0..n).map(|_| rng.random_range(0.3..3.0)).collect())
                .unwrap()
        }
    }
}

pub fn random_kind(rng: &mut ChaCha8Rng, kinds: &[Kind]) -> Kind {
    kinds[rng.random_range(0..kinds.len())]
}

/// Anisotropy parameters satisfying the triangle conditions (built from
/// positive b-rates, sometimes with a disabled axis), rescaled so that
/// `Σ 1/a_k = target`.
pub fn triangle_a(rng: &mut ChaCha8Rng, target: f64) -> AnisotropyParameters {
    let mut b = [0.0; 3].map(|_: f64| rng.random_range(0.2..5.0));
    if rng.random_bool(0.15) {
        let k = rng.random_range(0..3);
        b[(k + 1) % 3] = f64::INFINITY;
        b[(k + 2) % 3] = f64::INFINITY;
    }
    let a = a_from_b(&BRates { b }).unwrap();
    let scale = a.reciprocal_sum() / target;
    AnisotropyParameters::new(a.a.map(|x| x * scale)).unwrap()
}

/// Parameters with a violated triangle condition and the given `Σ 1/a_k`.
pub fn non_triangle_a(rng: &mut ChaCha8Rng, target: f64) -> AnisotropyParameters {
    let k = rng.random_range(0..3);
    let mut r = [0.0; 3];
    r[(k + 1) % 3] = rng.random_range(0.1..1.0);
    r[(k + 2) % 3] = rng.random_range(0.1..1.0);
    r[k] = (r[(k + 1) % 3] + r[(k + 2) % 3]) * rng.random_range(1.1..3.0);
    let sum: f64 = r.iter().sum();
    AnisotropyParameters::new(r.map(|x| sum / (x * target))).unwrap()
}

pub fn sup_f(w: &WaitingFunction) -> f64 {
    w.cumulative_sup().unwrap()
}

/// Grid long enough for `F` to reach its supremum (to ~1e-9 for decaying families).
pub fn grid_for(w: &WaitingFunction, n_steps: usize) -> TimeGrid {
    let t_max = match w.family() {
        Family::Exponential { z } => 25.0 / z,
        Family::BiExponential { c1, .. } => 25.0 / c1,
        Family::Sinusoidal { omega } => 4.0 * std::f64::consts::PI / omega,
        Family::PolynomialW { roots } => {
            25.0 / roots.iter().copied().fold(f64::INFINITY, f64::min) + 10.0
        }
        Family::Tabulated { times, .. } => *times.last().unwrap(),
    };
    TimeGrid::new(t_max, n_steps).unwrap()
}

/// A spec satisfying both the triangle conditions and `Σ(1/a) sup F ≤ 4·u`.
pub fn admissible(rng: &mut ChaCha8Rng, kinds: &[Kind]) -> KernelSpec {
    let kind = random_kind(rng, kinds);
    let w = waiting(rng, kind);
    let target = rng.random_range(0.05..0.98) * 4.0 / sup_f(&w);
    KernelSpec::new(w, triangle_a(rng, target))
}
