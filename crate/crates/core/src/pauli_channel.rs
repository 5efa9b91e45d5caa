//! Algebra of qubit Pauli-diagonal (random unitary) channels
//! `Λ[ρ] = Σ_α p_α σ_α ρ σ_α`, with `Λ[σ_α] = λ_α σ_α`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::verdict::{tolerance, Margin, Verdict};

/// Normalization tolerance for probability vectors.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Labels of the four CPTP margins, in the order of [`cptp_margins`].
pub const CPTP_LABELS: [&str; 4] = ["sum", "axis1", "axis2", "axis3"];

/// The Hadamard matrix relating probabilities and eigenvalues: `λ = H p`, `p = H λ / 4`.
pub const HADAMARD: [[i8; 4]; 4] = [[1, 1, 1, 1], [1, 1, -1, -1], [1, -1, 1, -1], [1, -1, -1, 1]];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliEigenvalues(pub [f64; 4]);

impl PauliEigenvalues {
    pub const IDENTITY: Self = Self([1.0; 4]);

    /// Eigenvalues `(1, λ1, λ2, λ3)`.
    pub fn new(l1: f64, l2: f64, l3: f64) -> Self {
        Self([1.0, l1, l2, l3])
    }

    /// Validates a full four-component vector.
    pub fn try_from_array(lambda: [f64; 4]) -> Result<Self> {
        if lambda[0] != 1.0 {
            return Err(Error::MalformedEigenvalues(lambda[0]));
        }
        if lambda.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite eigenvalue in {lambda:?}"
            )));
        }
        Ok(Self(lambda))
    }

    pub fn axes(&self) -> [f64; 3] {
        [self.0[1], self.0[2], self.0[3]]
    }

    fn check_trace(&self) -> Result<()> {
        if self.0[0] != 1.0 {
            return Err(Error::MalformedEigenvalues(self.0[0]));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector(pub [f64; 4]);

impl ProbabilityVector {
    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochVector(pub [f64; 3]);

impl BlochVector {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

fn hadamard_apply(v: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (row, o) in HADAMARD.iter().zip(out.iter_mut()) {
        *o = row.iter().zip(v).map(|(&h, &x)| f64::from(h) * x).sum();
    }
    out
}

/// `p = H λ / 4`.
pub fn probabilities_from_eigenvalues(lambda: &PauliEigenvalues) -> Result<ProbabilityVector> {
    lambda.check_trace()?;
    Ok(ProbabilityVector(
        hadamard_apply(&lambda.0).map(|x| 0.25 * x),
    ))
}

/// `λ = H p`; rejects vectors whose sum differs from 1 by more than [`NORMALIZATION_TOLERANCE`].
pub fn eigenvalues_from_probabilities(p: &ProbabilityVector) -> Result<PauliEigenvalues> {
    let sum = p.sum();
    if !((sum - 1.0).abs() <= NORMALIZATION_TOLERANCE) {
        return Err(Error::NotNormalized(sum));
    }
    let mut lambda = hadamard_apply(&p.0);
    lambda[0] = 1.0;
    Ok(PauliEigenvalues(lambda))
}

/// `4 p_α` written in terms of λ: `1+λ1+λ2+λ3` and `1+λ_k−λ_i−λ_j`.
pub fn cptp_margins(lambda: &PauliEigenvalues) -> [f64; 4] {
    let [_, l1, l2, l3] = lambda.0;
    [
        1.0 + l1 + l2 + l3,
        1.0 + l1 - l2 - l3,
        1.0 + l2 - l1 - l3,
        1.0 + l3 - l1 - l2,
    ]
}

/// Complete positivity of the channel: all four margins at least `-tol`.
pub fn cptp_check(lambda: &PauliEigenvalues) -> Result<Verdict> {
    lambda.check_trace()?;
    let margins = CPTP_LABELS
        .iter()
        .zip(cptp_margins(lambda))
        .map(|(l, v)| Margin::new(*l, v))
        .collect();
    Ok(Verdict::from_margins("cptp", margins, tolerance()))
}

/// Image of a Bloch vector (or Bloch difference vector) under the channel.
pub fn apply_map(lambda: &PauliEigenvalues, v: &BlochVector) -> BlochVector {
    BlochVector([
        lambda.0[1] * v.0[0],
        lambda.0[2] * v.0[1],
        lambda.0[3] * v.0[2],
    ])
}

/// Trace distance `½‖Λ[ρ1−ρ2]‖₁` for a Bloch difference vector `v` of `ρ1−ρ2`
/// (normalized so that `v` of two orthogonal pure states has length 1).
pub fn trace_distance(lambda: &PauliEigenvalues, v: &BlochVector) -> f64 {
    apply_map(lambda, v).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hadamard_squares_to_four_identity() {
        for i in 0..4 {
            for j in 0..4 {
                let s: i32 = (0..4)
                    .map(|k| i32::from(HADAMARD[i][k]) * i32::from(HADAMARD[k][j]))
                    .sum();
                assert_eq!(s, if i == j { 4 } else { 0 });
            }
        }
    }

    #[test]
    fn sigma3_conjugation() {
        let p = probabilities_from_eigenvalues(&PauliEigenvalues::new(-1.0, -1.0, 1.0)).unwrap();
        assert_eq!(p.0, [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn rejects_malformed_and_unnormalized() {
        assert!(matches!(
            probabilities_from_eigenvalues(&PauliEigenvalues([0.9, 0.0, 0.0, 0.0])),
            Err(Error::MalformedEigenvalues(_))
        ));
        assert!(matches!(
            eigenvalues_from_probabilities(&ProbabilityVector([0.5, 0.5, 0.5, 0.0])),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn half_dephasing_eigenvalues() {
        let l = eigenvalues_from_probabilities(&ProbabilityVector([0.5, 0.0, 0.0, 0.5])).unwrap();
        assert_eq!(l.0, [1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn cptp_failure_on_pairwise_condition() {
        let v = cptp_check(&PauliEigenvalues::new(0.9, 0.9, 0.5)).unwrap();
        assert!(!v.passed);
        assert_eq!(v.first_violation.as_ref().unwrap().label, "axis3");
        let v = cptp_check(&PauliEigenvalues::IDENTITY).unwrap();
        assert!(v.passed);
        assert_eq!(
            v.margins.iter().map(|m| m.value).collect::<Vec<_>>(),
            vec![4.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn trace_distance_of_partial_dephasing() {
        let l = PauliEigenvalues::new(0.5, 0.5, 1.0);
        assert_abs_diff_eq!(
            trace_distance(&l, &BlochVector([0.6, 0.8, 0.0])),
            0.5,
            epsilon = 1e-15
        );
        assert_eq!(
            apply_map(&l, &BlochVector([1.0, 0.0, 0.0])).0,
            [0.5, 0.0, 0.0]
        );
    }
}
