//! Structured pass/fail results.
//!
//! Checks never fail by returning an error: a failed condition is data. Every
//! condition contributes a signed margin (non-negative means satisfied), so grid
//! scans can locate the first violation by sign change.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Default absolute tolerance for positivity and normalization checks.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

static TOLERANCE_BITS: AtomicU64 = AtomicU64::new(0);

/// Global absolute tolerance used by the positivity checks.
pub fn tolerance() -> f64 {
    match TOLERANCE_BITS.load(Ordering::Relaxed) {
        0 => DEFAULT_TOLERANCE,
        bits => f64::from_bits(bits),
    }
}

/// Overrides the global tolerance. Non-positive or non-finite values restore
/// the default.
pub fn set_tolerance(tol: f64) {
    let bits = if tol.is_finite() && tol > 0.0 {
        tol.to_bits()
    } else {
        0
    };
    TOLERANCE_BITS.store(bits, Ordering::Relaxed);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub label: String,
    pub value: f64,
}

impl Margin {
    pub fn new(label: impl Into<String>, value: f64) -> Self {
        Self {
            label: label.into(),
            value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub label: String,
    /// Time (or Laplace variable) of the first violation, when the check scans a grid.
    pub at: Option<f64>,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub passed: bool,
    pub margins: Vec<Margin>,
    pub first_violation: Option<Violation>,
    pub notes: Vec<String>,
}

impl Verdict {
    /// Passes iff every margin is at least `-tol`.
    pub fn from_margins(check: impl Into<String>, margins: Vec<Margin>, tol: f64) -> Self {
        let first_violation = margins
            .iter()
            .find(|m| !(m.value >= -tol))
            .map(|m| Violation {
                label: m.label.clone(),
                at: None,
                margin: m.value,
            });
        Self {
            check: check.into(),
            passed: first_violation.is_none(),
            margins,
            first_violation,
            notes: Vec::new(),
        }
    }

    pub fn margin(&self, label: &str) -> Option<f64> {
        self.margins
            .iter()
            .find(|m| m.label == label)
            .map(|m| m.value)
    }

    pub fn min_margin(&self) -> f64 {
        self.margins
            .iter()
            .map(|m| m.value)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

/// Folds per-point margins of a grid scan into a [`Verdict`]: keeps the minimum
/// of each labelled margin and the first point where any of them drops below
/// `-tol`.
pub(crate) struct GridScan {
    labels: Vec<String>,
    min: Vec<f64>,
    first: Option<Violation>,
    tol: f64,
}

impl GridScan {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>, tol: f64) -> Self {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let min = vec![f64::INFINITY; labels.len()];
        Self {
            labels,
            min,
            first: None,
            tol,
        }
    }

    pub fn observe(&mut self, at: f64, values: &[f64]) {
        for (j, &v) in values.iter().enumerate() {
            if v < self.min[j] || v.is_nan() {
                self.min[j] = v;
            }
            if self.first.is_none() && !(v >= -self.tol) {
                self.first = Some(Violation {
                    label: self.labels[j].clone(),
                    at: Some(at),
                    margin: v,
                });
            }
        }
    }

    pub fn finish(self, check: impl Into<String>) -> Verdict {
        let margins = self
            .labels
            .into_iter()
            .zip(self.min)
            .map(|(l, v)| Margin::new(l, v))
            .collect();
        Verdict {
            check: check.into(),
            passed: self.first.is_none(),
            margins,
            first_violation: self.first,
            notes: Vec::new(),
        }
    }
}
