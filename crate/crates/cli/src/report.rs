//! The JSON run report written next to every command's outputs.

use std::path::Path;

use anyhow::Result;
use memkernel::kernel_families::{
    integral_bound_check, polynomial_admissibility_check, triangle_check, waiting_cm_check, Family,
};
use memkernel::verdict::{tolerance, Margin};
use memkernel::{KernelSpec, TimeGrid, Verdict};
use serde::Serialize;

use crate::output::write_json;
use crate::spec_file::{GridSection, KernelSpecFile};

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Serialize)]
pub struct TrajectoryEntry {
    pub route: String,
    /// File name relative to the report's directory.
    pub file: String,
    pub cptp: Verdict,
}

#[derive(Debug, Serialize)]
pub struct RouteDiscrepancy {
    pub routes: [String; 2],
    pub max_lambda_difference: f64,
}

#[derive(Debug, Serialize)]
pub struct Classification {
    pub cptp: bool,
    pub cptp_broken_at: Option<f64>,
    pub cp_divisible: bool,
    pub cp_divisible_until: Option<f64>,
    pub blp_markovian: bool,
    pub blp_measure: f64,
    pub blp_probes: usize,
    pub blp_seed: u64,
    pub blp_maximizing_probe: [f64; 3],
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Serialize)]
pub struct GoldenCheck {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<KernelSpecFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub admissible: Option<bool>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub admissibility: Vec<Verdict>,
    /// Verdicts reported for information only (they do not decide admissibility).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Verdict>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trajectories: Vec<TrajectoryEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cross_route: Vec<RouteDiscrepancy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub golden: Vec<GoldenCheck>,
    pub notes: Vec<String>,
    pub exit_code: u8,
    /// The only field that differs between identical runs.
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            tool: "memkernel",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            spec: None,
            grid: None,
            admissible: None,
            admissibility: Vec::new(),
            diagnostics: Vec::new(),
            trajectories: Vec::new(),
            cross_route: Vec::new(),
            classification: None,
            golden: Vec::new(),
            notes: Vec::new(),
            exit_code: 0,
            wall_time_s: 0.0,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(REPORT_FILE), self)
    }
}

fn polynomial_roots(family: &Family) -> Option<Vec<f64>> {
    match family {
        Family::Exponential { z } => Some(vec![*z]),
        Family::BiExponential { c1, c2 } => Some(vec![*c1, *c2]),
        Family::PolynomialW { roots } => Some(roots.clone()),
        Family::Sinusoidal { .. } | Family::Tabulated { .. } => None,
    }
}

/// Admissibility verdicts (which decide the exit code) and informational ones.
pub fn admissibility(spec: &KernelSpec, grid: &TimeGrid) -> Result<(Vec<Verdict>, Vec<Verdict>)> {
    let min_f = grid
        .times()
        .map(|t| spec.waiting.cumulative(t))
        .fold(f64::INFINITY, f64::min);
    let mut decisive = vec![
        triangle_check(&spec.aniso),
        integral_bound_check(spec, grid),
        Verdict::from_margins(
            "nonnegative_integral",
            vec![Margin::new("min_F", min_f)],
            tolerance(),
        ),
        waiting_cm_check(&spec.waiting, true)?.to_verdict("cm_integral_transform"),
    ];
    let mut info = Vec::new();
    if let Some(roots) = polynomial_roots(spec.waiting.family()) {
        let p = polynomial_admissibility_check(&roots, &spec.aniso)?;
        decisive.push(p.verdict);
        info.push(p.blp_zero);
    }
    Ok((decisive, info))
}

/// One line per verdict for the terminal.
pub fn verdict_line(v: &Verdict) -> String {
    let status = if v.passed { "PASS" } else { "FAIL" };
    let mut line = format!("{status} {:<28} min margin {:.6e}", v.check, v.min_margin());
    if let Some(viol) = &v.first_violation {
        line.push_str(&format!(", first violation `{}`", viol.label));
        if let Some(at) = viol.at {
            line.push_str(&format!(" at {at:.6}"));
        }
    }
    line
}
