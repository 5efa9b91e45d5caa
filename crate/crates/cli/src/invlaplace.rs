//! Diagnostic inversion of a rational transform `N(s)/D(s)`.

use std::fmt::Write as _;
use std::io::Write as _;

use anyhow::{bail, Context as _, Result};
use clap::ValueEnum;
use memkernel::laplace_tools::{
    partial_fraction_with_direct, talbot, PartialFractionExpansion, RealInversion,
    DEFAULT_GAVER_WYNN_ORDER, DEFAULT_STEHFEST_ORDER, DEFAULT_TALBOT_ORDER,
};
use memkernel::poly::{Poly, RationalFunction};
use serde::Serialize;

use crate::output::Format;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Method {
    #[default]
    GaverWynn,
    Stehfest,
    Talbot,
}

/// Coefficients are given highest power first, e.g. `1,3,2` is `s² + 3s + 2`.
pub fn parse_poly(name: &str, coeffs: &[f64]) -> Result<Poly> {
    if coeffs.is_empty() {
        bail!("--{name}: at least one coefficient is required");
    }
    if let Some(bad) = coeffs.iter().find(|c| !c.is_finite()) {
        bail!("--{name}: coefficient {bad} is not finite");
    }
    if coeffs[0] == 0.0 && coeffs.len() > 1 {
        bail!("--{name}: leading coefficient must be nonzero");
    }
    Ok(Poly::from_descending(coeffs))
}

#[derive(Serialize)]
struct Sample {
    t: f64,
    /// Numerical inversion; absent at `t = 0`, where the inverters are undefined.
    numerical: Option<f64>,
    partial_fraction: f64,
}

#[derive(Serialize)]
struct InversionReport<'a> {
    method: String,
    samples: Vec<Sample>,
    expansion: &'a PartialFractionExpansion,
}

fn invert(r: &RationalFunction, t: f64, method: Method) -> Result<f64> {
    let v = match method {
        Method::GaverWynn => RealInversion::GaverWynn {
            order: DEFAULT_GAVER_WYNN_ORDER,
        }
        .invert(|s| r.eval(s), t),
        Method::Stehfest => RealInversion::Stehfest {
            order: DEFAULT_STEHFEST_ORDER,
        }
        .invert(|s| r.eval(s), t),
        Method::Talbot => talbot(|s| r.eval_complex(s), t, DEFAULT_TALBOT_ORDER),
    };
    v.with_context(|| format!("inverting at t = {t}"))
}

pub fn run(num: &[f64], den: &[f64], times: &[f64], method: Method, format: Format) -> Result<u8> {
    let (n, d) = (parse_poly("num", num)?, parse_poly("den", den)?);
    if d.is_zero() {
        bail!("--den: the denominator must not be identically zero");
    }
    if let Some(bad) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        bail!("--t: {bad} is not a finite non-negative time");
    }
    let pfe = partial_fraction_with_direct(&n, &d).context("partial-fraction expansion")?;
    let r = RationalFunction::new(n, d);
    let mut samples = Vec::with_capacity(times.len());
    for &t in times {
        let numerical = if t > 0.0 {
            Some(invert(&r, t, method)?)
        } else {
            None
        };
        samples.push(Sample {
            t,
            numerical,
            partial_fraction: pfe.time_domain(t),
        });
    }
    let method_name = method
        .to_possible_value()
        .expect("no skipped variants")
        .get_name()
        .to_owned();
    let mut out = String::new();
    match format {
        Format::Json => {
            let report = InversionReport {
                method: method_name,
                samples,
                expansion: &pfe,
            };
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
        }
        Format::Csv => {
            writeln!(out, "t,{method_name},partial_fraction")?;
            for s in &samples {
                let numerical = s.numerical.map(|v| format!("{v:.12e}")).unwrap_or_default();
                writeln!(out, "{:.12e},{numerical},{:.12e}", s.t, s.partial_fraction)?;
            }
            writeln!(out)?;
            writeln!(
                out,
                "# partial fractions (recombination error {:.3e})",
                pfe.recombination_error
            )?;
            if pfe.direct_term != 0.0 {
                writeln!(
                    out,
                    "# direct term {:.12e} (a delta at t = 0 in the time domain)",
                    pfe.direct_term
                )?;
            }
            for part in &pfe.poles {
                for (j, c) in part.residues.iter().enumerate() {
                    writeln!(
                        out,
                        "# pole {:.12e}{:+.12e}i  order {}  residue {:.12e}{:+.12e}i",
                        part.pole.re,
                        part.pole.im,
                        j + 1,
                        c.re,
                        c.im
                    )?;
                }
            }
        }
    }
    std::io::stdout().lock().write_all(out.as_bytes())?;
    Ok(0)
}
