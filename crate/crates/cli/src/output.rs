//! Whole-file atomic output: every file is written to a temporary sibling and
//! renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use memkernel::markovianity::LocalRates;
use memkernel::verdict::tolerance;
use memkernel::TrajectorySet;
use serde::Serialize;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Probabilities that are negative only within the positivity tolerance are
/// printed as zero; computations never see the clamped value.
fn clamp_probability(p: f64) -> f64 {
    if p < 0.0 && p >= -tolerance() {
        0.0
    } else {
        p
    }
}

fn number(x: f64) -> String {
    format!("{x:.16e}")
}

pub const BASE_COLUMNS: [&str; 9] = [
    "t", "lambda1", "lambda2", "lambda3", "p0", "p1", "p2", "p3", "F",
];
pub const RATE_COLUMNS: [&str; 3] = ["gamma1", "gamma2", "gamma3"];

/// One table row per grid point; masked rates are `None`.
pub struct TrajectoryTable<'a> {
    pub traj: &'a TrajectorySet,
    pub cumulative: &'a [f64],
    pub rates: Option<&'a LocalRates>,
}

#[derive(Serialize)]
struct JsonTrajectory<'a> {
    provenance: &'static str,
    t: Vec<f64>,
    lambda: &'a [Vec<f64>; 3],
    p: Vec<Vec<f64>>,
    #[serde(rename = "F")]
    cumulative: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<&'a [Vec<Option<f64>>; 3]>,
}

impl TrajectoryTable<'_> {
    pub fn write(&self, path: &Path, format: Format) -> Result<()> {
        match format {
            Format::Csv => write_atomic(path, &self.csv_bytes()?),
            Format::Json => write_json(
                path,
                &JsonTrajectory {
                    provenance: self.traj.provenance.name(),
                    t: self.traj.grid.times().collect(),
                    lambda: &self.traj.lambda,
                    p: self
                        .traj
                        .p
                        .iter()
                        .map(|row| row.iter().map(|&p| clamp_probability(p)).collect())
                        .collect(),
                    cumulative: self.cumulative,
                    gamma: self.rates.map(|r| &r.gamma),
                },
            ),
        }
    }

    fn csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = BASE_COLUMNS.to_vec();
        if self.rates.is_some() {
            header.extend(RATE_COLUMNS);
        }
        w.write_record(&header)?;
        let traj = self.traj;
        for i in 0..traj.grid.len() {
            let mut row = vec![number(traj.grid.t(i))];
            row.extend(traj.lambda.iter().map(|l| number(l[i])));
            row.extend(traj.p.iter().map(|p| number(clamp_probability(p[i]))));
            row.push(number(self.cumulative[i]));
            if let Some(r) = self.rates {
                row.extend(r.gamma.iter().map(|g| g[i].map(number).unwrap_or_default()));
            }
            w.write_record(&row)?;
        }
        Ok(w.into_inner().map_err(|e| e.into_error())?)
    }
}

pub fn trajectory_path(dir: &Path, route: &str, format: Format) -> PathBuf {
    dir.join(format!("trajectory_{route}.{}", format.extension()))
}
