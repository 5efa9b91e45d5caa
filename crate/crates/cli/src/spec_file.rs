//! Kernel-spec files: a small TOML document naming a waiting-function family,
//! its parameters, the anisotropy parameters and the time grid.
//!
//! ```toml
//! family = "exponential"        # exponential | bi_exponential | sinusoidal | polynomial | tabulated
//! a = [1.0, 1.0, "inf"]         # "inf" disables an axis
//! outputs = ["lambdas", "probs", "rates", "verdicts"]
//!
//! [params]
//! z = 1.0                       # bi_exponential: c1, c2; sinusoidal: omega; polynomial: z1, z2, ...
//!
//! [grid]
//! t_max = 20.0
//! n_steps = 20000
//!
//! [tabulated]                   # only for family = "tabulated"
//! times = [0.0, 0.5, 1.0]
//! values = [1.0, 0.6, 0.3]
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use memkernel::evolution::TimeGrid;
use memkernel::{AnisotropyParameters, KernelSpec, WaitingFunction};
use serde::{Deserialize, Serialize};

pub const DEFAULT_T_MAX: f64 = 20.0;
pub const DEFAULT_N_STEPS: usize = 20_000;

/// Malformed or semantically invalid spec file.
#[derive(Debug)]
pub struct SchemaError(pub Vec<String>);

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid kernel spec:")?;
        for e in &self.0 {
            write!(f, "\n  {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for SchemaError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Exponential,
    BiExponential,
    Sinusoidal,
    Polynomial,
    Tabulated,
}

/// An anisotropy entry: a number or the token `"inf"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AEntry {
    Number(f64),
    Token(String),
}

impl AEntry {
    fn value(&self) -> Result<f64, String> {
        match self {
            AEntry::Number(x) => Ok(*x),
            AEntry::Token(s) if s == "inf" => Ok(f64::INFINITY),
            AEntry::Token(s) => Err(format!(
                "`{s}` is not a number; \"inf\" is the only accepted token"
            )),
        }
    }

    pub fn from_value(x: f64) -> Self {
        if x.is_infinite() {
            AEntry::Token("inf".into())
        } else {
            AEntry::Number(x)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub t_max: f64,
    pub n_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedSection {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    Lambdas,
    Probs,
    Rates,
    Verdicts,
}

pub const ALL_OUTPUTS: [Output; 4] = [
    Output::Lambdas,
    Output::Probs,
    Output::Rates,
    Output::Verdicts,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpecFile {
    pub family: FamilyName,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub a: Vec<AEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<Output>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tabulated: Option<TabulatedSection>,
}

impl KernelSpecFile {
    pub fn load(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SchemaError(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        let file: KernelSpecFile =
            toml::from_str(text).map_err(|e| SchemaError(vec![e.to_string()]))?;
        file.build()?;
        Ok(file)
    }

    pub fn outputs(&self) -> Vec<Output> {
        self.outputs.clone().unwrap_or_else(|| ALL_OUTPUTS.to_vec())
    }

    pub fn wants(&self, o: Output) -> bool {
        self.outputs().contains(&o)
    }

    /// The grid from the file, overridden by `cli` when given.
    pub fn grid(&self, cli: Option<GridSection>) -> Result<TimeGrid, SchemaError> {
        let g = cli.or(self.grid).unwrap_or(GridSection {
            t_max: DEFAULT_T_MAX,
            n_steps: DEFAULT_N_STEPS,
        });
        TimeGrid::new(g.t_max, g.n_steps).map_err(|e| SchemaError(vec![format!("grid: {e}")]))
    }

    /// Validates every field and assembles the library spec.
    pub fn build(&self) -> Result<KernelSpec, SchemaError> {
        let mut errors = Vec::new();
        let waiting = self.waiting(&mut errors);
        let a = self.anisotropy(&mut errors);
        if let Some(g) = self.grid {
            if let Err(e) = TimeGrid::new(g.t_max, g.n_steps) {
                errors.push(format!("grid: {e}"));
            }
        }
        if let Some(outputs) = &self.outputs {
            if outputs.is_empty() {
                errors.push("outputs: at least one output is required".into());
            }
        }
        match (waiting, a) {
            (Some(w), Some(a)) if errors.is_empty() => Ok(KernelSpec::new(w, a)),
            _ => Err(SchemaError(errors)),
        }
    }

    fn anisotropy(&self, errors: &mut Vec<String>) -> Option<AnisotropyParameters> {
        if self.a.len() != 3 {
            errors.push(format!("a: expected 3 entries, found {}", self.a.len()));
            return None;
        }
        let mut values = [0.0; 3];
        for (k, entry) in self.a.iter().enumerate() {
            match entry.value() {
                Ok(v) => values[k] = v,
                Err(e) => errors.push(format!("a[{k}]: {e}")),
            }
        }
        if errors.iter().any(|e| e.starts_with("a[")) {
            return None;
        }
        AnisotropyParameters::new(values)
            .map_err(|e| errors.push(format!("a: {e}")))
            .ok()
    }

    fn waiting(&self, errors: &mut Vec<String>) -> Option<WaitingFunction> {
        let expected: Vec<String> = match self.family {
            FamilyName::Exponential => vec!["z".into()],
            FamilyName::BiExponential => vec!["c1".into(), "c2".into()],
            FamilyName::Sinusoidal => vec!["omega".into()],
            FamilyName::Polynomial => {
                let n = self.params.len().max(1);
                (1..=n).map(|i| format!("z{i}")).collect()
            }
            FamilyName::Tabulated => Vec::new(),
        };
        let before = errors.len();
        for key in self.params.keys() {
            if !expected.contains(key) {
                errors.push(format!(
                    "params.{key}: unknown parameter for family {:?}",
                    self.family
                ));
            }
        }
        for key in &expected {
            if !self.params.contains_key(key) {
                errors.push(format!("params.{key}: missing"));
            }
        }
        match (self.family, &self.tabulated) {
            (FamilyName::Tabulated, None) => {
                errors.push("tabulated: section required for family \"tabulated\"".into())
            }
            (FamilyName::Tabulated, Some(_)) => {}
            (_, Some(_)) => errors.push("tabulated: only allowed for family \"tabulated\"".into()),
            (_, None) => {}
        }
        if errors.len() > before {
            return None;
        }
        let p = |k: &str| self.params[k];
        let built = match self.family {
            FamilyName::Exponential => WaitingFunction::exponential(p("z")),
            FamilyName::BiExponential => WaitingFunction::bi_exponential(p("c1"), p("c2")),
            FamilyName::Sinusoidal => WaitingFunction::sinusoidal(p("omega")),
            FamilyName::Polynomial => {
                WaitingFunction::polynomial(expected.iter().map(|k| p(k)).collect())
            }
            FamilyName::Tabulated => {
                let t = self.tabulated.as_ref().expect("checked above");
                WaitingFunction::tabulated(t.times.clone(), t.values.clone())
            }
        };
        built.map_err(|e| errors.push(format!("params: {e}"))).ok()
    }
}

/// Parses `t_max:n_steps`.
pub fn parse_grid(s: &str) -> Result<GridSection, String> {
    let (t, n) = s
        .split_once(':')
        .ok_or_else(|| format!("expected t_max:n_steps, got `{s}`"))?;
    let t_max = t
        .trim()
        .parse::<f64>()
        .map_err(|e| format!("t_max `{t}`: {e}"))?;
    let n_steps = n
        .trim()
        .parse::<usize>()
        .map_err(|e| format!("n_steps `{n}`: {e}"))?;
    TimeGrid::new(t_max, n_steps).map_err(|e| e.to_string())?;
    Ok(GridSection { t_max, n_steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_layout() {
        let f = KernelSpecFile::parse(
            "family = \"exponential\"\na = [1.0, 1.0, \"inf\"]\n[params]\nz = 2.0\n[grid]\nt_max = 5.0\nn_steps = 50\n",
        )
        .unwrap();
        let spec = f.build().unwrap();
        assert!(spec.aniso.a[2].is_infinite());
        assert_eq!(f.grid(None).unwrap().len(), 51);
        assert_eq!(
            f.grid(Some(GridSection {
                t_max: 1.0,
                n_steps: 4
            }))
            .unwrap()
            .len(),
            5
        );
        assert_eq!(f.outputs(), ALL_OUTPUTS.to_vec());
    }

    #[test]
    fn rejects_unknown_and_missing_fields() {
        let err = KernelSpecFile::parse(
            "family = \"exponential\"\na = [1, 1, 1]\ncolour = 3\n[params]\nz = 1.0\n",
        );
        assert!(err.unwrap_err().to_string().contains("colour"));
        let err = KernelSpecFile::parse(
            "family = \"bi_exponential\"\na = [1, 1, 1]\n[params]\nc1 = 1.0\nzeta = 2\n",
        )
        .unwrap_err()
        .to_string();
        assert!(
            err.contains("params.zeta") && err.contains("params.c2"),
            "{err}"
        );
        let err = KernelSpecFile::parse(
            "family = \"exponential\"\na = [1, \"infinity\", 1]\n[params]\nz = 1.0\n",
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("a[1]"), "{err}");
    }

    #[test]
    fn polynomial_roots_are_numbered() {
        let f = KernelSpecFile::parse(
            "family = \"polynomial\"\na = [2, 2, 2]\n[params]\nz1 = 1.0\nz2 = 3.0\n",
        )
        .unwrap();
        assert!(f.build().is_ok());
        let err = KernelSpecFile::parse(
            "family = \"polynomial\"\na = [2, 2, 2]\n[params]\nz1 = 1.0\nz3 = 3.0\n",
        );
        assert!(err.unwrap_err().to_string().contains("params.z3"));
    }

    #[test]
    fn grid_flag_syntax() {
        assert_eq!(
            parse_grid("2.5:100").unwrap(),
            GridSection {
                t_max: 2.5,
                n_steps: 100
            }
        );
        assert!(parse_grid("2.5").is_err());
        assert!(parse_grid("-1:10").is_err());
    }
}
