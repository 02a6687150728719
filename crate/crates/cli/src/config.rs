use std::path::{Path, PathBuf};

use fsobolev::ManifoldSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// A run configuration as read from JSON. Empty grids fall back to the
/// experiment's own defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; must agree with the name given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifold: Option<ManifoldSpec>,
    #[serde(default)]
    pub s: Vec<f64>,
    #[serde(default)]
    pub p: Vec<f64>,
    #[serde(default)]
    pub q: Vec<f64>,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub t: Vec<f64>,
    /// Spectral truncation K.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    /// Quadrature order per axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    /// Random family size or number of optimizer starts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Grid check shared by every experiment.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |what: &str, v: f64| CliError::Config(format!("{what} = {v} out of range"));
        for &s in &self.s {
            if !(s > 0.0 && s < 1.0) {
                return Err(bad("s", s));
            }
        }
        for &p in &self.p {
            if !(p >= 1.0 && p.is_finite()) {
                return Err(bad("p", p));
            }
        }
        for &q in &self.q {
            if !(q >= 1.0 && q.is_finite()) {
                return Err(bad("q", q));
            }
        }
        for &e in &self.eps {
            if !(e > 0.0 && e.is_finite()) {
                return Err(bad("eps", e));
            }
        }
        for &t in &self.t {
            if !(t > 0.0 && t.is_finite()) {
                return Err(bad("t", t));
            }
        }
        if matches!(self.samples, Some(0)) {
            return Err(CliError::Config("samples must be positive".into()));
        }
        Ok(())
    }
}

fn or<T: Clone>(v: &[T], default: &[T]) -> Vec<T> {
    if v.is_empty() {
        default.to_vec()
    } else {
        v.to_vec()
    }
}

impl ExperimentConfig {
    pub fn s_or(&self, d: &[f64]) -> Vec<f64> {
        or(&self.s, d)
    }
    pub fn p_or(&self, d: &[f64]) -> Vec<f64> {
        or(&self.p, d)
    }
    pub fn q_or(&self, d: &[f64]) -> Vec<f64> {
        or(&self.q, d)
    }
    pub fn eps_or(&self, d: &[f64]) -> Vec<f64> {
        or(&self.eps, d)
    }
    pub fn t_or(&self, d: &[f64]) -> Vec<f64> {
        or(&self.t, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"s": [0.3], "sigma": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"manifold": {"kind": "circle", "radius": 1, "x": 0}}"#).is_err());
    }

    #[test]
    fn parses_full_document() {
        let c = ExperimentConfig::from_json(
            r#"{"experiment": "heat-mass", "manifold": {"kind": "flat_torus", "periods": [6.283185307179586, 6.283185307179586]},
                "t": [0.1, 1.0], "seed": 7, "format": "json", "order": 24}"#,
        )
        .unwrap();
        assert_eq!(c.t, vec![0.1, 1.0]);
        assert_eq!(c.format, Some(Format::Json));
        assert!(matches!(c.manifold, Some(ManifoldSpec::FlatTorus { .. })));
        assert_eq!(c.s_or(&[0.5]), vec![0.5]);
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::from_json(r#"{"s": [1.2]}"#).unwrap().validate().is_err());
        assert!(ExperimentConfig::from_json(r#"{"p": [0.5]}"#).unwrap().validate().is_err());
        assert!(ExperimentConfig::default().validate().is_ok());
    }
}
