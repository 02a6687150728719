use std::fmt::Write as _;

use serde::Serialize;

use crate::config::{ExperimentConfig, Format};

/// One grid instance. `deficit` is signed so that non-negative values
/// favour the checked statement; `pass` carries the experiment's verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub experiment: String,
    pub manifold: String,
    pub s: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub extra: String,
    pub lhs: f64,
    pub rhs: f64,
    pub deficit: f64,
    pub err_est: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Normalization {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub experiment: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub normalization: Vec<Normalization>,
    pub rows: Vec<Row>,
    /// Set when at least one instance hit a numerical failure.
    pub numerical_failure: bool,
    #[serde(skip)]
    pub wall_time: f64,
}

impl RunReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.numerical_failure {
            3
        } else if self.all_pass() {
            0
        } else {
            1
        }
    }

    /// Everything except the header; identical for identical configs.
    pub fn body(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).expect("report serializes") + "\n",
            Format::Csv => {
                let mut out = String::from("experiment,manifold,s,p,q,extra-params,lhs,rhs,deficit,err_est,pass\n");
                for r in &self.rows {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{},{},{}",
                        csv_field(&r.experiment),
                        csv_field(&r.manifold),
                        opt_float(r.s),
                        opt_float(r.p),
                        opt_float(r.q),
                        csv_field(&r.extra),
                        float17(r.lhs),
                        float17(r.rhs),
                        float17(r.deficit),
                        float17(r.err_est),
                        r.pass
                    );
                }
                out
            }
        }
    }

    /// Header lines carrying the non-deterministic wall time.
    pub fn header(&self, format: Format) -> String {
        let norm: Vec<String> = self.normalization.iter().map(|n| format!("{}={}", n.name, float17(n.value))).collect();
        match format {
            Format::Csv => format!(
                "# fsobolev {} experiment={} wall_time_s={:.3}\n# normalization: {}\n",
                self.version,
                self.experiment,
                self.wall_time,
                norm.join(" ")
            ),
            Format::Json => {
                let v = serde_json::json!({ "version": self.version, "experiment": self.experiment, "wall_time_s": self.wall_time });
                format!("{v}\n")
            }
        }
    }

    pub fn render(&self, format: Format) -> String {
        self.header(format) + &self.body(format)
    }
}

/// Shortest-looking 17-significant-digit form; round-trips exactly.
pub fn float17(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x:.16e}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map(float17).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, std::f64::consts::PI] {
            let s = float17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            assert_eq!(s.split('e').next().unwrap().trim_start_matches('-').replace('.', "").len(), 17);
        }
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("t=1;x=0"), "t=1;x=0");
    }
}
