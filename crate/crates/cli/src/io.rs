//! Artifacts of a run: CSV tables, the JSON summary and the saved iterate.

use std::fs;
use std::path::{Path, PathBuf};

use fbcontrol_core::stationarity::{PairClass, StationarityReport};
use fbcontrol_core::Regularization;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::experiment::{Example, ExperimentResult};

pub const CONTROLS_CSV: &str = "controls.csv";
pub const SIGMA_CSV: &str = "sigma.csv";
pub const TRACE_CSV: &str = "trace.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const STATE_JSON: &str = "state.json";

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub example: u8,
    pub nx: usize,
    pub complementarity_max_fb: f64,
    pub tol: f64,
    pub theta: f64,
    pub pct_negative_pairs: f64,
    pub verdict: String,
    pub outer_iterations: usize,
}

impl Summary {
    pub fn new(example: Example, nx: usize, complementarity: f64, report: &StationarityReport, outer: usize) -> Self {
        Self {
            example: example.id(),
            nx,
            complementarity_max_fb: complementarity,
            tol: report.tol,
            theta: report.theta,
            pct_negative_pairs: report.counts.percent_negative(),
            verdict: report.verdict.as_str().to_string(),
            outer_iterations: outer,
        }
    }

    pub fn from_result(r: &ExperimentResult) -> Self {
        Self::new(
            r.spec.example,
            r.spec.nx,
            r.complementarity,
            &r.report,
            r.outcome.trace.outer_iterations(),
        )
    }
}

/// A computed point that `check` can certify again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedState {
    pub example: u8,
    pub nx: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub epsilon: f64,
    /// Nodal vectors in row-major vertex order.
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl SavedState {
    pub fn from_result(r: &ExperimentResult) -> Self {
        let reg = r.spec.config.regularization;
        Self {
            example: r.spec.example.id(),
            nx: r.spec.nx,
            alpha1: reg.alpha1,
            alpha2: reg.alpha2,
            epsilon: reg.epsilon,
            y: r.outcome.iterate.y.clone(),
            u: r.u.clone(),
            v: r.v.clone(),
        }
    }

    pub fn regularization(&self) -> Regularization {
        Regularization {
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            epsilon: self.epsilon,
        }
    }
}

/// 17 significant digits, enough to round-trip an `f64`.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn class_name(c: PairClass) -> &'static str {
    match c {
        PairClass::Positive => "positive",
        PairClass::Zero => "zero",
        PairClass::Negative => "negative",
    }
}

/// Per tested node: coordinates, which controls were tested, `Σ` and its class.
pub fn write_sigma_csv(path: &Path, vertices: &[[f64; 2]], report: &StationarityReport) -> Result<(), CliError> {
    write_csv(
        path,
        &["x1", "x2", "tests_u", "tests_v", "sigma", "classification"],
        report.pairs.iter().map(|p| {
            let [x1, x2] = vertices[p.node];
            vec![
                num(x1),
                num(x2),
                u8::from(p.tests_u).to_string(),
                u8::from(p.tests_v).to_string(),
                num(p.sigma),
                class_name(p.class).to_string(),
            ]
        }),
    )
}

/// Writes all artifacts of `result` into `dir`, creating it if needed.
/// Returns the written paths.
pub fn write_artifacts(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = |name: &str| dir.join(name);

    let controls = path(CONTROLS_CSV);
    write_csv(
        &controls,
        &["x1", "u", "v"],
        result
            .bottom_trace()
            .into_iter()
            .map(|r| r.iter().map(|&x| num(x)).collect()),
    )?;

    let sigma = path(SIGMA_CSV);
    write_sigma_csv(&sigma, result.problem.mesh().vertices(), &result.report)?;

    let trace = path(TRACE_CSV);
    write_csv(
        &trace,
        &[
            "sigma",
            "newton_iterations",
            "descent_steps",
            "final_residual",
            "control_change",
            "penalty_value",
            "max_fb",
            "retried",
        ],
        result.outcome.trace.records.iter().map(|r| {
            vec![
                num(r.sigma),
                r.newton.iterations.to_string(),
                r.newton.descent_steps.to_string(),
                num(r.newton.final_residual),
                num(r.control_change),
                num(r.penalty_value),
                num(r.max_fb),
                u8::from(r.retried).to_string(),
            ]
        }),
    )?;

    let summary = path(SUMMARY_JSON);
    write_json(&summary, &Summary::from_result(result))?;
    let state = path(STATE_JSON);
    write_json(&state, &SavedState::from_result(result))?;
    Ok(vec![controls, sigma, trace, summary, state])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn summary_keys_are_stable() {
        let s = Summary {
            example: 2,
            nx: 20,
            complementarity_max_fb: 1e-6,
            tol: 1e-8,
            theta: -1e-9,
            pct_negative_pairs: 4.5,
            verdict: "passed".into(),
            outer_iterations: 7,
        };
        let v = serde_json::to_value(&s).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            [
                "complementarity_max_fb",
                "example",
                "nx",
                "outer_iterations",
                "pct_negative_pairs",
                "theta",
                "tol",
                "verdict"
            ]
        );
    }
}
