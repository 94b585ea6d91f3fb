//! Outer penalty loop: start from the nonnegativity-constrained solution,
//! solve the penalized KKT system for increasing `σ`, and stop once the
//! controls no longer move in the discrete H¹ norm.

use alloc::vec::Vec;

use crate::kkt::{KktIterate, Newton, NewtonConfig, NewtonReport};
use crate::ncp::{max_abs_fb, penalty_eval};
use crate::ocnc::{solve_ocnc, OcncConfig, OcncSolution};
use crate::problem::{ControlProblem, Regularization};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    pub regularization: Regularization,
    pub sigma0: f64,
    pub sigma_factor: f64,
    pub sigma_max: f64,
    /// Stop when the control change falls below this in the H¹ norm.
    pub eps_stop: f64,
    pub newton: NewtonConfig,
    pub ocnc: OcncConfig,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            regularization: Regularization::default(),
            sigma0: 1.0,
            sigma_factor: 10.0,
            sigma_max: 1e12,
            eps_stop: 1e-6,
            newton: NewtonConfig::default(),
            ocnc: OcncConfig::default(),
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        self.regularization.validate()?;
        if !(self.sigma0 > 0.0) {
            return Err(Error::invalid("sigma0 must be positive"));
        }
        if !(self.sigma_factor > 1.0) {
            return Err(Error::invalid("sigma_factor must exceed 1"));
        }
        if !(self.sigma_max >= self.sigma0) {
            return Err(Error::invalid("sigma_max must be at least sigma0"));
        }
        if !(self.eps_stop > 0.0) {
            return Err(Error::invalid("eps_stop must be positive"));
        }
        self.newton.validate()?;
        self.ocnc.validate()
    }
}

/// `√(d̃uᵀ(M1+K)d̃u + d̃vᵀ(M1+K)d̃v)` with `d̃ = R d`.
pub fn weighted_norm(problem: &ControlProblem, du: &[f64], dv: &[f64]) -> Result<f64> {
    let m = problem.control_dim();
    Error::check_len("control change u", m, du.len())?;
    Error::check_len("control change v", m, dv.len())?;
    let space = problem.space();
    let h1 = &problem.fem().h1;
    let (eu, ev) = (space.expand(du), space.expand(dv));
    Ok(libm::sqrt((h1.bilinear(&eu, &eu) + h1.bilinear(&ev, &ev)).max(0.0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomotopyRecord {
    pub sigma: f64,
    pub newton: NewtonReport,
    /// Weighted norm of the change against the previous outer iterate.
    pub control_change: f64,
    /// `F̃(u, v)` without the weight.
    pub penalty_value: f64,
    pub max_fb: f64,
    /// The step was taken at a backtracked `σ` after an inner failure.
    pub retried: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HomotopyStatus {
    Converged,
    /// The next `σ` would exceed `sigma_max`.
    SigmaLimit,
    /// Newton failed at `σ_k` and at the backtracked value.
    InnerFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomotopyTrace {
    pub records: Vec<HomotopyRecord>,
    pub status: HomotopyStatus,
    /// Outer iterations after which `max |φ|` increased.
    pub fb_increases: Vec<usize>,
}

impl HomotopyTrace {
    pub fn outer_iterations(&self) -> usize {
        self.records.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomotopyOutcome {
    pub iterate: KktIterate,
    pub trace: HomotopyTrace,
    /// The starting point.
    pub ocnc: OcncSolution,
}

impl HomotopyOutcome {
    pub fn converged(&self) -> bool {
        self.trace.status == HomotopyStatus::Converged
    }
}

fn record(
    problem: &ControlProblem,
    it: &KktIterate,
    prev: &KktIterate,
    sigma: f64,
    newton: NewtonReport,
    retried: bool,
) -> Result<HomotopyRecord> {
    let du: Vec<f64> = it.u.iter().zip(&prev.u).map(|(a, b)| a - b).collect();
    let dv: Vec<f64> = it.v.iter().zip(&prev.v).map(|(a, b)| a - b).collect();
    let (u, v) = problem.expand_controls(&it.controls());
    Ok(HomotopyRecord {
        sigma,
        newton,
        control_change: weighted_norm(problem, &du, &dv)?,
        penalty_value: penalty_eval(problem.fem(), &u, &v)?.value,
        max_fb: max_abs_fb(problem.fem(), &u, &v)?,
        retried,
    })
}

pub fn run_homotopy(problem: &ControlProblem, cfg: &PenaltyConfig) -> Result<HomotopyOutcome> {
    cfg.validate()?;
    if cfg.regularization != problem.regularization() {
        return Err(Error::invalid(
            "penalty configuration and problem disagree on the regularization weights",
        ));
    }
    let ocnc = solve_ocnc(problem, &cfg.ocnc)?;
    let mut prev = ocnc.iterate.clone();
    prev.p = problem.adjoint(&prev.y)?;

    let newton = Newton::new(problem, cfg.newton)?;
    let mut records: Vec<HomotopyRecord> = Vec::new();
    let mut fb_increases = Vec::new();
    let mut sigma = cfg.sigma0;
    let mut sigma_prev: Option<f64> = None;
    let status = loop {
        if sigma > cfg.sigma_max {
            break HomotopyStatus::SigmaLimit;
        }
        let (mut it, mut report) = newton.solve(&prev, sigma)?;
        let mut retried = false;
        if !report.converged {
            let lower = sigma_prev.unwrap_or(sigma / cfg.sigma_factor);
            let backtracked = libm::sqrt(lower * sigma);
            log::warn!(
                "Newton failed at sigma = {sigma:e} ({:?}); retrying at {backtracked:e}",
                report.failure
            );
            let (it2, report2) = newton.solve(&prev, backtracked)?;
            if !report2.converged {
                records.push(record(problem, &it2, &prev, backtracked, report2, true)?);
                break HomotopyStatus::InnerFailure;
            }
            sigma = backtracked;
            it = it2;
            report = report2;
            retried = true;
        }
        let rec = record(problem, &it, &prev, sigma, report, retried)?;
        if let Some(last) = records.last() {
            if rec.max_fb > last.max_fb {
                log::warn!(
                    "complementarity violation grew from {:e} to {:e} at sigma = {sigma:e}",
                    last.max_fb,
                    rec.max_fb
                );
                fb_increases.push(records.len());
            }
        }
        let done = rec.control_change < cfg.eps_stop;
        records.push(rec);
        prev = it;
        if done {
            break HomotopyStatus::Converged;
        }
        sigma_prev = Some(sigma);
        sigma *= cfg.sigma_factor;
    };
    Ok(HomotopyOutcome {
        iterate: prev,
        trace: HomotopyTrace {
            records,
            status,
            fb_increases,
        },
        ocnc,
    })
}
