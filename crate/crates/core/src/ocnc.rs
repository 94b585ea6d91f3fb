//! The convex problem with `u, v ≥ 0` in place of the complementarity
//! constraint. Its unique solution starts the penalty homotopy.
//!
//! Nonnegativity is enforced by the Moreau-Yosida term
//! `γ/2 ‖min(0, w)‖²` in the lumped `Rᵀ M1(1) R` norm, with `γ` increased
//! geometrically and a semismooth Newton solve per `γ`. The final point is
//! projected onto `w ≥ 0` and the state and adjoint recomputed.

use alloc::vec::Vec;

use crate::kkt::{ControlTerm, KktIterate, Newton, NewtonConfig, NewtonReport};
use crate::problem::ControlProblem;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcncConfig {
    pub gamma0: f64,
    pub gamma_factor: f64,
    pub gamma_max: f64,
    /// Required `‖min(w, ∇f(w))‖∞` at the returned point.
    pub kkt_tol: f64,
    /// Allowed elementwise negativity of `E10 u`, `E10 v`.
    pub feas_tol: f64,
    pub newton: NewtonConfig,
}

impl Default for OcncConfig {
    fn default() -> Self {
        Self {
            gamma0: 1.0,
            gamma_factor: 10.0,
            gamma_max: 1e8,
            kkt_tol: 1e-8,
            feas_tol: 1e-6,
            newton: NewtonConfig::default(),
        }
    }
}

impl OcncConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 > 0.0 && self.gamma_factor > 1.0 && self.gamma_max >= self.gamma0) {
            return Err(Error::invalid("need gamma0 > 0, gamma_factor > 1, gamma_max >= gamma0"));
        }
        if !(self.kkt_tol > 0.0 && self.feas_tol >= 0.0) {
            return Err(Error::invalid("OCNC tolerances must be positive"));
        }
        self.newton.validate()
    }
}

/// Progress at one Moreau-Yosida parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OcncStage {
    pub gamma: f64,
    /// Unpenalized objective.
    pub objective: f64,
    /// `‖min(0, w)‖` in the control mass norm.
    pub infeasibility: f64,
    pub newton: NewtonReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcncSolution {
    pub iterate: KktIterate,
    pub converged: bool,
    /// `‖min(w, ∇f(w))‖∞`, the natural residual of the bound-constrained problem.
    pub kkt_residual: f64,
    pub objective: f64,
    pub stages: Vec<OcncStage>,
}

// The consistent mass matrix would couple neighbouring entries through
// `min(0, ·)` and make the gradient discontinuous; the lumped one keeps it
// Lipschitz and semismooth.
struct MoreauYosida<'a> {
    gamma: f64,
    lumped: &'a [f64],
}

impl ControlTerm for MoreauYosida<'_> {
    fn value(&self, w: &[f64]) -> Result<f64> {
        Ok(0.5
            * self.gamma
            * w.iter()
                .zip(self.lumped)
                .map(|(&x, d)| d * x.min(0.0) * x.min(0.0))
                .sum::<f64>())
    }

    fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        Ok(w.iter()
            .zip(self.lumped)
            .map(|(&x, d)| self.gamma * d * x.min(0.0))
            .collect())
    }

    fn hessian(&self, w: &[f64]) -> Result<CsrMatrix> {
        let diag: Vec<f64> = w
            .iter()
            .zip(self.lumped)
            .map(|(&x, d)| if x < 0.0 { self.gamma * d } else { 0.0 })
            .collect();
        Ok(CsrMatrix::from_diagonal(&diag))
    }
}

fn lump(mass: &CsrMatrix) -> Vec<f64> {
    (0..mass.nrows()).map(|i| mass.row(i).1.iter().sum()).collect()
}

/// `‖min(w, ∇f(w))‖∞` together with the projected iterate.
fn project_and_measure(problem: &ControlProblem, it: &KktIterate) -> Result<(KktIterate, f64)> {
    let m = problem.control_dim();
    let w: Vec<f64> = it.controls().iter().map(|x| x.max(0.0)).collect();
    let y = problem.state(&w)?;
    let p = problem.adjoint(&y)?;
    let mut grad = problem.control_hessian().mul_vec(&w);
    crate::axpy(1.0, &problem.coupling().tr_mul_vec(&p), &mut grad);
    let natural = w
        .iter()
        .zip(&grad)
        .fold(0.0_f64, |acc, (x, g)| acc.max(x.min(*g).abs()));
    let iterate = KktIterate {
        y,
        u: w[..m].to_vec(),
        v: w[m..].to_vec(),
        p,
    };
    Ok((iterate, natural))
}

fn infeasibility(mass: &CsrMatrix, w: &[f64]) -> f64 {
    let neg: Vec<f64> = w.iter().map(|x| x.min(0.0)).collect();
    libm::sqrt(mass.bilinear(&neg, &neg).max(0.0))
}

pub fn solve_ocnc(problem: &ControlProblem, cfg: &OcncConfig) -> Result<OcncSolution> {
    cfg.validate()?;
    let newton = Newton::new(problem, cfg.newton)?;
    let mass = problem.control_mass();
    let lumped = lump(mass);
    let mut it = KktIterate::zeros(problem);
    let mut stages = Vec::new();
    let mut gamma = cfg.gamma0;
    loop {
        let term = MoreauYosida { gamma, lumped: &lumped };
        let (next, report) = newton.solve_with(&it, &term)?;
        let (u, v) = problem.expand_controls(&next.controls());
        stages.push(OcncStage {
            gamma,
            objective: problem.objective(&next.y, &u, &v)?,
            infeasibility: infeasibility(mass, &next.controls()),
            newton: report,
        });
        it = next;
        if gamma >= cfg.gamma_max {
            break;
        }
        gamma = (gamma * cfg.gamma_factor).min(cfg.gamma_max);
    }

    let (iterate, kkt_residual) = project_and_measure(problem, &it)?;
    let (u, v) = problem.expand_controls(&iterate.controls());
    let objective = problem.objective(&iterate.y, &u, &v)?;
    let fem = problem.fem();
    let feasible = fem
        .to_elements(&u)
        .iter()
        .chain(&fem.to_elements(&v))
        .all(|&x| x >= -cfg.feas_tol);
    let last_converged = stages.last().is_some_and(|s: &OcncStage| s.newton.converged);
    let converged = last_converged && feasible && kkt_residual <= cfg.kkt_tol;
    if !converged {
        log::warn!("OCNC solve did not converge: natural residual {kkt_residual:e}");
    }
    Ok(OcncSolution {
        iterate,
        converged,
        kkt_residual,
        objective,
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{reg, strip_problem, uniform};

    #[test]
    fn moreau_yosida_gradient_matches_finite_differences() {
        let lumped = uniform(1, 6, 0.5, 2.0);
        let term = MoreauYosida {
            gamma: 3.0,
            lumped: &lumped,
        };
        let w = [-0.4, 0.3, -1.2, 0.8, -0.05, 2.0];
        let g = term.gradient(&w).unwrap();
        let h = term.hessian(&w).unwrap().diagonal();
        for i in 0..w.len() {
            let mut wp = w;
            let mut wm = w;
            wp[i] += 1e-6;
            wm[i] -= 1e-6;
            let fd = (term.value(&wp).unwrap() - term.value(&wm).unwrap()) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
            let expected = if w[i] < 0.0 { 3.0 * lumped[i] } else { 0.0 };
            assert_eq!(h[i], expected);
        }
    }

    #[test]
    fn lumped_mass_preserves_total_area() {
        let problem = strip_problem(4, true, reg(1e-3), |_| 1.0);
        let d = lump(problem.control_mass());
        let total: f64 = d.iter().sum();
        // two controls, each with unit area
        assert!((total - 2.0).abs() < 1e-12);
        assert!(d.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn zero_target_gives_zero_controls() {
        let problem = strip_problem(4, true, reg(1e-8), |_| 0.0);
        let sol = solve_ocnc(&problem, &OcncConfig::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.iterate.controls().iter().all(|&x| x == 0.0));
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn solution_is_feasible_and_stationary() {
        let problem = strip_problem(8, true, reg(1e-4), |x| if x[0] < 0.5 { 3.0 } else { -1.0 });
        let sol = solve_ocnc(&problem, &OcncConfig::default()).unwrap();
        assert!(sol.converged, "{}", sol.kkt_residual);
        let w = sol.iterate.controls();
        assert!(w.iter().all(|&x| x >= 0.0));
        // the negative target makes some bounds active
        assert!(w.contains(&0.0));
        assert!(w.iter().any(|&x| x > 0.0));
        let g = problem.reduced_gradient(&w).unwrap();
        for (x, gi) in w.iter().zip(&g) {
            assert!(*gi >= -1e-8);
            if *x > 1e-6 {
                assert!(gi.abs() < 1e-8);
            }
        }
        let gammas: Vec<f64> = sol.stages.iter().map(|s| s.gamma).collect();
        assert_eq!(gammas.first(), Some(&1.0));
        assert_eq!(gammas.last(), Some(&1e8));
    }

    #[test]
    fn rejects_bad_configuration() {
        let problem = strip_problem(4, true, reg(1e-3), |_| 1.0);
        let cfg = OcncConfig {
            gamma_factor: 1.0,
            ..OcncConfig::default()
        };
        assert!(solve_ocnc(&problem, &cfg).is_err());
        let cfg = OcncConfig {
            kkt_tol: 0.0,
            ..OcncConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
