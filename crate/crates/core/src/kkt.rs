//! KKT system of the penalized problem for a fixed penalty weight `σ`, and a
//! damped semismooth Newton method for it.
//!
//! Unknowns and rows are stacked as `[y; u; v; p]` with reduced controls:
//!
//! ```text
//! r_y = E10ᵀM0E10 y − E10ᵀM0 y_d − A p
//! r_w = G₀ w + σ Rᵀ∇F̃(Rw) + Nᵀ p          (w = [u; v])
//! r_p = −A y + N w
//! ```
//!
//! where `A = M1(a) + K(C)`, `N = [M1(b)R, M1(c)R]` and
//! `G₀ = blockdiag(Rᵀ(α M1 + ε(M1 + K))R)`. The generalized Jacobian uses
//! the Clarke element of `∇F̃` that vanishes on biactive elements.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::banded::{BandedLu, LinearSolver};
use crate::dense::DenseMatrix;
use crate::ncp::{penalty_eval, penalty_newton_matrix};
use crate::problem::ControlProblem;
use crate::sparse::{CsrMatrix, TripletBuilder};
use crate::{Error, Result};

/// State, reduced controls and adjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct KktIterate {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
}

impl KktIterate {
    pub fn zeros(problem: &ControlProblem) -> Self {
        let (n, m) = (problem.num_nodes(), problem.control_dim());
        Self {
            y: vec![0.0; n],
            u: vec![0.0; m],
            v: vec![0.0; m],
            p: vec![0.0; n],
        }
    }

    /// Stacked reduced controls `[u; v]`.
    pub fn controls(&self) -> Vec<f64> {
        let mut w = self.u.clone();
        w.extend_from_slice(&self.v);
        w
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(2 * self.y.len() + 2 * self.u.len());
        x.extend_from_slice(&self.y);
        x.extend_from_slice(&self.u);
        x.extend_from_slice(&self.v);
        x.extend_from_slice(&self.p);
        x
    }

    pub fn from_vec(x: &[f64], n: usize, m: usize) -> Self {
        assert_eq!(x.len(), 2 * n + 2 * m);
        Self {
            y: x[..n].to_vec(),
            u: x[n..n + m].to_vec(),
            v: x[n + m..n + 2 * m].to_vec(),
            p: x[n + 2 * m..].to_vec(),
        }
    }

    /// `self + t d`
    pub fn step(&self, t: f64, d: &KktIterate) -> KktIterate {
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + t * y).collect();
        KktIterate {
            y: add(&self.y, &d.y),
            u: add(&self.u, &d.u),
            v: add(&self.v, &d.v),
            p: add(&self.p, &d.p),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.y
            .iter()
            .chain(&self.u)
            .chain(&self.v)
            .chain(&self.p)
            .all(|x| x.is_finite())
    }

    fn check(&self, problem: &ControlProblem) -> Result<()> {
        let (n, m) = (problem.num_nodes(), problem.control_dim());
        Error::check_len("iterate y", n, self.y.len())?;
        Error::check_len("iterate u", m, self.u.len())?;
        Error::check_len("iterate v", m, self.v.len())?;
        Error::check_len("iterate p", n, self.p.len())
    }
}

/// The nonlinear control term added to the quadratic part of the objective.
pub(crate) trait ControlTerm {
    fn value(&self, w: &[f64]) -> Result<f64>;
    /// Gradient with respect to stacked reduced controls.
    fn gradient(&self, w: &[f64]) -> Result<Vec<f64>>;
    /// Newton derivative of [`Self::gradient`].
    fn hessian(&self, w: &[f64]) -> Result<CsrMatrix>;
}

/// `σ F̃(Ru, Rv)`
pub(crate) struct FbPenalty<'a> {
    pub problem: &'a ControlProblem,
    pub sigma: f64,
}

impl ControlTerm for FbPenalty<'_> {
    fn value(&self, w: &[f64]) -> Result<f64> {
        let (u, v) = self.problem.expand_controls(w);
        Ok(self.sigma * penalty_eval(self.problem.fem(), &u, &v)?.value)
    }

    fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        let space = self.problem.space();
        let (u, v) = self.problem.expand_controls(w);
        let pe = penalty_eval(self.problem.fem(), &u, &v)?;
        let mut g = space.restrict(&pe.grad_u);
        g.extend(space.restrict(&pe.grad_v));
        g.iter_mut().for_each(|x| *x *= self.sigma);
        Ok(g)
    }

    fn hessian(&self, w: &[f64]) -> Result<CsrMatrix> {
        let space = self.problem.space();
        let m = space.dim();
        let (u, v) = self.problem.expand_controls(w);
        let h = penalty_newton_matrix(self.problem.fem(), &u, &v)?;
        let uv = space.conjugate(&h.uv);
        let mut b = TripletBuilder::new(2 * m, 2 * m);
        b.push_block(0, 0, self.sigma, &space.conjugate(&h.uu));
        b.push_block(0, m, self.sigma, &uv);
        b.push_block(m, 0, self.sigma, &uv.transpose());
        b.push_block(m, m, self.sigma, &space.conjugate(&h.vv));
        Ok(b.build())
    }
}

/// `term` with a constant matrix added to its Newton derivative.
struct Shifted<'a> {
    term: &'a dyn ControlTerm,
    shift: CsrMatrix,
}

impl ControlTerm for Shifted<'_> {
    fn value(&self, w: &[f64]) -> Result<f64> {
        self.term.value(w)
    }

    fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.term.gradient(w)
    }

    fn hessian(&self, w: &[f64]) -> Result<CsrMatrix> {
        CsrMatrix::linear_combination(&[(1.0, &self.term.hessian(w)?), (1.0, &self.shift)])
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("penalty parameter must be finite and nonnegative"))
    }
}

pub(crate) fn residual_with(problem: &ControlProblem, it: &KktIterate, term: &dyn ControlTerm) -> Result<Vec<f64>> {
    it.check(problem)?;
    let op = problem.operator();
    let w = it.controls();
    let n = problem.num_nodes();
    let mut r = Vec::with_capacity(2 * n + w.len());

    let hy = problem.tracking_hessian().mul_vec(&it.y);
    let ap = op.a.mul_vec(&it.p);
    r.extend(
        hy.iter()
            .zip(problem.tracking_target())
            .zip(&ap)
            .map(|((h, t), a)| h - t - a),
    );

    let mut rw = problem.control_hessian().mul_vec(&w);
    crate::axpy(1.0, &term.gradient(&w)?, &mut rw);
    crate::axpy(1.0, &problem.coupling().tr_mul_vec(&it.p), &mut rw);
    r.extend(rw);

    let ay = op.a.mul_vec(&it.y);
    let nw = problem.coupling().mul_vec(&w);
    r.extend(ay.iter().zip(&nw).map(|(a, b)| b - a));
    Ok(r)
}

pub(crate) fn jacobian_with(problem: &ControlProblem, it: &KktIterate, term: &dyn ControlTerm) -> Result<CsrMatrix> {
    it.check(problem)?;
    let n = problem.num_nodes();
    let m2 = 2 * problem.control_dim();
    let dim = 2 * n + m2;
    let a = &problem.operator().a;
    let coupling = problem.coupling();
    let mut b = TripletBuilder::new(dim, dim);
    b.push_block(0, 0, 1.0, problem.tracking_hessian());
    b.push_block(0, n + m2, -1.0, a);
    b.push_block(n, n, 1.0, problem.control_hessian());
    b.push_block(n, n, 1.0, &term.hessian(&it.controls())?);
    b.push_block(n, n + m2, 1.0, &coupling.transpose());
    b.push_block(n + m2, 0, -1.0, a);
    b.push_block(n + m2, n, 1.0, coupling);
    Ok(b.build())
}

/// Stacked residual `[r_y; r_u; r_v; r_p]` of the KKT system at penalty `sigma ≥ 0`.
pub fn kkt_residual(problem: &ControlProblem, it: &KktIterate, sigma: f64) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    residual_with(problem, it, &FbPenalty { problem, sigma })
}

/// Generalized Jacobian of [`kkt_residual`] with respect to `[y; u; v; p]`.
pub fn kkt_jacobian(problem: &ControlProblem, it: &KktIterate, sigma: f64) -> Result<CsrMatrix> {
    check_sigma(sigma)?;
    jacobian_with(problem, it, &FbPenalty { problem, sigma })
}

/// How Newton systems are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepSolver {
    /// Schur complement for few control unknowns, banded LU otherwise.
    #[default]
    Auto,
    /// Eliminate `y` and `p` with the factored state operator and solve a
    /// dense system for the controls.
    Schur,
    /// Band LU of the whole Jacobian with node-interleaved unknowns; needs
    /// unreduced controls.
    BandedKkt,
}

/// Newton steps needing more halvings than this defer to the descent fallback.
const MAX_CLEAN_HALVINGS: usize = 10;

/// Control unknowns above which [`StepSolver::Auto`] switches to the band solver.
const SCHUR_MAX_CONTROLS: usize = 1500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Stop when `‖residual‖∞ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant of the Armijo rule on `½‖r‖²`.
    pub armijo: f64,
    /// Smallest step length before the line search gives up.
    pub min_step: f64,
    /// Diagonal shift used when a Newton matrix is singular.
    pub regularization: f64,
    pub solver: StepSolver,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 50,
            armijo: 1e-4,
            min_step: 1.0 / (1u64 << 30) as f64,
            regularization: 1e-10,
            solver: StepSolver::Auto,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid("Newton tolerance must be positive"));
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return Err(Error::invalid("Armijo constant must lie in (0, 0.5)"));
        }
        if !(self.min_step > 0.0 && self.min_step < 1.0) {
            return Err(Error::invalid("minimum step must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NewtonFailure {
    MaxIterations,
    /// Line search fell below the minimum step.
    Stagnation,
    /// The Newton matrix stayed singular after regularization.
    Singular(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// `damping_steps[k]` counts accepted steps that needed `k` halvings.
    pub damping_steps: Vec<usize>,
    /// Steps solved with a regularized matrix.
    pub regularized_steps: usize,
    /// Steps taken by the objective-descent fallback after a failed line search.
    pub descent_steps: usize,
    /// `‖r‖∞` before every iteration and at exit.
    pub residual_history: Vec<f64>,
    pub failure: Option<NewtonFailure>,
}

/// Precomputed elimination of the state and adjoint blocks:
/// `Z = A⁻¹N` and `W = Zᵀ E10ᵀM0E10 Z`.
struct SchurContext {
    z: Vec<Vec<f64>>,
    w: DenseMatrix,
}

impl SchurContext {
    fn new(problem: &ControlProblem) -> Result<Self> {
        let nt = problem.coupling().transpose();
        let fem = problem.fem();
        let m2 = nt.nrows();
        let n = problem.num_nodes();
        let mut z = Vec::with_capacity(m2);
        let mut ez = Vec::with_capacity(m2);
        for j in 0..m2 {
            let mut col = vec![0.0; n];
            let (idx, vals) = nt.row(j);
            for (&i, &v) in idx.iter().zip(vals) {
                col[i] = v;
            }
            let zj = problem.operator().solve(&col)?;
            let e: Vec<f64> = fem
                .to_elements(&zj)
                .iter()
                .zip(&fem.area)
                .map(|(x, a)| x * libm::sqrt(*a))
                .collect();
            z.push(zj);
            ez.push(e);
        }
        let mut w = DenseMatrix::zeros(m2, m2);
        for i in 0..m2 {
            for j in i..m2 {
                let v = crate::dot(&ez[i], &ez[j]);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        Ok(Self { z, w })
    }

    /// `W + G_ww`, the Hessian of the state-reduced objective.
    fn reduced_hessian(&self, gww: &CsrMatrix) -> DenseMatrix {
        let mut s = self.w.clone();
        for (i, j, v) in gww.iter() {
            s[(i, j)] += v;
        }
        s
    }

    fn solve(&self, problem: &ControlProblem, gww: &CsrMatrix, rhs: &[f64], shift: f64) -> Result<Vec<f64>> {
        let n = problem.num_nodes();
        let m2 = self.z.len();
        let (b1, rest) = rhs.split_at(n);
        let (bw, b4) = rest.split_at(m2);
        let op = problem.operator();
        let hyy = problem.tracking_hessian();

        let ainv_b4 = op.solve(b4)?;
        let mut t = hyy.mul_vec(&ainv_b4);
        crate::axpy(1.0, b1, &mut t);
        let rhs_w: Vec<f64> = bw.iter().zip(&self.z).map(|(b, zj)| b + crate::dot(zj, &t)).collect();

        let mut s = self.reduced_hessian(gww);
        if shift != 0.0 {
            s.add_diagonal(shift);
        }
        let dw = s.lu()?.solve(&rhs_w);

        let mut dy: Vec<f64> = ainv_b4.iter().map(|x| -x).collect();
        for (zj, &c) in self.z.iter().zip(&dw) {
            crate::axpy(c, zj, &mut dy);
        }
        let mut q = hyy.mul_vec(&dy);
        crate::axpy(-1.0, b1, &mut q);
        let dp = op.solve(&q)?;

        let mut d = dy;
        d.extend(dw);
        d.extend(dp);
        Ok(d)
    }
}

/// Band LU of the Jacobian with unknowns reordered node by node as
/// `(y_i, u_i, v_i, p_i)`; keeps the bandwidth at `4(nx + 2) + 3`.
fn banded_kkt_solve(jac: &CsrMatrix, n: usize, rhs: &[f64], shift: f64) -> Result<Vec<f64>> {
    let dim = jac.nrows();
    if dim != 4 * n {
        return Err(Error::Unsupported(
            "banded KKT solver needs unreduced controls".to_string(),
        ));
    }
    let perm = |k: usize| (k % n) * 4 + k / n;
    let mut b = TripletBuilder::with_capacity(dim, dim, jac.nnz() + dim);
    for (i, j, v) in jac.iter() {
        b.push(perm(i), perm(j), v);
    }
    if shift != 0.0 {
        for i in 0..dim {
            b.push(i, i, shift);
        }
    }
    let lu = BandedLu::factor(&b.build())?;
    let mut pr = vec![0.0; dim];
    for (k, &r) in rhs.iter().enumerate() {
        pr[perm(k)] = r;
    }
    let px = lu.solve(&pr);
    Ok((0..dim).map(|k| px[perm(k)]).collect())
}

/// Semismooth Newton driver; reuses the state-operator elimination across
/// solves on the same problem.
pub struct Newton<'a> {
    problem: &'a ControlProblem,
    cfg: NewtonConfig,
    schur: Option<SchurContext>,
}

impl<'a> Newton<'a> {
    pub fn new(problem: &'a ControlProblem, cfg: NewtonConfig) -> Result<Self> {
        cfg.validate()?;
        let m2 = 2 * problem.control_dim();
        let use_schur = match cfg.solver {
            StepSolver::Schur => true,
            StepSolver::BandedKkt => {
                if problem.space().is_reduced() {
                    return Err(Error::Unsupported(
                        "banded KKT solver needs unreduced controls".to_string(),
                    ));
                }
                false
            }
            StepSolver::Auto => m2 <= SCHUR_MAX_CONTROLS || problem.space().is_reduced(),
        };
        let schur = if use_schur {
            Some(SchurContext::new(problem)?)
        } else {
            None
        };
        Ok(Self { problem, cfg, schur })
    }

    pub fn config(&self) -> &NewtonConfig {
        &self.cfg
    }

    /// Solves the KKT system at penalty `sigma` starting from `start`.
    pub fn solve(&self, start: &KktIterate, sigma: f64) -> Result<(KktIterate, NewtonReport)> {
        check_sigma(sigma)?;
        self.solve_with(
            start,
            &FbPenalty {
                problem: self.problem,
                sigma,
            },
        )
    }

    fn control_block(&self, it: &KktIterate, term: &dyn ControlTerm) -> Result<CsrMatrix> {
        CsrMatrix::linear_combination(&[
            (1.0, &term.hessian(&it.controls())?),
            (1.0, self.problem.control_hessian()),
        ])
    }

    /// Whether the Hessian of the penalized reduced objective is positive
    /// definite at `it`; `None` when no reduced factorization is available.
    fn convex_at(&self, it: &KktIterate, term: &dyn ControlTerm) -> Result<Option<bool>> {
        match &self.schur {
            Some(ctx) => Ok(Some(
                ctx.reduced_hessian(&self.control_block(it, term)?)
                    .is_positive_definite(),
            )),
            None => Ok(None),
        }
    }

    /// Solves `J d = rhs` for the Jacobian at `it`.
    pub(crate) fn direction(
        &self,
        it: &KktIterate,
        term: &dyn ControlTerm,
        rhs: &[f64],
        shift: f64,
    ) -> Result<Vec<f64>> {
        let p = self.problem;
        match &self.schur {
            Some(ctx) => ctx.solve(p, &self.control_block(it, term)?, rhs, shift),
            None => banded_kkt_solve(&jacobian_with(p, it, term)?, p.num_nodes(), rhs, shift),
        }
    }

    pub(crate) fn solve_with(&self, start: &KktIterate, term: &dyn ControlTerm) -> Result<(KktIterate, NewtonReport)> {
        let problem = self.problem;
        let cfg = &self.cfg;
        let (n, m) = (problem.num_nodes(), problem.control_dim());
        let mut x = start.clone();
        let mut r = residual_with(problem, &x, term)?;
        let mut lambda = 0.0;
        let mut report = NewtonReport {
            iterations: 0,
            final_residual: crate::norm_inf(&r),
            converged: false,
            damping_steps: Vec::new(),
            regularized_steps: 0,
            descent_steps: 0,
            residual_history: vec![crate::norm_inf(&r)],
            failure: None,
        };
        loop {
            let rnorm = crate::norm_inf(&r);
            report.final_residual = rnorm;
            if rnorm <= cfg.tol {
                report.converged = true;
                break;
            }
            if report.iterations >= cfg.max_iter {
                report.failure = Some(NewtonFailure::MaxIterations);
                break;
            }
            if self.convex_at(&x, term)? == Some(false) {
                // Newton would head for a saddle; descend on the objective instead
                if let Some(next) = self.descent_step(&x, term, &mut lambda)? {
                    report.iterations += 1;
                    report.descent_steps += 1;
                    x = next;
                    r = residual_with(problem, &x, term)?;
                    report.residual_history.push(crate::norm_inf(&r));
                    continue;
                }
            }
            let neg: Vec<f64> = r.iter().map(|v| -v).collect();
            let d = match self.direction(&x, term, &neg, 0.0) {
                Ok(d) if d.iter().all(|v| v.is_finite()) => d,
                _ => {
                    report.regularized_steps += 1;
                    match self.direction(&x, term, &neg, cfg.regularization) {
                        Ok(d) if d.iter().all(|v| v.is_finite()) => d,
                        Ok(_) => {
                            report.failure = Some(NewtonFailure::Singular("non-finite direction".into()));
                            break;
                        }
                        Err(e) => {
                            report.failure = Some(NewtonFailure::Singular(alloc::format!("{e}")));
                            break;
                        }
                    }
                }
            };
            let d = KktIterate::from_vec(&d, n, m);

            let merit = 0.5 * crate::dot(&r, &r);
            let mut t = 1.0;
            let mut halvings = 0;
            let accepted = loop {
                let trial = x.step(t, &d);
                let rt = residual_with(problem, &trial, term)?;
                let mt = 0.5 * crate::dot(&rt, &rt);
                if mt.is_finite() && mt <= (1.0 - 2.0 * cfg.armijo * t) * merit {
                    break Some((trial, rt));
                }
                t *= 0.5;
                halvings += 1;
                if t < cfg.min_step {
                    break None;
                }
            };
            report.iterations += 1;
            let newton_ok = accepted.is_some() && halvings <= MAX_CLEAN_HALVINGS;
            let fallback = if newton_ok {
                None
            } else {
                self.descent_step(&x, term, &mut lambda)?
            };
            match (fallback, accepted) {
                (Some(next), _) => {
                    report.descent_steps += 1;
                    x = next;
                    r = residual_with(problem, &x, term)?;
                    report.residual_history.push(crate::norm_inf(&r));
                }
                (None, Some((trial, rt))) => {
                    if report.damping_steps.len() <= halvings {
                        report.damping_steps.resize(halvings + 1, 0);
                    }
                    report.damping_steps[halvings] += 1;
                    x = trial;
                    r = rt;
                    report.residual_history.push(crate::norm_inf(&r));
                }
                (None, None) => {
                    report.failure = Some(NewtonFailure::Stagnation);
                    break;
                }
            }
        }
        Ok((x, report))
    }

    /// Penalized objective of the state-reduced problem.
    fn reduced_value(&self, w: &[f64], term: &dyn ControlTerm) -> Result<f64> {
        Ok(self.problem.reduced_objective(w)? + term.value(w)?)
    }

    /// Iterate with `y`, `p` recomputed from the controls so that the linear rows vanish.
    fn consistent(&self, w: &[f64]) -> Result<KktIterate> {
        let m = self.problem.control_dim();
        let y = self.problem.state(w)?;
        let p = self.problem.adjoint(&y)?;
        Ok(KktIterate {
            y,
            u: w[..m].to_vec(),
            v: w[m..].to_vec(),
            p,
        })
    }

    /// Fallback when Newton is unreliable (indefinite Newton matrix): one
    /// Levenberg-Marquardt step `(H + λ·mass) d = −∇f` on the penalized
    /// reduced objective `f`, with `λ` adapted by the ratio of actual to
    /// predicted decrease. `lambda` carries over between calls.
    fn descent_step(&self, x: &KktIterate, term: &dyn ControlTerm, lambda: &mut f64) -> Result<Option<KktIterate>> {
        let problem = self.problem;
        let (n, m) = (problem.num_nodes(), problem.control_dim());
        let w = x.controls();
        let base = self.consistent(&w)?;
        let gradient =
            |it: &KktIterate| -> Result<Vec<f64>> { Ok(residual_with(problem, it, term)?[n..n + 2 * m].to_vec()) };
        let g = gradient(&base)?;
        let f0 = self.reduced_value(&w, term)?;
        let mut rhs = vec![0.0; 2 * n + 2 * m];
        for (r, gi) in rhs[n..n + 2 * m].iter_mut().zip(&g) {
            *r = -gi;
        }

        let mass = problem.control_mass();
        let diag_max = |a: &CsrMatrix| crate::norm_inf(&a.diagonal());
        let curvature = diag_max(problem.control_hessian()).max(diag_max(&term.hessian(&w)?));
        let unit = curvature.max(f64::MIN_POSITIVE) / diag_max(mass).max(f64::MIN_POSITIVE);
        let (lo, hi) = (unit * 1e-12, unit * 1e8);
        let mut lam = lambda.clamp(lo, hi);
        while lam <= hi {
            let shifted = Shifted {
                term,
                shift: mass.scaled(lam),
            };
            if self.convex_at(&base, &shifted)? == Some(false) {
                lam *= 10.0;
                continue;
            }
            let d = match self.direction(&base, &shifted, &rhs, 0.0) {
                Ok(d) if d.iter().all(|v| v.is_finite()) => d,
                _ => {
                    lam *= 10.0;
                    continue;
                }
            };
            let dw = &d[n..n + 2 * m];
            let slope = crate::dot(&g, dw);
            if !(slope < 0.0) {
                lam *= 10.0;
                continue;
            }
            // (H + λM) d = −g gives dᵀHd = −gᵀd − λ dᵀMd
            let pred = -0.5 * slope + 0.5 * lam * mass.bilinear(dw, dw);
            let wt: Vec<f64> = w.iter().zip(dw).map(|(a, b)| a + b).collect();
            let trial = self.consistent(&wt)?;
            let actual = if pred > 1e-10 * (1.0 + f0.abs()) {
                f0 - self.reduced_value(&wt, term)?
            } else {
                // differences of f cancel; integrate the gradient instead
                let gt = gradient(&trial)?;
                -0.5 * (slope + crate::dot(&gt, dw))
            };
            let rho = actual / pred;
            if rho.is_finite() && rho > 0.1 {
                *lambda = if rho > 0.75 { lam / 10.0 } else { lam };
                return Ok(Some(trial));
            }
            lam *= 10.0;
        }
        *lambda = hi;
        Ok(None)
    }
}

/// One-shot [`Newton::solve`].
pub fn newton_solve(
    problem: &ControlProblem,
    start: &KktIterate,
    sigma: f64,
    cfg: &NewtonConfig,
) -> Result<(KktIterate, NewtonReport)> {
    Newton::new(problem, *cfg)?.solve(start, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{reg, strip_problem, uniform};

    fn random_iterate(problem: &ControlProblem, seed: u64) -> KktIterate {
        let (n, m) = (problem.num_nodes(), problem.control_dim());
        let x = uniform(seed, 2 * n + 2 * m, -1.0, 1.0);
        KktIterate::from_vec(&x, n, m)
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let problem = strip_problem(3, false, reg(1e-2), |x| 1.0 + x[0]);
        let it = random_iterate(&problem, 7);
        let sigma = 5.0;
        let jac = kkt_jacobian(&problem, &it, sigma).unwrap();
        let dir = uniform(8, it.to_vec().len(), -1.0, 1.0);
        let d = KktIterate::from_vec(&dir, problem.num_nodes(), problem.control_dim());
        let h = 1e-6;
        let rp = kkt_residual(&problem, &it.step(h, &d), sigma).unwrap();
        let rm = kkt_residual(&problem, &it.step(-h, &d), sigma).unwrap();
        let jd = jac.mul_vec(&dir);
        for (k, (a, b)) in rp.iter().zip(&rm).enumerate() {
            let fd = (a - b) / (2.0 * h);
            assert!(
                (fd - jd[k]).abs() <= 1e-6 * (1.0 + fd.abs()),
                "row {k}: {fd} vs {}",
                jd[k]
            );
        }
    }

    #[test]
    fn residual_at_consistent_point_is_the_reduced_gradient() {
        let problem = strip_problem(4, true, reg(1e-3), |_| 1.5);
        let w = uniform(3, 2 * problem.control_dim(), 0.0, 2.0);
        let y = problem.state(&w).unwrap();
        let p = problem.adjoint(&y).unwrap();
        let m = problem.control_dim();
        let it = KktIterate {
            y,
            u: w[..m].to_vec(),
            v: w[m..].to_vec(),
            p,
        };
        let r = kkt_residual(&problem, &it, 0.0).unwrap();
        let n = problem.num_nodes();
        assert!(crate::norm_inf(&r[..n]) < 1e-12);
        assert!(crate::norm_inf(&r[n + 2 * m..]) < 1e-12);
        let g = problem.reduced_gradient(&w).unwrap();
        for (a, b) in r[n..n + 2 * m].iter().zip(&g) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_target_is_solved_by_zero() {
        let problem = strip_problem(4, true, reg(1e-8), |_| 0.0);
        let start = KktIterate::zeros(&problem);
        let (x, report) = newton_solve(&problem, &start, 1.0, &NewtonConfig::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 0);
        assert_eq!(x, start);
    }

    #[test]
    fn schur_and_banded_steps_agree() {
        let problem = strip_problem(4, false, reg(1e-3), |x| 1.0 + x[1]);
        let it = random_iterate(&problem, 11);
        let term = FbPenalty {
            problem: &problem,
            sigma: 3.0,
        };
        let rhs = uniform(12, it.to_vec().len(), -1.0, 1.0);
        let schur = NewtonConfig {
            solver: StepSolver::Schur,
            ..NewtonConfig::default()
        };
        let banded = NewtonConfig {
            solver: StepSolver::BandedKkt,
            ..NewtonConfig::default()
        };
        let d1 = Newton::new(&problem, schur)
            .unwrap()
            .direction(&it, &term, &rhs, 0.0)
            .unwrap();
        let d2 = Newton::new(&problem, banded)
            .unwrap()
            .direction(&it, &term, &rhs, 0.0)
            .unwrap();
        let scale = crate::norm_inf(&d1);
        for (a, b) in d1.iter().zip(&d2) {
            assert!((a - b).abs() <= 1e-8 * scale, "{a} vs {b}");
        }
        // and both solve J d = rhs
        let jd = kkt_jacobian(&problem, &it, 3.0).unwrap().mul_vec(&d1);
        for (a, b) in jd.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn banded_solver_rejects_reduced_controls() {
        let problem = strip_problem(4, true, reg(1e-3), |_| 1.0);
        let cfg = NewtonConfig {
            solver: StepSolver::BandedKkt,
            ..NewtonConfig::default()
        };
        assert!(matches!(Newton::new(&problem, cfg), Err(Error::Unsupported(_))));
    }

    #[test]
    fn newton_reaches_tolerance() {
        let problem = strip_problem(6, true, reg(1e-4), |x| if x[0] < 0.5 { 2.0 } else { 1.0 });
        // a cold start crosses nonconvex regions and needs the descent fallback
        let cfg = NewtonConfig {
            max_iter: 200,
            ..NewtonConfig::default()
        };
        let (x, report) = newton_solve(&problem, &KktIterate::zeros(&problem), 10.0, &cfg).unwrap();
        assert!(report.converged, "{report:?}");
        assert!(report.final_residual <= 1e-9);
        assert!(report.descent_steps > 0);
        let r = kkt_residual(&problem, &x, 10.0).unwrap();
        assert!(crate::norm_inf(&r) <= 1e-9);
        assert_eq!(report.residual_history.len(), report.iterations + 1);
    }

    #[test]
    fn solution_is_a_minimum_of_the_penalized_objective() {
        // a constant target pulls both controls up; the penalty then makes
        // the zero-controls saddle unattractive and Newton must leave it
        let problem = strip_problem(6, true, reg(1e-6), |_| 1.5);
        let sigma = 1.0;
        let (x, report) =
            newton_solve(&problem, &KktIterate::zeros(&problem), sigma, &NewtonConfig::default()).unwrap();
        assert!(report.converged, "{report:?}");
        let newton = Newton::new(&problem, NewtonConfig::default()).unwrap();
        let term = FbPenalty {
            problem: &problem,
            sigma,
        };
        assert_eq!(newton.convex_at(&x, &term).unwrap(), Some(true));
        let f = newton.reduced_value(&x.controls(), &term).unwrap();
        let f0 = newton
            .reduced_value(&vec![0.0; 2 * problem.control_dim()], &term)
            .unwrap();
        assert!(f < f0);
    }

    #[test]
    fn rejects_bad_configuration() {
        let problem = strip_problem(4, true, reg(1e-3), |_| 1.0);
        let it = KktIterate::zeros(&problem);
        assert!(kkt_residual(&problem, &it, -1.0).is_err());
        assert!(kkt_residual(&problem, &it, f64::NAN).is_err());
        let bad = NewtonConfig {
            armijo: 0.7,
            ..NewtonConfig::default()
        };
        assert!(Newton::new(&problem, bad).is_err());
        let mut short = it.clone();
        short.y.pop();
        assert!(matches!(
            kkt_residual(&problem, &short, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
