//! Discrete strong-stationarity test.
//!
//! Elements are sorted into `I⁺⁰`, `I⁰⁰`, `I⁰⁺` by the centroid values
//! `u⁰ = E10 u`, `v⁰ = E10 v`. Every vertex yields one test pair built from
//! its hat function: `z_u = φᵢ` if the hat's support lies in `I⁺⁰ ∪ I⁰⁰`,
//! `z_v = φᵢ` if it lies in `I⁰⁺ ∪ I⁰⁰`. At a strongly stationary point
//! `Σ(z_u, z_v) ≥ 0` for every such pair and `Θ = 0`.
//!
//! Test directions live in the full nodal space, independent of any
//! control reduction.

use alloc::vec;
use alloc::vec::Vec;

use crate::problem::ControlProblem;
use crate::{Error, Result};

/// Relative factor in the activity threshold `τ = 1e-6 (1 + ‖u⁰‖∞ + ‖v⁰‖∞)`.
pub const ACTIVITY_RTOL: f64 = 1e-6;
/// `tol = 0.01 |min Σ|`
pub const TOL_FACTOR: f64 = 0.01;
/// Largest admissible share of numerically negative pairs.
pub const MAX_NEGATIVE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementClass {
    /// `u⁰ > 0`, `v⁰ = 0`
    PlusZero,
    /// `u⁰ = v⁰ = 0`
    Biactive,
    /// `u⁰ = 0`, `v⁰ > 0`
    ZeroPlus,
    /// Both positive or either negative beyond the threshold.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSets {
    pub i_plus0: Vec<usize>,
    pub i_00: Vec<usize>,
    pub i_0plus: Vec<usize>,
    /// Elements in none of the three sets.
    pub infeasible: Vec<usize>,
}

impl IndexSets {
    pub fn class_of(&self, num_elements: usize) -> Vec<ElementClass> {
        let mut out = vec![ElementClass::Infeasible; num_elements];
        for &e in &self.i_plus0 {
            out[e] = ElementClass::PlusZero;
        }
        for &e in &self.i_00 {
            out[e] = ElementClass::Biactive;
        }
        for &e in &self.i_0plus {
            out[e] = ElementClass::ZeroPlus;
        }
        out
    }
}

/// `1e-6 (1 + ‖E10 u‖∞ + ‖E10 v‖∞)`
pub fn default_activity_threshold(problem: &ControlProblem, u: &[f64], v: &[f64]) -> f64 {
    let fem = problem.fem();
    ACTIVITY_RTOL * (1.0 + crate::norm_inf(&fem.to_elements(u)) + crate::norm_inf(&fem.to_elements(v)))
}

/// Elementwise classification; "zero" means `|x| ≤ tau_act`, "positive" means `x > tau_act`.
pub fn classify_elements(problem: &ControlProblem, u: &[f64], v: &[f64], tau_act: f64) -> Result<IndexSets> {
    let n = problem.num_nodes();
    Error::check_len("control u", n, u.len())?;
    Error::check_len("control v", n, v.len())?;
    if !(tau_act > 0.0) {
        return Err(Error::invalid("activity threshold must be positive"));
    }
    let fem = problem.fem();
    let (u0, v0) = (fem.to_elements(u), fem.to_elements(v));
    let mut sets = IndexSets {
        i_plus0: Vec::new(),
        i_00: Vec::new(),
        i_0plus: Vec::new(),
        infeasible: Vec::new(),
    };
    for (e, (&a, &b)) in u0.iter().zip(&v0).enumerate() {
        let (za, zb) = (a.abs() <= tau_act, b.abs() <= tau_act);
        let (pa, pb) = (a > tau_act, b > tau_act);
        match (pa, za, pb, zb) {
            (true, _, _, true) => sets.i_plus0.push(e),
            (_, true, _, true) => sets.i_00.push(e),
            (_, true, true, _) => sets.i_0plus.push(e),
            _ => sets.infeasible.push(e),
        }
    }
    Ok(sets)
}

/// `Θ = yᵀE10ᵀM0E10y − yᵀE10ᵀM0y_d + α₁uᵀM1u + α₂vᵀM1v + ε uᵀ(K+M1)u + ε vᵀ(K+M1)v`
pub fn compute_theta(problem: &ControlProblem, y: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
    let n = problem.num_nodes();
    Error::check_len("state", n, y.len())?;
    Error::check_len("control u", n, u.len())?;
    Error::check_len("control v", n, v.len())?;
    let fem = problem.fem();
    let r = problem.regularization();
    Ok(
        problem.tracking_hessian().bilinear(y, y) - crate::dot(y, problem.tracking_target())
            + r.alpha1 * fem.m1.bilinear(u, u)
            + r.alpha2 * fem.m1.bilinear(v, v)
            + r.epsilon * (fem.h1.bilinear(u, u) + fem.h1.bilinear(v, v)),
    )
}

/// `Σ(z_u, z_v)` by a state solve for `z_y`, evaluated term by term.
pub fn sigma_for_pair(
    problem: &ControlProblem,
    zu: &[f64],
    zv: &[f64],
    y: &[f64],
    u: &[f64],
    v: &[f64],
) -> Result<f64> {
    let n = problem.num_nodes();
    for (what, x) in [
        ("test zu", zu),
        ("test zv", zv),
        ("state", y),
        ("control u", u),
        ("control v", v),
    ] {
        Error::check_len(what, n, x.len())?;
    }
    if zu.iter().chain(zv).any(|&z| z < 0.0) {
        return Err(Error::invalid("test directions must be nonnegative"));
    }
    let zy = problem.operator().solve_state(zu, zv)?;
    let fem = problem.fem();
    let r = problem.regularization();
    Ok(
        problem.tracking_hessian().bilinear(&zy, y) - crate::dot(&zy, problem.tracking_target())
            + r.alpha1 * fem.m1.bilinear(u, zu)
            + r.alpha2 * fem.m1.bilinear(v, zv)
            + r.epsilon * (fem.h1.bilinear(u, zu) + fem.h1.bilinear(v, zv)),
    )
}

/// Nodal vectors `(g_u, g_v)` with `Σ(z_u, z_v) = z_uᵀg_u + z_vᵀg_v`.
///
/// Uses `p` from `A p = E10ᵀM0(E10 y − y_d)`, so that
/// `g_u = B p + α₁M1u + ε(K+M1)u`, and likewise for `v`.
pub fn stationarity_gradient(
    problem: &ControlProblem,
    y: &[f64],
    u: &[f64],
    v: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = problem.num_nodes();
    Error::check_len("control u", n, u.len())?;
    Error::check_len("control v", n, v.len())?;
    let p = problem.adjoint(y)?;
    let op = problem.operator();
    let fem = problem.fem();
    let r = problem.regularization();
    let part = |coupling: &crate::sparse::CsrMatrix, x: &[f64], alpha: f64| {
        let mut g = coupling.tr_mul_vec(&p);
        crate::axpy(alpha, &fem.m1.mul_vec(x), &mut g);
        crate::axpy(r.epsilon, &fem.h1.mul_vec(x), &mut g);
        g
    };
    Ok((part(&op.b, u, r.alpha1), part(&op.c, v, r.alpha2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairClass {
    Positive,
    Zero,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestedPair {
    pub node: usize,
    /// `z_u` is the hat function of `node`.
    pub tests_u: bool,
    /// `z_v` is the hat function of `node`.
    pub tests_v: bool,
    pub sigma: f64,
    pub class: PairClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairCounts {
    pub positive: usize,
    pub zero: usize,
    pub negative: usize,
}

impl PairCounts {
    pub fn total(&self) -> usize {
        self.positive + self.zero + self.negative
    }

    /// Share of negative pairs in percent; zero without pairs.
    pub fn percent_negative(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => 100.0 * self.negative as f64 / t as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Passed,
    Failed,
    /// No admissible test pair exists.
    VacuousPass,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Passed => "passed",
            Verdict::Failed => "failed",
            Verdict::VacuousPass => "vacuous-pass",
        }
    }

    pub fn is_pass(&self) -> bool {
        !matches!(self, Verdict::Failed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    pub theta: f64,
    pub tol: f64,
    pub tau_act: f64,
    pub min_sigma: f64,
    pub pairs: Vec<TestedPair>,
    pub counts: PairCounts,
    pub verdict: Verdict,
    pub index_sets: IndexSets,
    pub infeasible_elements: usize,
}

impl StationarityReport {
    pub fn passed(&self) -> bool {
        self.verdict.is_pass()
    }
}

/// Classifies `Σ` values against `tol = 0.01 |min Σ|`.
pub fn classify_sigmas(sigmas: &[f64]) -> (f64, Vec<PairClass>) {
    let min = sigmas.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = if min.is_finite() { TOL_FACTOR * min.abs() } else { 0.0 };
    let classes = sigmas
        .iter()
        .map(|&s| {
            if s > tol {
                PairClass::Positive
            } else if s < -tol {
                PairClass::Negative
            } else {
                PairClass::Zero
            }
        })
        .collect();
    (tol, classes)
}

/// Runs the full test at the nodal point `(y, u, v)`.
///
/// `tau_act` defaults to [`default_activity_threshold`].
pub fn run_stationarity_test(
    problem: &ControlProblem,
    y: &[f64],
    u: &[f64],
    v: &[f64],
    tau_act: Option<f64>,
) -> Result<StationarityReport> {
    let tau = match tau_act {
        Some(t) => t,
        None => default_activity_threshold(problem, u, v),
    };
    let sets = classify_elements(problem, u, v, tau)?;
    let theta = compute_theta(problem, y, u, v)?;
    let (gu, gv) = stationarity_gradient(problem, y, u, v)?;
    let classes = sets.class_of(problem.fem().num_elements());

    let mut pairs = Vec::new();
    for (node, patch) in problem.mesh().vertex_patches().iter().enumerate() {
        let tests_u = patch
            .iter()
            .all(|&e| matches!(classes[e], ElementClass::PlusZero | ElementClass::Biactive));
        let tests_v = patch
            .iter()
            .all(|&e| matches!(classes[e], ElementClass::ZeroPlus | ElementClass::Biactive));
        if !(tests_u || tests_v) {
            continue;
        }
        // Σ(φᵢ·[tests_u], φᵢ·[tests_v]) picks the i-th entries of g_u, g_v
        let mut sigma = 0.0;
        if tests_u {
            sigma += gu[node];
        }
        if tests_v {
            sigma += gv[node];
        }
        pairs.push(TestedPair {
            node,
            tests_u,
            tests_v,
            sigma,
            class: PairClass::Zero,
        });
    }

    let sigmas: Vec<f64> = pairs.iter().map(|p| p.sigma).collect();
    let (tol, cls) = classify_sigmas(&sigmas);
    let mut counts = PairCounts::default();
    for (p, c) in pairs.iter_mut().zip(cls) {
        p.class = c;
        match c {
            PairClass::Positive => counts.positive += 1,
            PairClass::Zero => counts.zero += 1,
            PairClass::Negative => counts.negative += 1,
        }
    }
    let min_sigma = sigmas.iter().copied().fold(f64::INFINITY, f64::min);
    let verdict = if pairs.is_empty() {
        log::warn!("no admissible test pairs; stationarity test is vacuous");
        Verdict::VacuousPass
    } else if theta.abs() <= libm::sqrt(tol) && counts.negative as f64 <= MAX_NEGATIVE_FRACTION * counts.total() as f64
    {
        Verdict::Passed
    } else {
        Verdict::Failed
    };
    Ok(StationarityReport {
        theta,
        tol,
        tau_act: tau,
        min_sigma,
        pairs,
        counts,
        verdict,
        infeasible_elements: sets.infeasible.len(),
        index_sets: sets,
    })
}
