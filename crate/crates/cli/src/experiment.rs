//! The three benchmark problems on the unit square and the end-to-end
//! pipeline: OCNC start, penalty homotopy, stationarity test.

use std::fmt;
use std::str::FromStr;

use fbcontrol_core::fem::{identity_tensor, ControlSpace, FemMatrices};
use fbcontrol_core::homotopy::{run_homotopy, HomotopyOutcome, PenaltyConfig};
use fbcontrol_core::mesh::Mesh;
use fbcontrol_core::ncp::max_abs_fb;
use fbcontrol_core::pde::{solve_dirichlet_laplace, Coefficients, EllipticOperator};
use fbcontrol_core::problem::{ControlProblem, Regularization};
use fbcontrol_core::stationarity::{run_stationarity_test, StationarityReport};

use crate::error::CliError;

/// Smallest grid accepted by the drivers.
pub const MIN_NX: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    /// Piecewise constant target with values 1 and 3.
    Discontinuous,
    /// Harmonic target with Dirichlet data on the bottom and top edges.
    Harmonic,
    /// `y_d ≡ 1.5`.
    Constant,
}

impl Example {
    pub const ALL: [Example; 3] = [Example::Discontinuous, Example::Harmonic, Example::Constant];

    pub fn id(self) -> u8 {
        match self {
            Example::Discontinuous => 1,
            Example::Harmonic => 2,
            Example::Constant => 3,
        }
    }

    pub fn from_id(id: u8) -> Result<Self, CliError> {
        match id {
            1 => Ok(Example::Discontinuous),
            2 => Ok(Example::Harmonic),
            3 => Ok(Example::Constant),
            _ => Err(CliError::Usage(format!("unknown example {id}; expected 1, 2 or 3"))),
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

impl FromStr for Example {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let id: u8 = s
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("unknown example {s:?}; expected 1, 2 or 3")))?;
        Example::from_id(id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub example: Example,
    pub nx: usize,
    pub config: PenaltyConfig,
}

impl ExperimentSpec {
    pub fn new(example: Example, nx: usize) -> Self {
        Self {
            example,
            nx,
            config: PenaltyConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.nx < MIN_NX {
            return Err(CliError::Usage(format!(
                "nx must be at least {MIN_NX}, got {}",
                self.nx
            )));
        }
        self.config.validate()?;
        Ok(())
    }
}

fn indicator(centroids: &[[f64; 2]], pred: impl Fn([f64; 2]) -> bool) -> Vec<f64> {
    centroids.iter().map(|&c| if pred(c) { 1.0 } else { 0.0 }).collect()
}

/// Elementwise desired state of `example` on `mesh`.
pub fn desired_state(example: Example, mesh: &Mesh, fem: &FemMatrices) -> Result<Vec<f64>, CliError> {
    let centroids = mesh.centroids();
    Ok(match example {
        Example::Discontinuous => centroids
            .iter()
            .map(|&[x1, x2]| {
                let lower = x1 > 0.25 && x1 < 0.75 && x2 < 0.25;
                let upper = x1 < 0.5 && x2 > 0.75;
                if lower || upper {
                    3.0
                } else {
                    1.0
                }
            })
            .collect(),
        Example::Harmonic => {
            let g1 = |x1: f64| 2.0 * (x1 * (0.75 * std::f64::consts::PI * x1).cos()).max(0.0);
            let nodal = solve_dirichlet_laplace(mesh, g1, |_| 0.25)?;
            fem.to_elements(&nodal)
        }
        Example::Constant => vec![1.5; mesh.num_elements()],
    })
}

/// Assembles the problem for `example` with controls constant along `x₂`.
pub fn build_example(example: Example, nx: usize, reg: Regularization) -> Result<ControlProblem, CliError> {
    if nx < MIN_NX {
        return Err(CliError::Usage(format!("nx must be at least {MIN_NX}, got {nx}")));
    }
    let mesh = Mesh::structured(nx)?;
    let fem = FemMatrices::assemble(&mesh)?;
    let centroids = mesh.centroids();
    let coef = Coefficients {
        reaction: vec![1.0; mesh.num_elements()],
        control_u: indicator(&centroids, |c| c[1] < 0.25),
        control_v: indicator(&centroids, |c| c[1] > 0.75),
        diffusion: identity_tensor(&mesh),
    };
    let op = EllipticOperator::assemble(&mesh, &coef)?;
    let yd = desired_state(example, &mesh, &fem)?;
    let space = ControlSpace::columns(&mesh)?;
    Ok(ControlProblem::new(mesh, op, space, yd, reg)?)
}

/// A computed point with its certificate.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub problem: ControlProblem,
    pub outcome: HomotopyOutcome,
    /// Nodal controls.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `max |φ(E10 u, E10 v)|`.
    pub complementarity: f64,
    pub report: StationarityReport,
}

impl ExperimentResult {
    /// `(x₁, u(x₁, 0), v(x₁, 0))` along the bottom edge.
    pub fn bottom_trace(&self) -> Vec<[f64; 3]> {
        let mesh = self.problem.mesh();
        mesh.bottom_vertices()
            .map(|it| it.map(|i| [mesh.vertices()[i][0], self.u[i], self.v[i]]).collect())
            .unwrap_or_default()
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, CliError> {
    spec.validate()?;
    let problem = build_example(spec.example, spec.nx, spec.config.regularization)?;
    log::info!(
        "example {} on a {}x{} grid: {} nodes, {} control unknowns",
        spec.example,
        spec.nx,
        spec.nx,
        problem.num_nodes(),
        2 * problem.control_dim()
    );
    let outcome = run_homotopy(&problem, &spec.config)?;
    for rec in &outcome.trace.records {
        log::info!(
            "sigma {:.1e}: {} Newton steps, residual {:.2e}, change {:.2e}, max|fb| {:.2e}",
            rec.sigma,
            rec.newton.iterations,
            rec.newton.final_residual,
            rec.control_change,
            rec.max_fb
        );
    }
    let (u, v) = problem.expand_controls(&outcome.iterate.controls());
    let complementarity = max_abs_fb(problem.fem(), &u, &v)?;
    let report = run_stationarity_test(&problem, &outcome.iterate.y, &u, &v, None)?;
    Ok(ExperimentResult {
        spec: spec.clone(),
        problem,
        outcome,
        u,
        v,
        complementarity,
        report,
    })
}

/// A saved point re-certified on its own problem.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub example: Example,
    pub nx: usize,
    pub complementarity: f64,
    pub report: StationarityReport,
}

/// Rebuilds the problem of a saved point and runs the stationarity test on it.
pub fn check_state(state: &crate::io::SavedState, tau_act: Option<f64>) -> Result<CheckResult, CliError> {
    let example = Example::from_id(state.example)?;
    let problem = build_example(example, state.nx, state.regularization())?;
    let n = problem.num_nodes();
    for (name, x) in [("y", &state.y), ("u", &state.u), ("v", &state.v)] {
        if x.len() != n {
            return Err(CliError::Usage(format!(
                "saved {name} has {} entries, the {}x{} grid has {n} nodes",
                x.len(),
                state.nx,
                state.nx
            )));
        }
    }
    if let Some(t) = tau_act {
        if t.is_nan() || t <= 0.0 {
            return Err(CliError::Usage(format!("activity threshold must be positive, got {t}")));
        }
    }
    let complementarity = max_abs_fb(problem.fem(), &state.u, &state.v)?;
    let report = run_stationarity_test(&problem, &state.y, &state.u, &state.v, tau_act)?;
    Ok(CheckResult {
        example,
        nx: state.nx,
        complementarity,
        report,
    })
}
