//! The discretized control problem
//!
//! ```text
//! ½‖E10 y − y_d‖²_M0 + α₁/2 uᵀM1u + α₂/2 vᵀM1v + ε/2 uᵀ(M1+K)u + ε/2 vᵀ(M1+K)v
//! s.t. (M1(a) + K(C)) y = M1(b) u + M1(c) v
//! ```
//!
//! with the controls expressed in a [`ControlSpace`]. Reduced control vectors
//! are stacked as `w = [u; v]`, each half of length `space.dim()`.

use alloc::vec::Vec;

use crate::fem::{ControlSpace, FemMatrices};
use crate::mesh::Mesh;
use crate::pde::EllipticOperator;
use crate::sparse::{CsrMatrix, TripletBuilder};
use crate::{Error, Result};

/// Control costs: `α₁, α₂ ≥ 0` (L²) and `ε > 0` (H¹).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularization {
    pub alpha1: f64,
    pub alpha2: f64,
    pub epsilon: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Self {
            alpha1: 0.0,
            alpha2: 0.0,
            epsilon: 1e-8,
        }
    }
}

impl Regularization {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 >= 0.0 && self.alpha2 >= 0.0) {
            return Err(Error::invalid("alpha1 and alpha2 must be nonnegative"));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid("epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ControlProblem {
    mesh: Mesh,
    fem: FemMatrices,
    op: EllipticOperator,
    space: ControlSpace,
    yd: Vec<f64>,
    reg: Regularization,
    hyy: CsrMatrix,
    target: Vec<f64>,
    coupling: CsrMatrix,
    control_hessian: CsrMatrix,
    control_mass: CsrMatrix,
}

impl ControlProblem {
    pub fn new(
        mesh: Mesh,
        op: EllipticOperator,
        space: ControlSpace,
        yd: Vec<f64>,
        reg: Regularization,
    ) -> Result<Self> {
        reg.validate()?;
        let fem = FemMatrices::assemble(&mesh)?;
        Error::check_len("desired state", mesh.num_elements(), yd.len())?;
        Error::check_len("operator size", mesh.num_vertices(), op.num_nodes())?;
        Error::check_len("control space nodes", mesh.num_vertices(), space.num_nodes())?;
        if yd.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("desired state has non-finite entries"));
        }

        let hyy = fem.e10.transpose().matmul(&fem.m0)?.matmul(&fem.e10)?;
        let target = fem.weighted_pullback(&yd);

        let n = mesh.num_vertices();
        let m = space.dim();
        let mut coupling = TripletBuilder::new(n, 2 * m);
        coupling.push_block(0, 0, 1.0, &space.right(&op.b));
        coupling.push_block(0, m, 1.0, &space.right(&op.c));

        let gu = CsrMatrix::linear_combination(&[(reg.alpha1, &fem.m1), (reg.epsilon, &fem.h1)])?;
        let gv = CsrMatrix::linear_combination(&[(reg.alpha2, &fem.m1), (reg.epsilon, &fem.h1)])?;
        let mut g = TripletBuilder::new(2 * m, 2 * m);
        g.push_block(0, 0, 1.0, &space.conjugate(&gu));
        g.push_block(m, m, 1.0, &space.conjugate(&gv));

        let mass = space.conjugate(&fem.m1);
        let mut mm = TripletBuilder::new(2 * m, 2 * m);
        mm.push_block(0, 0, 1.0, &mass);
        mm.push_block(m, m, 1.0, &mass);

        Ok(Self {
            mesh,
            fem,
            op,
            space,
            yd,
            reg,
            hyy,
            target,
            coupling: coupling.build(),
            control_hessian: g.build(),
            control_mass: mm.build(),
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn fem(&self) -> &FemMatrices {
        &self.fem
    }

    pub fn operator(&self) -> &EllipticOperator {
        &self.op
    }

    pub fn space(&self) -> &ControlSpace {
        &self.space
    }

    pub fn desired_state(&self) -> &[f64] {
        &self.yd
    }

    pub fn regularization(&self) -> Regularization {
        self.reg
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_vertices()
    }

    /// Length of one reduced control vector.
    pub fn control_dim(&self) -> usize {
        self.space.dim()
    }

    /// `E10ᵀ M0(1) E10`
    pub fn tracking_hessian(&self) -> &CsrMatrix {
        &self.hyy
    }

    /// `E10ᵀ M0(1) y_d`
    pub fn tracking_target(&self) -> &[f64] {
        &self.target
    }

    /// `N = [M1(b) R, M1(c) R]`, mapping stacked reduced controls to the state right-hand side.
    pub fn coupling(&self) -> &CsrMatrix {
        &self.coupling
    }

    /// Block-diagonal `Rᵀ(α M1 + ε(M1 + K))R` for both controls.
    pub fn control_hessian(&self) -> &CsrMatrix {
        &self.control_hessian
    }

    /// Block-diagonal `Rᵀ M1(1) R` for both controls.
    pub fn control_mass(&self) -> &CsrMatrix {
        &self.control_mass
    }

    /// Stacks `[u; v]`.
    pub fn stack(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut w = Vec::with_capacity(u.len() + v.len());
        w.extend_from_slice(u);
        w.extend_from_slice(v);
        w
    }

    /// Nodal controls `(R u, R v)` from stacked reduced ones.
    pub fn expand_controls(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.control_dim();
        assert_eq!(w.len(), 2 * m);
        (self.space.expand(&w[..m]), self.space.expand(&w[m..]))
    }

    /// State for stacked reduced controls.
    pub fn state(&self, w: &[f64]) -> Result<Vec<f64>> {
        Error::check_len("stacked controls", 2 * self.control_dim(), w.len())?;
        self.op.solve(&self.coupling.mul_vec(w))
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.op.solve_adjoint(&self.fem, y, &self.yd)
    }

    /// Objective without the penalty, on nodal controls.
    pub fn objective(&self, y: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
        Error::check_len("state", self.num_nodes(), y.len())?;
        Error::check_len("control u", self.num_nodes(), u.len())?;
        Error::check_len("control v", self.num_nodes(), v.len())?;
        let ey = self.fem.to_elements(y);
        let track: f64 = ey
            .iter()
            .zip(&self.yd)
            .zip(&self.fem.area)
            .map(|((a, d), w)| w * (a - d) * (a - d))
            .sum();
        let r = &self.reg;
        Ok(0.5 * track
            + 0.5 * r.alpha1 * self.fem.m1.bilinear(u, u)
            + 0.5 * r.alpha2 * self.fem.m1.bilinear(v, v)
            + 0.5 * r.epsilon * (self.fem.h1.bilinear(u, u) + self.fem.h1.bilinear(v, v)))
    }

    /// Objective of the state-reduced problem at stacked reduced controls.
    pub fn reduced_objective(&self, w: &[f64]) -> Result<f64> {
        let y = self.state(w)?;
        let (u, v) = self.expand_controls(w);
        self.objective(&y, &u, &v)
    }

    /// Gradient `G₀ w + Nᵀ p` of [`Self::reduced_objective`].
    pub fn reduced_gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        let y = self.state(w)?;
        let p = self.adjoint(&y)?;
        let mut g = self.control_hessian.mul_vec(w);
        crate::axpy(1.0, &self.coupling.tr_mul_vec(&p), &mut g);
        Ok(g)
    }
}
