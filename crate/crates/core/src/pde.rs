//! The elliptic state equation `−∇·(C∇y) + a y = b u + c v` with
//! homogeneous Neumann data, its adjoint, and a mixed Dirichlet/Neumann
//! Laplace problem.

use alloc::vec;
use alloc::vec::Vec;

use crate::banded::{BandedCholesky, LinearSolver};
use crate::fem::{assemble_k, assemble_m1, FemMatrices};
use crate::mesh::Mesh;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// `A = M1(a) + K(C)`, `B = M1(b)`, `C = M1(c)` together with a factorization of `A`.
#[derive(Debug, Clone)]
pub struct EllipticOperator {
    pub a: CsrMatrix,
    pub b: CsrMatrix,
    pub c: CsrMatrix,
    solver: BandedCholesky,
}

/// Elementwise coefficients of the state equation.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub reaction: Vec<f64>,
    pub control_u: Vec<f64>,
    pub control_v: Vec<f64>,
    pub diffusion: Vec<[[f64; 2]; 2]>,
}

impl EllipticOperator {
    pub fn assemble(mesh: &Mesh, coef: &Coefficients) -> Result<Self> {
        if coef.reaction.iter().any(|&a| a < 0.0) {
            return Err(Error::invalid("reaction coefficient must be nonnegative"));
        }
        let a = CsrMatrix::linear_combination(&[
            (1.0, &assemble_m1(mesh, &coef.reaction)?),
            (1.0, &assemble_k(mesh, &coef.diffusion)?),
        ])?;
        let solver = BandedCholesky::factor(&a)?;
        Ok(Self {
            b: assemble_m1(mesh, &coef.control_u)?,
            c: assemble_m1(mesh, &coef.control_v)?,
            a,
            solver,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.a.nrows()
    }

    /// Solves `A x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Error::check_len("right-hand side", self.num_nodes(), rhs.len())?;
        let x = self.solver.solve(rhs);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverFailure("non-finite solution".into()));
        }
        Ok(x)
    }

    /// `A y = B u + C v`
    pub fn solve_state(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Error::check_len("control u", self.num_nodes(), u.len())?;
        Error::check_len("control v", self.num_nodes(), v.len())?;
        let mut rhs = self.b.mul_vec(u);
        crate::axpy(1.0, &self.c.mul_vec(v), &mut rhs);
        self.solve(&rhs)
    }

    /// `A p = E10ᵀ M0(1) (E10 y − y_d)`
    pub fn solve_adjoint(&self, fem: &FemMatrices, y: &[f64], yd: &[f64]) -> Result<Vec<f64>> {
        Error::check_len("state", self.num_nodes(), y.len())?;
        Error::check_len("desired state", fem.num_elements(), yd.len())?;
        let mut misfit = fem.to_elements(y);
        for (m, d) in misfit.iter_mut().zip(yd) {
            *m -= d;
        }
        self.solve(&fem.weighted_pullback(&misfit))
    }
}

/// Solves `−Δy = 0` with `y = g_bottom(x₁)` on `x₂ = 0`, `y = g_top(x₁)` on
/// `x₂ = 1`, and homogeneous Neumann data on `x₁ ∈ {0, 1}`.
///
/// Dirichlet values are nodal interpolants; Dirichlet rows and columns are
/// eliminated so the remaining system stays symmetric positive definite.
pub fn solve_dirichlet_laplace<G1, G2>(mesh: &Mesh, g_bottom: G1, g_top: G2) -> Result<Vec<f64>>
where
    G1: Fn(f64) -> f64,
    G2: Fn(f64) -> f64,
{
    if mesh.nx().is_none() {
        return Err(Error::Unsupported("Dirichlet solve expects a structured grid".into()));
    }
    let k = assemble_k(mesh, &crate::fem::identity_tensor(mesh))?;
    let n = mesh.num_vertices();
    let mut y = vec![0.0; n];
    let mut fixed = vec![false; n];
    for (i, p) in mesh.vertices().iter().enumerate() {
        if p[1] == 0.0 {
            y[i] = g_bottom(p[0]);
            fixed[i] = true;
        } else if p[1] == 1.0 {
            y[i] = g_top(p[0]);
            fixed[i] = true;
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
    if free.is_empty() {
        return Ok(y);
    }
    let kff = k.submatrix(&free, &free);
    // rhs = −K_{F,D} y_D
    let ky = k.mul_vec(
        &y.iter()
            .zip(&fixed)
            .map(|(v, &f)| if f { *v } else { 0.0 })
            .collect::<Vec<_>>(),
    );
    let rhs: Vec<f64> = free.iter().map(|&i| -ky[i]).collect();
    let sol = BandedCholesky::factor(&kff)?.solve(&rhs);
    for (&i, s) in free.iter().zip(sol) {
        y[i] = s;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::identity_tensor;

    fn unit_coefficients(mesh: &Mesh) -> Coefficients {
        let ne = mesh.num_elements();
        Coefficients {
            reaction: vec![1.0; ne],
            control_u: vec![1.0; ne],
            control_v: vec![0.0; ne],
            diffusion: identity_tensor(mesh),
        }
    }

    #[test]
    fn zero_controls_give_zero_state() {
        let mesh = Mesh::structured(4).unwrap();
        let op = EllipticOperator::assemble(&mesh, &unit_coefficients(&mesh)).unwrap();
        let z = vec![0.0; mesh.num_vertices()];
        assert!(op.solve_state(&z, &z).unwrap().iter().all(|&y| y == 0.0));
    }

    #[test]
    fn constant_manufactured_solution() {
        let mesh = Mesh::structured(6).unwrap();
        let op = EllipticOperator::assemble(&mesh, &unit_coefficients(&mesh)).unwrap();
        let n = mesh.num_vertices();
        let y = op.solve_state(&vec![1.0; n], &vec![0.0; n]).unwrap();
        assert!(y.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn adjoint_vanishes_for_matching_target() {
        let mesh = Mesh::structured(4).unwrap();
        let fem = FemMatrices::assemble(&mesh).unwrap();
        let op = EllipticOperator::assemble(&mesh, &unit_coefficients(&mesh)).unwrap();
        let y: Vec<f64> = mesh.vertices().iter().map(|p| p[0] * p[1]).collect();
        let yd = fem.to_elements(&y);
        assert!(crate::norm_inf(&op.solve_adjoint(&fem, &y, &yd).unwrap()) < 1e-15);
        let z = vec![0.0; mesh.num_vertices()];
        let zd = vec![0.0; mesh.num_elements()];
        assert!(op.solve_adjoint(&fem, &z, &zd).unwrap().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn negative_reaction_is_rejected() {
        let mesh = Mesh::structured(2).unwrap();
        let mut c = unit_coefficients(&mesh);
        c.reaction[0] = -1.0;
        assert!(EllipticOperator::assemble(&mesh, &c).is_err());
    }

    #[test]
    fn pure_neumann_without_reaction_is_singular() {
        let mesh = Mesh::structured(3).unwrap();
        let mut c = unit_coefficients(&mesh);
        c.reaction = vec![0.0; mesh.num_elements()];
        assert!(matches!(
            EllipticOperator::assemble(&mesh, &c),
            Err(Error::SolverFailure(_))
        ));
    }

    #[test]
    fn dirichlet_constants_and_linear_profile() {
        let mesh = Mesh::structured(8).unwrap();
        let y = solve_dirichlet_laplace(&mesh, |_| 0.7, |_| 0.7).unwrap();
        assert!(y.iter().all(|v| (v - 0.7).abs() < 1e-13));
        let y = solve_dirichlet_laplace(&mesh, |_| 0.0, |_| 1.0).unwrap();
        for (v, p) in y.iter().zip(mesh.vertices()) {
            assert!((v - p[1]).abs() < 1e-13);
        }
    }
}
