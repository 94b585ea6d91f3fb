//! P1/P0 finite-element matrices on a triangulation.
//!
//! Coefficients are piecewise constant (one value per element). Nodal
//! vectors have length `n_p`, element vectors length `n_e`.

use alloc::vec;
use alloc::vec::Vec;

use crate::mesh::Mesh;
use crate::sparse::{CsrMatrix, TripletBuilder};
use crate::{Error, Result};

/// Reference P1 mass matrix scaled by 12 / area.
const LOCAL_MASS: [[f64; 3]; 3] = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]];

/// `∫ coef φᵢ φⱼ` with P0 coefficient `coef`.
pub fn assemble_m1(mesh: &Mesh, coef: &[f64]) -> Result<CsrMatrix> {
    Error::check_len("mass coefficient", mesh.num_elements(), coef.len())?;
    let n = mesh.num_vertices();
    let mut b = TripletBuilder::with_capacity(n, n, 9 * mesh.num_elements());
    for (e, tri) in mesh.elements().iter().enumerate() {
        let s = coef[e] * mesh.element_area()[e] / 12.0;
        for (a, &i) in tri.iter().enumerate() {
            for (c, &j) in tri.iter().enumerate() {
                b.push(i, j, s * LOCAL_MASS[a][c]);
            }
        }
    }
    Ok(b.build())
}

/// Diagonal P0 mass matrix `diag(coef_e · |e|)`.
pub fn assemble_m0(mesh: &Mesh, coef: &[f64]) -> Result<CsrMatrix> {
    Error::check_len("P0 mass coefficient", mesh.num_elements(), coef.len())?;
    let d: Vec<f64> = coef.iter().zip(mesh.element_area()).map(|(c, a)| c * a).collect();
    Ok(CsrMatrix::from_diagonal(&d))
}

/// `∫ (C ∇φⱼ)·∇φᵢ` with a symmetric positive definite 2×2 coefficient per element.
pub fn assemble_k(mesh: &Mesh, coef: &[[[f64; 2]; 2]]) -> Result<CsrMatrix> {
    Error::check_len("stiffness coefficient", mesh.num_elements(), coef.len())?;
    for (e, c) in coef.iter().enumerate() {
        let scale = c[0][0].abs() + c[1][1].abs() + c[0][1].abs() + c[1][0].abs();
        let sym = (c[0][1] - c[1][0]).abs() <= 1e-12 * scale;
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        if !(sym && c[0][0] > 0.0 && det > 0.0) {
            return Err(Error::invalid(alloc::format!(
                "stiffness coefficient of element {e} is not symmetric positive definite"
            )));
        }
    }
    let n = mesh.num_vertices();
    let mut b = TripletBuilder::with_capacity(n, n, 9 * mesh.num_elements());
    for (e, tri) in mesh.elements().iter().enumerate() {
        let g = mesh.hat_gradients(e);
        let c = &coef[e];
        let area = mesh.element_area()[e];
        for (a, &i) in tri.iter().enumerate() {
            for (d, &j) in tri.iter().enumerate() {
                let cg = [
                    c[0][0] * g[d][0] + c[0][1] * g[d][1],
                    c[1][0] * g[d][0] + c[1][1] * g[d][1],
                ];
                b.push(i, j, area * (cg[0] * g[a][0] + cg[1] * g[a][1]));
            }
        }
    }
    Ok(b.build())
}

/// Identity coefficient on every element.
pub fn identity_tensor(mesh: &Mesh) -> Vec<[[f64; 2]; 2]> {
    vec![[[1.0, 0.0], [0.0, 1.0]]; mesh.num_elements()]
}

/// P1 → P0 projection by evaluation at centroids (rows `1/3, 1/3, 1/3`).
pub fn assemble_e10(mesh: &Mesh) -> CsrMatrix {
    let mut b = TripletBuilder::with_capacity(mesh.num_elements(), mesh.num_vertices(), 3 * mesh.num_elements());
    for (e, tri) in mesh.elements().iter().enumerate() {
        for &i in tri {
            b.push(e, i, 1.0 / 3.0);
        }
    }
    b.build()
}

/// The matrices shared by every part of the discretized problem.
#[derive(Debug, Clone)]
pub struct FemMatrices {
    /// P1 mass with unit coefficient.
    pub m1: CsrMatrix,
    /// P0 mass with unit coefficient (diagonal of element areas).
    pub m0: CsrMatrix,
    /// Stiffness with identity coefficient.
    pub k: CsrMatrix,
    pub e10: CsrMatrix,
    /// `M1(1) + K(1)`, the discrete H¹ inner product.
    pub h1: CsrMatrix,
    /// Element areas, i.e. the diagonal of `m0`.
    pub area: Vec<f64>,
}

impl FemMatrices {
    pub fn assemble(mesh: &Mesh) -> Result<Self> {
        let ones = vec![1.0; mesh.num_elements()];
        let m1 = assemble_m1(mesh, &ones)?;
        let k = assemble_k(mesh, &identity_tensor(mesh))?;
        let h1 = CsrMatrix::linear_combination(&[(1.0, &m1), (1.0, &k)])?;
        Ok(Self {
            m0: assemble_m0(mesh, &ones)?,
            e10: assemble_e10(mesh),
            area: mesh.element_area().to_vec(),
            m1,
            k,
            h1,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.m1.nrows()
    }

    pub fn num_elements(&self) -> usize {
        self.area.len()
    }

    /// `E10 x`, the elementwise (centroid) values of a nodal vector.
    pub fn to_elements(&self, nodal: &[f64]) -> Vec<f64> {
        self.e10.mul_vec(nodal)
    }

    /// `E10ᵀ M0(1) elem`.
    pub fn weighted_pullback(&self, elem: &[f64]) -> Vec<f64> {
        let w: Vec<f64> = elem.iter().zip(&self.area).map(|(v, a)| v * a).collect();
        self.e10.tr_mul_vec(&w)
    }
}

/// Ties a nodal vector to one value per grid column, so that it is
/// constant along `x₂`.
#[derive(Debug, Clone)]
pub struct ReductionMap {
    nx: usize,
    matrix: CsrMatrix,
    column_of: Vec<usize>,
}

impl ReductionMap {
    pub fn assemble(mesh: &Mesh) -> Result<Self> {
        let nx = mesh
            .nx()
            .ok_or_else(|| Error::Unsupported("column reduction needs a structured grid".into()))?;
        let column_of: Vec<usize> = (0..mesh.num_vertices()).map(|v| v % (nx + 1)).collect();
        let mut b = TripletBuilder::with_capacity(mesh.num_vertices(), nx + 1, mesh.num_vertices());
        for (v, &c) in column_of.iter().enumerate() {
            b.push(v, c, 1.0);
        }
        Ok(Self {
            nx,
            matrix: b.build(),
            column_of,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    /// The `n_p × (nx+1)` replication matrix `R`.
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Grid column of each vertex.
    pub fn column_of(&self) -> &[usize] {
        &self.column_of
    }
}

/// The space in which the control coefficients live.
#[derive(Debug, Clone)]
pub enum ControlSpace {
    /// Every vertex carries its own coefficient.
    Full(usize),
    /// Controls depend on `x₁` only (`∂ₓ₂u = ∂ₓ₂v = 0`).
    Columns(ReductionMap),
}

impl ControlSpace {
    pub fn full(mesh: &Mesh) -> Self {
        ControlSpace::Full(mesh.num_vertices())
    }

    pub fn columns(mesh: &Mesh) -> Result<Self> {
        ReductionMap::assemble(mesh).map(ControlSpace::Columns)
    }

    /// Number of coefficients of a single control.
    pub fn dim(&self) -> usize {
        match self {
            ControlSpace::Full(n) => *n,
            ControlSpace::Columns(r) => r.nx + 1,
        }
    }

    pub fn num_nodes(&self) -> usize {
        match self {
            ControlSpace::Full(n) => *n,
            ControlSpace::Columns(r) => r.column_of.len(),
        }
    }

    pub fn is_reduced(&self) -> bool {
        matches!(self, ControlSpace::Columns(_))
    }

    /// `R w`
    pub fn expand(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.dim());
        match self {
            ControlSpace::Full(_) => w.to_vec(),
            ControlSpace::Columns(r) => r.column_of.iter().map(|&c| w[c]).collect(),
        }
    }

    /// `Rᵀ x`
    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.num_nodes());
        match self {
            ControlSpace::Full(_) => x.to_vec(),
            ControlSpace::Columns(r) => {
                let mut out = vec![0.0; r.nx + 1];
                for (&c, &v) in r.column_of.iter().zip(x) {
                    out[c] += v;
                }
                out
            }
        }
    }

    /// `M R` for a matrix with `n_p` columns.
    pub fn right(&self, m: &CsrMatrix) -> CsrMatrix {
        match self {
            ControlSpace::Full(_) => m.clone(),
            ControlSpace::Columns(r) => {
                let mut b = TripletBuilder::with_capacity(m.nrows(), r.nx + 1, m.nnz());
                for (i, j, v) in m.iter() {
                    b.push(i, r.column_of[j], v);
                }
                b.build()
            }
        }
    }

    /// `Rᵀ H R` for an `n_p × n_p` matrix.
    pub fn conjugate(&self, h: &CsrMatrix) -> CsrMatrix {
        match self {
            ControlSpace::Full(_) => h.clone(),
            ControlSpace::Columns(r) => {
                let mut b = TripletBuilder::with_capacity(r.nx + 1, r.nx + 1, h.nnz());
                for (i, j, v) in h.iter() {
                    b.push(r.column_of[i], r.column_of[j], v);
                }
                b.build()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(n: usize) -> Vec<f64> {
        vec![1.0; n]
    }

    #[test]
    fn mass_integrates_constants() {
        for nx in [1, 2, 5, 12] {
            let mesh = Mesh::structured(nx).unwrap();
            let m1 = assemble_m1(&mesh, &ones(mesh.num_elements())).unwrap();
            let one = ones(mesh.num_vertices());
            assert!((m1.bilinear(&one, &one) - 1.0).abs() < 1e-12);
            assert!(m1.is_symmetric(0.0));
            let m0 = assemble_m0(&mesh, &ones(mesh.num_elements())).unwrap();
            let tr: f64 = m0.diagonal().iter().sum();
            assert!((tr - 1.0).abs() < 1e-12);
            assert_eq!(m0.diagonal(), mesh.element_area());
        }
    }

    #[test]
    fn zero_coefficient_gives_zero_matrix() {
        let mesh = Mesh::structured(2).unwrap();
        let m = assemble_m1(&mesh, &vec![0.0; mesh.num_elements()]).unwrap();
        assert!(m.iter().all(|(_, _, v)| v == 0.0));
    }

    #[test]
    fn coefficient_length_is_checked() {
        let mesh = Mesh::structured(2).unwrap();
        assert!(matches!(
            assemble_m1(&mesh, &[1.0; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(assemble_k(&mesh, &[[[1.0, 0.0], [0.0, 1.0]]; 2]).is_err());
    }

    #[test]
    fn indicator_of_lower_strip() {
        // Ω_u = {x₂ < 0.25} on nx = 4 is exactly the bottom row of cells
        let mesh = Mesh::structured(4).unwrap();
        let coef: Vec<f64> = mesh
            .centroids()
            .iter()
            .map(|c| if c[1] < 0.25 { 1.0 } else { 0.0 })
            .collect();
        let m = assemble_m1(&mesh, &coef).unwrap();
        let one = ones(mesh.num_vertices());
        assert!((m.bilinear(&one, &one) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn stiffness_kernel_and_corner_entry() {
        let mesh = Mesh::structured(1).unwrap();
        let k = assemble_k(&mesh, &identity_tensor(&mesh)).unwrap();
        // vertex 0 touches both triangles; |∇φ|² · area = 1 + 0 ... summed by hand:
        // T0 = (0,0),(1,0),(1,1): ∇φ₀ = (-1, 0), area ½ → ½
        // T1 = (0,0),(1,1),(0,1): ∇φ₀ = (0, -1), area ½ → ½
        assert!((k.get(0, 0) - 1.0).abs() < 1e-14);
        for nx in [1, 3, 8] {
            let mesh = Mesh::structured(nx).unwrap();
            let k = assemble_k(&mesh, &identity_tensor(&mesh)).unwrap();
            assert!(k.is_symmetric(1e-15));
            let r = k.mul_vec(&ones(mesh.num_vertices()));
            assert!(crate::norm_inf(&r) < 1e-13);
        }
    }

    #[test]
    fn stiffness_is_linear_in_coefficient() {
        let mesh = Mesh::structured(3).unwrap();
        let k1 = assemble_k(&mesh, &identity_tensor(&mesh)).unwrap();
        let k2 = assemble_k(&mesh, &vec![[[2.0, 0.0], [0.0, 2.0]]; mesh.num_elements()]).unwrap();
        for (i, j, v) in k1.iter() {
            assert_eq!(k2.get(i, j), 2.0 * v);
        }
    }

    #[test]
    fn stiffness_rejects_indefinite_coefficient() {
        let mesh = Mesh::structured(1).unwrap();
        let bad = vec![[[1.0, 2.0], [2.0, 1.0]]; 2];
        assert!(matches!(assemble_k(&mesh, &bad), Err(Error::InvalidArgument(_))));
        let nonsym = vec![[[1.0, 0.5], [0.0, 1.0]]; 2];
        assert!(assemble_k(&mesh, &nonsym).is_err());
    }

    #[test]
    fn projection_evaluates_at_centroids() {
        let mesh = Mesh::structured(3).unwrap();
        let e10 = assemble_e10(&mesh);
        let one = ones(mesh.num_vertices());
        assert!(e10.mul_vec(&one).iter().all(|v| (v - 1.0).abs() < 1e-15));
        let x1: Vec<f64> = mesh.vertices().iter().map(|p| p[0]).collect();
        for (v, c) in e10.mul_vec(&x1).iter().zip(mesh.centroids()) {
            assert!((v - c[0]).abs() < 1e-15);
        }
        assert!(e10.mul_vec(&vec![0.0; mesh.num_vertices()]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reduction_map_properties() {
        let mesh = Mesh::structured(4).unwrap();
        let red = ReductionMap::assemble(&mesh).unwrap();
        let r = red.matrix();
        assert_eq!((r.nrows(), r.ncols()), (25, 5));
        for i in 0..r.nrows() {
            let (cols, vals) = r.row(i);
            assert_eq!(cols.len(), 1);
            assert_eq!(vals[0], 1.0);
        }
        let space = ControlSpace::Columns(red.clone());
        assert!(space.expand(&[1.0; 5]).iter().all(|&v| v == 1.0));
        let unit = space.expand(&[0.0, 0.0, 1.0, 0.0, 0.0]);
        for (v, p) in unit.iter().zip(mesh.vertices()) {
            assert_eq!(*v, if p[0] == 0.5 { 1.0 } else { 0.0 });
        }
        let rtr = r.transpose().matmul(r).unwrap();
        for (i, j, v) in rtr.iter() {
            assert_eq!(v, if i == j { 5.0 } else { 0.0 });
        }
        let x: Vec<f64> = (0..25).map(|i| i as f64).collect();
        assert_eq!(space.restrict(&x), r.tr_mul_vec(&x));
    }

    #[test]
    fn reduction_needs_structured_mesh() {
        let mesh = Mesh::from_tables(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        assert!(matches!(ReductionMap::assemble(&mesh), Err(Error::Unsupported(_))));
    }

    #[test]
    fn projected_reduction_is_constant_on_column_strips() {
        let nx = 5;
        let mesh = Mesh::structured(nx).unwrap();
        let space = ControlSpace::columns(&mesh).unwrap();
        let w: Vec<f64> = (0..=nx).map(|i| (i * i) as f64 - 1.5).collect();
        let elem = assemble_e10(&mesh).mul_vec(&space.expand(&w));
        // two triangles per cell; compare each cell with the cell below it
        for j in 1..nx {
            for i in 0..nx {
                for t in 0..2 {
                    let e = 2 * (j * nx + i) + t;
                    let below = 2 * ((j - 1) * nx + i) + t;
                    assert_eq!(elem[e], elem[below]);
                }
            }
        }
    }

    #[test]
    fn assembly_is_order_independent() {
        let mesh = Mesh::structured(4).unwrap();
        let coef: Vec<f64> = (0..mesh.num_elements()).map(|e| 1.0 + (e % 7) as f64 * 0.3).collect();
        let m = assemble_m1(&mesh, &coef).unwrap();
        let k = assemble_k(&mesh, &identity_tensor(&mesh)).unwrap();

        let mut elems = mesh.elements().to_vec();
        let mut coefs = coef.clone();
        elems.reverse();
        coefs.reverse();
        // rotate local vertex order as well
        for t in elems.iter_mut() {
            t.rotate_left(1);
        }
        let permuted = Mesh::from_tables(mesh.vertices().to_vec(), elems).unwrap();
        let mp = assemble_m1(&permuted, &coefs).unwrap();
        let kp = assemble_k(&permuted, &identity_tensor(&permuted)).unwrap();
        for (i, j, v) in m.iter() {
            assert!((mp.get(i, j) - v).abs() < 1e-15);
        }
        for (i, j, v) in k.iter() {
            assert!((kp.get(i, j) - v).abs() < 1e-14);
        }
    }
}
