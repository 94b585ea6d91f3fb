//! Structured triangulations of the unit square.

use alloc::vec::Vec;

use crate::{Error, Result};

/// A triangulation of `(0,1)²`.
///
/// Meshes built by [`Mesh::structured`] number vertices row-major,
/// `index = j * (nx + 1) + i` for the vertex at `(i / nx, j / nx)`, and split
/// every cell along its lower-left to upper-right diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nx: Option<usize>,
    vertices: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
    element_area: Vec<f64>,
}

impl Mesh {
    pub fn structured(nx: usize) -> Result<Self> {
        if nx == 0 {
            return Err(Error::invalid("nx must be at least 1"));
        }
        let np = nx + 1;
        let h = 1.0 / nx as f64;
        let mut vertices = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                // exact 1.0 on the far edge
                let x = if i == nx { 1.0 } else { i as f64 * h };
                let y = if j == nx { 1.0 } else { j as f64 * h };
                vertices.push([x, y]);
            }
        }
        let mut elements = Vec::with_capacity(2 * nx * nx);
        for j in 0..nx {
            for i in 0..nx {
                let v00 = j * np + i;
                let v10 = v00 + 1;
                let v01 = v00 + np;
                let v11 = v01 + 1;
                elements.push([v00, v10, v11]);
                elements.push([v00, v11, v01]);
            }
        }
        let mut mesh = Self {
            nx: Some(nx),
            vertices,
            elements,
            element_area: Vec::new(),
        };
        mesh.element_area = (0..mesh.elements.len()).map(|e| mesh.signed_area(e)).collect();
        Ok(mesh)
    }

    /// Builds a mesh from explicit tables. The result is treated as
    /// unstructured even if it happens to be a grid.
    pub fn from_tables(vertices: Vec<[f64; 2]>, elements: Vec<[usize; 3]>) -> Result<Self> {
        if elements.iter().flatten().any(|&v| v >= vertices.len()) {
            return Err(Error::invalid("element references a missing vertex"));
        }
        let mut mesh = Self {
            nx: None,
            vertices,
            elements,
            element_area: Vec::new(),
        };
        mesh.element_area = (0..mesh.elements.len()).map(|e| mesh.signed_area(e)).collect();
        if let Some(e) = mesh.element_area.iter().position(|&a| !(a > 0.0)) {
            return Err(Error::invalid(alloc::format!("element {e} is degenerate or clockwise")));
        }
        Ok(mesh)
    }

    fn signed_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.element_coords(e);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Cells per axis for structured meshes.
    pub fn nx(&self) -> Option<usize> {
        self.nx
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn element_area(&self) -> &[f64] {
        &self.element_area
    }

    pub fn element_coords(&self, e: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.elements[e];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let [a, b, c] = self.element_coords(e);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn centroids(&self) -> Vec<[f64; 2]> {
        (0..self.num_elements()).map(|e| self.centroid(e)).collect()
    }

    /// Gradients of the three barycentric hat functions on element `e`.
    pub fn hat_gradients(&self, e: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.element_coords(e);
        let two_area = 2.0 * self.element_area[e];
        [
            [(b[1] - c[1]) / two_area, (c[0] - b[0]) / two_area],
            [(c[1] - a[1]) / two_area, (a[0] - c[0]) / two_area],
            [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area],
        ]
    }

    /// Elements containing each vertex (the support of its hat function).
    pub fn vertex_patches(&self) -> Vec<Vec<usize>> {
        let mut patches = alloc::vec![Vec::new(); self.num_vertices()];
        for (e, tri) in self.elements.iter().enumerate() {
            for &v in tri {
                patches[v].push(e);
            }
        }
        patches
    }

    /// Boundary edges as sorted vertex pairs, each paired with its element.
    pub fn boundary_edges(&self) -> Vec<([usize; 2], usize)> {
        let mut edges: Vec<([usize; 2], usize)> = Vec::with_capacity(3 * self.num_elements());
        for (e, &[a, b, c]) in self.elements.iter().enumerate() {
            for (p, q) in [(a, b), (b, c), (c, a)] {
                edges.push(([p.min(q), p.max(q)], e));
            }
        }
        edges.sort_unstable();
        let mut out = Vec::new();
        let mut k = 0;
        while k < edges.len() {
            let mut m = k + 1;
            while m < edges.len() && edges[m].0 == edges[k].0 {
                m += 1;
            }
            if m - k == 1 {
                out.push(edges[k]);
            }
            k = m;
        }
        out
    }

    /// Vertex indices `j * (nx+1) + i` for `j = 0..=nx` of grid column `i`.
    pub fn grid_column(&self, i: usize) -> Option<impl Iterator<Item = usize>> {
        let nx = self.nx?;
        (i <= nx).then(|| (0..=nx).map(move |j| j * (nx + 1) + i))
    }

    /// Vertices on the bottom edge `x₂ = 0`, ordered by `x₁`.
    pub fn bottom_vertices(&self) -> Option<impl Iterator<Item = usize>> {
        self.nx.map(|nx| 0..=nx)
    }
}
