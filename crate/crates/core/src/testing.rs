//! Fixtures shared by the unit tests.

use alloc::vec;
use alloc::vec::Vec;

use crate::fem::{identity_tensor, ControlSpace};
use crate::mesh::Mesh;
use crate::pde::{Coefficients, EllipticOperator};
use crate::problem::{ControlProblem, Regularization};

/// Controls act on the bottom and top quarters; `yd` is given at centroids.
pub fn strip_problem(nx: usize, columns: bool, reg: Regularization, yd: impl Fn([f64; 2]) -> f64) -> ControlProblem {
    let mesh = Mesh::structured(nx).unwrap();
    let c = mesh.centroids();
    let ind = |f: &dyn Fn([f64; 2]) -> bool| -> Vec<f64> { c.iter().map(|&x| if f(x) { 1.0 } else { 0.0 }).collect() };
    let coef = Coefficients {
        reaction: vec![1.0; mesh.num_elements()],
        control_u: ind(&|x| x[1] < 0.25),
        control_v: ind(&|x| x[1] > 0.75),
        diffusion: identity_tensor(&mesh),
    };
    let op = EllipticOperator::assemble(&mesh, &coef).unwrap();
    let space = if columns {
        ControlSpace::columns(&mesh).unwrap()
    } else {
        ControlSpace::full(&mesh)
    };
    let yd = c.iter().map(|&x| yd(x)).collect();
    ControlProblem::new(mesh, op, space, yd, reg).unwrap()
}

pub fn reg(epsilon: f64) -> Regularization {
    Regularization {
        alpha1: 0.0,
        alpha2: 0.0,
        epsilon,
    }
}

/// Seeded uniform samples in `[lo, hi)`.
pub fn uniform(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}
