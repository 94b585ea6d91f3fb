#![allow(dead_code)]

use fbcontrol_core::fem::identity_tensor;
use fbcontrol_core::pde::Coefficients;
use fbcontrol_core::{ControlProblem, ControlSpace, EllipticOperator, Mesh, Regularization};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn reg(epsilon: f64) -> Regularization {
    Regularization {
        alpha1: 0.0,
        alpha2: 0.0,
        epsilon,
    }
}

/// `u` acts on `x₂ < 0.25`, `v` on `x₂ > 0.75`.
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

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sample(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
