use std::f64::consts::PI;

use fbcontrol_core::fem::identity_tensor;
use fbcontrol_core::pde::Coefficients;
use fbcontrol_core::{EllipticOperator, FemMatrices, Mesh};

/// `M1`-norm error of the P1 solution of `−Δy + y = f` for
/// `y = cos(πx₁)cos(πx₂)`, which satisfies the Neumann condition.
fn error(nx: usize) -> f64 {
    let mesh = Mesh::structured(nx).unwrap();
    let fem = FemMatrices::assemble(&mesh).unwrap();
    let ne = mesh.num_elements();
    let coef = Coefficients {
        reaction: vec![1.0; ne],
        control_u: vec![1.0; ne],
        control_v: vec![0.0; ne],
        diffusion: identity_tensor(&mesh),
    };
    let op = EllipticOperator::assemble(&mesh, &coef).unwrap();
    let exact: Vec<f64> = mesh
        .vertices()
        .iter()
        .map(|p| (PI * p[0]).cos() * (PI * p[1]).cos())
        .collect();
    let f: Vec<f64> = exact.iter().map(|y| (2.0 * PI * PI + 1.0) * y).collect();
    let y = op.solve_state(&f, &vec![0.0; f.len()]).unwrap();
    let e: Vec<f64> = y.iter().zip(&exact).map(|(a, b)| a - b).collect();
    fem.m1.bilinear(&e, &e).sqrt()
}

#[test]
fn manufactured_solution_converges_at_second_order() {
    let (coarse, fine) = (error(16), error(32));
    let ratio = coarse / fine;
    assert!(
        (3.5..=4.5).contains(&ratio),
        "ratio {ratio}, errors {coarse:e} {fine:e}"
    );
}
