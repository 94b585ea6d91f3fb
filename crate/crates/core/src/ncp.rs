//! Fischer-Burmeister NCP function and the discrete penalty built from it.
//!
//! `φ(a, b) = √(a² + b²) − a − b` vanishes exactly when `a ≥ 0`, `b ≥ 0`
//! and `ab = 0`. The penalty is `F̃(u, v) = ½ Φᵀ M0(1) Φ` with the
//! elementwise residual `Φ = φ(E10 u, E10 v)`.
//!
//! All formulas are evaluated in cancellation-free form: near the
//! complementarity set `φ` and `∂φ` are tiny differences of O(1) numbers,
//! and the penalty weight multiplies them by up to 10¹².

use alloc::vec::Vec;

use crate::fem::FemMatrices;
use crate::sparse::{CsrMatrix, TripletBuilder};
use crate::{Error, Result};

/// Relative radius below which an element pair counts as biactive.
pub const BIACTIVE_TOL: f64 = 1e-14;

/// `√(a² + b²) − a − b`
pub fn fb(a: f64, b: f64) -> f64 {
    let r = libm::hypot(a.max(b), a.min(b));
    if a + b > 0.0 {
        // r² − (a+b)² = −2ab
        -2.0 * a * b / (r + (a + b))
    } else {
        r - (a + b)
    }
}

/// Smoothed variant `√(a² + b² + 2θ) − a − b`; equals [`fb`] at `θ = 0`.
pub fn fb_smoothed(a: f64, b: f64, theta: f64) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(Error::invalid("smoothing parameter must be nonnegative"));
    }
    if theta == 0.0 {
        return Ok(fb(a, b));
    }
    let s = libm::sqrt(a * a + b * b + 2.0 * theta);
    Ok(if a + b > 0.0 {
        2.0 * (theta - a * b) / (s + a + b)
    } else {
        s - a - b
    })
}

/// `∂φ/∂a = a/r − 1` without cancellation for `a > 0`.
#[inline]
fn partial(a: f64, other: f64, r: f64) -> f64 {
    if a > 0.0 {
        -(other * other) / (r * (r + a))
    } else {
        a / r - 1.0
    }
}

/// Value and first derivatives of `φ` at a non-biactive pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct FbLocal {
    pub phi: f64,
    pub r: f64,
    pub ta: f64,
    pub tb: f64,
}

/// `None` on the biactive set `(a, b) ≈ (0, 0)`.
pub(crate) fn fb_local(a: f64, b: f64) -> Option<FbLocal> {
    let r = libm::hypot(a.max(b), a.min(b));
    if r <= BIACTIVE_TOL * (1.0 + a.abs() + b.abs()) {
        return None;
    }
    Some(FbLocal {
        phi: fb(a, b),
        r,
        ta: partial(a, b, r),
        tb: partial(b, a, r),
    })
}

/// Gradient of `½ φ(a, b)²`. Zero on the biactive set.
pub fn fb_sq_grad(a: f64, b: f64) -> (f64, f64) {
    match fb_local(a, b) {
        Some(l) => (l.phi * l.ta, l.phi * l.tb),
        None => (0.0, 0.0),
    }
}

/// Hessian element of `½ φ²`: `g gᵀ + φ (I/r − (a,b)(a,b)ᵀ/r³)`, zero on the
/// biactive set. Returned as `[h_aa, h_ab, h_bb]`.
pub fn fb_sq_hessian(a: f64, b: f64) -> [f64; 3] {
    match fb_local(a, b) {
        Some(l) => {
            // I/r − zzᵀ/r³ = [[b², −ab], [−ab, a²]] / r³
            let c = l.phi / (l.r * l.r * l.r);
            [
                l.ta * l.ta + c * b * b,
                l.ta * l.tb - c * a * b,
                l.tb * l.tb + c * a * a,
            ]
        }
        None => [0.0; 3],
    }
}

/// Elementwise residual `φ(E10 u, E10 v)`.
pub fn fb_residual(fem: &FemMatrices, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_nodal(fem, u, v)?;
    let (a, b) = (fem.to_elements(u), fem.to_elements(v));
    Ok(a.iter().zip(&b).map(|(&x, &y)| fb(x, y)).collect())
}

/// `max_e |φ(E10 u, E10 v)|`, the complementarity violation.
pub fn max_abs_fb(fem: &FemMatrices, u: &[f64], v: &[f64]) -> Result<f64> {
    Ok(crate::norm_inf(&fb_residual(fem, u, v)?))
}

fn check_nodal(fem: &FemMatrices, u: &[f64], v: &[f64]) -> Result<()> {
    Error::check_len("control u", fem.num_nodes(), u.len())?;
    Error::check_len("control v", fem.num_nodes(), v.len())
}

/// `F̃(u, v)` and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyEval {
    pub value: f64,
    pub grad_u: Vec<f64>,
    pub grad_v: Vec<f64>,
}

pub fn penalty_eval(fem: &FemMatrices, u: &[f64], v: &[f64]) -> Result<PenaltyEval> {
    check_nodal(fem, u, v)?;
    let (a, b) = (fem.to_elements(u), fem.to_elements(v));
    let ne = fem.num_elements();
    let mut value = 0.0;
    let mut wu = Vec::with_capacity(ne);
    let mut wv = Vec::with_capacity(ne);
    for e in 0..ne {
        let area = fem.area[e];
        match fb_local(a[e], b[e]) {
            Some(l) => {
                value += 0.5 * area * l.phi * l.phi;
                wu.push(area * l.phi * l.ta);
                wv.push(area * l.phi * l.tb);
            }
            None => {
                wu.push(0.0);
                wv.push(0.0);
            }
        }
    }
    Ok(PenaltyEval {
        value,
        grad_u: fem.e10.tr_mul_vec(&wu),
        grad_v: fem.e10.tr_mul_vec(&wv),
    })
}

/// Generalized Jacobian of `(∇ᵤF̃, ∇ᵥF̃)`, stored as its three distinct
/// `n_p × n_p` blocks (`vu = uvᵀ`).
#[derive(Debug, Clone)]
pub struct PenaltyHessian {
    pub uu: CsrMatrix,
    pub uv: CsrMatrix,
    pub vv: CsrMatrix,
}

impl PenaltyHessian {
    /// The full symmetric `2n_p × 2n_p` matrix.
    pub fn to_block(&self) -> CsrMatrix {
        let n = self.uu.nrows();
        let mut b = TripletBuilder::new(2 * n, 2 * n);
        b.push_block(0, 0, 1.0, &self.uu);
        b.push_block(0, n, 1.0, &self.uv);
        b.push_block(n, 0, 1.0, &self.uv.transpose());
        b.push_block(n, n, 1.0, &self.vv);
        b.build()
    }

    /// `[uu uv; vu vv] (du, dv)`
    pub fn apply(&self, du: &[f64], dv: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut ru = self.uu.mul_vec(du);
        crate::axpy(1.0, &self.uv.mul_vec(dv), &mut ru);
        let mut rv = self.uv.tr_mul_vec(du);
        crate::axpy(1.0, &self.vv.mul_vec(dv), &mut rv);
        (ru, rv)
    }
}

/// Blocks `E10ᵀ diag(|e| H_e) E10`, with `H_e` from [`fb_sq_hessian`].
pub fn penalty_newton_matrix(fem: &FemMatrices, u: &[f64], v: &[f64]) -> Result<PenaltyHessian> {
    check_nodal(fem, u, v)?;
    let (a, b) = (fem.to_elements(u), fem.to_elements(v));
    let n = fem.num_nodes();
    let cap = 9 * fem.num_elements();
    let mut uu = TripletBuilder::with_capacity(n, n, cap);
    let mut uv = TripletBuilder::with_capacity(n, n, cap);
    let mut vv = TripletBuilder::with_capacity(n, n, cap);
    for e in 0..fem.num_elements() {
        let h = fb_sq_hessian(a[e], b[e]);
        if h == [0.0; 3] {
            continue;
        }
        let (cols, _) = fem.e10.row(e);
        let w = fem.area[e] / 9.0;
        for &i in cols {
            for &j in cols {
                uu.push(i, j, w * h[0]);
                uv.push(i, j, w * h[1]);
                vv.push(i, j, w * h[2]);
            }
        }
    }
    Ok(PenaltyHessian {
        uu: uu.build(),
        uv: uv.build(),
        vv: vv.build(),
    })
}
