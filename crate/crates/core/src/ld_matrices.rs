//! The 7-dimensional linear system carrying extremal trajectories and the
//! Van Loan block exponentials that turn the Gaussian action into a
//! quadratic form in the initial state.
//!
//! The state is `y = (f, ḟ, f̈, …, f⁽⁶⁾)` for the phase angle `f`, and the
//! action integrand is `(hᵀy + h8)²` with `h = (h1, h2, h3, h4, 0, 0, 0)` and
//! `h8 = ϱδk`. Integrating it along `y(t) = e^{At} y0` gives
//! `y0ᵀB1y0 + B2y0 + y0ᵀB3 + h8²T`.

use nalgebra::{DMatrix, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::expm::{guard, matrix_exponential};
use crate::params::{derive_coeffs, SystemParams};

pub type Mat7 = SMatrix<f64, 7, 7>;
pub type Vec7 = SVector<f64, 7>;

#[derive(Debug, Clone, PartialEq)]
pub struct CompanionMatrix(pub Mat7);

/// Superdiagonal shift plus last row `[0, a1, 0, a2, 0, a3, 0]`.
pub fn build_a(params: &SystemParams) -> CompanionMatrix {
    let c = derive_coeffs(params);
    let mut a = Mat7::zeros();
    for i in 0..6 {
        a[(i, i + 1)] = 1.0;
    }
    a[(6, 1)] = c.a1;
    a[(6, 3)] = c.a2;
    a[(6, 5)] = c.a3;
    CompanionMatrix(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionWeights {
    pub h: Vec7,
    /// `h hᵀ`.
    pub h1: Mat7,
    /// `h · h8`.
    pub h2: Vec7,
    pub h8: f64,
    pub h8sq: f64,
}

pub fn build_h(params: &SystemParams, k: u32) -> ActionWeights {
    let [w1, w2, w3, w4] = derive_coeffs(params).h();
    let h = Vec7::from([w1, w2, w3, w4, 0.0, 0.0, 0.0]);
    let h8 = params.rho * params.delta * k as f64;
    ActionWeights {
        h,
        h1: h * h.transpose(),
        h2: h * h8,
        h8,
        h8sq: h8 * h8,
    }
}

/// How `B1` is assembled from the blocks of `e^{Q1 T}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum B1Assembly {
    /// `B12ᵀ B11`.
    #[default]
    Transposed,
    /// `B12 B11`, the untransposed product; only for mutation testing.
    Untransposed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VanLoanBlocks {
    pub b1: Mat7,
    /// Row vector stored as a column.
    pub b2: Vec7,
    pub b3: Vec7,
    pub exp_at: Mat7,
    /// `‖B1 − B1ᵀ‖ / ‖B1‖` before symmetrisation.
    pub asymmetry: f64,
}

impl VanLoanBlocks {
    /// `y0ᵀB1y0 + B2y0 + y0ᵀB3 + h8²T`, i.e. `∫₀ᵀ (hᵀy + h8)² dt`.
    pub fn action_integral(&self, y0: &Vec7, h8sq: f64, horizon: f64) -> f64 {
        (y0.transpose() * self.b1 * y0)[(0, 0)] + self.b2.dot(y0) + self.b3.dot(y0) + h8sq * horizon
    }

    /// Rounding-error bound for [`Self::action_integral`].
    ///
    /// The terms can cancel almost completely: along the zero-action
    /// continuation the growing modes of `A` are exactly suppressed while
    /// `B1` carries `‖e^{AT}‖²`. The bound is the sum of absolute terms times
    /// a generous multiple of the unit roundoff.
    pub fn action_error_bound(&self, y0: &Vec7, h8sq: f64, horizon: f64) -> f64 {
        let y = y0.abs();
        let magnitude = (y.transpose() * self.b1.abs() * y)[(0, 0)]
            + (self.b2.abs() + self.b3.abs()).dot(&y)
            + h8sq * horizon;
        64.0 * f64::EPSILON * magnitude
    }
}

pub fn van_loan_blocks(params: &SystemParams, k: u32, horizon: f64) -> Result<VanLoanBlocks> {
    let a = build_a(params);
    let w = build_h(params, k);
    van_loan_from(&a.0, &w, horizon, B1Assembly::Transposed)
}

fn block_exp(q: DMatrix<f64>, horizon: f64, name: &'static str) -> Result<DMatrix<f64>> {
    let e = matrix_exponential(&(q * horizon)).map_err(|_| Error::Overflow {
        block: name,
        magnitude: f64::INFINITY,
    })?;
    guard(e.iter(), name)?;
    Ok(e)
}

/// Van Loan evaluation for an arbitrary system matrix (test hook for `A = 0`).
pub fn van_loan_from(
    a: &Mat7,
    w: &ActionWeights,
    horizon: f64,
    assembly: B1Assembly,
) -> Result<VanLoanBlocks> {
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::domain("horizon", format!("must be >= 0, got {horizon}")));
    }

    // Q1 = [[−Aᵀ, H1], [0, A]]
    let mut q1 = DMatrix::<f64>::zeros(14, 14);
    q1.view_mut((0, 0), (7, 7)).copy_from(&(-a.transpose()));
    q1.view_mut((0, 7), (7, 7)).copy_from(&w.h1);
    q1.view_mut((7, 7), (7, 7)).copy_from(a);
    let e1 = block_exp(q1, horizon, "Q1")?;
    let b11: Mat7 = e1.fixed_view::<7, 7>(0, 7).into_owned();
    let b12: Mat7 = e1.fixed_view::<7, 7>(7, 7).into_owned();

    // Q2 = [[0, H2ᵀ], [0, A]]
    let mut q2 = DMatrix::<f64>::zeros(8, 8);
    q2.view_mut((0, 1), (1, 7)).copy_from(&w.h2.transpose());
    q2.view_mut((1, 1), (7, 7)).copy_from(a);
    let e2 = block_exp(q2, horizon, "Q2")?;
    let b2 = Vec7::from_iterator(e2.view((0, 1), (1, 7)).iter().copied());

    // Q3 = [[−Aᵀ, H2], [0, 0]]
    let mut q3 = DMatrix::<f64>::zeros(8, 8);
    q3.view_mut((0, 0), (7, 7)).copy_from(&(-a.transpose()));
    q3.view_mut((0, 7), (7, 1)).copy_from(&w.h2);
    let e3 = block_exp(q3, horizon, "Q3")?;
    let b31 = Vec7::from_iterator(e3.view((0, 7), (7, 1)).iter().copied());

    let raw_b1 = match assembly {
        B1Assembly::Transposed => b12.transpose() * b11,
        B1Assembly::Untransposed => b12 * b11,
    };
    let b3 = b12.transpose() * b31;
    guard(raw_b1.iter(), "B1")?;
    guard(b3.iter(), "B3")?;

    let scale = raw_b1.amax();
    let asymmetry = if scale > 0.0 {
        (raw_b1 - raw_b1.transpose()).amax() / scale
    } else {
        0.0
    };
    let b1 = match assembly {
        B1Assembly::Transposed => (raw_b1 + raw_b1.transpose()) * 0.5,
        B1Assembly::Untransposed => raw_b1,
    };
    Ok(VanLoanBlocks {
        b1,
        b2,
        b3,
        exp_at: b12,
        asymmetry,
    })
}
