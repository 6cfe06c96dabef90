//! Adaptive composite Simpson quadrature for matrix-valued integrands.

use nalgebra::DMatrix;

const MAX_DEPTH: u32 = 40;

/// `∫ₐᵇ f(t) dt` to absolute accuracy about `tol` in the max-entry norm.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> DMatrix<f64>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(&fa, &fm, &fb, b - a);
    recurse(&f, a, b, &fa, &fm, &fb, whole, tol, MAX_DEPTH)
}

fn simpson(fa: &DMatrix<f64>, fm: &DMatrix<f64>, fb: &DMatrix<f64>, width: f64) -> DMatrix<f64> {
    (fa + fm * 4.0 + fb) * (width / 6.0)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: &DMatrix<f64>,
    fm: &DMatrix<f64>,
    fb: &DMatrix<f64>,
    whole: DMatrix<f64>,
    tol: f64,
    depth: u32,
) -> DMatrix<f64>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, &flm, fm, m - a);
    let right = simpson(fm, &frm, fb, b - m);
    let sum = &left + &right;
    let err = (&sum - &whole).amax();
    if depth == 0 || err <= 15.0 * tol {
        // Richardson step lifts the composite rule to sixth order.
        return &sum + (&sum - &whole) / 15.0;
    }
    recurse(f, a, m, fa, &flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, m, b, fm, &frm, fb, right, 0.5 * tol, depth - 1)
}

/// Scalar convenience wrapper.
pub fn adaptive_simpson_scalar<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    adaptive_simpson(|t| DMatrix::from_element(1, 1, f(t)), a, b, tol)[(0, 0)]
}
