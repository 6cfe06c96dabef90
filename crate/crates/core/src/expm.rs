//! Matrix exponential with a conditioning guard.
//!
//! The approximant itself is nalgebra's scaling-and-squaring Padé
//! implementation (Al-Mohy & Higham 2009); this module only adds the
//! finiteness checks the rest of the crate relies on.

use nalgebra::{DMatrix, SMatrix};

use crate::error::{Error, Result};

/// Entries above this magnitude in any block exponential are treated as overflow.
pub const OVERFLOW_GUARD: f64 = 1e12;

/// `e^M` for a square matrix with finite entries.
pub fn matrix_exponential(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::domain("matrix", "exponential needs a square matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix exponential input"));
    }
    let e = m.exp();
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix exponential output"));
    }
    Ok(e)
}

/// Fixed-size convenience wrapper around [`matrix_exponential`].
pub fn expm_fixed<const N: usize>(m: &SMatrix<f64, N, N>) -> Result<SMatrix<f64, N, N>> {
    let d = DMatrix::from_column_slice(N, N, m.as_slice());
    let e = matrix_exponential(&d)?;
    Ok(SMatrix::<f64, N, N>::from_column_slice(e.as_slice()))
}

/// Fails with [`Error::Overflow`] if any entry exceeds [`OVERFLOW_GUARD`].
pub(crate) fn guard<'a, I>(values: I, block: &'static str) -> Result<()>
where
    I: IntoIterator<Item = &'a f64>,
{
    let magnitude = values.into_iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if magnitude > OVERFLOW_GUARD || !magnitude.is_finite() {
        return Err(Error::Overflow { block, magnitude });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Taylor series of `e^{M/2^s}` followed by `s` squarings.
    fn taylor_oracle(m: &DMatrix<f64>, scale_pow: i32) -> DMatrix<f64> {
        let n = m.nrows();
        let scaled = m / 2f64.powi(scale_pow);
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for j in 1..40 {
            term = &term * &scaled / j as f64;
            sum += &term;
        }
        for _ in 0..scale_pow {
            sum = &sum * &sum;
        }
        sum
    }

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax() / b.amax()
    }

    #[test]
    fn zero_matrix_gives_identity() {
        let e = matrix_exponential(&DMatrix::zeros(5, 5)).unwrap();
        assert_eq!(e, DMatrix::identity(5, 5));
    }

    #[test]
    fn diagonal_case() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
        let e = matrix_exponential(&m).unwrap();
        assert!((e[(0, 0)] - 1f64.exp()).abs() < 1e-14);
        assert!((e[(1, 1)] - 2f64.exp()).abs() < 1e-13);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn unit_norm_matrices_match_taylor() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [7usize, 8, 14] {
            for _ in 0..10 {
                let mut m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                m /= m.norm(); // Frobenius >= spectral, so ||M||_2 <= 1
                let err = rel_err(&matrix_exponential(&m).unwrap(), &taylor_oracle(&m, 6));
                assert!(err < 1e-11, "n={n} err={err:e}");
            }
        }
    }

    #[test]
    fn norm_five_matrices_match_scaled_taylor() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let mut m = DMatrix::from_fn(7, 7, |_, _| rng.random_range(-1.0..1.0));
            m *= 5.0 / m.norm();
            let err = rel_err(&matrix_exponential(&m).unwrap(), &taylor_oracle(&m, 12));
            assert!(err < 1e-10, "err={err:e}");
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = DMatrix::<f64>::zeros(3, 3);
        m[(1, 2)] = f64::NAN;
        assert_eq!(
            matrix_exponential(&m),
            Err(Error::NonFinite("matrix exponential input"))
        );
    }

    #[test]
    fn guard_names_block() {
        let v = [1.0, -2e12];
        match guard(v.iter(), "Q1") {
            Err(Error::Overflow { block, .. }) => assert_eq!(block, "Q1"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(guard([1.0, 3.0].iter(), "Q1").is_ok());
    }
}
