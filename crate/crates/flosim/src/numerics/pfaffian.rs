//! Pfaffian of an antisymmetric matrix by skew-symmetric tridiagonalisation
//! (Parlett–Reid) with partial pivoting. Works over real and complex fields.

use nalgebra::{ComplexField, DMatrix, RealField as _};
use num_traits::{One, Zero};

use super::{NumericsError, Result};

/// Compute `Pf(A)` for an even-dimensional antisymmetric matrix.
///
/// The input is antisymmetrised once (`A ← (A − Aᵀ)/2`) after checking that
/// the symmetric residual is within tolerance; congruence updates then
/// preserve the Pfaffian exactly up to the tracked pivot sign.
pub fn pfaffian<S>(a: &DMatrix<S>) -> Result<S>
where
    S: ComplexField + Copy,
{
    if a.nrows() != a.ncols() {
        return Err(NumericsError::Shape(format!(
            "expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let d = a.nrows();
    if d % 2 != 0 {
        return Err(NumericsError::Dimension(format!(
            "Pfaffian undefined for odd dimension {d}"
        )));
    }
    if d == 0 {
        return Ok(S::one());
    }
    let scale = a
        .iter()
        .fold(S::RealField::zero(), |acc, x| acc.max(x.clone().modulus()));
    let residual = (a + a.transpose())
        .iter()
        .fold(S::RealField::zero(), |acc, x| acc.max(x.clone().modulus()));
    let tol = nalgebra::convert::<f64, S::RealField>(super::tol_sym::<f64>(d));
    if residual > tol * scale.max(S::RealField::one()) {
        return Err(NumericsError::Shape(
            "matrix is not antisymmetric within tolerance".into(),
        ));
    }

    let mut m = (a - a.transpose()) * nalgebra::convert::<f64, S>(0.5);
    let mut sign = S::one();
    for k in (0..d - 1).step_by(2) {
        // pivot: largest entry below the diagonal in column k
        let mut p = k + 1;
        let mut best = m[(p, k)].modulus();
        for i in k + 2..d {
            let v = m[(i, k)].modulus();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == S::RealField::zero() {
            return Ok(S::zero());
        }
        if p != k + 1 {
            m.swap_rows(p, k + 1);
            m.swap_columns(p, k + 1);
            sign = -sign;
        }
        let pivot = m[(k + 1, k)];
        for i in k + 2..d {
            let mu = m[(i, k)] / pivot;
            if mu != S::zero() {
                // congruence update: row_i -= mu * row_{k+1}, col_i -= mu * col_{k+1}
                for j in 0..d {
                    let r = m[(k + 1, j)];
                    m[(i, j)] -= mu * r;
                }
                for j in 0..d {
                    let c = m[(j, k + 1)];
                    m[(j, i)] -= mu * c;
                }
            }
        }
    }
    let mut pf = sign;
    for j in 0..d / 2 {
        pf *= m[(2 * j, 2 * j + 1)];
    }
    Ok(pf)
}
