//! Reduction of a real even-dimensional matrix to a condensed form by
//! orthogonal-symplectic transformations on both sides:
//! `K1 · A · K2 = R` with the odd/even block `R₂₁ = 0` and the even/even
//! block `R₁₁` upper triangular (indices interleaved so that the symplectic
//! form is `Ω = I ⊗ iσ_y`).
//!
//! Only two kinds of elementary transformations are used, both of which
//! commute with Ω: rotations inside one index pair, and equal-angle rotations
//! applied simultaneously to the even and odd members of two pairs.

use nalgebra::DMatrix;

use super::{NumericsError, Result, Scalar, SOMatrix};

struct Sweep<T: Scalar> {
    m: DMatrix<T>,
    k1: DMatrix<T>,
    k2: DMatrix<T>,
    tiny: T,
}

impl<T: Scalar> Sweep<T> {
    fn givens(&self, xp: T, xt: T) -> Option<(T, T)> {
        let h = (xp * xp + xt * xt).sqrt();
        if h <= self.tiny {
            return None;
        }
        Some((xp / h, xt / h))
    }

    fn rotate_rows(&mut self, r1: usize, r2: usize, c: T, s: T) {
        let d = self.m.ncols();
        for j in 0..d {
            let a = self.m[(r1, j)];
            let b = self.m[(r2, j)];
            self.m[(r1, j)] = c * a + s * b;
            self.m[(r2, j)] = -s * a + c * b;
            let a = self.k1[(r1, j)];
            let b = self.k1[(r2, j)];
            self.k1[(r1, j)] = c * a + s * b;
            self.k1[(r2, j)] = -s * a + c * b;
        }
    }

    fn rotate_cols(&mut self, c1: usize, c2: usize, c: T, s: T) {
        let d = self.m.nrows();
        for i in 0..d {
            let a = self.m[(i, c1)];
            let b = self.m[(i, c2)];
            self.m[(i, c1)] = c * a + s * b;
            self.m[(i, c2)] = -s * a + c * b;
            let a = self.k2[(i, c1)];
            let b = self.k2[(i, c2)];
            self.k2[(i, c1)] = c * a + s * b;
            self.k2[(i, c2)] = -s * a + c * b;
        }
    }

    /// Zero `M[target_row, col]` against the pivot row inside one pair.
    fn left_pair_internal(&mut self, pivot_row: usize, target_row: usize, col: usize) {
        if let Some((c, s)) = self.givens(self.m[(pivot_row, col)], self.m[(target_row, col)]) {
            self.rotate_rows(pivot_row, target_row, c, s);
        }
    }

    /// Zero `M[2b, col]` against `M[2a, col]`, rotating both members of the
    /// mode pairs `a` and `b` with the same angle.
    fn left_paired(&mut self, a: usize, b: usize, col: usize) {
        if let Some((c, s)) = self.givens(self.m[(2 * a, col)], self.m[(2 * b, col)]) {
            self.rotate_rows(2 * a, 2 * b, c, s);
            self.rotate_rows(2 * a + 1, 2 * b + 1, c, s);
        }
    }

    /// Zero `M[row, 2b]` against the odd column of the same pair.
    fn right_pair_internal(&mut self, row: usize, b: usize) {
        if let Some((c, s)) = self.givens(self.m[(row, 2 * b + 1)], self.m[(row, 2 * b)]) {
            // col' (odd)  = c*odd + s*even keeps the pivot, zeroes the even entry
            self.rotate_cols(2 * b + 1, 2 * b, c, s);
        }
    }

    /// Zero `M[row, 2b+1]` against `M[row, 2a+1]`, rotating both members of
    /// the mode pairs `a` and `b` with the same angle.
    fn right_paired(&mut self, a: usize, b: usize, row: usize) {
        if let Some((c, s)) = self.givens(self.m[(row, 2 * a + 1)], self.m[(row, 2 * b + 1)]) {
            self.rotate_cols(2 * a + 1, 2 * b + 1, c, s);
            self.rotate_cols(2 * a, 2 * b, c, s);
        }
    }
}

/// `(K1, K2, R)` with `K1 · A · K2 = R`, both `K`s orthogonal and
/// Ω-preserving, `R₂₁ = 0` and `R₁₁` upper triangular. For special
/// orthogonal input additionally `R₁₂ = 0` and `R₁₁` is diagonal.
pub fn symplectic_condensed_form<T: Scalar>(
    a: &DMatrix<T>,
) -> Result<(SOMatrix<T>, SOMatrix<T>, DMatrix<T>)> {
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
            "condensed form needs even dimension, got {d}"
        )));
    }
    let n = d / 2;
    let scale = a.iter().fold(T::one(), |acc, &x| acc.max(x.abs()));
    let mut sweep = Sweep {
        m: a.clone(),
        k1: DMatrix::identity(d, d),
        k2: DMatrix::identity(d, d),
        tiny: nalgebra::convert::<f64, T>(1.0e-300) * scale,
    };
    for k in 0..n {
        // columns 2k: clear all odd rows from pair k down, then the even
        // rows below the diagonal
        for a_ in k..n {
            sweep.left_pair_internal(2 * a_, 2 * a_ + 1, 2 * k);
        }
        for a_ in k + 1..n {
            sweep.left_paired(k, a_, 2 * k);
        }
        // row 2k+1: clear even columns right of the pair, then reduce the
        // odd columns to Hessenberg form
        for b in k + 1..n {
            sweep.right_pair_internal(2 * k + 1, b);
        }
        for b in (k + 2..n).rev() {
            sweep.right_paired(b - 1, b, 2 * k + 1);
        }
    }
    Ok((
        SOMatrix::from_exact(sweep.k1),
        SOMatrix::from_exact(sweep.k2),
        sweep.m,
    ))
}
