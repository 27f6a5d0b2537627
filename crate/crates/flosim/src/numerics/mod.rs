//! Dense linear-algebra kernels: Pfaffians, antisymmetric and orthogonal
//! block diagonalisation, exponentials/logarithms on SO(d), and the
//! orthogonal-symplectic condensed form.
//!
//! Everything here is generic over the scalar type via [`Scalar`]; the rest
//! of the crate instantiates these kernels at `f64` through the crate-root
//! aliases.

use nalgebra::{Complex, DMatrix};
use thiserror::Error;

mod blockdiag;
mod condensed;
mod huayoula;
mod pfaffian;

pub use blockdiag::{antisym_block_diag, orthogonal_block_form, so_exp, so_log, OrthogonalBlockForm};
pub use condensed::symplectic_condensed_form;
pub use huayoula::complex_antisym_block_diag;
pub use pfaffian::pfaffian;

/// Scalar type the kernels are generic over: `f32` or `f64`.
pub trait Scalar: nalgebra::RealField + simba::scalar::SupersetOf<f64> + Copy {}
impl Scalar for f32 {}
impl Scalar for f64 {}

/// Antisymmetry / orthogonality check tolerance, scaled by dimension.
pub fn tol_sym<T: Scalar>(dim: usize) -> T {
    nalgebra::convert::<f64, T>(1.0e-10 * dim as f64)
}
/// Reconstruction tolerance for block-diagonal forms, scaled by dimension.
pub fn tol_block<T: Scalar>(dim: usize) -> T {
    nalgebra::convert::<f64, T>(1.0e-9 * dim as f64)
}

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("iterative decomposition failed to converge")]
    Convergence,
}

pub type Result<T> = std::result::Result<T, NumericsError>;

fn max_abs<T: Scalar>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
}

fn max_abs_c<T: Scalar>(m: &DMatrix<Complex<T>>) -> T {
    m.iter()
        .fold(T::zero(), |acc, x| acc.max(x.re.abs() + x.im.abs()))
}

/// Real antisymmetric matrix of even dimension.
///
/// The constructor rejects inputs whose symmetric part exceeds `tol_sym` and
/// applies the averaging `A ← (A − Aᵀ)/2` exactly once, so stored entries are
/// antisymmetric to machine precision.
#[derive(Debug, Clone, PartialEq)]
pub struct AntisymMatrix<T: Scalar> {
    entries: DMatrix<T>,
}

impl<T: Scalar> AntisymMatrix<T> {
    pub fn new(entries: DMatrix<T>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(NumericsError::Shape(format!(
                "expected square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let dim = entries.nrows();
        if dim % 2 != 0 {
            return Err(NumericsError::Dimension(format!(
                "antisymmetric matrix dimension {dim} is odd"
            )));
        }
        let sym = (&entries + entries.transpose()) * nalgebra::convert::<f64, T>(0.5);
        let residual = max_abs(&sym);
        let scale = T::one().max(max_abs(&entries));
        if residual > tol_sym::<T>(dim) * scale {
            return Err(NumericsError::Shape(format!(
                "antisymmetry residual {residual:?} above tolerance"
            )));
        }
        let anti = (&entries - entries.transpose()) * nalgebra::convert::<f64, T>(0.5);
        Ok(Self { entries: anti })
    }

    /// Build from a generator known to be antisymmetric by construction.
    pub fn from_exact(entries: DMatrix<T>) -> Self {
        let anti = (&entries - entries.transpose()) * nalgebra::convert::<f64, T>(0.5);
        Self { entries: anti }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.entries
    }
}

/// Real special orthogonal matrix of even dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SOMatrix<T: Scalar> {
    entries: DMatrix<T>,
}

impl<T: Scalar> SOMatrix<T> {
    pub fn new(entries: DMatrix<T>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(NumericsError::Shape(format!(
                "expected square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let dim = entries.nrows();
        if dim % 2 != 0 {
            return Err(NumericsError::Dimension(format!(
                "rotation dimension {dim} is odd"
            )));
        }
        let gram = &entries * entries.transpose() - DMatrix::<T>::identity(dim, dim);
        let residual = max_abs(&gram);
        if residual > tol_sym::<T>(dim) {
            return Err(NumericsError::Shape(format!(
                "orthogonality residual {residual:?} above tolerance"
            )));
        }
        let det = entries.clone().determinant();
        if det < T::zero() {
            return Err(NumericsError::Shape(
                "determinant is -1, not special orthogonal".into(),
            ));
        }
        Ok(Self { entries })
    }

    /// Wrap a matrix that is orthogonal by construction (e.g. a product of
    /// Givens rotations).
    pub fn from_exact(entries: DMatrix<T>) -> Self {
        Self { entries }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.entries
    }
}

/// Complex antisymmetric matrix (`A + Aᵀ = 0`, no conjugation).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexAntisymMatrix<T: Scalar> {
    entries: DMatrix<Complex<T>>,
}

impl<T: Scalar> ComplexAntisymMatrix<T> {
    pub fn new(entries: DMatrix<Complex<T>>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(NumericsError::Shape(format!(
                "expected square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let dim = entries.nrows();
        let sym = (&entries + entries.transpose()).scale(nalgebra::convert::<f64, T>(0.5));
        let residual = max_abs_c(&sym);
        let scale = T::one().max(max_abs_c(&entries));
        if residual > tol_sym::<T>(dim.max(2)) * scale {
            return Err(NumericsError::Shape(format!(
                "antisymmetry residual {residual:?} above tolerance"
            )));
        }
        let anti = (&entries - entries.transpose()).scale(nalgebra::convert::<f64, T>(0.5));
        Ok(Self { entries: anti })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex<T>> {
        &self.entries
    }
}

/// Result of [`antisym_block_diag`]: a rotation `Q` and angles `λ_j` with
/// `Q · A · Qᵀ = ⊕_j [[0, λ_j], [−λ_j, 0]] ⊕ 0`.
#[derive(Debug, Clone)]
pub struct BlockDiagForm<T: Scalar> {
    pub rotation: SOMatrix<T>,
    pub angles: Vec<T>,
    pub trailing_zero_count: usize,
}

impl<T: Scalar> BlockDiagForm<T> {
    /// Assemble the canonical block-diagonal matrix `⊕ [[0, λ], [−λ, 0]] ⊕ 0`.
    pub fn canonical(&self) -> DMatrix<T> {
        let dim = 2 * self.angles.len() + self.trailing_zero_count;
        let mut b = DMatrix::zeros(dim, dim);
        for (j, &lam) in self.angles.iter().enumerate() {
            b[(2 * j, 2 * j + 1)] = lam;
            b[(2 * j + 1, 2 * j)] = -lam;
        }
        b
    }

    /// Reconstruct the source matrix `Qᵀ · B · Q`.
    pub fn reconstruct(&self) -> DMatrix<T> {
        let q = self.rotation.entries();
        q.transpose() * self.canonical() * q
    }
}

/// The standard symplectic form `Ω = I_n ⊗ iσ_y` on `2n` interleaved indices.
pub fn symplectic_form<T: Scalar>(dim: usize) -> DMatrix<T> {
    assert!(dim % 2 == 0);
    let mut omega = DMatrix::zeros(dim, dim);
    for i in 0..dim / 2 {
        omega[(2 * i, 2 * i + 1)] = T::one();
        omega[(2 * i + 1, 2 * i)] = -T::one();
    }
    omega
}

/// Max-norm residual of `S Ω Sᵀ − Ω`; zero iff `S` preserves the form.
pub fn symplectic_residual<T: Scalar>(s: &DMatrix<T>) -> T {
    let omega = symplectic_form::<T>(s.nrows());
    max_abs(&(s * &omega * s.transpose() - omega))
}
