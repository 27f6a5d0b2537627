//! Hua–Youla normal form: a complex antisymmetric matrix is brought to
//! `U · A · Uᵀ = Λ ⊗ iσ_y ⊕ 0` by a unitary congruence, with Λ real and
//! non-negative.
//!
//! The construction uses the Hermitian negative-semidefinite matrix
//! `N = A·Ā = −A·A†`: on each eigenspace of `N` with eigenvalue `−σ²` the
//! antilinear map `J(v) = A·v̄/σ` squares to −1, and orthonormal pairs
//! `(J e, e)` realise the canonical 2×2 blocks.

use nalgebra::{Complex, DMatrix, DVector};

use super::{ComplexAntisymMatrix, NumericsError, Result, Scalar};

type CVec<T> = DVector<Complex<T>>;

pub fn complex_antisym_block_diag<T: Scalar>(
    a: &ComplexAntisymMatrix<T>,
) -> Result<(DMatrix<Complex<T>>, Vec<T>)> {
    let d = a.dim();
    if d == 0 {
        return Ok((DMatrix::identity(0, 0), vec![]));
    }
    let m = a.entries();
    let n = m * m.map(|z| z.conj());
    let eig = n.clone().symmetric_eigen();
    let scale = eig
        .eigenvalues
        .iter()
        .fold(T::zero(), |acc, &x| acc.max(x.abs()))
        .max(T::one());
    let zero_tol = nalgebra::convert::<f64, T>(1.0e-12) * scale;
    let group_tol = nalgebra::convert::<f64, T>(1.0e-9) * scale;

    // sort eigenpairs: most negative eigenvalue (largest σ) first
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());

    let mut kernel_cols: Vec<CVec<T>> = Vec::new();
    let mut pairs: Vec<(CVec<T>, CVec<T>, T)> = Vec::new(); // (J e, e, sigma)

    let mut pos = 0;
    while pos < d {
        let ev = eig.eigenvalues[idx[pos]];
        if -ev <= zero_tol {
            for &i in &idx[pos..] {
                kernel_cols.push(eig.eigenvectors.column(i).into_owned());
            }
            break;
        }
        // collect the (approximately) degenerate group
        let mut end = pos + 1;
        while end < d && (eig.eigenvalues[idx[end]] - ev).abs() <= group_tol {
            end += 1;
        }
        let sigma = (-ev).sqrt();
        let mut basis: Vec<CVec<T>> = idx[pos..end]
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect();
        if basis.len() % 2 != 0 {
            return Err(NumericsError::Shape(
                "odd-dimensional eigenspace in Hua-Youla reduction".into(),
            ));
        }
        while !basis.is_empty() {
            let e = normalize(basis.swap_remove(0));
            let je = m * e.map(|z| z.conj());
            let mut f = je.map(|z| z / Complex::new(sigma, T::zero()));
            // numerically enforce f ⊥ e
            let proj = e.dotc(&f);
            f -= e.scale_complex(proj);
            let f = normalize(f);
            // strip the (e, f) plane from the rest of the basis; the span
            // loses two dimensions, so one near-null vector drops out
            let drop_tol = nalgebra::convert::<f64, T>(1.0e-6);
            let mut next: Vec<CVec<T>> = Vec::with_capacity(basis.len().saturating_sub(1));
            for b in basis.into_iter() {
                let mut b = b;
                let pe = e.dotc(&b);
                b -= e.scale_complex(pe);
                let pf = f.dotc(&b);
                b -= f.scale_complex(pf);
                for x in &next {
                    let px = x.dotc(&b);
                    b -= x.scale_complex(px);
                }
                let n = b.norm();
                if n > drop_tol {
                    b = b.map(|z| z / Complex::new(n, T::zero()));
                    next.push(b);
                }
            }
            basis = next;
            pairs.push((f, e, sigma));
        }
        pos = end;
    }

    let mut v = DMatrix::<Complex<T>>::zeros(d, d);
    let mut lambdas = Vec::with_capacity(pairs.len());
    for (j, (f, e, sigma)) in pairs.iter().enumerate() {
        v.column_mut(2 * j).copy_from(f);
        v.column_mut(2 * j + 1).copy_from(e);
        lambdas.push(*sigma);
    }
    for (k, col) in kernel_cols.iter().enumerate() {
        v.column_mut(2 * pairs.len() + k).copy_from(col);
    }
    Ok((v.adjoint(), lambdas))
}

fn normalize<T: Scalar>(v: CVec<T>) -> CVec<T> {
    let n = v.norm();
    v.map(|z| z / Complex::new(n, T::zero()))
}

trait ScaleComplex<T: Scalar> {
    fn scale_complex(&self, z: Complex<T>) -> Self;
}

impl<T: Scalar> ScaleComplex<T> for CVec<T> {
    fn scale_complex(&self, z: Complex<T>) -> Self {
        self.map(|x| x * z)
    }
}
