//! Block diagonalisation of antisymmetric and special orthogonal matrices
//! through the real Schur form, plus the exponential/logarithm pair on SO(d).

use nalgebra::DMatrix;

use super::{
    max_abs, AntisymMatrix, BlockDiagForm, NumericsError, Result, Scalar, SOMatrix,
};

const SCHUR_EPS: f64 = 1.0e-14;
const SCHUR_MAX_ITER: usize = 100_000;

/// Deterministic dense rotation used to break symmetry alignments on which
/// the QR iteration can stall (exactly antisymmetric matrices with ±π/2
/// blocks are such fixed points).
fn jiggle_rotation<T: Scalar>(d: usize, seed: u64) -> DMatrix<T> {
    let mut state = seed;
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 33) as f64) / (u32::MAX as f64) - 0.5
    };
    let m = DMatrix::<T>::from_fn(d, d, |_, _| nalgebra::convert::<f64, T>(next()));
    let qr = m.qr();
    let mut q = qr.q();
    if q.clone().determinant() < T::zero() {
        let neg = -q.column(0).clone_owned();
        q.column_mut(0).copy_from(&neg);
    }
    q
}

fn schur<T: Scalar>(m: DMatrix<T>) -> Result<(DMatrix<T>, DMatrix<T>)> {
    for (round, eps_f) in [SCHUR_EPS, SCHUR_EPS, 1.0e-13, 1.0e-12].iter().enumerate() {
        let eps = nalgebra::convert::<f64, T>(*eps_f);
        if round == 0 {
            if let Some(s) = m.clone().try_schur(eps, SCHUR_MAX_ITER) {
                return Ok(s.unpack());
            }
        } else {
            let j = jiggle_rotation::<T>(m.nrows(), 0x5eed_0000 + round as u64);
            let conj = &j * &m * j.transpose();
            if let Some(s) = conj.try_schur(eps, SCHUR_MAX_ITER) {
                let (q, t) = s.unpack();
                return Ok((j.transpose() * q, t));
            }
        }
    }
    Err(NumericsError::Convergence)
}

/// Block-diagonalise a real antisymmetric matrix:
/// `Q · A · Qᵀ = ⊕_j [[0, λ_j], [−λ_j, 0]] ⊕ 0`, angles sorted by descending
/// magnitude, `Q` special orthogonal.
pub fn antisym_block_diag<T: Scalar>(a: &AntisymMatrix<T>) -> Result<BlockDiagForm<T>> {
    let d = a.dim();
    if d == 0 {
        return Ok(BlockDiagForm {
            rotation: SOMatrix::identity(0),
            angles: vec![],
            trailing_zero_count: 0,
        });
    }
    let scale = T::one().max(max_abs(a.entries()));
    let split = nalgebra::convert::<f64, T>(1.0e-13) * scale;
    let (q, t) = schur(a.entries().clone())?;
    // rows of Qᵀ are the new basis; collect per-block row indices
    let mut blocks: Vec<(T, usize, usize)> = Vec::new(); // (lambda, row_u, row_w)
    let mut zero_rows: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < d {
        if i + 1 < d && t[(i + 1, i)].abs() > split {
            let lam = (t[(i, i + 1)] - t[(i + 1, i)]) * nalgebra::convert::<f64, T>(0.5);
            blocks.push((lam, i, i + 1));
            i += 2;
        } else {
            zero_rows.push(i);
            i += 1;
        }
    }
    // orientation: make every angle non-negative (the row swap is folded
    // into the final permutation parity)
    for b in blocks.iter_mut() {
        if b.0 < T::zero() {
            std::mem::swap(&mut b.1, &mut b.2);
            b.0 = -b.0;
        }
    }
    blocks.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());

    // assemble the new row order: angle blocks first, zero rows trailing
    let mut order: Vec<usize> = Vec::with_capacity(d);
    for b in &blocks {
        order.push(b.1);
        order.push(b.2);
    }
    order.extend(zero_rows.iter().copied());

    let qt = q.transpose();
    let mut rot = DMatrix::zeros(d, d);
    for (new_row, &old_row) in order.iter().enumerate() {
        rot.row_mut(new_row).copy_from(&qt.row(old_row));
    }
    // fix the determinant to +1: row permutations and orientation swaps can
    // leave det = -1
    let perm_parity = permutation_parity(&order);
    let det_negative = (q.determinant() < T::zero()) ^ (perm_parity % 2 == 1);
    let mut angles: Vec<T> = blocks.iter().map(|b| b.0).collect();
    if det_negative {
        if let Some(&z) = zero_rows.first() {
            // index of that zero row in the new ordering
            let pos = order.iter().position(|&r| r == z).unwrap();
            let neg = -rot.row(pos).clone_owned();
            rot.row_mut(pos).copy_from(&neg);
        } else {
            // flip the orientation (and sign) of the smallest-angle block
            let last = angles.len() - 1;
            let pos = 2 * last;
            rot.swap_rows(pos, pos + 1);
            angles[last] = -angles[last];
        }
    }
    Ok(BlockDiagForm {
        rotation: SOMatrix::from_exact(rot),
        angles,
        trailing_zero_count: zero_rows.len(),
    })
}

fn permutation_parity(order: &[usize]) -> usize {
    let mut seen = vec![false; order.len()];
    let mut parity = 0;
    for start in 0..order.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = order[i];
            len += 1;
        }
        parity += len - 1;
    }
    parity
}

/// Canonical form of a special orthogonal matrix: rotation angles plus the
/// fixed subspace. `Q · R · Qᵀ = ⊕_j rot(θ_j) ⊕ I`, where `rot(θ)` is the 2×2
/// rotation `[[cos θ, sin θ], [−sin θ, cos θ]]` and θ ∈ (−π, π]. Eigenvalue
/// −1 pairs are reported as θ = π blocks.
#[derive(Debug, Clone)]
pub struct OrthogonalBlockForm<T: Scalar> {
    pub rotation: DMatrix<T>,
    pub angles: Vec<T>,
    pub fixed_count: usize,
}

impl<T: Scalar> OrthogonalBlockForm<T> {
    pub fn canonical(&self) -> DMatrix<T> {
        let d = 2 * self.angles.len() + self.fixed_count;
        let mut b = DMatrix::identity(d, d);
        for (j, &th) in self.angles.iter().enumerate() {
            let (s, c) = th.sin_cos();
            b[(2 * j, 2 * j)] = c;
            b[(2 * j, 2 * j + 1)] = s;
            b[(2 * j + 1, 2 * j)] = -s;
            b[(2 * j + 1, 2 * j + 1)] = c;
        }
        b
    }

    /// The principal-branch antisymmetric logarithm assembled from the angles.
    pub fn log(&self) -> DMatrix<T> {
        let d = 2 * self.angles.len() + self.fixed_count;
        let mut b = DMatrix::zeros(d, d);
        for (j, &th) in self.angles.iter().enumerate() {
            b[(2 * j, 2 * j + 1)] = th;
            b[(2 * j + 1, 2 * j)] = -th;
        }
        let q = &self.rotation;
        q.transpose() * b * q
    }
}

/// Decompose a special orthogonal matrix into planar rotations.
pub fn orthogonal_block_form<T: Scalar>(r: &SOMatrix<T>) -> Result<OrthogonalBlockForm<T>> {
    let d = r.dim();
    if d == 0 {
        return Ok(OrthogonalBlockForm {
            rotation: DMatrix::identity(0, 0),
            angles: vec![],
            fixed_count: 0,
        });
    }
    let (q, t) = schur(r.entries().clone())?;
    let split = nalgebra::convert::<f64, T>(1.0e-8);
    let mut angle_blocks: Vec<(T, usize, usize)> = Vec::new();
    let mut plus_rows: Vec<usize> = Vec::new();
    let mut minus_rows: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < d {
        if i + 1 < d && t[(i + 1, i)].abs() > split {
            let half = nalgebra::convert::<f64, T>(0.5);
            let s = (t[(i, i + 1)] - t[(i + 1, i)]) * half;
            let c = (t[(i, i)] + t[(i + 1, i + 1)]) * half;
            let th = s.atan2(c);
            angle_blocks.push((th, i, i + 1));
            i += 2;
        } else {
            if t[(i, i)] > T::zero() {
                plus_rows.push(i);
            } else {
                minus_rows.push(i);
            }
            i += 1;
        }
    }
    if minus_rows.len() % 2 != 0 {
        return Err(NumericsError::Shape(
            "odd number of -1 eigenvalues: determinant is -1".into(),
        ));
    }
    for pair in minus_rows.chunks(2) {
        angle_blocks.push((T::pi(), pair[0], pair[1]));
    }
    let mut order: Vec<usize> = Vec::with_capacity(d);
    for b in &angle_blocks {
        order.push(b.1);
        order.push(b.2);
    }
    order.extend(plus_rows.iter().copied());

    let qt = q.transpose();
    let mut rot = DMatrix::zeros(d, d);
    for (new_row, &old_row) in order.iter().enumerate() {
        rot.row_mut(new_row).copy_from(&qt.row(old_row));
    }
    let perm_parity = permutation_parity(&order);
    let det_negative = (q.determinant() < T::zero()) ^ (perm_parity % 2 == 1);
    let mut angles: Vec<T> = angle_blocks.iter().map(|b| b.0).collect();
    if det_negative {
        if let Some(&z) = plus_rows.first() {
            let pos = order.iter().position(|&r| r == z).unwrap();
            let neg = -rot.row(pos).clone_owned();
            rot.row_mut(pos).copy_from(&neg);
        } else if let Some(j) = angles.iter().position(|&a| a == T::pi()) {
            // negating one row of a π block leaves −I₂ intact
            let neg = -rot.row(2 * j).clone_owned();
            rot.row_mut(2 * j).copy_from(&neg);
        } else {
            let last = angles.len() - 1;
            rot.swap_rows(2 * last, 2 * last + 1);
            angles[last] = -angles[last];
        }
    }
    Ok(OrthogonalBlockForm {
        rotation: rot,
        angles,
        fixed_count: plus_rows.len(),
    })
}

/// Exponential of an antisymmetric generator, evaluated exactly per block.
pub fn so_exp<T: Scalar>(a: &AntisymMatrix<T>) -> Result<SOMatrix<T>> {
    let form = antisym_block_diag(a)?;
    let d = a.dim();
    let mut e = DMatrix::identity(d, d);
    for (j, &lam) in form.angles.iter().enumerate() {
        let (s, c) = lam.sin_cos();
        e[(2 * j, 2 * j)] = c;
        e[(2 * j, 2 * j + 1)] = s;
        e[(2 * j + 1, 2 * j)] = -s;
        e[(2 * j + 1, 2 * j + 1)] = c;
    }
    let q = form.rotation.entries();
    Ok(SOMatrix::from_exact(q.transpose() * e * q))
}

/// Principal antisymmetric logarithm of a special orthogonal matrix: all
/// block angles lie in (−π, π].
pub fn so_log<T: Scalar>(r: &SOMatrix<T>) -> Result<AntisymMatrix<T>> {
    let form = orthogonal_block_form(r)?;
    Ok(AntisymMatrix::from_exact(form.log()))
}
