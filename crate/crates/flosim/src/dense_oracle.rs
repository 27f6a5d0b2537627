//! Brute-force statevector reference: exact Majorana actions, exact FLO
//! evolution, exact Born probabilities. Capped at [`DENSE_CAP`] qubits.
//!
//! Conventions (fixed here and relied on everywhere):
//! - qubit `i` is bit `i` of the amplitude index (little endian), so the
//!   written bitstring `x₀x₁…` maps to index `Σ xᵢ 2^i`;
//! - Jordan–Wigner: `c_{2i} = (∏_{j<i} Z_j) X_i`, `c_{2i+1} = (∏_{j<i} Z_j) Y_i`;
//! - a generator matrix `g` denotes the operator `op(g) = exp(¼ Σ g_{jk} c_j c_k)`
//!   whose Majorana rotation is `exp(−g)`.

use thiserror::Error;

use crate::{CMatrix, CVector, Cplx, RMatrix, Real};

/// Default cap on dense simulation size (4096 amplitudes).
pub const DENSE_CAP: usize = 12;

#[derive(Debug, Error)]
pub enum DenseError {
    #[error("dense register of {0} qubits exceeds the cap of {1}")]
    Capacity(usize, usize),
    #[error("index out of range: {0}")]
    Index(String),
}

/// Dense statevector on `m` qubits.
#[derive(Debug, Clone)]
pub struct DenseState {
    pub m: usize,
    pub amp: CVector,
}

impl DenseState {
    pub fn vacuum(m: usize) -> Result<Self, DenseError> {
        Self::basis_state(m, &vec![false; m])
    }

    pub fn basis_state(m: usize, bits: &[bool]) -> Result<Self, DenseError> {
        if m > DENSE_CAP {
            return Err(DenseError::Capacity(m, DENSE_CAP));
        }
        assert_eq!(bits.len(), m);
        let mut amp = CVector::zeros(1 << m);
        let mut idx = 0usize;
        for (i, &b) in bits.iter().enumerate() {
            if b {
                idx |= 1 << i;
            }
        }
        amp[idx] = Cplx::new(1.0, 0.0);
        Ok(Self { m, amp })
    }

    pub fn norm(&self) -> Real {
        self.amp.norm()
    }

    pub fn inner(&self, other: &DenseState) -> Cplx {
        assert_eq!(self.m, other.m);
        self.amp.dotc(&other.amp)
    }

    pub fn scale(&self, z: Cplx) -> DenseState {
        DenseState {
            m: self.m,
            amp: self.amp.map(|a| a * z),
        }
    }

    /// Tensor product; `self` occupies the lower qubit indices.
    pub fn tensor(&self, other: &DenseState) -> DenseState {
        let m = self.m + other.m;
        let mut amp = CVector::zeros(1 << m);
        for j in 0..other.amp.len() {
            for i in 0..self.amp.len() {
                amp[(j << self.m) | i] = self.amp[i] * other.amp[j];
            }
        }
        DenseState { m, amp }
    }

    pub fn max_elementwise_distance(&self, other: &DenseState) -> Real {
        assert_eq!(self.m, other.m);
        (0..self.amp.len())
            .map(|i| (self.amp[i] - other.amp[i]).norm())
            .fold(0.0, Real::max)
    }
}

/// Apply the Majorana operator `c_j` in place.
pub fn apply_majorana(state: &mut DenseState, j: usize) {
    let m = state.m;
    assert!(j < 2 * m, "majorana index {j} out of range for {m} qubits");
    let qubit = j / 2;
    let is_y = j % 2 == 1;
    let dim = 1 << m;
    let mask_below = (1usize << qubit) - 1;
    let bit = 1usize << qubit;
    let mut out = CVector::zeros(dim);
    for b in 0..dim {
        let a = state.amp[b];
        if a == Cplx::new(0.0, 0.0) {
            continue;
        }
        let zsign = if ((b & mask_below).count_ones() & 1) == 1 {
            -1.0
        } else {
            1.0
        };
        let target = b ^ bit;
        let factor = if is_y {
            // Y|0> = i|1>, Y|1> = -i|0>
            if b & bit == 0 {
                Cplx::new(0.0, zsign)
            } else {
                Cplx::new(0.0, -zsign)
            }
        } else {
            Cplx::new(zsign, 0.0)
        };
        out[target] += factor * a;
    }
    state.amp = out;
}

/// Apply the quadratic map `v ↦ ¼ Σ g_{jk} c_j c_k v`.
fn apply_quadratic(state: &DenseState, g: &RMatrix) -> DenseState {
    let d = 2 * state.m;
    assert_eq!(g.nrows(), d);
    let mut acc = DenseState {
        m: state.m,
        amp: CVector::zeros(state.amp.len()),
    };
    // ¼ Σ_{j≠k} g_{jk} c_j c_k = ½ Σ_{j<k} g_{jk} c_j c_k for antisymmetric g
    for k in 0..d {
        let mut touched = false;
        for j in 0..k {
            if g[(j, k)] != 0.0 {
                touched = true;
                break;
            }
        }
        if !touched {
            continue;
        }
        let mut ck = state.clone();
        apply_majorana(&mut ck, k);
        for j in 0..k {
            let w = g[(j, k)];
            if w != 0.0 {
                let mut cjck = ck.clone();
                apply_majorana(&mut cjck, j);
                acc.amp += cjck.amp * Cplx::new(0.5 * w, 0.0);
            }
        }
    }
    acc
}

/// Apply `op(g) = exp(¼ Σ g_{jk} c_j c_k)` by scaling and series expansion.
///
/// When the generator touches only a contiguous qubit window the operator is
/// materialised on that window and applied locally.
pub fn apply_flo_generator(state: &DenseState, g: &RMatrix) -> DenseState {
    let d = 2 * state.m;
    assert_eq!(g.nrows(), d, "generator dimension mismatch");
    // support window in qubit space
    let mut lo = usize::MAX;
    let mut hi = 0usize;
    for j in 0..d {
        for k in 0..d {
            if g[(j, k)] != 0.0 {
                lo = lo.min(j / 2);
                hi = hi.max(j / 2);
            }
        }
    }
    if lo == usize::MAX {
        return state.clone();
    }
    let width = hi - lo + 1;
    if width < state.m && width <= 8 {
        let mut local = RMatrix::zeros(2 * width, 2 * width);
        for j in 0..2 * width {
            for k in 0..2 * width {
                local[(j, k)] = g[(2 * lo + j, 2 * lo + k)];
            }
        }
        let u = flo_generator_matrix(width, &local);
        return apply_local(state, lo, width, &u);
    }
    series_exp(state, g)
}

fn series_exp(state: &DenseState, g: &RMatrix) -> DenseState {
    let one_norm: Real = g.iter().map(|x| x.abs()).sum::<Real>() / 4.0;
    let mut steps = 0usize;
    let mut scale = 1.0;
    while one_norm * scale > 0.25 {
        scale *= 0.5;
        steps += 1;
    }
    let gs = g * scale;
    let reps = 1usize << steps;
    let mut current = state.clone();
    for _ in 0..reps {
        let mut acc = current.clone();
        let mut term = current.clone();
        for n in 1..60 {
            term = apply_quadratic(&term, &gs);
            term.amp /= Cplx::new(n as Real, 0.0);
            acc.amp += &term.amp;
            if term.norm() < 1e-18 * acc.norm().max(1e-300) {
                break;
            }
        }
        current = acc;
    }
    current
}

/// Dense matrix of `op(g)` on a register of `m` qubits (small `m` only).
pub fn flo_generator_matrix(m: usize, g: &RMatrix) -> CMatrix {
    let dim = 1 << m;
    let mut u = CMatrix::zeros(dim, dim);
    for col in 0..dim {
        let mut bits = vec![false; m];
        for (i, b) in bits.iter_mut().enumerate() {
            *b = (col >> i) & 1 == 1;
        }
        let basis = DenseState::basis_state(m, &bits).expect("within cap");
        let out = series_exp(&basis, g);
        u.column_mut(col).copy_from(&out.amp);
    }
    u
}

/// Apply a `2^w × 2^w` operator on the contiguous qubit window starting at
/// `q0`. The matrix is indexed by the window's little-endian basis:
/// row index `ℓ = Σ_t x_{q0+t} 2^t`.
pub fn apply_local(state: &DenseState, q0: usize, w: usize, u: &CMatrix) -> DenseState {
    let m = state.m;
    assert!(q0 + w <= m);
    assert_eq!(u.nrows(), 1 << w);
    let dim = 1 << m;
    let mut out = CVector::zeros(dim);
    let window_mask: usize = ((1 << w) - 1) << q0;
    for b in 0..dim {
        let rest = b & !window_mask;
        let lin = (b >> q0) & ((1 << w) - 1);
        let mut acc = Cplx::new(0.0, 0.0);
        for lcol in 0..(1usize << w) {
            let z = u[(lin, lcol)];
            if z != Cplx::new(0.0, 0.0) {
                let src = rest | (lcol << q0);
                acc += z * state.amp[src];
            }
        }
        out[b] = acc;
    }
    DenseState { m, amp: out }
}

/// Apply a controlled-phase `C(θ)` on qubits `(q, q+1)`.
pub fn apply_cphase(state: &mut DenseState, theta: Real, q: usize) {
    let bit0 = 1usize << q;
    let bit1 = 1usize << (q + 1);
    let phase = Cplx::from_polar(1.0, theta);
    for b in 0..state.amp.len() {
        if b & bit0 != 0 && b & bit1 != 0 {
            state.amp[b] *= phase;
        }
    }
}

/// The matchgate `G(A, B)` as a 4×4 matrix in the little-endian two-qubit
/// basis (index = x_q + 2·x_{q+1}): `A` acts on the even-parity subspace
/// {|00⟩, |11⟩} and `B` on the odd one {|10⟩, |01⟩} where the written string
/// `x_q x_{q+1}` lists qubit `q` first.
pub fn matchgate_matrix(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.nrows(), 2);
    assert_eq!(b.nrows(), 2);
    // little-endian index: 0 ↔ written 00, 1 ↔ written 10, 2 ↔ written 01, 3 ↔ written 11
    let mut g = CMatrix::zeros(4, 4);
    g[(0, 0)] = a[(0, 0)];
    g[(0, 3)] = a[(0, 1)];
    g[(3, 0)] = a[(1, 0)];
    g[(3, 3)] = a[(1, 1)];
    // B on written (01, 10) = little-endian indices (2, 1)
    g[(2, 2)] = b[(0, 0)];
    g[(2, 1)] = b[(0, 1)];
    g[(1, 2)] = b[(1, 0)];
    g[(1, 1)] = b[(1, 1)];
    g
}

/// Dense matrix of an arbitrary state map on `m` qubits.
pub fn operator_matrix<F>(m: usize, mut apply: F) -> CMatrix
where
    F: FnMut(&DenseState) -> DenseState,
{
    let dim = 1 << m;
    let mut u = CMatrix::zeros(dim, dim);
    for col in 0..dim {
        let mut bits = vec![false; m];
        for (i, bit) in bits.iter_mut().enumerate() {
            *bit = (col >> i) & 1 == 1;
        }
        let basis = DenseState::basis_state(m, &bits).expect("within cap");
        let out = apply(&basis);
        u.column_mut(col).copy_from(&out.amp);
    }
    u
}

/// The Majorana rotation of a dense unitary: `ρ_{jk}` with
/// `U c_j U† = Σ_k ρ_{jk} c_k` (used to cross-check conventions in tests).
pub fn majorana_rotation_of(m: usize, u: &CMatrix) -> RMatrix {
    let d = 2 * m;
    let dim = 1 << m;
    let mut rho = RMatrix::zeros(d, d);
    let cs: Vec<CMatrix> = (0..d)
        .map(|j| {
            operator_matrix(m, |s| {
                let mut t = s.clone();
                apply_majorana(&mut t, j);
                t
            })
        })
        .collect();
    let udag = u.adjoint();
    for j in 0..d {
        let conj = u * &cs[j] * &udag;
        for (k, ck) in cs.iter().enumerate() {
            // Majoranas are trace-orthogonal: tr(c_j c_k) = 2^m δ_{jk}
            let mut tr = Cplx::new(0.0, 0.0);
            for p in 0..dim {
                for q in 0..dim {
                    tr += conj[(p, q)] * ck[(q, p)];
                }
            }
            rho[(j, k)] = (tr / Cplx::new(dim as Real, 0.0)).re;
        }
    }
    rho
}

/// Exact Born probability of observing the full `outcome` bitstring.
pub fn born_full(state: &DenseState, outcome: &[bool]) -> Real {
    assert_eq!(outcome.len(), state.m);
    let mut idx = 0usize;
    for (i, &b) in outcome.iter().enumerate() {
        if b {
            idx |= 1 << i;
        }
    }
    state.amp[idx].norm_sqr()
}

/// Exact Born probability with partially measured qubits: positions holding
/// `Some(bit)` are measured, `None` positions are summed over.
pub fn born_masked(state: &DenseState, mask: &[Option<bool>]) -> Real {
    assert_eq!(mask.len(), state.m);
    let mut p = 0.0;
    'outer: for b in 0..state.amp.len() {
        for (i, m) in mask.iter().enumerate() {
            if let Some(bit) = m {
                if ((b >> i) & 1 == 1) != *bit {
                    continue 'outer;
                }
            }
        }
        p += state.amp[b].norm_sqr();
    }
    p
}

/// |M_θ⟩ = ½(|0000⟩ + |1100⟩ + |0011⟩ + e^{iθ}|1111⟩) as a dense state.
pub fn magic_state_dense(theta: Real) -> DenseState {
    let mut amp = CVector::zeros(16);
    amp[0b0000] = Cplx::new(0.5, 0.0);
    amp[0b0011] = Cplx::new(0.5, 0.0); // written "1100": qubits 0,1 set
    amp[0b1100] = Cplx::new(0.5, 0.0); // written "0011": qubits 2,3 set
    amp[0b1111] = Cplx::from_polar(0.5, theta);
    DenseState { m: 4, amp }
}
