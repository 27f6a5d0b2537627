//! Controlled-phase magic states `|M_θ⟩`, their two-term Gaussian
//! decomposition, the FLO extent, and the branch sampler used by the
//! Monte-Carlo estimators.
//!
//! `|M_θ⟩ = ½(|0000⟩ + |1100⟩ + |0011⟩ + e^{iθ}|1111⟩)` decomposes as
//! `cos(θ/4)|A(θ)⟩ + i sin(θ/4)|B(θ)⟩` where both branches are products of
//! two phase-Bell pairs and hence Gaussian.

use rand::Rng;

use crate::gaussian_state::{GaussianDesc, Result as GaussResult};
use crate::{Cplx, Real};

/// Angles of the controlled-phase gates consumed by a circuit, normalised to
/// `(−2π, 2π]`.
#[derive(Debug, Clone, Default)]
pub struct MagicAngles {
    thetas: Vec<Real>,
}

impl MagicAngles {
    pub fn new(thetas: impl IntoIterator<Item = Real>) -> Self {
        let thetas = thetas
            .into_iter()
            .map(|t| {
                let two_pi = 2.0 * std::f64::consts::PI;
                let mut r = t % (2.0 * two_pi);
                if r <= -two_pi {
                    r += 2.0 * two_pi;
                } else if r > two_pi {
                    r -= 2.0 * two_pi;
                }
                r
            })
            .collect();
        MagicAngles { thetas }
    }

    pub fn thetas(&self) -> &[Real] {
        &self.thetas
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }
}

/// FLO extent of a single magic state: `ξ(|M_θ⟩) = 1 + |sin(θ/2)|`.
pub fn extent_single(theta: Real) -> Real {
    1.0 + (theta / 2.0).sin().abs()
}

/// ξ* = (Σ_y |t(y)|)² = ∏_j (|cos(θ_j/4)| + |sin(θ_j/4)|)², the squared
/// 1-norm of the branch weights; equals `∏_j extent_single(θ_j)` and makes
/// `P(y) = |t(y)|/√ξ*` a probability distribution.
pub fn xi_star(angles: &MagicAngles) -> Real {
    angles
        .thetas
        .iter()
        .map(|&t| {
            let c = (t / 4.0).cos().abs();
            let s = (t / 4.0).sin().abs();
            (c + s) * (c + s)
        })
        .product()
}

/// One sampled branch assignment.
#[derive(Debug, Clone)]
pub struct BranchSample {
    /// branch bits: `false` → A branch, `true` → B branch
    pub y: Vec<bool>,
    /// signed weight `t(y) = ∏ cos(θ_j/4)^{1−y_j} sin(θ_j/4)^{y_j}`
    pub weight: Real,
    /// amplitude prefactor `i^{|y|} ∏ cos^{1−y} sin^{y}`
    pub prefactor: Cplx,
}

/// Signed branch weight `t(y)`.
pub fn branch_weight(angles: &MagicAngles, y: &[bool]) -> Real {
    angles
        .thetas
        .iter()
        .zip(y)
        .map(|(&t, &bit)| {
            if bit {
                (t / 4.0).sin()
            } else {
                (t / 4.0).cos()
            }
        })
        .product()
}

pub fn branch_sample_from_bits(angles: &MagicAngles, y: Vec<bool>) -> BranchSample {
    let weight = branch_weight(angles, &y);
    let ones = y.iter().filter(|&&b| b).count();
    let prefactor = Cplx::i().powu((ones % 4) as u32) * weight;
    BranchSample {
        y,
        weight,
        prefactor,
    }
}

/// Draw a branch assignment: bit `j` is 1 with probability
/// `|sin(θ_j/4)| / (|cos(θ_j/4)| + |sin(θ_j/4)|)`.
pub fn sample_branch<R: Rng>(angles: &MagicAngles, rng: &mut R) -> BranchSample {
    let y: Vec<bool> = angles
        .thetas
        .iter()
        .map(|&t| {
            let c = (t / 4.0).cos().abs();
            let s = (t / 4.0).sin().abs();
            let p1 = s / (c + s);
            rng.random::<f64>() < p1
        })
        .collect();
    branch_sample_from_bits(angles, y)
}

/// Which branch of the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    A,
    B,
}

impl Branch {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Branch::B
        } else {
            Branch::A
        }
    }
}

/// The branch state on 4 fresh qubits:
/// `|A(θ)⟩ = e^{−iθ/4} Φ_{θ/2} ⊗ Φ_{θ/2}` and
/// `|B(θ)⟩ = e^{−iθ/4} Φ⁻_{θ/2} ⊗ Φ⁻_{θ/2}` where
/// `Φ^±_{φ} = (|00⟩ ± e^{iφ}|11⟩)/√2`.
pub fn branch_state_desc(theta: Real, branch: Branch) -> GaussResult<GaussianDesc> {
    let mut g = GaussianDesc::vacuum(4)?;
    let zeta = match branch {
        Branch::A => std::f64::consts::FRAC_PI_4,
        Branch::B => -std::f64::consts::FRAC_PI_4,
    };
    g = g.apply_elementary(zeta, 0, 2)?;
    g = g.apply_elementary(zeta, 4, 6)?;
    // phase layer exp(i(θ/4) Σ_q n_q) puts e^{iθ/2} on each |11⟩ component
    let phi = theta / 4.0;
    g = g.apply_passive(&number_phase_rotation(4, &[0, 1, 2, 3], phi), Cplx::new(1.0, 0.0))?;
    Ok(g.scaled(Cplx::from_polar(1.0, -theta / 4.0)))
}

/// Rotation of the passive unitary `exp(iφ Σ_{q ∈ qs} n_q)` (vacuum phase 1).
pub fn number_phase_rotation(m: usize, qs: &[usize], phi: Real) -> crate::RMatrix {
    let mut s = crate::RMatrix::identity(2 * m, 2 * m);
    let (sn, cs) = phi.sin_cos();
    for &q in qs {
        s[(2 * q, 2 * q)] = cs;
        s[(2 * q, 2 * q + 1)] = -sn;
        s[(2 * q + 1, 2 * q)] = sn;
        s[(2 * q + 1, 2 * q + 1)] = cs;
    }
    s
}

/// Build a phase-Bell pair `(|00⟩ ± e^{iφ}|11⟩)/√2` between remote qubit
/// positions `p < p'` of an existing description (all touched qubits must be
/// in |0⟩).
pub fn attach_phase_pair(
    g: GaussianDesc,
    p: usize,
    p2: usize,
    phi: Real,
    minus: bool,
) -> GaussResult<GaussianDesc> {
    let zeta = if minus {
        -std::f64::consts::FRAC_PI_4
    } else {
        std::f64::consts::FRAC_PI_4
    };
    let g = g.apply_elementary(zeta, 2 * p, 2 * p2)?;
    let m = g.num_qubits();
    g.apply_passive(
        &number_phase_rotation(m, &[p, p2], phi / 2.0),
        Cplx::new(1.0, 0.0),
    )
}

/// Inverse of [`attach_phase_pair`]: removes the pair preparation so the
/// block can be projected back onto the vacuum.
pub fn detach_phase_pair(
    g: GaussianDesc,
    p: usize,
    p2: usize,
    phi: Real,
    minus: bool,
) -> GaussResult<GaussianDesc> {
    let m = g.num_qubits();
    let g = g.apply_passive(
        &number_phase_rotation(m, &[p, p2], -phi / 2.0),
        Cplx::new(1.0, 0.0),
    )?;
    let zeta = if minus {
        -std::f64::consts::FRAC_PI_4
    } else {
        std::f64::consts::FRAC_PI_4
    };
    g.apply_elementary(-zeta, 2 * p, 2 * p2)
}

/// Fermionic nonlinearity of the rotation channel, `W(E_rot) = 1 + 2|sin 2θ|`.
/// The controlled-phase gate `C(θ)` corresponds to the rotation with a
/// quarter of the phase, so its cost in the comparison curve is
/// `fermionic_nonlinearity_rot(θ/4)`.
pub fn fermionic_nonlinearity_rot(theta: Real) -> Real {
    1.0 + 2.0 * (2.0 * theta).sin().abs()
}

/// Best sampled FLO fidelity against `state`: max over random Gaussian
/// states |s⟩ of |⟨s|state⟩|², with the explicit witnesses included.
pub fn flo_fidelity_bound_check<R: Rng>(
    state: &crate::dense_oracle::DenseState,
    trials: usize,
    rng: &mut R,
) -> Real {
    use crate::numerics::AntisymMatrix;
    let m = state.m;
    let mut best: Real = 0.0;
    // witness basis states of even parity
    for idx in 0..(1usize << m) {
        if (idx.count_ones() % 2) == 0 {
            let overlap = state.amp[idx].norm_sqr();
            best = best.max(overlap);
        }
    }
    for _ in 0..trials {
        let d = 2 * m;
        let gen = crate::RMatrix::from_fn(d, d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let alpha = AntisymMatrix::from_exact(gen);
        let vac = crate::dense_oracle::DenseState::vacuum(m).expect("within cap");
        let s = crate::dense_oracle::apply_flo_generator(&vac, alpha.entries());
        best = best.max(s.inner(state).norm_sqr());
    }
    best
}

/// |a₈⟩ = (|0000⟩ + |1111⟩)/√2, the maximally non-Gaussian four-qubit state.
pub fn a8_dense() -> crate::dense_oracle::DenseState {
    let mut amp = crate::CVector::zeros(16);
    let r = 1.0 / (2.0f64).sqrt();
    amp[0b0000] = Cplx::new(r, 0.0);
    amp[0b1111] = Cplx::new(r, 0.0);
    crate::dense_oracle::DenseState { m: 4, amp }
}
