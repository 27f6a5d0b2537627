//! The phase-sensitive Gaussian-state engine.
//!
//! A pure fermionic Gaussian state on `m` qubits is stored as
//! `|ψ⟩ = ω · K · X(λ) |0⟩` where `K` is a passive unitary held as the pair
//! `(R, a)` of its Majorana rotation (column convention,
//! `K c_j K† = Σ_k R_{kj} c_k`) and vacuum eigenvalue, and
//! `X(λ) = exp(Σ_j λ_j c_{4j} c_{4j+2})`. All updates track the global phase
//! exactly; the only stochastic-looking step, the ± lift ambiguity after a
//! KAK decomposition, is resolved by the Pfaffian machinery in
//! [`crate::kak_phase`].

use thiserror::Error;

use crate::dense_oracle::{self, DenseState, DENSE_CAP};
use crate::kak_phase::{
    self, canonicalize, parity_trace, passive_generator_from, principal_passive_phase, GenFactor,
    KakError, Piece,
};
use crate::numerics::{self, symplectic_residual, AntisymMatrix, NumericsError};
use crate::{CMatrix, Cplx, RMatrix, Real};

#[derive(Debug, Error)]
pub enum GaussianError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("capacity error: dense expansion of {0} qubits exceeds cap {1}")]
    Capacity(usize, usize),
    #[error("not a passive rotation: {0}")]
    NotPassive(String),
    #[error(transparent)]
    Kak(#[from] KakError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, GaussianError>;

/// Phase-carrying classical description `Γ = (ω, R, a, λ)` of a pure
/// fermionic Gaussian state on `m` qubits (`m` even).
#[derive(Debug, Clone)]
pub struct GaussianDesc {
    m: usize,
    omega: Cplx,
    rot: RMatrix,
    a: Cplx,
    lambda: Vec<Real>,
}

/// Real antisymmetric covariance matrix `M_{jk} = −(i/2)⟨[c_j, c_k]⟩`.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    entries: RMatrix,
}

impl CovarianceMatrix {
    pub fn entries(&self) -> &RMatrix {
        &self.entries
    }

    /// Max-norm violation of the pure-state condition `M Mᵀ = I`.
    pub fn purity_residual(&self) -> Real {
        let d = self.entries.nrows();
        (&self.entries * self.entries.transpose() - RMatrix::identity(d, d))
            .abs()
            .max()
    }
}

/// Result of a computational-basis overlap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisAmplitude {
    /// The bitstring has odd parity; the overlap vanishes identically.
    OddParity,
    Value(Cplx),
}

impl BasisAmplitude {
    pub fn value(self) -> Cplx {
        match self {
            BasisAmplitude::OddParity => Cplx::new(0.0, 0.0),
            BasisAmplitude::Value(z) => z,
        }
    }
}

impl GaussianDesc {
    /// The all-zeros state `|0…0⟩` on `m` qubits.
    pub fn vacuum(m: usize) -> Result<Self> {
        if m % 2 != 0 || m == 0 {
            return Err(GaussianError::Dimension(format!(
                "qubit count must be even and positive, got {m}"
            )));
        }
        Ok(GaussianDesc {
            m,
            omega: Cplx::new(1.0, 0.0),
            rot: RMatrix::identity(2 * m, 2 * m),
            a: Cplx::new(1.0, 0.0),
            lambda: vec![0.0; m / 2],
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.m
    }

    pub fn omega(&self) -> Cplx {
        self.omega
    }

    pub fn norm(&self) -> Real {
        self.omega.norm()
    }

    pub fn rotation(&self) -> &RMatrix {
        &self.rot
    }

    pub fn vacuum_eigenvalue(&self) -> Cplx {
        self.a
    }

    pub fn lambdas(&self) -> &[Real] {
        &self.lambda
    }

    pub fn is_zero(&self) -> bool {
        self.omega.norm() == 0.0
    }

    fn zero_state(m: usize) -> Self {
        GaussianDesc {
            m,
            omega: Cplx::new(0.0, 0.0),
            rot: RMatrix::identity(2 * m, 2 * m),
            a: Cplx::new(1.0, 0.0),
            lambda: vec![0.0; m / 2],
        }
    }

    pub fn scaled(&self, z: Cplx) -> Self {
        let mut g = self.clone();
        g.omega *= z;
        g
    }

    /// X-factor pair list `(4j, 4j+2, λ_j)` skipping zero angles.
    fn x_pairs(&self) -> Vec<(usize, usize, Real)> {
        self.lambda
            .iter()
            .enumerate()
            .map(|(j, &l)| (4 * j, 4 * j + 2, l))
            .collect()
    }

    /// Majorana rotation of the full preparation `K · X(λ)`.
    pub fn total_rotation(&self) -> RMatrix {
        let d = 2 * self.m;
        let mut x = RMatrix::identity(d, d);
        for &(p, q, l) in &self.x_pairs() {
            let (s, c) = (2.0 * l).sin_cos();
            x[(p, p)] = c;
            x[(p, q)] = s;
            x[(q, p)] = -s;
            x[(q, q)] = c;
        }
        &self.rot * x
    }

    /// Covariance matrix `M = ρ M_vac ρᵀ` with `ρ` the total rotation.
    pub fn covariance(&self) -> CovarianceMatrix {
        let rho = self.total_rotation();
        let mvac = numerics::symplectic_form::<Real>(2 * self.m);
        CovarianceMatrix {
            entries: &rho * mvac * rho.transpose(),
        }
    }

    /// Update rule for a passive unitary given as `(S, b)` with
    /// `S = rot(U)` and `U|0⟩ = b|0⟩`: the data maps to `(ω, SR, ab, λ)`.
    pub fn apply_passive(&self, s: &RMatrix, b: Cplx) -> Result<Self> {
        if s.nrows() != 2 * self.m {
            return Err(GaussianError::Dimension(format!(
                "passive rotation is {}x{}, state has {} Majorana indices",
                s.nrows(),
                s.ncols(),
                2 * self.m
            )));
        }
        if symplectic_residual(s) > 1e-8 {
            return Err(GaussianError::NotPassive(format!(
                "Ω-conjugation residual {:.3e}",
                symplectic_residual(s)
            )));
        }
        if (b.norm() - 1.0).abs() > 1e-8 {
            return Err(GaussianError::NotPassive(format!(
                "vacuum eigenvalue has modulus {}",
                b.norm()
            )));
        }
        Ok(GaussianDesc {
            m: self.m,
            omega: self.omega,
            rot: s * &self.rot,
            a: self.a * b,
            lambda: self.lambda.clone(),
        })
    }

    /// Apply a passive unitary specified by its generator `β` (the operator
    /// `op(β) = exp(¼ Σ β c c)`).
    pub fn apply_passive_generator(&self, beta: &AntisymMatrix<Real>) -> Result<Self> {
        let b = kak_phase::passive_vacuum_phase(beta)?;
        let s = numerics::so_exp(beta)?;
        self.apply_passive(s.entries(), b)
    }

    /// Apply the elementary FLO unitary `exp(μ c_j c_k)`.
    pub fn apply_elementary(&self, mu: Real, j: usize, k: usize) -> Result<Self> {
        let d = 2 * self.m;
        if j == k {
            return Err(GaussianError::Index(format!(
                "elementary generator needs distinct indices, got ({j}, {k})"
            )));
        }
        if j >= d || k >= d {
            return Err(GaussianError::Index(format!(
                "Majorana index out of range: ({j}, {k}) on {d} indices"
            )));
        }
        let pieces = vec![
            Piece::PairRot {
                pairs: vec![(j, k, mu)],
                conj: None,
            },
            Piece::Passive {
                rot: self.rot.clone(),
                phase: self.a,
            },
            Piece::PairRot {
                pairs: self.x_pairs(),
                conj: None,
            },
        ];
        let parts = canonicalize(self.m, &pieces)?;
        Ok(GaussianDesc {
            m: self.m,
            omega: self.omega * parts.scale,
            rot: parts.rot,
            a: parts.phase,
            lambda: parts.lambda,
        })
    }

    /// Apply a general FLO unitary `op(α) = exp(¼ Σ α_{jk} c_j c_k)`:
    /// KAK-decompose `op(α)` with its sign, then recanonicalise the product.
    pub fn apply_general(&self, alpha: &AntisymMatrix<Real>) -> Result<Self> {
        if alpha.dim() != 2 * self.m {
            return Err(GaussianError::Dimension(format!(
                "generator dimension {} does not match {} Majorana indices",
                alpha.dim(),
                2 * self.m
            )));
        }
        let f = kak_phase::kak_flo_with_sign(alpha)?;
        let k_beta = numerics::so_exp(&f.beta)?;
        let b_beta = kak_phase::passive_vacuum_phase(&f.beta)?;
        let k_gamma = numerics::so_exp(&f.gamma)?;
        let b_gamma = kak_phase::passive_vacuum_phase(&f.gamma)?;
        let a_pairs: Vec<(usize, usize, Real)> = f
            .lambda
            .iter()
            .enumerate()
            .flat_map(|(jj, &v)| {
                [
                    (4 * jj, 4 * jj + 2, v / 2.0),
                    (4 * jj + 1, 4 * jj + 3, -v / 2.0),
                ]
            })
            .collect();
        let pieces = vec![
            Piece::Passive {
                rot: k_beta.entries().clone(),
                phase: b_beta,
            },
            Piece::PairRot {
                pairs: a_pairs,
                conj: None,
            },
            Piece::Passive {
                rot: k_gamma.entries().clone(),
                phase: b_gamma,
            },
            Piece::Passive {
                rot: self.rot.clone(),
                phase: self.a,
            },
            Piece::PairRot {
                pairs: self.x_pairs(),
                conj: None,
            },
        ];
        let parts = canonicalize(self.m, &pieces)?;
        Ok(GaussianDesc {
            m: self.m,
            omega: self.omega * parts.scale,
            rot: parts.rot,
            a: parts.phase,
            lambda: parts.lambda,
        })
    }

    /// Refresh the internal KAK gauge without changing the state.
    pub fn recanonicalize(&self) -> Result<Self> {
        let pieces = vec![
            Piece::Passive {
                rot: self.rot.clone(),
                phase: self.a,
            },
            Piece::PairRot {
                pairs: self.x_pairs(),
                conj: None,
            },
        ];
        let parts = canonicalize(self.m, &pieces)?;
        Ok(GaussianDesc {
            m: self.m,
            omega: self.omega * parts.scale,
            rot: parts.rot,
            a: parts.phase,
            lambda: parts.lambda,
        })
    }

    /// Project qubit `i` onto |0⟩: returns the subnormalised state
    /// `a_i a_i† |ψ⟩` (ω carries the new norm; annihilation is flagged by a
    /// zero result).
    pub fn apply_projector_zero(&self, i: usize) -> Result<Self> {
        if i >= self.m {
            return Err(GaussianError::Index(format!(
                "qubit {i} out of range for {} qubits",
                self.m
            )));
        }
        if self.is_zero() {
            return Ok(self.clone());
        }
        let m = self.m;
        // K† a_i K = Σ_j x_j a_j with R = rot(K): K† c_p K = Σ_q R_{pq} c_q
        let r = &self.rot;
        let mut xs = vec![Cplx::new(0.0, 0.0); m];
        for jj in 0..m {
            let re = r[(2 * i, 2 * jj)] + r[(2 * i + 1, 2 * jj + 1)];
            let im = r[(2 * i + 1, 2 * jj)] - r[(2 * i, 2 * jj + 1)];
            xs[jj] = Cplx::new(re / 2.0, im / 2.0) * Cplx::new(1.0, 0.0);
        }
        // Majorana coefficient vectors of Σ x_j a_j and Σ x̄_j a_j†
        let d = 2 * m;
        let mut v = vec![Cplx::new(0.0, 0.0); d];
        let mut wv = vec![Cplx::new(0.0, 0.0); d];
        for (jj, &x) in xs.iter().enumerate() {
            v[2 * jj] = x / 2.0;
            v[2 * jj + 1] = x * Cplx::new(0.0, 0.5);
            let xb = x.conj();
            wv[2 * jj] = xb / 2.0;
            wv[2 * jj + 1] = xb * Cplx::new(0.0, -0.5);
        }
        // conjugate through X(λ): coefficients transform with rot(X)ᵀ
        let rx = {
            let mut x = RMatrix::identity(d, d);
            for &(p, q, l) in &self.x_pairs() {
                let (s, c) = (2.0 * l).sin_cos();
                x[(p, p)] = c;
                x[(p, q)] = s;
                x[(q, p)] = -s;
                x[(q, q)] = c;
            }
            x
        };
        let conj_vec = |vin: &[Cplx]| -> Vec<Cplx> {
            let mut out = vec![Cplx::new(0.0, 0.0); d];
            for (q, o) in out.iter_mut().enumerate() {
                let mut acc = Cplx::new(0.0, 0.0);
                for (p, &vp) in vin.iter().enumerate() {
                    if vp != Cplx::new(0.0, 0.0) {
                        acc += vp * Cplx::new(rx[(p, q)], 0.0);
                    }
                }
                *o = acc;
            }
            out
        };
        let vp = conj_vec(&v);
        let wp = conj_vec(&wv);
        // split back into mode operators
        let mut s_vec = vec![Cplx::new(0.0, 0.0); m];
        let mut t_vec = vec![Cplx::new(0.0, 0.0); m];
        let mut u_vec = vec![Cplx::new(0.0, 0.0); m];
        for jj in 0..m {
            let i_ = Cplx::new(0.0, 1.0);
            s_vec[jj] = vp[2 * jj] - i_ * vp[2 * jj + 1];
            t_vec[jj] = vp[2 * jj] + i_ * vp[2 * jj + 1];
            u_vec[jj] = wp[2 * jj] + i_ * wp[2 * jj + 1];
        }
        let c0: Cplx = s_vec.iter().zip(&u_vec).map(|(s, u)| s * u).sum();
        // pairing matrix Z = t ∧ u
        let mut z = CMatrix::zeros(m, m);
        for jj in 0..m {
            for kk in 0..m {
                z[(jj, kk)] = t_vec[jj] * u_vec[kk] - t_vec[kk] * u_vec[jj];
            }
        }
        let znorm = z.iter().fold(0.0f64, |acc, w| acc.max(w.norm()));
        let (uw, sigma) = if znorm > 1e-14 {
            let (uw, sigmas) =
                numerics::complex_antisym_block_diag(&numerics::ComplexAntisymMatrix::new(z)?)?;
            (uw, sigmas.first().copied().unwrap_or(0.0))
        } else {
            (CMatrix::identity(m, m), 0.0)
        };
        let gamma = (c0.norm_sqr() + sigma * sigma).sqrt();
        if gamma < 1e-13 {
            return Ok(Self::zero_state(m));
        }
        let phi_c = if c0.norm() > 0.0 { c0.arg() } else { 0.0 };
        let zeta = sigma.atan2(c0.norm());
        // passive K_w realising the mode transform (u_S = Uwᵀ) and the
        // two-mode phase layer exp(iμ₋ (n₀ + n₁)) with μ₋ = −φ_c/2
        let kw_rot = kak_phase::realify(&uw.transpose());
        let (_, bw) = principal_passive_phase(&kw_rot)?;
        let mu_minus = -phi_c / 2.0;
        let kphase_rot = {
            let mut s = RMatrix::identity(d, d);
            let (sn, cs) = mu_minus.sin_cos();
            for q in 0..2 {
                s[(2 * q, 2 * q)] = cs;
                s[(2 * q, 2 * q + 1)] = -sn;
                s[(2 * q + 1, 2 * q)] = sn;
                s[(2 * q + 1, 2 * q + 1)] = cs;
            }
            s
        };
        let pieces = vec![
            Piece::Passive {
                rot: self.rot.clone(),
                phase: self.a,
            },
            Piece::PairRot {
                pairs: self.x_pairs(),
                conj: None,
            },
            Piece::Passive {
                rot: kw_rot,
                phase: bw,
            },
            Piece::Passive {
                rot: kphase_rot,
                phase: Cplx::new(1.0, 0.0),
            },
            Piece::PairRot {
                pairs: vec![(0, 2, zeta)],
                conj: None,
            },
        ];
        let parts = canonicalize(m, &pieces)?;
        let scalar = self.omega
            * bw.conj()
            * Cplx::from_polar(gamma, phi_c)
            * parts.scale;
        Ok(GaussianDesc {
            m,
            omega: scalar,
            rot: parts.rot,
            a: parts.phase,
            lambda: parts.lambda,
        })
    }

    /// Project qubit `i` onto |1⟩ via conjugation with the elementary
    /// unitary `exp((π/2) c_{2i} c_{2j'})` for a spare index `2j'`.
    pub fn apply_projector_one(&self, i: usize) -> Result<Self> {
        if i >= self.m {
            return Err(GaussianError::Index(format!(
                "qubit {i} out of range for {} qubits",
                self.m
            )));
        }
        if self.is_zero() {
            return Ok(self.clone());
        }
        let spare = if i == 0 { 2 } else { 0 };
        let half_pi = std::f64::consts::FRAC_PI_2;
        let flipped = self.apply_elementary(-half_pi, 2 * i, spare)?;
        let projected = flipped.apply_projector_zero(i)?;
        if projected.is_zero() {
            return Ok(projected);
        }
        projected.apply_elementary(half_pi, 2 * i, spare)
    }

    /// Phase-exact overlap `⟨x|ψ⟩` for a computational basis bitstring.
    pub fn basis_inner_product(&self, x: &[bool]) -> Result<BasisAmplitude> {
        if x.len() != self.m {
            return Err(GaussianError::Dimension(format!(
                "bitstring length {} does not match {} qubits",
                x.len(),
                self.m
            )));
        }
        let w = x.iter().filter(|&&b| b).count();
        if w % 2 != 0 {
            return Ok(BasisAmplitude::OddParity);
        }
        if self.is_zero() {
            return Ok(BasisAmplitude::Value(Cplx::new(0.0, 0.0)));
        }
        // |x⟩ = c(x̂)|0⟩ with x̂ the even Majorana indices of the set bits
        let xhat: Vec<usize> = x
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| 2 * i)
            .collect();
        let reversal_sign = if (w * (w.saturating_sub(1)) / 2) % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        let slots = vec![
            GenFactor::vacuum_projector(self.m),
            GenFactor::monomial(&xhat),
            GenFactor::pair_rotations(&self.x_pairs(), Some(&self.rot)),
            GenFactor::passive(&self.rot, self.a)?,
        ];
        let tr = parity_trace(self.m, &slots)?;
        Ok(BasisAmplitude::Value(
            self.omega * Cplx::new(reversal_sign, 0.0) * tr,
        ))
    }

    /// Phase-exact overlap `⟨ψ₁|ψ₂⟩`.
    pub fn overlap(&self, other: &GaussianDesc) -> Result<Cplx> {
        if self.m != other.m {
            return Err(GaussianError::Dimension(format!(
                "overlap between {} and {} qubits",
                self.m, other.m
            )));
        }
        if self.is_zero() || other.is_zero() {
            return Ok(Cplx::new(0.0, 0.0));
        }
        // ⟨0| X(−λ₁) · (K_m X(λ₂) K_m†) · K_m |0⟩ with K_m = K₁† K₂
        let km_rot = self.rot.transpose() * &other.rot;
        let km_phase = self.a.conj() * other.a;
        let neg_pairs: Vec<(usize, usize, Real)> = self
            .x_pairs()
            .iter()
            .map(|&(p, q, l)| (p, q, -l))
            .collect();
        let slots = vec![
            GenFactor::vacuum_projector(self.m),
            GenFactor::pair_rotations(&neg_pairs, None),
            GenFactor::pair_rotations(&other.x_pairs(), Some(&km_rot)),
            GenFactor::passive(&km_rot, km_phase)?,
        ];
        let tr = parity_trace(self.m, &slots)?;
        Ok(self.omega.conj() * other.omega * tr)
    }

    /// Tensor product; `self` occupies the lower qubit indices.
    pub fn tensor(&self, other: &GaussianDesc) -> GaussianDesc {
        let m = self.m + other.m;
        let d = 2 * m;
        let mut rot = RMatrix::identity(d, d);
        for i in 0..2 * self.m {
            for j in 0..2 * self.m {
                rot[(i, j)] = self.rot[(i, j)];
            }
        }
        for i in 0..2 * other.m {
            for j in 0..2 * other.m {
                rot[(2 * self.m + i, 2 * self.m + j)] = other.rot[(i, j)];
            }
        }
        let mut lambda = self.lambda.clone();
        lambda.extend_from_slice(&other.lambda);
        GaussianDesc {
            m,
            omega: self.omega * other.omega,
            rot,
            a: self.a * other.a,
            lambda,
        }
    }

    /// Dense expansion in the Jordan–Wigner convention of the oracle.
    pub fn dense_expand(&self) -> Result<DenseState> {
        self.dense_expand_capped(DENSE_CAP)
    }

    pub fn dense_expand_capped(&self, cap: usize) -> Result<DenseState> {
        if self.m > cap {
            return Err(GaussianError::Capacity(self.m, cap));
        }
        let d = 2 * self.m;
        let vac = DenseState::vacuum(self.m).expect("within cap");
        let mut gx = RMatrix::zeros(d, d);
        for &(p, q, l) in &self.x_pairs() {
            gx[(p, q)] = 2.0 * l;
            gx[(q, p)] = -2.0 * l;
        }
        let after_x = dense_oracle::apply_flo_generator(&vac, &gx);
        // a need not be a spin-lift phase of the rotation; split the scalar
        let (_, b0) = principal_passive_phase(&self.rot)?;
        let gk = passive_generator_from(&self.rot, b0)?;
        let after_k = dense_oracle::apply_flo_generator(&after_x, gk.entries());
        Ok(after_k.scale(self.omega * (self.a / b0)))
    }
}

/// Vacuum eigenvalue of a passive generator (re-exported from the KAK layer).
pub fn passive_vacuum_phase(beta: &AntisymMatrix<Real>) -> Result<Cplx> {
    Ok(kak_phase::passive_vacuum_phase(beta)?)
}

/// Basis state `|x⟩` as a Gaussian description (used by tests and the
/// partial-measurement estimator).
pub fn basis_state_desc(x: &[bool]) -> Result<GaussianDesc> {
    let m = x.len();
    let mut g = GaussianDesc::vacuum(m)?;
    let set: Vec<usize> = x
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| i)
        .collect();
    if set.len() % 2 != 0 {
        return Err(GaussianError::Dimension(
            "basis state must have even parity".into(),
        ));
    }
    // c(x̂)|0⟩ applied as elementary π/2 rotations on pairs of set bits
    for pair in set.chunks(2) {
        let (hi, lo) = (pair[1], pair[0]);
        // c_{2lo} c_{2hi} = exp((π/2) c_{2lo} c_{2hi}); apply right factor first
        g = g.apply_elementary(std::f64::consts::FRAC_PI_2, 2 * lo, 2 * hi)?;
    }
    Ok(g)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense_oracle::{apply_flo_generator, apply_majorana};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_antisym(rng: &mut ChaCha8Rng, d: usize, scale: Real) -> AntisymMatrix<Real> {
        let m = RMatrix::from_fn(d, d, |_, _| (rng.random::<f64>() * 2.0 - 1.0) * scale);
        AntisymMatrix::from_exact(m)
    }

    fn random_passive_generator(rng: &mut ChaCha8Rng, n: usize) -> AntisymMatrix<Real> {
        let h = CMatrix::from_fn(n, n, |_, _| {
            Cplx::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let x = (&h - h.adjoint()).unscale(2.0);
        AntisymMatrix::from_exact(kak_phase::realify(&x))
    }

    fn dense_check(g: &GaussianDesc, want: &DenseState, tol: Real) {
        let got = g.dense_expand().unwrap();
        let err = got.max_elementwise_distance(want);
        assert!(err <= tol, "dense mismatch {err:.3e}");
    }

    #[test]
    fn vacuum_examples() {
        let g = GaussianDesc::vacuum(2).unwrap();
        let dense = g.dense_expand().unwrap();
        assert!((dense.amp[0] - Cplx::new(1.0, 0.0)).norm() < 1e-15);
        assert!((g.norm() - 1.0).abs() < 1e-15);
        let m = GaussianDesc::vacuum(4).unwrap().covariance();
        let want = numerics::symplectic_form::<Real>(8);
        assert!((m.entries() - want).abs().max() < 1e-14);
        assert!(GaussianDesc::vacuum(3).is_err());
    }

    #[test]
    fn covariance_matches_dense_two_point() {
        // M_{jk} = −(i/2)⟨[c_j, c_k]⟩ measured on the dense state
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let mut g = GaussianDesc::vacuum(4).unwrap();
        g = g.apply_elementary(0.7, 0, 2).unwrap();
        g = g.apply_elementary(-0.3, 3, 6).unwrap();
        let dense = g.dense_expand().unwrap();
        let m = g.covariance();
        for j in 0..8 {
            for k in 0..8 {
                let mut cj = dense.clone();
                apply_majorana(&mut cj, k);
                apply_majorana(&mut cj, j);
                let mut ck = dense.clone();
                apply_majorana(&mut ck, j);
                apply_majorana(&mut ck, k);
                let comm = dense.inner(&cj) - dense.inner(&ck);
                let want = Cplx::new(0.0, -0.5) * comm;
                assert!(
                    (m.entries()[(j, k)] - want.re).abs() < 1e-9,
                    "covariance ({j},{k})"
                );
            }
        }
        assert!(m.purity_residual() < 1e-9);
        let _ = rng.random::<f64>();
    }

    #[test]
    fn apply_passive_is_exact_algebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(82);
        let g = GaussianDesc::vacuum(4).unwrap();
        let beta = random_passive_generator(&mut rng, 4);
        let s = numerics::so_exp(&beta).unwrap();
        let b = kak_phase::passive_vacuum_phase(&beta).unwrap();
        let g2 = g.apply_passive(s.entries(), b).unwrap();
        assert_eq!(g2.lambdas(), g.lambdas());
        assert!((g2.omega() - g.omega()).norm() < 1e-15);
        // dense agreement
        let dense = apply_flo_generator(&g.dense_expand().unwrap(), beta.entries());
        dense_check(&g2, &dense, 1e-10);
        // identity passive leaves Γ untouched
        let g3 = g
            .apply_passive(&RMatrix::identity(8, 8), Cplx::new(1.0, 0.0))
            .unwrap();
        assert!((g3.vacuum_eigenvalue() - g.vacuum_eigenvalue()).norm() < 1e-15);
    }

    #[test]
    fn two_passives_merge_densely() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let g = GaussianDesc::vacuum(4).unwrap();
        let b1 = random_passive_generator(&mut rng, 4);
        let b2 = random_passive_generator(&mut rng, 4);
        let xi = kak_phase::merge_passive(&b1, &b2).unwrap();
        let via_merge = g.apply_passive_generator(&xi).unwrap();
        let via_two = g
            .apply_passive_generator(&b2)
            .unwrap()
            .apply_passive_generator(&b1)
            .unwrap();
        let d1 = via_merge.dense_expand().unwrap();
        let d2 = via_two.dense_expand().unwrap();
        assert!(d1.max_elementwise_distance(&d2) < 1e-10);
    }

    #[test]
    fn elementary_mu_zero_is_identity() {
        let g = GaussianDesc::vacuum(4).unwrap();
        let g2 = g.apply_elementary(0.0, 0, 2).unwrap();
        let dense = g.dense_expand().unwrap();
        dense_check(&g2, &dense, 1e-10);
    }

    #[test]
    fn elementary_quarter_pi_on_vacuum() {
        let g = GaussianDesc::vacuum(4)
            .unwrap()
            .apply_elementary(std::f64::consts::FRAC_PI_4, 0, 2)
            .unwrap();
        let dense = g.dense_expand().unwrap();
        let c = std::f64::consts::FRAC_PI_4.cos();
        assert!((dense.amp[0b0000] - Cplx::new(c, 0.0)).norm() < 1e-10);
        assert!((dense.amp[0b0011] - Cplx::new(c, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn elementary_catches_global_sign() {
        // exp((π/2) c₀ c₂) twice = exp(π c₀ c₂) = −I on the vacuum
        let g = GaussianDesc::vacuum(4).unwrap();
        let half = g
            .apply_elementary(std::f64::consts::FRAC_PI_2, 0, 2)
            .unwrap();
        let full = half
            .apply_elementary(std::f64::consts::FRAC_PI_2, 0, 2)
            .unwrap();
        let dense = full.dense_expand().unwrap();
        assert!((dense.amp[0] - Cplx::new(-1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn random_elementary_sequences_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(84);
        for m in [4usize, 6] {
            let mut g = GaussianDesc::vacuum(m).unwrap();
            let mut dense = g.dense_expand().unwrap();
            for _ in 0..12 {
                let j = rng.random_range(0..2 * m);
                let mut k = rng.random_range(0..2 * m);
                while k == j {
                    k = rng.random_range(0..2 * m);
                }
                let mu = rng.random::<f64>() * 4.0 - 2.0;
                g = g.apply_elementary(mu, j, k).unwrap();
                let mut gen = RMatrix::zeros(2 * m, 2 * m);
                gen[(j, k)] = 2.0 * mu;
                gen[(k, j)] = -2.0 * mu;
                dense = apply_flo_generator(&dense, &gen);
                let expanded = g.dense_expand().unwrap();
                let err = expanded.max_elementwise_distance(&dense);
                assert!(err < 1e-8, "m={m}: drift {err:.3e}");
            }
        }
    }

    #[test]
    fn general_flo_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(85);
        for trial in 0..6 {
            let mut g = GaussianDesc::vacuum(4).unwrap();
            // start from a non-trivial state
            g = g.apply_elementary(0.4, 1, 6).unwrap();
            let alpha = random_antisym(&mut rng, 8, 1.0);
            let g2 = g.apply_general(&alpha).unwrap();
            let dense = apply_flo_generator(&g.dense_expand().unwrap(), alpha.entries());
            let err = g2.dense_expand().unwrap().max_elementwise_distance(&dense);
            assert!(err < 1e-8, "trial {trial}: general mismatch {err:.3e}");
        }
    }

    #[test]
    fn general_flo_passive_input_agrees_with_passive_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(86);
        let g = GaussianDesc::vacuum(4)
            .unwrap()
            .apply_elementary(0.9, 0, 5)
            .unwrap();
        let beta = random_passive_generator(&mut rng, 4);
        let via_general = g.apply_general(&beta).unwrap();
        let via_passive = g.apply_passive_generator(&beta).unwrap();
        let err = via_general
            .dense_expand()
            .unwrap()
            .max_elementwise_distance(&via_passive.dense_expand().unwrap());
        assert!(err < 1e-9, "cross-path mismatch {err:.3e}");
    }

    #[test]
    fn projector_on_vacuum_is_identity() {
        let g = GaussianDesc::vacuum(4).unwrap();
        let p = g.apply_projector_zero(1).unwrap();
        assert!((p.norm() - 1.0).abs() < 1e-10);
        dense_check(&p, &g.dense_expand().unwrap(), 1e-9);
    }

    #[test]
    fn projector_on_bell_pair_halves_norm() {
        let g = GaussianDesc::vacuum(4)
            .unwrap()
            .apply_elementary(std::f64::consts::FRAC_PI_4, 0, 2)
            .unwrap();
        let p = g.apply_projector_zero(0).unwrap();
        assert!((p.norm().powi(2) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn projector_matches_dense_and_is_complete() {
        let mut rng = ChaCha8Rng::seed_from_u64(87);
        for trial in 0..4 {
            let mut g = GaussianDesc::vacuum(4).unwrap();
            for _ in 0..3 {
                let j = rng.random_range(0..8);
                let mut k = rng.random_range(0..8);
                while k == j {
                    k = rng.random_range(0..8);
                }
                g = g
                    .apply_elementary(rng.random::<f64>() * 2.0 - 1.0, j, k)
                    .unwrap();
            }
            let qubit = rng.random_range(0..4);
            let p0 = g.apply_projector_zero(qubit).unwrap();
            let p1 = g.apply_projector_one(qubit).unwrap();
            // dense reference for a_i a_i†
            let dense = g.dense_expand().unwrap();
            let mut p0_dense = dense.clone();
            for b in 0..p0_dense.amp.len() {
                if (b >> qubit) & 1 == 1 {
                    p0_dense.amp[b] = Cplx::new(0.0, 0.0);
                }
            }
            let err0 = p0.dense_expand().unwrap().max_elementwise_distance(&p0_dense);
            assert!(err0 < 1e-8, "trial {trial}: P0 mismatch {err0:.3e}");
            let mut p1_dense = dense.clone();
            for b in 0..p1_dense.amp.len() {
                if (b >> qubit) & 1 == 0 {
                    p1_dense.amp[b] = Cplx::new(0.0, 0.0);
                }
            }
            let err1 = p1.dense_expand().unwrap().max_elementwise_distance(&p1_dense);
            assert!(err1 < 1e-8, "trial {trial}: P1 mismatch {err1:.3e}");
            let total = p0.norm().powi(2) + p1.norm().powi(2);
            assert!((total - g.norm().powi(2)).abs() < 1e-9);
        }
    }

    #[test]
    fn projector_annihilates_excited_vacuum() {
        // projecting qubit 0 of |11...⟩-type state to 0 annihilates it
        let g = GaussianDesc::vacuum(4)
            .unwrap()
            .apply_elementary(std::f64::consts::FRAC_PI_2, 0, 2)
            .unwrap(); // |1100⟩ up to sign
        let p = g.apply_projector_zero(0).unwrap();
        assert!(p.is_zero());
        let p1 = g.apply_projector_one(0).unwrap();
        assert!((p1.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn basis_inner_product_examples() {
        let g = GaussianDesc::vacuum(4).unwrap();
        let amp = g.basis_inner_product(&[false; 4]).unwrap().value();
        assert!((amp - Cplx::new(1.0, 0.0)).norm() < 1e-12);
        // ⟨0…0|Γ⟩ after a passive = a·ω
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        let beta = random_passive_generator(&mut rng, 4);
        let g2 = g.apply_passive_generator(&beta).unwrap();
        let want = g2.vacuum_eigenvalue() * g2.omega();
        let got = g2.basis_inner_product(&[false; 4]).unwrap().value();
        assert!((got - want).norm() < 1e-10);
        // odd parity flagged
        assert_eq!(
            g.basis_inner_product(&[true, false, false, false]).unwrap(),
            BasisAmplitude::OddParity
        );
    }

    #[test]
    fn basis_inner_product_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        let mut g = GaussianDesc::vacuum(4).unwrap();
        for _ in 0..4 {
            let j = rng.random_range(0..8);
            let mut k = rng.random_range(0..8);
            while k == j {
                k = rng.random_range(0..8);
            }
            g = g
                .apply_elementary(rng.random::<f64>() * 3.0 - 1.5, j, k)
                .unwrap();
        }
        let dense = g.dense_expand().unwrap();
        for idx in 0..16usize {
            let bits: Vec<bool> = (0..4).map(|i| (idx >> i) & 1 == 1).collect();
            let got = g.basis_inner_product(&bits).unwrap().value();
            let want = dense.amp[idx];
            assert!(
                (got - want).norm() < 1e-9,
                "amplitude {idx:04b}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn basis_state_desc_matches_dense() {
        let bits = [true, false, true, false];
        let g = basis_state_desc(&bits).unwrap();
        let want = DenseState::basis_state(4, &bits).unwrap();
        dense_check(&g, &want, 1e-10);
    }

    #[test]
    fn overlap_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let g = GaussianDesc::vacuum(4).unwrap();
        // ⟨Γ|Γ⟩ = |ω|²
        let g1 = g.apply_elementary(0.3, 0, 5).unwrap().scaled(Cplx::new(0.0, 0.7));
        let self_ov = g1.overlap(&g1).unwrap();
        assert!((self_ov - Cplx::new(0.49, 0.0)).norm() < 1e-10);
        // overlap of vacuum with exp(μ c₀c₂) vacuum = cos μ
        let mu = 0.77;
        let rotated = g.apply_elementary(mu, 0, 2).unwrap();
        let ov = g.overlap(&rotated).unwrap();
        assert!((ov - Cplx::new(mu.cos(), 0.0)).norm() < 1e-10);
        // Cauchy–Schwarz on random states
        let mut g2 = g.clone();
        for _ in 0..3 {
            let j = rng.random_range(0..8);
            let mut k = rng.random_range(0..8);
            while k == j {
                k = rng.random_range(0..8);
            }
            g2 = g2
                .apply_elementary(rng.random::<f64>() * 2.0 - 1.0, j, k)
                .unwrap();
        }
        let ov = g1.overlap(&g2).unwrap();
        assert!(ov.norm() <= g1.norm() * g2.norm() + 1e-12);
    }

    #[test]
    fn overlap_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        for trial in 0..4 {
            let mk = |rng: &mut ChaCha8Rng| {
                let mut g = GaussianDesc::vacuum(4).unwrap();
                for _ in 0..4 {
                    let j = rng.random_range(0..8);
                    let mut k = rng.random_range(0..8);
                    while k == j {
                        k = rng.random_range(0..8);
                    }
                    g = g
                        .apply_elementary(rng.random::<f64>() * 3.0 - 1.5, j, k)
                        .unwrap();
                }
                g
            };
            let g1 = mk(&mut rng);
            let g2 = mk(&mut rng);
            let got = g1.overlap(&g2).unwrap();
            let want = g1
                .dense_expand()
                .unwrap()
                .inner(&g2.dense_expand().unwrap());
            assert!(
                (got - want).norm() < 1e-9,
                "trial {trial}: overlap {got} vs dense {want}"
            );
        }
    }

    #[test]
    fn basis_inner_product_equals_overlap_with_basis_desc() {
        let mut rng = ChaCha8Rng::seed_from_u64(92);
        let mut g = GaussianDesc::vacuum(4).unwrap();
        for _ in 0..3 {
            let j = rng.random_range(0..8);
            let mut k = rng.random_range(0..8);
            while k == j {
                k = rng.random_range(0..8);
            }
            g = g
                .apply_elementary(rng.random::<f64>() * 2.0 - 1.0, j, k)
                .unwrap();
        }
        let bits = [true, true, false, false];
        let via_basis = g.basis_inner_product(&bits).unwrap().value();
        let basis = basis_state_desc(&bits).unwrap();
        let via_overlap = basis.overlap(&g).unwrap();
        assert!((via_basis - via_overlap).norm() < 1e-10);
    }

    #[test]
    fn covariance_gauge_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(93);
        let mut g = GaussianDesc::vacuum(4).unwrap();
        for _ in 0..3 {
            let j = rng.random_range(0..8);
            let mut k = rng.random_range(0..8);
            while k == j {
                k = rng.random_range(0..8);
            }
            g = g
                .apply_elementary(rng.random::<f64>() * 2.0 - 1.0, j, k)
                .unwrap();
        }
        let m1 = g.covariance();
        let g2 = g.recanonicalize().unwrap();
        let m2 = g2.covariance();
        assert!((m1.entries() - m2.entries()).abs().max() < 1e-9);
        // the state itself is unchanged including phase
        let err = g
            .dense_expand()
            .unwrap()
            .max_elementwise_distance(&g2.dense_expand().unwrap());
        assert!(err < 1e-9);
    }

    #[test]
    fn norm_bookkeeping() {
        let mut rng = ChaCha8Rng::seed_from_u64(94);
        let mut g = GaussianDesc::vacuum(6).unwrap();
        for _ in 0..6 {
            let j = rng.random_range(0..12);
            let mut k = rng.random_range(0..12);
            while k == j {
                k = rng.random_range(0..12);
            }
            g = g
                .apply_elementary(rng.random::<f64>() * 2.0 - 1.0, j, k)
                .unwrap();
            assert!((g.norm() - 1.0).abs() < 1e-10, "unitary changed the norm");
        }
        let p = g.apply_projector_zero(2).unwrap();
        assert!(p.norm() <= g.norm() + 1e-12);
    }

    #[test]
    fn tensor_matches_dense() {
        let g1 = GaussianDesc::vacuum(2)
            .unwrap()
            .apply_elementary(0.4, 0, 2)
            .unwrap();
        let g2 = GaussianDesc::vacuum(2)
            .unwrap()
            .apply_elementary(-0.9, 1, 2)
            .unwrap();
        let t = g1.tensor(&g2);
        let want = g1
            .dense_expand()
            .unwrap()
            .tensor(&g2.dense_expand().unwrap());
        dense_check(&t, &want, 1e-10);
    }
}
