//! Born-rule probability estimation for gadgetized circuits.
//!
//! Algorithm 1 (all qubits measured): sample branch assignments `y ~ P`,
//! average `√ξ* α_y` and square the mean. Algorithm 2 (measured prefix):
//! build the branch-projected states, restrict them to the unmeasured
//! register, and estimate the squared norm of their average by a
//! median-of-means over random FLO basis overlaps.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::circuit::{self, Circuit, CompiledGate, GadgetizedProgram, OutputSpec};
use crate::gaussian_state::{basis_state_desc, GaussianDesc, GaussianError};
use crate::kak_phase::{parity_trace, GenFactor, KakError};
use crate::magic::{self, MagicAngles};
use crate::numerics::{self, AntisymMatrix, NumericsError};
use crate::{Cplx, RMatrix, Real};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("parameter error: {0}")]
    Param(String),
    #[error("internal invariant breached: {0}")]
    Internal(String),
    #[error(transparent)]
    Compile(#[from] circuit::CompileError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error(transparent)]
    Kak(#[from] KakError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Dense(#[from] crate::dense_oracle::DenseError),
}

pub type Result<T> = std::result::Result<T, EstimatorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMode {
    AllQubits,
    Partial,
}

/// Sample budget for a run, computed from the spec'd tail bounds.
#[derive(Debug, Clone)]
pub struct SamplePlan {
    pub s: usize,
    pub l: usize,
    pub big_l: usize,
    pub epsilon: Real,
    pub delta: Real,
    pub p_assumed: Real,
    pub xi_star: Real,
}

/// Minimal integer sample counts satisfying the planning inequalities.
pub fn plan_samples(
    angles: &MagicAngles,
    epsilon: Real,
    delta: Real,
    mode: EstimateMode,
    p_assumed: Real,
    n_unmeasured: usize,
) -> Result<SamplePlan> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(EstimatorError::Param(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(EstimatorError::Param(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    if !(p_assumed > 0.0 && p_assumed <= 1.0) {
        return Err(EstimatorError::Param(format!(
            "p_assumed must lie in (0,1], got {p_assumed}"
        )));
    }
    let xi = magic::xi_star(angles);
    let e = std::f64::consts::E;
    let plan = match mode {
        EstimateMode::AllQubits => {
            let gap = ((p_assumed + epsilon).sqrt() - p_assumed.sqrt()).powi(2);
            let s = (2.0 * (xi.sqrt() + p_assumed.sqrt()).powi(2) / gap
                * (2.0 * e * e / delta).ln())
            .ceil() as usize;
            SamplePlan {
                s: s.max(1),
                l: 0,
                big_l: 0,
                epsilon,
                delta,
                p_assumed,
                xi_star: xi,
            }
        }
        EstimateMode::Partial => {
            let gap = ((p_assumed + epsilon / 2.0).sqrt() - p_assumed.sqrt()).powi(2);
            let s = (2.0 * (xi.sqrt() + p_assumed.sqrt()).powi(2) / gap
                * (4.0 * e / delta).ln())
            .ceil() as usize;
            let big_l = ((2.0 / delta).ln().ceil() as usize).max(1);
            let l = (32.0 * e * e * (n_unmeasured.max(1) as Real).sqrt() / (epsilon * epsilon))
                .ceil() as usize;
            SamplePlan {
                s: s.max(1),
                l: l.max(1),
                big_l,
                epsilon,
                delta,
                p_assumed,
                xi_star: xi,
            }
        }
    };
    Ok(plan)
}

/// Result of an estimation run, carrying everything needed to reproduce it.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub p_hat: Real,
    pub p_hat_raw: Real,
    pub s_used: usize,
    pub l_used: usize,
    pub big_l_used: usize,
    pub xi_star: Real,
    pub max_abs_alpha: Real,
    pub seed: u64,
    pub wall_time: Real,
    pub epsilon: Real,
    pub delta: Real,
    pub p_assumed: Real,
}

/// Evolve a compiled program from the physical vacuum through the engine.
pub fn evolve_program(p: &GadgetizedProgram) -> Result<GaussianDesc> {
    let mut g = GaussianDesc::vacuum(p.total_qubits)?;
    for gate in &p.gates {
        g = match gate {
            CompiledGate::Elementary { mu, j, k } => g.apply_elementary(*mu, *j, *k)?,
            CompiledGate::Passive { rot, phase } => g.apply_passive(rot, *phase)?,
            CompiledGate::General { alpha } => g.apply_general(alpha)?,
            CompiledGate::Scale { z } => g.scaled(*z),
        };
    }
    Ok(g)
}

/// The program bra for branch bits `y`: branch states on the projection
/// tuples, |0⟩ everywhere else.
pub fn program_bra_desc(p: &GadgetizedProgram, y: &[bool]) -> Result<GaussianDesc> {
    let mut g = GaussianDesc::vacuum(p.total_qubits)?;
    for (jj, block) in p.projection_blocks.iter().enumerate() {
        let theta = p.magic_angles[jj];
        let minus = y[jj];
        let zeta_phase = theta / 2.0;
        g = magic::attach_phase_pair(g, block[0], block[1], zeta_phase, minus)?;
        g = magic::attach_phase_pair(g, block[2], block[3], zeta_phase, minus)?;
        g = g.scaled(Cplx::from_polar(1.0, -theta / 4.0));
    }
    Ok(g)
}

/// `α_y = 4^k i^{−|y|} ⟨0…| ⟨ỹ| ψ⟩`, asserting the norm bound |α_y| ≤ 1.
pub fn alpha_y(p: &GadgetizedProgram, psi: &GaussianDesc, y: &[bool]) -> Result<Cplx> {
    let bra = program_bra_desc(p, y)?;
    let overlap = bra.overlap(psi)?;
    let ones = y.iter().filter(|&&b| b).count();
    let val = overlap
        * Cplx::new(4.0f64.powi(p.scale_exponent as i32), 0.0)
        * (-Cplx::i()).powu((ones % 4) as u32);
    if val.norm() > 1.0 + 1e-6 {
        return Err(EstimatorError::Internal(format!(
            "|α_y| = {} exceeds 1",
            val.norm()
        )));
    }
    Ok(val)
}

fn tally_branches(
    angles: &MagicAngles,
    s: usize,
    rng: &mut ChaCha8Rng,
) -> BTreeMap<Vec<bool>, usize> {
    let mut counts: BTreeMap<Vec<bool>, usize> = BTreeMap::new();
    for _ in 0..s {
        let sample = magic::sample_branch(angles, rng);
        *counts.entry(sample.y).or_insert(0) += 1;
    }
    counts
}

/// Options shared by the estimation entry points.
#[derive(Debug, Clone)]
pub struct EstimateOptions {
    pub epsilon: Real,
    pub delta: Real,
    pub seed: u64,
    pub p_assumed: Real,
    /// run a coarse pass first to bound p, then re-plan
    pub two_stage: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            epsilon: 0.05,
            delta: 0.1,
            seed: 0,
            p_assumed: 1.0,
            two_stage: false,
        }
    }
}

/// Algorithm 1: estimate `p = |⟨b|U|a⟩|²` with every qubit measured.
pub fn estimate_all_qubits(c: &Circuit, opts: &EstimateOptions) -> Result<EstimateResult> {
    if !matches!(c.output, OutputSpec::Full(_)) {
        return Err(EstimatorError::Param(
            "estimate_all_qubits needs a fully measured output".into(),
        ));
    }
    let start = Instant::now();
    let program = circuit::gadgetize(c)?;
    let angles = MagicAngles::new(program.magic_angles.iter().copied());
    let psi = evolve_program(&program)?;
    let k = program.scale_exponent;

    let mut p_assumed = opts.p_assumed;
    if opts.two_stage && k > 0 {
        let coarse = run_all_qubits_core(
            &program,
            &angles,
            &psi,
            &plan_samples(&angles, 0.25, opts.delta / 2.0, EstimateMode::AllQubits, 1.0, 0)?,
            opts.seed ^ 0x9e3779b97f4a7c15,
        )?;
        p_assumed = (coarse.0 + 0.25).min(1.0).max(1e-6);
    }
    let delta_eff = if opts.two_stage && k > 0 {
        opts.delta / 2.0
    } else {
        opts.delta
    };
    let plan = plan_samples(
        &angles,
        opts.epsilon,
        delta_eff,
        EstimateMode::AllQubits,
        p_assumed,
        0,
    )?;
    let (p_raw, s_used, max_alpha) =
        run_all_qubits_core(&program, &angles, &psi, &plan, opts.seed)?;
    Ok(EstimateResult {
        p_hat: p_raw.clamp(0.0, 1.0),
        p_hat_raw: p_raw,
        s_used,
        l_used: 0,
        big_l_used: 0,
        xi_star: plan.xi_star,
        max_abs_alpha: max_alpha,
        seed: opts.seed,
        wall_time: start.elapsed().as_secs_f64(),
        epsilon: opts.epsilon,
        delta: opts.delta,
        p_assumed,
    })
}

fn run_all_qubits_core(
    program: &GadgetizedProgram,
    angles: &MagicAngles,
    psi: &GaussianDesc,
    plan: &SamplePlan,
    seed: u64,
) -> Result<(Real, usize, Real)> {
    let k = program.scale_exponent;
    if k == 0 {
        let alpha = alpha_y(program, psi, &[])?;
        return Ok((alpha.norm_sqr(), 1, alpha.norm()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = tally_branches(angles, plan.s, &mut rng);
    let sqrt_xi = plan.xi_star.sqrt();
    let mut mean = Cplx::new(0.0, 0.0);
    let mut max_alpha: Real = 0.0;
    for (y, count) in &counts {
        let alpha = alpha_y(program, psi, y)?;
        max_alpha = max_alpha.max(alpha.norm());
        let sign = magic::branch_weight(angles, y).signum();
        mean += alpha * Cplx::new(sqrt_xi * sign * (*count as Real) / (plan.s as Real), 0.0);
    }
    Ok((mean.norm_sqr(), plan.s, max_alpha))
}

/// Exact probability by exhaustive branch enumeration (test oracle for the
/// estimator's unbiasedness; exponential in k).
pub fn exhaustive_probability(c: &Circuit) -> Result<Real> {
    let program = circuit::gadgetize(c)?;
    let angles = MagicAngles::new(program.magic_angles.iter().copied());
    let psi = evolve_program(&program)?;
    let k = program.scale_exponent;
    let mut total = Cplx::new(0.0, 0.0);
    for bits in 0..(1usize << k) {
        let y: Vec<bool> = (0..k).map(|j| (bits >> j) & 1 == 1).collect();
        let alpha = alpha_y(&program, &psi, &y)?;
        // p = |Σ_y t(y) α_y|² with the signed weight t
        let t = magic::branch_weight(&angles, &y);
        total += alpha * Cplx::new(t, 0.0);
    }
    Ok(total.norm_sqr())
}

// ---------------------------------------------------------------------------
// algorithm 2: partial measurement
// ---------------------------------------------------------------------------

/// Random FLO basis bra `U|x⟩` with `x` a uniform even-parity bitstring and
/// the rotation of `U` a uniformly random even permutation of the Majorana
/// indices. Odd-parity draws of the underlying uniform `x` have identically
/// vanishing overlap with even-parity states, so the norm estimator samples
/// a uniform `x` and only builds the bra on even parity; see
/// [`sample_norm_overlap`].
pub fn random_flo_basis_bra(n_unmeasured: usize, rng: &mut ChaCha8Rng) -> Result<GaussianDesc> {
    let m = n_unmeasured;
    // uniform even-parity bitstring
    let mut bits: Vec<bool> = (0..m).map(|_| rng.random::<bool>()).collect();
    if bits.iter().filter(|&&b| b).count() % 2 != 0 {
        let flip = rng.random_range(0..m);
        bits[flip] = !bits[flip];
    }
    let base = basis_state_desc(&bits)?;
    // uniform permutation of 2m indices, forced even
    let d = 2 * m;
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(rng);
    if permutation_parity(&perm) % 2 == 1 {
        perm.swap(0, 1);
    }
    let mut pmat = RMatrix::zeros(d, d);
    for (i, &p) in perm.iter().enumerate() {
        pmat[(p, i)] = 1.0;
    }
    let gen = numerics::so_log(&numerics::SOMatrix::new(pmat)?)?;
    Ok(base.apply_general(&gen)?)
}

/// One draw of `X = 2^{n'} |⟨θ|Ψ⟩|²`: `x` is uniform over all bitstrings
/// (odd parity gives an exact zero against the even-parity pieces).
///
/// The bra `⟨x|U†` is expanded into slot factors directly — the lift of a
/// Majorana-index permutation is a product of paired-transposition factors
/// `(c_a − c_b)(c_c − c_d)/2`, each a rotated two-index monomial — so every
/// sample costs one Pfaffian per piece and no decompositions.
pub fn sample_norm_overlap(
    n_prime: usize,
    pieces: &[GaussianDesc],
    rng: &mut ChaCha8Rng,
) -> Result<Real> {
    let bits: Vec<bool> = (0..n_prime).map(|_| rng.random::<bool>()).collect();
    if bits.iter().filter(|&&b| b).count() % 2 != 0 {
        return Ok(0.0);
    }
    let d = 2 * n_prime;
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(rng);
    if permutation_parity(&perm) % 2 == 1 {
        perm.swap(0, 1);
    }
    // decompose the permutation map i ↦ perm[i] into transpositions
    let mut transpositions: Vec<(usize, usize)> = Vec::new();
    let mut cur: Vec<usize> = (0..d).collect(); // cur[i] = where i currently sits
    let mut pos: Vec<usize> = (0..d).collect();
    for i in 0..d {
        let want = perm[i];
        if cur[i] != want {
            let j = pos[want];
            transpositions.push((i, j));
            let (a, b) = (cur[i], cur[j]);
            cur.swap(i, j);
            pos[a] = j;
            pos[b] = i;
        }
    }
    debug_assert!(transpositions.len() % 2 == 0);
    // lift each transposition as exp((π/4) c_a c_b), whose rotation is the
    // swap with a sign on one leg; the sign dressing leaves both moments of
    // the estimator intact. U = ∏ exp((π/4) c c) in order, so U† is the
    // reversed product at angle −π/4.
    let perm_slots: Vec<GenFactor> = transpositions
        .iter()
        .rev()
        .map(|&(a, b)| {
            GenFactor::pair_rotations(&[(a.min(b), a.max(b), -std::f64::consts::FRAC_PI_4)], None)
        })
        .collect();
    // monomial ⟨x| = ⟨0| c(x̂)† with the reversal sign
    let xhat: Vec<usize> = bits
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| 2 * i)
        .collect();
    let w = xhat.len();
    let rev_sign = if (w * w.saturating_sub(1) / 2) % 2 == 0 {
        1.0
    } else {
        -1.0
    };
    let mut acc = Cplx::new(0.0, 0.0);
    for piece in pieces {
        let g_pairs: Vec<(usize, usize, Real)> = piece
            .lambdas()
            .iter()
            .enumerate()
            .map(|(j, &l)| (4 * j, 4 * j + 2, l))
            .collect();
        let mut slots = Vec::with_capacity(3 + perm_slots.len());
        slots.push(GenFactor::vacuum_projector(n_prime));
        slots.push(GenFactor::monomial(&xhat));
        slots.extend(perm_slots.iter().cloned());
        slots.push(GenFactor::pair_rotations(&g_pairs, Some(piece.rotation())));
        let tr = parity_trace(n_prime, &slots)?;
        acc += piece.omega() * piece.vacuum_eigenvalue() * tr * Cplx::new(rev_sign, 0.0);
    }
    Ok((1u64 << n_prime) as Real * acc.norm_sqr())
}

fn permutation_parity(perm: &[usize]) -> usize {
    let mut seen = vec![false; perm.len()];
    let mut parity = 0;
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        let mut i = start;
        let mut len = 0;
        while !seen[i] {
            seen[i] = true;
            i = perm[i];
            len += 1;
        }
        parity += len - 1;
    }
    parity
}

/// Restriction of a state of the form `|χ⟩_kept ⊗ |0⟩_rest` to the kept
/// qubits, phase-exact: the candidate is rebuilt from the sub-covariance and
/// anchored by one overlap against the full state.
pub fn restrict_to_qubits(g: &GaussianDesc, keep: &[usize]) -> Result<GaussianDesc> {
    let np = keep.len();
    if np == 0 || np % 2 != 0 {
        return Err(EstimatorError::Param(format!(
            "restriction needs an even positive qubit count, got {np}"
        )));
    }
    if g.is_zero() {
        return Ok(GaussianDesc::vacuum(np)?.scaled(Cplx::new(0.0, 0.0)));
    }
    let norm = g.norm();
    // sub-covariance on the kept Majorana indices (ω-independent)
    let full_cov = g.covariance();
    let mut keep_maj = Vec::with_capacity(2 * np);
    for &q in keep {
        keep_maj.push(2 * q);
        keep_maj.push(2 * q + 1);
    }
    let mut sub = RMatrix::zeros(2 * np, 2 * np);
    for (i, &a) in keep_maj.iter().enumerate() {
        for (jj, &b) in keep_maj.iter().enumerate() {
            sub[(i, jj)] = full_cov.entries()[(a, b)];
        }
    }
    // purity check: the kept block must itself be a pure covariance
    let purity = (&sub * sub.transpose() - RMatrix::identity(2 * np, 2 * np))
        .abs()
        .max();
    if purity > 1e-7 {
        return Err(EstimatorError::Internal(format!(
            "restriction target is entangled with the dropped qubits (purity residual {purity:.3e})"
        )));
    }
    // candidate with the right covariance: rot·M_vac·rotᵀ = sub for rot = Qᵀ
    let form = numerics::antisym_block_diag(&AntisymMatrix::new(sub)?)?;
    let rot0 = form.rotation.entries().transpose();
    let gen = numerics::so_log(&numerics::SOMatrix::from_exact(rot0))?;
    let candidate = GaussianDesc::vacuum(np)?.apply_general(&gen)?;
    // phase anchor: γ = ⟨candidate_embedded | g⟩ via mapped slot factors
    let gamma = overlap_embedded(&candidate, keep, g)?;
    if (gamma.norm() - norm).abs() > 1e-6 * norm.max(1e-9) {
        return Err(EstimatorError::Internal(format!(
            "restriction anchor magnitude {} disagrees with the state norm {}",
            gamma.norm(),
            norm
        )));
    }
    Ok(candidate.scaled(gamma))
}

/// `⟨cand ⊗ 0 | g⟩` where the candidate occupies the (sorted) qubit
/// positions `keep` of `g`'s register.
fn overlap_embedded(cand: &GaussianDesc, keep: &[usize], g: &GaussianDesc) -> Result<Cplx> {
    let total = g.num_qubits();
    let d = 2 * total;
    let maj = |local: usize| 2 * keep[local / 2] + (local % 2);
    // embedded passive rotation of the candidate
    let mut kc = RMatrix::identity(d, d);
    let cr = cand.rotation();
    for i in 0..cr.nrows() {
        for jj in 0..cr.ncols() {
            let v = cr[(i, jj)];
            if v != 0.0 {
                kc[(maj(i), maj(jj))] = v;
            }
        }
    }
    let neg_pairs: Vec<(usize, usize, Real)> = cand
        .lambdas()
        .iter()
        .enumerate()
        .map(|(j, &l)| (maj(4 * j), maj(4 * j + 2), -l))
        .collect();
    let km_rot = kc.transpose() * g.rotation();
    let km_phase = cand.vacuum_eigenvalue().conj() * g.vacuum_eigenvalue();
    let g_pairs: Vec<(usize, usize, Real)> = g
        .lambdas()
        .iter()
        .enumerate()
        .map(|(j, &l)| (4 * j, 4 * j + 2, l))
        .collect();
    let slots = vec![
        GenFactor::vacuum_projector(total),
        GenFactor::pair_rotations(&neg_pairs, None),
        GenFactor::pair_rotations(&g_pairs, Some(&km_rot)),
        GenFactor::passive(&km_rot, km_phase)?,
    ];
    let tr = parity_trace(total, &slots)?;
    Ok(cand.omega().conj() * g.omega() * tr)
}

/// Algorithm 2: estimate `p` when only the first `w` qubits are measured.
pub fn estimate_partial(c: &Circuit, opts: &EstimateOptions) -> Result<EstimateResult> {
    let OutputSpec::Masked { measured, total } = &c.output else {
        return Err(EstimatorError::Param(
            "estimate_partial needs a masked output".into(),
        ));
    };
    let start = Instant::now();
    let w = measured.len();
    let program = circuit::gadgetize(c)?;
    let angles = MagicAngles::new(program.magic_angles.iter().copied());
    let k = program.scale_exponent;
    // unmeasured logical qubits, including the parity pad when present
    let keep: Vec<usize> = (w..program.n_padded)
        .map(|q| program.live_positions[q])
        .collect();
    let mut keep_sorted = keep.clone();
    keep_sorted.sort_unstable();
    let n_prime = keep_sorted.len();
    let _ = total;

    let plan = plan_samples(
        &angles,
        opts.epsilon,
        opts.delta,
        EstimateMode::Partial,
        opts.p_assumed,
        n_prime,
    )?;
    let psi = evolve_program(&program)?;

    // branch tally
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (counts, s_used) = if k == 0 {
        let mut one = BTreeMap::new();
        one.insert(Vec::new(), 1usize);
        (one, 1usize)
    } else {
        (tally_branches(&angles, plan.s, &mut rng), plan.s)
    };

    // distinct projected, restricted states with folded weights
    let sqrt_xi = plan.xi_star.sqrt();
    let mut pieces: Vec<GaussianDesc> = Vec::new();
    let mut max_alpha: Real = 0.0;
    for (y, count) in &counts {
        let mut work = psi.clone();
        // undo each branch preparation and project its block to zero
        for (jj, block) in program.projection_blocks.iter().enumerate() {
            let theta = program.magic_angles[jj];
            let minus = y[jj];
            work = magic::detach_phase_pair(work, block[0], block[1], theta / 2.0, minus)?;
            work = magic::detach_phase_pair(work, block[2], block[3], theta / 2.0, minus)?;
            work = work.scaled(Cplx::from_polar(1.0, theta / 4.0));
            for &pos in block {
                work = work.apply_projector_zero(pos)?;
                if work.is_zero() {
                    break;
                }
            }
            if work.is_zero() {
                break;
            }
        }
        // project the measured (absorbed to zero) positions
        if !work.is_zero() {
            for q in 0..w {
                work = work.apply_projector_zero(program.live_positions[q])?;
                if work.is_zero() {
                    break;
                }
            }
        }
        let ones = y.iter().filter(|&&b| b).count();
        let sign = if y.is_empty() {
            1.0
        } else {
            magic::branch_weight(&angles, y).signum()
        };
        let coeff = Cplx::new(
            4.0f64.powi(k as i32) * sqrt_xi * sign * (*count as Real) / (s_used as Real),
            0.0,
        ) * (-Cplx::i()).powu((ones % 4) as u32);
        let contrib_norm = 4.0f64.powi(k as i32) * work.norm();
        max_alpha = max_alpha.max(contrib_norm);
        if work.is_zero() {
            continue;
        }
        let restricted = restrict_to_qubits(&work, &keep_sorted)?;
        pieces.push(restricted.scaled(coeff));
    }
    if max_alpha > 1.0 + 1e-6 {
        return Err(EstimatorError::Internal(format!(
            "projected branch norm {max_alpha} exceeds 1"
        )));
    }

    // k = 0 has a deterministic single piece: the plain mean estimator
    // applies with √ξ* = 1; norm estimation still runs below.
    let (l, big_l) = (plan.l, plan.big_l);
    let seeds: Vec<u64> = (0..l * big_l).map(|i| i as u64).collect();
    let master = opts.seed;
    let samples: Vec<Real> = seeds
        .par_iter()
        .map(|&i| -> Result<Real> {
            let mut srng = ChaCha8Rng::seed_from_u64(master ^ 0xa5a5_5a5a_dead_beef);
            srng.set_stream(i + 1);
            sample_norm_overlap(n_prime, &pieces, &mut srng)
        })
        .collect::<Result<Vec<Real>>>()?;
    let mut group_means: Vec<Real> = samples
        .chunks(l)
        .map(|ch| ch.iter().sum::<Real>() / ch.len() as Real)
        .collect();
    group_means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p_raw = if group_means.is_empty() {
        0.0
    } else {
        let mid = group_means.len() / 2;
        if group_means.len() % 2 == 1 {
            group_means[mid]
        } else {
            0.5 * (group_means[mid - 1] + group_means[mid])
        }
    };

    Ok(EstimateResult {
        p_hat: p_raw.clamp(0.0, 1.0),
        p_hat_raw: p_raw,
        s_used,
        l_used: l,
        big_l_used: big_l,
        xi_star: plan.xi_star,
        max_abs_alpha: max_alpha,
        seed: opts.seed,
        wall_time: start.elapsed().as_secs_f64(),
        epsilon: opts.epsilon,
        delta: opts.delta,
        p_assumed: opts.p_assumed,
    })
}
