//! Acceptance suite: every criterion runs at its stated tolerance and prints
//! one PASS line (run with `--nocapture` to see them).

use flosim::circuit::{self, Circuit, Gate, OutputSpec};
use flosim::dense_oracle::{self, apply_flo_generator, flo_generator_matrix, DenseState};
use flosim::estimator::{self, EstimateOptions};
use flosim::gaussian_state::GaussianDesc;
use flosim::kak_phase::{self, a_generator};
use flosim::magic::{self, Branch};
use flosim::numerics::{pfaffian, AntisymMatrix};
use flosim::{CMatrix, Cplx, RMatrix, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_antisym(rng: &mut ChaCha8Rng, d: usize, scale: Real) -> RMatrix {
    let m = RMatrix::from_fn(d, d, |_, _| (rng.random::<f64>() * 2.0 - 1.0) * scale);
    (&m - m.transpose()) * 0.5
}

fn random_passive_generator(rng: &mut ChaCha8Rng, n: usize) -> AntisymMatrix<Real> {
    let h = CMatrix::from_fn(n, n, |_, _| {
        Cplx::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    let x = (&h - h.adjoint()).unscale(2.0);
    AntisymMatrix::from_exact(kak_phase::realify(&x))
}

fn random_gaussian_state(rng: &mut ChaCha8Rng, m: usize, ops: usize) -> GaussianDesc {
    let mut g = GaussianDesc::vacuum(m).unwrap();
    for _ in 0..ops {
        let j = rng.random_range(0..2 * m);
        let mut k = rng.random_range(0..2 * m);
        while k == j {
            k = rng.random_range(0..2 * m);
        }
        g = g
            .apply_elementary(rng.random::<f64>() * 3.0 - 1.5, j, k)
            .unwrap();
    }
    g
}

#[test]
fn criterion_01_phase_exact_engine() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_001);
    for &m in &[4usize, 6] {
        for program in 0..100 {
            let gates = rng.random_range(10..=40);
            let mut g = GaussianDesc::vacuum(m).unwrap();
            let mut dense = g.dense_expand().unwrap();
            for _ in 0..gates {
                match rng.random_range(0..3) {
                    0 => {
                        // passive
                        let beta = random_passive_generator(&mut rng, m);
                        g = g.apply_passive_generator(&beta).unwrap();
                        dense = apply_flo_generator(&dense, beta.entries());
                    }
                    1 => {
                        // elementary
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
                    }
                    _ => {
                        // general with ‖α‖ ≤ 2
                        let alpha = random_antisym(&mut rng, 2 * m, 1.0);
                        let norm = alpha.abs().max();
                        let alpha = if norm > 2.0 { alpha * (2.0 / norm) } else { alpha };
                        let alpha = AntisymMatrix::from_exact(alpha);
                        g = g.apply_general(&alpha).unwrap();
                        dense = apply_flo_generator(&dense, alpha.entries());
                    }
                }
            }
            let err = g.dense_expand().unwrap().max_elementwise_distance(&dense);
            assert!(
                err < 1e-8,
                "m = {m}, program {program}: phase drift {err:.3e}"
            );
        }
    }
    println!("PASS criterion 1: phase-exact engine (200 random programs, m ∈ {{4,6}}, ≤ 40 gates, 1e-8)");
}

#[test]
fn criterion_02_pfaffian() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_002);
    for trial in 0..100 {
        let d = 2 * rng.random_range(1..=32);
        let a = random_antisym(&mut rng, d, 1.0);
        let pf = pfaffian(&a).unwrap();
        let det = a.determinant();
        let rel = (pf * pf - det).abs() / det.abs().max(1e-300);
        assert!(rel < 1e-8, "trial {trial} (dim {d}): Pf² vs det rel {rel:.3e}");
    }
    // congruence identity Pf(B A Bᵀ) = det(B) Pf(A)
    for trial in 0..25 {
        let d = 2 * rng.random_range(1..=8);
        let a = random_antisym(&mut rng, d, 1.0);
        let b = RMatrix::from_fn(d, d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let lhs = pfaffian(&(&b * &a * b.transpose())).unwrap();
        let rhs = b.determinant() * pfaffian(&a).unwrap();
        assert!(
            (lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1.0),
            "trial {trial}: congruence residual {}",
            (lhs - rhs).abs()
        );
    }
    println!("PASS criterion 2: Pfaffian identities (100 matrices up to dim 64, congruence scaling)");
}

#[test]
fn criterion_03_kak_sign_recovery() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_003);
    let m = 4usize;
    let floor = (2.0f64).powf(-(m as Real) / 2.0) * (1.0 - 1e-6);
    for trial in 0..500 {
        let alpha = AntisymMatrix::from_exact(random_antisym(&mut rng, 2 * m, 1.2));
        let f = kak_phase::kak_flo_with_sign(&alpha).unwrap();
        assert!(
            f.witness_magnitude >= floor,
            "trial {trial}: witness {} below floor {floor}",
            f.witness_magnitude
        );
        let dense_alpha = flo_generator_matrix(m, alpha.entries());
        let recon = flo_generator_matrix(m, f.beta.entries())
            * flo_generator_matrix(m, &a_generator(&f.lambda, 2 * m))
            * flo_generator_matrix(m, f.gamma.entries());
        let err = (&recon - &dense_alpha)
            .iter()
            .fold(0.0f64, |acc, z| acc.max(z.norm()));
        assert!(err < 1e-8, "trial {trial}: sign disagreement, residual {err:.3e}");
        let flipped = (&recon * Cplx::new(-1.0, 0.0) - &dense_alpha)
            .iter()
            .fold(0.0f64, |acc, z| acc.max(z.norm()));
        assert!(
            flipped > 0.5,
            "trial {trial}: flipped sign also matches (residual {flipped:.3e})"
        );
    }
    println!("PASS criterion 3: KAK sign recovery (500 generators on m = 4, witness ≥ 2^(-m/2))");
}

#[test]
fn criterion_04_magic_identities() {
    assert_eq!(magic::extent_single(0.0), 1.0);
    assert!((magic::extent_single(std::f64::consts::PI) - 2.0).abs() < 1e-12);
    let want = 1.0 + (2.0f64).sqrt() / 2.0;
    assert!(
        (magic::extent_single(std::f64::consts::FRAC_PI_2) - want).abs() < 1e-12,
        "ξ(π/2) mismatch"
    );
    for step in 0..64 {
        let theta = -2.0 * std::f64::consts::PI
            + (step as Real + 0.5) * 4.0 * std::f64::consts::PI / 64.0;
        let a = magic::branch_state_desc(theta, Branch::A).unwrap();
        let b = magic::branch_state_desc(theta, Branch::B).unwrap();
        let da = a.dense_expand().unwrap();
        let db = b.dense_expand().unwrap();
        let c = (theta / 4.0).cos();
        let s = (theta / 4.0).sin();
        let mut recon = da.amp.clone() * Cplx::new(c, 0.0);
        recon += db.amp.map(|z| z * Cplx::new(0.0, s));
        let wantv = dense_oracle::magic_state_dense(theta);
        let err = (0..16)
            .map(|i| (recon[i] - wantv.amp[i]).norm())
            .fold(0.0, Real::max);
        assert!(err < 1e-12, "θ = {theta}: reconstruction error {err:.3e}");
        let ov = a.overlap(&b).unwrap().norm();
        assert!(ov < 1e-12, "θ = {theta}: ⟨A|B⟩ = {ov:.3e}");
    }
    println!("PASS criterion 4: magic identities (extent values exact, 64-point reconstruction at 1e-12, ⟨A|B⟩ = 0)");
}

#[test]
fn criterion_05_gadget_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_005);
    for &k in &[1usize, 2] {
        for &theta in &[std::f64::consts::PI, std::f64::consts::FRAC_PI_2, 0.3] {
            // n = 4 circuit with k controlled-phase gates and FLO dressing
            let mut gates = vec![Gate::Elementary {
                mu: rng.random::<f64>() - 0.5,
                j: 0,
                k: 5,
            }];
            for jj in 0..k {
                gates.push(Gate::ControlledPhase {
                    theta,
                    q: jj % 3,
                });
                gates.push(Gate::Elementary {
                    mu: rng.random::<f64>() - 0.5,
                    j: 2,
                    k: 7,
                });
            }
            let c = Circuit {
                n: 4,
                gates,
                input: vec![true, true, false, false],
                output: OutputSpec::Full(vec![false, false, false, false]),
            };
            let want = circuit::dense_born(&c).unwrap();
            let p = circuit::gadgetize(&c).unwrap();
            let psi = circuit::dense_evolve_program(&p).unwrap();
            let bra = circuit::dense_program_bra(&p, None).unwrap();
            let got = 16.0f64.powi(k as i32) * bra.inner(&psi).norm_sqr();
            assert!(
                (got - want).abs() < 1e-8,
                "k = {k}, θ = {theta}: gadget identity {got} vs dense {want}"
            );
        }
    }
    // norm law: each projected gadget divides the norm by exactly 4
    let c = Circuit {
        n: 4,
        gates: vec![
            Gate::ControlledPhase { theta: 1.1, q: 0 },
            Gate::ControlledPhase { theta: -0.7, q: 2 },
        ],
        input: vec![false; 4],
        output: OutputSpec::Full(vec![false; 4]),
    };
    let p = circuit::gadgetize(&c).unwrap();
    let psi = circuit::dense_evolve_program(&p).unwrap();
    let mut state = psi;
    for (jj, block) in p.projection_blocks.iter().enumerate() {
        let mstate = dense_oracle::magic_state_dense(p.magic_angles[jj]);
        let dim = 1usize << p.total_qubits;
        // contract |M⟩⟨M| on the block and sum out the block bits
        let mut coeffs = vec![Cplx::new(0.0, 0.0); dim];
        for idx in 0..dim {
            let mut sub = 0usize;
            for (pos_idx, &pos) in block.iter().enumerate() {
                if (idx >> pos) & 1 == 1 {
                    sub |= 1 << pos_idx;
                }
            }
            coeffs[idx] = mstate.amp[sub].conj();
        }
        let mut projected = vec![Cplx::new(0.0, 0.0); dim];
        for idx in 0..dim {
            let c0 = coeffs[idx] * state.amp[idx];
            if c0 != Cplx::new(0.0, 0.0) {
                // scatter back onto the block's |M⟩ components
                for sub in 0..16usize {
                    let mut target = idx;
                    for (pos_idx, &pos) in block.iter().enumerate() {
                        if (sub >> pos_idx) & 1 == 1 {
                            target |= 1 << pos;
                        } else {
                            target &= !(1 << pos);
                        }
                    }
                    projected[target] += mstate.amp[sub] * c0;
                }
            }
        }
        let before = state.norm();
        state = DenseState {
            m: p.total_qubits,
            amp: flosim::CVector::from_vec(projected),
        };
        let after = state.norm();
        assert!(
            (after / before - 0.25).abs() < 1e-10,
            "gadget {jj}: norm ratio {} (want 1/4)",
            after / before
        );
    }
    println!("PASS criterion 5: gadget identity (n = 4, k ∈ {{1,2}}, θ ∈ {{π, π/2, 0.3}}; norm ÷ 4 per gadget)");
}

fn cz_test_circuit() -> Circuit {
    Circuit {
        n: 4,
        gates: vec![
            Gate::Elementary { mu: 0.55, j: 0, k: 2 },
            Gate::Elementary { mu: -0.35, j: 3, k: 6 },
            Gate::ControlledPhase {
                theta: std::f64::consts::PI,
                q: 1,
            },
            Gate::Elementary { mu: 0.8, j: 1, k: 4 },
        ],
        input: vec![false; 4],
        output: OutputSpec::Full(vec![false; 4]),
    }
}

#[test]
fn criterion_06_estimator_all_qubits() {
    // k = 0: deterministic, exact within 1e-8 with a single sample
    let flo_only = Circuit {
        n: 4,
        gates: vec![
            Gate::Elementary { mu: 0.9, j: 0, k: 3 },
            Gate::Elementary { mu: -0.4, j: 2, k: 5 },
        ],
        input: vec![true, true, false, false],
        output: OutputSpec::Full(vec![false, true, true, false]),
    };
    let dense0 = circuit::dense_born(&flo_only).unwrap();
    let r0 = estimator::estimate_all_qubits(
        &flo_only,
        &EstimateOptions {
            epsilon: 0.05,
            delta: 0.1,
            seed: 1,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(r0.s_used, 1);
    assert!(
        (r0.p_hat - dense0).abs() < 1e-8,
        "k = 0: {} vs dense {}",
        r0.p_hat,
        dense0
    );

    // k = 1 CZ circuit over 50 seeds
    let c = cz_test_circuit();
    let p_dense = circuit::dense_born(&c).unwrap();
    let mut hits = 0;
    let mut max_alpha: Real = 0.0;
    for seed in 0..50u64 {
        let r = estimator::estimate_all_qubits(
            &c,
            &EstimateOptions {
                epsilon: 0.05,
                delta: 0.1,
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        max_alpha = max_alpha.max(r.max_abs_alpha);
        if (r.p_hat - p_dense).abs() <= 0.05 {
            hits += 1;
        }
    }
    assert!(hits >= 45, "only {hits}/50 runs within ε = 0.05");
    assert!(max_alpha <= 1.0 + 1e-6);
    println!(
        "PASS criterion 6: estimator 1 end-to-end ({hits}/50 seeds within ε, k = 0 exact with one sample)"
    );
}

#[test]
fn criterion_07_alpha_bound() {
    // exhaustive α_y sweep over several circuits and angles
    let mut rng = ChaCha8Rng::seed_from_u64(20_007);
    let mut max_alpha: Real = 0.0;
    for &theta in &[std::f64::consts::PI, 1.9, 0.4, -2.6] {
        let mut gates = vec![Gate::Elementary {
            mu: rng.random::<f64>() * 2.0 - 1.0,
            j: 1,
            k: 6,
        }];
        gates.push(Gate::ControlledPhase { theta, q: 1 });
        gates.push(Gate::Elementary {
            mu: rng.random::<f64>() * 2.0 - 1.0,
            j: 0,
            k: 7,
        });
        gates.push(Gate::ControlledPhase { theta: -theta / 2.0, q: 2 });
        let c = Circuit {
            n: 4,
            gates,
            input: vec![false; 4],
            output: OutputSpec::Full(vec![false; 4]),
        };
        let program = circuit::gadgetize(&c).unwrap();
        let psi = estimator::evolve_program(&program).unwrap();
        for bits in 0..(1usize << program.scale_exponent) {
            let y: Vec<bool> = (0..program.scale_exponent)
                .map(|j| (bits >> j) & 1 == 1)
                .collect();
            let alpha = estimator::alpha_y(&program, &psi, &y).unwrap();
            max_alpha = max_alpha.max(alpha.norm());
        }
    }
    assert!(
        max_alpha <= 1.0 + 1e-6,
        "α bound violated: max |α_y| = {max_alpha}"
    );
    println!("PASS criterion 7: |α_y| ≤ 1 + 1e-6 across all evaluated branches (max {max_alpha:.6})");
}

#[test]
fn criterion_08_norm_estimator_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_008);
    let n = 4usize;
    for state_idx in 0..30 {
        let mut psi = random_gaussian_state(&mut rng, n, 4);
        let scale = 0.3 + 0.7 * rng.random::<f64>();
        psi = psi.scaled(Cplx::from_polar(scale, rng.random::<f64>() * 6.28));
        let want = psi.norm().powi(2);
        let trials = 1500usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..trials {
            let x = estimator::sample_norm_overlap(n, std::slice::from_ref(&psi), &mut rng)
                .unwrap();
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / trials as Real;
        let second = sumsq / trials as Real;
        let var = (second - mean * mean).max(0.0);
        let sigma = (var / trials as Real).sqrt();
        assert!(
            (mean - want).abs() <= 3.0 * sigma.max(1e-9),
            "state {state_idx}: mean {mean} vs ‖ψ‖² {want} (3σ = {})",
            3.0 * sigma
        );
        // one-sided second-moment bound E[X²] ≤ 2√n ‖ψ‖⁴ at 3σ
        let fourth = {
            // rough moment-of-squares spread for the one-sided band
            let mut s4 = 0.0;
            let mut srng = ChaCha8Rng::seed_from_u64(9_000 + state_idx);
            for _ in 0..trials {
                let x = estimator::sample_norm_overlap(n, std::slice::from_ref(&psi), &mut srng)
                    .unwrap();
                s4 += (x * x - second) * (x * x - second);
            }
            (s4 / trials as Real / trials as Real).sqrt()
        };
        let bound = 2.0 * (n as Real).sqrt() * want * want;
        assert!(
            second <= bound + 3.0 * fourth.max(1e-9),
            "state {state_idx}: E[X²] = {second} exceeds bound {bound}"
        );
    }
    println!("PASS criterion 8: norm estimator moments (30 states, mean within 3σ, second moment bounded)");
}

#[test]
fn criterion_09_estimator_partial() {
    let mut c = cz_test_circuit();
    c.output = OutputSpec::Masked {
        measured: vec![false, false],
        total: 4,
    };
    let p_dense = circuit::dense_born(&c).unwrap();
    let mut hits = 0;
    for seed in 0..50u64 {
        let r = estimator::estimate_partial(
            &c,
            &EstimateOptions {
                epsilon: 0.1,
                delta: 0.1,
                seed,
                p_assumed: 1.0,
                two_stage: false,
            },
        )
        .unwrap();
        assert!(r.max_abs_alpha <= 1.0 + 1e-6);
        if (r.p_hat - p_dense).abs() <= 0.1 {
            hits += 1;
        }
    }
    assert!(hits >= 45, "only {hits}/50 partial runs within ε = 0.1");
    println!("PASS criterion 9: estimator 2 end-to-end ({hits}/50 seeds within ε, w = 2)");
}

#[test]
fn criterion_10_comparison_data() {
    // the extent grid through the CLI layer
    let tmp = std::env::temp_dir().join(format!("flosim_extent_{}.csv", std::process::id()));
    let args = flosim::cli::Args {
        command: flosim::cli::Command::Extent { points: 256 },
        out: Some(tmp.clone()),
    };
    flosim::cli::run(args).map_err(|e| e.message).unwrap();
    let csv = std::fs::read_to_string(&tmp).unwrap();
    let _ = std::fs::remove_file(&tmp);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "theta,xi,w_squared,ratio");
    assert_eq!(lines.len(), 257);
    let last: Vec<Real> = lines[256]
        .split(',')
        .map(|t| t.parse::<Real>().unwrap())
        .collect();
    assert!((last[0] - std::f64::consts::PI).abs() < 1e-12);
    assert!((last[1] - 2.0).abs() < 1e-12, "xi(π) = {}", last[1]);
    assert!((last[2] - 9.0).abs() < 1e-10, "w²(π) = {}", last[2]);
    assert!((last[3] - 4.5).abs() < 1e-10, "ratio(π) = {}", last[3]);
    let first: Vec<Real> = lines[1]
        .split(',')
        .map(|t| t.parse::<Real>().unwrap())
        .collect();
    assert!((first[3] - 1.0).abs() < 1e-12, "ratio(0) = {}", first[3]);
    println!("PASS criterion 10: comparison CSV (θ = π row gives ξ = 2, W² = 9, ratio = 4.5; ratio(0) = 1)");
}

#[test]
fn criterion_11_fidelity_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_011);
    let a8 = magic::a8_dense();
    let b1 = magic::flo_fidelity_bound_check(&a8, 150, &mut rng);
    assert!(b1 <= 0.5 + 1e-9, "a8 fidelity bound {b1} exceeds 1/2");
    assert!(b1 >= 0.5 - 1e-12, "a8 witness not attained: {b1}");
    let pair = a8.tensor(&magic::a8_dense());
    let b2 = magic::flo_fidelity_bound_check(&pair, 150, &mut rng);
    assert!(b2 <= 0.25 + 1e-9, "a8⊗a8 fidelity bound {b2} exceeds 1/4");
    assert!(b2 >= 0.25 - 1e-12, "a8⊗a8 witness not attained: {b2}");
    println!("PASS criterion 11: FLO fidelity one-sided checks (a8 ≤ 1/2, a8⊗a8 ≤ 1/4, witnesses attained)");
}
