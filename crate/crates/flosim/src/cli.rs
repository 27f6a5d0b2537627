//! Command-line front end: parse circuits, run the estimators or the dense
//! oracle, emit machine-readable reports, and produce the extent comparison
//! dataset.
//!
//! Exit codes: 0 success, 2 validation error (arguments, parsing, IO),
//! 3 internal invariant breach.

use std::io::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::circuit::{self, OutputSpec};
use crate::dense_oracle::DENSE_CAP;
use crate::estimator::{self, EstimateOptions, EstimatorError};
use crate::magic;
use crate::Real;

#[derive(Debug, Parser)]
#[command(name = "flosim", version, about = "Fermionic-linear-optics circuit simulator")]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,
    /// Write the report to FILE instead of stdout
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    All,
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo Born-rule probability estimate of a circuit
    Estimate {
        circuit: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        eps: Real,
        #[arg(long, default_value_t = 0.1)]
        delta: Real,
        /// RNG seed (default: from entropy, echoed in the report)
        #[arg(long)]
        seed: Option<u64>,
        /// measurement mode; inferred from the circuit's output when omitted
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// pessimistic probability bound used by the sample planner
        #[arg(long, default_value_t = 1.0)]
        p_assumed: Real,
        /// run a coarse pass first to bound p, then re-plan
        #[arg(long, default_value_t = false)]
        two_stage: bool,
    },
    /// Exact dense-oracle probability (small circuits)
    Exact {
        circuit: PathBuf,
        #[arg(long, default_value_t = DENSE_CAP)]
        dense_cap: usize,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Emit the per-gate cost comparison grid as CSV
    Extent {
        /// number of grid points over [0, π]
        #[arg(long, default_value_t = 256)]
        points: usize,
    },
    /// Run the built-in invariant suites
    Selftest,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run_from_args() -> i32 {
    init_thread_pool();
    let args = Args::parse();
    match run(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var("FLOSIM_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}

pub struct CliError {
    pub code: i32,
    pub message: String,
}

fn validation(msg: impl Into<String>) -> CliError {
    CliError {
        code: 2,
        message: msg.into(),
    }
}

fn from_estimator(e: EstimatorError) -> CliError {
    let code = match e {
        EstimatorError::Internal(_) => 3,
        _ => 2,
    };
    CliError {
        code,
        message: e.to_string(),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| validation(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| validation(format!("stdout: {e}")))
        }
    }
}

fn fmt_real(x: Real) -> String {
    format!("{x:.16e}")
}

pub fn run(args: Args) -> Result<(), CliError> {
    match args.command {
        Command::Estimate {
            circuit,
            eps,
            delta,
            seed,
            mode,
            format,
            p_assumed,
            two_stage,
        } => {
            let text = std::fs::read_to_string(&circuit)
                .map_err(|e| validation(format!("cannot read {}: {e}", circuit.display())))?;
            let parsed = circuit::parse_circuit(&text, circuit.parent())
                .map_err(|e| validation(e.to_string()))?;
            let inferred = match parsed.output {
                OutputSpec::Full(_) => Mode::All,
                OutputSpec::Masked { .. } => Mode::Partial,
            };
            let mode = mode.unwrap_or(inferred);
            if mode != inferred {
                return Err(validation(format!(
                    "mode {:?} does not match the circuit output spec (expected {:?})",
                    mode, inferred
                )));
            }
            let seed = seed.unwrap_or_else(rand::random::<u64>);
            let opts = EstimateOptions {
                epsilon: eps,
                delta,
                seed,
                p_assumed,
                two_stage,
            };
            let result = match mode {
                Mode::All => estimator::estimate_all_qubits(&parsed, &opts),
                Mode::Partial => estimator::estimate_partial(&parsed, &opts),
            }
            .map_err(from_estimator)?;
            let report = match format {
                Format::Json => estimate_report_json(&circuit, mode, &result),
                Format::Csv => estimate_report_csv(&result),
            };
            emit(&args.out, &report)
        }
        Command::Exact {
            circuit,
            dense_cap,
            format,
        } => {
            let text = std::fs::read_to_string(&circuit)
                .map_err(|e| validation(format!("cannot read {}: {e}", circuit.display())))?;
            let parsed = circuit::parse_circuit(&text, circuit.parent())
                .map_err(|e| validation(e.to_string()))?;
            if parsed.n > dense_cap {
                return Err(validation(format!(
                    "circuit has {} qubits, dense cap is {dense_cap}",
                    parsed.n
                )));
            }
            let p = circuit::dense_born(&parsed).map_err(|e| validation(e.to_string()))?;
            let report = match format {
                Format::Json => format!(
                    "{{\n  \"tool\": \"flosim {}\",\n  \"command\": \"exact\",\n  \"circuit\": \"{}\",\n  \"probability\": {}\n}}\n",
                    env!("CARGO_PKG_VERSION"),
                    circuit.display(),
                    fmt_real(p)
                ),
                Format::Csv => format!("probability\n{}\n", fmt_real(p)),
            };
            emit(&args.out, &report)
        }
        Command::Extent { points } => {
            if points < 2 {
                return Err(validation("need at least 2 grid points"));
            }
            let mut csv = String::from("theta,xi,w_squared,ratio\n");
            for i in 0..points {
                let theta = std::f64::consts::PI * i as Real / (points - 1) as Real;
                let xi = magic::extent_single(theta);
                let w = magic::fermionic_nonlinearity_rot(theta / 4.0);
                let w2 = w * w;
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt_real(theta),
                    fmt_real(xi),
                    fmt_real(w2),
                    fmt_real(w2 / xi)
                ));
            }
            emit(&args.out, &csv)
        }
        Command::Selftest => {
            let mut report = String::new();
            let mut all_ok = true;
            for (name, ok) in selftest_suites() {
                all_ok &= ok;
                report.push_str(&format!(
                    "{} {}\n",
                    if ok { "PASS" } else { "FAIL" },
                    name
                ));
            }
            emit(&args.out, &report)?;
            if all_ok {
                Ok(())
            } else {
                Err(CliError {
                    code: 3,
                    message: "selftest failures".into(),
                })
            }
        }
    }
}

fn estimate_report_json(path: &std::path::Path, mode: Mode, r: &estimator::EstimateResult) -> String {
    let mode_s = match mode {
        Mode::All => "all",
        Mode::Partial => "partial",
    };
    format!(
        concat!(
            "{{\n",
            "  \"tool\": \"flosim {}\",\n",
            "  \"command\": \"estimate\",\n",
            "  \"circuit\": \"{}\",\n",
            "  \"mode\": \"{}\",\n",
            "  \"epsilon\": {},\n",
            "  \"delta\": {},\n",
            "  \"p_assumed\": {},\n",
            "  \"seed\": {},\n",
            "  \"xi_star\": {},\n",
            "  \"samples\": {},\n",
            "  \"norm_samples_per_group\": {},\n",
            "  \"norm_groups\": {},\n",
            "  \"max_abs_alpha\": {},\n",
            "  \"p_hat\": {},\n",
            "  \"p_hat_raw\": {},\n",
            "  \"wall_time_seconds\": {}\n",
            "}}\n"
        ),
        env!("CARGO_PKG_VERSION"),
        path.display(),
        mode_s,
        fmt_real(r.epsilon),
        fmt_real(r.delta),
        fmt_real(r.p_assumed),
        r.seed,
        fmt_real(r.xi_star),
        r.s_used,
        r.l_used,
        r.big_l_used,
        fmt_real(r.max_abs_alpha),
        fmt_real(r.p_hat),
        fmt_real(r.p_hat_raw),
        fmt_real(r.wall_time),
    )
}

fn estimate_report_csv(r: &estimator::EstimateResult) -> String {
    format!(
        "p_hat,p_hat_raw,s,l,L,xi_star,max_abs_alpha,seed\n{},{},{},{},{},{},{},{}\n",
        fmt_real(r.p_hat),
        fmt_real(r.p_hat_raw),
        r.s_used,
        r.l_used,
        r.big_l_used,
        fmt_real(r.xi_star),
        fmt_real(r.max_abs_alpha),
        r.seed
    )
}

fn selftest_suites() -> Vec<(&'static str, bool)> {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    let mut suites = Vec::new();

    // Pfaffian identities
    let pf_ok = (|| -> Option<bool> {
        let mut rng = ChaCha8Rng::seed_from_u64(1001);
        for &d in &[6usize, 12] {
            let m = crate::RMatrix::from_fn(d, d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let a = (&m - m.transpose()) * 0.5;
            let pf = crate::numerics::pfaffian(&a).ok()?;
            let det = a.determinant();
            if (pf * pf - det).abs() > 1e-8 * det.abs().max(1e-12) {
                return Some(false);
            }
        }
        Some(true)
    })()
    .unwrap_or(false);
    suites.push(("pfaffian-squares-to-determinant", pf_ok));

    // phase-exact engine against the dense oracle
    let engine_ok = (|| -> Option<bool> {
        let mut rng = ChaCha8Rng::seed_from_u64(1002);
        let m = 4usize;
        let mut g = crate::gaussian_state::GaussianDesc::vacuum(m).ok()?;
        let mut dense = g.dense_expand().ok()?;
        for _ in 0..10 {
            let j = rng.random_range(0..2 * m);
            let mut k = rng.random_range(0..2 * m);
            while k == j {
                k = rng.random_range(0..2 * m);
            }
            let mu = rng.random::<f64>() * 3.0 - 1.5;
            g = g.apply_elementary(mu, j, k).ok()?;
            let mut gen = crate::RMatrix::zeros(2 * m, 2 * m);
            gen[(j, k)] = 2.0 * mu;
            gen[(k, j)] = -2.0 * mu;
            dense = crate::dense_oracle::apply_flo_generator(&dense, &gen);
        }
        Some(g.dense_expand().ok()?.max_elementwise_distance(&dense) < 1e-8)
    })()
    .unwrap_or(false);
    suites.push(("phase-exact-engine", engine_ok));

    // magic reconstruction
    let magic_ok = (|| -> Option<bool> {
        for step in 0..8 {
            let theta = -3.0 + step as Real * 0.9;
            let a = magic::branch_state_desc(theta, magic::Branch::A)
                .ok()?
                .dense_expand()
                .ok()?;
            let b = magic::branch_state_desc(theta, magic::Branch::B)
                .ok()?
                .dense_expand()
                .ok()?;
            let c = (theta / 4.0).cos();
            let s = (theta / 4.0).sin();
            let mut recon = a.amp.clone() * crate::Cplx::new(c, 0.0);
            recon += b.amp.map(|z| z * crate::Cplx::new(0.0, s));
            let want = crate::dense_oracle::magic_state_dense(theta);
            let err = (0..16)
                .map(|i| (recon[i] - want.amp[i]).norm())
                .fold(0.0, Real::max);
            if err > 1e-12 {
                return Some(false);
            }
        }
        Some(true)
    })()
    .unwrap_or(false);
    suites.push(("magic-state-reconstruction", magic_ok));

    // gadget identity at k = 1
    let gadget_ok = (|| -> Option<bool> {
        let c = circuit::Circuit {
            n: 2,
            gates: vec![circuit::Gate::ControlledPhase { theta: 0.9, q: 0 }],
            input: vec![true, true],
            output: OutputSpec::Full(vec![true, true]),
        };
        let want = circuit::dense_born(&c).ok()?;
        let p = circuit::gadgetize(&c).ok()?;
        let psi = circuit::dense_evolve_program(&p).ok()?;
        let bra = circuit::dense_program_bra(&p, None).ok()?;
        let got = 16.0 * bra.inner(&psi).norm_sqr();
        Some((got - want).abs() < 1e-9)
    })()
    .unwrap_or(false);
    suites.push(("gadget-identity", gadget_ok));

    // estimator determinism and k = 0 exactness
    let est_ok = (|| -> Option<bool> {
        let c = circuit::Circuit {
            n: 2,
            gates: vec![circuit::Gate::Elementary { mu: 0.4, j: 0, k: 2 }],
            input: vec![false, false],
            output: OutputSpec::Full(vec![false, false]),
        };
        let opts = EstimateOptions {
            epsilon: 0.1,
            delta: 0.1,
            seed: 11,
            ..Default::default()
        };
        let r1 = estimator::estimate_all_qubits(&c, &opts).ok()?;
        let r2 = estimator::estimate_all_qubits(&c, &opts).ok()?;
        let dense = circuit::dense_born(&c).ok()?;
        Some(r1.p_hat.to_bits() == r2.p_hat.to_bits() && (r1.p_hat - dense).abs() < 1e-8)
    })()
    .unwrap_or(false);
    suites.push(("estimator-deterministic-k0", est_ok));

    suites
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extent_grid_endpoints() {
        let xi = magic::extent_single(std::f64::consts::PI);
        let w = magic::fermionic_nonlinearity_rot(std::f64::consts::PI / 4.0);
        assert!((xi - 2.0).abs() < 1e-12);
        assert!((w * w - 9.0).abs() < 1e-11);
        assert!((w * w / xi - 4.5).abs() < 1e-11);
    }

    #[test]
    fn selftest_passes() {
        for (name, ok) in selftest_suites() {
            assert!(ok, "selftest suite {name} failed");
        }
    }
}
