//! Circuit intermediate representation, the line-oriented text format, the
//! matchgate-to-generator conversion, and the gadgetizing compiler that
//! replaces every controlled-phase gate by FLO operations plus a deferred
//! four-qubit magic projection.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::dense_oracle::{self, matchgate_matrix, DenseState};
use crate::kak_phase::{self, unitary_eigen};
use crate::numerics::{self, AntisymMatrix};
use crate::{CMatrix, Cplx, RMatrix, Real};

// ---------------------------------------------------------------------------
// IR
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum Gate {
    /// Matchgate G(A, B) on adjacent qubits (q, q+1).
    Matchgate { q: usize, a: CMatrix, b: CMatrix },
    /// exp(μ c_j c_k) on logical Majorana indices.
    Elementary { mu: Real, j: usize, k: usize },
    /// Passive FLO unitary op(β), β read from a matrix file.
    PassiveGen {
        beta: AntisymMatrix<Real>,
        label: Option<String>,
    },
    /// General FLO unitary op(α).
    GeneralGen {
        alpha: AntisymMatrix<Real>,
        label: Option<String>,
    },
    /// Controlled phase C(θ) on adjacent qubits (q, q+1).
    ControlledPhase { theta: Real, q: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum OutputSpec {
    /// Every qubit measured.
    Full(Vec<bool>),
    /// The first `measured.len()` qubits are measured, the rest are traced.
    Masked { measured: Vec<bool>, total: usize },
}

impl OutputSpec {
    pub fn measured_width(&self) -> usize {
        match self {
            OutputSpec::Full(b) => b.len(),
            OutputSpec::Masked { measured, .. } => measured.len(),
        }
    }

    pub fn measured_bits(&self) -> &[bool] {
        match self {
            OutputSpec::Full(b) => b,
            OutputSpec::Masked { measured, .. } => measured,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Circuit {
    pub n: usize,
    pub gates: Vec<Gate>,
    pub input: Vec<bool>,
    pub output: OutputSpec,
}

// ---------------------------------------------------------------------------
// diagnostics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagCode {
    Syntax,
    Parity,
    QubitRange,
    NotMatchgate,
    Adjacency,
    Dimension,
    Io,
}

impl std::fmt::Display for DiagCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            DiagCode::Syntax => "syntax",
            DiagCode::Parity => "parity",
            DiagCode::QubitRange => "qubit-range",
            DiagCode::NotMatchgate => "not-matchgate",
            DiagCode::Adjacency => "adjacency",
            DiagCode::Dimension => "dimension",
            DiagCode::Io => "io",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
#[error("line {line}: [{code}] {message}")]
pub struct ParseError {
    pub line: usize,
    pub code: DiagCode,
    pub message: String,
}

fn perr(line: usize, code: DiagCode, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        code,
        message: message.into(),
    }
}

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("controlled-phase targets ({0}, {1}) are not adjacent")]
    Adjacency(usize, usize),
    #[error("gate is not a matchgate: {0}")]
    NotMatchgate(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error(transparent)]
    Kak(#[from] kak_phase::KakError),
    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),
}

// ---------------------------------------------------------------------------
// parser
// ---------------------------------------------------------------------------

fn parse_bits(line: usize, s: &str) -> Result<Vec<bool>, ParseError> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(perr(line, DiagCode::Syntax, format!("bad bit '{c}'"))),
        })
        .collect()
}

fn parse_real(line: usize, s: &str) -> Result<Real, ParseError> {
    s.parse::<Real>()
        .map_err(|_| perr(line, DiagCode::Syntax, format!("bad number '{s}'")))
}

fn parse_usize(line: usize, s: &str) -> Result<usize, ParseError> {
    s.parse::<usize>()
        .map_err(|_| perr(line, DiagCode::Syntax, format!("bad index '{s}'")))
}

fn read_matrix_file(line: usize, base: Option<&Path>, name: &str) -> Result<RMatrix, ParseError> {
    let path = match base {
        Some(dir) => dir.join(name),
        None => Path::new(name).to_path_buf(),
    };
    let text = std::fs::read_to_string(&path).map_err(|e| {
        perr(
            line,
            DiagCode::Io,
            format!("cannot read matrix file {}: {e}", path.display()),
        )
    })?;
    let mut nums = text.split_whitespace();
    let dim = nums
        .next()
        .ok_or_else(|| perr(line, DiagCode::Syntax, "empty matrix file"))
        .and_then(|s| parse_usize(line, s))?;
    let mut entries = Vec::with_capacity(dim * dim);
    for tok in nums {
        entries.push(parse_real(line, tok)?);
    }
    if entries.len() != dim * dim {
        return Err(perr(
            line,
            DiagCode::Dimension,
            format!(
                "matrix file {} has {} entries, expected {}",
                path.display(),
                entries.len(),
                dim * dim
            ),
        ));
    }
    Ok(RMatrix::from_row_slice(dim, dim, &entries))
}

/// Parse a circuit from its text form. Matrix files referenced by `passive`
/// and `general` directives are resolved relative to `base_dir`.
pub fn parse_circuit(text: &str, base_dir: Option<&Path>) -> Result<Circuit, ParseError> {
    let mut n: Option<usize> = None;
    let mut input: Option<Vec<bool>> = None;
    let mut output: Option<OutputSpec> = None;
    let mut gates: Vec<Gate> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let mut tok = line.split_whitespace();
        let Some(head) = tok.next() else { continue };
        let rest: Vec<&str> = tok.collect();
        let need_n = |line: usize| -> Result<usize, ParseError> {
            n.ok_or_else(|| perr(line, DiagCode::Syntax, "directive before 'qubits'"))
        };
        match head {
            "qubits" => {
                if rest.len() != 1 {
                    return Err(perr(lineno, DiagCode::Syntax, "usage: qubits N"));
                }
                let v = parse_usize(lineno, rest[0])?;
                if v == 0 {
                    return Err(perr(lineno, DiagCode::Dimension, "qubit count must be positive"));
                }
                n = Some(v);
            }
            "input" => {
                let nn = need_n(lineno)?;
                if rest.len() != 1 {
                    return Err(perr(lineno, DiagCode::Syntax, "usage: input BITSTRING"));
                }
                let bits = parse_bits(lineno, rest[0])?;
                if bits.len() != nn {
                    return Err(perr(
                        lineno,
                        DiagCode::Dimension,
                        format!("input has {} bits, circuit has {nn} qubits", bits.len()),
                    ));
                }
                if bits.iter().filter(|&&b| b).count() % 2 != 0 {
                    return Err(perr(lineno, DiagCode::Parity, "input bitstring has odd parity"));
                }
                input = Some(bits);
            }
            "output" => {
                let nn = need_n(lineno)?;
                if rest.len() != 1 {
                    return Err(perr(lineno, DiagCode::Syntax, "usage: output BITSTRING"));
                }
                let s = rest[0];
                if s.len() != nn {
                    return Err(perr(
                        lineno,
                        DiagCode::Dimension,
                        format!("output has {} positions, circuit has {nn} qubits", s.len()),
                    ));
                }
                let dash = s.find('-');
                let spec = match dash {
                    None => OutputSpec::Full(parse_bits(lineno, s)?),
                    Some(w) => {
                        if !s[w..].chars().all(|c| c == '-') {
                            return Err(perr(
                                lineno,
                                DiagCode::Syntax,
                                "unmeasured positions '-' must form a suffix",
                            ));
                        }
                        OutputSpec::Masked {
                            measured: parse_bits(lineno, &s[..w])?,
                            total: nn,
                        }
                    }
                };
                if spec.measured_bits().iter().filter(|&&b| b).count() % 2 != 0 {
                    return Err(perr(
                        lineno,
                        DiagCode::Parity,
                        "measured output bits have odd parity",
                    ));
                }
                output = Some(spec);
            }
            "mg" => {
                let nn = need_n(lineno)?;
                if rest.len() != 17 {
                    return Err(perr(
                        lineno,
                        DiagCode::Syntax,
                        "usage: mg Q a11r a11i ... b22i (17 fields)",
                    ));
                }
                let q = parse_usize(lineno, rest[0])?;
                if q + 1 >= nn {
                    return Err(perr(
                        lineno,
                        DiagCode::QubitRange,
                        format!("matchgate on ({q}, {}) exceeds {nn} qubits", q + 1),
                    ));
                }
                let mut vals = [0.0; 16];
                for (i, v) in vals.iter_mut().enumerate() {
                    *v = parse_real(lineno, rest[1 + i])?;
                }
                let a = CMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        Cplx::new(vals[0], vals[1]),
                        Cplx::new(vals[2], vals[3]),
                        Cplx::new(vals[4], vals[5]),
                        Cplx::new(vals[6], vals[7]),
                    ],
                );
                let b = CMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        Cplx::new(vals[8], vals[9]),
                        Cplx::new(vals[10], vals[11]),
                        Cplx::new(vals[12], vals[13]),
                        Cplx::new(vals[14], vals[15]),
                    ],
                );
                if let Err(e) = validate_matchgate(&a, &b) {
                    return Err(perr(lineno, DiagCode::NotMatchgate, e));
                }
                gates.push(Gate::Matchgate { q, a, b });
            }
            "elem" => {
                let nn = need_n(lineno)?;
                if rest.len() != 3 {
                    return Err(perr(lineno, DiagCode::Syntax, "usage: elem MU J K"));
                }
                let mu = parse_real(lineno, rest[0])?;
                let j = parse_usize(lineno, rest[1])?;
                let k = parse_usize(lineno, rest[2])?;
                if j >= 2 * nn || k >= 2 * nn {
                    return Err(perr(
                        lineno,
                        DiagCode::QubitRange,
                        format!("Majorana index out of range on {nn} qubits"),
                    ));
                }
                if j == k {
                    return Err(perr(lineno, DiagCode::Syntax, "elem indices must differ"));
                }
                gates.push(Gate::Elementary { mu, j, k });
            }
            "passive" | "general" => {
                let nn = need_n(lineno)?;
                if rest.len() != 1 {
                    return Err(perr(lineno, DiagCode::Syntax, format!("usage: {head} FILE")));
                }
                let m = read_matrix_file(lineno, base_dir, rest[0])?;
                if m.nrows() != 2 * nn {
                    return Err(perr(
                        lineno,
                        DiagCode::Dimension,
                        format!("generator is {}x{}, expected {}", m.nrows(), m.ncols(), 2 * nn),
                    ));
                }
                let gen = AntisymMatrix::new(m)
                    .map_err(|e| perr(lineno, DiagCode::Dimension, e.to_string()))?;
                if head == "passive" {
                    gates.push(Gate::PassiveGen {
                        beta: gen,
                        label: Some(rest[0].to_string()),
                    });
                } else {
                    gates.push(Gate::GeneralGen {
                        alpha: gen,
                        label: Some(rest[0].to_string()),
                    });
                }
            }
            "cphase" => {
                let nn = need_n(lineno)?;
                if rest.len() != 2 {
                    return Err(perr(lineno, DiagCode::Syntax, "usage: cphase THETA Q"));
                }
                let theta = parse_real(lineno, rest[0])?;
                let q = parse_usize(lineno, rest[1])?;
                if q + 1 >= nn {
                    return Err(perr(
                        lineno,
                        DiagCode::QubitRange,
                        format!("cphase on ({q}, {}) exceeds {nn} qubits", q + 1),
                    ));
                }
                gates.push(Gate::ControlledPhase { theta, q });
            }
            other => {
                return Err(perr(
                    lineno,
                    DiagCode::Syntax,
                    format!("unknown directive '{other}'"),
                ));
            }
        }
    }
    let n = n.ok_or_else(|| perr(0, DiagCode::Syntax, "missing 'qubits' directive"))?;
    let input = input.unwrap_or_else(|| vec![false; n]);
    let output = output.unwrap_or_else(|| OutputSpec::Full(vec![false; n]));
    Ok(Circuit {
        n,
        gates,
        input,
        output,
    })
}

fn validate_matchgate(a: &CMatrix, b: &CMatrix) -> Result<(), String> {
    let id = CMatrix::identity(2, 2);
    let ua = (a.adjoint() * a - &id)
        .iter()
        .fold(0.0f64, |acc, z| acc.max(z.norm()));
    let ub = (b.adjoint() * b - &id)
        .iter()
        .fold(0.0f64, |acc, z| acc.max(z.norm()));
    if ua > 1e-9 || ub > 1e-9 {
        return Err(format!("A or B is not unitary (residuals {ua:.2e}, {ub:.2e})"));
    }
    let det_gap = (det2(a) - det2(b)).norm();
    if det_gap > 1e-9 {
        return Err(format!("det A != det B (gap {det_gap:.2e})"));
    }
    Ok(())
}

fn det2(m: &CMatrix) -> Cplx {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

fn fmt_real(x: Real) -> String {
    format!("{x:.16e}")
}

/// Deterministic printer for the circuit grammar (17 significant digits).
/// Matrix-file gates are emitted through their original file labels.
pub fn print_circuit(c: &Circuit) -> Result<String, CompileError> {
    let mut out = String::new();
    let _ = writeln!(out, "qubits {}", c.n);
    let bits: String = c.input.iter().map(|&b| if b { '1' } else { '0' }).collect();
    let _ = writeln!(out, "input {bits}");
    for g in &c.gates {
        match g {
            Gate::Matchgate { q, a, b } => {
                let mut fields = Vec::with_capacity(16);
                for m in [a, b] {
                    for r in 0..2 {
                        for cidx in 0..2 {
                            fields.push(fmt_real(m[(r, cidx)].re));
                            fields.push(fmt_real(m[(r, cidx)].im));
                        }
                    }
                }
                let _ = writeln!(out, "mg {q} {}", fields.join(" "));
            }
            Gate::Elementary { mu, j, k } => {
                let _ = writeln!(out, "elem {} {j} {k}", fmt_real(*mu));
            }
            Gate::PassiveGen { label, .. } => match label {
                Some(l) => {
                    let _ = writeln!(out, "passive {l}");
                }
                None => {
                    return Err(CompileError::Dimension(
                        "cannot print a passive gate without a file label".into(),
                    ))
                }
            },
            Gate::GeneralGen { label, .. } => match label {
                Some(l) => {
                    let _ = writeln!(out, "general {l}");
                }
                None => {
                    return Err(CompileError::Dimension(
                        "cannot print a general gate without a file label".into(),
                    ))
                }
            },
            Gate::ControlledPhase { theta, q } => {
                let _ = writeln!(out, "cphase {} {q}", fmt_real(*theta));
            }
        }
    }
    match &c.output {
        OutputSpec::Full(b) => {
            let bits: String = b.iter().map(|&b| if b { '1' } else { '0' }).collect();
            let _ = writeln!(out, "output {bits}");
        }
        OutputSpec::Masked { measured, total } => {
            let mut bits: String = measured.iter().map(|&b| if b { '1' } else { '0' }).collect();
            bits.extend(std::iter::repeat('-').take(total - measured.len()));
            let _ = writeln!(out, "output {bits}");
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// matchgate → generator
// ---------------------------------------------------------------------------

/// Decompose a matchgate: `G(A, B) = phase · exp(¼ Σ α_{jk} c_j c_k)` on its
/// two qubits. Returns the 4×4 generator and the scalar phase.
pub fn matchgate_to_generator(
    a: &CMatrix,
    b: &CMatrix,
) -> Result<(AntisymMatrix<Real>, Cplx), CompileError> {
    validate_matchgate(a, b).map_err(CompileError::NotMatchgate)?;
    let g = matchgate_matrix(a, b);
    let cs: Vec<CMatrix> = (0..4)
        .map(|j| {
            dense_oracle::operator_matrix(2, |s| {
                let mut t = s.clone();
                dense_oracle::apply_majorana(&mut t, j);
                t
            })
        })
        .collect();
    // det G = e^{4iφ₀}, so the scalar phase is arg(det A)/2 modulo π/2;
    // try all four branches and keep the one whose log is purely quadratic
    let base_phi = det2(a).arg() / 2.0;
    let mut best_residual = Real::INFINITY;
    for t in 0..4 {
        let phi0 = base_phi + t as Real * std::f64::consts::FRAC_PI_2;
        let gp = &g * Cplx::from_polar(1.0, -phi0);
        let (w, phases) = unitary_eigen(&gp);
        let mut diag = CMatrix::zeros(4, 4);
        for (l, &p) in phases.iter().enumerate() {
            diag[(l, l)] = Cplx::new(0.0, p);
        }
        let q = &w * diag * w.adjoint();
        // Majorana bilinear coefficients: α_{pq} = −tr(c_p c_q Q)/2, p < q
        let mut alpha = RMatrix::zeros(4, 4);
        let mut imag_residual: Real = 0.0;
        for p in 0..4 {
            for r in p + 1..4 {
                let val = -(&cs[p] * &cs[r] * &q).trace() / 2.0;
                alpha[(p, r)] = val.re;
                alpha[(r, p)] = -val.re;
                imag_residual = imag_residual.max(val.im.abs());
            }
        }
        let trace_residual = q.trace().norm() / 4.0;
        let mut recon = CMatrix::zeros(4, 4);
        for p in 0..4 {
            for r in 0..4 {
                if alpha[(p, r)] != 0.0 {
                    recon += (&cs[p] * &cs[r]) * Cplx::new(alpha[(p, r)] / 4.0, 0.0);
                }
            }
        }
        let residual = (&q - recon)
            .iter()
            .fold(imag_residual.max(trace_residual), |acc, z| acc.max(z.norm()));
        if residual <= 1e-9 {
            return Ok((
                AntisymMatrix::from_exact(alpha),
                Cplx::from_polar(1.0, phi0),
            ));
        }
        best_residual = best_residual.min(residual);
    }
    Err(CompileError::NotMatchgate(format!(
        "generator projection residual {best_residual:.3e}"
    )))
}

// ---------------------------------------------------------------------------
// gadgetizing compiler
// ---------------------------------------------------------------------------

/// FLO-only gate stream on the physical register.
#[derive(Debug, Clone)]
pub enum CompiledGate {
    Elementary { mu: Real, j: usize, k: usize },
    Passive { rot: RMatrix, phase: Cplx },
    General { alpha: AntisymMatrix<Real> },
    Scale { z: Cplx },
}

/// FLO-only program equivalent to the gadgetized circuit: the Born
/// probability of the source circuit is
/// `p = 16^k · |⟨bra| Ṽ |0^{total}⟩|²` where the bra carries `|M_{θ_j}⟩`
/// on each projection tuple (θ_j = −φ_j), the measured output bits absorbed
/// to |0⟩ on `live_positions`.
#[derive(Debug, Clone)]
pub struct GadgetizedProgram {
    pub total_qubits: usize,
    pub gates: Vec<CompiledGate>,
    /// projection angle θ_j = −φ_j per gadget
    pub magic_angles: Vec<Real>,
    /// ascending physical 4-tuples carrying the magic projections
    pub projection_blocks: Vec<[usize; 4]>,
    /// final physical position of each logical qubit (after padding)
    pub live_positions: Vec<usize>,
    /// number of gadgets k (the probability carries 16^k)
    pub scale_exponent: usize,
    /// logical width before padding
    pub n_logical: usize,
    /// logical width after padding to even
    pub n_padded: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Live(usize),
    Anc(usize, u8),
}

/// Compile a circuit into an FLO-only program plus deferred projections.
pub fn gadgetize(c: &Circuit) -> Result<GadgetizedProgram, CompileError> {
    let n_logical = c.n;
    let n_padded = if n_logical % 2 == 0 { n_logical } else { n_logical + 1 };
    let k = c
        .gates
        .iter()
        .filter(|g| matches!(g, Gate::ControlledPhase { .. }))
        .count();

    // static layout: insert each gadget's ancilla pairs around its targets
    let mut layout: Vec<Slot> = (0..n_padded).map(Slot::Live).collect();
    let mut gadget_idx = 0usize;
    for g in &c.gates {
        if let Gate::ControlledPhase { q, .. } = g {
            let t = *q;
            if t + 1 >= n_logical {
                return Err(CompileError::Adjacency(t, t + 1));
            }
            let pos_t = layout.iter().position(|&s| s == Slot::Live(t)).unwrap();
            layout.insert(pos_t, Slot::Anc(gadget_idx, 1));
            layout.insert(pos_t, Slot::Anc(gadget_idx, 0));
            let pos_t1 = layout
                .iter()
                .position(|&s| s == Slot::Live(t + 1))
                .unwrap();
            layout.insert(pos_t1 + 1, Slot::Anc(gadget_idx, 2));
            layout.insert(pos_t1 + 2, Slot::Anc(gadget_idx, 3));
            gadget_idx += 1;
        }
    }
    let total_qubits = layout.len();
    debug_assert_eq!(total_qubits, n_padded + 4 * k);
    let position = |s: Slot| layout.iter().position(|&x| x == s).unwrap();

    // live bindings evolve as gadgets rebind targets to their carriers
    let mut live: Vec<usize> = (0..n_padded).map(|q| position(Slot::Live(q))).collect();

    let mut gates: Vec<CompiledGate> = Vec::new();
    let mut magic_angles: Vec<Real> = Vec::new();
    let mut projection_blocks: Vec<[usize; 4]> = Vec::new();

    // input preparation: |a⟩ from |0⟩ as ascending Majorana pair flips
    let set_positions: Vec<usize> = c
        .input
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(qq, _)| live[qq])
        .collect();
    let mut sorted_in = set_positions;
    sorted_in.sort_unstable();
    for pair in sorted_in.chunks(2) {
        gates.push(CompiledGate::Elementary {
            mu: std::f64::consts::FRAC_PI_2,
            j: 2 * pair[0],
            k: 2 * pair[1],
        });
    }

    let embed4 = |alpha4: &AntisymMatrix<Real>, p0: usize, p1: usize| -> AntisymMatrix<Real> {
        let map = [2 * p0, 2 * p0 + 1, 2 * p1, 2 * p1 + 1];
        let mut full = RMatrix::zeros(2 * total_qubits, 2 * total_qubits);
        for i in 0..4 {
            for jj in 0..4 {
                full[(map[i], map[jj])] = alpha4.entries()[(i, jj)];
            }
        }
        AntisymMatrix::from_exact(full)
    };

    let (hh_alpha, hh_phase) = {
        let r = 1.0 / (2.0f64).sqrt();
        let h = CMatrix::from_row_slice(
            2,
            2,
            &[
                Cplx::new(r, 0.0),
                Cplx::new(r, 0.0),
                Cplx::new(r, 0.0),
                Cplx::new(-r, 0.0),
            ],
        );
        matchgate_to_generator(&h, &h)?
    };

    let mut gadget_no = 0usize;
    for g in &c.gates {
        match g {
            Gate::Matchgate { q, a, b } => {
                let (alpha4, phase) = matchgate_to_generator(a, b)?;
                gates.push(CompiledGate::General {
                    alpha: embed4(&alpha4, live[*q], live[*q + 1]),
                });
                gates.push(CompiledGate::Scale { z: phase });
            }
            Gate::Elementary { mu, j, k } => {
                let map_m = |idx: usize| 2 * live[idx / 2] + (idx % 2);
                gates.push(CompiledGate::Elementary {
                    mu: *mu,
                    j: map_m(*j),
                    k: map_m(*k),
                });
            }
            Gate::PassiveGen { beta, .. } => {
                let emb = embed_generator(beta, &live, total_qubits);
                let rot = numerics::so_exp(&emb)?;
                let phase = kak_phase::passive_vacuum_phase(&emb)?;
                gates.push(CompiledGate::Passive {
                    rot: rot.into_inner(),
                    phase,
                });
            }
            Gate::GeneralGen { alpha, .. } => {
                gates.push(CompiledGate::General {
                    alpha: embed_generator(alpha, &live, total_qubits),
                });
            }
            Gate::ControlledPhase { theta, q } => {
                let t = *q;
                let a0 = position(Slot::Anc(gadget_no, 0));
                let a1 = position(Slot::Anc(gadget_no, 1));
                let a2 = position(Slot::Anc(gadget_no, 2));
                let a3 = position(Slot::Anc(gadget_no, 3));
                // Bell preparations on the adjacent ancilla pairs
                gates.push(CompiledGate::General {
                    alpha: embed4(&hh_alpha, a0, a1),
                });
                gates.push(CompiledGate::Scale { z: hh_phase });
                gates.push(CompiledGate::General {
                    alpha: embed4(&hh_alpha, a2, a3),
                });
                gates.push(CompiledGate::Scale { z: hh_phase });
                projection_blocks.push([a1, live[t], live[t + 1], a2]);
                magic_angles.push(-theta);
                // the carriers continue as the logical targets
                live[t] = a0;
                live[t + 1] = a3;
                gadget_no += 1;
            }
        }
    }

    // output absorption: measured bits flipped back to |0⟩
    let measured = c.output.measured_bits();
    let mut out_positions: Vec<usize> = measured
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(qq, _)| live[qq])
        .collect();
    out_positions.sort_unstable();
    for pair in out_positions.chunks(2) {
        gates.push(CompiledGate::Elementary {
            mu: std::f64::consts::FRAC_PI_2,
            j: 2 * pair[0],
            k: 2 * pair[1],
        });
    }

    Ok(GadgetizedProgram {
        total_qubits,
        gates,
        magic_angles,
        projection_blocks,
        live_positions: live,
        scale_exponent: k,
        n_logical,
        n_padded,
    })
}

fn embed_generator(
    gen: &AntisymMatrix<Real>,
    live: &[usize],
    total: usize,
) -> AntisymMatrix<Real> {
    let src = gen.entries();
    let n_src = src.nrows() / 2;
    let mut full = RMatrix::zeros(2 * total, 2 * total);
    let map = |idx: usize| 2 * live[idx / 2] + (idx % 2);
    for i in 0..2 * n_src {
        for jj in 0..2 * n_src {
            let v = src[(i, jj)];
            if v != 0.0 {
                full[(map(i), map(jj))] = v;
            }
        }
    }
    AntisymMatrix::from_exact(full)
}

// ---------------------------------------------------------------------------
// dense reference evolution
// ---------------------------------------------------------------------------

/// Exact Born probability of the source circuit on the dense oracle.
pub fn dense_born(c: &Circuit) -> Result<Real, dense_oracle::DenseError> {
    let mut state = DenseState::basis_state(c.n, &c.input)?;
    for g in &c.gates {
        state = dense_apply_gate(&state, g);
    }
    Ok(match &c.output {
        OutputSpec::Full(b) => dense_oracle::born_full(&state, b),
        OutputSpec::Masked { measured, total } => {
            let mut mask: Vec<Option<bool>> = measured.iter().map(|&b| Some(b)).collect();
            mask.extend(std::iter::repeat(None).take(total - measured.len()));
            dense_oracle::born_masked(&state, &mask)
        }
    })
}

fn dense_apply_gate(state: &DenseState, g: &Gate) -> DenseState {
    match g {
        Gate::Matchgate { q, a, b } => {
            let u = matchgate_matrix(a, b);
            dense_oracle::apply_local(state, *q, 2, &u)
        }
        Gate::Elementary { mu, j, k } => {
            let d = 2 * state.m;
            let mut gen = RMatrix::zeros(d, d);
            gen[(*j, *k)] = 2.0 * mu;
            gen[(*k, *j)] = -2.0 * mu;
            dense_oracle::apply_flo_generator(state, &gen)
        }
        Gate::PassiveGen { beta, .. } => dense_oracle::apply_flo_generator(state, beta.entries()),
        Gate::GeneralGen { alpha, .. } => {
            dense_oracle::apply_flo_generator(state, alpha.entries())
        }
        Gate::ControlledPhase { theta, q } => {
            let mut s = state.clone();
            dense_oracle::apply_cphase(&mut s, *theta, *q);
            s
        }
    }
}

/// Dense evolution of a compiled program from the physical vacuum.
pub fn dense_evolve_program(p: &GadgetizedProgram) -> Result<DenseState, dense_oracle::DenseError> {
    let mut state = DenseState::vacuum(p.total_qubits)?;
    for g in &p.gates {
        state = dense_apply_compiled(&state, g);
    }
    Ok(state)
}

pub fn dense_apply_compiled(state: &DenseState, g: &CompiledGate) -> DenseState {
    match g {
        CompiledGate::Elementary { mu, j, k } => {
            let d = 2 * state.m;
            let mut gen = RMatrix::zeros(d, d);
            gen[(*j, *k)] = 2.0 * mu;
            gen[(*k, *j)] = -2.0 * mu;
            dense_oracle::apply_flo_generator(state, &gen)
        }
        CompiledGate::Passive { rot, phase } => {
            let (_, b0) = kak_phase::principal_passive_phase(rot).expect("passive rotation");
            let gen = kak_phase::passive_generator_from(rot, b0).expect("passive generator");
            let out = dense_oracle::apply_flo_generator(state, gen.entries());
            out.scale(phase / b0)
        }
        CompiledGate::General { alpha } => dense_oracle::apply_flo_generator(state, alpha.entries()),
        CompiledGate::Scale { z } => state.scale(*z),
    }
}

/// The dense bra of the gadgetized program for branch bits `y` (`None` means
/// the full magic states |M_{θ_j}⟩). Measured live positions carry |0⟩.
pub fn dense_program_bra(
    p: &GadgetizedProgram,
    y: Option<&[bool]>,
) -> Result<DenseState, dense_oracle::DenseError> {
    let m = p.total_qubits;
    if m > dense_oracle::DENSE_CAP {
        return Err(dense_oracle::DenseError::Capacity(m, dense_oracle::DENSE_CAP));
    }
    let dim = 1usize << m;
    let mut amp = crate::CVector::zeros(dim);
    let block_states: Vec<DenseState> = p
        .magic_angles
        .iter()
        .enumerate()
        .map(|(jj, &th)| match y {
            None => dense_oracle::magic_state_dense(th),
            Some(bits) => {
                let branch = crate::magic::Branch::from_bit(bits[jj]);
                crate::magic::branch_state_desc(th, branch)
                    .expect("branch state")
                    .dense_expand()
                    .expect("4 qubits")
            }
        })
        .collect();
    'outer: for idx in 0..dim {
        let mut val = Cplx::new(1.0, 0.0);
        let mut covered = vec![false; m];
        for (jj, block) in p.projection_blocks.iter().enumerate() {
            let mut sub = 0usize;
            for (pos_idx, &pos) in block.iter().enumerate() {
                covered[pos] = true;
                if (idx >> pos) & 1 == 1 {
                    sub |= 1 << pos_idx;
                }
            }
            val *= block_states[jj].amp[sub];
            if val == Cplx::new(0.0, 0.0) {
                amp[idx] = val;
                continue 'outer;
            }
        }
        // all other positions (live or dead carriers) must be zero
        for pos in 0..m {
            if !covered[pos] && (idx >> pos) & 1 == 1 {
                amp[idx] = Cplx::new(0.0, 0.0);
                continue 'outer;
            }
        }
        amp[idx] = val;
    }
    Ok(DenseState { m, amp })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn haar_2x2(rng: &mut ChaCha8Rng) -> CMatrix {
        let a = Cplx::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        let b = Cplx::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
        let (a, b) = (a / n, b / n);
        let phase = Cplx::from_polar(1.0, rng.random::<f64>() * 6.28);
        CMatrix::from_row_slice(2, 2, &[a, -b.conj() * phase, b, a.conj() * phase])
    }

    #[test]
    fn parse_simple_circuit() {
        let text = "qubits 4\ninput 0000\ncphase 3.14159265 0\noutput 0000\n";
        let c = parse_circuit(text, None).unwrap();
        assert_eq!(c.n, 4);
        assert_eq!(c.gates.len(), 1);
        assert!(matches!(c.gates[0], Gate::ControlledPhase { q: 0, .. }));
    }

    #[test]
    fn parse_elem_line() {
        let text = "qubits 4\nelem 0.7853981633974483 0 2\n";
        let c = parse_circuit(text, None).unwrap();
        match &c.gates[0] {
            Gate::Elementary { mu, j, k } => {
                assert!((mu - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
                assert_eq!((*j, *k), (0, 2));
            }
            _ => panic!("wrong gate"),
        }
    }

    #[test]
    fn parity_violation_rejected() {
        let text = "qubits 4\ninput 0001\n";
        let err = parse_circuit(text, None).unwrap_err();
        assert_eq!(err.code, DiagCode::Parity);
        assert_eq!(err.line, 2);
    }

    #[test]
    fn qubit_range_rejected() {
        let text = "qubits 2\ncphase 0.4 1\n";
        let err = parse_circuit(text, None).unwrap_err();
        assert_eq!(err.code, DiagCode::QubitRange);
    }

    #[test]
    fn non_matchgate_rejected() {
        // A = I, B = diag(1, 2): not unitary
        let text = "qubits 2\nmg 0 1 0 0 0 0 0 1 0 1 0 0 0 0 0 2 0\n";
        let err = parse_circuit(text, None).unwrap_err();
        assert_eq!(err.code, DiagCode::NotMatchgate);
    }

    #[test]
    fn print_parse_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(111);
        let a = haar_2x2(&mut rng);
        let deta = det2(&a);
        // adjust B to share the determinant: B := U with det fixed
        let mut b = haar_2x2(&mut rng);
        let detb = det2(&b);
        let fix = (deta / detb).sqrt();
        b *= fix;
        let c = Circuit {
            n: 4,
            gates: vec![
                Gate::Matchgate { q: 1, a, b },
                Gate::Elementary {
                    mu: -1.234567890123456,
                    j: 0,
                    k: 5,
                },
                Gate::ControlledPhase {
                    theta: 0.3,
                    q: 2,
                },
            ],
            input: vec![true, true, false, false],
            output: OutputSpec::Masked {
                measured: vec![false, false],
                total: 4,
            },
        };
        let text = print_circuit(&c).unwrap();
        let c2 = parse_circuit(&text, None).unwrap();
        let text2 = print_circuit(&c2).unwrap();
        assert_eq!(text, text2, "printer is not a fixed point of parse∘print");
    }

    #[test]
    fn matchgate_generator_identity() {
        let id = CMatrix::identity(2, 2);
        let (alpha, phase) = matchgate_to_generator(&id, &id).unwrap();
        assert!(alpha.entries().abs().max() < 1e-12);
        assert!((phase - Cplx::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn matchgate_generator_reproduces_gate() {
        let mut rng = ChaCha8Rng::seed_from_u64(112);
        for trial in 0..8 {
            let a = haar_2x2(&mut rng);
            let mut b = haar_2x2(&mut rng);
            let fix = (det2(&a) / det2(&b)).sqrt();
            b *= fix;
            let (alpha, phase) = matchgate_to_generator(&a, &b).unwrap();
            let dense = dense_oracle::flo_generator_matrix(2, alpha.entries()) * phase;
            let want = matchgate_matrix(&a, &b);
            let err = (&dense - &want)
                .iter()
                .fold(0.0f64, |acc, z| acc.max(z.norm()));
            assert!(err < 1e-9, "trial {trial}: matchgate residual {err:.2e}");
        }
    }

    #[test]
    fn matchgate_generator_hh() {
        // G(H, H)|00⟩ = (|00⟩ + |11⟩)/√2
        let r = 1.0 / (2.0f64).sqrt();
        let h = CMatrix::from_row_slice(
            2,
            2,
            &[
                Cplx::new(r, 0.0),
                Cplx::new(r, 0.0),
                Cplx::new(r, 0.0),
                Cplx::new(-r, 0.0),
            ],
        );
        let (alpha, phase) = matchgate_to_generator(&h, &h).unwrap();
        let vac = DenseState::vacuum(2).unwrap();
        let out = dense_oracle::apply_flo_generator(&vac, alpha.entries()).scale(phase);
        assert!((out.amp[0b00] - Cplx::new(r, 0.0)).norm() < 1e-10);
        assert!((out.amp[0b11] - Cplx::new(r, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn fswap_on_even_parity_acts_as_swap() {
        // dense check on all even-parity basis inputs of 4 qubits
        let one = Cplx::new(1.0, 0.0);
        let zero = Cplx::new(0.0, 0.0);
        let z = CMatrix::from_row_slice(2, 2, &[one, zero, zero, -one]);
        let x = CMatrix::from_row_slice(2, 2, &[zero, one, one, zero]);
        let fswap = matchgate_matrix(&z, &x);
        for idx in 0..16usize {
            if idx.count_ones() % 2 != 0 {
                continue;
            }
            let bits: Vec<bool> = (0..4).map(|i| (idx >> i) & 1 == 1).collect();
            let s = DenseState::basis_state(4, &bits).unwrap();
            let swapped = dense_oracle::apply_local(&s, 1, 2, &fswap);
            let mut want_bits = bits.clone();
            want_bits.swap(1, 2);
            let want = DenseState::basis_state(4, &want_bits).unwrap();
            // fSWAP = SWAP·CZ and CZ acts trivially unless both bits are 1;
            // with both 1 the block parity is even and the phase is −1 — the
            // property needed by the compiler is restricted to the carried
            // blocks where one side is promised |0⟩ or an even pair.
            let overlap = swapped.inner(&want).norm();
            assert!(
                (overlap - 1.0).abs() < 1e-12,
                "idx {idx:04b}: |overlap| = {overlap}"
            );
        }
    }

    #[test]
    fn gadgetize_k0_is_flo_only() {
        let text = "qubits 4\ninput 1100\nelem 0.4 0 2\noutput 0000\n";
        let c = parse_circuit(text, None).unwrap();
        let p = gadgetize(&c).unwrap();
        assert_eq!(p.scale_exponent, 0);
        assert_eq!(p.total_qubits, 4);
        assert!(p.projection_blocks.is_empty());
    }

    #[test]
    fn gadget_identity_single_cz() {
        // p = 16 |⟨bra| Ṽ |0⟩|² equals the dense Born probability
        let mut rng = ChaCha8Rng::seed_from_u64(113);
        for &theta in &[std::f64::consts::PI, std::f64::consts::FRAC_PI_2, 0.3] {
            let a = haar_2x2(&mut rng);
            let mut b = haar_2x2(&mut rng);
            let fix = (det2(&a) / det2(&b)).sqrt();
            b *= fix;
            let c = Circuit {
                n: 2,
                gates: vec![
                    Gate::Matchgate { q: 0, a, b },
                    Gate::ControlledPhase { theta, q: 0 },
                ],
                input: vec![false, false],
                output: OutputSpec::Full(vec![false, false]),
            };
            let want = dense_born(&c).unwrap();
            let p = gadgetize(&c).unwrap();
            let psi = dense_evolve_program(&p).unwrap();
            let bra = dense_program_bra(&p, None).unwrap();
            let got = 16.0f64.powi(p.scale_exponent as i32) * bra.inner(&psi).norm_sqr();
            assert!(
                (got - want).abs() < 1e-10,
                "θ = {theta}: gadget {got} vs dense {want}"
            );
        }
    }

    #[test]
    fn gadget_norm_law() {
        // each projected gadget divides the norm by exactly 4
        let c = Circuit {
            n: 2,
            gates: vec![Gate::ControlledPhase {
                theta: 1.1,
                q: 0,
            }],
            input: vec![false, false],
            output: OutputSpec::Full(vec![false, false]),
        };
        let p = gadgetize(&c).unwrap();
        let psi = dense_evolve_program(&p).unwrap();
        // project the single gadget block onto |M_θ⟩ and measure the norm
        let block = p.projection_blocks[0];
        let mstate = dense_oracle::magic_state_dense(p.magic_angles[0]);
        let dim = 1usize << p.total_qubits;
        let mut projected = crate::CVector::zeros(dim);
        // P = |M⟩⟨M| on the block
        for idx in 0..dim {
            let mut sub = 0usize;
            for (pos_idx, &pos) in block.iter().enumerate() {
                if (idx >> pos) & 1 == 1 {
                    sub |= 1 << pos_idx;
                }
            }
            // ⟨M|ψ⟩ partial contraction: accumulate over the block bits
            let coeff = mstate.amp[sub].conj();
            if coeff != Cplx::new(0.0, 0.0) {
                projected[idx] = coeff * psi.amp[idx];
            }
        }
        // sum over block bits for each configuration of the rest
        let mut norm2 = 0.0;
        let rest_mask: usize = (0..p.total_qubits)
            .filter(|pos| !block.contains(pos))
            .map(|pos| 1usize << pos)
            .sum();
        let mut seen = std::collections::HashMap::new();
        for idx in 0..dim {
            let rest = idx & rest_mask;
            *seen.entry(rest).or_insert(Cplx::new(0.0, 0.0)) += projected[idx];
        }
        for (_, v) in seen {
            norm2 += v.norm_sqr();
        }
        assert!(
            (norm2.sqrt() - 0.25).abs() < 1e-10,
            "projected norm {} (want 1/4)",
            norm2.sqrt()
        );
    }

    #[test]
    fn gadget_identity_with_input_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(114);
        let a = haar_2x2(&mut rng);
        let mut b = haar_2x2(&mut rng);
        let fix = (det2(&a) / det2(&b)).sqrt();
        b *= fix;
        let c = Circuit {
            n: 4,
            gates: vec![
                Gate::Elementary { mu: 0.8, j: 1, k: 4 },
                Gate::ControlledPhase { theta: 2.2, q: 1 },
                Gate::Matchgate { q: 2, a, b },
            ],
            input: vec![true, false, true, false],
            output: OutputSpec::Full(vec![false, true, true, false]),
        };
        let want = dense_born(&c).unwrap();
        let p = gadgetize(&c).unwrap();
        let psi = dense_evolve_program(&p).unwrap();
        let bra = dense_program_bra(&p, None).unwrap();
        let got = 16.0f64.powi(p.scale_exponent as i32) * bra.inner(&psi).norm_sqr();
        assert!(
            (got - want).abs() < 1e-9,
            "gadget {got} vs dense {want}"
        );
    }

    #[test]
    fn gadget_identity_two_gates_same_pair() {
        let c = Circuit {
            n: 2,
            gates: vec![
                Gate::ControlledPhase { theta: 0.9, q: 0 },
                Gate::Elementary { mu: 0.5, j: 0, k: 3 },
                Gate::ControlledPhase { theta: -1.7, q: 0 },
            ],
            input: vec![true, true],
            output: OutputSpec::Full(vec![true, true]),
        };
        let want = dense_born(&c).unwrap();
        let p = gadgetize(&c).unwrap();
        assert_eq!(p.total_qubits, 10);
        let psi = dense_evolve_program(&p).unwrap();
        let bra = dense_program_bra(&p, None).unwrap();
        let got = 16.0f64.powi(2) * bra.inner(&psi).norm_sqr();
        assert!(
            (got - want).abs() < 1e-9,
            "two-gadget {got} vs dense {want}"
        );
    }

    #[test]
    fn gadget_identity_neighbouring_pairs() {
        let c = Circuit {
            n: 4,
            gates: vec![
                Gate::ControlledPhase { theta: 1.3, q: 0 },
                Gate::Elementary { mu: -0.4, j: 2, k: 5 },
                Gate::ControlledPhase { theta: 0.6, q: 1 },
            ],
            input: vec![false, false, false, false],
            output: OutputSpec::Full(vec![false, false, false, false]),
        };
        let want = dense_born(&c).unwrap();
        let p = gadgetize(&c).unwrap();
        let psi = dense_evolve_program(&p).unwrap();
        let bra = dense_program_bra(&p, None).unwrap();
        let got = 16.0f64.powi(2) * bra.inner(&psi).norm_sqr();
        assert!(
            (got - want).abs() < 1e-9,
            "neighbour-gadget {got} vs dense {want}"
        );
    }
}
