//! Four-qubit stabilizer error detection and Pauli-frame-update recovery.
//!
//! The register's four nuclei take fixed roles: N2 and N3 are the code
//! qubits holding a Bell codeword, N1 measures the X-type parity Ŝ^X = XX
//! and N4 the Z-type parity Ŝ^Z = ZZ (a [[2,0,2]] code — zero logical
//! qubits, distance two: it detects but cannot correct on its own). A
//! single-qubit Pauli error moves the codeword to another Bell state and
//! flips the stabilizer(s) it anticommutes with, so the ancilla outcomes
//! (read ⇓ ↦ 0, ⇑ ↦ 1) identify the error subspace:
//!
//! | syndrome (sz, sx) | state | error on a code qubit |
//! |-------------------|-------|-----------------------|
//! | (0, 0)            | Φ+    | none                  |
//! | (0, 1)            | Φ−    | Z                     |
//! | (1, 0)            | Ψ+    | X                     |
//! | (1, 1)            | Ψ−    | Y                     |
//!
//! The X-type stabilizer is extracted *first*: phase flips dominate this
//! platform's noise, and any code-qubit dephasing after the Ŝ^X parity has
//! been imprinted on N1 goes undetected.
//!
//! Recovery is classical post-processing (Pauli frame update): no feedback
//! pulse is applied; instead each syndrome branch is relabeled by the Pauli
//! that maps its Bell state back to the target, and the corrected density
//! matrix is the probability-weighted sum of the relabeled branches. The
//! Z-only variant corrects nothing but the phase flips flagged by Ŝ^X.

use serde::Serialize;
use thiserror::Error;

use crate::circuits::{
    apply_circuit, bell_prep_circuit, Basis, BellState, Circuit, CircuitOp, ErrorAxis,
    ExecOptions,
};
use crate::dynamics::{DensityMatrix, DynamicsError, EvolutionContext};
use crate::linalg::{kron, CMat, C64};
use crate::spin::Register;

/// Register qubit measuring Ŝ^X = XX (nucleus N1).
pub const SX_ANCILLA: usize = 1;
/// First code qubit (nucleus N2).
pub const CODE_QUBIT_A: usize = 2;
/// Second code qubit (nucleus N3).
pub const CODE_QUBIT_B: usize = 3;
/// Register qubit measuring Ŝ^Z = ZZ (nucleus N4).
pub const SZ_ANCILLA: usize = 4;

/// Syndrome pairs (sz, sx) in the display order used throughout.
pub const SYNDROME_ORDER: [(u8, u8); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("the detection protocol needs four active nuclei, register has {0}")]
    WrongRegister(usize),
    #[error("circuit is missing the Z-basis measurement on ancilla q{0}")]
    MissingMeasurement(usize),
    #[error("ancilla measurements must be Z-basis and terminal; found {0}")]
    BadMeasurement(String),
    #[error("injected errors must target a code qubit (2 or 3), got q{0}")]
    NotACodeQubit(usize),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Input state of the code qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Codeword {
    /// One of the four Bell codewords.
    Bell(BellState),
    /// (|⇓⇓⟩ + |⇓⇑⟩)/√2 — the uniform superposition of all four Bell
    /// codewords, splitting the detection into four equal branches.
    Uniform,
}

impl Codeword {
    /// Preparation circuit from |⇓⇓⟩ on the code qubits.
    pub fn prep_circuit(self, reg: &Register) -> Circuit {
        match self {
            Codeword::Bell(which) => bell_prep_circuit(reg, CODE_QUBIT_A, CODE_QUBIT_B, which),
            Codeword::Uniform => Circuit::new().hadamard(CODE_QUBIT_B),
        }
    }

    /// Code-space amplitudes (|⇓⇓⟩, |⇓⇑⟩, |⇑⇓⟩, |⇑⇑⟩ order).
    pub fn statevector(self) -> nalgebra::DVector<C64> {
        match self {
            Codeword::Bell(which) => which.statevector(),
            Codeword::Uniform => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                nalgebra::DVector::from_vec(vec![
                    C64::new(h, 0.0),
                    C64::new(h, 0.0),
                    C64::new(0.0, 0.0),
                    C64::new(0.0, 0.0),
                ])
            }
        }
    }
}

/// A deliberate coherent fault e^{−iθ(n̂·σ)/2} on one code qubit.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InjectedError {
    /// Register qubit, 2 or 3.
    pub code_qubit: usize,
    pub theta: f64,
    pub axis: ErrorAxis,
}

/// Ŝ^X extraction: N1 in |+⟩ kicks the XX parity back onto itself through
/// two CNOTs, then returns to the Z basis.
pub fn sx_stabilizer_block(reg: &Register) -> Circuit {
    let mut c = Circuit::new().hadamard(SX_ANCILLA);
    c.extend(&crate::circuits::cnot_geometric(reg, SX_ANCILLA, CODE_QUBIT_A));
    c.extend(&crate::circuits::cnot_geometric(reg, SX_ANCILLA, CODE_QUBIT_B));
    c.hadamard(SX_ANCILLA)
}

/// Ŝ^Z extraction: N4 accumulates the ZZ parity of the code qubits.
pub fn sz_stabilizer_block(reg: &Register) -> Circuit {
    let mut c = Circuit::new();
    c.extend(&crate::circuits::cnot_geometric(reg, CODE_QUBIT_A, SZ_ANCILLA));
    c.extend(&crate::circuits::cnot_geometric(reg, CODE_QUBIT_B, SZ_ANCILLA));
    c
}

/// Both stabilizer blocks (Ŝ^X strictly first) followed by the two ancilla
/// Z measurements.
pub fn stabilizer_measurement_circuit(reg: &Register) -> Circuit {
    let mut c = sx_stabilizer_block(reg);
    c.extend(&sz_stabilizer_block(reg));
    c.measure(SX_ANCILLA, Basis::Z).measure(SZ_ANCILLA, Basis::Z)
}

/// The full protocol: codeword preparation, a wait, an optional injected
/// fault, then stabilizer extraction and ancilla measurement.
pub fn error_detection_circuit(
    reg: &Register,
    codeword: Codeword,
    error: Option<InjectedError>,
    t_wait: f64,
) -> Result<Circuit, DetectionError> {
    if reg.n_nuclei() != 4 {
        return Err(DetectionError::WrongRegister(reg.n_nuclei()));
    }
    let mut c = codeword.prep_circuit(reg);
    if t_wait > 0.0 {
        c = c.wait(t_wait);
    }
    if let Some(e) = error {
        if e.code_qubit != CODE_QUBIT_A && e.code_qubit != CODE_QUBIT_B {
            return Err(DetectionError::NotACodeQubit(e.code_qubit));
        }
        c = c.inject_error(e.code_qubit, e.theta, e.axis);
    }
    c.extend(&stabilizer_measurement_circuit(reg));
    Ok(c)
}

/// One syndrome branch of a detection run.
#[derive(Debug, Clone)]
pub struct SyndromeRecord {
    pub sx_outcome: u8,
    pub sz_outcome: u8,
    pub probability: f64,
    /// Full-register post-measurement state (ancillas collapsed).
    pub state: DensityMatrix,
    /// Reduced code-qubit density matrix (N2 ⊗ N3), renormalized.
    pub code_state: CMat,
}

/// Run a detection circuit and enumerate all four syndrome branches
/// deterministically (probabilities and conditional states, rather than
/// sampled shots). The circuit must end with Z-basis measurements on both
/// ancillas.
pub fn extract_syndrome(
    reg: &Register,
    circuit: &Circuit,
    opts: &ExecOptions,
) -> Result<Vec<SyndromeRecord>, DetectionError> {
    if reg.n_nuclei() != 4 {
        return Err(DetectionError::WrongRegister(reg.n_nuclei()));
    }
    let mut body = Circuit::new();
    let mut measured: Vec<usize> = Vec::new();
    for op in &circuit.ops {
        match op {
            CircuitOp::Measure { target, basis } => {
                if *basis != Basis::Z {
                    return Err(DetectionError::BadMeasurement(format!(
                        "{basis:?} on q{target}"
                    )));
                }
                measured.push(*target);
            }
            other => {
                if !measured.is_empty() {
                    return Err(DetectionError::BadMeasurement(
                        "gates after the ancilla measurements".into(),
                    ));
                }
                body.push(other.clone());
            }
        }
    }
    for ancilla in [SX_ANCILLA, SZ_ANCILLA] {
        if !measured.contains(&ancilla) {
            return Err(DetectionError::MissingMeasurement(ancilla));
        }
    }

    let mut state = DensityMatrix::ground(reg);
    let mut ctx = EvolutionContext::fresh(reg);
    apply_circuit(reg, &body, opts, &mut state, &mut ctx)?;
    ctx.restore_canonical(reg, &mut state);

    let n = reg.n_spins();
    let sx_bit = 1usize << (n - 1 - SX_ANCILLA);
    let sz_bit = 1usize << (n - 1 - SZ_ANCILLA);
    let dim = reg.dim();
    let mut records = Vec::with_capacity(4);
    for (sz, sx) in SYNDROME_ORDER {
        let keep = |i: usize| -> bool {
            (i & sx_bit != 0) == (sx == 1) && (i & sz_bit != 0) == (sz == 1)
        };
        let mut projected = CMat::zeros(dim, dim);
        let mut prob = 0.0;
        for i in (0..dim).filter(|&i| keep(i)) {
            prob += state.mat[(i, i)].re;
            for j in (0..dim).filter(|&j| keep(j)) {
                projected[(i, j)] = state.mat[(i, j)];
            }
        }
        let branch = if prob > 1e-14 {
            DensityMatrix { mat: projected.unscale(prob), n_spins: n }
        } else {
            // Empty branch: carry a maximally mixed placeholder so the
            // record stays well-formed (its zero weight removes it from
            // every probability-weighted average).
            DensityMatrix::maximally_mixed(n)
        };
        let code_state = branch.partial_trace_keep(&[CODE_QUBIT_A, CODE_QUBIT_B]);
        records.push(SyndromeRecord {
            sx_outcome: sx,
            sz_outcome: sz,
            probability: prob,
            state: branch,
            code_state,
        });
    }
    let total: f64 = records.iter().map(|r| r.probability).sum();
    debug_assert!((total - 1.0).abs() < 1e-9, "branch probabilities sum to {total}");
    Ok(records)
}

/// The Bell state stabilized in a given syndrome branch.
pub fn bell_state_for_syndrome(sz: u8, sx: u8) -> BellState {
    match (sz, sx) {
        (0, 0) => BellState::PhiPlus,
        (0, 1) => BellState::PhiMinus,
        (1, 0) => BellState::PsiPlus,
        (1, 1) => BellState::PsiMinus,
        _ => unreachable!("outcomes are single bits"),
    }
}

/// The single-qubit Pauli τ with (I ⊗ τ)|Φ+⟩ ∝ the given Bell state.
fn bell_pauli(which: BellState) -> CMat {
    let mut m = CMat::zeros(2, 2);
    match which {
        BellState::PhiPlus => {
            m[(0, 0)] = C64::new(1.0, 0.0);
            m[(1, 1)] = C64::new(1.0, 0.0);
        }
        BellState::PhiMinus => {
            m[(0, 0)] = C64::new(1.0, 0.0);
            m[(1, 1)] = C64::new(-1.0, 0.0);
        }
        BellState::PsiPlus => {
            m[(0, 1)] = C64::new(1.0, 0.0);
            m[(1, 0)] = C64::new(1.0, 0.0);
        }
        BellState::PsiMinus => {
            m[(0, 1)] = C64::new(0.0, -1.0);
            m[(1, 0)] = C64::new(0.0, 1.0);
        }
    }
    m
}

/// Pauli frame update: relabel every branch by the second-code-qubit Pauli
/// U_s = τ(target)·τ(branch) that maps its Bell state onto the target, and
/// average — ρ_corrected = Σ_s P(s) (I⊗U_s) ρ_s (I⊗U_s)†. Purely classical
/// post-processing; returns the corrected code-qubit density matrix.
pub fn pauli_frame_update(records: &[SyndromeRecord], target: BellState) -> CMat {
    let tau_target = bell_pauli(target);
    let eye = CMat::identity(2, 2);
    let mut acc = CMat::zeros(4, 4);
    for r in records {
        let sigma = bell_pauli(bell_state_for_syndrome(r.sz_outcome, r.sx_outcome));
        let u = kron(&eye, &(&tau_target * sigma));
        acc += (&u * &r.code_state * u.adjoint()).scale(r.probability);
    }
    acc
}

/// Z-only frame update: branches flagged by Ŝ^X (sx = 1) get the phase flip
/// undone, everything else is passed through —
/// ρ_corrected = P(sx=0)·ρ_{sx=0} + P(sx=1)·(I⊗Z)ρ_{sx=1}(I⊗Z).
pub fn pauli_frame_update_z_only(records: &[SyndromeRecord]) -> CMat {
    let z = kron(&CMat::identity(2, 2), &bell_pauli(BellState::PhiMinus));
    let mut acc = CMat::zeros(4, 4);
    for r in records {
        let rho = if r.sx_outcome == 1 {
            &z * &r.code_state * z.adjoint()
        } else {
            r.code_state.clone()
        };
        acc += rho.scale(r.probability);
    }
    acc
}

/// The detection output with *no* correction applied: Σ_s P(s) ρ_s.
pub fn uncorrected_state(records: &[SyndromeRecord]) -> CMat {
    let mut acc = CMat::zeros(4, 4);
    for r in records {
        acc += r.code_state.scale(r.probability);
    }
    acc
}

/// ⟨T|ρ|T⟩ against a Bell target.
pub fn bell_fidelity(rho: &CMat, which: BellState) -> f64 {
    let psi = which.statevector();
    (psi.adjoint() * rho * psi)[(0, 0)].re
}

/// Statevector oracle for the ideal circuit's syndrome probabilities:
/// apply the error to the codeword in the two-qubit code space and project
/// onto the four Bell states. Returns probabilities in [`SYNDROME_ORDER`].
pub fn syndrome_oracle(codeword: Codeword, error: Option<&InjectedError>) -> [f64; 4] {
    let mut psi = codeword.statevector();
    if let Some(e) = error {
        let u2 = e.axis.unitary(e.theta);
        let eye = CMat::identity(2, 2);
        let u4 = if e.code_qubit == CODE_QUBIT_A { kron(&u2, &eye) } else { kron(&eye, &u2) };
        psi = u4 * psi;
    }
    let mut out = [0.0; 4];
    for (slot, (sz, sx)) in SYNDROME_ORDER.iter().enumerate() {
        let target = bell_state_for_syndrome(*sz, *sx).statevector();
        out[slot] = (target.adjoint() * &psi)[(0, 0)].norm_sqr();
    }
    out
}
