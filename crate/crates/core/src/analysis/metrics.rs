//! State and process metrics: fidelities, the four-qubit GHZ entanglement
//! witness, Bell-error bias diagnostics, dephasing-correlation factor, and
//! Pauli-transfer / error-generator representations of channels.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::{self, logm_real, pauli_string, CMat, CVec, C64};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("ideal PTM is singular")]
    SingularIdeal,
    #[error("principal logarithm failed: {0}")]
    PrincipalBranch(String),
}

/// ⟨ψ|ρ|ψ⟩ for a pure target.
pub fn state_fidelity(rho: &CMat, psi: &CVec) -> Result<f64, MetricsError> {
    if rho.nrows() != psi.len() || rho.ncols() != psi.len() {
        return Err(MetricsError::DimensionMismatch(format!(
            "{}x{} state vs {}-dim target",
            rho.nrows(),
            rho.ncols(),
            psi.len()
        )));
    }
    Ok((psi.adjoint() * rho * psi)[(0, 0)].re)
}

/// Population-transfer overlap of two truth tables (columns indexed by
/// input state, rows by measured state): Tr(P_idealᵀ·P_exp)/2ⁿ. Equals 1
/// exactly when every input maps to its ideal output with certainty.
pub fn truth_table_fidelity(
    p_exp: &DMatrix<f64>,
    p_ideal: &DMatrix<f64>,
) -> Result<f64, MetricsError> {
    if p_exp.shape() != p_ideal.shape() || p_exp.nrows() != p_exp.ncols() {
        return Err(MetricsError::DimensionMismatch(format!(
            "{:?} vs {:?}",
            p_exp.shape(),
            p_ideal.shape()
        )));
    }
    Ok((p_ideal.transpose() * p_exp).trace() / p_exp.nrows() as f64)
}

// ---------------------------------------------------------------------------
// GHZ witness
// ---------------------------------------------------------------------------

/// In-plane measurement operator M_k = cos(kπ/4)·X + sin(kπ/4)·Y.
pub fn witness_axis_operator(k: usize) -> CMat {
    let theta = k as f64 * std::f64::consts::FRAC_PI_4;
    let mut m = CMat::zeros(2, 2);
    m[(0, 1)] = C64::new(theta.cos(), -theta.sin());
    m[(1, 0)] = C64::new(theta.cos(), theta.sin());
    m
}

/// The measured ingredients of the four-qubit GHZ witness: the two extreme
/// populations and the four ⟨M_k^{⊗4}⟩ in-plane correlators.
#[derive(Debug, Clone, Copy)]
pub struct WitnessData {
    pub p_all_down: f64,
    pub p_all_up: f64,
    /// ⟨M_k^{⊗4}⟩ for k = 1..4.
    pub coherences: [f64; 4],
}

#[derive(Debug, Clone, Copy)]
pub struct WitnessResult {
    /// ⟨W_G⟩ = ½ − F; negative values witness genuine 4-partite
    /// entanglement.
    pub expectation: f64,
    /// GHZ fidelity from the local decomposition.
    pub fidelity: f64,
}

/// Evaluate the witness from measured populations and correlators:
/// F = ½(P_{0000} + P_{1111}) + ⅛·Σ_{k=1..4} (−1)^k⟨M_k^{⊗4}⟩ and
/// ⟨W_G⟩ = ½ − F. The decomposition is exact: the alternating sum of the
/// four in-plane settings isolates the |0000⟩⟨1111| coherence.
pub fn ghz_witness(data: &WitnessData) -> WitnessResult {
    let mut fidelity = 0.5 * (data.p_all_down + data.p_all_up);
    for k in 1..=4 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        fidelity += 0.125 * sign * data.coherences[k - 1];
    }
    WitnessResult { expectation: 0.5 - fidelity, fidelity }
}

/// Exact witness ingredients of a 16×16 density matrix.
pub fn witness_data_from_state(rho: &CMat) -> Result<WitnessData, MetricsError> {
    if rho.nrows() != 16 || rho.ncols() != 16 {
        return Err(MetricsError::DimensionMismatch(format!(
            "{}x{} state, need 16x16",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let mut coherences = [0.0; 4];
    for k in 1..=4 {
        let m1 = witness_axis_operator(k);
        let m4 = linalg::kron_all(&[m1.clone(), m1.clone(), m1.clone(), m1]);
        coherences[k - 1] = (rho * m4).trace().re;
    }
    Ok(WitnessData {
        p_all_down: rho[(0, 0)].re,
        p_all_up: rho[(15, 15)].re,
        coherences,
    })
}

/// ⟨GHZ|ρ|GHZ⟩ with |GHZ⟩ = (|0000⟩ + |1111⟩)/√2, the projector reference
/// the witness decomposition must reproduce.
pub fn ghz_projector_fidelity(rho: &CMat) -> Result<f64, MetricsError> {
    if rho.nrows() != 16 || rho.ncols() != 16 {
        return Err(MetricsError::DimensionMismatch("need a 16x16 state".into()));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut ghz = CVec::zeros(16);
    ghz[0] = C64::new(h, 0.0);
    ghz[15] = C64::new(h, 0.0);
    state_fidelity(rho, &ghz)
}

// ---------------------------------------------------------------------------
// Dephasing-correlation factor
// ---------------------------------------------------------------------------

/// Noise-correlation factor between the two code spins from single-spin
/// and Bell-state dephasing times:
/// C = (T₂ᴬ·T₂ᴮ/4)·[(1/T₂(Φ))² − (1/T₂(Ψ))²]. C = 0 for independent
/// noise, 1 for fully correlated noise, −1 for fully anticorrelated.
pub fn correlation_factor(t2_a: f64, t2_b: f64, t2_phi: f64, t2_psi: f64) -> f64 {
    (t2_a * t2_b / 4.0) * ((t2_phi * t2_phi).recip() - (t2_psi * t2_psi).recip())
}

// ---------------------------------------------------------------------------
// Bell-error bias
// ---------------------------------------------------------------------------

use crate::circuits::BellState;

/// Bell-basis error populations of a two-qubit state relative to a target
/// Bell state: `e_z` is the phase-flip partner, `e_x` the bit-flip partner,
/// `e_y` the combined flip.
#[derive(Debug, Clone, Copy)]
pub struct BiasBudget {
    pub e_z: f64,
    pub e_x: f64,
    pub e_y: f64,
    /// e_z/e_x; +∞ when no bit-flip population exists.
    pub ratio: f64,
}

fn bell_pauli_index(which: BellState) -> usize {
    // Index into {I, Z, X, Y} such that (I ⊗ σ)|Φ+⟩ ∝ the Bell state.
    match which {
        BellState::PhiPlus => 0,
        BellState::PhiMinus => 1,
        BellState::PsiPlus => 2,
        BellState::PsiMinus => 3,
    }
}

fn bell_for_pauli_index(i: usize) -> BellState {
    match i {
        0 => BellState::PhiPlus,
        1 => BellState::PhiMinus,
        2 => BellState::PsiPlus,
        3 => BellState::PsiMinus,
        _ => unreachable!(),
    }
}

/// Projective product in {I, Z, X, Y} (phases dropped): the Bell state a
/// single-qubit Pauli error maps the target onto is the product of their
/// Pauli labels.
fn pauli_product(a: usize, b: usize) -> usize {
    match (a, b) {
        (0, x) | (x, 0) => x,
        (x, y) if x == y => 0,
        (1, 2) | (2, 1) => 3, // Z·X ∝ Y
        (1, 3) | (3, 1) => 2, // Z·Y ∝ X
        (2, 3) | (3, 2) => 1, // X·Y ∝ Z
        _ => unreachable!(),
    }
}

/// Error-bias analysis of a 4×4 two-qubit state against a Bell target.
pub fn bias_ratio(rho: &CMat, target: BellState) -> Result<BiasBudget, MetricsError> {
    if rho.nrows() != 4 || rho.ncols() != 4 {
        return Err(MetricsError::DimensionMismatch(format!(
            "{}x{} state, need 4x4",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let t = bell_pauli_index(target);
    let population = |error_pauli: usize| -> f64 {
        let partner = bell_for_pauli_index(pauli_product(error_pauli, t));
        let psi = partner.statevector();
        (psi.adjoint() * rho * psi)[(0, 0)].re
    };
    let e_z = population(1);
    let e_x = population(2);
    let e_y = population(3);
    let ratio = if e_x > 0.0 { e_z / e_x } else { f64::INFINITY };
    Ok(BiasBudget { e_z, e_x, e_y, ratio })
}

// ---------------------------------------------------------------------------
// Pauli transfer matrices and error generators
// ---------------------------------------------------------------------------

/// The 4ⁿ Pauli strings in base-4 digit order (digit 0 = I, 1 = X, 2 = Y,
/// 3 = Z; qubit 0 = most significant digit).
pub fn pauli_basis(n_qubits: usize) -> Vec<CMat> {
    let count = 1usize << (2 * n_qubits);
    (0..count)
        .map(|idx| {
            let digits: Vec<usize> =
                (0..n_qubits).rev().map(|q| (idx >> (2 * q)) & 3).collect();
            pauli_string(&digits)
        })
        .collect()
}

/// Pauli transfer matrix of a channel: R_ij = Tr(P_i·Λ(P_j))/2ⁿ. Rows and
/// columns follow [`pauli_basis`] order; the matrix is real for any
/// Hermiticity-preserving channel.
pub fn ptm_of_channel(
    n_qubits: usize,
    apply: &dyn Fn(&CMat) -> CMat,
) -> DMatrix<f64> {
    let basis = pauli_basis(n_qubits);
    let dim = basis.len();
    let norm = (1usize << n_qubits) as f64;
    let mut ptm = DMatrix::<f64>::zeros(dim, dim);
    for (j, pj) in basis.iter().enumerate() {
        let mapped = apply(pj);
        for (i, pi) in basis.iter().enumerate() {
            ptm[(i, j)] = (pi * &mapped).trace().re / norm;
        }
    }
    ptm
}

/// PTM of a unitary conjugation ρ ↦ UρU†.
pub fn ptm_of_unitary(n_qubits: usize, u: &CMat) -> DMatrix<f64> {
    ptm_of_channel(n_qubits, &|p| u * p * u.adjoint())
}

/// Error generator of an experimental channel against its ideal:
/// 𝓛 = log(M_exp·M_ideal⁻¹), the principal matrix logarithm in PTM space.
#[derive(Debug, Clone)]
pub struct ErrorGenerator {
    pub matrix: DMatrix<f64>,
    /// Distance of the closest eigenvalue of M_exp·M_ideal⁻¹ to the
    /// negative real axis (relative to its modulus). Values near zero mean
    /// the principal branch is ambiguous and the generator untrustworthy.
    pub branch_margin: f64,
}

pub fn error_generator(
    ptm_exp: &DMatrix<f64>,
    ptm_ideal: &DMatrix<f64>,
) -> Result<ErrorGenerator, MetricsError> {
    if ptm_exp.shape() != ptm_ideal.shape() {
        return Err(MetricsError::DimensionMismatch(format!(
            "{:?} vs {:?}",
            ptm_exp.shape(),
            ptm_ideal.shape()
        )));
    }
    let inv = ptm_ideal.clone().try_inverse().ok_or(MetricsError::SingularIdeal)?;
    let result = logm_real(&(ptm_exp * inv)).map_err(MetricsError::PrincipalBranch)?;
    Ok(ErrorGenerator { matrix: result.log, branch_margin: result.negative_axis_margin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eye;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_density(dim: usize, rng: &mut ChaCha12Rng) -> CMat {
        let g = CMat::from_fn(dim, dim, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let rho = &g * g.adjoint();
        let tr = rho.trace().re;
        rho.unscale(tr)
    }

    fn ghz_state() -> CMat {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut psi = CVec::zeros(16);
        psi[0] = C64::new(h, 0.0);
        psi[15] = C64::new(h, 0.0);
        &psi * psi.adjoint()
    }

    #[test]
    fn fidelity_and_truth_table_basics() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let rho = random_density(4, &mut rng);
        // ρ = |ψ⟩⟨ψ| → fidelity 1 for its own eigenvector.
        let mut psi = CVec::zeros(4);
        psi[2] = C64::new(1.0, 0.0);
        let pure = &psi * psi.adjoint();
        assert_abs_diff_eq!(state_fidelity(&pure, &psi).unwrap(), 1.0, epsilon = 1e-12);
        assert!(state_fidelity(&rho, &psi).unwrap() <= 1.0 + 1e-12);
        assert!(state_fidelity(&rho, &CVec::zeros(3)).is_err());

        // Identical permutation truth tables → 1; uniform table → 1/2ⁿ.
        let mut perm = DMatrix::<f64>::zeros(8, 8);
        for j in 0..8 {
            let out = if j >= 6 { 6 + (7 - j) } else { j }; // swap last two
            perm[(out, j)] = 1.0;
        }
        assert_abs_diff_eq!(truth_table_fidelity(&perm, &perm).unwrap(), 1.0, epsilon = 1e-12);
        let uniform = DMatrix::<f64>::from_element(8, 8, 1.0 / 8.0);
        assert_abs_diff_eq!(
            truth_table_fidelity(&uniform, &perm).unwrap(),
            1.0 / 8.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn witness_hits_the_exact_anchor_values() {
        let data = witness_data_from_state(&ghz_state()).unwrap();
        let w = ghz_witness(&data);
        assert_abs_diff_eq!(w.fidelity, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.expectation, -0.5, epsilon = 1e-12);

        let mixed = CMat::identity(16, 16).unscale(16.0);
        let w = ghz_witness(&witness_data_from_state(&mixed).unwrap());
        assert_abs_diff_eq!(w.expectation, 0.5 - 1.0 / 16.0, epsilon = 1e-12);
    }

    #[test]
    fn witness_decomposition_equals_projector_on_random_states() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..100 {
            let rho = random_density(16, &mut rng);
            let via_decomposition = ghz_witness(&witness_data_from_state(&rho).unwrap()).fidelity;
            let via_projector = ghz_projector_fidelity(&rho).unwrap();
            assert_abs_diff_eq!(via_decomposition, via_projector, epsilon = 1e-9);
        }
    }

    #[test]
    fn correlation_factor_matches_measured_and_limit_cases() {
        let c = correlation_factor(349e-6, 788e-6, 262e-6, 265e-6);
        assert!((0.022..0.024).contains(&c), "C = {c}");
        assert_abs_diff_eq!(correlation_factor(349e-6, 788e-6, 3e-4, 3e-4), 0.0, epsilon = 1e-15);
        // Fully correlated construction: 1/T_Φ² − 1/T_Ψ² = 4/(T_a·T_b).
        let t = 500e-6;
        assert_abs_diff_eq!(
            correlation_factor(t, t, t / 2.0, f64::INFINITY),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn bias_ratio_classifies_bell_error_populations() {
        // Pure |Φ−⟩ against target |Φ+⟩: all weight in the Z partner.
        let psi = BellState::PhiMinus.statevector();
        let rho = &psi * psi.adjoint();
        let b = bias_ratio(&rho, BellState::PhiPlus).unwrap();
        assert_abs_diff_eq!(b.e_z, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.e_x, 0.0, epsilon = 1e-12);
        assert!(b.ratio.is_infinite());

        // Depolarized Bell state: all three error populations equal.
        let target = BellState::PsiMinus.statevector();
        let pure = &target * target.adjoint();
        let p = 0.2;
        let rho = pure.scale(1.0 - p) + CMat::identity(4, 4).scale(p / 4.0);
        let b = bias_ratio(&rho, BellState::PsiMinus).unwrap();
        assert_abs_diff_eq!(b.e_z, p / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.e_x, p / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.e_y, p / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.ratio, 1.0, epsilon = 1e-12);

        // Partner identification respects the Pauli algebra: a Z error on
        // |Ψ−⟩ lands in |Ψ+⟩.
        let z_err = {
            let mut z = CMat::identity(2, 2);
            z[(1, 1)] = C64::new(-1.0, 0.0);
            linalg::kron(&eye(2), &z)
        };
        let flipped = &z_err * &pure * z_err.adjoint();
        let b = bias_ratio(&flipped, BellState::PsiMinus).unwrap();
        assert_abs_diff_eq!(b.e_z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ptm_and_error_generator_closed_forms() {
        // Identity channel: PTM = identity, generator = 0.
        let ptm_id = ptm_of_channel(1, &|p| p.clone());
        assert!((&ptm_id - DMatrix::<f64>::identity(4, 4)).norm() < 1e-12);
        let gen = error_generator(&ptm_id, &ptm_id).unwrap();
        assert!(gen.matrix.norm() < 1e-10);

        // Exact X_{π/2} against itself: generator 0.
        let u = crate::circuits::rotation_matrix(std::f64::consts::FRAC_PI_2, 0.0);
        let ptm_x = ptm_of_unitary(1, &u);
        let gen = error_generator(&ptm_x, &ptm_x).unwrap();
        assert!(gen.matrix.norm() < 1e-10, "norm {}", gen.matrix.norm());

        // Depolarizing(p): PTM = diag(1, 1−p, 1−p, 1−p), generator
        // diagonal log(1−p) on the traceless block.
        let p = 0.13;
        let depol = |rho: &CMat| -> CMat {
            let tr = rho.trace();
            rho.scale(1.0 - p) + eye(2).scale(0.5 * p) * tr
        };
        let ptm_d = ptm_of_channel(1, &depol);
        let mut expected = DMatrix::<f64>::identity(4, 4).scale(1.0 - p);
        expected[(0, 0)] = 1.0;
        assert!((&ptm_d - &expected).norm() < 1e-12);
        let gen = error_generator(&ptm_d, &DMatrix::<f64>::identity(4, 4)).unwrap();
        for i in 0..4 {
            let want = if i == 0 { 0.0 } else { (1.0 - p).ln() };
            assert_abs_diff_eq!(gen.matrix[(i, i)], want, epsilon = 1e-9);
        }
        assert!(gen.branch_margin > 0.9);

        // Singular ideal and negative-axis eigenvalues are reported.
        assert!(matches!(
            error_generator(&ptm_id, &DMatrix::<f64>::zeros(4, 4)),
            Err(MetricsError::SingularIdeal)
        ));
        let mut flip = DMatrix::<f64>::identity(4, 4);
        flip[(3, 3)] = -1.0;
        assert!(matches!(
            error_generator(&flip, &DMatrix::<f64>::identity(4, 4)),
            Err(MetricsError::PrincipalBranch(_))
        ));
    }
}
