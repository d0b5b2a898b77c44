//! State tomography: product measurement settings (per-qubit fiducials
//! {I, X_{−π/2}, Y_{π/2}} before a Z-basis readout), Pauli-expectation
//! extraction, linear inversion, and the iterative maximum-likelihood
//! reconstruction ρ ← RρR/Tr(RρR).

use rand::Rng;
use thiserror::Error;

use crate::circuits::rotation_matrix;
use crate::linalg::{eye, kron_all, pauli_string, CMat, C64};

#[derive(Debug, Error)]
pub enum TomoError {
    #[error("no measurement setting determines ⟨{0}⟩")]
    MissingExpectation(String),
    #[error("need {expected} expectation values, got {got}")]
    MissingExpectationCount { expected: usize, got: usize },
    #[error("malformed dataset: {0}")]
    BadDataset(String),
    #[error("csv parse error on line {line}: {reason}")]
    CsvParse { line: usize, reason: String },
}

/// One product measurement setting: the unitary applied to the state right
/// before an all-qubit Z-basis readout.
#[derive(Debug, Clone)]
pub struct MeasurementSetting {
    /// One letter per qubit naming the effectively measured axis.
    pub label: String,
    pub pre_rotation: CMat,
}

/// Per-qubit fiducial rotations and the axis letter each one measures.
fn fiducials() -> [(char, CMat); 3] {
    [
        ('Z', eye(2)),
        ('X', rotation_matrix(std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2)),
        ('Y', rotation_matrix(-std::f64::consts::FRAC_PI_2, 0.0)),
    ]
}

/// The 3ⁿ product settings (9 for two qubits) spanning an informationally
/// complete measurement; qubit 0 is the most significant label position.
pub fn measurement_settings(n_qubits: usize) -> Vec<MeasurementSetting> {
    let fid = fiducials();
    let count = 3usize.pow(n_qubits as u32);
    (0..count)
        .map(|idx| {
            let mut label = String::with_capacity(n_qubits);
            let mut factors = Vec::with_capacity(n_qubits);
            let mut rem = idx;
            let mut digits = vec![0usize; n_qubits];
            for q in (0..n_qubits).rev() {
                digits[q] = rem % 3;
                rem /= 3;
            }
            for &d in &digits {
                label.push(fid[d].0);
                factors.push(fid[d].1.clone());
            }
            MeasurementSetting { label, pre_rotation: kron_all(&factors) }
        })
        .collect()
}

/// Measured (or exactly computed) outcome frequencies of one setting.
#[derive(Debug, Clone)]
pub struct SettingData {
    pub label: String,
    /// POVM effects on the *unrotated* state, one per outcome.
    pub effects: Vec<CMat>,
    pub frequencies: Vec<f64>,
    /// 0 marks exact (infinite-shot) frequencies.
    pub shots: u64,
}

#[derive(Debug, Clone)]
pub struct TomographyDataset {
    pub n_qubits: usize,
    pub settings: Vec<SettingData>,
}

impl TomographyDataset {
    /// Frequencies must sum to one per setting and each effect set must
    /// resolve the identity.
    pub fn validate(&self) -> Result<(), TomoError> {
        let dim = 1usize << self.n_qubits;
        for s in &self.settings {
            if s.effects.len() != dim || s.frequencies.len() != dim {
                return Err(TomoError::BadDataset(format!(
                    "setting {} has {} effects / {} frequencies for dim {dim}",
                    s.label,
                    s.effects.len(),
                    s.frequencies.len()
                )));
            }
            let total: f64 = s.frequencies.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(TomoError::BadDataset(format!(
                    "setting {} frequencies sum to {total}",
                    s.label
                )));
            }
            let mut sum = CMat::zeros(dim, dim);
            for e in &s.effects {
                sum += e;
            }
            if (&sum - eye(dim)).norm() > 1e-9 {
                return Err(TomoError::BadDataset(format!(
                    "setting {} effects do not resolve the identity",
                    s.label
                )));
            }
        }
        Ok(())
    }
}

fn effects_for(setting: &MeasurementSetting, dim: usize) -> Vec<CMat> {
    (0..dim)
        .map(|o| {
            let mut proj = CMat::zeros(dim, dim);
            proj[(o, o)] = C64::new(1.0, 0.0);
            setting.pre_rotation.adjoint() * proj * &setting.pre_rotation
        })
        .collect()
}

fn outcome_probabilities(rho: &CMat, setting: &MeasurementSetting) -> Vec<f64> {
    let rotated = &setting.pre_rotation * rho * setting.pre_rotation.adjoint();
    (0..rho.nrows()).map(|o| rotated[(o, o)].re.max(0.0)).collect()
}

/// Exact (infinite-shot) dataset of a state.
pub fn exact_dataset(rho: &CMat, settings: &[MeasurementSetting]) -> TomographyDataset {
    let dim = rho.nrows();
    let n_qubits = dim.trailing_zeros() as usize;
    let settings = settings
        .iter()
        .map(|s| {
            let mut freqs = outcome_probabilities(rho, s);
            let total: f64 = freqs.iter().sum();
            for f in &mut freqs {
                *f /= total;
            }
            SettingData {
                label: s.label.clone(),
                effects: effects_for(s, dim),
                frequencies: freqs,
                shots: 0,
            }
        })
        .collect();
    TomographyDataset { n_qubits, settings }
}

/// Finite-shot dataset: multinomial sampling of each setting.
pub fn sampled_dataset(
    rho: &CMat,
    settings: &[MeasurementSetting],
    shots: u64,
    rng: &mut impl Rng,
) -> TomographyDataset {
    let dim = rho.nrows();
    let n_qubits = dim.trailing_zeros() as usize;
    let settings = settings
        .iter()
        .map(|s| {
            let probs = outcome_probabilities(rho, s);
            let total: f64 = probs.iter().sum();
            let mut counts = vec![0u64; dim];
            for _ in 0..shots {
                let mut u = rng.gen::<f64>() * total;
                let mut pick = dim - 1;
                for (o, &p) in probs.iter().enumerate() {
                    if u < p {
                        pick = o;
                        break;
                    }
                    u -= p;
                }
                counts[pick] += 1;
            }
            SettingData {
                label: s.label.clone(),
                effects: effects_for(s, dim),
                frequencies: counts.iter().map(|&c| c as f64 / shots as f64).collect(),
                shots,
            }
        })
        .collect();
    TomographyDataset { n_qubits, settings }
}

fn pauli_label(idx: usize, n_qubits: usize) -> String {
    const LETTERS: [char; 4] = ['I', 'X', 'Y', 'Z'];
    (0..n_qubits)
        .rev()
        .map(|q| LETTERS[(idx >> (2 * q)) & 3])
        .collect()
}

/// Estimate all 4ⁿ Pauli expectations from a dataset, averaging every
/// setting in which the rotated Pauli is diagonal (so per-qubit rotation
/// sign conventions cannot corrupt the estimate).
pub fn pauli_expectations(ds: &TomographyDataset) -> Result<Vec<f64>, TomoError> {
    ds.validate()?;
    let n = ds.n_qubits;
    let dim = 1usize << n;
    let count = 1usize << (2 * n);
    let mut out = Vec::with_capacity(count);
    for idx in 0..count {
        let digits: Vec<usize> = (0..n).rev().map(|q| (idx >> (2 * q)) & 3).collect();
        let pauli = pauli_string(&digits);
        let mut acc = 0.0;
        let mut hits = 0usize;
        for s in &ds.settings {
            // ⟨P⟩ = Σ_o f_o·⟨o|UPU†|o⟩ whenever UPU† is diagonal.
            let mut diagonal = vec![0.0; dim];
            let mut usable = true;
            for o in 0..dim {
                let mut row = C64::new(0.0, 0.0);
                for (e, effect) in s.effects.iter().enumerate() {
                    // Tr(E_e·P) relates the diagonal of the rotated Pauli to
                    // the stored effects: ⟨o|UPU†|o⟩ = Tr(E_o·P).
                    if e == o {
                        row = (effect * &pauli).trace();
                    }
                }
                if row.im.abs() > 1e-9 {
                    usable = false;
                    break;
                }
                diagonal[o] = row.re;
            }
            if !usable {
                continue;
            }
            // The setting determines P only if the rotated operator is
            // fully diagonal ±1 (a proper parity observable).
            if diagonal.iter().any(|d| (d.abs() - 1.0).abs() > 1e-9) {
                continue;
            }
            // Check the off-diagonal part vanishes: reconstruct
            // Σ_o d_o E_o and compare against P itself.
            let mut rebuilt = CMat::zeros(dim, dim);
            for (o, effect) in s.effects.iter().enumerate() {
                rebuilt += effect.scale(diagonal[o]);
            }
            if (&rebuilt - &pauli).norm() > 1e-9 {
                continue;
            }
            acc += s
                .frequencies
                .iter()
                .zip(&diagonal)
                .map(|(f, d)| f * d)
                .sum::<f64>();
            hits += 1;
        }
        if hits == 0 {
            return Err(TomoError::MissingExpectation(pauli_label(idx, n)));
        }
        out.push(acc / hits as f64);
    }
    Ok(out)
}

/// Linear-inversion reconstruction ρ = (1/2ⁿ)·Σ_k ⟨P_k⟩·P_k. Hermitian and
/// unit-trace by construction but possibly non-physical (negative
/// eigenvalues) for noisy expectations — that output feeds the MLE.
pub fn linear_inversion(expectations: &[f64], n_qubits: usize) -> Result<CMat, TomoError> {
    let count = 1usize << (2 * n_qubits);
    if expectations.len() != count {
        return Err(TomoError::MissingExpectationCount {
            expected: count,
            got: expectations.len(),
        });
    }
    let dim = 1usize << n_qubits;
    let mut rho = CMat::zeros(dim, dim);
    for (idx, &e) in expectations.iter().enumerate() {
        let digits: Vec<usize> = (0..n_qubits).rev().map(|q| (idx >> (2 * q)) & 3).collect();
        rho += pauli_string(&digits).scale(e);
    }
    Ok(rho.unscale(dim as f64))
}

/// Options of the RρR maximum-likelihood iteration.
#[derive(Debug, Clone)]
pub struct MleOptions {
    /// Stop when the log-likelihood gain drops below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Starting state; defaults to the maximally mixed state (full rank).
    pub init: Option<CMat>,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 10_000, init: None }
    }
}

#[derive(Debug, Clone)]
pub struct MleResult {
    pub rho: CMat,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Whether any Tr(ρE) hit the ε = 1e−12 floor while its frequency was
    /// nonzero.
    pub regularized: bool,
    /// Log-likelihood after every iteration (monotone non-decreasing).
    pub ll_trace: Vec<f64>,
}

/// Iterative maximum-likelihood state reconstruction:
/// ρ ← R(ρ)·ρ·R(ρ)/norm with R(ρ) = Σ_j (w_j·f_j/Tr(ρE_j))·E_j, where w_j
/// weights each setting by its shot count. The iteration preserves
/// positivity and unit trace and never decreases the log-likelihood
/// Σ_j w_j·f_j·ln Tr(ρE_j); it stops at `tol` gain or `max_iters`.
pub fn mle_rhorr(ds: &TomographyDataset, opts: &MleOptions) -> Result<MleResult, TomoError> {
    ds.validate()?;
    let dim = 1usize << ds.n_qubits;
    const EPS: f64 = 1e-12;

    // Flatten to (effect, weight·frequency) terms with nonzero frequency.
    let mut terms: Vec<(&CMat, f64)> = Vec::new();
    for s in &ds.settings {
        let w = if s.shots == 0 { 1.0 } else { s.shots as f64 };
        for (e, &f) in s.effects.iter().zip(&s.frequencies) {
            if f > 0.0 {
                terms.push((e, w * f));
            }
        }
    }
    let weight_total: f64 = terms.iter().map(|(_, wf)| wf).sum();

    let mut rho = match &opts.init {
        Some(r) => {
            if r.nrows() != dim || r.ncols() != dim {
                return Err(TomoError::BadDataset(format!(
                    "init is {}x{}, need {dim}x{dim}",
                    r.nrows(),
                    r.ncols()
                )));
            }
            let tr = r.trace().re;
            r.unscale(tr)
        }
        None => eye(dim).unscale(dim as f64),
    };

    let log_likelihood = |rho: &CMat, regularized: &mut bool| -> f64 {
        terms
            .iter()
            .map(|(e, wf)| {
                let mut p = (*e * rho).trace().re;
                if p < EPS {
                    p = EPS;
                    *regularized = true;
                }
                wf * p.ln()
            })
            .sum()
    };

    let mut regularized = false;
    let mut ll = log_likelihood(&rho, &mut regularized);
    let mut ll_trace = Vec::new();
    let mut iterations = 0;
    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        let mut r_op = CMat::zeros(dim, dim);
        for (e, wf) in &terms {
            let mut p = (*e * &rho).trace().re;
            if p < EPS {
                p = EPS;
                regularized = true;
            }
            r_op += e.scale(wf / p);
        }
        // Normalizing R by the total weight keeps the fixed point scale-free.
        r_op = r_op.unscale(weight_total);
        let mut next = &r_op * &rho * &r_op;
        next = next.unscale(next.trace().re);
        // Re-symmetrize against roundoff drift.
        next = (&next + next.adjoint()).unscale(2.0);

        let ll_next = log_likelihood(&next, &mut regularized);
        assert!(
            ll_next >= ll - 1e-9 * (1.0 + ll.abs()),
            "likelihood decreased: {ll} -> {ll_next}"
        );
        rho = next;
        let gain = ll_next - ll;
        ll = ll_next;
        ll_trace.push(ll);
        if gain.abs() < opts.tol {
            break;
        }
    }
    Ok(MleResult { rho, iterations, log_likelihood: ll, regularized, ll_trace })
}

/// Parse a counts CSV into a dataset. Each line is
/// `label,count_0,...,count_{2ⁿ−1}` with the outcome index in binary order;
/// labels must match [`measurement_settings`] for the qubit count. A header
/// line starting with `basis` or `label` is skipped.
pub fn dataset_from_counts_csv(csv: &str, n_qubits: usize) -> Result<TomographyDataset, TomoError> {
    let dim = 1usize << n_qubits;
    let settings = measurement_settings(n_qubits);
    let mut data = Vec::new();
    for (lineno, line) in csv.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if lineno == 0 && (fields[0].eq_ignore_ascii_case("basis") || fields[0].eq_ignore_ascii_case("label")) {
            continue;
        }
        if fields.len() != dim + 1 {
            return Err(TomoError::CsvParse {
                line: lineno + 1,
                reason: format!("expected {} fields, got {}", dim + 1, fields.len()),
            });
        }
        let setting = settings
            .iter()
            .find(|s| s.label == fields[0])
            .ok_or_else(|| TomoError::CsvParse {
                line: lineno + 1,
                reason: format!("unknown setting label {}", fields[0]),
            })?;
        let counts: Vec<u64> = fields[1..]
            .iter()
            .map(|f| {
                f.trim().parse::<u64>().map_err(|e| TomoError::CsvParse {
                    line: lineno + 1,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
        let shots: u64 = counts.iter().sum();
        if shots == 0 {
            return Err(TomoError::CsvParse {
                line: lineno + 1,
                reason: "all-zero counts".into(),
            });
        }
        data.push(SettingData {
            label: setting.label.clone(),
            effects: effects_for(setting, dim),
            frequencies: counts.iter().map(|&c| c as f64 / shots as f64).collect(),
            shots,
        });
    }
    let ds = TomographyDataset { n_qubits, settings: data };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::metrics::state_fidelity;
    use crate::circuits::BellState;
    use crate::linalg::hermitian_eigenvalues;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn bell_rho() -> CMat {
        let psi = BellState::PhiPlus.statevector();
        &psi * psi.adjoint()
    }

    fn random_density(dim: usize, rng: &mut ChaCha12Rng) -> CMat {
        let g = CMat::from_fn(dim, dim, |_, _| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let rho = &g * g.adjoint();
        let tr = rho.trace().re;
        rho.unscale(tr)
    }

    #[test]
    fn nine_settings_are_well_formed() {
        let settings = measurement_settings(2);
        assert_eq!(settings.len(), 9);
        let labels: Vec<&str> = settings.iter().map(|s| s.label.as_str()).collect();
        assert!(labels.contains(&"ZZ") && labels.contains(&"XY") && labels.contains(&"YX"));
        let ds = exact_dataset(&bell_rho(), &settings);
        ds.validate().unwrap();
    }

    #[test]
    fn exact_expectations_round_trip_through_linear_inversion() {
        let settings = measurement_settings(2);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..20 {
            let rho = random_density(4, &mut rng);
            let ds = exact_dataset(&rho, &settings);
            let e = pauli_expectations(&ds).unwrap();
            assert_abs_diff_eq!(e[0], 1.0, epsilon = 1e-12);
            let back = linear_inversion(&e, 2).unwrap();
            assert!((&back - &rho).norm() < 1e-10, "round trip error {}", (&back - &rho).norm());
        }
        assert!(matches!(
            linear_inversion(&[1.0; 15], 2),
            Err(TomoError::MissingExpectationCount { expected: 16, got: 15 })
        ));
    }

    #[test]
    fn perturbed_expectations_can_go_nonphysical() {
        let settings = measurement_settings(2);
        let ds = exact_dataset(&bell_rho(), &settings);
        let mut e = pauli_expectations(&ds).unwrap();
        // Push ⟨ZZ⟩ above its physical value: linear inversion dips
        // negative on |01⟩ while staying Hermitian and unit trace.
        let zz = 0b11_11; // digits (3, 3) = Z⊗Z
        e[zz] += 0.1;
        let rho = linear_inversion(&e, 2).unwrap();
        assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-12);
        let min = hermitian_eigenvalues(&rho).into_iter().fold(f64::MAX, f64::min);
        assert!(min < -1e-3, "expected a negative eigenvalue, got min {min}");
    }

    #[test]
    fn mle_recovers_pure_states_from_exact_data() {
        let settings = measurement_settings(2);
        let ds = exact_dataset(&bell_rho(), &settings);
        let result = mle_rhorr(&ds, &MleOptions { tol: 1e-15, ..Default::default() }).unwrap();
        let f = state_fidelity(&result.rho, &BellState::PhiPlus.statevector()).unwrap();
        assert!(f > 1.0 - 1e-6, "fidelity {f} after {} iterations", result.iterations);
        // Monotone likelihood and physical output.
        for w in result.ll_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * (1.0 + w[0].abs()));
        }
        let eigs = hermitian_eigenvalues(&result.rho);
        assert!(eigs.iter().all(|&l| l >= -1e-10));
        assert_abs_diff_eq!(result.rho.trace().re, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn mle_fixed_points_and_regularization() {
        let settings = measurement_settings(2);
        // Maximally mixed data keeps the maximally mixed estimate.
        let mixed = eye(4).unscale(4.0);
        let ds = exact_dataset(&mixed, &settings);
        let result = mle_rhorr(&ds, &MleOptions::default()).unwrap();
        assert!((&result.rho - &mixed).norm() < 1e-10);
        assert!(!result.regularized);

        // A rank-deficient init orthogonal to observed outcomes triggers
        // the ε floor but still produces a physical state.
        let mut pure = CMat::zeros(4, 4);
        pure[(0, 0)] = C64::new(1.0, 0.0);
        let mut flipped = CMat::zeros(4, 4);
        flipped[(3, 3)] = C64::new(1.0, 0.0);
        let ds = exact_dataset(&flipped, &settings);
        let result = mle_rhorr(
            &ds,
            &MleOptions { init: Some(pure), ..Default::default() },
        )
        .unwrap();
        assert!(result.regularized);
        let eigs = hermitian_eigenvalues(&result.rho);
        assert!(eigs.iter().all(|&l| l >= -1e-10));
    }

    #[test]
    fn finite_shot_mle_reaches_high_fidelity() {
        let settings = measurement_settings(2);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let ds = sampled_dataset(&bell_rho(), &settings, 1000, &mut rng);
        let result = mle_rhorr(&ds, &MleOptions::default()).unwrap();
        let f = state_fidelity(&result.rho, &BellState::PhiPlus.statevector()).unwrap();
        assert!(f > 0.98, "fidelity {f}");
    }

    #[test]
    fn counts_csv_round_trip() {
        let settings = measurement_settings(1);
        let csv = "basis,n0,n1\nZ,900,100\nX,450,550\nY,520,480\n";
        let ds = dataset_from_counts_csv(csv, 1).unwrap();
        assert_eq!(ds.settings.len(), 3);
        assert_eq!(ds.settings[0].shots, 1000);
        assert_abs_diff_eq!(ds.settings[0].frequencies[0], 0.9, epsilon = 1e-12);
        assert_eq!(settings[1].label, "X");
        assert!(matches!(
            dataset_from_counts_csv("Q,1,2\n", 1),
            Err(TomoError::CsvParse { .. })
        ));
        let result = mle_rhorr(&ds, &MleOptions::default()).unwrap();
        assert_abs_diff_eq!(result.rho.trace().re, 1.0, epsilon = 1e-9);
    }
}
