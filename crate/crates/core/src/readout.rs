//! Monte-Carlo readout and initialization models: energy-selective electron
//! single-shot readout, repeated QND nuclear readout, electron-shelving
//! nuclear initialization, ionization-shock nuclear flips, and SPAM-matrix
//! analysis.
//!
//! Two levels of modeling coexist. Circuit-level code collapses electron
//! readout to a per-shot error probability (fast, no waveforms); the
//! trace-statistic Monte Carlo in [`elzerman_single_shot`] exists to study
//! the readout operating point itself (threshold choice, visibility). The
//! measured data constrain that operating point (visibility ≈ 68%, mean
//! fidelity ≈ 81%) but not the microscopic tunnel-time or noise parameters,
//! so [`ElzermanParams::device_like`] picks free parameters that land on the
//! same operating point and all tests on it are property-based.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::circuits::{collapse_measurement, measurement_probability, Basis};
use crate::dynamics::{DensityMatrix, DynamicsError};
use crate::linalg::{CMat, C64};
use crate::spin::{embed, Register};

#[derive(Debug, Error)]
pub enum ReadoutError {
    #[error("invalid readout parameter: {0}")]
    BadParameter(String),
    #[error("need at least {min} shots of each prepared state, got {up} up / {down} down")]
    NotEnoughShots { min: usize, up: usize, down: usize },
    #[error("register qubit {0} is not an active nucleus")]
    NotANucleus(usize),
    #[error("the electron must start spin-down (P_down = {0:.6})")]
    ElectronNotDown(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("prepared state {0} has no shots")]
    EmptyPreparation(usize),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

// ---------------------------------------------------------------------------
// Electron single-shot readout (spin-to-charge conversion)
// ---------------------------------------------------------------------------

/// Parameters of the energy-selective single-shot readout: a spin-up
/// electron tunnels out to the sensor island (exponential time constant
/// `tunnel_out_up`) and a spin-down electron tunnels back in after
/// `tunnel_in_down`, producing a charge blip; spin-down stays put. The
/// blip is detected if it happens inside the readout window and lasts
/// longer than one sampler period (1/`bandwidth`). Detection noise is
/// Gaussian on the max-signal statistic of the trace.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ElzermanParams {
    /// Tunnel-out time constant for a spin-up electron (s).
    pub tunnel_out_up: f64,
    /// Tunnel-in time constant refilling with a spin-down electron (s).
    pub tunnel_in_down: f64,
    /// Readout window duration (s).
    pub window: f64,
    /// Sampling bandwidth of the charge sensor (Hz).
    pub bandwidth: f64,
    /// Charge-blip amplitude in the normalized trace signal.
    pub signal_amplitude: f64,
    /// Gaussian noise width of the max-signal statistic.
    pub noise_sigma: f64,
    /// Default classification threshold on the max signal.
    pub threshold: f64,
}

impl ElzermanParams {
    /// Free parameters tuned to the device's measured operating point:
    /// best-threshold visibility ≈ 0.68 and mean fidelity ≈ 0.81.
    pub fn device_like() -> Self {
        Self {
            tunnel_out_up: 120e-6,
            tunnel_in_down: 200e-6,
            window: 250e-6,
            bandwidth: 50e3,
            signal_amplitude: 1.0,
            noise_sigma: 0.35,
            threshold: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), ReadoutError> {
        let positive = [
            ("tunnel_out_up", self.tunnel_out_up),
            ("tunnel_in_down", self.tunnel_in_down),
            ("window", self.window),
            ("bandwidth", self.bandwidth),
            ("signal_amplitude", self.signal_amplitude),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ReadoutError::BadParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(ReadoutError::BadParameter(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// One simulated readout trace, reduced to its two decision statistics.
#[derive(Debug, Clone, Copy)]
pub struct SingleShot {
    /// Whether a resolvable charge blip physically occurred.
    pub blip: bool,
    /// Maximum of the (noisy) trace signal; classify against a threshold.
    pub max_signal: f64,
}

/// Monte-Carlo one readout of an electron prepared spin-up (`true`) or
/// spin-down (`false`).
pub fn elzerman_single_shot(
    spin_up: bool,
    params: &ElzermanParams,
    rng: &mut impl Rng,
) -> Result<SingleShot, ReadoutError> {
    params.validate()?;
    let mut blip = false;
    if spin_up {
        let t_out = Exp::new(1.0 / params.tunnel_out_up).unwrap().sample(rng);
        if t_out < params.window {
            let blip_duration = Exp::new(1.0 / params.tunnel_in_down).unwrap().sample(rng);
            // A blip shorter than one sampler period is invisible.
            blip = blip_duration > 1.0 / params.bandwidth;
        }
    }
    let noise = if params.noise_sigma > 0.0 {
        Normal::new(0.0, params.noise_sigma).unwrap().sample(rng)
    } else {
        0.0
    };
    let max_signal = if blip { params.signal_amplitude + noise } else { noise };
    Ok(SingleShot { blip, max_signal })
}

/// A labeled shot for fidelity analysis.
#[derive(Debug, Clone, Copy)]
pub struct LabeledShot {
    pub prepared_up: bool,
    pub max_signal: f64,
}

/// Threshold-sweep analysis of labeled single shots.
#[derive(Debug, Clone)]
pub struct ReadoutFidelity {
    /// P(classified up | prepared up) at the best threshold.
    pub f_up: f64,
    /// P(classified down | prepared down) at the best threshold.
    pub f_down: f64,
    /// f_up + f_down − 1 at the best threshold.
    pub visibility: f64,
    /// Threshold maximizing the visibility.
    pub best_threshold: f64,
    /// Full sweep: (threshold, f_up, f_down, visibility).
    pub curve: Vec<(f64, f64, f64, f64)>,
}

/// Empirical readout fidelities versus classification threshold
/// ("signal > threshold" reads as spin-up). Requires at least 1000 shots of
/// each prepared state.
pub fn readout_fidelity_analysis(shots: &[LabeledShot]) -> Result<ReadoutFidelity, ReadoutError> {
    const MIN_SHOTS: usize = 1000;
    let mut ups: Vec<f64> = Vec::new();
    let mut downs: Vec<f64> = Vec::new();
    for s in shots {
        if s.prepared_up {
            ups.push(s.max_signal);
        } else {
            downs.push(s.max_signal);
        }
    }
    if ups.len() < MIN_SHOTS || downs.len() < MIN_SHOTS {
        return Err(ReadoutError::NotEnoughShots {
            min: MIN_SHOTS,
            up: ups.len(),
            down: downs.len(),
        });
    }
    ups.sort_by(f64::total_cmp);
    downs.sort_by(f64::total_cmp);

    // Candidate thresholds: midpoints between consecutive distinct signal
    // values, plus one below and one above everything.
    let mut all: Vec<f64> = shots.iter().map(|s| s.max_signal).collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let span = (all[all.len() - 1] - all[0]).max(1e-12);
    let mut candidates = Vec::with_capacity(all.len() + 1);
    candidates.push(all[0] - 0.05 * span);
    for w in all.windows(2) {
        candidates.push(0.5 * (w[0] + w[1]));
    }
    candidates.push(all[all.len() - 1] + 0.05 * span);

    let frac_above = |sorted: &[f64], thr: f64| -> f64 {
        let idx = sorted.partition_point(|&x| x <= thr);
        (sorted.len() - idx) as f64 / sorted.len() as f64
    };
    let mut curve = Vec::with_capacity(candidates.len());
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (i, &thr) in candidates.iter().enumerate() {
        let f_up = frac_above(&ups, thr);
        let f_down = 1.0 - frac_above(&downs, thr);
        let vis = f_up + f_down - 1.0;
        curve.push((thr, f_up, f_down, vis));
        if vis > best.0 + 1e-15 {
            best = (vis, i);
        }
    }
    let (best_threshold, f_up, f_down, visibility) = curve[best.1];
    Ok(ReadoutFidelity { f_up, f_down, visibility, best_threshold, curve })
}

// ---------------------------------------------------------------------------
// QND nuclear readout
// ---------------------------------------------------------------------------

/// Result of a repeated QND nuclear readout.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QndOutcome {
    /// Majority-vote nuclear state: 1 = ⇑, 0 = ⇓. Ties read ⇓.
    pub outcome: u8,
    /// Number of repetitions that reported ⇑.
    pub up_votes: u32,
    pub repetitions: u32,
}

/// Repeated quantum-non-demolition readout of one nucleus: each repetition
/// flips the electron conditional on the nuclear state, reads it out, and
/// re-initializes it; the nuclear Z projection survives every round. The
/// nucleus is Born-rule projected once (first repetition) and each
/// repetition then reports that projected value, flipped with probability
/// `electron_readout_error`; the final outcome is the majority vote.
pub fn qnd_nuclear_readout(
    state: &mut DensityMatrix,
    reg: &Register,
    nucleus: usize,
    repetitions: u32,
    electron_readout_error: f64,
    rng: &mut impl Rng,
) -> Result<QndOutcome, ReadoutError> {
    if nucleus == 0 || nucleus > reg.n_nuclei() {
        return Err(ReadoutError::NotANucleus(nucleus));
    }
    if repetitions == 0 {
        return Err(ReadoutError::BadParameter("repetitions must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&electron_readout_error) {
        return Err(ReadoutError::BadParameter(format!(
            "electron_readout_error must be in [0,1], got {electron_readout_error}"
        )));
    }
    let (p_up, _) = measurement_probability(reg, state, nucleus, Basis::Z);
    let projected: u8 = if rng.gen::<f64>() < p_up { 1 } else { 0 };
    collapse_measurement(reg, state, nucleus, Basis::Z, projected);

    let mut up_votes = 0u32;
    for _ in 0..repetitions {
        let reported = if rng.gen::<f64>() < electron_readout_error {
            1 - projected
        } else {
            projected
        };
        up_votes += u32::from(reported);
    }
    let outcome = u8::from(2 * up_votes > repetitions);
    Ok(QndOutcome { outcome, up_votes, repetitions })
}

// ---------------------------------------------------------------------------
// Nuclear initialization by electron shelving
// ---------------------------------------------------------------------------

/// Outcome of the shelving-based initialization loop.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InitReport {
    /// Rounds repeated *after* the first attempt.
    pub retries: u32,
    /// Whether the verify step accepted within the round budget.
    pub success: bool,
}

/// Initialize the active nuclei to `target` (one bit per nucleus, index 0 =
/// N1; 1 = ⇑) by the electron-shelving sequence: per nucleus, conditional
/// ESR π pulses shelve the already-correct population in the electron-up
/// manifold, then a conditional NMR π flips the remainder onto the target;
/// a QND verify step accepts or triggers a retry. Each nucleus costs two
/// conditional π pulses and each pulse fails independently with probability
/// `per_pulse_flip_error`, leaving that nucleus flipped for the round.
///
/// On success the register is left exactly in the target configuration with
/// the electron spin-down (the verify step postselects); the report carries
/// the retry count.
pub fn est_initialize(
    state: &mut DensityMatrix,
    reg: &Register,
    target: &[u8],
    per_pulse_flip_error: f64,
    max_rounds: u32,
    rng: &mut impl Rng,
) -> Result<InitReport, ReadoutError> {
    if target.len() != reg.n_nuclei() {
        return Err(ReadoutError::DimensionMismatch(format!(
            "target has {} bits for {} nuclei",
            target.len(),
            reg.n_nuclei()
        )));
    }
    if !(0.0..0.5).contains(&per_pulse_flip_error) {
        return Err(ReadoutError::BadParameter(format!(
            "per_pulse_flip_error must be in [0, 0.5), got {per_pulse_flip_error}"
        )));
    }
    if max_rounds == 0 {
        return Err(ReadoutError::BadParameter("max_rounds must be >= 1".into()));
    }
    let p_down = crate::circuits::electron_down_probability(reg, state);
    if p_down < 1.0 - 1e-6 {
        return Err(ReadoutError::ElectronNotDown(p_down));
    }

    let n = reg.n_nuclei();
    let target_index: usize = target
        .iter()
        .enumerate()
        .map(|(i, &b)| (usize::from(b != 0)) << (n - 1 - i))
        .sum();

    // Fast path: verify first; an already-initialized register needs no pulse.
    if state.population(target_index) > 1.0 - 1e-12 {
        return Ok(InitReport { retries: 0, success: true });
    }

    const PULSES_PER_NUCLEUS: u32 = 2;
    for round in 0..max_rounds {
        let clean = (0..n * PULSES_PER_NUCLEUS as usize)
            .all(|_| rng.gen::<f64>() >= per_pulse_flip_error);
        if clean {
            *state = DensityMatrix::basis_state(reg.n_spins(), target_index);
            return Ok(InitReport { retries: round, success: true });
        }
        // A failed round leaves some nucleus off-target; the verify step
        // rejects it and the loop repeats from scratch.
    }
    Ok(InitReport { retries: max_rounds, success: false })
}

// ---------------------------------------------------------------------------
// Ionization shock
// ---------------------------------------------------------------------------

/// Apply the nuclear-flip channel caused by repeated donor ionization:
/// every ionization event flips nucleus i independently with probability
/// `per_nucleus_rate[i]`. For `ionization_count` events the flip count per
/// nucleus is binomial; an odd total leaves that nucleus flipped. Returns
/// the total number of flip events across all nuclei.
pub fn apply_ionization_shock(
    state: &mut DensityMatrix,
    reg: &Register,
    per_nucleus_rate: &[f64],
    ionization_count: u64,
    rng: &mut impl Rng,
) -> Result<u64, ReadoutError> {
    if per_nucleus_rate.len() != reg.n_nuclei() {
        return Err(ReadoutError::DimensionMismatch(format!(
            "{} rates for {} nuclei",
            per_nucleus_rate.len(),
            reg.n_nuclei()
        )));
    }
    let mut sigma_x = CMat::zeros(2, 2);
    sigma_x[(0, 1)] = C64::new(1.0, 0.0);
    sigma_x[(1, 0)] = C64::new(1.0, 0.0);
    let mut total = 0u64;
    for (i, &gamma) in per_nucleus_rate.iter().enumerate() {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(ReadoutError::BadParameter(format!(
                "flip rate must be in [0,1], got {gamma}"
            )));
        }
        if gamma == 0.0 || ionization_count == 0 {
            continue;
        }
        let flips = Binomial::new(ionization_count, gamma).unwrap().sample(rng);
        total += flips;
        if flips % 2 == 1 {
            state.apply_unitary(&embed(reg.n_spins(), i + 1, &sigma_x));
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// SPAM matrices
// ---------------------------------------------------------------------------

/// State-preparation-and-measurement matrix over k qubits: column j holds
/// the measured-outcome distribution P(measure i | prepared j), with basis
/// states indexed MSB-first (qubit 0 = highest bit).
#[derive(Debug, Clone)]
pub struct SpamMatrix {
    pub probs: DMatrix<f64>,
    pub n_qubits: usize,
}

impl SpamMatrix {
    pub fn identity(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        Self { probs: DMatrix::identity(dim, dim), n_qubits }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Columns must be probability distributions.
    pub fn validate(&self) -> Result<(), ReadoutError> {
        let dim = self.dim();
        if self.probs.nrows() != dim || self.probs.ncols() != dim {
            return Err(ReadoutError::DimensionMismatch(format!(
                "{}x{} matrix for {} qubits",
                self.probs.nrows(),
                self.probs.ncols(),
                self.n_qubits
            )));
        }
        for j in 0..dim {
            let mut sum = 0.0;
            for i in 0..dim {
                let p = self.probs[(i, j)];
                if !(-1e-12..=1.0 + 1e-12).contains(&p) {
                    return Err(ReadoutError::BadParameter(format!(
                        "P({i}|{j}) = {p} out of [0,1]"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ReadoutError::BadParameter(format!(
                    "column {j} sums to {sum}"
                )));
            }
        }
        Ok(())
    }

    /// CSV with a header row of prepared-state labels (bitstrings) and a
    /// leading measured-state label per row.
    pub fn to_csv(&self) -> String {
        let dim = self.dim();
        let label = |i: usize| -> String {
            (0..self.n_qubits)
                .map(|q| if i >> (self.n_qubits - 1 - q) & 1 == 1 { '1' } else { '0' })
                .collect()
        };
        let mut out = String::from("measured");
        for j in 0..dim {
            out.push_str(&format!(",prep_{}", label(j)));
        }
        out.push('\n');
        for i in 0..dim {
            out.push_str(&label(i));
            for j in 0..dim {
                out.push_str(&format!(",{:.16e}", self.probs[(i, j)]));
            }
            out.push('\n');
        }
        out
    }
}

/// Estimate a SPAM matrix from labeled shots `(prepared index, measured
/// index)`; every prepared state needs at least one shot.
pub fn build_spam(n_qubits: usize, shots: &[(usize, usize)]) -> Result<SpamMatrix, ReadoutError> {
    let dim = 1usize << n_qubits;
    let mut counts = DMatrix::<f64>::zeros(dim, dim);
    for &(prep, meas) in shots {
        if prep >= dim || meas >= dim {
            return Err(ReadoutError::DimensionMismatch(format!(
                "shot ({prep}, {meas}) outside {dim} states"
            )));
        }
        counts[(meas, prep)] += 1.0;
    }
    for j in 0..dim {
        let col_sum: f64 = counts.column(j).sum();
        if col_sum == 0.0 {
            return Err(ReadoutError::EmptyPreparation(j));
        }
        for i in 0..dim {
            counts[(i, j)] /= col_sum;
        }
    }
    let m = SpamMatrix { probs: counts, n_qubits };
    m.validate()?;
    Ok(m)
}

/// Simulate SPAM shots with independent per-qubit symmetric flip errors and
/// an optional correlated joint flip of one qubit pair.
pub fn simulate_spam_shots(
    n_qubits: usize,
    shots_per_prep: usize,
    per_qubit_flip: &[f64],
    correlated_pair: Option<(usize, usize, f64)>,
    rng: &mut impl Rng,
) -> Result<Vec<(usize, usize)>, ReadoutError> {
    if per_qubit_flip.len() != n_qubits {
        return Err(ReadoutError::DimensionMismatch(format!(
            "{} flip rates for {n_qubits} qubits",
            per_qubit_flip.len()
        )));
    }
    let dim = 1usize << n_qubits;
    let mut out = Vec::with_capacity(dim * shots_per_prep);
    for prep in 0..dim {
        for _ in 0..shots_per_prep {
            let mut meas = prep;
            for (q, &p) in per_qubit_flip.iter().enumerate() {
                if p > 0.0 && rng.gen::<f64>() < p {
                    meas ^= 1 << (n_qubits - 1 - q);
                }
            }
            if let Some((a, b, p)) = correlated_pair {
                if p > 0.0 && rng.gen::<f64>() < p {
                    meas ^= 1 << (n_qubits - 1 - a);
                    meas ^= 1 << (n_qubits - 1 - b);
                }
            }
            out.push((prep, meas));
        }
    }
    Ok(out)
}

/// Reduce a SPAM matrix to a subset of its qubits: traced-out measurement
/// outcomes are summed and traced-out preparations are averaged, so columns
/// stay stochastic.
pub fn marginalize(m: &SpamMatrix, keep: &[usize]) -> Result<SpamMatrix, ReadoutError> {
    if keep.is_empty() || keep.windows(2).any(|w| w[1] <= w[0]) || keep[keep.len() - 1] >= m.n_qubits
    {
        return Err(ReadoutError::DimensionMismatch(format!(
            "keep set {keep:?} must be strictly increasing qubit indices < {}",
            m.n_qubits
        )));
    }
    m.validate()?;
    let n = m.n_qubits;
    let k = keep.len();
    let dim_out = 1usize << k;
    let n_traced_preps = 1usize << (n - k);
    // Expand a reduced index to a full index with zeros on traced qubits.
    let spread = |reduced: usize| -> usize {
        keep.iter()
            .enumerate()
            .map(|(pos, &q)| ((reduced >> (k - 1 - pos)) & 1) << (n - 1 - q))
            .sum()
    };
    let kept_mask: usize = keep.iter().map(|&q| 1 << (n - 1 - q)).sum();
    let traced: Vec<usize> = (0..1usize << n).filter(|i| i & kept_mask == 0).collect();
    let mut out = DMatrix::<f64>::zeros(dim_out, dim_out);
    for jr in 0..dim_out {
        let j_base = spread(jr);
        for ir in 0..dim_out {
            let i_base = spread(ir);
            let mut acc = 0.0;
            for &jt in &traced {
                for &it in &traced {
                    acc += m.probs[(i_base | it, j_base | jt)];
                }
            }
            out[(ir, jr)] = acc / n_traced_preps as f64;
        }
    }
    let reduced = SpamMatrix { probs: out, n_qubits: k };
    reduced.validate()?;
    Ok(reduced)
}

/// Frobenius norm of M_ij − M_i ⊗ M_j: the strength of correlated SPAM
/// error between two qubit groups.
pub fn tensor_residual(
    m_ij: &SpamMatrix,
    m_i: &SpamMatrix,
    m_j: &SpamMatrix,
) -> Result<f64, ReadoutError> {
    if m_ij.n_qubits != m_i.n_qubits + m_j.n_qubits {
        return Err(ReadoutError::DimensionMismatch(format!(
            "{} qubits vs {} + {}",
            m_ij.n_qubits, m_i.n_qubits, m_j.n_qubits
        )));
    }
    let product = m_i.probs.kronecker(&m_j.probs);
    Ok((&m_ij.probs - product).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    #[test]
    fn single_shot_limits_are_deterministic() {
        // Huge window, no noise: spin-up always blips above threshold.
        let mut params = ElzermanParams::device_like();
        params.window = 1.0;
        params.tunnel_in_down = 10.0;
        params.noise_sigma = 0.0;
        let mut r = rng(1);
        for _ in 0..1000 {
            let shot = elzerman_single_shot(true, &params, &mut r).unwrap();
            assert!(shot.blip);
            assert_abs_diff_eq!(shot.max_signal, params.signal_amplitude, epsilon = 1e-12);
        }
        // Spin-down with no noise never blips.
        for _ in 0..1000 {
            let shot = elzerman_single_shot(false, &params, &mut r).unwrap();
            assert!(!shot.blip);
            assert_abs_diff_eq!(shot.max_signal, 0.0, epsilon = 1e-12);
        }
        assert!(elzerman_single_shot(true, &ElzermanParams { window: -1.0, ..params }, &mut r)
            .is_err());
    }

    fn mc_shots(params: &ElzermanParams, n_each: usize, seed: u64) -> Vec<LabeledShot> {
        let mut r = rng(seed);
        let mut shots = Vec::with_capacity(2 * n_each);
        for prepared_up in [true, false] {
            for _ in 0..n_each {
                let s = elzerman_single_shot(prepared_up, params, &mut r).unwrap();
                shots.push(LabeledShot { prepared_up, max_signal: s.max_signal });
            }
        }
        shots
    }

    #[test]
    fn device_operating_point_has_a_visibility_peak_near_measured_values() {
        let params = ElzermanParams::device_like();
        let fit = readout_fidelity_analysis(&mc_shots(&params, 20_000, 7)).unwrap();
        assert!(
            (0.60..0.75).contains(&fit.visibility),
            "best visibility {} outside the expected band",
            fit.visibility
        );
        let mean_fidelity = 0.5 * (fit.f_up + fit.f_down);
        assert!(
            (0.78..0.88).contains(&mean_fidelity),
            "mean fidelity {mean_fidelity} outside the expected band"
        );
        // The peak is unique and interior: visibility at the extreme
        // thresholds vanishes, and near-optimal thresholds cluster.
        assert!(fit.curve.first().unwrap().3.abs() < 1e-12);
        assert!(fit.curve.last().unwrap().3.abs() < 1e-12);
        let near: Vec<f64> = fit
            .curve
            .iter()
            .filter(|(_, _, _, v)| *v > fit.visibility - 0.005)
            .map(|(t, _, _, _)| *t)
            .collect();
        let spread = near.iter().cloned().fold(f64::MIN, f64::max)
            - near.iter().cloned().fold(f64::MAX, f64::min);
        assert!(
            spread < 0.5 * params.signal_amplitude,
            "near-optimal thresholds spread over {spread}"
        );
    }

    #[test]
    fn fidelity_analysis_degenerate_inputs() {
        // Perfectly separated distributions: visibility 1.
        let mut shots = Vec::new();
        for i in 0..1500 {
            shots.push(LabeledShot { prepared_up: true, max_signal: 1.0 + 1e-4 * i as f64 });
            shots.push(LabeledShot { prepared_up: false, max_signal: 0.0 - 1e-4 * i as f64 });
        }
        let fit = readout_fidelity_analysis(&shots).unwrap();
        assert_abs_diff_eq!(fit.visibility, 1.0, epsilon = 1e-12);
        assert!(fit.best_threshold > 0.0 && fit.best_threshold < 1.0);

        // Identical distributions: visibility 0 at every threshold.
        let mut shots = Vec::new();
        for i in 0..1200 {
            let v = (i as f64 * 0.917).sin();
            shots.push(LabeledShot { prepared_up: true, max_signal: v });
            shots.push(LabeledShot { prepared_up: false, max_signal: v });
        }
        let fit = readout_fidelity_analysis(&shots).unwrap();
        assert_abs_diff_eq!(fit.visibility, 0.0, epsilon = 1e-12);
        for (_, _, _, v) in &fit.curve {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }

        // Single-class input is rejected.
        let only_up: Vec<LabeledShot> = (0..2000)
            .map(|_| LabeledShot { prepared_up: true, max_signal: 1.0 })
            .collect();
        assert!(matches!(
            readout_fidelity_analysis(&only_up),
            Err(ReadoutError::NotEnoughShots { .. })
        ));
    }

    #[test]
    fn visibility_degrades_monotonically_with_noise() {
        let mut previous = f64::INFINITY;
        for (seed, sigma) in [(11u64, 0.10), (12, 0.35), (13, 0.80)] {
            let params = ElzermanParams { noise_sigma: sigma, ..ElzermanParams::device_like() };
            let fit = readout_fidelity_analysis(&mc_shots(&params, 8_000, seed)).unwrap();
            assert!(
                fit.visibility < previous - 0.02,
                "visibility {} did not drop at sigma {sigma}",
                fit.visibility
            );
            previous = fit.visibility;
        }
    }

    #[test]
    fn qnd_readout_is_projective_and_repeatable() {
        let reg = Register::device_default();
        let n = reg.n_spins();
        // |⇑⟩ on N2, error-free single repetition.
        let idx = 1usize << (n - 1 - 2);
        let mut state = DensityMatrix::basis_state(n, idx);
        let before = state.mat.clone();
        let out = qnd_nuclear_readout(&mut state, &reg, 2, 1, 0.0, &mut rng(3)).unwrap();
        assert_eq!(out.outcome, 1);
        assert!((&state.mat - &before).norm() < 1e-12, "QND must not disturb an eigenstate");

        // Repeated readouts agree even with noisy electron readout.
        let mut r = rng(4);
        let first = qnd_nuclear_readout(&mut state, &reg, 2, 40, 0.1855, &mut r).unwrap();
        for _ in 0..20 {
            let again = qnd_nuclear_readout(&mut state, &reg, 2, 40, 0.1855, &mut r).unwrap();
            assert_eq!(again.outcome, first.outcome);
        }
    }

    /// P(majority vote wrong) for n repetitions at per-shot error q
    /// (ties vote the wrong way only if the true state is ⇑... here the
    /// true value is fixed, so a tie counts as wrong when reading ⇑).
    fn majority_error(n: u32, q: f64, true_up: bool) -> f64 {
        // Binomial pmf by recurrence.
        let n_f = f64::from(n);
        let mut pmf = vec![0.0; n as usize + 1];
        pmf[0] = (1.0 - q).powi(n as i32);
        for k in 1..=n as usize {
            pmf[k] = pmf[k - 1] * (n_f - (k as f64 - 1.0)) / k as f64 * q / (1.0 - q);
        }
        // Wrong votes k flip the outcome when correct votes n−k lose the
        // majority; ties (2k = n) read ⇓.
        (0..=n as usize)
            .filter(|&k| {
                let wrong_wins = 2 * k > n as usize;
                let tie = 2 * k == n as usize;
                wrong_wins || (tie && true_up)
            })
            .map(|k| pmf[k])
            .sum()
    }

    #[test]
    fn majority_vote_error_matches_binomial_oracle() {
        // Device numbers: 40 repetitions at 18.55% per-shot error.
        let analytic = majority_error(40, 0.1855, true);
        assert!(analytic < 1e-3, "40-vote error {analytic}");

        // Monte-Carlo agreement at a deliberately bad operating point.
        let reg = Register::device_default();
        let n = reg.n_spins();
        let idx = 1usize << (n - 1 - 1);
        let oracle = majority_error(15, 0.40, true);
        let mut wrong = 0u32;
        let trials = 4000;
        let mut r = rng(5);
        for _ in 0..trials {
            let mut state = DensityMatrix::basis_state(n, idx);
            let out = qnd_nuclear_readout(&mut state, &reg, 1, 15, 0.40, &mut r).unwrap();
            wrong += u32::from(out.outcome != 1);
        }
        let mc = f64::from(wrong) / f64::from(trials);
        let sigma = (oracle * (1.0 - oracle) / f64::from(trials)).sqrt();
        assert!(
            (mc - oracle).abs() < 4.0 * sigma + 1e-3,
            "MC {mc} vs oracle {oracle}"
        );
    }

    #[test]
    fn superposition_readout_follows_born_probabilities() {
        let reg = Register::device_default();
        let theta = 1.2f64;
        let p_up_expected = (theta / 2.0).sin().powi(2);
        let mut ups = 0u32;
        let trials = 3000;
        let mut r = rng(6);
        for _ in 0..trials {
            let mut state = DensityMatrix::ground(&reg);
            state.apply_unitary(&embed(
                reg.n_spins(),
                3,
                &crate::circuits::rotation_matrix(theta, 0.0),
            ));
            let out = qnd_nuclear_readout(&mut state, &reg, 3, 40, 0.05, &mut r).unwrap();
            ups += u32::from(out.outcome);
            // Post-state is the projected eigenstate.
            let (p_up, _) = measurement_probability(&reg, &state, 3, Basis::Z);
            assert_abs_diff_eq!(p_up, f64::from(out.outcome), epsilon = 1e-9);
        }
        let freq = f64::from(ups) / f64::from(trials);
        let sigma = (p_up_expected * (1.0 - p_up_expected) / f64::from(trials)).sqrt();
        assert!(
            (freq - p_up_expected).abs() < 4.0 * sigma,
            "frequency {freq} vs Born {p_up_expected}"
        );
    }

    #[test]
    fn initialization_reaches_target_and_counts_retries() {
        let reg = Register::device_default();
        let n = reg.n_spins();
        let target = [0u8, 1, 0, 1];
        let target_index = (1 << (n - 1 - 2)) | (1 << (n - 1 - 4));

        // Already-initialized input: identity action, zero retries.
        let mut state = DensityMatrix::basis_state(n, target_index);
        let report = est_initialize(&mut state, &reg, &target, 0.1, 100, &mut rng(8)).unwrap();
        assert!(report.success);
        assert_eq!(report.retries, 0);
        assert_abs_diff_eq!(state.population(target_index), 1.0, epsilon = 1e-12);

        // Noiseless from any basis state: deterministic, no retries.
        for start in [0usize, 3, 9, 14] {
            let mut state = DensityMatrix::basis_state(n, start);
            let report = est_initialize(&mut state, &reg, &target, 0.0, 100, &mut rng(9)).unwrap();
            assert!(report.success);
            assert_eq!(report.retries, 0);
            assert_abs_diff_eq!(state.population(target_index), 1.0, epsilon = 1e-12);
        }

        // Electron-up input violates the precondition.
        let mut bad = DensityMatrix::basis_state(n, 1 << (n - 1));
        assert!(matches!(
            est_initialize(&mut bad, &reg, &target, 0.0, 10, &mut rng(10)),
            Err(ReadoutError::ElectronNotDown(_))
        ));
    }

    #[test]
    fn retry_counts_follow_the_geometric_distribution() {
        let reg = Register::device_default();
        let n = reg.n_spins();
        let p = 0.05;
        // Per-round success: all 8 pulses clean.
        let s = (1.0 - p) as f64;
        let s_round = s.powi(2 * reg.n_nuclei() as i32);
        let expected_mean = (1.0 - s_round) / s_round;
        let mut r = rng(11);
        let trials = 4000;
        let mut total = 0u64;
        let mut saw_retry = false;
        for _ in 0..trials {
            let mut state = DensityMatrix::basis_state(n, 5);
            let report = est_initialize(&mut state, &reg, &[0, 0, 0, 0], p, 10_000, &mut r).unwrap();
            assert!(report.success);
            total += u64::from(report.retries);
            saw_retry |= report.retries > 0;
        }
        assert!(saw_retry, "5% pulse error must trigger retries");
        let mean = total as f64 / trials as f64;
        let sigma = ((1.0 - s_round) / (s_round * s_round) / trials as f64).sqrt();
        assert!(
            (mean - expected_mean).abs() < 4.0 * sigma,
            "mean retries {mean} vs geometric {expected_mean}"
        );
    }

    #[test]
    fn ionization_shock_flips_follow_binomial_statistics() {
        let reg = Register::device_default();
        let n = reg.n_spins();

        // Zero rate: identity channel, zero flips.
        let mut state = DensityMatrix::basis_state(n, 3);
        let before = state.mat.clone();
        let flips =
            apply_ionization_shock(&mut state, &reg, &[0.0; 4], 1_000_000, &mut rng(12)).unwrap();
        assert_eq!(flips, 0);
        assert!((&state.mat - &before).norm() < 1e-15);

        // Certain flip: one event at rate 1 toggles every nucleus.
        let mut state = DensityMatrix::ground(&reg);
        let flips = apply_ionization_shock(&mut state, &reg, &[1.0; 4], 1, &mut rng(13)).unwrap();
        assert_eq!(flips, 4);
        assert_abs_diff_eq!(state.population(0b01111), 1.0, epsilon = 1e-12);

        // Device rates over a six-hour run: mean total flips ≈ count·Σγ.
        let rates = [1.08e-5, 1.24e-5, 1.39e-5, 1.2e-5];
        let count = 9_600_000u64;
        let expected: f64 = count as f64 * rates.iter().sum::<f64>();
        let mut r = rng(14);
        let trials = 40;
        let mut total = 0u64;
        for _ in 0..trials {
            let mut state = DensityMatrix::ground(&reg);
            total += apply_ionization_shock(&mut state, &reg, &rates, count, &mut r).unwrap();
        }
        let mean = total as f64 / trials as f64;
        let sigma = (expected / trials as f64).sqrt(); // ~Poisson spread
        assert!(
            (mean - expected).abs() < 5.0 * sigma,
            "mean flips {mean} vs expected {expected}"
        );
        // Single-nucleus expectation matches the measured ≈104 flips.
        assert_abs_diff_eq!(count as f64 * rates[0], 103.7, epsilon = 0.3);
    }

    #[test]
    fn spam_build_marginalize_and_residual() {
        // Exact product-form matrix: residual 0.
        let single = |e: f64| -> SpamMatrix {
            let mut m = DMatrix::<f64>::zeros(2, 2);
            m[(0, 0)] = 1.0 - e;
            m[(1, 0)] = e;
            m[(0, 1)] = e;
            m[(1, 1)] = 1.0 - e;
            SpamMatrix { probs: m, n_qubits: 1 }
        };
        let m_a = single(0.03);
        let m_b = single(0.08);
        let product = SpamMatrix { probs: m_a.probs.kronecker(&m_b.probs), n_qubits: 2 };
        product.validate().unwrap();
        assert_abs_diff_eq!(tensor_residual(&product, &m_a, &m_b).unwrap(), 0.0, epsilon = 1e-14);

        // Marginalizing the product recovers the singles.
        let back_a = marginalize(&product, &[0]).unwrap();
        let back_b = marginalize(&product, &[1]).unwrap();
        assert!((&back_a.probs - &m_a.probs).norm() < 1e-12);
        assert!((&back_b.probs - &m_b.probs).norm() < 1e-12);
        assert_abs_diff_eq!(
            tensor_residual(&SpamMatrix::identity(2), &SpamMatrix::identity(1), &SpamMatrix::identity(1))
                .unwrap(),
            0.0,
            epsilon = 1e-15
        );

        // Simulated shots: independent errors give a small residual,
        // an injected correlated flip a distinctly larger one.
        let flips = [0.02, 0.05, 0.03, 0.04];
        let mut r = rng(15);
        let shots = simulate_spam_shots(4, 3000, &flips, None, &mut r).unwrap();
        let full = build_spam(4, &shots).unwrap();
        full.validate().unwrap();
        let pair = marginalize(&full, &[1, 2]).unwrap();
        let q1 = marginalize(&full, &[1]).unwrap();
        let q2 = marginalize(&full, &[2]).unwrap();
        let residual_indep = tensor_residual(&pair, &q1, &q2).unwrap();
        assert!(residual_indep < 0.02, "independent-error residual {residual_indep}");

        let shots = simulate_spam_shots(4, 3000, &flips, Some((1, 2, 0.05)), &mut r).unwrap();
        let full = build_spam(4, &shots).unwrap();
        let pair = marginalize(&full, &[1, 2]).unwrap();
        let q1 = marginalize(&full, &[1]).unwrap();
        let q2 = marginalize(&full, &[2]).unwrap();
        let residual_corr = tensor_residual(&pair, &q1, &q2).unwrap();
        assert!(
            residual_corr > 3.0 * residual_indep.max(0.005),
            "correlated residual {residual_corr} vs independent {residual_indep}"
        );

        // CSV has the labeled header and one row per outcome.
        let csv = pair.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "measured,prep_00,prep_01,prep_10,prep_11");
        assert_eq!(csv.lines().count(), 5);
    }
}
