//! Static device description: magnetic field, gyromagnetic ratios, hyperfine
//! couplings and coherence times, plus the on-disk config format.
//!
//! A device file is TOML with top-level keys `b_field_T`,
//! `electron_gamma_Hz_per_T`, `electron_T2_star_s` (optional
//! `electron_T1_s`), and an array of `[[nuclei]]` tables with
//! `label`, `gamma_Hz_per_T`, `A_Hz`, `T2_star_s`, `T1_s`.
//!
//! The bundled default ([`SpinSystemSpec::device_default`]) describes the
//! measured device: B0 = 1.35 T, six nuclei (five 31P + one 1H) with
//! hyperfine couplings 28.6 MHz, 73.7 MHz, 137.0 MHz, 226 kHz, 168 kHz,
//! 211 kHz. The simulated register is the electron plus the nuclei selected
//! by `active_mask` (default: the first four).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors arising from device construction or validation.
#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("device file parse failure: {0}")]
    Parse(String),
    #[error("invalid device: {0}")]
    Invalid(String),
    #[error("register dimension overflow: {n} spins requested, the simulator supports at most 7 (electron + 6 nuclei)")]
    DimensionOverflow { n: usize },
    #[error("nucleus index {index} is not active in this register")]
    InactiveNucleus { index: usize },
}

/// One nuclear spin of the cluster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NucleusSpec {
    /// Human-readable name, e.g. "N1".
    pub label: String,
    /// Nuclear gyromagnetic ratio γ_n, Hz/T.
    #[serde(rename = "gamma_Hz_per_T")]
    pub gamma: f64,
    /// Hyperfine coupling A to the shared electron, Hz.
    #[serde(rename = "A_Hz")]
    pub hyperfine: f64,
    /// Ramsey dephasing time T2*, seconds.
    #[serde(rename = "T2_star_s")]
    pub t2_star: f64,
    /// Longitudinal relaxation time T1, seconds.
    #[serde(rename = "T1_s")]
    pub t1: f64,
}

/// Static description of the whole device.
///
/// Immutable after construction; all derived quantities are pure functions
/// of this struct (plus explicit seeds), so it is freely shareable across
/// threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpinSystemSpec {
    /// Static field magnitude B0, tesla. The field defines the z axis.
    #[serde(rename = "b_field_T")]
    pub b_field: f64,
    /// Electron gyromagnetic ratio γ_e, Hz/T.
    #[serde(rename = "electron_gamma_Hz_per_T")]
    pub electron_gamma: f64,
    /// Electron Ramsey dephasing time T2*, seconds.
    #[serde(rename = "electron_T2_star_s")]
    pub electron_t2_star: f64,
    /// Electron relaxation time, seconds. The measurement cycle reinitializes
    /// the electron, so this is typically absent (relaxation disabled).
    #[serde(rename = "electron_T1_s", default, skip_serializing_if = "Option::is_none")]
    pub electron_t1: Option<f64>,
    /// The nuclear spins, in canonical register order.
    pub nuclei: Vec<NucleusSpec>,
    /// Which nuclei are part of the simulated register. Same length as
    /// `nuclei`. Defaults to the first four when loaded from a file that
    /// omits it.
    #[serde(default)]
    pub active_mask: Vec<bool>,
}

/// Bundled default device file (see module docs).
pub const DEFAULT_DEVICE_TOML: &str = include_str!("../assets/device_default.toml");

impl SpinSystemSpec {
    /// Parse a device description from TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self, DeviceError> {
        let mut spec: SpinSystemSpec =
            toml::from_str(text).map_err(|e| DeviceError::Parse(e.to_string()))?;
        if spec.active_mask.is_empty() {
            spec.active_mask = (0..spec.nuclei.len()).map(|i| i < 4).collect();
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Load a device description from a file path.
    pub fn from_path(path: &std::path::Path) -> Result<Self, DeviceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DeviceError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// The measured-device defaults with the four operated nuclei active.
    pub fn device_default() -> Self {
        Self::from_toml_str(DEFAULT_DEVICE_TOML).expect("bundled device file is valid")
    }

    /// Check invariants; called by all constructors.
    pub fn validate(&self) -> Result<(), DeviceError> {
        if !(self.b_field > 0.0) {
            return Err(DeviceError::Invalid("b_field must be > 0".into()));
        }
        if !(self.electron_gamma > 0.0) {
            return Err(DeviceError::Invalid("electron_gamma must be > 0".into()));
        }
        if !(self.electron_t2_star > 0.0) {
            return Err(DeviceError::Invalid("electron T2* must be > 0".into()));
        }
        if self.nuclei.len() > 6 {
            return Err(DeviceError::Invalid(format!(
                "at most 6 nuclei supported, got {}",
                self.nuclei.len()
            )));
        }
        if self.active_mask.len() != self.nuclei.len() {
            return Err(DeviceError::Invalid(format!(
                "active_mask length {} does not match nuclei count {}",
                self.active_mask.len(),
                self.nuclei.len()
            )));
        }
        for n in &self.nuclei {
            if !(n.gamma > 0.0) {
                return Err(DeviceError::Invalid(format!("{}: gamma must be > 0", n.label)));
            }
            if n.hyperfine < 0.0 {
                return Err(DeviceError::Invalid(format!("{}: hyperfine must be ≥ 0", n.label)));
            }
            if !(n.t2_star > 0.0) {
                return Err(DeviceError::Invalid(format!("{}: T2* must be > 0", n.label)));
            }
            if !(n.t1 > 0.0) {
                return Err(DeviceError::Invalid(format!("{}: T1 must be > 0", n.label)));
            }
        }
        let n_spins = 1 + self.active_mask.iter().filter(|&&a| a).count();
        if n_spins > 7 {
            return Err(DeviceError::DimensionOverflow { n: n_spins });
        }
        Ok(())
    }

    /// Indices (into `nuclei`) of the active nuclei, in register order.
    pub fn active_indices(&self) -> Vec<usize> {
        self.active_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
            .collect()
    }

    /// Return a copy with a different set of active nuclei (by index).
    pub fn with_active(&self, indices: &[usize]) -> Result<Self, DeviceError> {
        let mut spec = self.clone();
        spec.active_mask = vec![false; self.nuclei.len()];
        for &i in indices {
            if i >= self.nuclei.len() {
                return Err(DeviceError::InactiveNucleus { index: i });
            }
            spec.active_mask[i] = true;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_default_parses() {
        let spec = SpinSystemSpec::device_default();
        assert_eq!(spec.nuclei.len(), 6);
        assert_eq!(spec.active_indices(), vec![0, 1, 2, 3]);
        assert_eq!(spec.b_field, 1.35);
        assert_eq!(spec.nuclei[0].hyperfine, 28.6e6);
        assert_eq!(spec.nuclei[3].hyperfine, 226e3);
        assert_eq!(spec.nuclei[5].gamma, 42.57e6); // the hydrogen
    }

    #[test]
    fn rejects_nonpositive_field() {
        let mut spec = SpinSystemSpec::device_default();
        spec.b_field = 0.0;
        assert!(matches!(spec.validate(), Err(DeviceError::Invalid(_))));
    }

    #[test]
    fn rejects_register_overflow() {
        let spec = SpinSystemSpec::device_default();
        // All six nuclei → 7 spins: allowed. (Boundary case.)
        let all = spec.with_active(&[0, 1, 2, 3, 4, 5]).unwrap();
        assert_eq!(all.active_indices().len(), 6);
        // More nuclei than exist → inactive-nucleus error.
        assert!(spec.with_active(&[0, 6]).is_err());
    }

    #[test]
    fn active_subset_roundtrip() {
        let spec = SpinSystemSpec::device_default();
        let pair = spec.with_active(&[1, 2]).unwrap();
        assert_eq!(pair.active_indices(), vec![1, 2]);
    }
}
