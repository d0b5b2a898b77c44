//! Pulse-level simulator and analysis toolkit for a donor-cluster silicon
//! spin processor: one electron spin hyperfine-coupled to a register of
//! nuclear spins, driven by ESR/NMR pulses and read out via the electron.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`] — dense complex matrix helpers (Kronecker products, Hermitian
//!   exponentials, principal matrix logarithm, norms).
//! - [`device`] — static device description (field, gyromagnetic ratios,
//!   hyperfine couplings, coherence times) and its on-disk config format.
//! - [`spin`] — spin registers, basis bookkeeping, static Hamiltonians and
//!   closed-form transition frequencies.
//! - [`dynamics`] — piecewise-constant rotating-frame pulse segments, the
//!   noise model, and unitary / master-equation evolution.
//! - [`liouville`] — vectorized Liouville-space evolution used to validate
//!   the production integrator on small registers.
//! - [`circuits`] — gate-level circuit IR, compilation onto pulse segments,
//!   ideal and pulse-level execution, standard state-preparation circuits.
//! - [`detection`] — the two-qubit code, stabilizer syndrome extraction and
//!   Pauli-frame-update recovery.
//! - [`readout`] — single-shot electron readout Monte Carlo, repetitive
//!   nuclear readout, initialization-by-measurement, ionization-shock and
//!   SPAM-matrix tooling.
//! - [`analysis::tomo`] — multi-basis measurement simulation, linear-inversion
//!   and maximum-likelihood state reconstruction.
//! - [`analysis::fit`] — nonlinear least-squares models (Ramsey, stretched
//!   exponential, relaxation, benchmarking decays, sinusoid) with bootstrap
//!   intervals.
//! - [`analysis::metrics`] — fidelities, entanglement witness, error-bias
//!   ratio, noise correlation factor, Pauli transfer matrices and error
//!   generators.
//! - [`bench`] — Clifford group synthesis and randomized-benchmarking
//!   harnesses.
//!
//! Conventions used throughout:
//!
//! - All stored frequencies are linear (Hz); factors of 2π appear only inside
//!   evolution kernels.
//! - Register index 0 is the electron (most significant qubit); nuclei follow
//!   in device order. Bit 0 encodes |↓⟩ (electron) / |⇓⟩ (nucleus).
//! - Times are seconds.

pub mod analysis;
pub mod bench;
pub mod circuits;
pub mod detection;
pub mod device;
pub mod dynamics;
pub mod linalg;
pub mod liouville;
pub mod readout;
pub mod spin;

pub use linalg::C64;
