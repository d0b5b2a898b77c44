//! Estimation and fitting: decay/oscillation fits with bootstrap errors,
//! state metrics (fidelities, witness, error-bias diagnostics), and state
//! tomography (linear inversion + maximum-likelihood reconstruction).

pub mod fit;
pub mod metrics;
pub mod tomo;
