//! Entangled two-photon absorption (eTPA) virtual-state spectroscopy.
//!
//! The crate synthesizes delay-scan signals `s(T_e, τ)` for a multi-level
//! sample, Fourier-transforms them on a realistic delay grid, and recovers
//! the intermediate-state energies by tracking spectral peaks across two or
//! more pump wavelengths.
//!
//! Units throughout: energies and angular frequencies in eV (ħω), times in
//! fs, lengths in nm.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
mod error;
pub mod output;
pub mod physics;
pub mod pipeline;
pub mod scan;
pub mod signal;

pub use error::{Error, Result};
