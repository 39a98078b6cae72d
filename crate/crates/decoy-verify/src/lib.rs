//! Verification toolkit for decoy-state quantum key distribution.
//!
//! A weak coherent source emits multi-photon pulses with small probability,
//! and over a very lossy channel an eavesdropper can exploit them
//! (photon-number splitting) without causing errors. Key distillation stays
//! possible if one can verify an upper bound on the fraction of detected bits
//! that came from multi-photon pulses (the "tagged" fraction). This crate
//! implements that verification for the three-intensity protocol
//! (vacuum, signal mu, decoy mu'):
//!
//! - [`photon_source`]: Poisson photon-number statistics and the convex
//!   decompositions of the two coherent sources that the bounds rest on.
//! - [`channel`]: per-photon-number click models (honest or adversarial) and
//!   expected counting rates.
//! - [`bounds`]: upper bounds on the tagged fraction from observed counting
//!   rates, in increasing sophistication: single-decoy (Hwang), asymptotic
//!   three-intensity, finite-statistics, and operational-error worst case.
//! - [`keyrate`]: error-correction / privacy-amplification costs and the net
//!   secure key fraction given a verified tagged fraction.
//! - [`montecarlo`]: a seeded session simulator with per-photon-number
//!   adversarial channels and ground-truth tagging, for soundness testing.
//! - [`cli`]: config-driven entry point with CSV reports.

pub mod bounds;
pub mod channel;
pub mod cli;
mod error;
pub mod keyrate;
pub mod montecarlo;
pub mod photon_source;

pub use error::{Error, Result};
