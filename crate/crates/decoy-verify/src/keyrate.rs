//! Key-distillation arithmetic: resource costs and the net secure key
//! fraction given error rates and a verified tagged fraction.
//!
//! Error correction consumes H(t_b) per raw bit. Privacy amplification
//! consumes Delta + (1 - Delta) H(t_p / (1 - Delta)) per raw bit: tagged
//! bits are discarded outright and the untagged remainder pays an inflated
//! phase-error price. Once t_p / (1 - Delta) passes 1/2 the amplification
//! consumes everything and no key remains.

use crate::{Error, Result};

/// Binary entropy in bits, with H(0) = H(1) = 0.
pub fn binary_entropy(t: f64) -> f64 {
    assert!((0.0..=1.0).contains(&t), "probability out of range: {t}");
    if t == 0.0 || t == 1.0 {
        return 0.0;
    }
    -t * t.log2() - (1.0 - t) * (1.0 - t).log2()
}

/// Validated inputs to distillation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillationInput {
    /// Bit-flip error rate.
    pub t_b: f64,
    /// Phase-flip error rate.
    pub t_p: f64,
    /// Verified tagged fraction.
    pub delta: f64,
    /// Raw bit count.
    pub n_r: u64,
}

impl DistillationInput {
    pub fn new(t_b: f64, t_p: f64, delta: f64, n_r: u64) -> Result<Self> {
        for (name, v, hi) in [("t_b", t_b, 0.5), ("t_p", t_p, 0.5), ("delta", delta, 1.0)] {
            if !(0.0..=hi).contains(&v) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be in [0, {hi}], got {v}"
                )));
            }
        }
        Ok(Self {
            t_b,
            t_p,
            delta,
            n_r,
        })
    }
}

/// Per-raw-bit privacy-amplification cost, saturating at 1 when the
/// effective phase error rate t_p / (1 - Delta) exceeds 1/2.
fn pa_fraction(input: &DistillationInput) -> f64 {
    if input.delta >= 1.0 {
        return 1.0;
    }
    let effective = input.t_p / (1.0 - input.delta);
    if effective > 0.5 {
        return 1.0;
    }
    input.delta + (1.0 - input.delta) * binary_entropy(effective)
}

/// Raw bits consumed by error correction and privacy amplification:
/// (n_r H(t_b), n_r [Delta + (1 - Delta) H(t_p / (1 - Delta))]).
pub fn distillation_costs(input: &DistillationInput) -> (f64, f64) {
    let n = input.n_r as f64;
    (n * binary_entropy(input.t_b), n * pa_fraction(input))
}

/// Net key fraction 1 - H(t_b) - Delta - (1 - Delta) H(t_p / (1 - Delta)),
/// floored at zero.
pub fn key_fraction(input: &DistillationInput) -> f64 {
    (1.0 - binary_entropy(input.t_b) - pa_fraction(input)).max(0.0)
}
