//! Channel-plus-detector models expressed as per-photon-number click
//! probabilities, and the expected counting rates they induce.
//!
//! The verification never assumes the channel is honest: an adversary may
//! make the channel more transparent for multi-photon pulses than for single
//! photons. Everything such an adversary can do to counting statistics acts
//! through a map n -> eta_n, because pulses of the same photon number from
//! different sources are identical and cannot be treated differently.

use std::collections::BTreeMap;

use crate::photon_source::{poisson_pmf, tail_cutoff, Intensity};
use crate::{Error, Result};

/// Per-photon-number transmittance map plus a dark-count rate.
///
/// A uniform eta for all n is the honest lossy channel. Photon numbers above
/// the largest specified entry reuse its value; gaps below it take the value
/// at the nearest specified photon number beneath them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    eta_per_fock: BTreeMap<u32, f64>,
    s0: f64,
}

impl ChannelModel {
    /// Honest channel: the same transmittance for every photon number.
    pub fn uniform(eta: f64, s0: f64) -> Result<Self> {
        Self::per_fock([(1, eta)], s0)
    }

    pub fn per_fock(
        eta: impl IntoIterator<Item = (u32, f64)>,
        s0: f64,
    ) -> Result<Self> {
        let eta_per_fock: BTreeMap<u32, f64> = eta.into_iter().collect();
        if eta_per_fock.is_empty() {
            return Err(Error::InvalidInput("eta map must not be empty".into()));
        }
        if let Some((&n, _)) = eta_per_fock.iter().next() {
            if n == 0 {
                return Err(Error::InvalidInput(
                    "eta map keys start at photon number 1; vacuum clicks are s0".into(),
                ));
            }
        }
        for (&n, &eta) in &eta_per_fock {
            if !(0.0..=1.0).contains(&eta) || !eta.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "eta_{n} must be in [0, 1], got {eta}"
                )));
            }
        }
        if !(0.0..1.0).contains(&s0) || !s0.is_finite() {
            return Err(Error::InvalidInput(format!(
                "dark-count rate must be in [0, 1), got {s0}"
            )));
        }
        Ok(Self { eta_per_fock, s0 })
    }

    pub fn dark_rate(&self) -> f64 {
        self.s0
    }

    /// Transmittance used for an n-photon pulse, n >= 1.
    pub fn eta_for(&self, n: u32) -> f64 {
        match self.eta_per_fock.range(..=n).next_back() {
            Some((_, &eta)) => eta,
            None => *self.eta_per_fock.values().next().expect("non-empty map"),
        }
    }

    /// The uniform transmittance if this is an honest channel.
    pub fn uniform_eta(&self) -> Option<f64> {
        if self.eta_per_fock.len() == 1 {
            self.eta_per_fock.get(&1).copied()
        } else {
            None
        }
    }
}

/// Probability that a pulse of exactly n photons produces a click. Dark
/// count and transmission compose as independent events:
/// 1 - (1 - s0)(1 - eta_n)^n.
pub fn click_probability(n: u32, ch: &ChannelModel) -> f64 {
    if n == 0 {
        return ch.s0;
    }
    let eta = ch.eta_for(n);
    1.0 - (1.0 - ch.s0) * (1.0 - eta).powi(n as i32)
}

/// Expected counting rate of a source of the given intensity: the Poisson
/// average of the per-photon-number click probabilities. The truncated tail
/// is folded into the last class so the photon-number weights sum to one
/// exactly.
pub fn expected_rate(mu: Intensity, ch: &ChannelModel) -> f64 {
    if mu.is_vacuum() {
        return ch.s0;
    }
    let cutoff = tail_cutoff(mu);
    let mut rate = 0.0;
    let mut mass = 0.0;
    for n in 0..cutoff {
        let p = poisson_pmf(mu, n);
        mass += p;
        rate += p * click_probability(n, ch);
    }
    rate + (1.0 - mass) * click_probability(cutoff, ch)
}

/// Expected fraction of clicks caused by multi-photon (n >= 2) pulses; this
/// is the true tagged fraction the bounds must stay above.
pub fn expected_tagged_fraction(mu: Intensity, ch: &ChannelModel) -> Result<f64> {
    let total = expected_rate(mu, ch);
    if total == 0.0 {
        return Err(Error::ZeroRate("expected rate is zero"));
    }
    let cutoff = tail_cutoff(mu).max(2);
    let mut tagged = 0.0;
    let mut mass = 0.0;
    for n in 2..cutoff {
        let p = poisson_pmf(mu, n);
        mass += p;
        tagged += p * click_probability(n, ch);
    }
    let head: f64 = (0..2).map(|n| poisson_pmf(mu, n)).sum();
    tagged += (1.0 - head - mass) * click_probability(cutoff, ch);
    Ok(tagged / total)
}

/// Clicks and pulses for one source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountPair {
    pub clicks: u64,
    pub pulses: u64,
}

/// Raw counts behind an [`ObservedRates`], in protocol order
/// (vacuum, signal, decoy).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceCounts {
    pub vacuum: CountPair,
    pub signal: CountPair,
    pub decoy: CountPair,
}

/// The only data the bounds are allowed to consume: counting rates of the
/// vacuum, signal (mu) and decoy (mu') sources.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedRates {
    pub s0: f64,
    pub s_mu: f64,
    pub s_mup: f64,
    pub counts: Option<SourceCounts>,
}

impl ObservedRates {
    pub fn from_rates(s0: f64, s_mu: f64, s_mup: f64) -> Result<Self> {
        for (name, v) in [("s0", s0), ("s_mu", s_mu), ("s_mup", s_mup)] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "counting rate {name} must be in [0, 1], got {v}"
                )));
            }
        }
        Ok(Self {
            s0,
            s_mu,
            s_mup,
            counts: None,
        })
    }

    pub fn from_counts(counts: SourceCounts) -> Result<Self> {
        for (name, c) in [
            ("vacuum", counts.vacuum),
            ("signal", counts.signal),
            ("decoy", counts.decoy),
        ] {
            if c.pulses == 0 {
                return Err(Error::InvalidInput(format!("{name} source sent no pulses")));
            }
            if c.clicks > c.pulses {
                return Err(Error::InvalidInput(format!(
                    "{name} source has more clicks than pulses"
                )));
            }
        }
        let rate = |c: CountPair| c.clicks as f64 / c.pulses as f64;
        Ok(Self {
            s0: rate(counts.vacuum),
            s_mu: rate(counts.signal),
            s_mup: rate(counts.decoy),
            counts: Some(counts),
        })
    }
}

/// Expected rates of the three protocol sources under a channel model.
pub fn expected_rates(mu: Intensity, mup: Intensity, ch: &ChannelModel) -> ObservedRates {
    ObservedRates {
        s0: ch.dark_rate(),
        s_mu: expected_rate(mu, ch),
        s_mup: expected_rate(mup, ch),
        counts: None,
    }
}
