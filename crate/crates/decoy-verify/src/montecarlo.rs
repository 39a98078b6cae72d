//! Ground-truth protocol session simulator.
//!
//! Generates observed counting rates with genuine statistical fluctuation
//! plus the true tagged fraction, which only the simulator can know: a click
//! is tagged when the emitted pulse carried two or more photons. That makes
//! every bound testable against reality, including against adversarial
//! channels that are selectively transparent by photon number.
//!
//! Pulses are never looped over individually. Each source's pulses are
//! partitioned into photon-number classes by multinomial sampling of the
//! (possibly intensity-error-perturbed) Poisson law, and each class then
//! clicks binomially. That is distributionally identical for counting
//! statistics and keeps 1e10-pulse sessions at microsecond cost. All
//! sampling runs on counter-based streams keyed by (source, class), so the
//! outcome depends only on the seed, never on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution};

use crate::bounds::{
    asymptotic_delta, fluctuation_delta, hwang_delta, operational_error_delta, EpsilonCaps,
    FluctuationParams,
};
use crate::channel::{click_probability, ChannelModel, CountPair, ObservedRates, SourceCounts};
use crate::photon_source::{poisson_pmf, tail_cutoff, Intensity};
use crate::{Error, Result};

const MAX_PULSES: u64 = 1 << 63;

/// One source of the protocol: an intensity and how many pulses it sends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    pub mu: Intensity,
    pub pulses: u64,
}

/// A reproducible protocol session: the three sources (vacuum, mu, mu'),
/// a channel, a seed, and optionally a per-pulse relative intensity error
/// drawn uniformly from [-beta, +beta].
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    sources: Vec<SourceSpec>,
    channel: ChannelModel,
    seed: u64,
    intensity_error: Option<f64>,
}

impl SessionConfig {
    pub fn new(sources: Vec<SourceSpec>, channel: ChannelModel, seed: u64) -> Result<Self> {
        if sources.len() < 3 {
            return Err(Error::InvalidInput(
                "a session needs at least the three sources (vacuum, mu, mu')".into(),
            ));
        }
        if !sources[0].mu.is_vacuum() {
            return Err(Error::InvalidInput(
                "the first source must be the vacuum source".into(),
            ));
        }
        if sources[1].mu.value() >= sources[2].mu.value() {
            return Err(Error::InvalidInput(
                "sources must be ordered (vacuum, mu, mu') with mu < mu'".into(),
            ));
        }
        for (i, s) in sources.iter().enumerate() {
            if s.pulses == 0 {
                return Err(Error::InvalidInput(format!("source {i} sends no pulses")));
            }
            if s.pulses >= MAX_PULSES {
                return Err(Error::Overflow(format!(
                    "source {i} pulse count {} exceeds 2^63",
                    s.pulses
                )));
            }
        }
        Ok(Self {
            sources,
            channel,
            seed,
            intensity_error: None,
        })
    }

    pub fn with_intensity_error(mut self, beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::InvalidInput(format!(
                "intensity error bound must be in [0, 1), got {beta}"
            )));
        }
        self.intensity_error = (beta > 0.0).then_some(beta);
        Ok(self)
    }

    pub fn sources(&self) -> &[SourceSpec] {
        &self.sources
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Per-source tallies. `true_delta` is simulator-only knowledge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceOutcome {
    pub mu: f64,
    pub pulses: u64,
    pub clicks: u64,
    pub vacuum_clicks: u64,
    pub single_clicks: u64,
    pub tagged_clicks: u64,
    pub rate: f64,
    /// tagged / clicks, when anything clicked.
    pub true_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutcome {
    pub per_source: Vec<SourceOutcome>,
    pub seed: u64,
}

impl SimulationOutcome {
    /// The counting rates a real session would hand to the verification,
    /// assuming protocol source order (vacuum, mu, mu').
    pub fn observed_rates(&self) -> Result<ObservedRates> {
        let pair = |s: &SourceOutcome| CountPair {
            clicks: s.clicks,
            pulses: s.pulses,
        };
        ObservedRates::from_counts(SourceCounts {
            vacuum: pair(&self.per_source[0]),
            signal: pair(&self.per_source[1]),
            decoy: pair(&self.per_source[2]),
        })
    }
}

fn stream_rng(seed: u64, source: usize, lane: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(((source as u64 + 1) << 32) | lane);
    rng
}

fn draw_binomial(rng: &mut ChaCha12Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("checked p in (0, 1)").sample(rng)
}

/// Photon-number class probabilities with the tail folded into the last
/// class, so they sum to one exactly.
fn class_probabilities(mu: Intensity, intensity_error: Option<f64>) -> Vec<f64> {
    if mu.is_vacuum() {
        return vec![1.0];
    }
    match intensity_error {
        None => {
            let cutoff = tail_cutoff(mu);
            let mut probs: Vec<f64> = (0..cutoff).map(|n| poisson_pmf(mu, n)).collect();
            let head: f64 = probs.iter().sum();
            probs.push((1.0 - head).max(0.0));
            probs
        }
        Some(beta) => perturbed_class_probabilities(mu.value(), beta),
    }
}

/// Class probabilities of the uniform intensity mixture over
/// [mu(1-beta), mu(1+beta)], by composite Simpson quadrature. The integrand
/// is analytic on a narrow interval, so 64 panels are far below the sums'
/// tolerance.
fn perturbed_class_probabilities(mu: f64, beta: f64) -> Vec<f64> {
    let hi = Intensity::new(mu * (1.0 + beta)).expect("valid perturbed intensity");
    let cutoff = tail_cutoff(hi);
    let panels = 64usize;
    let a = mu * (1.0 - beta);
    let b = mu * (1.0 + beta);
    let h = (b - a) / panels as f64;
    let mut sums = vec![0.0_f64; cutoff as usize];
    for node in 0..=panels {
        let nu = a + h * node as f64;
        let weight = if node == 0 || node == panels {
            1.0
        } else if node % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let mut p = (-nu).exp();
        for (n, slot) in sums.iter_mut().enumerate() {
            *slot += weight * p;
            p *= nu / (n as f64 + 1.0);
        }
    }
    let scale = h / 3.0 / (b - a);
    let mut probs: Vec<f64> = sums.into_iter().map(|s| s * scale).collect();
    let head: f64 = probs.iter().sum();
    probs.push((1.0 - head).max(0.0));
    probs
}

/// Splits `pulses` into the classes by conditional binomial draws; the
/// counts always sum to `pulses` exactly.
fn multinomial_split(rng: &mut ChaCha12Rng, pulses: u64, probs: &[f64]) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = pulses;
    let mut mass_left = 1.0_f64;
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i == probs.len() - 1 {
            counts[i] = remaining;
            break;
        }
        let q = if mass_left > 0.0 { (p / mass_left).clamp(0.0, 1.0) } else { 1.0 };
        let drawn = draw_binomial(rng, remaining, q);
        counts[i] = drawn;
        remaining -= drawn;
        mass_left -= p;
    }
    counts
}

pub fn simulate(config: &SessionConfig) -> Result<SimulationOutcome> {
    let mut per_source = Vec::with_capacity(config.sources.len());
    for (idx, spec) in config.sources.iter().enumerate() {
        let probs = class_probabilities(spec.mu, config.intensity_error);
        let mut split_rng = stream_rng(config.seed, idx, 0);
        let counts = multinomial_split(&mut split_rng, spec.pulses, &probs);

        let mut clicks_by_class = vec![0u64; counts.len()];
        for (n, &count) in counts.iter().enumerate() {
            let p = click_probability(n as u32, &config.channel);
            let mut rng = stream_rng(config.seed, idx, 1 + n as u64);
            clicks_by_class[n] = draw_binomial(&mut rng, count, p);
        }

        let vacuum_clicks = clicks_by_class.first().copied().unwrap_or(0);
        let single_clicks = clicks_by_class.get(1).copied().unwrap_or(0);
        let tagged_clicks: u64 = clicks_by_class.iter().skip(2).sum();
        let clicks = vacuum_clicks + single_clicks + tagged_clicks;
        per_source.push(SourceOutcome {
            mu: spec.mu.value(),
            pulses: spec.pulses,
            clicks,
            vacuum_clicks,
            single_clicks,
            tagged_clicks,
            rate: clicks as f64 / spec.pulses as f64,
            true_delta: (clicks > 0).then(|| tagged_clicks as f64 / clicks as f64),
        });
    }
    Ok(SimulationOutcome {
        per_source,
        seed: config.seed,
    })
}

/// Which bound a soundness trial exercises.
#[derive(Debug, Clone)]
pub enum BoundMethod {
    Hwang,
    Asymptotic3,
    Fluctuation(FluctuationParams),
    Operational(FluctuationParams, EpsilonCaps),
}

/// Outcome of one simulate-then-verify round for the signal source.
#[derive(Debug, Clone, Copy)]
pub struct Trial {
    pub verified_delta: f64,
    pub true_delta: f64,
    /// Whether the verified bound covered the truth.
    pub sound: bool,
}

/// Runs a session, feeds the observed rates to the requested bound, and
/// compares against the simulator's ground truth for the signal source.
pub fn soundness_trial(config: &SessionConfig, method: &BoundMethod) -> Result<Trial> {
    let outcome = simulate(config)?;
    let signal = &outcome.per_source[1];
    let true_delta = signal.true_delta.ok_or(Error::NoData)?;
    let rates = outcome.observed_rates()?;
    let mu = config.sources[1].mu;
    let mup = config.sources[2].mu;
    let verified_delta = match method {
        BoundMethod::Hwang => hwang_delta(mu, mup, &rates)?.delta,
        BoundMethod::Asymptotic3 => asymptotic_delta(mu, mup, &rates)?.delta,
        BoundMethod::Fluctuation(params) => fluctuation_delta(mu, mup, &rates, params)?.delta,
        BoundMethod::Operational(params, caps) => {
            operational_error_delta(mu, mup, &rates, params, caps)?.bound.delta
        }
    };
    Ok(Trial {
        verified_delta,
        true_delta,
        sound: verified_delta >= true_delta,
    })
}

/// Settings for a randomized-adversary soundness campaign.
#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub trials: usize,
    pub seed: u64,
    pub mu: Intensity,
    pub mup: Intensity,
    pub pulses_min: u64,
    pub pulses_max: u64,
    /// Dark rates are drawn uniformly from [0, s0_max].
    pub s0_max: f64,
    /// Per-photon-number transmittances are drawn log-uniformly from
    /// [eta_min, eta_max], independently for each photon number.
    pub eta_min: f64,
    pub eta_max: f64,
    pub coefficient: f64,
    /// Largest photon number with an independently drawn transmittance.
    pub max_fock: u32,
}

impl CampaignConfig {
    pub fn new(trials: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            trials,
            seed,
            mu: Intensity::new(0.3)?,
            mup: Intensity::new(0.45)?,
            pulses_min: 10_u64.pow(7),
            pulses_max: 10_u64.pow(8),
            s0_max: 1e-5,
            eta_min: 1e-3,
            eta_max: 1.0,
            coefficient: 10.0,
            max_fock: 16,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialVerdict {
    Sound,
    Unsound,
    /// The bound refused to produce a number (infeasible statistics); the
    /// protocol would abort, which is never a soundness violation.
    Abstained,
}

#[derive(Debug, Clone, Copy)]
pub struct TrialRecord {
    pub index: usize,
    pub pulses: u64,
    pub s0: f64,
    pub verified_delta: Option<f64>,
    pub true_delta: Option<f64>,
    pub verdict: TrialVerdict,
}

#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub records: Vec<TrialRecord>,
    pub sound: usize,
    pub unsound: usize,
    pub abstained: usize,
}

/// Draws adversarial per-photon-number channels and checks the
/// finite-statistics bound against ground truth, with the confidence
/// coefficient applied at each trial's actual pulse count.
pub fn soundness_campaign(config: &CampaignConfig) -> Result<CampaignOutcome> {
    let mut records = Vec::with_capacity(config.trials);
    let (mut sound, mut unsound, mut abstained) = (0usize, 0usize, 0usize);
    for index in 0..config.trials {
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        rng.set_stream(0xCA4D + index as u64);

        let ln_ratio = (config.eta_max / config.eta_min).ln();
        let eta: Vec<(u32, f64)> = (1..=config.max_fock)
            .map(|n| (n, config.eta_min * (rng.gen::<f64>() * ln_ratio).exp()))
            .collect();
        let s0 = rng.gen::<f64>() * config.s0_max;
        let channel = ChannelModel::per_fock(eta, s0)?;

        let ln_n = (config.pulses_max as f64 / config.pulses_min as f64).ln();
        let pulses = (config.pulses_min as f64 * (rng.gen::<f64>() * ln_n).exp()) as u64;
        let vacuum_pulses = (pulses * 2 / 5).max(1);

        let session = SessionConfig::new(
            vec![
                SourceSpec { mu: Intensity::vacuum(), pulses: vacuum_pulses },
                SourceSpec { mu: config.mu, pulses },
                SourceSpec { mu: config.mup, pulses },
            ],
            channel,
            rng.gen::<u64>(),
        )?;
        let params = FluctuationParams::with_confidence(
            pulses,
            pulses,
            vacuum_pulses,
            config.coefficient,
            0.0,
        )?;

        let record = match soundness_trial(&session, &BoundMethod::Fluctuation(params)) {
            Ok(trial) => {
                let verdict = if trial.sound {
                    sound += 1;
                    TrialVerdict::Sound
                } else {
                    unsound += 1;
                    TrialVerdict::Unsound
                };
                TrialRecord {
                    index,
                    pulses,
                    s0,
                    verified_delta: Some(trial.verified_delta),
                    true_delta: Some(trial.true_delta),
                    verdict,
                }
            }
            Err(Error::NoSolution(_))
            | Err(Error::NegativeBound { .. })
            | Err(Error::ZeroRate(_))
            | Err(Error::NoData) => {
                abstained += 1;
                TrialRecord {
                    index,
                    pulses,
                    s0,
                    verified_delta: None,
                    true_delta: None,
                    verdict: TrialVerdict::Abstained,
                }
            }
            Err(other) => return Err(other),
        };
        records.push(record);
    }
    Ok(CampaignOutcome {
        records,
        sound,
        unsound,
        abstained,
    })
}
