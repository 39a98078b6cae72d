//! Operator entry point: JSON config in, CSV or aligned-table report out.
//!
//! Modes: `bound` (verify from rates or a channel model), `table1`
//! (reproduce the reference table of verified bounds), `simulate` (one
//! seeded session), `keyrate` (distillation arithmetic), `campaign`
//! (randomized-adversary soundness trials). Exit codes: 0 success, 1 config
//! error, 2 infeasible computation.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;

use crate::bounds::{
    asymptotic_delta, delta_prime, fluctuation_delta, hwang_delta, operational_error_delta,
    BoundResult, EpsilonCaps, FluctuationParams,
};
use crate::channel::{expected_rates, expected_tagged_fraction, ChannelModel, ObservedRates};
use crate::keyrate::{distillation_costs, key_fraction, DistillationInput};
use crate::montecarlo::{
    simulate, soundness_campaign, CampaignConfig, SessionConfig, SourceSpec, TrialVerdict,
};
use crate::photon_source::Intensity;
use crate::{Error, Result};

pub const BOUND_CSV_HEADER: &str =
    "method,mu,mu_prime,eta,s0,N_mu,N_mup,N0,delta,delta_prime,s1_lower,sc_upper,paper_value,abs_dev";
pub const SIM_CSV_HEADER: &str =
    "source,mu,pulses,clicks,vacuum_clicks,single_clicks,tagged_clicks,rate,true_delta";
pub const KEYRATE_CSV_HEADER: &str = "t_b,t_p,delta,n_r,ec_bits,pa_bits,key_fraction";
pub const CAMPAIGN_CSV_HEADER: &str = "trial,pulses,s0,verified_delta,true_delta,verdict";

// ---------------------------------------------------------------------------
// config file
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: RunSection,
    pub source: Option<SourceSection>,
    pub channel: Option<ChannelSection>,
    pub rates: Option<RatesSection>,
    pub fluctuation: Option<FluctuationSection>,
    pub epsilon: Option<EpsilonSection>,
    pub keyrate: Option<KeyrateSection>,
    pub campaign: Option<CampaignSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub mode: Option<String>,
    /// Bound methods to report; defaults to every method the config has
    /// parameters for.
    pub methods: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    #[serde(default)]
    pub full_precision: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub mu: Option<f64>,
    pub mu_prime: Option<f64>,
    pub n_vacuum: Option<u64>,
    pub n_mu: Option<u64>,
    pub n_mup: Option<u64>,
    /// Per-pulse relative intensity error bound for simulation.
    pub intensity_error: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    /// Uniform transmittance (honest channel).
    pub eta: Option<f64>,
    /// Per-photon-number transmittances, keys are photon numbers >= 1.
    pub eta_per_fock: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub s0: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub s0: f64,
    pub s_mu: f64,
    pub s_mup: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluctuationSection {
    pub n_mu: Option<u64>,
    pub n_mup: Option<u64>,
    pub n_0: Option<u64>,
    pub coefficient: Option<f64>,
    pub r0: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSection {
    /// Shorthand: one cap for all classes of the signal source.
    pub cap: Option<f64>,
    /// Shorthand: one cap for all classes of the decoy source.
    pub cap_prime: Option<f64>,
    pub e0: Option<f64>,
    pub e1: Option<f64>,
    pub ec: Option<f64>,
    pub e0p: Option<f64>,
    pub e1p: Option<f64>,
    pub ecp: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyrateSection {
    pub t_b: Option<f64>,
    pub t_p: Option<f64>,
    pub delta: Option<f64>,
    pub n_r: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    pub trials: Option<usize>,
    pub pulses_min: Option<u64>,
    pub pulses_max: Option<u64>,
    pub s0_max: Option<f64>,
    pub eta_min: Option<f64>,
    pub eta_max: Option<f64>,
    pub coefficient: Option<f64>,
    pub max_fock: Option<u32>,
}

fn require<T>(value: Option<T>, path: &str) -> Result<T> {
    value.ok_or_else(|| Error::InvalidInput(format!("{path}: required")))
}

impl FileConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("config parse error: {e}")))
    }

    fn channel_model(&self) -> Result<Option<ChannelModel>> {
        let Some(section) = &self.channel else {
            return Ok(None);
        };
        let model = match (&section.eta, &section.eta_per_fock) {
            (Some(eta), None) => ChannelModel::uniform(*eta, section.s0)?,
            (None, Some(map)) => {
                let mut eta = Vec::with_capacity(map.len());
                for (key, &value) in map {
                    let n: u32 = key.parse().map_err(|_| {
                        Error::InvalidInput(format!(
                            "channel.eta_per_fock: key {key:?} is not a photon number"
                        ))
                    })?;
                    eta.push((n, value));
                }
                ChannelModel::per_fock(eta, section.s0)?
            }
            (Some(_), Some(_)) => {
                return Err(Error::InvalidInput(
                    "channel: give either eta or eta_per_fock, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidInput(
                    "channel.eta: required (or channel.eta_per_fock)".into(),
                ))
            }
        };
        Ok(Some(model))
    }

    fn intensities(&self) -> Result<(Intensity, Intensity)> {
        let source = self
            .source
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("source: required".into()))?;
        let mu = Intensity::new(require(source.mu, "source.mu")?)?;
        let mup = Intensity::new(require(source.mu_prime, "source.mu_prime")?)?;
        Ok((mu, mup))
    }

    fn observed_rates(&self) -> Result<(ObservedRates, Option<f64>)> {
        if let Some(r) = &self.rates {
            return Ok((ObservedRates::from_rates(r.s0, r.s_mu, r.s_mup)?, None));
        }
        let channel = self.channel_model()?.ok_or_else(|| {
            Error::InvalidInput("rates or channel: one of the two is required".into())
        })?;
        let (mu, mup) = self.intensities()?;
        let rates = expected_rates(mu, mup, &channel);
        Ok((rates, channel.uniform_eta()))
    }

    fn fluctuation_params(&self) -> Result<FluctuationParams> {
        let section = self
            .fluctuation
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("fluctuation: required".into()))?;
        FluctuationParams::with_confidence(
            require(section.n_mu, "fluctuation.n_mu")?,
            require(section.n_mup, "fluctuation.n_mup")?,
            require(section.n_0, "fluctuation.n_0")?,
            section.coefficient.unwrap_or(10.0),
            section.r0.unwrap_or(0.0),
        )
    }

    fn epsilon_caps(&self) -> Result<EpsilonCaps> {
        let section = self
            .epsilon
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("epsilon: required".into()))?;
        let cap = section.cap.unwrap_or(0.0);
        let cap_prime = section.cap_prime.unwrap_or(cap);
        EpsilonCaps::new(
            section.e0.unwrap_or(cap),
            section.e1.unwrap_or(cap),
            section.ec.unwrap_or(cap),
            section.e0p.unwrap_or(cap_prime),
            section.e1p.unwrap_or(cap_prime),
            section.ecp.unwrap_or(cap_prime),
        )
    }
}

// ---------------------------------------------------------------------------
// report rows
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundRow {
    pub method: String,
    pub mu: f64,
    pub mu_prime: Option<f64>,
    pub eta: Option<f64>,
    pub s0: f64,
    pub n_mu: Option<u64>,
    pub n_mup: Option<u64>,
    pub n0: Option<u64>,
    pub delta: Option<f64>,
    pub delta_prime: Option<f64>,
    pub s1_lower: Option<f64>,
    pub sc_upper: Option<f64>,
    pub paper_value: Option<f64>,
    pub abs_dev: Option<f64>,
}

fn fmt_float(v: f64, full_precision: bool) -> String {
    if full_precision {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

fn fmt_opt_float(v: Option<f64>, full_precision: bool) -> String {
    v.map(|v| fmt_float(v, full_precision)).unwrap_or_default()
}

fn fmt_opt_u64(v: Option<u64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl BoundRow {
    fn from_result(result: &BoundResult, mu: Intensity, mup: Intensity, s0: f64) -> Self {
        BoundRow {
            method: result.method.as_str().to_string(),
            mu: mu.value(),
            mu_prime: Some(mup.value()),
            s0,
            delta: Some(result.delta),
            delta_prime: result.delta_prime,
            s1_lower: Some(result.s1_lower),
            sc_upper: Some(result.sc_upper),
            ..Default::default()
        }
    }

    fn csv_fields(&self, full: bool) -> Vec<String> {
        vec![
            self.method.clone(),
            fmt_float(self.mu, full),
            fmt_opt_float(self.mu_prime, full),
            fmt_opt_float(self.eta, full),
            fmt_float(self.s0, full),
            fmt_opt_u64(self.n_mu),
            fmt_opt_u64(self.n_mup),
            fmt_opt_u64(self.n0),
            fmt_opt_float(self.delta, full),
            fmt_opt_float(self.delta_prime, full),
            fmt_opt_float(self.s1_lower, full),
            fmt_opt_float(self.sc_upper, full),
            fmt_opt_float(self.paper_value, full),
            fmt_opt_float(self.abs_dev, full),
        ]
    }
}

pub fn bound_rows_to_csv(rows: &[BoundRow], full_precision: bool) -> String {
    let mut out = String::from(BOUND_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_fields(full_precision).join(","));
        out.push('\n');
    }
    out
}

pub fn bound_rows_to_table(rows: &[BoundRow]) -> String {
    let header: Vec<&str> = BOUND_CSV_HEADER.split(',').collect();
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    cells.extend(rows.iter().map(|r| {
        r.csv_fields(false)
            .into_iter()
            .map(|f| if f.is_empty() { "-".to_string() } else { f })
            .collect()
    }));
    let widths: Vec<usize> = (0..header.len())
        .map(|i| cells.iter().map(|row| row[i].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:>w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// modes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Bound,
    Simulate,
    Table1,
    Keyrate,
    Campaign,
}

impl Mode {
    fn parse(text: &str) -> Result<Self> {
        match text {
            "bound" => Ok(Mode::Bound),
            "simulate" => Ok(Mode::Simulate),
            "table1" => Ok(Mode::Table1),
            "keyrate" => Ok(Mode::Keyrate),
            "campaign" => Ok(Mode::Campaign),
            other => Err(Error::InvalidInput(format!(
                "run.mode: unknown mode {other:?} (expected bound|simulate|table1|keyrate|campaign)"
            ))),
        }
    }
}

pub fn run_bound(config: &FileConfig) -> Result<Vec<BoundRow>> {
    let (mu, mup) = config.intensities()?;
    let (rates, eta) = config.observed_rates()?;

    let methods: Vec<String> = match &config.run.methods {
        Some(m) => m.clone(),
        None => {
            let mut m = vec!["hwang".to_string(), "asymptotic".to_string()];
            if config.fluctuation.is_some() {
                m.push("fluctuation".to_string());
            }
            if config.fluctuation.is_some() && config.epsilon.is_some() {
                m.push("operational".to_string());
            }
            m
        }
    };

    let mut rows = Vec::new();
    for method in &methods {
        let mut row = match method.as_str() {
            "hwang" => BoundRow::from_result(&hwang_delta(mu, mup, &rates)?, mu, mup, rates.s0),
            "asymptotic" => {
                BoundRow::from_result(&asymptotic_delta(mu, mup, &rates)?, mu, mup, rates.s0)
            }
            "fluctuation" => {
                let params = config.fluctuation_params()?;
                let result = fluctuation_delta(mu, mup, &rates, &params)?;
                let mut row = BoundRow::from_result(&result, mu, mup, rates.s0);
                row.n_mu = Some(params.n_mu);
                row.n_mup = Some(params.n_mup);
                row.n0 = Some(params.n_0);
                row
            }
            "operational" => {
                let params = config.fluctuation_params()?;
                let caps = config.epsilon_caps()?;
                let result = operational_error_delta(mu, mup, &rates, &params, &caps)?;
                let mut row = BoundRow::from_result(&result.bound, mu, mup, rates.s0);
                row.n_mu = Some(params.n_mu);
                row.n_mup = Some(params.n_mup);
                row.n0 = Some(params.n_0);
                row
            }
            other => {
                return Err(Error::InvalidInput(format!(
                    "run.methods: unknown method {other:?}"
                )))
            }
        };
        row.eta = eta;
        rows.push(row);
    }
    Ok(rows)
}

/// Reference-table constants: intensity pairs, channel settings and the
/// published percentages each computed row is compared against.
mod table1 {
    pub const MU: [f64; 4] = [0.2, 0.25, 0.3, 0.35];
    pub const HWANG_PCT: [f64; 4] = [44.5, 52.9, 60.4, 67.0];
    pub const TRUE_PCT: [f64; 4] = [18.3, 22.2, 25.9, 29.5];
    pub const W1_MUP: [f64; 4] = [0.34, 0.38, 0.43, 0.45];
    pub const W1_PCT: [f64; 4] = [23.4, 28.9, 34.4, 39.9];
    pub const W2_MUP: [f64; 4] = [0.39, 0.41, 0.45, 0.47];
    pub const W2_PCT: [f64; 4] = [25.6, 30.9, 36.2, 41.5];
    pub const BLOCK2_MU: [f64; 4] = [0.39, 0.41, 0.45, 0.47];
    pub const BLOCK2_HWANG_PCT: [f64; 4] = [71.8, 74.0, 78.0, 79.8];
    pub const BLOCK2_TRUE_PCT: [f64; 4] = [32.3, 33.7, 36.2, 37.5];
    pub const BLOCK2_DELTA_PRIME_PCT: [f64; 4] = [40.1, 42.2, 45.8, 48.6];
    pub const S0: f64 = 1e-6;
    pub const W1_ETA: f64 = 1e-3;
    pub const W2_ETA: f64 = 1e-4;
    pub const W1_PULSES: u64 = 10_000_000_000;
    pub const W2_PULSES: u64 = 80_000_000_000;
    pub const VACUUM_PULSES: u64 = 4_000_000_000;
}

/// Counting rates as the reference table assumes them: pure channel loss for
/// the two signal intensities, with the dark rate entering only as the
/// vacuum source's observed rate.
pub fn reference_rates(mu: f64, mup: f64, eta: f64, s0: f64) -> ObservedRates {
    ObservedRates {
        s0,
        s_mu: 1.0 - (-eta * mu).exp(),
        s_mup: 1.0 - (-eta * mup).exp(),
        counts: None,
    }
}

fn reference_params(pulses: u64) -> FluctuationParams {
    FluctuationParams::new(pulses, pulses, table1::VACUUM_PULSES)
        .expect("table constants are valid")
}

/// Every row of the reference table, each with the published value and the
/// absolute deviation of the recomputed one.
pub fn run_table1() -> Result<Vec<BoundRow>> {
    use table1::*;
    let mut rows = Vec::new();

    let hwang_row = |m: f64, pct: f64| -> Result<BoundRow> {
        let mu = Intensity::new(m)?;
        let one = Intensity::new(1.0)?;
        // normal-case rates, proportional to intensity
        let rates = ObservedRates::from_rates(0.0, 1e-3 * m, 1e-3)?;
        let result = hwang_delta(mu, one, &rates)?;
        let mut row = BoundRow::from_result(&result, mu, one, 0.0);
        row.method = "HWANG".into();
        row.delta_prime = None;
        row.paper_value = Some(pct / 100.0);
        row.abs_dev = Some((result.delta - pct / 100.0).abs());
        Ok(row)
    };
    for (m, pct) in MU.iter().zip(HWANG_PCT) {
        rows.push(hwang_row(*m, pct)?);
    }
    for (m, pct) in BLOCK2_MU.iter().zip(BLOCK2_HWANG_PCT) {
        rows.push(hwang_row(*m, pct)?);
    }

    let true_row = |m: f64, pct: f64| -> Result<BoundRow> {
        let mu = Intensity::new(m)?;
        let ch = ChannelModel::uniform(1e-6, 0.0)?;
        let fraction = expected_tagged_fraction(mu, &ch)?;
        Ok(BoundRow {
            method: "TRUE_FRACTION".into(),
            mu: m,
            delta: Some(fraction),
            paper_value: Some(pct / 100.0),
            abs_dev: Some((fraction - pct / 100.0).abs()),
            ..Default::default()
        })
    };
    for (m, pct) in MU.iter().zip(TRUE_PCT) {
        rows.push(true_row(*m, pct)?);
    }
    for (m, pct) in BLOCK2_MU.iter().zip(BLOCK2_TRUE_PCT) {
        rows.push(true_row(*m, pct)?);
    }

    let fluct_row = |m: f64, mp: f64, eta: f64, pulses: u64, label: &str, pct: f64| -> Result<(BoundRow, BoundResult, ObservedRates)> {
        let mu = Intensity::new(m)?;
        let mup = Intensity::new(mp)?;
        let rates = reference_rates(m, mp, eta, S0);
        let params = reference_params(pulses);
        let result = fluctuation_delta(mu, mup, &rates, &params)?;
        let mut row = BoundRow::from_result(&result, mu, mup, S0);
        row.method = label.into();
        row.eta = Some(eta);
        row.n_mu = Some(pulses);
        row.n_mup = Some(pulses);
        row.n0 = Some(VACUUM_PULSES);
        row.paper_value = Some(pct / 100.0);
        row.abs_dev = Some((result.delta - pct / 100.0).abs());
        Ok((row, result, rates))
    };
    for ((m, mp), pct) in MU.iter().zip(W1_MUP).zip(W1_PCT) {
        rows.push(fluct_row(*m, mp, W1_ETA, W1_PULSES, "FLUCTUATION_W1", pct)?.0);
    }
    let mut w2 = Vec::new();
    for ((m, mp), pct) in MU.iter().zip(W2_MUP).zip(W2_PCT) {
        let (row, result, rates) = fluct_row(*m, mp, W2_ETA, W2_PULSES, "FLUCTUATION_W2", pct)?;
        w2.push((*m, mp, result, rates));
        rows.push(row);
    }

    for ((m, mp, result, rates), pct) in w2.into_iter().zip(BLOCK2_DELTA_PRIME_PCT) {
        let mu = Intensity::new(m)?;
        let mup = Intensity::new(mp)?;
        let dp = delta_prime(mu, mup, result.delta, &rates)?;
        rows.push(BoundRow {
            method: "DELTA_PRIME_W2".into(),
            mu: m,
            mu_prime: Some(mp),
            eta: Some(W2_ETA),
            s0: S0,
            n_mu: Some(W2_PULSES),
            n_mup: Some(W2_PULSES),
            n0: Some(VACUUM_PULSES),
            delta: Some(result.delta),
            delta_prime: Some(dp),
            paper_value: Some(pct / 100.0),
            abs_dev: Some((dp - pct / 100.0).abs()),
            ..Default::default()
        });
    }
    Ok(rows)
}

pub fn run_simulate(config: &FileConfig, seed: u64) -> Result<String> {
    let (mu, mup) = config.intensities()?;
    let source = config.source.as_ref().expect("checked by intensities");
    let channel = config
        .channel_model()?
        .ok_or_else(|| Error::InvalidInput("channel: required for mode=simulate".into()))?;
    let mut session = SessionConfig::new(
        vec![
            SourceSpec {
                mu: Intensity::vacuum(),
                pulses: require(source.n_vacuum, "source.n_vacuum")?,
            },
            SourceSpec {
                mu,
                pulses: require(source.n_mu, "source.n_mu")?,
            },
            SourceSpec {
                mu: mup,
                pulses: require(source.n_mup, "source.n_mup")?,
            },
        ],
        channel,
        seed,
    )?;
    if let Some(beta) = source.intensity_error {
        session = session.with_intensity_error(beta)?;
    }
    let outcome = simulate(&session)?;
    let mut out = String::from(SIM_CSV_HEADER);
    out.push('\n');
    for (i, s) in outcome.per_source.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            i,
            s.mu,
            s.pulses,
            s.clicks,
            s.vacuum_clicks,
            s.single_clicks,
            s.tagged_clicks,
            s.rate,
            s.true_delta.map(|d| d.to_string()).unwrap_or_default(),
        ));
    }
    Ok(out)
}

pub fn run_keyrate(config: &FileConfig) -> Result<String> {
    let section = config
        .keyrate
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("keyrate: required".into()))?;
    let input = DistillationInput::new(
        require(section.t_b, "keyrate.t_b")?,
        require(section.t_p, "keyrate.t_p")?,
        require(section.delta, "keyrate.delta")?,
        require(section.n_r, "keyrate.n_r")?,
    )?;
    let (ec, pa) = distillation_costs(&input);
    let fraction = key_fraction(&input);
    Ok(format!(
        "{KEYRATE_CSV_HEADER}\n{},{},{},{},{},{},{}\n",
        input.t_b, input.t_p, input.delta, input.n_r, ec, pa, fraction
    ))
}

pub fn run_campaign(config: &FileConfig, seed: u64) -> Result<(String, String)> {
    let mut campaign = CampaignConfig::new(200, seed)?;
    if let Some(section) = &config.campaign {
        if let Some(v) = section.trials {
            campaign.trials = v;
        }
        if let Some(v) = section.pulses_min {
            campaign.pulses_min = v;
        }
        if let Some(v) = section.pulses_max {
            campaign.pulses_max = v;
        }
        if let Some(v) = section.s0_max {
            campaign.s0_max = v;
        }
        if let Some(v) = section.eta_min {
            campaign.eta_min = v;
        }
        if let Some(v) = section.eta_max {
            campaign.eta_max = v;
        }
        if let Some(v) = section.coefficient {
            campaign.coefficient = v;
        }
        if let Some(v) = section.max_fock {
            campaign.max_fock = v;
        }
    }
    if let Some(source) = &config.source {
        if let Some(m) = source.mu {
            campaign.mu = Intensity::new(m)?;
        }
        if let Some(mp) = source.mu_prime {
            campaign.mup = Intensity::new(mp)?;
        }
    }
    let outcome = soundness_campaign(&campaign)?;
    let mut out = String::from(CAMPAIGN_CSV_HEADER);
    out.push('\n');
    for r in &outcome.records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.index,
            r.pulses,
            r.s0,
            r.verified_delta.map(|v| v.to_string()).unwrap_or_default(),
            r.true_delta.map(|v| v.to_string()).unwrap_or_default(),
            match r.verdict {
                TrialVerdict::Sound => "sound",
                TrialVerdict::Unsound => "unsound",
                TrialVerdict::Abstained => "abstain",
            },
        ));
    }
    let summary = format!(
        "campaign: {} trials, {} sound, {} unsound, {} abstained\n",
        outcome.records.len(),
        outcome.sound,
        outcome.unsound,
        outcome.abstained
    );
    Ok((out, summary))
}

// ---------------------------------------------------------------------------
// argument parsing and orchestration
// ---------------------------------------------------------------------------

#[derive(Debug, Default)]
pub struct CliArgs {
    pub config: Option<PathBuf>,
    pub mode: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub full_precision: bool,
}

pub const USAGE: &str = "\
decoy-verify - tagged-fraction verification for decoy-state QKD

USAGE:
  decoy-verify [--config PATH] [--mode MODE] [--seed U64] [--out PATH]
               [--format csv|table] [--full-precision]

MODES (from --mode or run.mode in the config):
  bound     verify Delta from observed rates or a channel model
  table1    recompute the reference table of verified bounds
  simulate  run one seeded protocol session
  keyrate   error-correction / privacy-amplification arithmetic
  campaign  randomized-adversary soundness trials

EXIT CODES:
  0 success, 1 config error, 2 infeasible computation
";

pub fn parse_args(args: &[String]) -> Result<CliArgs> {
    let mut parsed = CliArgs::default();
    let mut iter = args.iter().peekable();
    while let Some(arg) = iter.next() {
        let mut value_for = |name: &str| -> Result<String> {
            iter.next()
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("{name} needs a value")))
        };
        match arg.as_str() {
            "--config" => parsed.config = Some(PathBuf::from(value_for("--config")?)),
            "--mode" => parsed.mode = Some(value_for("--mode")?),
            "--seed" => {
                let raw = value_for("--seed")?;
                parsed.seed = Some(raw.parse().map_err(|_| {
                    Error::InvalidInput(format!("--seed: {raw:?} is not a u64"))
                })?);
            }
            "--out" => parsed.out = Some(PathBuf::from(value_for("--out")?)),
            "--format" => parsed.format = Some(value_for("--format")?),
            "--full-precision" => parsed.full_precision = true,
            "--help" | "-h" => {
                return Err(Error::InvalidInput("help".into()));
            }
            other => {
                return Err(Error::InvalidInput(format!("unknown flag {other:?}")));
            }
        }
    }
    Ok(parsed)
}

fn exit_code_for(error: &Error) -> i32 {
    match error {
        Error::NoSolution(_) | Error::NegativeBound { .. } | Error::ZeroRate(_) | Error::NoData => 2,
        _ => 1,
    }
}

/// Full CLI: parse, dispatch, write. Returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    match run_inner(args) {
        Ok(()) => 0,
        Err(Error::InvalidInput(msg)) if msg == "help" => {
            print!("{USAGE}");
            0
        }
        Err(e) => {
            eprintln!("decoy-verify: {e}");
            exit_code_for(&e)
        }
    }
}

fn run_inner(args: &[String]) -> Result<()> {
    let cli = parse_args(args)?;
    let config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::InvalidInput(format!("cannot read config {}: {e}", path.display()))
            })?;
            FileConfig::from_json(&text)?
        }
        None => FileConfig::default(),
    };

    let mode_name = cli
        .mode
        .clone()
        .or_else(|| config.run.mode.clone())
        .ok_or_else(|| Error::InvalidInput("run.mode: required (or pass --mode)".into()))?;
    let mode = Mode::parse(&mode_name)?;

    let seed = cli.seed.or(config.run.seed).unwrap_or(0);
    let format = cli
        .format
        .clone()
        .or_else(|| config.run.format.clone())
        .unwrap_or_else(|| "csv".to_string());
    if format != "csv" && format != "table" {
        return Err(Error::InvalidInput(format!(
            "--format: expected csv or table, got {format:?}"
        )));
    }
    let full_precision = cli.full_precision || config.run.full_precision;

    let output = match mode {
        Mode::Bound => {
            let rows = run_bound(&config)?;
            if format == "table" {
                bound_rows_to_table(&rows)
            } else {
                bound_rows_to_csv(&rows, full_precision)
            }
        }
        Mode::Table1 => {
            let rows = run_table1()?;
            if format == "table" {
                bound_rows_to_table(&rows)
            } else {
                bound_rows_to_csv(&rows, full_precision)
            }
        }
        Mode::Simulate => run_simulate(&config, seed)?,
        Mode::Keyrate => run_keyrate(&config)?,
        Mode::Campaign => {
            let (rows, summary) = run_campaign(&config, seed)?;
            eprint!("{summary}");
            rows
        }
    };

    let out_path = cli.out.clone().or_else(|| config.run.out.clone());
    match out_path {
        Some(path) => std::fs::write(&path, output).map_err(|e| {
            Error::InvalidInput(format!("cannot write {}: {e}", path.display()))
        })?,
        None => print!("{output}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_minimal_bound_config() {
        let cfg = FileConfig::from_json(
            r#"{
                "run": {"mode": "bound"},
                "source": {"mu": 0.3, "mu_prime": 0.43},
                "channel": {"eta": 1e-3, "s0": 1e-6},
                "fluctuation": {"n_mu": 10000000000, "n_mup": 10000000000, "n_0": 4000000000}
            }"#,
        )
        .unwrap();
        let rows = run_bound(&cfg).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].method, "FLUCTUATION");
        let delta = rows[2].delta.unwrap();
        assert!((delta - 0.344).abs() < 0.015, "delta={delta}");
    }

    #[test]
    fn missing_mu_prime_names_the_field() {
        let cfg = FileConfig::from_json(
            r#"{"run": {"mode": "bound"}, "source": {"mu": 0.3}, "channel": {"eta": 1e-3}}"#,
        )
        .unwrap();
        let err = run_bound(&cfg).unwrap_err();
        assert!(err.to_string().contains("source.mu_prime"), "{err}");
    }

    #[test]
    fn direct_rates_bypass_channel() {
        let cfg = FileConfig::from_json(
            r#"{
                "run": {"mode": "bound", "methods": ["asymptotic"]},
                "source": {"mu": 0.3, "mu_prime": 0.45},
                "rates": {"s0": 0.0, "s_mu": 2e-4, "s_mup": 3e-4}
            }"#,
        )
        .unwrap();
        let rows = run_bound(&cfg).unwrap();
        let closed = 0.3 / 0.15 * ((0.15_f64).exp() - 1.0);
        assert!((rows[0].delta.unwrap() - closed).abs() < 1e-9);
    }

    #[test]
    fn table1_rows_and_devs() {
        let rows = run_table1().unwrap();
        assert_eq!(rows.len(), 28);
        // every recomputed bound row sits within 1.5pp of its reference value
        for row in &rows {
            let dev = row.abs_dev.unwrap();
            if row.method == "TRUE_FRACTION" && row.mu == 0.2 {
                // known rounding anomaly in the reference: printed 18.3%,
                // computed 18.13%
                assert!(dev > 0.0015 && dev < 0.002, "dev={dev}");
            } else {
                assert!(dev < 0.015, "{} mu={}: dev={dev}", row.method, row.mu);
            }
        }
    }

    #[test]
    fn csv_roundtrip_full_precision() {
        let rows = run_table1().unwrap();
        let csv = bound_rows_to_csv(&rows, true);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(BOUND_CSV_HEADER));
        for (line, row) in lines.zip(&rows) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 14);
            let delta: f64 = fields[8].parse().unwrap();
            assert_eq!(delta.to_bits(), row.delta.unwrap().to_bits());
            if !fields[13].is_empty() {
                let dev: f64 = fields[13].parse().unwrap();
                assert_eq!(dev.to_bits(), row.abs_dev.unwrap().to_bits());
            }
        }
    }

    #[test]
    fn args_parse_and_reject() {
        let args: Vec<String> = ["--mode", "table1", "--seed", "7", "--full-precision"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let cli = parse_args(&args).unwrap();
        assert_eq!(cli.mode.as_deref(), Some("table1"));
        assert_eq!(cli.seed, Some(7));
        assert!(cli.full_precision);

        let bad: Vec<String> = vec!["--bogus".into()];
        assert!(parse_args(&bad).is_err());
    }

    #[test]
    fn unknown_mode_is_config_error() {
        assert!(Mode::parse("frobnicate").is_err());
    }

    #[test]
    fn keyrate_mode() {
        let cfg = FileConfig::from_json(
            r#"{"keyrate": {"t_b": 0.05, "t_p": 0.05, "delta": 0.0, "n_r": 1000000}}"#,
        )
        .unwrap();
        let out = run_keyrate(&cfg).unwrap();
        let value: f64 = out
            .lines()
            .nth(1)
            .unwrap()
            .split(',')
            .next_back()
            .unwrap()
            .parse()
            .unwrap();
        assert!((value - 0.427_206_085_768_087_5).abs() < 1e-12);
    }
}
