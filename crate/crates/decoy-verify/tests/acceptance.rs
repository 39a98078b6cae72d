//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with the measured numbers (run with `--nocapture` to see them all).

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use decoy_verify::bounds::{
    asymptotic_delta, delta_prime, fluctuation_delta, hwang_delta, operational_error_delta,
    EpsilonCaps, FluctuationParams,
};
use decoy_verify::channel::{expected_tagged_fraction, ChannelModel, ObservedRates};
use decoy_verify::cli::reference_rates;
use decoy_verify::keyrate::{key_fraction, DistillationInput};
use decoy_verify::montecarlo::{
    simulate, soundness_campaign, soundness_trial, BoundMethod, CampaignConfig, SessionConfig,
    SourceSpec,
};
use decoy_verify::photon_source::Intensity;

fn mu(v: f64) -> Intensity {
    Intensity::new(v).unwrap()
}

fn proportional_rates(m: f64, mp: f64) -> ObservedRates {
    ObservedRates::from_rates(0.0, 1e-3 * m, 1e-3 * mp).unwrap()
}

fn report(criterion: u32, name: &str, pass: bool, details: &str) {
    println!(
        "acceptance {criterion} ({name}): {} — {details}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "acceptance {criterion} ({name}) failed: {details}");
}

#[test]
fn acceptance_1_hwang_bound_row() {
    let first = [(0.2, 44.5), (0.25, 52.9), (0.3, 60.4), (0.35, 67.0)];
    let second = [(0.39, 71.8), (0.41, 74.0), (0.45, 78.0), (0.47, 79.8)];
    let mut worst = 0.0f64;
    for (m, pct) in first.into_iter().chain(second) {
        let r = hwang_delta(mu(m), mu(1.0), &proportional_rates(m, 1.0)).unwrap();
        worst = worst.max((r.delta * 100.0 - pct).abs());
    }
    report(
        1,
        "hwang bound row",
        worst <= 0.1,
        &format!("worst deviation {worst:.4} pp (tolerance 0.1 pp)"),
    );
}

#[test]
fn acceptance_2_true_fraction_row() {
    let ch = ChannelModel::uniform(1e-6, 0.0).unwrap();
    let rows = [
        (0.25, 22.2),
        (0.3, 25.9),
        (0.35, 29.5),
        (0.39, 32.3),
        (0.41, 33.7),
        (0.45, 36.2),
        (0.47, 37.5),
    ];
    let mut worst = 0.0f64;
    for (m, pct) in rows {
        let f = expected_tagged_fraction(mu(m), &ch).unwrap();
        worst = worst.max((f * 100.0 - pct).abs());
    }
    // mu = 0.2 computes to 18.13%; the reference prints 18.3%, a known
    // 0.2 pp rounding anomaly, so the computed value is what is asserted
    let f02 = expected_tagged_fraction(mu(0.2), &ch).unwrap();
    let anomaly = (f02 * 100.0 - 18.3).abs();
    let pass = worst <= 0.1 && (f02 * 100.0 - 18.13).abs() <= 0.1 && anomaly > 0.15;
    report(
        2,
        "true tagged fraction row",
        pass,
        &format!(
            "worst deviation {worst:.4} pp; mu=0.2 computes {:.2}% vs printed 18.3% \
             (recorded anomaly {anomaly:.2} pp)",
            f02 * 100.0
        ),
    );
}

#[test]
fn acceptance_3_limit_law() {
    let h = 1e-6;
    let mut worst = 0.0f64;
    for m in [0.2, 0.3, 0.4] {
        let r = asymptotic_delta(mu(m), mu(m + h), &proportional_rates(m, m + h)).unwrap();
        worst = worst.max((r.delta - m).abs());
    }
    report(
        3,
        "narrow-separation limit",
        worst < 1e-5,
        &format!("worst |delta - mu| = {worst:.2e} at mu' - mu = 1e-6 (tolerance 1e-5)"),
    );
}

#[test]
fn acceptance_4_fluctuation_solver_vs_reference_table() {
    let start = Instant::now();
    let w1 = [
        (0.2, 0.34, 23.4),
        (0.25, 0.38, 28.9),
        (0.3, 0.43, 34.4),
        (0.35, 0.45, 39.9),
    ];
    let w2 = [
        (0.2, 0.39, 25.6, 40.1),
        (0.25, 0.41, 30.9, 42.2),
        (0.3, 0.45, 36.2, 45.8),
        (0.35, 0.47, 41.5, 48.6),
    ];
    let n_w1 = 10_u64.pow(10);
    let n_w2 = 8 * 10_u64.pow(10);
    let n_vac = 4 * 10_u64.pow(9);

    let mut worst = 0.0f64;
    for (m, mp, pct) in w1 {
        let rates = reference_rates(m, mp, 1e-3, 1e-6);
        let params = FluctuationParams::new(n_w1, n_w1, n_vac).unwrap();
        let r = fluctuation_delta(mu(m), mu(mp), &rates, &params).unwrap();
        worst = worst.max((r.delta * 100.0 - pct).abs());
    }
    for (m, mp, pct, dp_pct) in w2 {
        let rates = reference_rates(m, mp, 1e-4, 1e-6);
        let params = FluctuationParams::new(n_w2, n_w2, n_vac).unwrap();
        let r = fluctuation_delta(mu(m), mu(mp), &rates, &params).unwrap();
        worst = worst.max((r.delta * 100.0 - pct).abs());
        let dp = delta_prime(mu(m), mu(mp), r.delta, &rates).unwrap();
        worst = worst.max((dp * 100.0 - dp_pct).abs());
    }
    let elapsed = start.elapsed();
    report(
        4,
        "fluctuation solver vs reference table",
        worst <= 1.5 && elapsed.as_secs() < 10,
        &format!(
            "worst deviation {worst:.3} pp over 12 entries (tolerance 1.5 pp), {:.2?}",
            elapsed
        ),
    );
}

#[test]
fn acceptance_5_operational_error_claim() {
    let start = Instant::now();
    // stated conditions: caps 2% on every class of both sources,
    // N_mu = N_mu' = 1e10, 4e9 vacuum pulses, observed vacuum rate 1e-6;
    // evaluated at the recommended operating pair (mu, mu') = (0.3, 0.45)
    let rates = reference_rates(0.3, 0.45, 1e-3, 1e-6);
    let params = FluctuationParams::new(10_u64.pow(10), 10_u64.pow(10), 4 * 10_u64.pow(9)).unwrap();
    let caps = EpsilonCaps::uniform(0.02, 0.02).unwrap();
    let r = operational_error_delta(mu(0.3), mu(0.45), &rates, &params, &caps).unwrap();
    let ratio = r.s1_ratio.unwrap();
    let elapsed = start.elapsed();
    report(
        5,
        "operational-error s1 floor",
        ratio >= 0.95 - 1e-3 && elapsed.as_secs() < 30,
        &format!(
            "s1_lower/s1_tilde = {ratio:.4} (required >= 0.949, {elapsed:.2?}); the worst \
             sign corner pairs a +2% single-photon weight in the signal source with -2% in \
             the decoy source, which widens the verified multi-photon rate far more than \
             the 5% allowance anticipates; see the corner search landscape in the solver \
             tests for the full picture"
        ),
    );
}

#[test]
fn acceptance_6_soundness_campaign() {
    let start = Instant::now();
    let campaign = CampaignConfig::new(200, 0x5EED_CAFE).unwrap();
    let out = soundness_campaign(&campaign).unwrap();

    // the extreme photon-number-splitting channel: single photons blocked,
    // multi-photon pulses always arrive
    let mut pns_ok = true;
    for seed in 0..5u64 {
        let ch = ChannelModel::per_fock([(1, 0.0), (2, 1.0)], 0.0).unwrap();
        let n = 10_u64.pow(7);
        let cfg = SessionConfig::new(
            vec![
                SourceSpec { mu: Intensity::vacuum(), pulses: n },
                SourceSpec { mu: mu(0.3), pulses: n },
                SourceSpec { mu: mu(0.45), pulses: n },
            ],
            ch,
            seed,
        )
        .unwrap();
        let params = FluctuationParams::new(n, n, n).unwrap();
        match soundness_trial(&cfg, &BoundMethod::Fluctuation(params)) {
            Ok(trial) => pns_ok &= trial.sound && trial.verified_delta >= 1.0 - 1e-9,
            Err(decoy_verify::Error::NoSolution(_)) => {}
            Err(e) => panic!("unexpected error in extreme PNS trial: {e}"),
        }
    }
    let elapsed = start.elapsed();
    let pass = out.unsound <= 1 && out.records.len() == 200 && pns_ok && elapsed.as_secs() < 120;
    report(
        6,
        "soundness campaign",
        pass,
        &format!(
            "{} trials: {} sound, {} unsound, {} abstained; extreme PNS sound over 5 seeds: \
             {pns_ok}; {elapsed:.2?}",
            out.records.len(),
            out.sound,
            out.unsound,
            out.abstained
        ),
    );
}

#[test]
fn acceptance_7_simulator_fidelity() {
    let start = Instant::now();
    let eta = 1e-3;
    let m = 0.3_f64;
    let expected = 1.0 - (-eta * m).exp();
    let replicates = 32u64;

    let mut log_n = Vec::new();
    let mut log_rms = Vec::new();
    let mut four_sigma_ok = true;
    let mut details = String::new();
    for exp in [6u32, 8, 10] {
        let n = 10_u64.pow(exp);
        let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
        let mut sq_sum = 0.0;
        for seed in 0..replicates {
            let cfg = SessionConfig::new(
                vec![
                    SourceSpec { mu: Intensity::vacuum(), pulses: n },
                    SourceSpec { mu: mu(m), pulses: n },
                    SourceSpec { mu: mu(0.45), pulses: n },
                ],
                ChannelModel::uniform(eta, 0.0).unwrap(),
                0xF1DE_0000 + seed,
            )
            .unwrap();
            let out = simulate(&cfg).unwrap();
            let dev = out.per_source[1].rate - expected;
            if seed == 0 {
                four_sigma_ok &= dev.abs() <= 4.0 * sigma;
                details.push_str(&format!("N=1e{exp}: dev {:.2}sigma; ", dev.abs() / sigma));
            }
            sq_sum += dev * dev;
        }
        log_n.push((n as f64).ln());
        log_rms.push((sq_sum / replicates as f64).sqrt().ln());
    }

    // least-squares slope of ln(rms deviation) against ln(N)
    let n = log_n.len() as f64;
    let mean_x: f64 = log_n.iter().sum::<f64>() / n;
    let mean_y: f64 = log_rms.iter().sum::<f64>() / n;
    let slope: f64 = log_n
        .iter()
        .zip(&log_rms)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum::<f64>()
        / log_n.iter().map(|x| (x - mean_x).powi(2)).sum::<f64>();

    let elapsed = start.elapsed();
    let pass = four_sigma_ok && (slope + 0.5).abs() <= 0.1 && elapsed.as_secs() < 10;
    report(
        7,
        "simulator fidelity",
        pass,
        &format!("{details}convergence slope {slope:.3} (need -0.5 +- 0.1); {elapsed:.2?}"),
    );
}

#[test]
fn acceptance_8_keyrate_arithmetic() {
    let base = key_fraction(&DistillationInput::new(0.05, 0.05, 0.0, 1).unwrap());
    let value_ok = (base - 0.42720).abs() <= 1e-5;

    let mut rng = ChaCha12Rng::seed_from_u64(0x8EA7);
    let mut monotone_ok = true;
    for _ in 0..1000 {
        let t_b = rng.gen::<f64>() * 0.45;
        let t_p = rng.gen::<f64>() * 0.45;
        let delta = rng.gen::<f64>() * 0.95;
        let dt = rng.gen::<f64>() * 0.05;
        let k = key_fraction(&DistillationInput::new(t_b, t_p, delta, 1).unwrap());
        monotone_ok &= (0.0..=1.0).contains(&k);
        monotone_ok &=
            key_fraction(&DistillationInput::new(t_b + dt, t_p, delta, 1).unwrap()) <= k + 1e-12;
        monotone_ok &=
            key_fraction(&DistillationInput::new(t_b, t_p + dt, delta, 1).unwrap()) <= k + 1e-12;
        monotone_ok &=
            key_fraction(&DistillationInput::new(t_b, t_p, delta + dt, 1).unwrap()) <= k + 1e-12;
    }
    report(
        8,
        "key-rate arithmetic",
        value_ok && monotone_ok,
        &format!(
            "key_fraction(0.05, 0.05, 0) = {base:.6} (need 0.42720 +- 1e-5); monotone over \
             1000 random grids: {monotone_ok}"
        ),
    );
}
