//! The verification core: rigorous upper bounds on the tagged fraction Delta
//! (the share of detected bits caused by multi-photon pulses) computed from
//! nothing but observed counting rates.
//!
//! Four tiers, each consuming [`ObservedRates`] for the (vacuum, mu, mu')
//! source triple:
//!
//! - [`hwang_delta`]: single-decoy bound, drops the single-photon and
//!   residual terms of the decoy equation.
//! - [`asymptotic_delta`]: couples the signal and decoy rate equations, so
//!   the single-photon rate inferred from the signal source tightens the
//!   decoy constraint. Exact only with infinitely many pulses.
//! - [`fluctuation_delta`]: finite statistics. Counting rates of the same
//!   state in the two sources may differ by a relative fluctuation
//!   r = coeff * sqrt(1/(s N0)) (N0 the sub-source size); the constraint
//!   system is solved for the worst case consistent with that slack.
//! - [`operational_error_delta`]: additionally the class weights of each
//!   source may be off by bounded relative errors eps; the fluctuation solve
//!   is re-run on every sign corner of the caps and the worst case reported.
//!
//! All solvers keep raw (unclamped) values internally so inconsistent inputs
//! surface as errors; clamping to [0, 1] happens only when a result is
//! reported.

use crate::channel::ObservedRates;
use crate::photon_source::{decompose, validate_pair, Intensity};
use crate::{Error, Result};

/// Which verification produced a [`BoundResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Hwang,
    Asymptotic3,
    Fluctuation,
    Operational,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Hwang => "HWANG",
            Method::Asymptotic3 => "ASYMPTOTIC_3",
            Method::Fluctuation => "FLUCTUATION",
            Method::Operational => "OPERATIONAL",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A verified bound. `delta` is reported clamped to [0, 1] and satisfies
/// `delta = c(mu) * sc_upper / s_mu` for every method that derives it from a
/// multi-photon rate bound.
#[derive(Debug, Clone)]
pub struct BoundResult {
    /// Upper bound on the tagged fraction of the signal (mu) source.
    pub delta: f64,
    /// Upper bound for the decoy (mu') source, when computable.
    pub delta_prime: Option<f64>,
    /// Verified lower bound on the single-photon counting rate.
    pub s1_lower: f64,
    /// Verified upper bound on the multi-photon counting rate.
    pub sc_upper: f64,
    pub method: Method,
    /// Statement of the statistical confidence attached to FLUCTUATION and
    /// OPERATIONAL results.
    pub confidence_note: Option<String>,
}

/// Pulse counts and confidence settings for the finite-statistics solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuationParams {
    pub n_mu: u64,
    pub n_mup: u64,
    pub n_0: u64,
    /// Confidence coefficient: r = coefficient * sqrt(1/(s N0)). The default
    /// 10 makes each per-state violation probability less than exp(-25).
    pub coefficient: f64,
    /// Relative fluctuation allowed on the vacuum rate. Vacuum counting is
    /// assumed well below the signal rates, so this defaults to zero.
    pub r0: f64,
}

impl FluctuationParams {
    pub fn new(n_mu: u64, n_mup: u64, n_0: u64) -> Result<Self> {
        Self::with_confidence(n_mu, n_mup, n_0, 10.0, 0.0)
    }

    pub fn with_confidence(
        n_mu: u64,
        n_mup: u64,
        n_0: u64,
        coefficient: f64,
        r0: f64,
    ) -> Result<Self> {
        if n_mu == 0 || n_mup == 0 || n_0 == 0 {
            return Err(Error::InvalidInput("pulse counts must be >= 1".into()));
        }
        if coefficient <= 0.0 || !coefficient.is_finite() {
            return Err(Error::InvalidInput(format!(
                "confidence coefficient must be > 0, got {coefficient}"
            )));
        }
        if !(0.0..1.0).contains(&r0) {
            return Err(Error::InvalidInput(format!(
                "r0 must be in [0, 1), got {r0}"
            )));
        }
        Ok(Self {
            n_mu,
            n_mup,
            n_0,
            coefficient,
            r0,
        })
    }

    fn note(&self) -> String {
        format!(
            "per-state violation probability < exp(-{}) (coefficient {})",
            self.coefficient * self.coefficient / 4.0,
            self.coefficient
        )
    }
}

/// Magnitude caps on the per-class weight errors of both sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonCaps {
    pub e0: f64,
    pub e1: f64,
    pub ec: f64,
    pub e0p: f64,
    pub e1p: f64,
    pub ecp: f64,
}

impl EpsilonCaps {
    pub fn new(e0: f64, e1: f64, ec: f64, e0p: f64, e1p: f64, ecp: f64) -> Result<Self> {
        for (name, v) in [
            ("e0", e0),
            ("e1", e1),
            ("ec", ec),
            ("e0p", e0p),
            ("e1p", e1p),
            ("ecp", ecp),
        ] {
            if !(0.0..0.5).contains(&v) {
                return Err(Error::InvalidInput(format!(
                    "epsilon cap {name} must be in [0, 0.5), got {v}"
                )));
            }
        }
        Ok(Self {
            e0,
            e1,
            ec,
            e0p,
            e1p,
            ecp,
        })
    }

    /// One cap for every class of the signal source and another for the
    /// decoy source.
    pub fn uniform(cap: f64, cap_prime: f64) -> Result<Self> {
        Self::new(cap, cap, cap, cap_prime, cap_prime, cap_prime)
    }

    fn corner(&self, mask: u32) -> [f64; 6] {
        let caps = [self.e0, self.e1, self.ec, self.e0p, self.e1p, self.ecp];
        let mut out = [0.0; 6];
        for (k, slot) in out.iter_mut().enumerate() {
            let sign = if mask >> k & 1 == 1 { 1.0 } else { -1.0 };
            *slot = sign * caps[k];
        }
        out
    }
}

/// Single-decoy bound: Delta <= mu^2 e^(-mu) S_mu' / (mu'^2 e^(-mu') S_mu).
///
/// Obtained by attributing the whole decoy rate to the multi-photon
/// component; gives no single-photon information.
pub fn hwang_delta(mu: Intensity, mup: Intensity, rates: &ObservedRates) -> Result<BoundResult> {
    check_pair(mu, mup)?;
    if rates.s_mu <= 0.0 {
        return Err(Error::ZeroRate("S_mu"));
    }
    let (m, mp) = (mu.value(), mup.value());
    let raw = (m * m * (-m).exp() * rates.s_mup) / (mp * mp * (-mp).exp() * rates.s_mu);
    let delta = raw.min(1.0);
    let c = decompose(mu).c;
    Ok(BoundResult {
        delta,
        delta_prime: try_delta_prime(mu, mup, delta, rates),
        s1_lower: 0.0,
        sc_upper: delta * rates.s_mu / c,
        method: Method::Hwang,
        confidence_note: None,
    })
}

/// Three-intensity asymptotic bound:
///
/// ```text
/// Delta <= mu/(mu'-mu) * (mu e^(-mu) S_mu' / (mu' e^(-mu') S_mu) - 1)
///          + mu e^(-mu) s0 / (mu' S_mu)
/// ```
///
/// which is the closed form of maximizing the multi-photon rate subject to
/// both rate equations with the vacuum rate known.
pub fn asymptotic_delta(
    mu: Intensity,
    mup: Intensity,
    rates: &ObservedRates,
) -> Result<BoundResult> {
    check_pair(mu, mup)?;
    if rates.s_mu <= 0.0 {
        return Err(Error::ZeroRate("S_mu"));
    }
    let (m, mp) = (mu.value(), mup.value());
    let x = (m * (-m).exp() * rates.s_mup) / (mp * (-mp).exp() * rates.s_mu);
    let raw = m / (mp - m) * (x - 1.0) + m * (-m).exp() * rates.s0 / (mp * rates.s_mu);
    if raw < 0.0 {
        return Err(Error::NegativeBound { value: raw });
    }
    let delta = raw.min(1.0);
    let d = decompose(mu);
    let sc_upper = delta * rates.s_mu / d.c;
    let s1_lower = ((rates.s_mu - d.p0 * rates.s0 - d.c * sc_upper) / d.p1).max(0.0);
    Ok(BoundResult {
        delta,
        delta_prime: try_delta_prime(mu, mup, delta, rates),
        s1_lower,
        sc_upper,
        method: Method::Asymptotic3,
        confidence_note: None,
    })
}

/// Tagged-fraction bound for the decoy source itself, given a verified bound
/// for the signal source:
///
/// ```text
/// Delta' <= 1 - (1 - Delta - e^(-mu) s0 / S_mu) e^(mu - mu')
///             - e^(-mu') s0 / S_mu'
/// ```
///
/// clamped to [0, 1].
pub fn delta_prime(
    mu: Intensity,
    mup: Intensity,
    delta: f64,
    rates: &ObservedRates,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidInput(format!(
            "delta must be in [0, 1], got {delta}"
        )));
    }
    if rates.s_mu <= 0.0 {
        return Err(Error::ZeroRate("S_mu"));
    }
    if rates.s_mup <= 0.0 {
        return Err(Error::ZeroRate("S_mu'"));
    }
    let (m, mp) = (mu.value(), mup.value());
    let v = 1.0
        - (1.0 - delta - (-m).exp() * rates.s0 / rates.s_mu) * (m - mp).exp()
        - (-mp).exp() * rates.s0 / rates.s_mup;
    Ok(v.clamp(0.0, 1.0))
}

fn try_delta_prime(
    mu: Intensity,
    mup: Intensity,
    delta: f64,
    rates: &ObservedRates,
) -> Option<f64> {
    delta_prime(mu, mup, delta, rates).ok()
}

/// Relative fluctuation allowance between counting rates of the same state
/// in two sources: r = coefficient * sqrt(1/(s N0)).
pub fn relative_fluctuation(s: f64, n0: u64, coefficient: f64) -> Result<f64> {
    if s <= 0.0 {
        return Err(Error::ZeroRate("counting rate"));
    }
    if n0 == 0 {
        return Err(Error::InvalidInput("sub-source size must be >= 1".into()));
    }
    if coefficient < 0.0 {
        return Err(Error::InvalidInput("coefficient must be >= 0".into()));
    }
    Ok(coefficient * (1.0 / (s * n0 as f64)).sqrt())
}

/// Probability that the rate gap between the two halves of a randomly split
/// ensemble exceeds `delta_abs`: exp(-delta^2 N0 / (4 s)).
pub fn violation_probability(delta_abs: f64, s: f64, n0: u64) -> Result<f64> {
    if s <= 0.0 {
        return Err(Error::ZeroRate("counting rate"));
    }
    Ok((-delta_abs * delta_abs * n0 as f64 / (4.0 * s)).exp())
}

const ZERO_EPS: [f64; 6] = [0.0; 6];

/// Finite-statistics bound: solves the coupled constraint system
/// self-consistently in (s1, sc, r1, rc) and returns the largest tagged
/// fraction consistent with the observed rates. Fails closed (delta = 1)
/// when the fluctuation allowance swallows the intensity separation.
pub fn fluctuation_delta(
    mu: Intensity,
    mup: Intensity,
    rates: &ObservedRates,
    params: &FluctuationParams,
) -> Result<BoundResult> {
    check_pair(mu, mup)?;
    let solved = solve_worst_case(mu, mup, rates, params, &ZERO_EPS)?;
    Ok(bound_from_solved(mu, mup, rates, params, &solved, Method::Fluctuation))
}

/// Result of [`operational_error_delta`]: the worst-corner bound plus how
/// far the epsilon search pushed the single-photon floor below the
/// unperturbed verification.
#[derive(Debug, Clone)]
pub struct OperationalBound {
    pub bound: BoundResult,
    /// Verified s1 lower bound with all epsilons zero.
    pub s1_tilde: f64,
    /// bound.s1_lower / s1_tilde, when the baseline is positive.
    pub s1_ratio: Option<f64>,
}

/// Worst case over the sign corners of the per-class weight-error caps. Each
/// corner re-runs the fluctuation solve with perturbed class weights; the
/// constraints are affine in each epsilon at fixed rates, so extrema sit at
/// corners. Every reported field is worst-cased independently: largest
/// delta, smallest s1.
pub fn operational_error_delta(
    mu: Intensity,
    mup: Intensity,
    rates: &ObservedRates,
    params: &FluctuationParams,
    caps: &EpsilonCaps,
) -> Result<OperationalBound> {
    check_pair(mu, mup)?;
    let base = solve_worst_case(mu, mup, rates, params, &ZERO_EPS)?;
    let s1_tilde = base.s1.max(0.0);

    let mut worst_delta = base.delta_raw;
    let mut worst_s1 = base.s1;
    for mask in 0..64u32 {
        let eps = caps.corner(mask);
        let solved = solve_worst_case(mu, mup, rates, params, &eps)?;
        worst_delta = worst_delta.max(solved.delta_raw);
        worst_s1 = worst_s1.min(solved.s1);
    }

    let delta = worst_delta.clamp(0.0, 1.0);
    let c = decompose(mu).c;
    let s1_lower = worst_s1.max(0.0);
    let bound = BoundResult {
        delta,
        delta_prime: try_delta_prime(mu, mup, delta, rates),
        s1_lower,
        sc_upper: delta * rates.s_mu / c,
        method: Method::Operational,
        confidence_note: Some(format!(
            "worst case over 64 sign corners of the class-weight error caps; {}",
            params.note()
        )),
    };
    let s1_ratio = (s1_tilde > 0.0).then(|| s1_lower / s1_tilde);
    Ok(OperationalBound {
        bound,
        s1_tilde,
        s1_ratio,
    })
}

fn check_pair(mu: Intensity, mup: Intensity) -> Result<()> {
    if validate_pair(mu, mup) {
        Ok(())
    } else {
        Err(Error::InvalidPair {
            mu: mu.value(),
            mup: mup.value(),
        })
    }
}

fn bound_from_solved(
    mu: Intensity,
    mup: Intensity,
    rates: &ObservedRates,
    params: &FluctuationParams,
    solved: &Solved,
    method: Method,
) -> BoundResult {
    let delta = solved.delta_raw.clamp(0.0, 1.0);
    let c = decompose(mu).c;
    BoundResult {
        delta,
        delta_prime: try_delta_prime(mu, mup, delta, rates),
        s1_lower: solved.s1.max(0.0),
        sc_upper: delta * rates.s_mu / c,
        method,
        confidence_note: Some(params.note()),
    }
}

/// Class weights of the two rate equations, with multiplicative class-weight
/// errors applied. Line 1 (signal source, equality):
/// a0 s0 + a1 s1 + ac sc = S_mu. Line 2 (decoy source, inequality):
/// b0 s0' + b1 s1' + bc sc' <= S_mu'.
struct Weights {
    a0: f64,
    a1: f64,
    ac: f64,
    b0: f64,
    b1: f64,
    bc: f64,
}

impl Weights {
    fn new(mu: Intensity, mup: Intensity, eps: &[f64; 6]) -> Self {
        let d = decompose(mu);
        let dp = decompose(mup);
        let (m, mp) = (mu.value(), mup.value());
        let c_scale = (mp * mp * dp.p0) / (m * m * d.p0);
        Weights {
            a0: d.p0 * (1.0 + eps[0]),
            a1: d.p1 * (1.0 + eps[1]),
            ac: d.c * (1.0 + eps[2]),
            b0: dp.p0 * (1.0 + eps[3]),
            b1: dp.p1 * (1.0 + eps[4]),
            bc: c_scale * d.c * (1.0 + eps[5]),
        }
    }
}

struct Solved {
    /// Largest tagged fraction consistent with the constraints (unclamped).
    delta_raw: f64,
    /// Single-photon rate at that worst case (may be zero).
    s1: f64,
}

const FIXED_POINT_TOL: f64 = 1e-9;
const MAX_ITERATIONS: usize = 200;
const SWEEP_STEPS: usize = 512;

/// Worst-case solve of the coupled system at one epsilon assignment.
///
/// The sub-source sizes behind the fluctuation allowances are the smaller of
/// the two sources' expected class populations; with equal pulse counts the
/// intensity condition makes that the signal source, as the substitutions
/// r1 = coeff e^(mu/2) sqrt(1/(mu s1 N)) and rc = coeff sqrt(1/(c sc N))
/// assume.
fn solve_worst_case(
    mu: Intensity,
    mup: Intensity,
    rates: &ObservedRates,
    params: &FluctuationParams,
    eps: &[f64; 6],
) -> Result<Solved> {
    if rates.s_mu <= 0.0 {
        return Err(Error::ZeroRate("S_mu"));
    }
    let w = Weights::new(mu, mup, eps);
    let d = decompose(mu);
    let dp = decompose(mup);
    let (m, mp) = (mu.value(), mup.value());
    let c_scale = (mp * mp * dp.p0) / (m * m * d.p0);

    let coeff = params.coefficient;
    let n_mu = params.n_mu as f64;
    let n_mup = params.n_mup as f64;
    // expected class populations; the minimum is the binding sample size
    let n01 = (d.p1 * n_mu).min(dp.p1 * n_mup);
    let n0c = (d.c * n_mu).min(c_scale * d.c * n_mup);
    let deficit1 = |s1: f64| coeff * (s1.max(0.0) / n01).sqrt();
    let deficit_c = |sc: f64| coeff * (sc.max(0.0) / n0c).sqrt();

    let s_mu = rates.s_mu;
    let s_mup = rates.s_mup;
    let s0 = rates.s0;
    let r0 = params.r0;

    // ceiling from s1 >= 0, with the vacuum share at its permissive end
    let sc_cap = (s_mu - w.a0 * (1.0 - r0) * s0) / w.ac;
    if sc_cap <= 0.0 {
        return Err(Error::NoSolution(
            "signal rate does not exceed its vacuum share".into(),
        ));
    }
    let delta_cap = w.ac * sc_cap / s_mu;

    let s1_of = |delta: f64| ((s_mu - w.a0 * (1.0 + r0) * s0 - delta * s_mu) / w.a1).max(0.0);
    // margin left in the decoy constraint when the tagged fraction is delta
    let slack = |delta: f64| {
        let sc = delta * s_mu / w.ac;
        let s1 = s1_of(delta);
        let s1_eff = (s1 - deficit1(s1)).max(0.0);
        let sc_eff = (sc - deficit_c(sc)).max(0.0);
        s_mup - w.b0 * (1.0 - r0) * s0 - w.b1 * s1_eff - w.bc * sc_eff
    };

    if slack(0.0) < 0.0 {
        return Err(Error::NoSolution(
            "decoy rate is below the vacuum plus single-photon floor even with zero \
             multi-photon rate"
                .into(),
        ));
    }
    if slack(delta_cap) >= 0.0 {
        // decoy constraint never binds, so the verification says nothing
        return Ok(Solved {
            delta_raw: 1.0,
            s1: 0.0,
        });
    }

    // fixed point: solve the linear system at frozen fluctuation allowances,
    // refresh the allowances at the solution, repeat
    let mut r1 = 0.0_f64;
    let mut rc = 0.0_f64;
    let mut delta_prev = f64::NAN;
    let mut converged = None;
    for _ in 0..MAX_ITERATIONS {
        let k = w.bc * (1.0 - rc) - w.b1 * (1.0 - r1) * w.ac / w.a1;
        if k <= 0.0 {
            // fluctuation allowance has swallowed the intensity separation
            return Ok(Solved {
                delta_raw: 1.0,
                s1: 0.0,
            });
        }
        let rhs = s_mup
            - w.b1 * (1.0 - r1) * (s_mu - w.a0 * (1.0 + r0) * s0) / w.a1
            - w.b0 * (1.0 - r0) * s0;
        let sc = (rhs / k).min(sc_cap);
        let delta = w.ac * sc / s_mu;
        let s1 = s1_of(delta);
        // effective allowances; the max(0, ..) keeps s' physical at tiny rates
        r1 = if s1 > 0.0 {
            1.0 - (s1 - deficit1(s1)).max(0.0) / s1
        } else {
            1.0
        };
        rc = if sc > 0.0 {
            1.0 - (sc - deficit_c(sc)).max(0.0) / sc
        } else {
            0.0
        };
        if (delta - delta_prev).abs() < FIXED_POINT_TOL {
            converged = Some(delta);
            break;
        }
        delta_prev = delta;
    }

    let delta = match converged {
        Some(delta) => delta,
        // oscillation or slow divergence: bisect the slack sign change instead
        None => bisect_upper_crossing(&slack, 0.0, delta_cap)?,
    };

    // the fixed point lands on a slack zero; make sure it is the last one so
    // the reported bound is the supremum of the feasible set
    let delta = highest_feasible(&slack, delta, delta_cap);

    Ok(Solved {
        delta_raw: delta,
        s1: s1_of(delta),
    })
}

/// Largest zero of `slack` in [lo, hi], found by a downward coarse scan for
/// the last nonnegative point followed by bisection. `slack(lo) >= 0` and
/// `slack(hi) < 0` are the caller's responsibility.
fn bisect_upper_crossing(slack: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64> {
    let mut feasible = lo;
    let mut infeasible = hi;
    for i in (0..SWEEP_STEPS).rev() {
        let x = lo + (hi - lo) * i as f64 / SWEEP_STEPS as f64;
        if slack(x) >= 0.0 {
            feasible = x;
            break;
        }
        infeasible = x;
    }
    for _ in 0..100 {
        let mid = 0.5 * (feasible + infeasible);
        if slack(mid) >= 0.0 {
            feasible = mid;
        } else {
            infeasible = mid;
        }
    }
    if feasible <= lo && slack(lo) < 0.0 {
        return Err(Error::NoSolution("feasibility bracket collapsed".into()));
    }
    Ok(feasible)
}

/// Scan above `delta` for any later feasible stretch; returns the refined
/// supremum. In the normal operating regime the slack is strictly decreasing
/// and this returns `delta` unchanged.
fn highest_feasible(slack: &dyn Fn(f64) -> f64, delta: f64, cap: f64) -> f64 {
    let mut best = delta;
    let mut above = cap;
    let mut found = false;
    for i in (1..=SWEEP_STEPS).rev() {
        let x = delta + (cap - delta) * i as f64 / SWEEP_STEPS as f64;
        if slack(x) >= 0.0 {
            best = x;
            found = true;
            break;
        }
        above = x;
    }
    if !found {
        return delta;
    }
    for _ in 0..100 {
        let mid = 0.5 * (best + above);
        if slack(mid) >= 0.0 {
            best = mid;
        } else {
            above = mid;
        }
    }
    best
}
