//! Poisson photon-number statistics of phase-randomized coherent pulses and
//! the convex decompositions the verification bounds are built on.
//!
//! A phase-randomized coherent pulse of intensity mu is the classical mixture
//! P_n(mu) = e^(-mu) mu^n / n! over Fock states. The toolkit works with the
//! equivalent three-part split
//!
//! ```text
//! rho_mu = e^(-mu) |0><0| + mu e^(-mu) |1><1| + c(mu) rho_c
//! ```
//!
//! where `c(mu) = 1 - e^(-mu) - mu e^(-mu)` carries all multi-photon pulses,
//! and for a second intensity mu' > mu the decomposition that re-uses the
//! same multi-photon state rho_c with weight `c(mu) mu'^2 e^(-mu') / (mu^2
//! e^(-mu))` plus a nonnegative residual.

use crate::{Error, Result};

/// Photon-number sums are truncated at the smallest n whose cumulative
/// Poisson tail falls below this; it sits well under every tolerance used by
/// the bounds.
pub const TAIL_EPSILON: f64 = 1e-15;

const MAX_FOCK: u32 = 400;

/// Mean photon number of a source. Zero is the literal vacuum source used as
/// the protocol's third intensity.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Intensity(f64);

impl Intensity {
    pub fn new(mu: f64) -> Result<Self> {
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::InvalidInput(format!(
                "intensity must be finite and >= 0, got {mu}"
            )));
        }
        Ok(Self(mu))
    }

    pub const fn vacuum() -> Self {
        Self(0.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_vacuum(self) -> bool {
        self.0 == 0.0
    }
}

impl std::fmt::Display for Intensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// P_n(mu) = e^(-mu) mu^n / n!, with the vacuum source emitting exactly
/// vacuum.
pub fn poisson_pmf(mu: Intensity, n: u32) -> f64 {
    let m = mu.value();
    if m == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    // iterative product keeps full precision for the small n used here
    let mut p = (-m).exp();
    for k in 1..=n {
        p *= m / k as f64;
    }
    p
}

/// Smallest cutoff such that the Poisson mass beyond it is below
/// [`TAIL_EPSILON`]. Sums over photon number stop here, with the remaining
/// tail folded into the last class by callers that need exact normalization.
pub fn tail_cutoff(mu: Intensity) -> u32 {
    if mu.is_vacuum() {
        return 0;
    }
    let mut cumulative = 0.0;
    for n in 0..MAX_FOCK {
        cumulative += poisson_pmf(mu, n);
        if 1.0 - cumulative < TAIL_EPSILON {
            return n;
        }
    }
    MAX_FOCK
}

/// Weights of the vacuum / single-photon / multi-photon split of one source.
#[derive(Debug, Clone, Copy)]
pub struct SourceDecomposition {
    /// Vacuum probability e^(-mu).
    pub p0: f64,
    /// Single-photon probability mu e^(-mu).
    pub p1: f64,
    /// Multi-photon weight c(mu) = 1 - p0 - p1.
    pub c: f64,
}

pub fn decompose(mu: Intensity) -> SourceDecomposition {
    let m = mu.value();
    let p0 = (-m).exp();
    let p1 = m * p0;
    SourceDecomposition {
        p0,
        p1,
        c: 1.0 - p0 - p1,
    }
}

/// Weights of the decoy source written against the signal source's
/// multi-photon state: vacuum, single photon, the rho_c component, and the
/// nonnegative residual d.
#[derive(Debug, Clone, Copy)]
pub struct ResidualDecomposition {
    pub p0p: f64,
    pub p1p: f64,
    /// Coefficient on the signal source's rho_c:
    /// c(mu) mu'^2 e^(-mu') / (mu^2 e^(-mu)).
    pub c_coeff: f64,
    /// Residual weight; nonnegative whenever the pair is valid.
    pub d: f64,
}

/// True iff mu' > mu > 0 and mu' e^(-mu') > mu e^(-mu). Every bound in this
/// crate assumes the pair satisfies this.
pub fn validate_pair(mu: Intensity, mup: Intensity) -> bool {
    let (m, mp) = (mu.value(), mup.value());
    mp > m && m > 0.0 && mp * (-mp).exp() > m * (-m).exp()
}

pub fn residual_decompose(mu: Intensity, mup: Intensity) -> Result<ResidualDecomposition> {
    if !validate_pair(mu, mup) {
        return Err(Error::InvalidPair {
            mu: mu.value(),
            mup: mup.value(),
        });
    }
    let (m, mp) = (mu.value(), mup.value());
    let p0p = (-mp).exp();
    let p1p = mp * p0p;
    let c = decompose(mu).c;
    let c_coeff = c * (mp * mp * p0p) / (m * m * (-m).exp());
    let d = 1.0 - p0p - p1p - c_coeff;
    if d < -1e-12 {
        return Err(Error::InvalidPair {
            mu: m,
            mup: mp,
        });
    }
    Ok(ResidualDecomposition {
        p0p,
        p1p,
        c_coeff,
        d: d.max(0.0),
    })
}

/// Largest relative deviation of each class weight when the intensity is off
/// by at most a factor (1 +- beta).
#[derive(Debug, Clone, Copy)]
pub struct EpsilonBounds {
    pub e0: f64,
    pub e1: f64,
    pub ec: f64,
}

/// Maps a hardware intensity-error spec |mu_i - mu| <= beta mu to per-class
/// caps on |eps_x| in P~(x) = P(x)(1 + eps_x). Each class ratio is monotone
/// in the intensity deviation on either side, so the two endpoints dominate.
pub fn epsilon_bounds(mu: Intensity, beta: f64) -> Result<EpsilonBounds> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidInput(format!(
            "relative intensity error bound must be in [0, 1), got {beta}"
        )));
    }
    let base = decompose(mu);
    let lo = decompose(Intensity::new(mu.value() * (1.0 - beta))?);
    let hi = decompose(Intensity::new(mu.value() * (1.0 + beta))?);
    let dev = |lo_w: f64, hi_w: f64, w: f64| -> f64 {
        if w == 0.0 {
            return 0.0;
        }
        (lo_w / w - 1.0).abs().max((hi_w / w - 1.0).abs())
    };
    Ok(EpsilonBounds {
        e0: dev(lo.p0, hi.p0, base.p0),
        e1: dev(lo.p1, hi.p1, base.p1),
        ec: dev(lo.c, hi.c, base.c),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mu(v: f64) -> Intensity {
        Intensity::new(v).unwrap()
    }

    #[test]
    fn pmf_vacuum_source() {
        assert_eq!(poisson_pmf(Intensity::vacuum(), 0), 1.0);
        assert_eq!(poisson_pmf(Intensity::vacuum(), 3), 0.0);
    }

    #[test]
    fn pmf_direct_value() {
        assert!((poisson_pmf(mu(0.3), 1) - 0.222_245_466_204_515_35).abs() < 1e-15);
    }

    #[test]
    fn pmf_normalizes() {
        for m in [0.1, 0.3, 0.5, 1.0, 1.5, 2.0] {
            let m = mu(m);
            let cutoff = tail_cutoff(m);
            let total: f64 = (0..=cutoff + 30).map(|n| poisson_pmf(m, n)).sum();
            assert!((total - 1.0).abs() < 1e-12, "mu={m}: total={total}");
        }
    }

    #[test]
    fn decompose_values() {
        let d = decompose(Intensity::vacuum());
        assert_eq!((d.p0, d.p1, d.c), (1.0, 0.0, 0.0));

        let d = decompose(mu(0.3));
        assert!((d.p0 - 0.740_818_220_681_717_9).abs() < 1e-15);
        assert!((d.p1 - 0.222_245_466_204_515_35).abs() < 1e-15);
        assert!((d.c - 0.036_936_313_113_766_77).abs() < 1e-15);

        assert!((decompose(mu(0.25)).c - 0.026_499_021_160_743_9).abs() < 1e-12);
    }

    #[test]
    fn pair_validation() {
        assert!(validate_pair(mu(0.3), mu(0.45)));
        assert!(!validate_pair(mu(0.3), mu(0.3)));
        // 3 e^-3 = 0.1494 < 0.3 e^-0.3 = 0.2222
        assert!(!validate_pair(mu(0.3), mu(3.0)));
        assert!(!validate_pair(Intensity::vacuum(), mu(0.3)));
    }

    #[test]
    fn residual_values() {
        let r = residual_decompose(mu(0.3), mu(0.45)).unwrap();
        assert!((r.c_coeff - 0.071_530_603_462_693_2).abs() < 1e-12);
        assert!((r.d - 0.003_908_576_685_735_45).abs() < 1e-12);

        let r = residual_decompose(mu(0.2), mu(0.34)).unwrap();
        assert!(r.p0p >= 0.0 && r.p1p >= 0.0 && r.c_coeff >= 0.0 && r.d >= 0.0);
        assert!((r.p0p + r.p1p + r.c_coeff + r.d - 1.0).abs() < 1e-12);
        assert!((r.d - 0.002_201_946_536_284_65).abs() < 1e-12);
    }

    #[test]
    fn residual_vanishes_as_pair_closes() {
        let r = residual_decompose(mu(0.3), mu(0.3 + 1e-9)).unwrap();
        assert!(r.d < 1e-8, "d={}", r.d);
    }

    #[test]
    fn residual_rejects_invalid_pair() {
        assert!(matches!(
            residual_decompose(mu(0.45), mu(0.3)),
            Err(Error::InvalidPair { .. })
        ));
    }

    #[test]
    fn convexity_componentwise() {
        // e^(-mu') mu'^n / n! >= e^(-mu') mu'^2 mu^(n-2) / n! for n >= 2
        let (m, mp) = (0.3_f64, 0.45_f64);
        for n in 2..=30u32 {
            let lhs = poisson_pmf(mu(mp), n);
            let rhs = (-mp).exp() * mp * mp * m.powi(n as i32 - 2)
                / (1..=n).map(|k| k as f64).product::<f64>();
            assert!(lhs >= rhs * (1.0 - 1e-12), "n={n}: {lhs} < {rhs}");
        }
    }

    #[test]
    fn epsilon_bound_values() {
        let e = epsilon_bounds(mu(0.3), 0.0).unwrap();
        assert_eq!((e.e0, e.e1, e.ec), (0.0, 0.0, 0.0));

        let e = epsilon_bounds(mu(0.3), 0.02).unwrap();
        // vacuum class: e^(mu beta) - 1 dominates
        assert!((e.e0 - 0.006_018_036_054_064_92).abs() < 1e-12);
        // multi-photon class: c(1.02 mu)/c(mu) - 1 dominates
        assert!((e.ec - 0.036_353_435_5).abs() < 1e-9);
        assert!((e.e1 - 0.014_102_324_67).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn residual_weights_sum_to_one(m in 0.05f64..0.6, gap in 0.01f64..0.4) {
            let a = mu(m);
            let b = mu(m + gap);
            if validate_pair(a, b) {
                let r = residual_decompose(a, b).unwrap();
                prop_assert!((r.p0p + r.p1p + r.c_coeff + r.d - 1.0).abs() < 1e-12);
                prop_assert!(r.d >= 0.0);
            }
        }

        #[test]
        fn epsilon_bounds_monotone_in_beta(m in 0.05f64..1.0, b1 in 0.0f64..0.3, db in 0.0f64..0.2) {
            let lo = epsilon_bounds(mu(m), b1).unwrap();
            let hi = epsilon_bounds(mu(m), (b1 + db).min(0.49)).unwrap();
            prop_assert!(hi.e0 + 1e-12 >= lo.e0);
            prop_assert!(hi.e1 + 1e-12 >= lo.e1);
            prop_assert!(hi.ec + 1e-12 >= lo.ec);
        }
    }
}
