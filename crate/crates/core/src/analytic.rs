//! Closed forms at the critical point and the pair-counting law.
//!
//! For ω(t) = |t|^η the classical equation x'' + ω² x = 0 is solved by
//! √|t| J_{±p}(ζ) with p = 1/(2(1+η)) and ζ = |t|^{1+η}/(1+η). The Ermakov
//! width squared is a quadratic form in these two solutions whose weights
//! depend on which side of the crossing t lies.

use std::f64::consts::{FRAC_PI_2, PI};

use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::protocol::critical_params;
use crate::special::bessel_j;

/// Side of the crossing at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    BeforeCrossing,
    AfterCrossing,
}

impl Branch {
    pub fn for_time(t: f64) -> Self {
        if t < 0.0 {
            Branch::BeforeCrossing
        } else {
            Branch::AfterCrossing
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaPair {
    pub sigma1: f64,
    pub sigma2: f64,
    pub branch: Branch,
}

pub fn sigma_coeffs(p: f64, branch: Branch) -> Result<SigmaPair> {
    if !p.is_finite() {
        return domain(format!("order p = {p} is not finite"));
    }
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::Pole { p });
    }
    let amp = FRAC_PI_2.sqrt();
    let (c, s) = ((p * FRAC_PI_2).cos(), (p * FRAC_PI_2).sin());
    let (first, second) = match branch {
        Branch::BeforeCrossing => (c, s),
        Branch::AfterCrossing => (s, c),
    };
    Ok(SigmaPair {
        sigma1: amp / (p.sqrt() * 2.0 * first),
        sigma2: amp / (2.0 * second),
        branch,
    })
}

/// ξ² at time t for the unit power-law drive ω = |t|^η, for the state that
/// was in the instantaneous ground state in the far past.
pub fn xi_critical(eta: f64, t: f64, branch: Branch) -> Result<f64> {
    if !(eta.is_finite() && eta >= 0.0) {
        return domain(format!("eta must be finite and >= 0, got {eta}"));
    }
    if !t.is_finite() {
        return domain(format!("t = {t} is not finite"));
    }
    if t == 0.0 {
        return Err(Error::Singular("t = 0 is the crossing point".into()));
    }
    let cp = critical_params(eta);
    let p = cp.p;
    let sig = sigma_coeffs(p, branch)?;
    let z = cp.zeta(t);
    let jm = bessel_j(-p, z)?;
    let jp = bessel_j(p, z)?;
    let s1 = p * sig.sigma1 * sig.sigma1;
    let s2 = sig.sigma2 * sig.sigma2;
    let at = t.abs();
    Ok(p * at * (s1 + s2) * (jm * jm + jp * jp) + 2.0 * p * at * (s1 - s2) * jm * jp)
}

/// Large-τ limit of |R| as the closed form cos(π/(2+η)).
pub fn asymptotic_reflection(eta: f64) -> f64 {
    (PI / (2.0 + eta)).cos()
}

/// |R| picked up by a state crossing the pure power-law point from the
/// adiabatic far past, cos(πp) with p = 1/(2(1+η)). It follows from
/// continuing the Bessel solution through t = 0, where the odd solution
/// changes sign.
pub fn crossing_reflection(eta: f64) -> f64 {
    (PI * critical_params(eta).p).cos()
}

/// Counts defect pairs k = m/2: failures before r = 1/2 successes with
/// per-trial failure probability `fail_prob`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegBinomial {
    pub eta: f64,
    pub fail_prob: f64,
    pub r: f64,
}

impl NegBinomial {
    /// Law at the large-τ plateau for gap exponent η: fail_prob = cos²(π/(2+η)).
    pub fn from_eta(eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return domain(format!("eta must be finite and >= 0, got {eta}"));
        }
        let c = asymptotic_reflection(eta);
        Ok(Self { eta, fail_prob: c * c, r: 0.5 })
    }

    /// Law for an arbitrary |R|², with `eta` kept only as a label.
    pub fn with_fail_prob(eta: f64, fail_prob: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&fail_prob) {
            return domain(format!("fail probability must lie in [0, 1), got {fail_prob}"));
        }
        Ok(Self { eta, fail_prob, r: 0.5 })
    }
}

/// Beyond this many pairs the pmf is evaluated from log-Gamma instead of
/// the running product.
const LOG_SPACE_FROM: u64 = 300;

/// Ratio P(k+1)/P(k) without q: (2k+1)/(2k+2), shared with the excitation pmf.
#[inline]
pub(crate) fn pair_ratio(k: u64) -> f64 {
    (2 * k + 1) as f64 / (2 * k + 2) as f64
}

/// P(k) = C(k−1/2, k)·(1−q)^{1/2}·q^k.
pub fn nb_pmf(nb: &NegBinomial, k: u64) -> f64 {
    let q = nb.fail_prob;
    if k == 0 {
        return (1.0 - q).sqrt();
    }
    if q == 0.0 {
        return 0.0;
    }
    if k <= LOG_SPACE_FROM {
        let mut prob = (1.0 - q).sqrt();
        for j in 0..k {
            prob *= q * pair_ratio(j);
        }
        return prob;
    }
    let kf = k as f64;
    let log_binom = ln_gamma(kf + 0.5) - ln_gamma(0.5) - ln_gamma(kf + 1.0);
    (log_binom + 0.5 * (1.0 - q).ln() + kf * q.ln()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMoments {
    pub mean: f64,
    pub variance: f64,
}

pub fn nb_moments(nb: &NegBinomial) -> PairMoments {
    let q = nb.fail_prob;
    PairMoments {
        mean: nb.r * q / (1.0 - q),
        variance: nb.r * q / ((1.0 - q) * (1.0 - q)),
    }
}
