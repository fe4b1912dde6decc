//! Quench protocol: the drive frequency ω(t), its floor, and the time
//! rescaling that maps a drive of strength δ onto the unit-strength case.
//!
//! Units are ħ = M = 1; times and frequencies are dimensionless.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// How the gap floor ω_C enters the drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FloorMode {
    /// ω(t) = max(ω_C, δ|t/τ|^η).
    #[default]
    MaxFloor,
    /// ω(t) = δ|t/τ|^η, ω_C ignored.
    NoFloor,
}

fn default_delta() -> f64 {
    1.0
}

/// Symmetric drive on t ∈ [−τ, τ] crossing the critical point at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveProtocol {
    pub eta: f64,
    pub tau: f64,
    #[serde(default)]
    pub omega_c: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub floor_mode: FloorMode,
}

impl DriveProtocol {
    pub fn new(eta: f64, tau: f64, omega_c: f64) -> Result<Self> {
        Self {
            eta,
            tau,
            omega_c,
            delta: 1.0,
            floor_mode: FloorMode::MaxFloor,
        }
        .validated()
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        self.delta = delta;
        self.validated()
    }

    pub fn with_floor_mode(mut self, mode: FloorMode) -> Self {
        self.floor_mode = mode;
        self
    }

    /// Pure power law ω(t) = |t|^η on [−span, span], i.e. δ = span^η and no floor.
    pub fn critical_power_law(eta: f64, span: f64) -> Result<Self> {
        Self {
            eta,
            tau: span,
            omega_c: 0.0,
            delta: span.powf(eta),
            floor_mode: FloorMode::NoFloor,
        }
        .validated()
    }

    /// Checks the field ranges; used after deserialization.
    pub fn validated(self) -> Result<Self> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return domain(format!("eta must be finite and >= 0, got {}", self.eta));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return domain(format!("tau must be finite and > 0, got {}", self.tau));
        }
        if !(self.omega_c.is_finite() && self.omega_c >= 0.0) {
            return domain(format!("omega_c must be finite and >= 0, got {}", self.omega_c));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return domain(format!("delta must be finite and > 0, got {}", self.delta));
        }
        Ok(self)
    }

    /// Drive frequency without range checks; callers guarantee |t| ≤ τ.
    #[inline]
    pub(crate) fn omega_unchecked(&self, t: f64) -> f64 {
        let bare = self.delta * (t.abs() / self.tau).powf(self.eta);
        match self.floor_mode {
            FloorMode::MaxFloor => bare.max(self.omega_c),
            FloorMode::NoFloor => bare,
        }
    }

    pub fn omega_at(&self, t: f64) -> Result<f64> {
        // allow a few ulps of slack at the endpoints
        let slack = 4.0 * f64::EPSILON * self.tau;
        if !t.is_finite() || t.abs() > self.tau + slack {
            return domain(format!("t = {t} outside [-{0}, {0}]", self.tau));
        }
        Ok(self.omega_unchecked(t.clamp(-self.tau, self.tau)))
    }

    /// Times in (−τ, τ) where ω(t) is not smooth: the crossing and the
    /// edges of the floor plateau. Sorted ascending.
    pub fn kink_times(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        if self.floor_mode == FloorMode::MaxFloor && self.omega_c > 0.0 && self.eta > 0.0 {
            let edge = self.tau * (self.omega_c / self.delta).powf(1.0 / self.eta);
            if edge > 0.0 && edge < self.tau {
                out.insert(0, -edge);
                out.push(edge);
            }
        }
        out
    }

    pub fn critical_params(&self) -> CriticalParams {
        critical_params(self.eta)
    }
}

/// t̃ = |δ|^{−η/(1+η)} t.
pub fn rescaled_time(delta: f64, eta: f64, t: f64) -> Result<f64> {
    if !(delta > 0.0) || !delta.is_finite() {
        return domain(format!("delta must be > 0, got {delta}"));
    }
    if !(eta >= 0.0) {
        return domain(format!("eta must be >= 0, got {eta}"));
    }
    Ok(delta.powf(-eta / (1.0 + eta)) * t)
}

/// Exponent p = 1/(2(1+η)) and the Bessel argument ζ(t) = |t|^{1+η}/(1+η).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalParams {
    pub eta: f64,
    pub p: f64,
}

impl CriticalParams {
    pub fn zeta(&self, t: f64) -> f64 {
        t.abs().powf(1.0 + self.eta) / (1.0 + self.eta)
    }
}

pub fn critical_params(eta: f64) -> CriticalParams {
    CriticalParams {
        eta,
        p: 0.5 / (1.0 + eta),
    }
}

impl std::str::FromStr for FloorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max_floor" | "MaxFloor" => Ok(FloorMode::MaxFloor),
            "no_floor" | "NoFloor" => Ok(FloorMode::NoFloor),
            other => Err(Error::Config(format!("unknown floor mode '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn omega_examples() {
        let p = DriveProtocol::new(1.0, 25.0, 0.0).unwrap();
        assert_eq!(p.omega_at(-25.0).unwrap(), 1.0);
        let p = DriveProtocol::new(1.0, 25.0, 0.1).unwrap();
        assert_eq!(p.omega_at(0.0).unwrap(), 0.1);
        let p = DriveProtocol::new(2.0, 10.0, 0.0).unwrap();
        assert!((p.omega_at(5.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn omega_outside_span_is_domain_error() {
        let p = DriveProtocol::new(1.0, 25.0, 0.0).unwrap();
        assert!(matches!(p.omega_at(25.5), Err(Error::Domain(_))));
        assert!(matches!(p.omega_at(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn no_floor_ignores_omega_c() {
        let p = DriveProtocol::new(1.0, 10.0, 0.5)
            .unwrap()
            .with_floor_mode(FloorMode::NoFloor);
        assert_eq!(p.omega_at(0.0).unwrap(), 0.0);
    }

    #[test]
    fn invalid_protocols_rejected() {
        assert!(DriveProtocol::new(-1.0, 10.0, 0.0).is_err());
        assert!(DriveProtocol::new(1.0, 0.0, 0.0).is_err());
        assert!(DriveProtocol::new(1.0, 1.0, -0.1).is_err());
        assert!(DriveProtocol::new(1.0, 1.0, 0.0).unwrap().with_delta(0.0).is_err());
    }

    #[test]
    fn rescaled_time_examples() {
        assert_eq!(rescaled_time(1.0, 3.0, 7.5).unwrap(), 7.5);
        assert!((rescaled_time(16.0, 1.0, 8.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((rescaled_time(16.0, 3.0, 8.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(rescaled_time(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn critical_params_examples() {
        assert_eq!(critical_params(1.0).p, 0.25);
        assert_eq!(critical_params(0.0).p, 0.5);
        assert_eq!(critical_params(1.0).zeta(2.0), 2.0);
        assert_eq!(critical_params(1.0).zeta(-2.0), 2.0);
    }

    #[test]
    fn floor_is_attained_on_dense_grid() {
        let p = DriveProtocol::new(1.0, 25.0, 0.1).unwrap();
        let min = (0..=10_000)
            .map(|i| p.omega_at(-25.0 + 50.0 * i as f64 / 10_000.0).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min, 0.1);
    }

    #[test]
    fn kink_times_bracket_plateau() {
        let p = DriveProtocol::new(1.0, 25.0, 0.1).unwrap();
        let k = p.kink_times();
        assert_eq!(k.len(), 3);
        assert!((k[0] + 2.5).abs() < 1e-12 && (k[2] - 2.5).abs() < 1e-12);
        // flat drive: the plateau covers everything
        let flat = DriveProtocol::new(1.0, 25.0, 1.0).unwrap();
        assert_eq!(flat.kink_times(), vec![0.0]);
    }

    #[test]
    fn config_round_trip_uses_documented_keys() {
        let p = DriveProtocol::new(1.5, 20.0, 0.05).unwrap();
        let text = toml::to_string(&p).unwrap();
        for key in ["eta", "tau", "omega_c", "delta", "floor_mode"] {
            assert!(text.contains(key), "{key} missing in {text}");
        }
        let back: DriveProtocol = toml::from_str(&text).unwrap();
        assert_eq!(back, p);
        let minimal: DriveProtocol = toml::from_str("eta = 1.0\ntau = 5.0").unwrap();
        assert_eq!(minimal.delta, 1.0);
        assert_eq!(minimal.floor_mode, FloorMode::MaxFloor);
    }

    proptest! {
        #[test]
        fn omega_is_even(eta in 0.0f64..4.0, tau in 0.5f64..200.0, wc in 0.0f64..1.0, u in -1.0f64..1.0) {
            let p = DriveProtocol::new(eta, tau, wc).unwrap();
            let t = u * tau;
            prop_assert_eq!(p.omega_at(t).unwrap(), p.omega_at(-t).unwrap());
        }

        #[test]
        fn omega_respects_floor_and_monotonicity(eta in 0.0f64..4.0, wc in 0.0f64..1.5, u in 0.0f64..1.0, v in 0.0f64..1.0) {
            let p = DriveProtocol::new(eta, 10.0, wc).unwrap();
            let (a, b) = if u < v { (u, v) } else { (v, u) };
            // a ≤ b on [0, 1] maps to −10b ≤ −10a on [−τ, 0]
            let early = p.omega_at(-10.0 * b).unwrap();
            let late = p.omega_at(-10.0 * a).unwrap();
            prop_assert!(early >= late);
            prop_assert!(late >= wc);
        }

        #[test]
        fn rescaling_composes(d1 in 0.1f64..10.0, d2 in 0.1f64..10.0, eta in 0.0f64..5.0, t in -50.0f64..50.0) {
            let two_step = rescaled_time(d2, eta, rescaled_time(d1, eta, t).unwrap()).unwrap();
            let one_step = rescaled_time(d1 * d2, eta, t).unwrap();
            prop_assert!((two_step - one_step).abs() <= 1e-14 * one_step.abs().max(1e-300));
        }
    }
}
