//! Ermakov-equation model of the driven oscillator.
//!
//! The width ξ of the evolved ground state obeys
//! ξ̈ + ω(t)² ξ = 1/(4ξ³), and the total phase obeys λ̇ = 1/(2ξ²).
//! From (ξ, ξ̇, ω) the reflection coefficient |R|² fixes the whole
//! excitation distribution.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::ode::{self, OdeSystem, StepAction, StepControl};
use crate::protocol::DriveProtocol;

/// One point of an Ermakov trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscState {
    pub t: f64,
    pub xi: f64,
    pub xi_dot: f64,
    pub phase: f64,
}

impl OscState {
    /// Ω = −i ξ̇/ξ + 1/(2ξ²), returned as (re, im).
    pub fn omega_complex(&self) -> (f64, f64) {
        (0.5 / (self.xi * self.xi), -self.xi_dot / self.xi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Number of evenly spaced samples used when exporting a trajectory.
    pub output_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: 1.0,
            output_stride: 401,
        }
    }
}

impl SolverConfig {
    pub(crate) fn step_control(&self) -> Result<StepControl> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return domain("solver tolerances must be positive");
        }
        if !(self.max_step > 0.0) {
            return domain("max_step must be positive");
        }
        Ok(StepControl {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            ..StepControl::default()
        })
    }
}

/// Ground state of the instantaneous oscillator at t = −τ.
pub fn initial_condition(p: &DriveProtocol) -> Result<OscState> {
    let w0 = p.omega_at(-p.tau)?;
    if !(w0 > 0.0) {
        return Err(Error::DegenerateStart { t: -p.tau });
    }
    Ok(OscState {
        t: -p.tau,
        xi: (2.0 * w0).powf(-0.5),
        xi_dot: 0.0,
        phase: 0.0,
    })
}

/// |R|² = [(1/(2ξ²) − ω)² + ξ̇²/ξ²] / [(1/(2ξ²) + ω)² + ξ̇²/ξ²].
pub fn reflection_coefficient(s: &OscState, omega: f64) -> Result<f64> {
    if !(s.xi > 0.0) || !s.xi.is_finite() || !s.xi_dot.is_finite() {
        return domain(format!("invalid oscillator width xi = {}", s.xi));
    }
    if !(omega >= 0.0) || !omega.is_finite() {
        return domain(format!("invalid frequency {omega}"));
    }
    let a = 0.5 / (s.xi * s.xi);
    let v = s.xi_dot / s.xi;
    let v2 = v * v;
    let num = (a - omega).powi(2) + v2;
    let den = (a + omega).powi(2) + v2;
    if !(den > 0.0) || !den.is_normal() {
        return Err(Error::DegenerateState(format!(
            "denominator vanishes (xi = {}, xi_dot = {}, omega = {omega})",
            s.xi, s.xi_dot
        )));
    }
    Ok(num / den)
}

struct ErmakovRhs<'a> {
    protocol: &'a DriveProtocol,
}

impl OdeSystem for ErmakovRhs<'_> {
    fn dim(&self) -> usize {
        3
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let w = self.protocol.omega_unchecked(t.clamp(-self.protocol.tau, self.protocol.tau));
        let xi = y[0];
        let xi2 = xi * xi;
        dy[0] = y[1];
        dy[1] = -w * w * xi + 0.25 / (xi2 * xi);
        dy[2] = 0.5 / xi2;
    }
}

/// Dense Ermakov trajectory on [−τ, τ].
///
/// Between accepted steps the width is interpolated by the quintic Hermite
/// polynomial matching ξ, ξ̇ and ξ̈ at both ends (ξ̈ is exact from the
/// equation of motion); the phase uses the same rule with λ̇ and λ̈.
#[derive(Debug, Clone)]
pub struct OscTrajectory {
    protocol: DriveProtocol,
    samples: Vec<OscState>,
    accel: Vec<f64>,
    output_stride: usize,
}

pub fn integrate(p: &DriveProtocol, cfg: &SolverConfig) -> Result<OscTrajectory> {
    integrate_until(p, cfg, p.tau)
}

/// Like [`integrate`] but stops at `t_end` ∈ (−τ, τ].
pub fn integrate_until(p: &DriveProtocol, cfg: &SolverConfig, t_end: f64) -> Result<OscTrajectory> {
    let p = p.validated()?;
    if !(t_end > -p.tau && t_end <= p.tau) {
        return domain(format!("end time {t_end} outside (-{0}, {0}]", p.tau));
    }
    let ctl = cfg.step_control()?;
    let start = initial_condition(&p)?;
    let sys = ErmakovRhs { protocol: &p };
    let mut samples = Vec::new();
    let mut accel = Vec::new();
    let y0 = [start.xi, start.xi_dot, start.phase];
    let stops: Vec<f64> = p.kink_times().into_iter().filter(|&k| k < t_end).collect();
    ode::integrate(&sys, -p.tau, &y0, t_end, &stops, &ctl, |t, y, dy| {
        if !(y[0] > 0.0) || !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Inconsistent(format!(
                "oscillator width left the positive axis at t = {t} (xi = {})",
                y[0]
            )));
        }
        samples.push(OscState {
            t,
            xi: y[0],
            xi_dot: y[1],
            phase: y[2],
        });
        accel.push(dy[1]);
        Ok(StepAction::Continue)
    })?;
    Ok(OscTrajectory {
        protocol: p,
        samples,
        accel,
        output_stride: cfg.output_stride.max(2),
    })
}

/// Quintic Hermite interpolation on one interval; returns (f, f', f'') at
/// fraction `s` of a step of length `h`.
fn quintic_hermite(s: f64, h: f64, left: [f64; 3], right: [f64; 3]) -> [f64; 3] {
    let [y0, d0, a0] = [left[0], left[1] * h, left[2] * h * h];
    let [y1, d1, a1] = [right[0], right[1] * h, right[2] * h * h];
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let basis = [
        // y0, d0, a0, a1, d1, y1
        1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5,
        s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5,
        0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5),
        0.5 * (s3 - 2.0 * s4 + s5),
        -4.0 * s3 + 7.0 * s4 - 3.0 * s5,
        10.0 * s3 - 15.0 * s4 + 6.0 * s5,
    ];
    let d_basis = [
        -30.0 * s2 + 60.0 * s3 - 30.0 * s4,
        1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4,
        0.5 * (2.0 * s - 9.0 * s2 + 12.0 * s3 - 5.0 * s4),
        0.5 * (3.0 * s2 - 8.0 * s3 + 5.0 * s4),
        -12.0 * s2 + 28.0 * s3 - 15.0 * s4,
        30.0 * s2 - 60.0 * s3 + 30.0 * s4,
    ];
    let dd_basis = [
        -60.0 * s + 180.0 * s2 - 120.0 * s3,
        -36.0 * s + 96.0 * s2 - 60.0 * s3,
        0.5 * (2.0 - 18.0 * s + 36.0 * s2 - 20.0 * s3),
        0.5 * (6.0 * s - 24.0 * s2 + 20.0 * s3),
        -24.0 * s + 84.0 * s2 - 60.0 * s3,
        60.0 * s - 180.0 * s2 + 120.0 * s3,
    ];
    let coeffs = [y0, d0, a0, a1, d1, y1];
    let dot = |b: &[f64; 6]| b.iter().zip(&coeffs).map(|(b, c)| b * c).sum::<f64>();
    [dot(&basis), dot(&d_basis) / h, dot(&dd_basis) / (h * h)]
}

impl OscTrajectory {
    pub fn protocol(&self) -> &DriveProtocol {
        &self.protocol
    }

    /// Accepted integrator steps, starting at −τ.
    pub fn samples(&self) -> &[OscState] {
        &self.samples
    }

    pub fn first(&self) -> &OscState {
        &self.samples[0]
    }

    pub fn last(&self) -> &OscState {
        self.samples.last().expect("trajectory has at least one sample")
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let (a, b) = (self.first().t, self.last().t);
        if !(t >= a && t <= b) {
            return domain(format!("t = {t} outside trajectory span [{a}, {b}]"));
        }
        Ok(())
    }

    fn locate(&self, t: f64) -> usize {
        // index i with samples[i].t <= t <= samples[i+1].t
        let idx = self.samples.partition_point(|s| s.t <= t);
        idx.saturating_sub(1).min(self.samples.len() - 2)
    }

    /// Interpolated (ξ, ξ̇, ξ̈) at time t.
    fn width_jet(&self, t: f64) -> ([f64; 3], usize) {
        let i = self.locate(t);
        let (l, r) = (&self.samples[i], &self.samples[i + 1]);
        let h = r.t - l.t;
        let s = (t - l.t) / h;
        let jet = quintic_hermite(
            s,
            h,
            [l.xi, l.xi_dot, self.accel[i]],
            [r.xi, r.xi_dot, self.accel[i + 1]],
        );
        (jet, i)
    }

    pub fn state_at(&self, t: f64) -> Result<OscState> {
        self.check_time(t)?;
        if self.samples.len() == 1 {
            return Ok(self.samples[0]);
        }
        let ([xi, xi_dot, _], i) = self.width_jet(t);
        let (l, r) = (&self.samples[i], &self.samples[i + 1]);
        let phase_jet = |s: &OscState| {
            let x2 = s.xi * s.xi;
            [s.phase, 0.5 / x2, -s.xi_dot / (x2 * s.xi)]
        };
        let h = r.t - l.t;
        let [phase, _, _] = quintic_hermite((t - l.t) / h, h, phase_jet(l), phase_jet(r));
        Ok(OscState { t, xi, xi_dot, phase })
    }

    pub fn omega_at(&self, t: f64) -> Result<f64> {
        self.protocol.omega_at(t)
    }

    pub fn reflection_at(&self, t: f64) -> Result<f64> {
        let s = self.state_at(t)?;
        reflection_coefficient(&s, self.protocol.omega_at(t)?)
    }

    /// |R|² at the last sample (t = +τ for a full run).
    pub fn final_reflection(&self) -> Result<f64> {
        reflection_coefficient(self.last(), self.protocol.omega_at(self.last().t)?)
    }

    /// Evenly spaced export grid over the trajectory span with `output_stride` points.
    pub fn export_grid(&self) -> Vec<f64> {
        let (a, b) = (self.first().t, self.last().t);
        if b == self.protocol.tau {
            return uniform_grid(self.protocol.tau, self.output_stride);
        }
        let n = self.output_stride;
        (0..n)
            .map(|i| if i == n - 1 { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
            .collect()
    }

    /// CSV with columns `t,omega,xi,xi_dot,phase,R_sq` on the export grid.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,omega,xi,xi_dot,phase,R_sq")?;
        for t in self.export_grid() {
            let s = self.state_at(t)?;
            let w = self.protocol.omega_at(t)?;
            let r = reflection_coefficient(&s, w)?;
            writeln!(out, "{},{},{},{},{},{}", t, w, s.xi, s.xi_dot, s.phase, r)?;
        }
        Ok(())
    }
}

/// `n` evenly spaced points on [−τ, τ], endpoints exact.
pub fn uniform_grid(tau: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|i| {
            if i == n - 1 {
                tau
            } else {
                -tau + 2.0 * tau * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Max of |ξ̈ + ω²ξ − 1/(4ξ³)| on `grid`, with ξ̈ from finite differences
/// of the dense output (one-sided near the ends of the span).
pub fn residual(traj: &OscTrajectory, grid: &[f64]) -> Result<f64> {
    // fourth-order stencils: near the turning points of a strongly squeezed
    // state the second-order truncation error is not negligible
    const H: f64 = 1e-3;
    const CENTERED: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];
    const ONE_SIDED: [f64; 6] = [45.0, -154.0, 214.0, -156.0, 61.0, -10.0];
    let (a, b) = (traj.first().t, traj.last().t);
    let xi = |t: f64| -> Result<f64> { Ok(traj.state_at(t)?.xi) };
    let mut worst: f64 = 0.0;
    for &t in grid {
        traj.check_time(t)?;
        let x0 = xi(t)?;
        let mut acc = 0.0;
        if t - 2.0 * H >= a && t + 2.0 * H <= b {
            for (k, c) in CENTERED.iter().enumerate() {
                acc += c * xi(t + (k as f64 - 2.0) * H)?;
            }
        } else {
            let dir = if t + 5.0 * H <= b { 1.0 } else { -1.0 };
            for (k, c) in ONE_SIDED.iter().enumerate() {
                acc += c * xi(t + dir * k as f64 * H)?;
            }
        }
        let second = acc / (12.0 * H * H);
        let w = traj.protocol.omega_at(t)?;
        let r = (second + w * w * x0 - 0.25 / x0.powi(3)).abs();
        worst = worst.max(r);
    }
    Ok(worst)
}
