//! Adaptive Dormand–Prince 5(4) integrator for real first-order systems.
//!
//! Shared by the Ermakov oscillator (three real components) and the
//! Schrödinger propagation of the spin sector (interleaved real/imaginary
//! parts). Steps are forced to land exactly on every requested stop time.

use crate::error::{Error, Result};

/// Right-hand side y' = f(t, y).
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 50_000_000,
        }
    }
}

/// What the step observer wants the driver to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepAction {
    Continue,
    /// The observer changed `y` in place; the cached derivative is stale.
    StateModified,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// 5th-order minus embedded 4th-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_BETA: f64 = 0.04;
const PI_ALPHA: f64 = 0.2 - PI_BETA * 0.75;

struct Workspace {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    err: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
            err: vec![0.0; n],
        }
    }
}

fn error_norm(y: &[f64], y_new: &[f64], err: &[f64], ctl: &StepControl) -> f64 {
    let n = y.len() as f64;
    let sum: f64 = y
        .iter()
        .zip(y_new)
        .zip(err)
        .map(|((a, b), e)| {
            let scale = ctl.abs_tol + ctl.rel_tol * a.abs().max(b.abs());
            (e / scale).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

/// Hairer's starting step heuristic.
fn initial_step<S: OdeSystem>(sys: &S, t: f64, y: &[f64], f0: &[f64], dir: f64, ctl: &StepControl) -> f64 {
    let n = y.len() as f64;
    let sc = |v: f64| ctl.abs_tol + ctl.rel_tol * v.abs();
    let d0 = (y.iter().map(|v| (v / sc(*v)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (y.iter().zip(f0).map(|(v, f)| (f / sc(*v)).powi(2)).sum::<f64>() / n).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(ctl.max_step);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(v, f)| v + dir * h0 * f).collect();
    let mut f1 = vec![0.0; y.len()];
    sys.rhs(t + dir * h0, &y1, &mut f1);
    let d2 = (y
        .iter()
        .zip(f0.iter().zip(&f1))
        .map(|(v, (a, b))| ((b - a) / sc(*v)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(ctl.max_step)
}

/// Integrates from `t0` to `t_end` (either direction), landing exactly on
/// each time in `stops` that lies strictly between the two. The observer is
/// called with (t, y, y') at `t0` and after every accepted step.
pub fn integrate<S, F>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    stops: &[f64],
    ctl: &StepControl,
    mut observe: F,
) -> Result<IntegrationStats>
where
    S: OdeSystem,
    F: FnMut(f64, &mut [f64], &[f64]) -> Result<StepAction>,
{
    let n = sys.dim();
    if y0.len() != n {
        return Err(Error::Domain(format!("state length {} != system dimension {n}", y0.len())));
    }
    if !(ctl.rel_tol > 0.0 && ctl.abs_tol > 0.0) {
        return Err(Error::Domain("tolerances must be positive".into()));
    }
    let mut stats = IntegrationStats::default();
    let mut y = y0.to_vec();
    let mut ws = Workspace::new(n);
    let mut t = t0;
    sys.rhs(t, &y, &mut ws.k[0]);
    stats.rhs_evals += 1;
    if observe(t, &mut y, &ws.k[0])? == StepAction::StateModified {
        sys.rhs(t, &y, &mut ws.k[0]);
        stats.rhs_evals += 1;
    }
    if t0 == t_end {
        return Ok(stats);
    }
    let dir = (t_end - t0).signum();

    // targets in integration order, ending with t_end
    let mut targets: Vec<f64> = stops
        .iter()
        .copied()
        .filter(|s| (s - t0) * dir > 0.0 && (t_end - s) * dir > 0.0)
        .collect();
    targets.sort_by(|a, b| (a * dir).total_cmp(&(b * dir)));
    targets.dedup();
    targets.push(t_end);
    let mut next_target = 0;

    let mut h = initial_step(sys, t, &y, &ws.k[0], dir, ctl);
    stats.rhs_evals += 1;
    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;

    while next_target < targets.len() {
        if stats.accepted + stats.rejected >= ctl.max_steps {
            return Err(Error::IntegrationFailure {
                t,
                reason: format!("step budget of {} exhausted", ctl.max_steps),
            });
        }
        let target = targets[next_target];
        let remaining = (target - t).abs();
        let mut hits_target = false;
        let mut step = h.min(ctl.max_step);
        if step >= remaining * (1.0 - 1e-12) {
            step = remaining;
            hits_target = true;
        } else if step > 0.5 * remaining {
            // avoid leaving a sliver before the stop
            step = 0.5 * remaining;
        }
        let min_step = 16.0 * f64::EPSILON * t.abs().max(1.0);
        if step < min_step && !hits_target {
            return Err(Error::IntegrationFailure {
                t,
                reason: format!("step size underflow (h = {step:e})"),
            });
        }
        let hs = dir * step;

        dopri_stages(sys, t, &y, hs, &mut ws);
        stats.rhs_evals += 6;
        let err = error_norm(&y, &ws.y_new, &ws.err, ctl);

        if err.is_finite() && err <= 1.0 {
            let t_new = if hits_target { target } else { t + hs };
            std::mem::swap(&mut y, &mut ws.y_new);
            ws.k.swap(0, 6);
            t = t_new;
            stats.accepted += 1;
            if hits_target {
                next_target += 1;
            }
            let action = observe(t, &mut y, &ws.k[0])?;
            if action == StepAction::StateModified {
                sys.rhs(t, &y, &mut ws.k[0]);
                stats.rhs_evals += 1;
            }
            let e = err.max(1e-10);
            let mut fac = SAFETY * e.powf(-PI_ALPHA) * err_old.powf(PI_BETA);
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = step * fac;
            err_old = e;
            last_rejected = false;
        } else {
            stats.rejected += 1;
            let fac = if err.is_finite() {
                (SAFETY * err.powf(-0.2)).max(FAC_MIN)
            } else {
                FAC_MIN
            };
            h = step * fac;
            last_rejected = true;
        }
    }
    Ok(stats)
}

fn dopri_stages<S: OdeSystem>(sys: &S, t: f64, y: &[f64], h: f64, ws: &mut Workspace) {
    let n = y.len();
    let Workspace { k, tmp, y_new, err } = ws;

    for i in 0..n {
        tmp[i] = y[i] + h * A21 * k[0][i];
    }
    sys.rhs(t + C2 * h, tmp, &mut k[1]);
    for i in 0..n {
        tmp[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
    }
    sys.rhs(t + C3 * h, tmp, &mut k[2]);
    for i in 0..n {
        tmp[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
    }
    sys.rhs(t + C4 * h, tmp, &mut k[3]);
    for i in 0..n {
        tmp[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
    }
    sys.rhs(t + C5 * h, tmp, &mut k[4]);
    for i in 0..n {
        tmp[i] = y[i]
            + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
    }
    sys.rhs(t + h, tmp, &mut k[5]);
    for i in 0..n {
        y_new[i] = y[i]
            + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
    }
    sys.rhs(t + h, y_new, &mut k[6]);
    for i in 0..n {
        err[i] = h
            * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Harmonic;
    impl OdeSystem for Harmonic {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
    }

    struct Decay;
    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = -y[0];
        }
    }

    #[test]
    fn harmonic_period_is_accurate() {
        let tp = 2.0 * std::f64::consts::PI;
        let mut last = vec![];
        integrate(&Harmonic, 0.0, &[1.0, 0.0], tp, &[], &StepControl::default(), |_, y, _| {
            last = y.to_vec();
            Ok(StepAction::Continue)
        })
        .unwrap();
        assert!((last[0] - 1.0).abs() < 1e-9 && last[1].abs() < 1e-9);
    }

    #[test]
    fn stops_are_hit_exactly() {
        let stops = [0.3, 1.0, 1.7];
        let mut seen = vec![];
        integrate(&Decay, 0.0, &[1.0], 2.0, &stops, &StepControl::default(), |t, _, _| {
            seen.push(t);
            Ok(StepAction::Continue)
        })
        .unwrap();
        for s in stops.iter().chain(std::iter::once(&2.0)) {
            assert!(seen.contains(s), "missing stop {s}");
        }
        assert!(seen.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn backward_integration() {
        let mut last = 0.0;
        integrate(&Decay, 1.0, &[1.0], 0.0, &[], &StepControl::default(), |_, y, _| {
            last = y[0];
            Ok(StepAction::Continue)
        })
        .unwrap();
        assert!((last - std::f64::consts::E).abs() < 1e-9);
    }

    #[test]
    fn tiny_budget_reports_failure_time() {
        let ctl = StepControl {
            max_steps: 3,
            ..StepControl::default()
        };
        let res = integrate(&Harmonic, 0.0, &[1.0, 0.0], 100.0, &[], &ctl, |_, _, _| Ok(StepAction::Continue));
        match res {
            Err(Error::IntegrationFailure { t, .. }) => assert!(t > 0.0 && t < 100.0),
            other => panic!("expected integration failure, got {other:?}"),
        }
    }

    #[test]
    fn blow_up_is_reported_as_failure() {
        struct Blowup;
        impl OdeSystem for Blowup {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
                dy[0] = y[0] * y[0];
            }
        }
        // y = 1/(1 - t) is singular at t = 1
        let res = integrate(&Blowup, 0.0, &[1.0], 2.0, &[], &StepControl::default(), |_, _, _| Ok(StepAction::Continue));
        assert!(matches!(res, Err(Error::IntegrationFailure { .. })));
    }
}
