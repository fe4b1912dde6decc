//! Release-gate checks. Each check returns a [`CriterionReport`] with the
//! measured value next to the threshold it is held to; failures are report
//! entries, not errors.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analytic::{nb_moments, nb_pmf, xi_critical, Branch, NegBinomial};
use crate::error::Result;
use crate::ermakov::{self, integrate_until, SolverConfig};
use crate::fcs::{self, DefectDistribution, DEFAULT_TAIL_EPS};
use crate::lmg::{self, FieldSchedule, LmgConfig, QuenchRecord};
use crate::protocol::DriveProtocol;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u32,
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    /// Human-readable requirement, e.g. "<= 1e-10".
    pub required: String,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report fields are plain data")
    }

    /// One line: `[PASS] 7 moment-identities measured=... required=...`.
    pub fn summary_line(&self) -> String {
        format!(
            "[{}] {:>2} {} measured={:e} required {} ({:.2}s) {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.required,
            self.seconds,
            self.detail
        )
    }
}

struct Outcome {
    pass: bool,
    measured: f64,
    required: String,
    detail: String,
}

fn run(id: u32, name: &str, check: impl FnOnce() -> Result<Outcome>) -> CriterionReport {
    let start = Instant::now();
    let outcome = check().unwrap_or_else(|e| Outcome {
        pass: false,
        measured: f64::NAN,
        required: "check completes".into(),
        detail: format!("error: {e}"),
    });
    CriterionReport {
        id,
        name: name.into(),
        pass: outcome.pass,
        measured: outcome.measured,
        required: outcome.required,
        detail: outcome.detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// (max − min)/mean.
fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    (max - min) / (values.iter().sum::<f64>() / values.len() as f64)
}

fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

fn fmt_list(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.6e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// |R|² ∈ {0, 0.1, …, 0.9, 0.95}.
pub fn reflection_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (0..=9).map(|i| i as f64 / 10.0).collect();
    g.push(0.95);
    g
}

fn final_mean_excitation(p: &DriveProtocol) -> Result<f64> {
    let traj = ermakov::integrate(p, &SolverConfig::default())?;
    Ok(fcs::moments_closed_form(traj.final_reflection()?)?.mean)
}

fn final_w_irr(p: &DriveProtocol) -> Result<f64> {
    let traj = ermakov::integrate(p, &SolverConfig::default())?;
    let m = fcs::moments_closed_form(traj.final_reflection()?)?;
    Ok(fcs::internal_energy_mean(p.omega_at(-p.tau)?, p.omega_at(p.tau)?, m.mean)?.w_irr)
}

/// Total probability of each distribution produced by `pmf` on the grid.
pub fn normalization_check(pmf: impl Fn(f64) -> Result<DefectDistribution>) -> CriterionReport {
    run(1, "normalization", || {
        let masses = reflection_grid().into_iter().map(&pmf).map(|d| d.map(|d| d.mass())).collect::<Result<Vec<f64>>>()?;
        let worst = masses.iter().map(|m| if *m > 1.0 { m - 1.0 } else { 1.0 - m }).fold(0.0, f64::max);
        let pass = masses.iter().all(|&m| (1.0 - 1e-12..=1.0).contains(&m));
        Ok(Outcome {
            pass,
            measured: worst,
            required: "every mass in [1 - 1e-12, 1]".into(),
            detail: format!("1 - mass {}", fmt_list(&masses.iter().map(|m| 1.0 - m).collect::<Vec<_>>())),
        })
    })
}

pub fn criterion_01_normalization() -> CriterionReport {
    normalization_check(|q| fcs::excitation_pmf(q, DEFAULT_TAIL_EPS))
}

pub fn criterion_02_ermakov_vs_bessel() -> CriterionReport {
    run(2, "ermakov-vs-bessel", || {
        let mut worst_before: f64 = 0.0;
        let mut worst_after: f64 = 0.0;
        // long lead-in so the adiabatic start approximates t → −∞
        for (eta, lead) in [(1.0, 200.0), (2.0, 50.0)] {
            let p = DriveProtocol::critical_power_law(eta, lead)?;
            let traj = integrate_until(&p, &SolverConfig::default(), 5.0)?;
            for i in 0..=200 {
                let a = 0.05 + (5.0 - 0.05) * i as f64 / 200.0;
                for (t, branch) in [(-a, Branch::BeforeCrossing), (a, Branch::AfterCrossing)] {
                    let exact = xi_critical(eta, t, branch)?;
                    let ode = traj.state_at(t)?.xi.powi(2);
                    let rel = (ode / exact - 1.0).abs();
                    match branch {
                        Branch::BeforeCrossing => worst_before = worst_before.max(rel),
                        Branch::AfterCrossing => worst_after = worst_after.max(rel),
                    }
                }
            }
        }
        Ok(Outcome {
            pass: worst_before <= 1e-4 && worst_after <= 1e-3,
            measured: (worst_before / 1e-4).max(worst_after / 1e-3),
            required: "fraction of tolerance <= 1 (before crossing 1e-4, after 1e-3, relative in xi^2)".into(),
            detail: format!("before {worst_before:.3e}, after {worst_after:.3e}"),
        })
    })
}

pub fn criterion_03_universal_plateau() -> CriterionReport {
    run(3, "universal-plateau", || {
        let nus = [25.0, 50.0, 100.0]
            .iter()
            .map(|&tau| final_mean_excitation(&DriveProtocol::new(1.0, tau, 0.0)?))
            .collect::<Result<Vec<f64>>>()?;
        let target = 1.0 / 3.0;
        let tau_spread = spread(&nus);
        let off = nus.iter().map(|n| (n / target - 1.0).abs()).fold(0.0, f64::max);
        Ok(Outcome {
            pass: tau_spread <= 0.02 && off <= 0.05,
            measured: off,
            required: "tau spread <= 2% and |nu/(1/3) - 1| <= 5%".into(),
            detail: format!("final nu for tau 25/50/100 = {}, tau spread {tau_spread:.3e}", fmt_list(&nus)),
        })
    })
}

pub fn criterion_04_adiabatic_restoration() -> CriterionReport {
    run(4, "adiabatic-restoration", || {
        let w = [10.0, 25.0, 50.0, 100.0]
            .iter()
            .map(|&tau| final_w_irr(&DriveProtocol::new(1.0, tau, 0.1)?))
            .collect::<Result<Vec<f64>>>()?;
        let worst_ratio = w.windows(2).map(|p| p[1] / p[0]).fold(f64::NEG_INFINITY, f64::max);
        Ok(Outcome {
            pass: strictly_decreasing(&w),
            measured: worst_ratio,
            required: "final w_irr strictly decreasing in tau (ratio < 1)".into(),
            detail: format!("w_irr for tau 10/25/50/100 = {}", fmt_list(&w)),
        })
    })
}

pub fn criterion_05_critical_irreversibility() -> CriterionReport {
    run(5, "critical-irreversibility", || {
        let mut ratios = Vec::new();
        for tau in [25.0, 50.0, 100.0] {
            let p = DriveProtocol::new(1.0, tau, 0.0)?;
            ratios.push(final_w_irr(&p)? / p.omega_at(tau)?);
        }
        let s = spread(&ratios);
        Ok(Outcome {
            pass: s < 0.05,
            measured: s,
            required: "spread of final w_irr/omega < 5%".into(),
            detail: format!("w_irr/omega for tau 25/50/100 = {}", fmt_list(&ratios)),
        })
    })
}

/// Effective-model ⟨ν⟩ at the given t/τ values for η = 1, δ = 1 and
/// floor ω_C = c·N^(−1/3).
pub fn effective_defect_curve(n_sites: usize, tau: f64, coeff: f64, t_over_tau: &[f64]) -> Result<Vec<f64>> {
    let p = DriveProtocol::new(1.0, tau, coeff * (n_sites as f64).powf(-1.0 / 3.0))?;
    let traj = ermakov::integrate(&p, &SolverConfig::default())?;
    t_over_tau
        .iter()
        .map(|&s| Ok(fcs::moments_closed_form(traj.reflection_at((s * tau).clamp(-tau, tau))?)?.mean))
        .collect()
}

/// sup |ν_eff − ν_exact| / sup |ν_exact| on the exact record's sample grid.
pub fn relative_sup_deviation(exact: &QuenchRecord, coeff: f64) -> Result<f64> {
    let tau = exact.tau();
    let grid: Vec<f64> = exact.times.iter().map(|t| t / tau).collect();
    let eff = effective_defect_curve(exact.n_sites, tau, coeff, &grid)?;
    let scale = exact.defect_density.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let worst = eff.iter().zip(&exact.defect_density).fold(0.0f64, |a, (e, x)| a.max((e - x).abs()));
    Ok(worst / scale)
}

/// Floor coefficient minimizing the worst relative sup deviation against
/// `records`: log-spaced scan over [0.05, 20], then golden-section
/// refinement around the best scan point.
pub fn calibrate_floor_coeff(records: &[QuenchRecord]) -> Result<(f64, f64)> {
    let objective = |c: f64| -> Result<f64> {
        records.iter().map(|r| relative_sup_deviation(r, c)).try_fold(0.0f64, |a, d| Ok(a.max(d?)))
    };
    let scan: Vec<f64> = (0..=48).map(|i| 0.05 * 400f64.powf(i as f64 / 48.0)).collect();
    let values = scan.iter().map(|&c| objective(c)).collect::<Result<Vec<f64>>>()?;
    let best = (0..scan.len()).min_by(|&a, &b| values[a].total_cmp(&values[b])).expect("scan is non-empty");
    let (mut lo, mut hi) = (scan[best.saturating_sub(1)].ln(), scan[(best + 1).min(scan.len() - 1)].ln());
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (objective(x1.exp())?, objective(x2.exp())?);
    for _ in 0..30 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = objective(x1.exp())?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = objective(x2.exp())?;
        }
    }
    let (c, f) = if f1 <= f2 { (x1.exp(), f1) } else { (x2.exp(), f2) };
    Ok(if values[best] < f { (scan[best], values[best]) } else { (c, f) })
}

/// Exact LMG records for (N, N/τ) pairs, computed in parallel.
fn lmg_records(points: &[(usize, f64)], samples: usize) -> Result<Vec<QuenchRecord>> {
    use rayon::prelude::*;
    let out: Vec<Result<QuenchRecord>> = points
        .par_iter()
        .map(|&(n, ratio)| lmg::propagate(n, n as f64 / ratio, &LmgConfig::default(), samples))
        .collect();
    out.into_iter().collect()
}

pub fn criterion_06_effective_vs_exact() -> CriterionReport {
    run(6, "effective-vs-exact", || {
        let ratios = [10.0, 30.0];
        let points: Vec<(usize, f64)> = [512, 2048].iter().flat_map(|&n| ratios.map(|r| (n, r))).collect();
        let records = lmg_records(&points, 101)?;
        let (calib, check) = records.split_at(2);
        let (coeff, calib_dev) = calibrate_floor_coeff(calib)?;
        let devs = check.iter().map(|r| relative_sup_deviation(r, coeff)).collect::<Result<Vec<f64>>>()?;
        let worst = devs.iter().copied().fold(0.0, f64::max);
        let finals: Vec<f64> = records.iter().map(|r| r.final_defect_density()).collect();
        let eff_finals = check
            .iter()
            .map(|r| Ok(*effective_defect_curve(r.n_sites, r.tau(), coeff, &[1.0])?.last().expect("one point")))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Outcome {
            pass: worst <= 0.15,
            measured: worst,
            required: "sup |nu_eff - nu_exact| / sup nu_exact <= 15% for N=2048 at N/tau 10, 30".into(),
            detail: format!(
                "calibrated c = {coeff:.4} (N=512 deviation {calib_dev:.3}); N=2048 deviations {}; \
                 exact final nu (512@10, 512@30, 2048@10, 2048@30) = {}; effective final nu (2048@10, 2048@30) = {}",
                fmt_list(&devs),
                fmt_list(&finals),
                fmt_list(&eff_finals)
            ),
        })
    })
}

pub fn criterion_07_moment_identities() -> CriterionReport {
    run(7, "moment-identities", || {
        let mut worst: f64 = 0.0;
        for q in reflection_grid() {
            let closed = fcs::moments_closed_form(q)?;
            // the third moment weights the tail by m³, so the sum is cut
            // far below the default tail bound
            let summed = fcs::moments_from_pmf(&fcs::excitation_pmf(q, 1e-22)?);
            for (a, b) in [(closed.mean, summed.mean), (closed.second, summed.second), (closed.third, summed.third)] {
                worst = worst.max((a - b).abs() / a.abs().max(1.0));
            }
        }
        Ok(Outcome {
            pass: worst <= 1e-10,
            measured: worst,
            required: "<= 1e-10 (relative, absolute below 1)".into(),
            detail: "first three raw moments over the reflection grid".into(),
        })
    })
}

pub fn criterion_08_negative_binomial() -> CriterionReport {
    run(8, "negative-binomial", || {
        let mut pmf_gap: f64 = 0.0;
        let mut mean_gap: f64 = 0.0;
        for eta in [0.5, 1.0, 2.0, 5.0] {
            let nb = NegBinomial::from_eta(eta)?;
            let d = fcs::excitation_pmf(nb.fail_prob, DEFAULT_TAIL_EPS)?;
            for k in 0..=50u64 {
                let direct = fcs::excitation_prob(nb.fail_prob, 2 * k as usize)?;
                let from_table = d.prob(2 * k as usize);
                let p = nb_pmf(&nb, k);
                pmf_gap = pmf_gap.max((p - direct).abs()).max((p - from_table).abs());
            }
            let mean = fcs::moments_closed_form(nb.fail_prob)?.mean;
            mean_gap = mean_gap.max((2.0 * nb_moments(&nb).mean - mean).abs());
        }
        Ok(Outcome {
            pass: pmf_gap <= 1e-12 && mean_gap <= 1e-12,
            measured: pmf_gap.max(mean_gap),
            required: "pmf and mean gaps <= 1e-12".into(),
            detail: format!("pmf gap {pmf_gap:.3e}, mean gap {mean_gap:.3e}"),
        })
    })
}

pub fn criterion_09_variance_ordering() -> CriterionReport {
    run(9, "variance-ordering", || {
        let tau = 25.0;
        let floors = [0.0, 0.05, 0.5];
        let mut table = Vec::new();
        for &omega_c in &floors {
            let p = DriveProtocol::new(1.0, tau, omega_c)?;
            let traj = ermakov::integrate(&p, &SolverConfig::default())?;
            let mut row = Vec::new();
            for s in [0.5, 1.0] {
                let t = s * tau;
                let m = fcs::moments_closed_form(traj.reflection_at(t)?)?;
                row.push(fcs::internal_energy_variance(p.omega_at(t)?, m.variance)?);
            }
            table.push(row);
        }
        let at = |k: usize| table.iter().map(|r| r[k]).collect::<Vec<f64>>();
        let (half, end) = (at(0), at(1));
        let worst_ratio = [&half, &end]
            .iter()
            .flat_map(|v| v.windows(2).map(|p| p[1] / p[0]).collect::<Vec<_>>())
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Outcome {
            pass: strictly_decreasing(&half) && strictly_decreasing(&end),
            measured: worst_ratio,
            required: "Var(dE) strictly decreasing in omega_c at t/tau = 0.5 and 1 (ratio < 1)".into(),
            detail: format!("omega_c 0/0.05/0.5: t/tau=0.5 {}, t/tau=1 {}", fmt_list(&half), fmt_list(&end)),
        })
    })
}

pub fn criterion_10_small_n_oracle() -> CriterionReport {
    run(10, "small-n-oracle", || {
        let cfg = LmgConfig { rel_tol: 1e-13, abs_tol: 1e-15, ..LmgConfig::default() };
        let sched = FieldSchedule::crossing(10.0)?;
        let rec = lmg::propagate_schedule(2, &sched, &cfg, 41)?;
        let ora = lmg::small_n_oracle(2, &sched, &cfg, 41)?;
        let mut worst: f64 = 0.0;
        for (s, o) in rec.states.iter().zip(&ora.sector_amplitudes) {
            for (a, b) in s.amplitudes.iter().zip(o) {
                worst = worst.max((a - b).norm());
            }
        }
        Ok(Outcome {
            pass: worst <= 1e-10,
            measured: worst,
            required: "max amplitude gap <= 1e-10".into(),
            detail: format!("{} samples, tau = 10", rec.states.len()),
        })
    })
}

pub fn criterion_11_hp_gap() -> CriterionReport {
    run(11, "hp-gap", || {
        let target = lmg::hp_reference(2.0)?.omega;
        let mut devs = Vec::new();
        for n in [256, 1024, 4096] {
            let h = lmg::build_hamiltonian(n, 2.0)?;
            let spec = lmg::instantaneous_spectrum(&h, 2)?;
            devs.push(((spec[1].energy - spec[0].energy) / target - 1.0).abs());
        }
        let last = devs[2];
        Ok(Outcome {
            pass: last <= 0.01 && strictly_decreasing(&devs),
            measured: last,
            required: "N=4096 gap within 1% of 2*sqrt(2), deviation decreasing over N = 256, 1024, 4096".into(),
            detail: format!("relative deviations {}", fmt_list(&devs)),
        })
    })
}

/// Every check in id order.
pub fn all_criteria() -> Vec<fn() -> CriterionReport> {
    vec![
        criterion_01_normalization,
        criterion_02_ermakov_vs_bessel,
        criterion_03_universal_plateau,
        criterion_04_adiabatic_restoration,
        criterion_05_critical_irreversibility,
        criterion_06_effective_vs_exact,
        criterion_07_moment_identities,
        criterion_08_negative_binomial,
        criterion_09_variance_ordering,
        criterion_10_small_n_oracle,
        criterion_11_hp_gap,
    ]
}

/// Runs the suite, calling `sink` as each report completes.
pub fn validate(mut sink: impl FnMut(&CriterionReport)) -> Vec<CriterionReport> {
    all_criteria()
        .into_iter()
        .map(|check| {
            let r = check();
            sink(&r);
            r
        })
        .collect()
}
