//! Full counting statistics of the excitations left by a quench.
//!
//! Starting from the ground state, only even oscillator levels m are
//! populated and p(m) = ((m−1)!!/m!!)·√(1−q)·q^{m/2} with q = |R|². Everything
//! else here (moments, the internal-energy distribution, the work split)
//! is a functional of that pmf.

use std::io::Write;

use statrs::distribution::{Binomial, Discrete};

use crate::analytic::{nb_pmf, pair_ratio, NegBinomial};
use crate::error::{domain, Error, Result};

pub const DEFAULT_TAIL_EPS: f64 = 1e-12;
pub const MAX_LEVEL: usize = 1_000_000;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub(crate) fn compensated<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = CompensatedSum::default();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

fn check_r_sq(r_sq: f64) -> Result<()> {
    if !(0.0..1.0).contains(&r_sq) {
        return domain(format!("|R|^2 must lie in [0, 1), got {r_sq}"));
    }
    Ok(())
}

/// Excitation pmf over even levels, stored by pair index k = m/2.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectDistribution {
    r_sq: f64,
    pairs: Vec<f64>,
    tail_eps: f64,
}

impl DefectDistribution {
    pub fn r_sq(&self) -> f64 {
        self.r_sq
    }

    pub fn tail_eps(&self) -> f64 {
        self.tail_eps
    }

    /// Largest stored level.
    pub fn max_level(&self) -> usize {
        2 * (self.pairs.len() - 1)
    }

    /// p(m); zero for odd m and beyond the truncation point.
    pub fn prob(&self, m: usize) -> f64 {
        if m % 2 == 1 {
            return 0.0;
        }
        self.pairs.get(m / 2).copied().unwrap_or(0.0)
    }

    /// (m, p(m)) over the stored even levels.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.pairs.iter().enumerate().map(|(k, &p)| (2 * k, p))
    }

    pub fn mass(&self) -> f64 {
        compensated(self.pairs.iter().copied())
    }

    /// CSV with columns `m,prob`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "m,prob")?;
        for (m, p) in self.iter() {
            writeln!(out, "{m},{p}")?;
        }
        Ok(())
    }
}

/// Builds the pmf by the ratio recurrence p(m+2) = p(m)·q·(m+1)/(m+2) and
/// stops once the geometric majorant p(m)·q/(1−q) of the tail is below
/// `tail_eps`.
pub fn excitation_pmf(r_sq: f64, tail_eps: f64) -> Result<DefectDistribution> {
    check_r_sq(r_sq)?;
    excitation_pmf_from_ground(r_sq, (1.0 - r_sq).sqrt(), tail_eps)
}

/// The recurrence of [`excitation_pmf`] seeded with an arbitrary p(0).
pub(crate) fn excitation_pmf_from_ground(r_sq: f64, p0: f64, tail_eps: f64) -> Result<DefectDistribution> {
    check_r_sq(r_sq)?;
    if !(tail_eps > 0.0) {
        return domain(format!("tail_eps must be positive, got {tail_eps}"));
    }
    let q = r_sq;
    let tail_factor = q / (1.0 - q);
    let mut pairs = vec![p0];
    loop {
        let k = pairs.len() - 1;
        let last = pairs[k];
        if last * tail_factor < tail_eps {
            break;
        }
        if 2 * (k + 1) > MAX_LEVEL {
            return Err(Error::Truncation {
                m_max: MAX_LEVEL,
                mass: compensated(pairs.iter().copied()),
            });
        }
        pairs.push(last * (q * pair_ratio(k as u64)));
    }
    Ok(DefectDistribution { r_sq, pairs, tail_eps })
}

/// Single value p(m) without building the table; uses log-Gamma for large m.
pub fn excitation_prob(r_sq: f64, m: usize) -> Result<f64> {
    check_r_sq(r_sq)?;
    if m % 2 == 1 {
        return Ok(0.0);
    }
    Ok(nb_pmf(&NegBinomial::with_fail_prob(f64::NAN, r_sq)?, (m / 2) as u64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSet {
    pub mean: f64,
    pub second: f64,
    pub third: f64,
    pub variance: f64,
}

pub fn moments_closed_form(r_sq: f64) -> Result<MomentSet> {
    check_r_sq(r_sq)?;
    let q = r_sq;
    let g = 1.0 - q;
    let mean = q / g;
    let second = q * (2.0 + q) / (g * g);
    let third = q * (4.0 + 10.0 * q + q * q) / (g * g * g);
    // second − mean² simplifies to 2q/(1−q)², which avoids cancellation
    let variance = 2.0 * q / (g * g);
    Ok(MomentSet { mean, second, third, variance })
}

pub fn moments_from_pmf(d: &DefectDistribution) -> MomentSet {
    let (mut s1, mut s2, mut s3) = (CompensatedSum::default(), CompensatedSum::default(), CompensatedSum::default());
    for (m, p) in d.iter() {
        let mf = m as f64;
        s1.add(mf * p);
        s2.add(mf * mf * p);
        s3.add(mf * mf * mf * p);
    }
    let (mean, second, third) = (s1.value(), s2.value(), s3.value());
    let mut var = CompensatedSum::default();
    for (m, p) in d.iter() {
        let dev = m as f64 - mean;
        var.add(dev * dev * p);
    }
    MomentSet { mean, second, third, variance: var.value() }
}

/// Mean internal energy split into the adiabatic shift and the excess.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkSplit {
    pub total: f64,
    pub w_rev: f64,
    pub w_irr: f64,
}

pub fn internal_energy_mean(omega_start: f64, omega_now: f64, nu_mean: f64) -> Result<WorkSplit> {
    if !(omega_start >= 0.0 && omega_now >= 0.0) {
        return domain("frequencies must be >= 0");
    }
    if !(nu_mean >= 0.0) {
        return domain(format!("mean excitation must be >= 0, got {nu_mean}"));
    }
    let w_rev = 0.5 * (omega_now - omega_start);
    let w_irr = omega_now * nu_mean;
    Ok(WorkSplit { total: w_rev + w_irr, w_rev, w_irr })
}

pub fn internal_energy_variance(omega_now: f64, nu_variance: f64) -> Result<f64> {
    if !(omega_now >= 0.0 && nu_variance >= 0.0) {
        return domain("frequency and variance must be >= 0");
    }
    Ok(omega_now * omega_now * nu_variance)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyAtom {
    pub delta_e: f64,
    pub prob: f64,
}

/// Distribution of ΔE = E_t − E_{t0} for a ground-state start.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDistribution {
    pub omega_start: f64,
    pub omega_now: f64,
    pub atoms: Vec<EnergyAtom>,
}

impl EnergyDistribution {
    pub fn mass(&self) -> f64 {
        compensated(self.atoms.iter().map(|a| a.prob))
    }

    pub fn mean(&self) -> f64 {
        compensated(self.atoms.iter().map(|a| a.delta_e * a.prob))
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        compensated(self.atoms.iter().map(|a| (a.delta_e - mu).powi(2) * a.prob))
    }

    /// CSV with columns `delta_e,prob`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "delta_e,prob")?;
        for a in &self.atoms {
            writeln!(out, "{},{}", a.delta_e, a.prob)?;
        }
        Ok(())
    }
}

pub fn internal_energy_distribution(
    omega_start: f64,
    omega_now: f64,
    d: &DefectDistribution,
) -> Result<EnergyDistribution> {
    if !(omega_start >= 0.0 && omega_now >= 0.0) {
        return domain("frequencies must be >= 0");
    }
    let mut atoms: Vec<EnergyAtom> = d
        .iter()
        .map(|(m, prob)| EnergyAtom {
            delta_e: omega_now * (m as f64 + 0.5) - 0.5 * omega_start,
            prob,
        })
        .collect();
    // already ascending for ω_t > 0; all atoms coincide when ω_t = 0
    atoms.sort_by(|a, b| a.delta_e.total_cmp(&b.delta_e));
    Ok(EnergyDistribution { omega_start, omega_now, atoms })
}

/// End-point-measurement distribution for initial level populations
/// `initial`. Only the ground-state start (all weight on level 0) is
/// supported.
pub fn energy_distribution_from_populations(
    initial: &[f64],
    omega_start: f64,
    omega_now: f64,
    d: &DefectDistribution,
) -> Result<EnergyDistribution> {
    let ground_only = initial.first().is_some_and(|&p| (p - 1.0).abs() <= 1e-12)
        && initial.iter().skip(1).all(|&p| p.abs() <= 1e-12);
    if !ground_only {
        return Err(Error::Unsupported(
            "only ground-state initial populations are supported".into(),
        ));
    }
    internal_energy_distribution(omega_start, omega_now, d)
}

/// Binomial pmf B(ℓ; L, q) for ℓ = 0..=L.
pub fn kzm_binomial_baseline(trials: u64, q: f64) -> Result<Vec<f64>> {
    let b = Binomial::new(q, trials).map_err(|e| Error::Domain(format!("binomial baseline: {e}")))?;
    Ok((0..=trials).map(|l| b.pmf(l)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r_sq_grid() -> Vec<f64> {
        let mut g: Vec<f64> = (0..=9).map(|i| i as f64 / 10.0).collect();
        g.push(0.95);
        g
    }

    /// p(m) from double factorials, accumulated in exact integer ratios.
    fn double_factorial_prob(q: f64, m: usize) -> f64 {
        let (mut num, mut den) = (1.0f64, 1.0f64);
        for j in (1..m).step_by(2) {
            num *= j as f64;
        }
        for j in (2..=m).step_by(2) {
            den *= j as f64;
        }
        num / den * (1.0 - q).sqrt() * q.powi((m / 2) as i32)
    }

    #[test]
    fn pmf_examples() {
        let d = excitation_pmf(0.0, DEFAULT_TAIL_EPS).unwrap();
        assert_eq!(d.iter().collect::<Vec<_>>(), vec![(0, 1.0)]);
        let d = excitation_pmf(0.25, DEFAULT_TAIL_EPS).unwrap();
        assert!((d.prob(0) - 0.75f64.sqrt()).abs() < 1e-15);
        assert!((d.prob(2) - 0.5 * 0.75f64.sqrt() * 0.25).abs() < 1e-15);
        for m in [1, 3, 5, 101] {
            assert_eq!(d.prob(m), 0.0);
        }
    }

    #[test]
    fn pmf_matches_double_factorials() {
        for q in [0.1, 0.25, 0.5, 0.9] {
            let d = excitation_pmf(q, DEFAULT_TAIL_EPS).unwrap();
            for m in (0..=d.max_level().min(60)).step_by(2) {
                let direct = double_factorial_prob(q, m);
                assert!((d.prob(m) - direct).abs() <= 1e-13 * direct.max(1e-300), "q {q} m {m}");
            }
        }
    }

    #[test]
    fn pmf_rejects_invalid_input() {
        assert!(matches!(excitation_pmf(1.0, 1e-12), Err(Error::Domain(_))));
        assert!(matches!(excitation_pmf(-0.1, 1e-12), Err(Error::Domain(_))));
        assert!(excitation_pmf(0.5, 0.0).is_err());
    }

    #[test]
    fn pmf_truncation_reports_mass() {
        // the level cap is hit long before the tail bound for q this close to 1
        match excitation_pmf(1.0 - 1e-7, 1e-12) {
            Err(Error::Truncation { m_max, mass }) => {
                assert_eq!(m_max, MAX_LEVEL);
                assert!(mass > 0.0 && mass < 1.0);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn normalization_on_grid() {
        for q in r_sq_grid() {
            let mass = excitation_pmf(q, DEFAULT_TAIL_EPS).unwrap().mass();
            assert!(mass <= 1.0 && mass >= 1.0 - 1e-12, "q {q}: mass {mass}");
        }
    }

    #[test]
    fn ratio_recurrence_is_exact() {
        let d = excitation_pmf(0.7, DEFAULT_TAIL_EPS).unwrap();
        for m in (0..d.max_level()).step_by(2) {
            let ratio = d.prob(m + 2) / d.prob(m);
            let expect = 0.7 * (m + 1) as f64 / (m + 2) as f64;
            assert!((ratio - expect).abs() <= 4.0 * f64::EPSILON * expect);
        }
    }

    #[test]
    fn direct_probability_agrees_with_table() {
        let d = excitation_pmf(0.99, DEFAULT_TAIL_EPS).unwrap();
        for m in [0, 2, 100, 600, 602, 1000] {
            let single = excitation_prob(0.99, m).unwrap();
            assert!((single - d.prob(m)).abs() <= 1e-11 * d.prob(m), "m {m}");
        }
        assert_eq!(excitation_prob(0.99, 7).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_examples() {
        let z = moments_closed_form(0.0).unwrap();
        assert_eq!((z.mean, z.second, z.third, z.variance), (0.0, 0.0, 0.0, 0.0));
        let h = moments_closed_form(0.5).unwrap();
        assert!((h.second - 5.0).abs() < 1e-14);
        assert!((h.third - 37.0).abs() < 1e-13);
        assert!((moments_closed_form(0.25).unwrap().mean - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn moments_agree_on_grid() {
        // the third moment weighs the tail by m³, so truncate much deeper
        for q in r_sq_grid() {
            let exact = moments_closed_form(q).unwrap();
            let summed = moments_from_pmf(&excitation_pmf(q, 1e-22).unwrap());
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
            assert!(rel(summed.mean, exact.mean) < 1e-10, "q {q}");
            assert!(rel(summed.second, exact.second) < 1e-10, "q {q}");
            assert!(rel(summed.third, exact.third) < 1e-10, "q {q}");
            assert!(rel(summed.variance, exact.variance) < 1e-10, "q {q}");
            assert!(exact.second >= exact.mean * exact.mean);
        }
    }

    #[test]
    fn heavy_tail_moments() {
        let exact = moments_closed_form(0.9).unwrap();
        let summed = moments_from_pmf(&excitation_pmf(0.9, DEFAULT_TAIL_EPS).unwrap());
        assert!((summed.mean - exact.mean).abs() < 1e-8 * exact.mean);
        assert!(moments_from_pmf(&excitation_pmf(0.0, 1e-12).unwrap()).mean == 0.0);
    }

    #[test]
    fn work_split_examples() {
        let w = internal_energy_mean(1.0, 1.0, 0.0).unwrap();
        assert_eq!(w.total, 0.0);
        let w = internal_energy_mean(1.0, 2.0, 1.0 / 3.0).unwrap();
        assert_eq!(w.w_rev, 0.5);
        assert!((w.w_irr - 2.0 / 3.0).abs() < 1e-15);
        assert!((w.total - 7.0 / 6.0).abs() < 1e-15);
        assert_eq!(internal_energy_mean(3.0, 0.5, 0.0).unwrap().w_irr, 0.0);
        assert!(internal_energy_mean(1.0, 1.0, -0.1).is_err());
        assert_eq!(internal_energy_variance(2.0, 1.0).unwrap(), 4.0);
        assert_eq!(internal_energy_variance(2.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn energy_distribution_examples() {
        let ground = excitation_pmf(0.0, DEFAULT_TAIL_EPS).unwrap();
        let e = internal_energy_distribution(1.0, 1.0, &ground).unwrap();
        assert_eq!(e.atoms, vec![EnergyAtom { delta_e: 0.0, prob: 1.0 }]);
        let d = excitation_pmf(0.25, DEFAULT_TAIL_EPS).unwrap();
        let e = internal_energy_distribution(1.0, 2.0, &d).unwrap();
        assert_eq!(e.atoms[0].delta_e, 0.5);
        assert_eq!(e.atoms[1].delta_e, 4.5);
        assert!((e.atoms[0].prob - 0.75f64.sqrt()).abs() < 1e-15);
        assert!(e.mass() >= 1.0 - DEFAULT_TAIL_EPS);
    }

    #[test]
    fn mixed_initial_state_rejected() {
        let d = excitation_pmf(0.25, DEFAULT_TAIL_EPS).unwrap();
        assert!(energy_distribution_from_populations(&[1.0, 0.0], 1.0, 2.0, &d).is_ok());
        assert!(matches!(
            energy_distribution_from_populations(&[0.5, 0.5], 1.0, 2.0, &d),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn energy_atoms_reproduce_work_and_variance() {
        for q in r_sq_grid() {
            let d = excitation_pmf(q, 1e-22).unwrap();
            let mom = moments_closed_form(q).unwrap();
            let (w0, wt) = (1.3, 0.7);
            let e = internal_energy_distribution(w0, wt, &d).unwrap();
            let split = internal_energy_mean(w0, wt, mom.mean).unwrap();
            assert!((e.mean() - split.total).abs() < 1e-10 * split.total.abs().max(1.0), "q {q}");
            let var = internal_energy_variance(wt, mom.variance).unwrap();
            assert!((e.variance() - var).abs() < 1e-10 * var.max(1.0), "q {q}");
        }
    }

    #[test]
    fn csv_headers() {
        let d = excitation_pmf(0.25, DEFAULT_TAIL_EPS).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("m,prob\n0,"));
        let mut buf = Vec::new();
        internal_energy_distribution(1.0, 2.0, &d).unwrap().write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("delta_e,prob\n0.5,"));
    }

    #[test]
    fn binomial_examples() {
        assert_eq!(kzm_binomial_baseline(2, 0.5).unwrap(), vec![0.25, 0.5, 0.25]);
        assert_eq!(kzm_binomial_baseline(5, 0.0).unwrap(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(kzm_binomial_baseline(3, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn binomial_mean_is_lq(l in 0u64..200, q in 0.0f64..=1.0) {
            let pmf = kzm_binomial_baseline(l, q).unwrap();
            let mean = compensated(pmf.iter().enumerate().map(|(i, p)| i as f64 * p));
            prop_assert!((mean - l as f64 * q).abs() < 1e-9 * (l as f64).max(1.0));
        }

        #[test]
        fn normalization_holds_for_random_q(q in 0.0f64..0.97) {
            let mass = excitation_pmf(q, DEFAULT_TAIL_EPS).unwrap().mass();
            prop_assert!(mass <= 1.0 && mass >= 1.0 - 1e-12);
        }

        #[test]
        fn pmf_mean_is_mean_excitation(q in 0.0f64..0.95) {
            let d = excitation_pmf(q, DEFAULT_TAIL_EPS).unwrap();
            let m = moments_from_pmf(&d).mean;
            prop_assert!((m - q / (1.0 - q)).abs() < 1e-10 * (1.0 + q / (1.0 - q)));
        }

        #[test]
        fn work_split_adds_up(w0 in 0.0f64..5.0, wt in 0.0f64..5.0, nu in 0.0f64..10.0) {
            let s = internal_energy_mean(w0, wt, nu).unwrap();
            prop_assert_eq!(s.total, s.w_rev + s.w_irr);
        }
    }
}
