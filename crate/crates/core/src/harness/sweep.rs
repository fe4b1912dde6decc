//! Sweep points, their deterministic execution and CSV emission.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::analytic::{nb_pmf, NegBinomial};
use crate::error::{domain, Error, Result};
use crate::ermakov::{self, uniform_grid};
use crate::fcs::{self, DEFAULT_TAIL_EPS};
use crate::lmg::{self, QuenchRecord};
use crate::protocol::DriveProtocol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Effective,
    Lmg,
    Analytic,
}

/// Axes of one sweep. Effective points are the product η × τ × ω_C × δ;
/// LMG points are N × (τ values ∪ N/τ ratios).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub kind: RunKind,
    pub eta: Vec<f64>,
    pub tau: Vec<f64>,
    pub omega_c: Vec<f64>,
    pub delta: Vec<f64>,
    pub n_sites: Vec<usize>,
    pub n_over_tau: Vec<f64>,
    pub output: Option<PathBuf>,
    /// Worker threads; 0 lets the pool choose.
    pub jobs: usize,
}

impl SweepSpec {
    pub fn from_config(kind: RunKind, cfg: &RunConfig) -> Self {
        let (eta, tau) = match kind {
            RunKind::Effective => (cfg.effective.eta.clone(), cfg.effective.tau.clone()),
            RunKind::Lmg => (Vec::new(), cfg.lmg.tau.clone()),
            RunKind::Analytic => (cfg.analytic.eta.clone(), Vec::new()),
        };
        Self {
            kind,
            eta,
            tau,
            omega_c: cfg.effective.floor_axis(),
            delta: cfg.effective.delta.clone(),
            n_sites: cfg.lmg.n_sites.clone(),
            n_over_tau: cfg.lmg.n_over_tau.clone(),
            output: cfg.output.path.clone(),
            jobs: cfg.output.jobs,
        }
    }

    pub fn validated(&self) -> Result<&Self> {
        let empty = |name: &str| domain(format!("sweep axis `{name}` is empty"));
        match self.kind {
            RunKind::Effective => {
                for (name, axis) in [("eta", &self.eta), ("tau", &self.tau), ("omega_c", &self.omega_c), ("delta", &self.delta)] {
                    if axis.is_empty() {
                        return empty(name);
                    }
                }
            }
            RunKind::Lmg => {
                if self.n_sites.is_empty() {
                    return empty("n_sites");
                }
                if self.tau.is_empty() && self.n_over_tau.is_empty() {
                    return empty("tau / n_over_tau");
                }
                if let Some(&n) = self.n_sites.iter().find(|&&n| n > MAX_SITES) {
                    return domain(format!("N = {n} exceeds the supported maximum {MAX_SITES}"));
                }
                if let Some(&r) = self.n_over_tau.iter().find(|&&r| !(r.is_finite() && r > 0.0)) {
                    return domain(format!("N/tau must be finite and > 0, got {r}"));
                }
            }
            RunKind::Analytic => {
                if self.eta.is_empty() {
                    return empty("eta");
                }
            }
        }
        Ok(self)
    }

    pub fn effective_points(&self, cfg: &RunConfig) -> Result<Vec<DriveProtocol>> {
        let mut out = Vec::new();
        for &eta in &self.eta {
            for &tau in &self.tau {
                for &omega_c in &self.omega_c {
                    for &delta in &self.delta {
                        let p = DriveProtocol::new(eta, tau, omega_c)?
                            .with_delta(delta)?
                            .with_floor_mode(cfg.effective.floor_mode);
                        out.push(p.validated()?);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn lmg_points(&self) -> Vec<LmgPoint> {
        let mut out = Vec::new();
        for &n_sites in &self.n_sites {
            out.extend(self.tau.iter().map(|&tau| LmgPoint { n_sites, tau }));
            out.extend(self.n_over_tau.iter().map(|&r| LmgPoint { n_sites, tau: n_sites as f64 / r }));
        }
        out
    }
}

/// Largest system size a sweep accepts.
pub const MAX_SITES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmgPoint {
    pub n_sites: usize,
    pub tau: f64,
}

/// Runs `work` over `items` on a pool of `jobs` threads and returns the
/// results in input order; the first failing item (in input order) wins.
fn ordered_parallel<T, R, F>(items: &[T], jobs: usize, work: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    let results: Vec<Result<R>> = pool.install(|| items.par_iter().map(&work).collect());
    results.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRow {
    pub eta: f64,
    pub tau: f64,
    pub omega_c: f64,
    pub t: f64,
    pub t_over_tau: f64,
    pub omega: f64,
    pub r_sq: f64,
    pub nu_mean: f64,
    pub nu_var: f64,
    pub w_rev: f64,
    pub w_irr: f64,
    pub var_delta_e: f64,
}

/// Rows on the uniform grid. Grid points where the gap closes (ω = 0) are
/// skipped: the mean excitation diverges there.
fn effective_rows(p: &DriveProtocol, cfg: &RunConfig) -> Result<Vec<EffectiveRow>> {
    let traj = ermakov::integrate(p, &cfg.effective.solver)?;
    let omega_start = p.omega_at(-p.tau)?;
    uniform_grid(p.tau, cfg.effective.samples)
        .into_iter()
        .filter(|&t| p.omega_at(t).map_or(true, |w| w > 0.0))
        .map(|t| {
            let omega = p.omega_at(t)?;
            let r_sq = traj.reflection_at(t)?;
            let m = fcs::moments_closed_form(r_sq)?;
            let work = fcs::internal_energy_mean(omega_start, omega, m.mean)?;
            Ok(EffectiveRow {
                eta: p.eta,
                tau: p.tau,
                omega_c: p.omega_c,
                t,
                t_over_tau: t / p.tau,
                omega,
                r_sq,
                nu_mean: m.mean,
                nu_var: m.variance,
                w_rev: work.w_rev,
                w_irr: work.w_irr,
                var_delta_e: fcs::internal_energy_variance(omega, m.variance)?,
            })
        })
        .collect()
}

/// One block of rows per sweep point, points in axis order.
pub fn run_effective(spec: &SweepSpec, cfg: &RunConfig) -> Result<Vec<Vec<EffectiveRow>>> {
    let points = spec.validated()?.effective_points(cfg)?;
    ordered_parallel(&points, spec.jobs, |p| effective_rows(p, cfg))
}

pub fn write_effective_csv<W: Write>(blocks: &[Vec<EffectiveRow>], mut out: W) -> Result<()> {
    writeln!(out, "eta,tau,omega_c,t,t_over_tau,omega,R_sq,nu_mean,nu_var,w_rev,w_irr,var_delta_e")?;
    for r in blocks.iter().flatten() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.eta, r.tau, r.omega_c, r.t, r.t_over_tau, r.omega, r.r_sq, r.nu_mean, r.nu_var, r.w_rev, r.w_irr, r.var_delta_e
        )?;
    }
    Ok(())
}

/// Writes the excitation (`m,prob`) and energy (`delta_e,prob`)
/// distributions at t = +τ of every point into `dir`.
pub fn write_final_distributions(blocks: &[Vec<EffectiveRow>], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (i, block) in blocks.iter().enumerate() {
        let (first, last) = match (block.first(), block.last()) {
            (Some(a), Some(b)) => (a, b),
            _ => continue,
        };
        let pmf = fcs::excitation_pmf(last.r_sq, DEFAULT_TAIL_EPS)?;
        let energy = fcs::internal_energy_distribution(first.omega, last.omega, &pmf)?;
        let pmf_path = dir.join(format!("point{i:03}_defects.csv"));
        let energy_path = dir.join(format!("point{i:03}_energy.csv"));
        pmf.write_csv(std::io::BufWriter::new(std::fs::File::create(&pmf_path)?))?;
        energy.write_csv(std::io::BufWriter::new(std::fs::File::create(&energy_path)?))?;
        written.push(pmf_path);
        written.push(energy_path);
    }
    Ok(written)
}

/// One record per point, points in axis order.
pub fn run_lmg(spec: &SweepSpec, cfg: &RunConfig) -> Result<Vec<QuenchRecord>> {
    let points = spec.validated()?.lmg_points();
    ordered_parallel(&points, spec.jobs, |p| {
        let mut rec = lmg::propagate(p.n_sites, p.tau, &cfg.lmg.propagation, cfg.lmg.samples)?;
        rec.states.clear();
        Ok(rec)
    })
}

/// Concatenated records with leading `n_sites,tau` columns.
pub fn write_lmg_csv<W: Write>(records: &[QuenchRecord], mut out: W) -> Result<()> {
    writeln!(out, "n_sites,tau,t,t_over_tau,h,defect_density,w_irr,ground_overlap")?;
    for rec in records {
        let tau = rec.tau();
        for i in 0..rec.times.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                rec.n_sites,
                tau,
                rec.times[i],
                rec.times[i] / tau,
                rec.fields[i],
                rec.defect_density[i],
                rec.w_irr[i],
                rec.ground_overlap[i]
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticRow {
    pub eta: f64,
    pub k: u64,
    pub prob: f64,
}

/// Pair-number law P(k; η) for k = 0..=k_max at each η.
pub fn analytic_table(spec: &SweepSpec, k_max: u64) -> Result<Vec<AnalyticRow>> {
    let mut rows = Vec::new();
    for &eta in &spec.validated()?.eta {
        let nb = NegBinomial::from_eta(eta)?;
        rows.extend((0..=k_max).map(|k| AnalyticRow { eta, k, prob: nb_pmf(&nb, k) }));
    }
    Ok(rows)
}

pub fn write_analytic_csv<W: Write>(rows: &[AnalyticRow], mut out: W) -> Result<()> {
    writeln!(out, "eta,k,prob")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.eta, r.k, r.prob)?;
    }
    Ok(())
}

/// Gnuplot script plotting the main observable of a dataset written to
/// `csv`. Points are separated by their parameter columns, so the script
/// filters on them instead of relying on blank-line blocks.
pub fn write_gnuplot_script<W: Write>(kind: RunKind, csv: &Path, mut out: W) -> Result<()> {
    let file = csv.display().to_string().replace('\'', "\\'");
    writeln!(out, "set datafile separator ','")?;
    writeln!(out, "set key autotitle columnhead")?;
    match kind {
        RunKind::Effective => {
            writeln!(out, "set xlabel 't/tau'\nset ylabel '<nu>'")?;
            writeln!(out, "plot '{file}' using 5:8 with points pointtype 7 pointsize 0.3")?;
        }
        RunKind::Lmg => {
            writeln!(out, "set xlabel 't/tau'\nset ylabel 'defect density'")?;
            writeln!(out, "plot '{file}' using 4:6 with points pointtype 7 pointsize 0.3")?;
        }
        RunKind::Analytic => {
            writeln!(out, "set xlabel 'k'\nset ylabel 'P(k)'\nset logscale y")?;
            writeln!(out, "plot '{file}' using 2:3 with points pointtype 7")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: RunKind, cfg: &RunConfig) -> SweepSpec {
        SweepSpec::from_config(kind, cfg)
    }

    fn small_effective() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.effective.eta = vec![1.0, 2.0];
        cfg.effective.tau = vec![5.0];
        cfg.effective.omega_c = vec![0.0, 0.1];
        cfg.effective.samples = 12;
        cfg
    }

    #[test]
    fn effective_points_follow_axis_order() {
        let cfg = small_effective();
        let pts = spec(RunKind::Effective, &cfg).effective_points(&cfg).unwrap();
        let keys: Vec<(f64, f64)> = pts.iter().map(|p| (p.eta, p.omega_c)).collect();
        assert_eq!(keys, vec![(1.0, 0.0), (1.0, 0.1), (2.0, 0.0), (2.0, 0.1)]);
    }

    #[test]
    fn empty_axis_is_rejected() {
        let mut cfg = small_effective();
        cfg.effective.tau.clear();
        assert!(matches!(run_effective(&spec(RunKind::Effective, &cfg), &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn effective_rows_are_consistent() {
        let cfg = small_effective();
        let blocks = run_effective(&spec(RunKind::Effective, &cfg), &cfg).unwrap();
        assert_eq!(blocks.len(), 4);
        for block in &blocks {
            assert_eq!(block.len(), 12);
            let first = block[0];
            assert_eq!(first.t, -first.tau);
            assert_eq!(block[11].t, first.tau);
            for r in block {
                assert!((r.w_irr - r.omega * r.nu_mean).abs() <= 1e-15 * r.w_irr.abs().max(1.0));
                assert!((r.var_delta_e - r.omega * r.omega * r.nu_var).abs() <= 1e-15 * r.var_delta_e.max(1.0));
                assert!((r.w_rev - 0.5 * (r.omega - first.omega)).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn gap_closure_rows_are_skipped() {
        let mut cfg = small_effective();
        cfg.effective.samples = 11;
        let blocks = run_effective(&spec(RunKind::Effective, &cfg), &cfg).unwrap();
        let lens: Vec<usize> = blocks.iter().map(|b| b.len()).collect();
        assert_eq!(lens, vec![10, 11, 10, 11]);
        assert!(blocks[0].iter().all(|r| r.t != 0.0));
    }

    #[test]
    fn thread_count_does_not_change_bytes() {
        let mut cfg = small_effective();
        let mut csv = Vec::new();
        for jobs in [1, 3] {
            cfg.output.jobs = jobs;
            let blocks = run_effective(&spec(RunKind::Effective, &cfg), &cfg).unwrap();
            let mut buf = Vec::new();
            write_effective_csv(&blocks, &mut buf).unwrap();
            csv.push(buf);
        }
        assert_eq!(csv[0], csv[1]);
    }

    #[test]
    fn pre_crossing_work_vanishes_with_floor() {
        let mut cfg = RunConfig::default();
        cfg.effective.tau = vec![25.0, 50.0];
        cfg.effective.omega_c = vec![0.05, 0.5];
        cfg.effective.samples = 101;
        let blocks = run_effective(&spec(RunKind::Effective, &cfg), &cfg).unwrap();
        for r in blocks.iter().flatten().filter(|r| r.t < 0.0) {
            assert!(r.w_irr.abs() <= 1e-8, "w_irr = {} at t = {} (tau {}, omega_c {})", r.w_irr, r.t, r.tau, r.omega_c);
        }
    }

    #[test]
    fn lmg_points_mix_tau_and_ratios() {
        let mut cfg = RunConfig::default();
        cfg.lmg.n_sites = vec![512, 2048];
        cfg.lmg.n_over_tau = vec![10.0, 30.0, 100.0];
        let pts = spec(RunKind::Lmg, &cfg).lmg_points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[4], LmgPoint { n_sites: 2048, tau: 2048.0 / 30.0 });
    }

    #[test]
    fn oversized_lmg_point_is_rejected() {
        let mut cfg = RunConfig::default();
        cfg.lmg.n_sites = vec![MAX_SITES + 1];
        assert!(matches!(run_lmg(&spec(RunKind::Lmg, &cfg), &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn lmg_records_end_at_tau_and_rerun_identically() {
        let mut cfg = RunConfig::default();
        cfg.lmg.n_sites = vec![16, 24];
        cfg.lmg.n_over_tau = vec![4.0];
        cfg.lmg.samples = 9;
        cfg.output.jobs = 2;
        let s = spec(RunKind::Lmg, &cfg);
        let run = || {
            let recs = run_lmg(&s, &cfg).unwrap();
            let mut buf = Vec::new();
            write_lmg_csv(&recs, &mut buf).unwrap();
            (recs, buf)
        };
        let (recs, a) = run();
        let (_, b) = run();
        assert_eq!(a, b);
        for r in &recs {
            assert_eq!(*r.times.last().unwrap(), r.tau());
            assert!(r.final_defect_density() >= 0.0);
        }
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 9);
    }

    #[test]
    fn analytic_table_rows() {
        let cfg = RunConfig::default();
        let rows = analytic_table(&spec(RunKind::Analytic, &cfg), 20).unwrap();
        assert_eq!(rows.len(), 3 * 21);
        // η = 1: |R|² = 1/4 and P(0) = √(1 − 1/4)
        assert!((rows[0].prob - 0.75f64.sqrt()).abs() < 1e-15);
        for eta in [1.0, 10.0, 100.0] {
            let total: f64 = rows.iter().filter(|r| r.eta == eta).map(|r| r.prob).sum();
            assert!(total <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn distributions_written_per_point() {
        let cfg = small_effective();
        let blocks = run_effective(&spec(RunKind::Effective, &cfg), &cfg).unwrap();
        let dir = std::env::temp_dir().join(format!("defect-fcs-dist-{}", std::process::id()));
        let files = write_final_distributions(&blocks, &dir).unwrap();
        assert_eq!(files.len(), 8);
        let head = std::fs::read_to_string(&files[0]).unwrap();
        assert!(head.starts_with("m,prob\n0,"));
        let head = std::fs::read_to_string(&files[1]).unwrap();
        assert!(head.starts_with("delta_e,prob\n"));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
