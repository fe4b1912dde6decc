//! Data-collapse metrics for families of defect-density curves.
//!
//! Curves are grouped by N/τ. Within a group every curve is mapped onto a
//! rescaled time s = (t/τ)·N^a·τ^b and value v·N^c·τ^d, interpolated onto a
//! common grid covering the overlap of their ranges, and compared there.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::lmg::QuenchRecord;

/// One curve with its system size and sweep time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub n_sites: usize,
    pub tau: f64,
    pub t_over_tau: Vec<f64>,
    pub values: Vec<f64>,
}

impl Curve {
    pub fn from_record(rec: &QuenchRecord) -> Self {
        let tau = rec.tau();
        Self {
            n_sites: rec.n_sites,
            tau,
            t_over_tau: rec.times.iter().map(|t| t / tau).collect(),
            values: rec.defect_density.clone(),
        }
    }

    pub fn n_over_tau(&self) -> f64 {
        self.n_sites as f64 / self.tau
    }

    fn final_value(&self) -> Result<f64> {
        self.values.last().copied().ok_or_else(|| Error::Domain("curve has no samples".into()))
    }
}

/// Exponents (a, b) of the time axis and (c, d) of the value axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RescaleExponents {
    pub time_n: f64,
    pub time_tau: f64,
    pub value_n: f64,
    pub value_tau: f64,
}

impl RescaleExponents {
    fn apply(&self, c: &Curve) -> (Vec<f64>, Vec<f64>) {
        let n = c.n_sites as f64;
        let ts = n.powf(self.time_n) * c.tau.powf(self.time_tau);
        let vs = n.powf(self.value_n) * c.tau.powf(self.value_tau);
        (
            c.t_over_tau.iter().map(|x| x * ts).collect(),
            c.values.iter().map(|v| v * vs).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    /// N/τ shared by the group.
    pub n_over_tau: f64,
    pub curves: usize,
    /// (max − min)/mean of the final values.
    pub final_spread: f64,
    /// sup over the common grid of (max − min) across curves, divided by the
    /// largest |value| on the grid.
    pub curve_deviation: f64,
    pub final_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub exponents: RescaleExponents,
    pub groups: Vec<GroupReport>,
    /// (max − min)/mean of the per-group mean final values.
    pub between_groups_spread: f64,
}

impl CollapseReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report fields are plain data")
    }
}

fn relative_spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if max == min {
        0.0
    } else {
        (max - min) / mean.abs()
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let (x0, x1) = (xs[i - 1], xs[i]);
    if x1 == x0 {
        return ys[i];
    }
    let w = (x - x0) / (x1 - x0);
    ys[i - 1] + w * (ys[i] - ys[i - 1])
}

/// Normalized sup-norm spread of curves given as (abscissa, ordinate)
/// pairs, on `grid` points spanning the overlap of their abscissae.
pub fn curve_deviation(curves: &[(&[f64], &[f64])], grid: usize) -> Result<f64> {
    if curves.len() < 2 {
        return domain("need at least two curves");
    }
    if grid < 2 {
        return domain("comparison grid needs at least two points");
    }
    for (xs, ys) in curves {
        if xs.len() < 2 || xs.len() != ys.len() {
            return domain("curve needs at least two samples and matching lengths");
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("curve abscissae must be strictly increasing");
        }
    }
    let lo = curves.iter().map(|(x, _)| x[0]).fold(f64::NEG_INFINITY, f64::max);
    let hi = curves.iter().map(|(x, _)| x[x.len() - 1]).fold(f64::INFINITY, f64::min);
    if !(hi > lo) {
        return domain(format!("curves do not overlap (common range [{lo}, {hi}])"));
    }
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for k in 0..grid {
        let s = if k == grid - 1 { hi } else { lo + (hi - lo) * k as f64 / (grid - 1) as f64 };
        let vals: Vec<f64> = curves.iter().map(|(x, y)| interpolate(x, y, s)).collect();
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        worst = worst.max(max - min);
        scale = vals.iter().fold(scale, |a, v| a.max(v.abs()));
    }
    Ok(if worst == 0.0 { 0.0 } else { worst / scale })
}

/// Groups curves by N/τ (relative tolerance 1e-9) and reports per-group
/// deviations. Every group needs at least two curves.
pub fn collapse(curves: &[Curve], exponents: RescaleExponents, grid: usize) -> Result<CollapseReport> {
    if curves.is_empty() {
        return domain("no curves to collapse");
    }
    let mut order: Vec<&Curve> = curves.iter().collect();
    order.sort_by(|a, b| a.n_over_tau().total_cmp(&b.n_over_tau()));
    let mut groups: Vec<Vec<&Curve>> = Vec::new();
    for c in order {
        match groups.last_mut() {
            Some(g) if (g[0].n_over_tau() - c.n_over_tau()).abs() <= 1e-9 * c.n_over_tau().abs() => g.push(c),
            _ => groups.push(vec![c]),
        }
    }
    let mut reports = Vec::with_capacity(groups.len());
    for g in &groups {
        if g.len() < 2 {
            return domain(format!("group N/tau = {} has a single curve", g[0].n_over_tau()));
        }
        let scaled: Vec<(Vec<f64>, Vec<f64>)> = g.iter().map(|c| exponents.apply(c)).collect();
        let views: Vec<(&[f64], &[f64])> = scaled.iter().map(|(x, y)| (x.as_slice(), y.as_slice())).collect();
        let finals = g.iter().map(|c| c.final_value()).collect::<Result<Vec<f64>>>()?;
        reports.push(GroupReport {
            n_over_tau: g[0].n_over_tau(),
            curves: g.len(),
            final_spread: relative_spread(&finals),
            curve_deviation: curve_deviation(&views, grid)?,
            final_mean: finals.iter().sum::<f64>() / finals.len() as f64,
        });
    }
    let means: Vec<f64> = reports.iter().map(|r| r.final_mean).collect();
    Ok(CollapseReport {
        exponents,
        between_groups_spread: relative_spread(&means),
        groups: reports,
    })
}

#[derive(Debug, Deserialize)]
struct LmgCsvRow {
    n_sites: usize,
    tau: f64,
    t_over_tau: f64,
    defect_density: f64,
}

/// Reads curves from an LMG run CSV (`n_sites,tau,...` columns). Rows of
/// one curve are consecutive.
pub fn read_lmg_curves<R: Read>(input: R) -> Result<Vec<Curve>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut curves: Vec<Curve> = Vec::new();
    for row in reader.deserialize::<LmgCsvRow>() {
        let row = row.map_err(|e| Error::Config(format!("bad LMG dataset row: {e}")))?;
        match curves.last_mut() {
            Some(c) if c.n_sites == row.n_sites && c.tau == row.tau && row.t_over_tau > c.t_over_tau[c.t_over_tau.len() - 1] => {
                c.t_over_tau.push(row.t_over_tau);
                c.values.push(row.defect_density);
            }
            _ => curves.push(Curve {
                n_sites: row.n_sites,
                tau: row.tau,
                t_over_tau: vec![row.t_over_tau],
                values: vec![row.defect_density],
            }),
        }
    }
    // keep the curve set independent of file order
    let mut keyed: BTreeMap<(usize, u64), Curve> = BTreeMap::new();
    for c in curves {
        let key = (c.n_sites, c.tau.to_bits());
        if keyed.insert(key, c).is_some() {
            return domain("dataset lists the same (N, tau) curve twice");
        }
    }
    Ok(keyed.into_values().collect())
}
