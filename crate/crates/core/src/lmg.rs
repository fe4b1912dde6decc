//! Exact finite-N dynamics of the Lipkin-Meshkov-Glick model in its
//! maximal-spin sector.
//!
//! H = −(2/N) J_x² − 2h J_z with J = N/2, written in the J_z eigenbasis
//! |m⟩, basis index i = m + J ∈ 0..=N. J_x² only couples m ↔ m±2, so the
//! matrix splits into two tridiagonal blocks of fixed index parity. The
//! dynamics stays in the block that contains the fully polarized state
//! m = +J (the paramagnetic ground state), and instantaneous levels are
//! indexed in the merged spectrum of both blocks, with exact ties between
//! parity partners resolved in favour of that block.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fcs::CompensatedSum;
use crate::ode::{self, OdeSystem, StepAction, StepControl};
use crate::tridiag::{fix_sign, EigenPair, SymTridiag};

/// Maximal-spin sector of N spins: dimension N+1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpinSector {
    pub n_sites: usize,
    pub dim: usize,
}

impl SpinSector {
    pub fn new(n_sites: usize) -> Result<Self> {
        if n_sites < 2 {
            return domain(format!("need at least 2 sites, got {n_sites}"));
        }
        Ok(Self { n_sites, dim: n_sites + 1 })
    }

    /// J_z eigenvalue of basis index i.
    pub fn m_z(&self, i: usize) -> f64 {
        i as f64 - 0.5 * self.n_sites as f64
    }

    /// Index parity of the block containing m = +J.
    pub fn polarized_parity(&self) -> usize {
        self.n_sites % 2
    }
}

/// Pentadiagonal Hamiltonian with a vanishing first off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedHamiltonian {
    pub sector: SpinSector,
    pub h_field: f64,
    pub diag: Vec<f64>,
    /// Coupling between basis indices i and i+2.
    pub offdiag2: Vec<f64>,
}

fn interaction_diag(sector: &SpinSector, i: usize) -> f64 {
    let n = sector.n_sites as f64;
    let j = 0.5 * n;
    let m = sector.m_z(i);
    -(j * (j + 1.0) - m * m) / n
}

fn interaction_off(sector: &SpinSector, i: usize) -> f64 {
    let n = sector.n_sites;
    let (i, nf) = (i as f64, n as f64);
    -((nf - i) * (i + 1.0) * (nf - i - 1.0) * (i + 2.0)).sqrt() / (2.0 * nf)
}

pub fn build_hamiltonian(n_sites: usize, h: f64) -> Result<BandedHamiltonian> {
    let sector = SpinSector::new(n_sites)?;
    if !h.is_finite() {
        return domain(format!("field h = {h} is not finite"));
    }
    let diag = (0..sector.dim)
        .map(|i| interaction_diag(&sector, i) - 2.0 * h * sector.m_z(i))
        .collect();
    let offdiag2 = (0..sector.dim - 2).map(|i| interaction_off(&sector, i)).collect();
    Ok(BandedHamiltonian { sector, h_field: h, diag, offdiag2 })
}

impl BandedHamiltonian {
    pub fn dim(&self) -> usize {
        self.sector.dim
    }

    /// Basis indices of the parity block `parity`.
    fn block_indices(&self, parity: usize) -> impl Iterator<Item = usize> {
        (parity..self.dim()).step_by(2)
    }

    pub fn block(&self, parity: usize) -> SymTridiag {
        let idx: Vec<usize> = self.block_indices(parity).collect();
        let diag = idx.iter().map(|&i| self.diag[i]).collect();
        let off = idx.windows(2).map(|w| self.offdiag2[w[0]]).collect();
        SymTridiag { diag, off }
    }

    fn embed(&self, parity: usize, block_vec: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.dim()];
        for (k, i) in self.block_indices(parity).enumerate() {
            full[i] = block_vec[k];
        }
        full
    }

    /// ⟨ψ|H|ψ⟩ for a sector state.
    pub fn expectation(&self, psi: &[Complex64]) -> f64 {
        let mut acc = CompensatedSum::default();
        for (d, a) in self.diag.iter().zip(psi) {
            acc.add(d * a.norm_sqr());
        }
        for (i, c) in self.offdiag2.iter().enumerate() {
            acc.add(2.0 * c * (psi[i].conj() * psi[i + 2]).re);
        }
        acc.value()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i >= 2 {
                acc += self.offdiag2[i - 2] * x[i - 2];
            }
            if i + 2 < n {
                acc += self.offdiag2[i] * x[i + 2];
            }
            y[i] = acc;
        }
    }

    fn tie_tolerance(&self) -> f64 {
        let (lo, hi) = self.block(0).gershgorin();
        1e-10 * lo.abs().max(hi.abs()).max(1.0)
    }
}

/// Normalized sector state at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSectorState {
    pub amplitudes: Vec<Complex64>,
    pub time: f64,
}

impl SpinSectorState {
    pub fn from_real(v: &[f64], time: f64) -> Self {
        Self {
            amplitudes: v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            time,
        }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// |⟨v|ψ⟩|² for a real vector v.
    pub fn weight_on(&self, v: &[f64]) -> f64 {
        let mut re = CompensatedSum::default();
        let mut im = CompensatedSum::default();
        for (a, &x) in self.amplitudes.iter().zip(v) {
            re.add(a.re * x);
            im.add(a.im * x);
        }
        re.value().powi(2) + im.value().powi(2)
    }
}

/// Instantaneous eigenpair embedded in the full sector, tagged with its
/// position in the merged spectrum and its index parity.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub index: usize,
    pub energy: f64,
    pub parity: usize,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundState {
    pub energy: f64,
    pub state: SpinSectorState,
}

pub fn ground_state(h: &BandedHamiltonian) -> Result<GroundState> {
    let level = instantaneous_spectrum(h, 1)?.remove(0);
    Ok(GroundState {
        energy: level.energy,
        state: SpinSectorState::from_real(&level.vector, 0.0),
    })
}

/// Merged position of each block level: its block index plus the number of
/// partner-block levels strictly below it (beyond the tie tolerance when the
/// state's block is preferred).
fn merged_indices(own: &[EigenPair], partner: &SymTridiag, preferred: bool, tol: f64) -> Vec<usize> {
    own.iter()
        .enumerate()
        .map(|(j, p)| {
            let cut = if preferred { p.value - tol } else { p.value + tol };
            j + partner.count_below(cut)
        })
        .collect()
}

/// Lowest `k` levels of H across both parity blocks, ascending.
pub fn instantaneous_spectrum(h: &BandedHamiltonian, k: usize) -> Result<Vec<Level>> {
    if k == 0 || k > h.dim() {
        return domain(format!("requested {k} levels of a {}-dimensional sector", h.dim()));
    }
    let tol = h.tie_tolerance();
    let pref = h.sector.polarized_parity();
    let mut levels = Vec::with_capacity(2 * k);
    for parity in [pref, 1 - pref] {
        let block = h.block(parity);
        let partner = h.block(1 - parity);
        let count = k.min(block.dim());
        let pairs = block.lowest_eigenpairs(count)?;
        let idx = merged_indices(&pairs, &partner, parity == pref, tol);
        for (p, index) in pairs.into_iter().zip(idx) {
            levels.push(Level { index, energy: p.value, parity, vector: h.embed(parity, &p.vector) });
        }
    }
    levels.sort_by_key(|l| l.index);
    levels.truncate(k);
    for (pos, l) in levels.iter().enumerate() {
        if l.index != pos {
            return Err(Error::Numerical(format!(
                "inconsistent level ordering at position {pos} (index {})",
                l.index
            )));
        }
    }
    Ok(levels)
}

/// Smallest captured weight accepted by [`defect_density`].
pub const MIN_CAPTURED_WEIGHT: f64 = 1.0 - 1e-8;

/// Σ_k k |⟨φ_k|ψ⟩|² over the supplied levels.
pub fn defect_density(state: &SpinSectorState, spectrum: &[Level]) -> Result<f64> {
    let mut captured = CompensatedSum::default();
    let mut acc = CompensatedSum::default();
    for l in spectrum {
        let w = state.weight_on(&l.vector);
        captured.add(w);
        acc.add(l.index as f64 * w);
    }
    let norm2 = state.norm().powi(2);
    if captured.value() < MIN_CAPTURED_WEIGHT * norm2 {
        return Err(Error::Truncation {
            m_max: spectrum.iter().map(|l| l.index).max().unwrap_or(0),
            mass: captured.value() / norm2,
        });
    }
    Ok(acc.value() / norm2)
}

/// ⟨ψ|H|ψ⟩ − E₀, with round-off negatives clamped to zero.
pub fn irreversible_work(state: &SpinSectorState, h: &BandedHamiltonian, e0: f64) -> Result<f64> {
    let excess = h.expectation(&state.amplitudes) / state.norm().powi(2) - e0;
    let tol = 1e-10 * e0.abs().max(1.0);
    if excess < -tol {
        return Err(Error::Inconsistent(format!(
            "energy lies {} below the supplied ground energy",
            -excess
        )));
    }
    Ok(excess.max(0.0))
}

/// Leading-order large-N oscillator description around the ground state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpReference {
    pub omega: f64,
    pub mass: f64,
    /// Ground energy per site, E₀ ≈ −N e0.
    pub e0: f64,
    /// O(1) correction to the ground energy in the normalization with the
    /// additive constant 1/2 kept; for [`build_hamiltonian`] the ground
    /// energy is −N e0 + delta_e_corr − 1/2 + O(1/N).
    pub delta_e_corr: f64,
}

pub fn hp_reference(h: f64) -> Result<HpReference> {
    if !(h.is_finite() && h >= 0.0) {
        return domain(format!("field must be finite and >= 0, got {h}"));
    }
    if h == 1.0 {
        return Err(Error::CriticalPoint);
    }
    Ok(if h > 1.0 {
        HpReference {
            omega: 2.0 * (h * (h - 1.0)).sqrt(),
            mass: 0.5 / h,
            e0: h,
            delta_e_corr: (h * (h - 1.0)).sqrt() - h + 0.5,
        }
    } else {
        HpReference {
            omega: 2.0 * (1.0 - h * h).sqrt(),
            mass: 0.5,
            e0: 0.5 * (1.0 + h * h),
            delta_e_corr: (1.0 - h * h).sqrt() - 0.5,
        }
    })
}

/// Linear field ramp h(t) from `h_start` at `t_start` to `h_end` at `t_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSchedule {
    pub t_start: f64,
    pub t_end: f64,
    pub h_start: f64,
    pub h_end: f64,
}

impl FieldSchedule {
    /// h(t) = 1 + t/τ on [−τ, τ].
    pub fn crossing(tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return domain(format!("tau must be finite and > 0, got {tau}"));
        }
        Ok(Self { t_start: -tau, t_end: tau, h_start: 0.0, h_end: 2.0 })
    }

    /// Constant field over [−τ, τ].
    pub fn frozen(h: f64, tau: f64) -> Result<Self> {
        let mut s = Self::crossing(tau)?;
        s.h_start = h;
        s.h_end = h;
        Ok(s)
    }

    fn validated(self) -> Result<Self> {
        if !(self.t_end > self.t_start) || !self.t_start.is_finite() || !self.t_end.is_finite() {
            return domain("schedule time window is empty or not finite");
        }
        if !(self.h_start.is_finite() && self.h_end.is_finite()) {
            return domain("schedule fields must be finite");
        }
        Ok(self)
    }

    /// Half the duration, the τ of t/τ.
    pub fn tau(&self) -> f64 {
        0.5 * (self.t_end - self.t_start)
    }

    pub fn field(&self, t: f64) -> f64 {
        let s = (t - self.t_start) / (self.t_end - self.t_start);
        self.h_start + (self.h_end - self.h_start) * s
    }

    /// `samples` evenly spaced times over the window, endpoints exact.
    pub fn sample_times(&self, samples: usize) -> Vec<f64> {
        let n = samples.max(2);
        (0..n)
            .map(|i| {
                if i == n - 1 {
                    self.t_end
                } else {
                    self.t_start + (self.t_end - self.t_start) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmgConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Norm drift that triggers renormalization.
    pub renorm_threshold: f64,
    /// Norm drift treated as an integration failure.
    pub drift_limit: f64,
    pub max_steps: usize,
}

impl Default for LmgConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            renorm_threshold: 1e-12,
            drift_limit: 1e-6,
            max_steps: 50_000_000,
        }
    }
}

impl LmgConfig {
    fn step_control(&self) -> Result<StepControl> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return domain("propagation tolerances must be positive");
        }
        if !(self.renorm_threshold > 0.0 && self.drift_limit > self.renorm_threshold) {
            return domain("need 0 < renorm_threshold < drift_limit");
        }
        Ok(StepControl {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_steps: self.max_steps,
            ..StepControl::default()
        })
    }
}

/// Leading-order ground energy per site, extended evenly to h < 0.
fn reference_e0(h: f64) -> f64 {
    let a = h.abs();
    if a <= 1.0 {
        0.5 * (1.0 + a * a)
    } else {
        a
    }
}

/// Antiderivative of [`reference_e0`] with value 0 at h = 0.
fn reference_e0_integral(h: f64) -> f64 {
    let a = h.abs();
    let g = if a <= 1.0 {
        0.5 * a + a * a * a / 6.0
    } else {
        2.0 / 3.0 + 0.5 * (a * a - 1.0)
    };
    g.copysign(h)
}

/// Reference energy E_ref(t) = −N e0(h(t)) and its time integral from the
/// schedule start. Subtracting it keeps the occupied low-lying amplitudes
/// slowly varying, so the explicit stepper is limited by stability only.
#[derive(Debug, Clone, Copy)]
struct ReferenceEnergy {
    n: f64,
    schedule: FieldSchedule,
}

impl ReferenceEnergy {
    fn value(&self, t: f64) -> f64 {
        -self.n * reference_e0(self.schedule.field(t))
    }

    fn phase(&self, t: f64) -> f64 {
        let s = &self.schedule;
        let slope = (s.h_end - s.h_start) / (s.t_end - s.t_start);
        if slope == 0.0 {
            return -self.n * reference_e0(s.h_start) * (t - s.t_start);
        }
        -self.n * (reference_e0_integral(s.field(t)) - reference_e0_integral(s.h_start)) / slope
    }
}

/// Real-split Schrödinger equation i χ̇ = (H(t) − E_ref(t)) χ on one parity
/// block, with ψ = e^{−iΦ(t)} χ and Φ̇ = E_ref; state layout [Re χ, Im χ].
struct BlockSchrodinger {
    fixed_diag: Vec<f64>,
    field_diag: Vec<f64>,
    off: Vec<f64>,
    schedule: FieldSchedule,
    reference: ReferenceEnergy,
}

impl BlockSchrodinger {
    fn new(sector: &SpinSector, parity: usize, schedule: FieldSchedule) -> Self {
        let idx: Vec<usize> = (parity..sector.dim).step_by(2).collect();
        Self {
            fixed_diag: idx.iter().map(|&i| interaction_diag(sector, i)).collect(),
            field_diag: idx.iter().map(|&i| -2.0 * sector.m_z(i)).collect(),
            off: idx.windows(2).map(|w| interaction_off(sector, w[0])).collect(),
            schedule,
            reference: ReferenceEnergy { n: sector.n_sites as f64, schedule },
        }
    }
}

impl OdeSystem for BlockSchrodinger {
    fn dim(&self) -> usize {
        2 * self.fixed_diag.len()
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.fixed_diag.len();
        let h = self.schedule.field(t);
        let e_ref = self.reference.value(t);
        let (re, im) = y.split_at(n);
        let (dre, dim) = dy.split_at_mut(n);
        for k in 0..n {
            let d = self.fixed_diag[k] + h * self.field_diag[k] - e_ref;
            let mut hr = d * re[k];
            let mut hi = d * im[k];
            if k > 0 {
                hr += self.off[k - 1] * re[k - 1];
                hi += self.off[k - 1] * im[k - 1];
            }
            if k + 1 < n {
                hr += self.off[k] * re[k + 1];
                hi += self.off[k] * im[k + 1];
            }
            // ψ̇ = −i Hψ
            dre[k] = hi;
            dim[k] = -hr;
        }
    }
}

/// Time series of one quench.
#[derive(Debug, Clone, PartialEq)]
pub struct QuenchRecord {
    pub n_sites: usize,
    pub schedule: FieldSchedule,
    pub times: Vec<f64>,
    pub fields: Vec<f64>,
    pub defect_density: Vec<f64>,
    pub w_irr: Vec<f64>,
    pub ground_overlap: Vec<f64>,
    /// Number of renormalizations applied during the run.
    pub renormalizations: usize,
    /// Largest norm drift seen before any renormalization.
    pub max_drift: f64,
    pub states: Vec<SpinSectorState>,
}

impl QuenchRecord {
    pub fn tau(&self) -> f64 {
        self.schedule.tau()
    }

    pub fn final_defect_density(&self) -> f64 {
        *self.defect_density.last().expect("record has samples")
    }

    pub fn final_w_irr(&self) -> f64 {
        *self.w_irr.last().expect("record has samples")
    }

    /// CSV with columns `t,t_over_tau,h,defect_density,w_irr,ground_overlap`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,t_over_tau,h,defect_density,w_irr,ground_overlap")?;
        for i in 0..self.times.len() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                self.times[i],
                self.times[i] / self.tau(),
                self.fields[i],
                self.defect_density[i],
                self.w_irr[i],
                self.ground_overlap[i]
            )?;
        }
        Ok(())
    }
}

/// Observables of a block state against the instantaneous spectrum.
struct SampleObservables {
    defect_density: f64,
    w_irr: f64,
    ground_overlap: f64,
}

fn analyse_sample(h: &BandedHamiltonian, parity: usize, state: &SpinSectorState) -> Result<SampleObservables> {
    let own = h.block(parity);
    let partner = h.block(1 - parity);
    let tol = h.tie_tolerance();
    let preferred = parity == h.sector.polarized_parity();
    let block_state: Vec<Complex64> = (parity..h.dim()).step_by(2).map(|i| state.amplitudes[i]).collect();
    let block_state = SpinSectorState { amplitudes: block_state, time: state.time };
    let norm2 = block_state.norm().powi(2);

    let mut k = own.dim().min(16);
    let (pairs, weights) = loop {
        let pairs = own.lowest_eigenpairs(k)?;
        let weights: Vec<f64> = pairs.iter().map(|p| block_state.weight_on(&p.vector)).collect();
        let mut captured = CompensatedSum::default();
        weights.iter().for_each(|&w| captured.add(w));
        if captured.value() >= MIN_CAPTURED_WEIGHT * norm2 {
            break (pairs, weights);
        }
        if k == own.dim() {
            return Err(Error::Truncation { m_max: k, mass: captured.value() / norm2 });
        }
        k = (2 * k).min(own.dim());
    };
    let idx = merged_indices(&pairs, &partner, preferred, tol);
    let mut nu = CompensatedSum::default();
    for (w, &i) in weights.iter().zip(&idx) {
        nu.add(i as f64 * w);
    }
    let ground_overlap = if idx[0] == 0 { weights[0] / norm2 } else { 0.0 };
    let e0 = pairs[0].value.min(partner.eigenvalue(0)?);
    Ok(SampleObservables {
        defect_density: nu.value() / norm2,
        w_irr: irreversible_work(state, h, e0)?,
        ground_overlap,
    })
}

/// Quench across the critical point with h(t) = 1 + t/τ, t ∈ [−τ, τ].
pub fn propagate(n_sites: usize, tau: f64, cfg: &LmgConfig, samples: usize) -> Result<QuenchRecord> {
    propagate_schedule(n_sites, &FieldSchedule::crossing(tau)?, cfg, samples)
}

/// Starts in the lowest state of the block containing m = +J at the
/// schedule start and records observables at `samples` evenly spaced times.
pub fn propagate_schedule(
    n_sites: usize,
    schedule: &FieldSchedule,
    cfg: &LmgConfig,
    samples: usize,
) -> Result<QuenchRecord> {
    let schedule = schedule.validated()?;
    let ctl = cfg.step_control()?;
    let sector = SpinSector::new(n_sites)?;
    let parity = sector.polarized_parity();
    let h_start = build_hamiltonian(n_sites, schedule.h_start)?;
    let mut psi0 = h_start.block(parity).lowest_eigenpairs(1)?.remove(0).vector;
    fix_sign(&mut psi0);
    let sys = BlockSchrodinger::new(&sector, parity, schedule);
    let nb = psi0.len();
    let mut y0 = vec![0.0; 2 * nb];
    y0[..nb].copy_from_slice(&psi0);

    let times = schedule.sample_times(samples);
    let interior: Vec<f64> = times[1..times.len() - 1].to_vec();
    let mut captured: Vec<Vec<f64>> = Vec::with_capacity(times.len());
    let mut next = 0;
    let mut renormalizations = 0;
    let mut max_drift: f64 = 0.0;
    let span = schedule.t_end - schedule.t_start;
    let t_tol = 1e-12 * span;
    ode::integrate(&sys, schedule.t_start, &y0, schedule.t_end, &interior, &ctl, |t, y, _| {
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let drift = (norm - 1.0).abs();
        max_drift = max_drift.max(drift);
        if !(drift <= cfg.drift_limit) {
            return Err(Error::IntegrationFailure {
                t,
                reason: format!("norm drift {drift:e} exceeds {:e}", cfg.drift_limit),
            });
        }
        let mut action = StepAction::Continue;
        if drift > cfg.renorm_threshold {
            y.iter_mut().for_each(|v| *v /= norm);
            renormalizations += 1;
            action = StepAction::StateModified;
        }
        if next < times.len() && (t - times[next]).abs() <= t_tol {
            captured.push(y.to_vec());
            next += 1;
        }
        Ok(action)
    })?;
    if captured.len() != times.len() {
        return Err(Error::Inconsistent(format!(
            "captured {} of {} sample states",
            captured.len(),
            times.len()
        )));
    }

    let mut record = QuenchRecord {
        n_sites,
        schedule,
        times: times.clone(),
        fields: Vec::with_capacity(times.len()),
        defect_density: Vec::with_capacity(times.len()),
        w_irr: Vec::with_capacity(times.len()),
        ground_overlap: Vec::with_capacity(times.len()),
        renormalizations,
        max_drift,
        states: Vec::with_capacity(times.len()),
    };
    for (&t, y) in times.iter().zip(&captured) {
        let phase = Complex64::from_polar(1.0, -sys.reference.phase(t));
        let mut amps = vec![Complex64::new(0.0, 0.0); sector.dim];
        for (k, i) in (parity..sector.dim).step_by(2).enumerate() {
            amps[i] = Complex64::new(y[k], y[nb + k]) * phase;
        }
        let state = SpinSectorState { amplitudes: amps, time: t };
        let field = schedule.field(t);
        let ham = build_hamiltonian(n_sites, field)?;
        let obs = analyse_sample(&ham, parity, &state)?;
        record.fields.push(field);
        record.defect_density.push(obs.defect_density);
        record.w_irr.push(obs.w_irr);
        record.ground_overlap.push(obs.ground_overlap);
        record.states.push(state);
    }
    Ok(record)
}

/// Full 2^N-dimensional propagation projected on the maximal-spin sector.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRecord {
    pub times: Vec<f64>,
    /// Projections ⟨J, m|Ψ(t)⟩ ordered by basis index i = m + J.
    pub sector_amplitudes: Vec<Vec<Complex64>>,
    /// 1 − Σ_m |⟨J, m|Ψ⟩|².
    pub leakage: Vec<f64>,
    pub energy: Vec<f64>,
}

/// Largest N accepted by [`small_n_oracle`].
pub const ORACLE_MAX_SITES: usize = 3;

struct DenseSchrodinger {
    dim: usize,
    fixed: Vec<f64>,
    field: Vec<f64>,
    schedule: FieldSchedule,
}

impl DenseSchrodinger {
    fn apply(&self, h: f64, x: &[f64], y: &mut [f64]) {
        for r in 0..self.dim {
            let mut acc = 0.0;
            for c in 0..self.dim {
                acc += (self.fixed[r * self.dim + c] + h * self.field[r * self.dim + c]) * x[c];
            }
            y[r] = acc;
        }
    }
}

impl OdeSystem for DenseSchrodinger {
    fn dim(&self) -> usize {
        2 * self.dim
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let h = self.schedule.field(t);
        let (re, im) = y.split_at(self.dim);
        let (dre, dim) = dy.split_at_mut(self.dim);
        self.apply(h, im, dre);
        self.apply(h, re, dim);
        dim.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Single-site Pauli matrix (x or z) acting on site `site` of `n` spins,
/// basis bit 1 = spin up along z.
fn pauli_on(n: usize, site: usize, kind: char) -> Vec<f64> {
    let dim = 1 << n;
    let mut m = vec![0.0; dim * dim];
    for s in 0..dim {
        let bit = (s >> site) & 1;
        match kind {
            'x' => m[(s ^ (1 << site)) * dim + s] = 1.0,
            _ => m[s * dim + s] = if bit == 1 { 1.0 } else { -1.0 },
        }
    }
    m
}

fn dicke_vectors(n: usize) -> Vec<Vec<f64>> {
    let dim = 1usize << n;
    (0..=n)
        .map(|ups| {
            let members: Vec<usize> = (0..dim).filter(|s| s.count_ones() as usize == ups).collect();
            let amp = 1.0 / (members.len() as f64).sqrt();
            let mut v = vec![0.0; dim];
            members.iter().for_each(|&s| v[s] = amp);
            v
        })
        .collect()
}

/// Brute-force check of the sector restriction for N ≤ 3: builds
/// H = −(1/(2N))(Σσˣ)² − hΣσᶻ from single-site operators, starts from the
/// same initial state as [`propagate_schedule`] and integrates in the full
/// space without any energy shift.
pub fn small_n_oracle(n_sites: usize, schedule: &FieldSchedule, cfg: &LmgConfig, samples: usize) -> Result<OracleRecord> {
    if n_sites > ORACLE_MAX_SITES {
        return domain(format!("oracle is capped at {ORACLE_MAX_SITES} sites, got {n_sites}"));
    }
    let sector = SpinSector::new(n_sites)?;
    let schedule = schedule.validated()?;
    let ctl = cfg.step_control()?;
    let dim = 1usize << n_sites;
    let mut sx = vec![0.0; dim * dim];
    let mut sz = vec![0.0; dim * dim];
    for site in 0..n_sites {
        for (acc, m) in [(&mut sx, pauli_on(n_sites, site, 'x')), (&mut sz, pauli_on(n_sites, site, 'z'))] {
            acc.iter_mut().zip(m).for_each(|(a, b)| *a += b);
        }
    }
    let mut fixed = vec![0.0; dim * dim];
    for r in 0..dim {
        for c in 0..dim {
            let sq: f64 = (0..dim).map(|k| sx[r * dim + k] * sx[k * dim + c]).sum();
            fixed[r * dim + c] = -sq / (2.0 * n_sites as f64);
        }
    }
    let field: Vec<f64> = sz.iter().map(|v| -v).collect();
    let sys = DenseSchrodinger { dim, fixed, field, schedule };

    let dicke = dicke_vectors(n_sites);
    let h_start = build_hamiltonian(n_sites, schedule.h_start)?;
    let parity = sector.polarized_parity();
    let mut psi0 = h_start.block(parity).lowest_eigenpairs(1)?.remove(0).vector;
    fix_sign(&mut psi0);
    let sector_start = h_start.embed(parity, &psi0);
    let mut y0 = vec![0.0; 2 * dim];
    for (c, d) in sector_start.iter().zip(&dicke) {
        y0[..dim].iter_mut().zip(d).for_each(|(y, v)| *y += c * v);
    }

    let times = schedule.sample_times(samples);
    let interior = times[1..times.len() - 1].to_vec();
    let t_tol = 1e-12 * (schedule.t_end - schedule.t_start);
    let mut next = 0;
    let mut out = OracleRecord { times: times.clone(), sector_amplitudes: vec![], leakage: vec![], energy: vec![] };
    ode::integrate(&sys, schedule.t_start, &y0, schedule.t_end, &interior, &ctl, |t, y, _| {
        if next < times.len() && (t - times[next]).abs() <= t_tol {
            let (re, im) = y.split_at(dim);
            let proj: Vec<Complex64> = dicke
                .iter()
                .map(|d| {
                    Complex64::new(
                        d.iter().zip(re).map(|(a, b)| a * b).sum(),
                        d.iter().zip(im).map(|(a, b)| a * b).sum(),
                    )
                })
                .collect();
            let total: f64 = y.iter().map(|v| v * v).sum();
            let inside: f64 = proj.iter().map(|a| a.norm_sqr()).sum();
            let h = sys.schedule.field(t);
            let (mut hr, mut hi) = (vec![0.0; dim], vec![0.0; dim]);
            sys.apply(h, re, &mut hr);
            sys.apply(h, im, &mut hi);
            let e: f64 = re.iter().zip(&hr).chain(im.iter().zip(&hi)).map(|(a, b)| a * b).sum();
            out.sector_amplitudes.push(proj);
            out.leakage.push((total - inside).max(0.0));
            out.energy.push(e / total);
            next += 1;
        }
        Ok(StepAction::Continue)
    })?;
    Ok(out)
}
