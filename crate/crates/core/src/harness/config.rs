//! TOML run configuration. Every section is optional and every key has a
//! default, so an empty file is a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ermakov::SolverConfig;
use crate::lmg::LmgConfig;
use crate::protocol::FloorMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub effective: EffectiveSection,
    pub lmg: LmgSection,
    pub analytic: AnalyticSection,
    pub collapse: CollapseSection,
    pub output: OutputSection,
}

/// Axes of an effective-oscillator sweep; the point set is their product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectiveSection {
    pub eta: Vec<f64>,
    pub tau: Vec<f64>,
    pub omega_c: Vec<f64>,
    pub delta: Vec<f64>,
    pub floor_mode: FloorMode,
    /// When non-empty, replaces the `omega_c` axis by
    /// `omega_c_coeff · N^(−1/3)` for each N listed here.
    pub floor_sizes: Vec<usize>,
    pub omega_c_coeff: f64,
    /// Time samples per point on [−τ, τ]; an even count avoids t = 0.
    pub samples: usize,
    pub solver: SolverConfig,
}

impl Default for EffectiveSection {
    fn default() -> Self {
        Self {
            eta: vec![1.0],
            tau: vec![25.0],
            omega_c: vec![0.0, 0.05, 0.5],
            delta: vec![1.0],
            floor_mode: FloorMode::MaxFloor,
            floor_sizes: Vec::new(),
            omega_c_coeff: 1.0,
            samples: 200,
            solver: SolverConfig::default(),
        }
    }
}

impl EffectiveSection {
    /// Floor values of the sweep.
    pub fn floor_axis(&self) -> Vec<f64> {
        if self.floor_sizes.is_empty() {
            return self.omega_c.clone();
        }
        self.floor_sizes.iter().map(|&n| self.omega_c_coeff * (n as f64).cbrt().recip()).collect()
    }
}

/// LMG sweep: sizes crossed with either explicit τ values or N/τ ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmgSection {
    pub n_sites: Vec<usize>,
    pub tau: Vec<f64>,
    pub n_over_tau: Vec<f64>,
    pub samples: usize,
    pub propagation: LmgConfig,
}

impl Default for LmgSection {
    fn default() -> Self {
        Self {
            n_sites: vec![128],
            tau: Vec::new(),
            n_over_tau: vec![10.0, 30.0],
            samples: 101,
            propagation: LmgConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticSection {
    pub eta: Vec<f64>,
    /// Largest pair number k in the table.
    pub k_max: u64,
}

impl Default for AnalyticSection {
    fn default() -> Self {
        Self { eta: vec![1.0, 10.0, 100.0], k_max: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollapseSection {
    /// LMG run CSVs to compare.
    pub inputs: Vec<PathBuf>,
    pub time_exp_n: f64,
    pub time_exp_tau: f64,
    pub value_exp_n: f64,
    pub value_exp_tau: f64,
    pub grid: usize,
}

impl Default for CollapseSection {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            time_exp_n: 0.0,
            time_exp_tau: 0.0,
            value_exp_n: 0.0,
            value_exp_tau: 0.0,
            grid: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Destination file; stdout when absent.
    pub path: Option<PathBuf>,
    /// Worker threads; 0 lets the pool choose.
    pub jobs: usize,
    /// Also write a gnuplot script next to the CSV.
    pub plot: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.effective.eta = vec![1.0, 2.0];
        cfg.lmg.n_sites = vec![512, 2048];
        cfg.output.jobs = 3;
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = RunConfig::from_toml("[effective]\ntau = [10.0, 25.0]\nfloor_mode = \"no_floor\"\n").unwrap();
        assert_eq!(cfg.effective.tau, vec![10.0, 25.0]);
        assert_eq!(cfg.effective.floor_mode, FloorMode::NoFloor);
        assert_eq!(cfg.effective.samples, EffectiveSection::default().samples);
        assert_eq!(cfg.lmg, LmgSection::default());
    }

    #[test]
    fn size_scaled_floor_replaces_axis() {
        let cfg = RunConfig::from_toml("[effective]\nfloor_sizes = [512, 4096]\nomega_c_coeff = 2.0\n").unwrap();
        assert_eq!(cfg.effective.floor_axis(), vec![0.25, 0.125]);
        assert_eq!(RunConfig::default().effective.floor_axis(), vec![0.0, 0.05, 0.5]);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let err = RunConfig::from_toml("[effective]\ntaus = [1.0]\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert_eq!(err.exit_code(), 2);
    }
}
