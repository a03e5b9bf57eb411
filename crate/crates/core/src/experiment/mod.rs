//! Synthetic-individual experiments: downsample and perturb simulated hormone
//! levels, fit one GP per hormone on a training window, predict the next cycle
//! and score the detected events against the noiseless truth.

mod run;
mod sampling;
mod sweep;
mod truth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{KernelSpec, OptimizerConfig};
use crate::phase::PhaseConfig;

pub use run::{
    fit_trial, run_cell, sweep, sweep_with_truths, write_overlay_csv, write_report_csv, CellResult, ExperimentReport,
    HormoneAccuracy, OverlayRow, TrialFailure, TrialFit, REPORT_CSV_HEADER,
};
pub use sampling::{add_noise, downsample, trial_seed, ObservationSet, SamplingProvenance};
pub use sweep::{period_sweep, write_period_csv, PeriodCell, PeriodStatus, PERIOD_CSV_HEADER};
pub use truth::{build_windows, make_individual, simulate_individual, GroundTruth, Windows};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Agnostic,
    Informed,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Agnostic => "agnostic",
            Strategy::Informed => "informed",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agnostic" => Ok(Strategy::Agnostic),
            "informed" => Ok(Strategy::Informed),
            _ => Err(Error::Config(format!("unknown strategy `{s}` (expected agnostic or informed)"))),
        }
    }
}

/// How informed sampling guarantees an event sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InformedMode {
    /// Agnostic grid plus one extra sample per cycle at the event extremum,
    /// unless the grid already hits the event.
    #[default]
    Superset,
    /// Agnostic grid shifted so that it passes through the first cycle's
    /// event extremum; no extra samples.
    Shift,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    #[default]
    Sum,
    Product,
}

impl FromStr for KernelChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(KernelChoice::Sum),
            "product" => Ok(KernelChoice::Product),
            _ => Err(Error::Config(format!("unknown kernel `{s}` (expected sum or product)"))),
        }
    }
}

impl fmt::Display for KernelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelChoice::Sum => "sum",
            KernelChoice::Product => "product",
        })
    }
}

impl KernelChoice {
    /// RQ and periodic primitives combined, initialised from the training span
    /// and the expected cycle period.
    pub fn initial_kernel(self, span_days: f64, expected_period: f64) -> KernelSpec {
        let rq = KernelSpec::rq(1.0, (span_days / 5.0).max(1.0), 1.0);
        let pe = KernelSpec::periodic(1.0, 1.0, 1.0 / expected_period);
        match self {
            KernelChoice::Sum => KernelSpec::sum(rq, pe),
            KernelChoice::Product => KernelSpec::product(rq, pe),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Table1,
    Table2,
    Fig1b,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Preset::Table1),
            "table2" => Ok(Preset::Table2),
            "fig1b" => Ok(Preset::Fig1b),
            _ => Err(Error::Config(format!("unknown preset `{s}` (expected table1, table2 or fig1b)"))),
        }
    }
}

/// Experiment harness settings and grid axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Simulated days per individual.
    pub span_days: f64,
    /// Resolution used to locate LH maxima in the dense solution.
    pub dense_step: f64,
    pub peaks_required: usize,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; 0 lets the pool pick.
    pub jobs: usize,
    pub expected_period: f64,
    /// Cycle periods (days) the periodic kernel may take during fitting.
    pub period_band: (f64, f64),
    pub kernel: KernelChoice,
    pub informed_mode: InformedMode,
    pub noise_ratios: Vec<f64>,
    pub sampling_periods: Vec<u32>,
    pub strategies: Vec<Strategy>,
    /// Individual overrides; `None` keeps the nominal value.
    pub alpha_lh: Option<f64>,
    pub km_lh: Option<f64>,
    pub alpha_bounds: (f64, f64),
    pub km_bounds: (f64, f64),
    /// Period-sweep axes (absolute values).
    pub alpha_grid: Vec<f64>,
    pub km_grid: Vec<f64>,
    /// Largest cycle-length spread still reported as a stable period.
    pub stability_tolerance: f64,
    pub phase: PhaseConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            span_days: 200.0,
            dense_step: 0.01,
            peaks_required: 2,
            trials: 25,
            seed: 0,
            jobs: 0,
            expected_period: 28.0,
            period_band: (18.0, 42.0),
            kernel: KernelChoice::Sum,
            informed_mode: InformedMode::Superset,
            noise_ratios: vec![0.0],
            sampling_periods: vec![1],
            strategies: vec![Strategy::Agnostic, Strategy::Informed],
            alpha_lh: None,
            km_lh: None,
            alpha_bounds: (0.1, 3.0),
            km_bounds: (1.0, 1e4),
            alpha_grid: Vec::new(),
            km_grid: Vec::new(),
            stability_tolerance: 0.5,
            phase: PhaseConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Replaces the grid axes with one of the built-in layouts.
    pub fn apply_preset(&mut self, preset: Preset) {
        match preset {
            Preset::Table1 => {
                self.noise_ratios = vec![0.0];
                self.sampling_periods = vec![1, 2, 4, 6];
                self.strategies = vec![Strategy::Agnostic, Strategy::Informed];
            }
            Preset::Table2 => {
                self.noise_ratios = vec![0.0, 0.01, 0.1];
                self.sampling_periods = vec![1, 2];
                self.strategies = vec![Strategy::Agnostic, Strategy::Informed];
            }
            Preset::Fig1b => {
                let nominal = crate::model::nominal_parameters();
                self.alpha_grid = [0.8, 0.9, 1.0, 1.1, 1.2].iter().map(|m| m * nominal.alpha_LH).collect();
                self.km_grid = [0.5, 0.75, 1.0, 1.5, 2.0].iter().map(|m| m * nominal.Km_LH).collect();
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.span_days > 0.0 && self.span_days.is_finite()) {
            return bad("experiment.span_days must be positive");
        }
        if !(self.dense_step > 0.0 && self.dense_step <= 1.0) {
            return bad("experiment.dense_step must lie in (0, 1]");
        }
        if self.peaks_required == 0 {
            return bad("experiment.peaks_required must be at least 1");
        }
        if self.trials == 0 {
            return bad("experiment.trials must be at least 1");
        }
        if !(self.expected_period > 0.0) {
            return bad("experiment.expected_period must be positive");
        }
        let (plo, phi) = self.period_band;
        if !(plo >= 2.0 && plo <= self.expected_period && self.expected_period <= phi && phi.is_finite()) {
            return bad("experiment.period_band must bracket expected_period and stay above 2 days");
        }
        if self.noise_ratios.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return bad("experiment.noise_ratios must be nonnegative");
        }
        if self.sampling_periods.contains(&0) {
            return bad("experiment.sampling_periods must be at least 1 day");
        }
        if !(self.stability_tolerance >= 0.0) {
            return bad("experiment.stability_tolerance must be nonnegative");
        }
        for (name, (lo, hi)) in [("alpha_bounds", self.alpha_bounds), ("km_bounds", self.km_bounds)] {
            if !(lo > 0.0 && lo <= hi) {
                return Err(Error::Config(format!("experiment.{name} must satisfy 0 < lo <= hi")));
            }
        }
        Ok(())
    }

    /// Cells in row order: noise ratio, then sampling period, then strategy.
    pub fn grid(&self) -> Result<Vec<ExperimentCell>> {
        if self.noise_ratios.is_empty() || self.sampling_periods.is_empty() || self.strategies.is_empty() {
            return Err(Error::Config("experiment grid is empty".into()));
        }
        let nominal = crate::model::nominal_parameters();
        let mut cells = Vec::new();
        for &noise_ratio in &self.noise_ratios {
            for &sampling_period in &self.sampling_periods {
                for &strategy in &self.strategies {
                    cells.push(ExperimentCell {
                        alpha_lh: self.alpha_lh.unwrap_or(nominal.alpha_LH),
                        km_lh: self.km_lh.unwrap_or(nominal.Km_LH),
                        sampling_period,
                        strategy,
                        noise_ratio,
                        peaks_required: self.peaks_required,
                        trials: self.trials,
                        kernel: self.kernel,
                    });
                }
            }
        }
        Ok(cells)
    }
}

/// One row of an experiment grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub alpha_lh: f64,
    pub km_lh: f64,
    pub sampling_period: u32,
    pub strategy: Strategy,
    pub noise_ratio: f64,
    pub peaks_required: usize,
    pub trials: usize,
    pub kernel: KernelChoice,
}

impl ExperimentCell {
    pub fn validate(&self) -> Result<()> {
        if self.sampling_period == 0 {
            return Err(Error::Config("sampling period must be at least 1 day".into()));
        }
        if !(self.noise_ratio >= 0.0 && self.noise_ratio.is_finite()) {
            return Err(Error::Config("noise ratio must be nonnegative".into()));
        }
        if self.trials == 0 || self.peaks_required == 0 {
            return Err(Error::Config("trials and peaks_required must be at least 1".into()));
        }
        Ok(())
    }

    /// Seed key shared by the agnostic and informed variants of a cell, so both
    /// see the same sampling phases and noise draws.
    pub(crate) fn seed_key(&self) -> [u64; 5] {
        [
            self.alpha_lh.to_bits(),
            self.km_lh.to_bits(),
            u64::from(self.sampling_period),
            self.noise_ratio.to_bits(),
            self.peaks_required as u64,
        ]
    }

    /// Training below two peaks is below what the GP can extrapolate reliably.
    pub fn sub_threshold(&self) -> bool {
        self.peaks_required < 2
    }
}

/// Settings the experiment harness needs from the other layers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub solver: crate::dde::SolverConfig,
    pub gp: OptimizerConfig,
    pub experiment: ExperimentConfig,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_shapes() {
        let mut c = ExperimentConfig::default();
        c.apply_preset(Preset::Table1);
        assert_eq!(c.grid().unwrap().len(), 8);
        c.apply_preset(Preset::Table2);
        let g = c.grid().unwrap();
        assert_eq!(g.len(), 12);
        assert_eq!((g[0].noise_ratio, g[0].sampling_period, g[0].strategy), (0.0, 1, Strategy::Agnostic));
        assert_eq!((g[11].noise_ratio, g[11].sampling_period, g[11].strategy), (0.1, 2, Strategy::Informed));
        c.apply_preset(Preset::Fig1b);
        assert_eq!((c.alpha_grid.len(), c.km_grid.len()), (5, 5));
    }

    #[test]
    fn seed_key_ignores_strategy() {
        let mut c = ExperimentConfig::default();
        c.apply_preset(Preset::Table1);
        let g = c.grid().unwrap();
        assert_eq!(g[0].seed_key(), g[1].seed_key());
        assert_ne!(g[0].seed_key(), g[2].seed_key());
    }

    #[test]
    fn validation() {
        let mut c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        c.sampling_periods = vec![0];
        assert!(c.validate().is_err());
        let c = ExperimentConfig { noise_ratios: vec![], ..Default::default() };
        assert!(c.grid().is_err());
        assert!("sideways".parse::<Strategy>().is_err());
        assert_eq!("informed".parse::<Strategy>().unwrap(), Strategy::Informed);
    }
}
