use std::fmt;
use std::path::{Path, PathBuf};

use hmcycle::experiment::{ExperimentConfig, HarnessConfig, KernelChoice, Preset, Strategy};
use hmcycle::gp::OptimizerConfig;
use hmcycle::{Hormone, SolverConfig};
use serde::{Deserialize, Serialize};

/// File name of the resolved configuration written next to every output.
pub const ECHO_FILE: &str = "config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Parameter file overriding the nominal set.
    pub parameters: Option<PathBuf>,
    pub span_days: f64,
    /// Output sampling interval, in days.
    pub sample_step: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { parameters: None, span_days: 200.0, sample_step: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Two-column `day,value` CSV. Without it the nominal individual is
    /// sampled like one experiment trial.
    pub data: Option<PathBuf>,
    pub hormone: Hormone,
    pub trial: usize,
    /// Prediction grid as `[start, end, step]` days; defaults to the test
    /// window (or the data span) at daily resolution.
    pub predict: Option<[f64; 3]>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { data: None, hormone: Hormone::LH, trial: 0, predict: None }
    }
}

/// Everything a run needs, as read from the config file and flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub gp: OptimizerConfig,
    pub experiment: ExperimentConfig,
    pub simulate: SimulateConfig,
    pub fit: FitConfig,
}

/// Flag values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub jobs: Option<usize>,
    pub preset: Option<Preset>,
    pub sampling_period: Option<u32>,
    pub strategy: Option<Strategy>,
    pub noise_ratio: Option<f64>,
    pub kernel: Option<KernelChoice>,
    pub sample_step: Option<f64>,
    pub peaks_required: Option<usize>,
    pub parameters: Option<PathBuf>,
    pub span_days: Option<f64>,
    pub data: Option<PathBuf>,
    pub hormone: Option<Hormone>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(format!("{origin}: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Preset first, then individual flags, so a flag always wins.
    pub fn apply(&mut self, o: &Overrides) {
        let exp = &mut self.experiment;
        if let Some(p) = o.preset {
            exp.apply_preset(p);
        }
        if let Some(seed) = o.seed {
            exp.seed = seed;
            self.gp.seed = seed;
        }
        if let Some(n) = o.trials {
            exp.trials = n;
        }
        if let Some(n) = o.jobs {
            exp.jobs = n;
        }
        if let Some(p) = o.sampling_period {
            exp.sampling_periods = vec![p];
        }
        if let Some(s) = o.strategy {
            exp.strategies = vec![s];
        }
        if let Some(r) = o.noise_ratio {
            exp.noise_ratios = vec![r];
        }
        if let Some(k) = o.kernel {
            exp.kernel = k;
        }
        if let Some(k) = o.peaks_required {
            exp.peaks_required = k;
        }
        if let Some(s) = o.sample_step {
            self.simulate.sample_step = s;
        }
        if let Some(p) = &o.parameters {
            self.simulate.parameters = Some(p.clone());
        }
        if let Some(d) = o.span_days {
            self.simulate.span_days = d;
            exp.span_days = d;
        }
        if let Some(d) = &o.data {
            self.fit.data = Some(d.clone());
        }
        if let Some(h) = o.hormone {
            self.fit.hormone = h;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let wrap = |section: &str, e: hmcycle::Error| ConfigError(format!("[{section}] {e}"));
        self.solver.validate().map_err(|e| wrap("solver", e))?;
        self.gp.validate().map_err(|e| wrap("gp", e))?;
        self.experiment.validate().map_err(|e| wrap("experiment", e))?;
        let s = &self.simulate;
        if !(s.span_days > 0.0 && s.span_days.is_finite()) {
            return Err(ConfigError(format!("[simulate] span_days must be positive, got {}", s.span_days)));
        }
        if !(s.sample_step > 0.0 && s.sample_step.is_finite()) {
            return Err(ConfigError(format!("[simulate] sample_step must be positive, got {}", s.sample_step)));
        }
        for path in s.parameters.iter().chain(&self.fit.data) {
            if !path.is_file() {
                return Err(ConfigError(format!("file not found: {}", path.display())));
            }
        }
        if let Some([a, b, step]) = self.fit.predict {
            if !(b > a && step > 0.0) {
                return Err(ConfigError("[fit] predict must be [start, end, step] with end > start, step > 0".into()));
            }
        }
        Ok(())
    }

    pub fn harness(&self) -> HarnessConfig {
        HarnessConfig { solver: self.solver.clone(), gp: self.gp.clone(), experiment: self.experiment.clone() }
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError(format!("cannot serialise the resolved config: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::parse("", "test").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn flag_overrides_file() {
        let mut c = RunConfig::parse("[experiment]\nnoise_ratios = [0.01]\n", "test").unwrap();
        c.apply(&Overrides { noise_ratio: Some(0.1), ..Default::default() });
        assert_eq!(c.experiment.noise_ratios, vec![0.1]);
    }

    #[test]
    fn flag_wins_over_preset() {
        let mut c = RunConfig::default();
        c.apply(&Overrides { preset: Some(Preset::Table1), sampling_period: Some(2), ..Default::default() });
        assert_eq!(c.experiment.sampling_periods, vec![2]);
        assert_eq!(c.experiment.grid().unwrap().len(), 2);
    }

    #[test]
    fn seed_reaches_both_layers() {
        let mut c = RunConfig::default();
        c.apply(&Overrides { seed: Some(7), ..Default::default() });
        assert_eq!((c.experiment.seed, c.gp.seed), (7, 7));
    }

    #[test]
    fn malformed_number_names_the_key() {
        let e = RunConfig::parse("[solver]\nrel_tol = \"tight\"\n", "cfg.toml").unwrap_err().0;
        assert!(e.contains("rel_tol"), "{e}");
        assert!(e.contains("cfg.toml"), "{e}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let e = RunConfig::parse("[experiment]\ntrails = 3\n", "cfg.toml").unwrap_err().0;
        assert!(e.contains("trails"), "{e}");
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.apply(&Overrides { preset: Some(Preset::Fig1b), seed: Some(3), ..Default::default() });
        let back = RunConfig::parse(&c.to_toml().unwrap(), "echo").unwrap();
        assert_eq!(back, c);
    }
}
