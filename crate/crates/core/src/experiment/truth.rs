use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::dde::{solve_clark, SolverConfig, Trajectory};
use crate::error::{Error, Result};
use crate::model::{nominal_parameters, ParameterSet, StateVector};
use crate::phase::{peak_times, DailySeries, DayInterval, Hormone};

/// Nominal parameters with the LH-synthesis pair overridden.
pub fn make_individual(alpha_lh: f64, km_lh: f64, config: &ExperimentConfig) -> Result<ParameterSet> {
    let in_bounds = |v: f64, (lo, hi): (f64, f64)| v.is_finite() && v >= lo && v <= hi;
    if !in_bounds(alpha_lh, config.alpha_bounds) {
        return Err(Error::Config(format!("alpha_LH = {alpha_lh} outside {:?}", config.alpha_bounds)));
    }
    if !in_bounds(km_lh, config.km_bounds) {
        return Err(Error::Config(format!("Km_LH = {km_lh} outside {:?}", config.km_bounds)));
    }
    let mut p = nominal_parameters();
    p.alpha_LH = alpha_lh;
    p.Km_LH = km_lh;
    Ok(p)
}

/// Simulated individual: dense solution, daily hormone levels and LH maxima.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub params: ParameterSet,
    pub trajectory: Trajectory,
    /// Daily levels on days `0..=span`, indexed like [`Hormone::ALL`].
    daily: Vec<DailySeries>,
    /// Refined LH maxima over the whole span, transient included.
    pub lh_peak_times: Vec<f64>,
}

pub fn simulate_individual(
    params: &ParameterSet,
    solver: &SolverConfig,
    config: &ExperimentConfig,
) -> Result<GroundTruth> {
    let trajectory = solve_clark(params, config.span_days, solver)?;
    let n_days = config.span_days.floor() as i64;
    let states: Vec<Vec<f64>> = (0..=n_days).map(|d| trajectory.eval(d as f64)).collect::<Result<_>>()?;
    let daily = Hormone::ALL
        .iter()
        .map(|&h| DailySeries::new(0, states.iter().map(|s| h.level(s, params)).collect(), h))
        .collect::<Result<Vec<_>>>()?;

    let n_dense = (config.span_days / config.dense_step).floor() as usize;
    let times: Vec<f64> = (0..=n_dense).map(|i| i as f64 * config.dense_step).collect();
    let lh = trajectory.channel(StateVector::LH, &times)?;
    let lh_peak_times = peak_times(&times, &lh, &config.phase);
    Ok(GroundTruth { params: params.clone(), trajectory, daily, lh_peak_times })
}

impl GroundTruth {
    pub fn daily(&self, hormone: Hormone) -> &DailySeries {
        &self.daily[Hormone::ALL.iter().position(|&h| h == hormone).expect("hormone listed")]
    }
}

/// Training and test windows in whole days, `[start, end)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Windows {
    pub train: DayInterval,
    pub test: DayInterval,
    /// The training window split into its cycles.
    pub train_cycles: Vec<DayInterval>,
    /// LH maxima inside the training window.
    pub train_peaks: Vec<f64>,
    pub test_peak: f64,
    /// Fewer than two training peaks.
    pub sub_threshold: bool,
}

/// Training window spanning `peaks_required` LH cycles after the transient,
/// and the immediately following cycle as the test window.
///
/// Cycle boundaries are peak-to-peak midpoints rounded to the nearest day and
/// shifted by the configured offset. A boundary beyond the last detected peak
/// is placed half a cycle after it.
pub fn build_windows(truth: &GroundTruth, peaks_required: usize, config: &ExperimentConfig) -> Result<Windows> {
    if peaks_required == 0 {
        return Err(Error::Window("at least one training peak is required".into()));
    }
    let peaks = &truth.lh_peak_times;
    let first = config.phase.transient_cycles;
    let needed = first + peaks_required + 1;
    if peaks.len() < needed {
        return Err(Error::Window(format!(
            "{} LH peaks in {} days, need {} ({} transient + {} training + 1 test); simulate a longer span",
            peaks.len(),
            config.span_days,
            needed,
            first,
            peaks_required
        )));
    }
    let offset = config.phase.boundary_offset_days;
    // boundary just before peak i
    let boundary = |i: usize| -> i64 {
        let mid = if i == 0 {
            peaks[0] - 0.5 * (peaks[1] - peaks[0])
        } else if i >= peaks.len() {
            let last = peaks[peaks.len() - 1];
            last + 0.5 * (last - peaks[peaks.len() - 2])
        } else {
            0.5 * (peaks[i - 1] + peaks[i])
        };
        mid.round() as i64 + offset
    };
    let test_index = first + peaks_required;
    let train = DayInterval { start: boundary(first), end: boundary(test_index) };
    let test = DayInterval { start: train.end, end: boundary(test_index + 1) };
    let last_day = config.span_days.floor() as i64;
    if train.start < 0 || test.end > last_day + 1 {
        return Err(Error::Window(format!(
            "windows [{}, {}) and [{}, {}) exceed the simulated days 0..={last_day}; simulate a longer span",
            train.start, train.end, test.start, test.end
        )));
    }
    let train_cycles = (first..test_index).map(|i| DayInterval { start: boundary(i), end: boundary(i + 1) }).collect();
    Ok(Windows {
        train,
        test,
        train_cycles,
        train_peaks: peaks[first..test_index].to_vec(),
        test_peak: peaks[test_index],
        sub_threshold: peaks_required < 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_override_is_identity() {
        let cfg = ExperimentConfig::default();
        let n = nominal_parameters();
        assert_eq!(make_individual(n.alpha_LH, n.Km_LH, &cfg).unwrap(), n);
        let p = make_individual(0.9, n.Km_LH, &cfg).unwrap();
        for name in ParameterSet::FIELD_NAMES {
            if *name != "alpha_LH" {
                assert_eq!(p.get(name), n.get(name));
            }
        }
        assert!(make_individual(-1.0, 100.0, &cfg).is_err());
        assert!(make_individual(0.8, 1e9, &cfg).is_err());
    }
}
