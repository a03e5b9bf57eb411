use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampling::{add_noise, downsample, trial_seed, ObservationSet};
use super::truth::{build_windows, make_individual, simulate_individual, GroundTruth, Windows};
use super::{ExperimentCell, HarnessConfig, KernelChoice, Strategy};
use crate::error::{Error, Result};
use crate::gp::{fit, GpModel};
use crate::phase::{accuracy, detect_events_with, mean_std, DailySeries, EventKind, EventSet, Hormone, StdConvention};

pub const REPORT_CSV_HEADER: &str =
    "noise_ratio,sampling_period,strategy,hormone,event_kind,numerator,denominator,trials";

/// Accuracy for one hormone, numerator averaged over the successful trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HormoneAccuracy {
    pub hormone: Hormone,
    pub event_kind: EventKind,
    pub numerator: f64,
    pub denominator: f64,
    /// Successful trials that entered the average.
    pub trials: usize,
    /// Per-trial correct days, `None` for failed trials.
    pub per_trial: Vec<Option<f64>>,
    pub truth_days: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub hormone: Hormone,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: ExperimentCell,
    pub windows: Option<Windows>,
    pub accuracy: Vec<HormoneAccuracy>,
    pub failures: Vec<TrialFailure>,
    /// Set when the cell could not run at all (simulation or window failure).
    pub error: Option<String>,
}

impl CellResult {
    pub fn failed(&self) -> bool {
        self.error.is_some() || !self.failures.is_empty()
    }

    pub fn get(&self, hormone: Hormone) -> Option<&HormoneAccuracy> {
        self.accuracy.iter().find(|a| a.hormone == hormone)
    }

    /// Mean of numerator / denominator over the hormones.
    pub fn mean_ratio(&self) -> f64 {
        self.accuracy.iter().map(|a| a.numerator / a.denominator).sum::<f64>() / self.accuracy.len().max(1) as f64
    }
}

/// Plot-ready point of truth, observation and GP posterior (first trial only).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayRow {
    pub cell: usize,
    pub hormone: Hormone,
    pub day: i64,
    pub window: String,
    pub truth: f64,
    pub observation: Option<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: HarnessConfig,
    pub seed_scheme: String,
    pub std_convention: StdConvention,
    pub cells: Vec<CellResult>,
    #[serde(skip)]
    pub overlays: Vec<OverlayRow>,
}

impl ExperimentReport {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.failed()).count()
    }
}

type SharedTruth = Result<Arc<GroundTruth>, String>;
type FitCache = Mutex<HashMap<Vec<u64>, Arc<Result<GpModel, String>>>>;

/// Runs every cell of `cells`. Trials execute on a pool of `experiment.jobs`
/// workers; results are gathered by index so the report does not depend on
/// the schedule.
pub fn sweep(cells: &[ExperimentCell], harness: &HarnessConfig) -> Result<ExperimentReport> {
    sweep_with_truths(cells, harness, &[])
}

/// As [`sweep`], reusing already simulated individuals where parameters match.
pub fn sweep_with_truths(
    cells: &[ExperimentCell],
    harness: &HarnessConfig,
    known: &[Arc<GroundTruth>],
) -> Result<ExperimentReport> {
    harness.solver.validate()?;
    harness.gp.validate()?;
    harness.experiment.validate()?;
    if cells.is_empty() {
        return Err(Error::Config("experiment grid is empty".into()));
    }
    for c in cells {
        c.validate()?;
    }
    let exp = &harness.experiment;

    // one simulation per distinct individual, windows per (individual, peaks)
    let mut truths: Vec<((u64, u64), SharedTruth)> = Vec::new();
    let mut setups: Vec<Result<(Arc<GroundTruth>, Windows), String>> = Vec::with_capacity(cells.len());
    for c in cells {
        let key = (c.alpha_lh.to_bits(), c.km_lh.to_bits());
        let truth = match truths.iter().find(|(k, _)| *k == key) {
            Some((_, t)) => t.clone(),
            None => {
                let t = make_individual(c.alpha_lh, c.km_lh, exp).and_then(|p| {
                    match known.iter().find(|t| t.params == p) {
                        Some(t) => Ok(t.clone()),
                        None => simulate_individual(&p, &harness.solver, exp).map(Arc::new),
                    }
                });
                let t = t.map_err(|e| e.to_string());
                truths.push((key, t.clone()));
                t
            }
        };
        setups.push(truth.and_then(|t| {
            let w = build_windows(&t, c.peaks_required, exp).map_err(|e| e.to_string())?;
            Ok((t, w))
        }));
    }

    let tasks: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .filter(|(i, _)| setups[*i].is_ok())
        .flat_map(|(i, c)| (0..c.trials).map(move |t| (i, t)))
        .collect();
    let cache: FitCache = Mutex::new(HashMap::new());
    let run = || {
        tasks
            .par_iter()
            .map(|&(i, trial)| {
                let (truth, windows) = setups[i].as_ref().expect("filtered");
                run_trial(truth, windows, &cells[i], i, trial, harness, &cache)
            })
            .collect::<Vec<_>>()
    };
    let outcomes = if exp.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(exp.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", exp.jobs)))?
            .install(run)
    } else {
        run()
    };

    let mut results = Vec::with_capacity(cells.len());
    let mut overlays = Vec::new();
    let mut next = outcomes.into_iter();
    for (i, c) in cells.iter().enumerate() {
        let (truth, windows) = match &setups[i] {
            Ok(s) => s,
            Err(e) => {
                results.push(CellResult {
                    cell: c.clone(),
                    windows: None,
                    accuracy: Vec::new(),
                    failures: Vec::new(),
                    error: Some(e.clone()),
                });
                continue;
            }
        };
        let trials: Vec<TrialOutcome> = next.by_ref().take(c.trials).collect();
        let (result, mut rows) = aggregate(c, truth, windows, trials, exp.phase.std_convention);
        results.push(result);
        overlays.append(&mut rows);
    }

    Ok(ExperimentReport {
        config: harness.clone(),
        seed_scheme: "trial seed = splitmix64 chain over (experiment.seed, alpha_LH, Km_LH, sampling period, noise ratio, peaks, trial); \
                      the same grid phase is used for every hormone of a trial; noise uses ChaCha8 stream 1 + hormone index; \
                      optimizer multi-starts use gp.seed"
            .into(),
        std_convention: exp.phase.std_convention,
        cells: results,
        overlays,
    })
}

/// Runs a single cell on its own.
pub fn run_cell(cell: &ExperimentCell, harness: &HarnessConfig) -> Result<CellResult> {
    let mut report = sweep(std::slice::from_ref(cell), harness)?;
    Ok(report.cells.remove(0))
}

struct TrialOutcome {
    trial: usize,
    per_hormone: Vec<Result<f64, String>>,
    overlay: Vec<OverlayRow>,
}

fn truth_events(truth: &GroundTruth, windows: &Windows, hormone: Hormone, std: StdConvention) -> Result<Vec<i64>> {
    let test = truth.daily(hormone).slice(windows.test.start, windows.test.end)?;
    Ok(detect_events_with(&test, hormone.scored_event(), std)?.days.into_iter().collect())
}

fn aggregate(
    cell: &ExperimentCell,
    truth: &GroundTruth,
    windows: &Windows,
    trials: Vec<TrialOutcome>,
    std: StdConvention,
) -> (CellResult, Vec<OverlayRow>) {
    let mut failures = Vec::new();
    let mut accuracy = Vec::new();
    for (k, &h) in Hormone::ALL.iter().enumerate() {
        let per_trial: Vec<Option<f64>> = trials
            .iter()
            .map(|t| match &t.per_hormone[k] {
                Ok(v) => Some(*v),
                Err(reason) => {
                    failures.push(TrialFailure { trial: t.trial, hormone: h, reason: reason.clone() });
                    None
                }
            })
            .collect();
        let ok: Vec<f64> = per_trial.iter().flatten().copied().collect();
        let truth_days = truth_events(truth, windows, h, std).unwrap_or_default();
        accuracy.push(HormoneAccuracy {
            hormone: h,
            event_kind: h.scored_event(),
            numerator: if ok.is_empty() { 0.0 } else { ok.iter().sum::<f64>() / ok.len() as f64 },
            denominator: truth_days.len() as f64,
            trials: ok.len(),
            per_trial,
            truth_days,
        });
    }
    failures.sort_by_key(|f| (f.trial, f.hormone));
    let overlays = trials.into_iter().flat_map(|t| t.overlay).collect();
    (CellResult { cell: cell.clone(), windows: Some(windows.clone()), accuracy, failures, error: None }, overlays)
}

fn run_trial(
    truth: &GroundTruth,
    windows: &Windows,
    cell: &ExperimentCell,
    cell_index: usize,
    trial: usize,
    harness: &HarnessConfig,
    cache: &FitCache,
) -> TrialOutcome {
    let exp = &harness.experiment;
    let seed = trial_seed(exp.seed, &cell.seed_key(), trial);
    let mut per_hormone = Vec::with_capacity(Hormone::ALL.len());
    let mut overlay = Vec::new();
    for (k, &h) in Hormone::ALL.iter().enumerate() {
        let r = score_hormone(truth, windows, cell, h, k, seed, harness, cache, trial == 0);
        per_hormone.push(r.map(|(hits, rows)| {
            overlay.extend(rows.into_iter().map(|mut row| {
                row.cell = cell_index;
                row
            }));
            hits
        }));
    }
    TrialOutcome { trial, per_hormone, overlay }
}

/// One hormone's fit and prediction for one trial of a cell.
#[derive(Clone, Debug)]
pub struct TrialFit {
    pub observations: ObservationSet,
    /// Fitted on targets standardised by `target_mean` and `target_scale`.
    pub model: GpModel,
    pub target_mean: f64,
    pub target_scale: f64,
    /// Predicted levels on the test days.
    pub predicted: DailySeries,
    pub predicted_events: EventSet,
    pub truth_events: EventSet,
    /// Correct event days.
    pub hits: f64,
}

impl TrialFit {
    /// Posterior mean and standard deviation in hormone units.
    pub fn predict(&self, times: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = self.model.predict(times)?;
        let mean = p.mean.iter().map(|m| m * self.target_scale + self.target_mean).collect();
        let std = p.variance.iter().map(|v| v.sqrt() * self.target_scale).collect();
        Ok((mean, std))
    }
}

/// Samples, fits and scores one hormone exactly as trial `trial` of a sweep
/// over `cell` would.
pub fn fit_trial(
    truth: &GroundTruth,
    windows: &Windows,
    cell: &ExperimentCell,
    hormone: Hormone,
    trial: usize,
    harness: &HarnessConfig,
) -> Result<TrialFit> {
    cell.validate()?;
    let seed = trial_seed(harness.experiment.seed, &cell.seed_key(), trial);
    let k = Hormone::ALL.iter().position(|&h| h == hormone).expect("hormone listed");
    trial_fit(truth, windows, cell, hormone, k, seed, harness, None).map_err(Error::Fit)
}

#[allow(clippy::too_many_arguments)]
fn trial_fit(
    truth: &GroundTruth,
    windows: &Windows,
    cell: &ExperimentCell,
    hormone: Hormone,
    hormone_index: usize,
    seed: u64,
    harness: &HarnessConfig,
    cache: Option<&FitCache>,
) -> Result<TrialFit, String> {
    let exp = &harness.experiment;
    let std = exp.phase.std_convention;
    let err = |e: Error| e.to_string();
    let daily = truth.daily(hormone);
    let train_truth = daily.slice(windows.train.start, windows.train.end).map_err(err)?;

    let mut phase_rng = ChaCha8Rng::seed_from_u64(seed);
    let obs = downsample(
        &train_truth,
        &windows.train_cycles,
        cell.sampling_period,
        cell.strategy,
        exp.informed_mode,
        seed,
        &mut phase_rng,
    )
    .map_err(err)?;
    let (_, sigma_f) = mean_std(&train_truth.values, StdConvention::Population);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(1 + hormone_index as u64);
    let obs = add_noise(obs, cell.noise_ratio, sigma_f, &mut noise_rng).map_err(err)?;
    if obs.len() < 2 {
        return Err(format!("only {} observations in the training window", obs.len()));
    }

    let (mu, sd) = mean_std(&obs.values, StdConvention::Population);
    let sd = if sd > 0.0 { sd } else { 1.0 };
    let model = fit_cached(&obs.times, &obs.values, mu, sd, cell, hormone, harness, cache)?;

    let test_days: Vec<f64> = (windows.test.start..windows.test.end).map(|d| d as f64).collect();
    let pred = model.predict(&test_days).map_err(err)?;
    let levels: Vec<f64> = pred.mean.iter().map(|m| m * sd + mu).collect();
    let predicted = DailySeries::new(windows.test.start, levels, hormone).map_err(err)?;
    let predicted_events = detect_events_with(&predicted, hormone.scored_event(), std).map_err(err)?;
    let truth_test = daily.slice(windows.test.start, windows.test.end).map_err(err)?;
    let truth_events = detect_events_with(&truth_test, hormone.scored_event(), std).map_err(err)?;
    let hits = accuracy(&predicted_events, &truth_events).map_err(err)?.numerator;
    Ok(TrialFit {
        observations: obs,
        model,
        target_mean: mu,
        target_scale: sd,
        predicted,
        predicted_events,
        truth_events,
        hits,
    })
}

#[allow(clippy::too_many_arguments)]
fn score_hormone(
    truth: &GroundTruth,
    windows: &Windows,
    cell: &ExperimentCell,
    hormone: Hormone,
    hormone_index: usize,
    seed: u64,
    harness: &HarnessConfig,
    cache: &FitCache,
    keep_overlay: bool,
) -> Result<(f64, Vec<OverlayRow>), String> {
    let fit = trial_fit(truth, windows, cell, hormone, hormone_index, seed, harness, Some(cache))?;
    let mut rows = Vec::new();
    if keep_overlay {
        let daily = truth.daily(hormone);
        let obs = &fit.observations;
        let days: Vec<f64> = (windows.train.start..windows.test.end).map(|d| d as f64).collect();
        let (mean, std) = fit.predict(&days).map_err(|e| e.to_string())?;
        for (i, &d) in days.iter().enumerate() {
            let day = d as i64;
            rows.push(OverlayRow {
                cell: 0,
                hormone,
                day,
                window: if day < windows.train.end { "train" } else { "test" }.to_string(),
                truth: daily.value_on(day).unwrap_or(f64::NAN),
                observation: obs.times.iter().position(|&t| t == d).map(|j| obs.values[j]),
                mean: mean[i],
                std: std[i],
            });
        }
    }
    Ok((fit.hits, rows))
}

/// Fits on standardised targets. A fit is a pure function of its data, so
/// identical observation sets (across trials or strategies) share one fit.
#[allow(clippy::too_many_arguments)]
fn fit_cached(
    times: &[f64],
    values: &[f64],
    mu: f64,
    sd: f64,
    cell: &ExperimentCell,
    hormone: Hormone,
    harness: &HarnessConfig,
    cache: Option<&FitCache>,
) -> Result<GpModel, String> {
    let exp = &harness.experiment;
    let targets: Vec<f64> = values.iter().map(|v| (v - mu) / sd).collect();
    let span = times[times.len() - 1] - times[0];
    let kernel = cell.kernel.initial_kernel(span, exp.expected_period);
    let mut opt = harness.gp.clone();
    opt.bounds.pe_frequency = (1.0 / exp.period_band.1, 1.0 / exp.period_band.0);

    let mut key = vec![hormone as u64, matches!(cell.kernel, KernelChoice::Product) as u64];
    key.extend(times.iter().chain(values).map(|v| v.to_bits()));
    let Some(cache) = cache else {
        return fit(times, &targets, &kernel, &opt).map_err(|e| e.to_string());
    };
    if let Some(hit) = cache.lock().expect("cache lock").get(&key) {
        return (**hit).clone();
    }
    let model = Arc::new(fit(times, &targets, &kernel, &opt).map_err(|e| e.to_string()));
    cache.lock().expect("cache lock").entry(key).or_insert_with(|| model.clone());
    (*model).clone()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per (cell, hormone).
pub fn write_report_csv<W: Write>(mut out: W, report: &ExperimentReport) -> Result<()> {
    writeln!(out, "{REPORT_CSV_HEADER}")?;
    for r in &report.cells {
        let c = &r.cell;
        let strategy = match c.strategy {
            Strategy::Agnostic => "agnostic",
            Strategy::Informed => "informed",
        };
        if r.accuracy.is_empty() {
            for h in Hormone::ALL {
                writeln!(out, "{},{},{strategy},{h},{},,,0", c.noise_ratio, c.sampling_period, h.scored_event())?;
            }
            continue;
        }
        for a in &r.accuracy {
            writeln!(
                out,
                "{},{},{strategy},{},{},{:.2},{:.1},{}",
                c.noise_ratio, c.sampling_period, a.hormone, a.event_kind, a.numerator, a.denominator, a.trials
            )?;
        }
    }
    Ok(())
}

/// Long-format overlay of truth, observations and GP mean/std.
pub fn write_overlay_csv<W: Write>(mut out: W, report: &ExperimentReport) -> Result<()> {
    writeln!(out, "noise_ratio,sampling_period,strategy,hormone,day,window,truth,observation,gp_mean,gp_std")?;
    for row in &report.overlays {
        let c = &report.cells[row.cell].cell;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            c.noise_ratio,
            c.sampling_period,
            c.strategy,
            row.hormone,
            row.day,
            row.window,
            row.truth,
            fmt_opt(row.observation),
            row.mean,
            row.std
        )?;
    }
    Ok(())
}
