use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::truth::{make_individual, simulate_individual};
use super::HarnessConfig;
use crate::error::{Error, Result};
use crate::phase::{estimate_period_sampled, PeriodEstimate};

pub const PERIOD_CSV_HEADER: &str = "alpha,km_lh,period_days,status";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeriodStatus {
    Periodic,
    NonPeriodic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodCell {
    pub alpha_lh: f64,
    pub km_lh: f64,
    pub status: PeriodStatus,
    /// Present only for periodic cells.
    pub period: Option<f64>,
    pub estimate: Option<PeriodEstimate>,
    /// Why the cell is marked non-periodic.
    pub reason: Option<String>,
}

/// Period of every (alpha_LH, Km_LH) pair, alpha-major.
///
/// A cell is periodic when the solver succeeds, at least two cycles survive the
/// transient and the cycle lengths spread by no more than the configured
/// stability tolerance. Failing cells are marked, never propagated.
pub fn period_sweep(alpha_grid: &[f64], km_grid: &[f64], harness: &HarnessConfig) -> Result<Vec<PeriodCell>> {
    let exp = &harness.experiment;
    if alpha_grid.is_empty() || km_grid.is_empty() {
        return Err(Error::Config("period sweep grids must be nonempty".into()));
    }
    harness.solver.validate()?;
    exp.validate()?;
    // bounds are configuration errors, checked before any simulation
    for &a in alpha_grid {
        for &k in km_grid {
            make_individual(a, k, exp)?;
        }
    }
    let pairs: Vec<(f64, f64)> = alpha_grid.iter().flat_map(|&a| km_grid.iter().map(move |&k| (a, k))).collect();
    let run = || pairs.par_iter().map(|&(a, k)| period_cell(a, k, harness)).collect::<Vec<_>>();
    if exp.jobs > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(exp.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", exp.jobs)))?;
        Ok(pool.install(run))
    } else {
        Ok(run())
    }
}

fn period_cell(alpha_lh: f64, km_lh: f64, harness: &HarnessConfig) -> PeriodCell {
    let exp = &harness.experiment;
    let non_periodic = |reason: String, estimate: Option<PeriodEstimate>| PeriodCell {
        alpha_lh,
        km_lh,
        status: PeriodStatus::NonPeriodic,
        period: None,
        estimate,
        reason: Some(reason),
    };
    let truth = match make_individual(alpha_lh, km_lh, exp).and_then(|p| simulate_individual(&p, &harness.solver, exp))
    {
        Ok(t) => t,
        Err(e) => return non_periodic(e.to_string(), None),
    };
    let n = (exp.span_days / exp.dense_step).floor() as usize;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * exp.dense_step).collect();
    let lh = match truth.trajectory.channel(crate::model::StateVector::LH, &times) {
        Ok(v) => v,
        Err(e) => return non_periodic(e.to_string(), None),
    };
    match estimate_period_sampled(&times, &lh, &exp.phase) {
        Ok(est) if est.spread <= exp.stability_tolerance => PeriodCell {
            alpha_lh,
            km_lh,
            status: PeriodStatus::Periodic,
            period: Some(est.period),
            estimate: Some(est),
            reason: None,
        },
        Ok(est) => {
            let reason = format!("cycle lengths spread {:.3} days", est.spread);
            non_periodic(reason, Some(est))
        }
        Err(e) => non_periodic(e.to_string(), None),
    }
}

pub fn write_period_csv<W: Write>(mut out: W, cells: &[PeriodCell]) -> Result<()> {
    writeln!(out, "{PERIOD_CSV_HEADER}")?;
    for c in cells {
        match (&c.status, c.period) {
            (PeriodStatus::Periodic, Some(p)) => writeln!(out, "{},{},{p},periodic", c.alpha_lh, c.km_lh)?,
            _ => writeln!(out, "{},{},,non-periodic", c.alpha_lh, c.km_lh)?,
        }
    }
    Ok(())
}
