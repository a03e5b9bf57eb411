use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use hmcycle::dde::{solve_clark, write_trajectory_csv};
use hmcycle::experiment::{
    build_windows, fit_trial, make_individual, period_sweep, simulate_individual, sweep, write_overlay_csv,
    write_period_csv, write_report_csv, ExperimentCell,
};
use hmcycle::gp::{fit, GpModel};
use hmcycle::phase::{segment_phases, DailySeries};
use hmcycle::{nominal_parameters, Error, Hormone, ParameterSet};
use serde_json::json;

use crate::config::{ConfigError, RunConfig, ECHO_FILE};

/// Why a command stopped. Maps onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
    /// Outputs were written but some cells failed.
    Partial(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Partial(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) | Failure::Partial(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidInput(_) | Error::Window(_) | Error::Io(_) | Error::Json(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

/// Creates the output directory and writes the resolved config into it.
pub fn prepare_output(dir: &Path, config: &RunConfig) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
    let text = config.to_toml()?;
    let mut out = create(dir, ECHO_FILE)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn load_parameters(config: &RunConfig) -> Result<ParameterSet, Failure> {
    match &config.simulate.parameters {
        Some(path) => ParameterSet::from_file(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display()))),
        None => Ok(nominal_parameters()),
    }
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Outcome {
    let mut out = create(dir, name)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(Error::from)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn simulate(config: &RunConfig, dir: &Path) -> Outcome {
    let s = &config.simulate;
    let params = load_parameters(config)?;
    let traj = solve_clark(&params, s.span_days, &config.solver)?;

    let n = (s.span_days / s.sample_step + 1e-9).floor() as usize;
    let times: Vec<f64> = (0..=n).map(|i| i as f64 * s.sample_step).collect();
    let mut out = create(dir, "trajectory.csv")?;
    write_trajectory_csv(&mut out, &traj, &params, &times)?;
    out.flush()?;

    let days = s.span_days.floor() as i64;
    let lh = (0..=days)
        .map(|d| traj.eval(d as f64).map(|y| Hormone::LH.level(&y, &params)))
        .collect::<hmcycle::Result<Vec<_>>>()?;
    let lh = DailySeries::new(0, lh, Hormone::LH)?;
    let seg = segment_phases(&lh, &config.experiment.phase)?;
    let mut out = create(dir, "phases.csv")?;
    writeln!(out, "cycle,follicular_start,follicular_end,ovulation_day,luteal_start,luteal_end")?;
    for (i, c) in seg.cycles.iter().enumerate() {
        writeln!(
            out,
            "{i},{},{},{},{},{}",
            c.follicular.start, c.follicular.end, c.ovulation, c.luteal.start, c.luteal.end
        )?;
    }
    out.flush()?;
    Ok(())
}

fn read_series(path: &Path) -> Result<(Vec<f64>, Vec<f64>), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let (mut t, mut y) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match fields.as_slice() {
            [a, b] => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some((a, b)) => {
                t.push(a);
                y.push(b);
            }
            // header
            None if t.is_empty() && i == 0 => continue,
            None => {
                return Err(Failure::Usage(format!("{}:{}: expected `day,value`, got `{line}`", path.display(), i + 1)))
            }
        }
    }
    Ok((t, y))
}

fn grid(range: [f64; 3]) -> Vec<f64> {
    let [a, b, step] = range;
    let n = ((b - a) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| a + i as f64 * step).collect()
}

fn write_prediction(dir: &Path, times: &[f64], mean: &[f64], std: &[f64]) -> Outcome {
    let mut out = create(dir, "prediction.csv")?;
    writeln!(out, "t,mean,std")?;
    for ((t, m), s) in times.iter().zip(mean).zip(std) {
        writeln!(out, "{t},{m},{s}")?;
    }
    out.flush()?;
    Ok(())
}

fn hyperparameters(model: &GpModel) -> serde_json::Value {
    let k = model.kernel();
    let mut map = serde_json::Map::new();
    for (name, v) in k.param_names().into_iter().zip(k.params()) {
        map.insert(name, json!(v));
    }
    map.insert("noise_variance".into(), json!(model.noise_variance()));
    serde_json::Value::Object(map)
}

pub fn fit_command(config: &RunConfig, dir: &Path) -> Outcome {
    match &config.fit.data {
        Some(path) => fit_data(config, path, dir),
        None => fit_nominal(config, dir),
    }
}

fn fit_data(config: &RunConfig, path: &Path, dir: &Path) -> Outcome {
    let (t, y) = read_series(path)?;
    if t.len() < 2 {
        return Err(Failure::Usage(format!("{}: need at least two observations", path.display())));
    }
    let n = y.len() as f64;
    let mu = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    let targets: Vec<f64> = y.iter().map(|v| (v - mu) / sd).collect();

    let exp = &config.experiment;
    let (lo, hi) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let kernel = exp.kernel.initial_kernel(hi - lo, exp.expected_period);
    let mut opt = config.gp.clone();
    opt.bounds.pe_frequency = (1.0 / exp.period_band.1, 1.0 / exp.period_band.0);
    let model = fit(&t, &targets, &kernel, &opt)?;

    let times = grid(config.fit.predict.unwrap_or([lo, hi, 1.0]));
    let p = model.predict(&times)?;
    let mean: Vec<f64> = p.mean.iter().map(|m| m * sd + mu).collect();
    let std: Vec<f64> = p.variance.iter().map(|v| v.sqrt() * sd).collect();
    write_prediction(dir, &times, &mean, &std)?;
    fs::write(dir.join("model.json"), model.to_json()?)?;
    write_json(
        dir,
        "summary.json",
        &json!({
            "data": path.display().to_string(),
            "observations": t.len(),
            "target_mean": mu,
            "target_scale": sd,
            "log_marginal_likelihood": model.log_marginal_likelihood(),
            "hyperparameters": hyperparameters(&model),
        }),
    )
}

fn fit_nominal(config: &RunConfig, dir: &Path) -> Outcome {
    let harness = config.harness();
    let exp = &harness.experiment;
    let cells = exp.grid()?;
    let cell: &ExperimentCell = cells.first().ok_or_else(|| Failure::Usage("empty experiment grid".into()))?;
    let params = make_individual(cell.alpha_lh, cell.km_lh, exp)?;
    let truth = simulate_individual(&params, &harness.solver, exp)?;
    let windows = build_windows(&truth, cell.peaks_required, exp)?;
    let hormone = config.fit.hormone;
    let f = fit_trial(&truth, &windows, cell, hormone, config.fit.trial, &harness)?;

    let range = config.fit.predict.unwrap_or([windows.test.start as f64, (windows.test.end - 1) as f64, 1.0]);
    let times = grid(range);
    let (mean, std) = f.predict(&times)?;
    write_prediction(dir, &times, &mean, &std)?;
    fs::write(dir.join("model.json"), f.model.to_json()?)?;

    let mut out = create(dir, "observations.csv")?;
    writeln!(out, "day,value")?;
    for (t, v) in f.observations.times.iter().zip(&f.observations.values) {
        writeln!(out, "{t},{v}")?;
    }
    out.flush()?;

    write_json(
        dir,
        "summary.json",
        &json!({
            "hormone": hormone.label(),
            "event_kind": hormone.scored_event().to_string(),
            "cell": cell,
            "trial": config.fit.trial,
            "windows": windows,
            "provenance": f.observations.provenance,
            "target_mean": f.target_mean,
            "target_scale": f.target_scale,
            "log_marginal_likelihood": f.model.log_marginal_likelihood(),
            "hyperparameters": hyperparameters(&f.model),
            "predicted_event_days": f.predicted_events.days,
            "truth_event_days": f.truth_events.days,
            "accuracy": format!("{:.2}/{:.1}", f.hits, f.truth_events.len() as f64),
        }),
    )
}

pub fn experiment(config: &RunConfig, dir: &Path) -> Outcome {
    let harness = config.harness();
    let cells = harness.experiment.grid()?;
    let report = sweep(&cells, &harness)?;

    let mut out = create(dir, "report.csv")?;
    write_report_csv(&mut out, &report)?;
    out.flush()?;
    let mut out = create(dir, "overlay.csv")?;
    write_overlay_csv(&mut out, &report)?;
    out.flush()?;
    let mut out = create(dir, "summary.json")?;
    serde_json::to_writer_pretty(&mut out, &report).map_err(Error::from)?;
    writeln!(out)?;
    out.flush()?;

    let failed = report.failed_cells();
    if failed > 0 {
        return Err(Failure::Partial(format!(
            "{failed} of {} cells had failures; see summary.json",
            report.cells.len()
        )));
    }
    Ok(())
}

pub fn period_sweep_command(config: &RunConfig, dir: &Path) -> Outcome {
    let harness = config.harness();
    let exp = &harness.experiment;
    if exp.alpha_grid.is_empty() || exp.km_grid.is_empty() {
        return Err(Failure::Usage(
            "[experiment] alpha_grid and km_grid must be nonempty (or use --preset fig1b)".into(),
        ));
    }
    let cells = period_sweep(&exp.alpha_grid, &exp.km_grid, &harness)?;
    let mut out = create(dir, "period_sweep.csv")?;
    write_period_csv(&mut out, &cells)?;
    out.flush()?;
    Ok(())
}
