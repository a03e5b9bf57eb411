//! Integrator for delay differential equations with constant delays.
//!
//! Method of steps with the Bogacki–Shampine 3(2) embedded pair and a cubic
//! Hermite continuous extension. Lagged states are read from the history
//! function before `t0` and from the solver's own dense output afterwards.
//! Steps never exceed the smallest positive delay, so every lagged lookup
//! lands in an already accepted part of the solution, and the mesh is forced
//! through `t0 + k * tau` (k = 1..=4) where low-order derivative
//! discontinuities propagate.

mod clark;
mod trajectory;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use clark::{solve_clark, solve_clark_from, write_trajectory_csv, TRAJECTORY_CSV_HEADER};
pub use trajectory::Trajectory;

/// State for every `t <= t0`.
pub type HistoryFunction = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Number of propagated discontinuity points forced into the mesh per delay.
const DISCONTINUITY_ORDER: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest step, in days.
    pub max_step: f64,
    pub max_steps: usize,
    /// Control the local error per unit of time (estimate divided by the
    /// step length) instead of per step.
    pub error_per_unit_step: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { rel_tol: 1e-6, abs_tol: 1e-8, max_step: 0.5, max_steps: 1_000_000, error_per_unit_step: true }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.max_step > 0.0
            && self.max_steps > 0
            && self.rel_tol.is_finite()
            && self.abs_tol.is_finite()
            && self.max_step.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("solver settings must be positive: {self:?}")))
        }
    }
}

/// An initial-value problem `y'(t) = f(t, y(t), y(t - tau_1), ..., y(t - tau_m))`.
///
/// `rhs(t, y, lagged, dy)` receives one lagged state per entry of `delays`, in order.
pub struct DdeProblem<F> {
    pub rhs: F,
    pub delays: Vec<f64>,
    pub history: HistoryFunction,
    pub t0: f64,
    pub t1: f64,
    pub initial_state: Vec<f64>,
}

impl<F> DdeProblem<F>
where
    F: Fn(f64, &[f64], &[&[f64]], &mut [f64]) -> Result<()>,
{
    fn validate(&self) -> Result<()> {
        if !(self.t1 > self.t0) || !self.t0.is_finite() || !self.t1.is_finite() {
            return Err(Error::InvalidInput(format!("time span [{}, {}] must satisfy t1 > t0", self.t0, self.t1)));
        }
        if let Some(d) = self.delays.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(Error::InvalidInput(format!("delay {d} must be finite and >= 0")));
        }
        if self.initial_state.is_empty() || self.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("initial state must be nonempty and finite".into()));
        }
        Ok(())
    }
}

/// Supplies lagged states during integration.
struct LagSource<'a> {
    history: &'a HistoryFunction,
    t0: f64,
    dim: usize,
}

impl LagSource<'_> {
    fn fill(&self, sol: &Trajectory, t_lag: f64, current: &[f64], zero_delay: bool, out: &mut [f64]) {
        if zero_delay {
            out.copy_from_slice(current);
        } else if t_lag <= self.t0 {
            let h = (self.history)(t_lag);
            debug_assert_eq!(h.len(), self.dim);
            out.copy_from_slice(&h);
        } else {
            // steps never exceed the smallest positive delay, so the lag is
            // already covered up to roundoff
            sol.interpolate(t_lag.min(sol.t1()), out);
        }
    }
}

struct Workspace {
    lag_buf: Vec<Vec<f64>>,
}

impl Workspace {
    fn eval<F>(
        &mut self,
        problem: &DdeProblem<F>,
        lags: &LagSource<'_>,
        sol: &Trajectory,
        t: f64,
        y: &[f64],
        dy: &mut [f64],
    ) -> Result<()>
    where
        F: Fn(f64, &[f64], &[&[f64]], &mut [f64]) -> Result<()>,
    {
        for (buf, &tau) in self.lag_buf.iter_mut().zip(&problem.delays) {
            lags.fill(sol, t - tau, y, tau == 0.0, buf);
        }
        let refs: Vec<&[f64]> = self.lag_buf.iter().map(|b| b.as_slice()).collect();
        (problem.rhs)(t, y, &refs, dy)
    }
}

fn breakpoints(t0: f64, t1: f64, delays: &[f64]) -> Vec<f64> {
    let mut pts: Vec<f64> = delays
        .iter()
        .filter(|&&d| d > 0.0)
        .flat_map(|&d| (1..=DISCONTINUITY_ORDER).map(move |k| t0 + k as f64 * d))
        .filter(|&t| t > t0 && t < t1)
        .collect();
    pts.push(t1);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
    pts
}

/// Integrates `problem` over `[t0, t1]`.
pub fn integrate<F>(problem: &DdeProblem<F>, config: &SolverConfig) -> Result<Trajectory>
where
    F: Fn(f64, &[f64], &[&[f64]], &mut [f64]) -> Result<()>,
{
    problem.validate()?;
    config.validate()?;

    let dim = problem.initial_state.len();
    let (t0, t1) = (problem.t0, problem.t1);
    let lags = LagSource { history: &problem.history, t0, dim };
    let mut ws = Workspace { lag_buf: vec![vec![0.0; dim]; problem.delays.len()] };
    let min_delay = problem.delays.iter().copied().filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min);
    let stops = breakpoints(t0, t1, &problem.delays);
    let mut next_stop = 0;

    let mut sol = Trajectory::new(dim);
    let mut t = t0;
    let mut y = problem.initial_state.clone();
    let mut k1 = vec![0.0; dim];
    ws.eval(problem, &lags, &sol, t, &y, &mut k1)?;
    sol.push(t, &y, &k1);

    let (mut k2, mut k3, mut k4) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];

    let mut h = initial_step(&y, &k1, config).min(t1 - t0);
    // the embedded estimate is O(h^3), or O(h^2) per unit step
    let order = if config.error_per_unit_step { 2.0 } else { 3.0 };
    let mut steps = 0usize;

    while t < t1 {
        if steps >= config.max_steps {
            return Err(Error::IntegrationFailure { t, reason: format!("max_steps = {} exceeded", config.max_steps) });
        }
        steps += 1;

        h = h.min(config.max_step).min(min_delay);
        while stops[next_stop] <= t {
            next_stop += 1;
        }
        let stop = stops[next_stop];
        let mut hit_stop = false;
        if t + h >= stop - 1e-12 * stop.abs().max(1.0) {
            h = stop - t;
            hit_stop = true;
        }
        if h <= 1e-12 * t.abs().max(1.0) {
            return Err(Error::IntegrationFailure { t, reason: format!("step size underflow (h = {h:e})") });
        }

        for i in 0..dim {
            stage[i] = y[i] + 0.5 * h * k1[i];
        }
        ws.eval(problem, &lags, &sol, t + 0.5 * h, &stage, &mut k2)?;
        for i in 0..dim {
            stage[i] = y[i] + 0.75 * h * k2[i];
        }
        ws.eval(problem, &lags, &sol, t + 0.75 * h, &stage, &mut k3)?;
        for i in 0..dim {
            y_new[i] = y[i] + h * (2.0 / 9.0 * k1[i] + 1.0 / 3.0 * k2[i] + 4.0 / 9.0 * k3[i]);
        }
        let t_new = if hit_stop { stop } else { t + h };
        ws.eval(problem, &lags, &sol, t_new, &y_new, &mut k4)?;

        let mut acc = 0.0;
        for i in 0..dim {
            let e = h * (-5.0 / 72.0 * k1[i] + 1.0 / 12.0 * k2[i] + 1.0 / 9.0 * k3[i] - 0.125 * k4[i]);
            let sc = config.abs_tol + config.rel_tol * y[i].abs().max(y_new[i].abs());
            acc += (e / sc) * (e / sc);
        }
        let mut err = (acc / dim as f64).sqrt();
        if config.error_per_unit_step {
            err /= h;
        }

        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            if h <= 1e-10 * t.abs().max(1.0) {
                return Err(Error::Divergence { t });
            }
            h *= 0.25;
            continue;
        }

        if err <= 1.0 {
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k4);
            sol.push(t, &y, &k1);
            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-1.0 / order)).clamp(0.2, 5.0) };
            h *= grow;
        } else {
            h *= (0.9 * err.powf(-1.0 / order)).max(0.2);
        }
    }
    Ok(sol)
}

fn initial_step(y: &[f64], dy: &[f64], config: &SolverConfig) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (yi, fi) in y.iter().zip(dy) {
        let sc = config.abs_tol + config.rel_tol * yi.abs();
        d0 += (yi / sc).powi(2);
        d1 += (fi / sc).powi(2);
    }
    let n = y.len() as f64;
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(config.max_step)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[allow(clippy::type_complexity)]
    fn decay() -> DdeProblem<impl Fn(f64, &[f64], &[&[f64]], &mut [f64]) -> Result<()>> {
        DdeProblem {
            rhs: |_t: f64, y: &[f64], _lag: &[&[f64]], dy: &mut [f64]| {
                dy[0] = -y[0];
                Ok(())
            },
            delays: vec![],
            history: Arc::new(|_t| vec![1.0]),
            t0: 0.0,
            t1: 1.0,
            initial_state: vec![1.0],
        }
    }

    #[test]
    fn exponential_decay() {
        let sol = integrate(&decay(), &SolverConfig::default()).unwrap();
        let y1 = sol.eval(1.0).unwrap()[0];
        assert!((y1 - (-1.0f64).exp()).abs() < 1e-6, "{y1}");
        assert_eq!(sol.eval(0.0).unwrap()[0], 1.0);
        assert_eq!(sol.t1(), 1.0);
    }

    #[test]
    fn dense_output_between_mesh_points() {
        let cfg = SolverConfig::default();
        let sol = integrate(&decay(), &cfg).unwrap();
        for w in sol.mesh().windows(2) {
            let tm = 0.5 * (w[0] + w[1]);
            let y = sol.eval(tm).unwrap()[0];
            assert!((y - (-tm).exp()).abs() < 10.0 * cfg.rel_tol, "t={tm}");
        }
        for (i, &tm) in sol.mesh().iter().enumerate() {
            assert_eq!(sol.eval(tm).unwrap(), sol.state_at(i).to_vec());
        }
    }

    #[test]
    fn mesh_is_strictly_increasing_and_hits_discontinuities() {
        let p = DdeProblem {
            rhs: |_t: f64, _y: &[f64], lag: &[&[f64]], dy: &mut [f64]| {
                dy[0] = -lag[0][0];
                Ok(())
            },
            delays: vec![0.7],
            history: Arc::new(|_t| vec![1.0]),
            t0: 0.0,
            t1: 4.0,
            initial_state: vec![1.0],
        };
        let sol = integrate(&p, &SolverConfig::default()).unwrap();
        assert!(sol.mesh().windows(2).all(|w| w[1] > w[0]));
        for k in 1..=4 {
            let bp = 0.7 * k as f64;
            assert!(sol.mesh().iter().any(|&m| (m - bp).abs() < 1e-12), "missing {bp}");
        }
        assert!(sol.mesh().windows(2).all(|w| w[1] - w[0] <= 0.7 + 1e-12));
    }

    #[test]
    fn invalid_problems_rejected() {
        let mut p = decay();
        p.t1 = 0.0;
        assert!(integrate(&p, &SolverConfig::default()).is_err());
        let mut p = decay();
        p.delays = vec![-1.0];
        assert!(integrate(&p, &SolverConfig::default()).is_err());
        let cfg = SolverConfig { rel_tol: 0.0, ..SolverConfig::default() };
        assert!(integrate(&decay(), &cfg).is_err());
    }

    #[test]
    fn max_steps_reported() {
        let cfg = SolverConfig { max_steps: 3, ..SolverConfig::default() };
        let err = integrate(&decay(), &cfg).unwrap_err();
        assert!(matches!(err, Error::IntegrationFailure { .. }), "{err}");
    }

    #[test]
    fn blow_up_is_divergence_or_failure() {
        let p = DdeProblem {
            rhs: |_t: f64, y: &[f64], _lag: &[&[f64]], dy: &mut [f64]| {
                dy[0] = y[0] * y[0];
                Ok(())
            },
            delays: vec![],
            history: Arc::new(|_t| vec![1.0]),
            t0: 0.0,
            t1: 2.0,
            initial_state: vec![1.0],
        };
        assert!(integrate(&p, &SolverConfig::default()).is_err());
    }
}
