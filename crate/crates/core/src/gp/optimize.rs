use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::kernel::{HyperBounds, KernelSpec};
use super::model::GpModel;
use crate::error::{Error, Result};

/// Multi-start quasi-Newton settings for evidence maximisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Number of starts; the first one is the supplied initial point.
    pub starts: usize,
    pub max_iterations: usize,
    /// Stop once the projected gradient's max-norm drops below this.
    pub gradient_tolerance: f64,
    /// Standard deviation of the log-space perturbation for extra starts.
    pub start_spread: f64,
    pub seed: u64,
    pub initial_noise_variance: f64,
    /// Box for the noise variance (natural scale).
    pub noise_bounds: (f64, f64),
    pub bounds: HyperBounds,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            starts: 8,
            max_iterations: 200,
            gradient_tolerance: 1e-5,
            start_spread: 1.0,
            seed: 0,
            initial_noise_variance: 1e-2,
            noise_bounds: (1e-8, 1e2),
            bounds: HyperBounds::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.noise_bounds;
        if self.starts == 0 {
            return Err(Error::Config("optimizer needs at least one start".into()));
        }
        if !(self.gradient_tolerance > 0.0) || !(self.start_spread >= 0.0) {
            return Err(Error::Config("gradient tolerance must be positive and start spread nonnegative".into()));
        }
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::Config(format!("invalid noise bounds ({lo}, {hi})")));
        }
        if !(self.initial_noise_variance > 0.0) {
            return Err(Error::Config("initial noise variance must be positive".into()));
        }
        self.bounds.validate()
    }
}

/// How one start ended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub initial_evidence: f64,
    pub final_evidence: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final kernel hyperparameters then noise variance, log scale.
    pub log_hyperparameters: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: GpModel,
    /// `None` for starts whose initial point could not be evaluated.
    pub starts: Vec<Option<StartOutcome>>,
}

/// Maximises the log marginal likelihood over the kernel hyperparameters and
/// the noise variance, starting from `kernel` and `opt.initial_noise_variance`.
pub fn fit(inputs: &[f64], targets: &[f64], kernel: &KernelSpec, opt: &OptimizerConfig) -> Result<GpModel> {
    fit_detailed(inputs, targets, kernel, opt).map(|o| o.model)
}

pub fn fit_detailed(inputs: &[f64], targets: &[f64], kernel: &KernelSpec, opt: &OptimizerConfig) -> Result<FitOutcome> {
    opt.validate()?;
    kernel.validate()?;
    if inputs.len() < 2 || inputs.len() != targets.len() {
        return Err(Error::InvalidInput("fit needs at least two matching inputs and targets".into()));
    }
    let mut sorted = inputs.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("fit inputs must be distinct".into()));
    }

    let template = GpModel::new(kernel.clone(), opt.initial_noise_variance, 0.0, inputs.to_vec(), targets.to_vec())?;
    let (lo, hi) = bounds(kernel, opt);
    let x0 = clamp(template.log_hyperparameters(), &lo, &hi);

    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let normal = Normal::new(0.0, opt.start_spread.max(f64::MIN_POSITIVE)).expect("valid normal");
    let mut starts = Vec::with_capacity(opt.starts);
    for s in 0..opt.starts {
        let x = if s == 0 {
            x0.clone()
        } else {
            let perturbed = x0.iter().map(|v| v + normal.sample(&mut rng)).collect();
            clamp(perturbed, &lo, &hi)
        };
        starts.push(x);
    }

    let mut best: Option<(f64, GpModel)> = None;
    let mut outcomes = Vec::with_capacity(starts.len());
    for x in starts {
        match minimize(&template, x, &lo, &hi, opt) {
            Some((model, outcome)) => {
                if best.as_ref().is_none_or(|(e, _)| outcome.final_evidence > *e) {
                    best = Some((outcome.final_evidence, model));
                }
                outcomes.push(Some(outcome));
            }
            None => outcomes.push(None),
        }
    }
    match best {
        Some((_, model)) => Ok(FitOutcome { model, starts: outcomes }),
        None => Err(Error::Fit(format!("all {} starts failed to produce a finite evidence", opt.starts))),
    }
}

fn bounds(kernel: &KernelSpec, opt: &OptimizerConfig) -> (Vec<f64>, Vec<f64>) {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for (a, b) in kernel.kinds().into_iter().map(|k| opt.bounds.get(k)).chain([opt.noise_bounds]) {
        lo.push(a.ln());
        hi.push(b.ln());
    }
    (lo, hi)
}

fn clamp(mut x: Vec<f64>, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
    x
}

struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    model: GpModel,
}

/// Negative evidence and gradient at `x`, or `None` if it cannot be evaluated.
fn evaluate(template: &GpModel, x: Vec<f64>) -> Option<Point> {
    let model = template.with_log_hyperparameters(&x).ok()?;
    let (e, g) = model.log_marginal_likelihood_grad();
    if !e.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(Point { x, f: -e, g: g.into_iter().map(|v| -v).collect(), model })
}

/// Gradient with components that push against an active bound removed.
fn projected(p: &Point, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    p.g.iter()
        .enumerate()
        .map(|(i, &g)| {
            let at_lo = p.x[i] <= lo[i] && g > 0.0;
            let at_hi = p.x[i] >= hi[i] && g < 0.0;
            if at_lo || at_hi {
                0.0
            } else {
                g
            }
        })
        .collect()
}

const MAX_LOG_STEP: f64 = 2.0;

/// Projected BFGS with Armijo backtracking on the negative evidence.
fn minimize(
    template: &GpModel,
    x0: Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    opt: &OptimizerConfig,
) -> Option<(GpModel, StartOutcome)> {
    let n = x0.len();
    let mut cur = evaluate(template, x0)?;
    let initial_evidence = -cur.f;
    let mut h = identity(n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opt.max_iterations {
        let pg = projected(&cur, lo, hi);
        if pg.iter().all(|g| g.abs() < opt.gradient_tolerance) {
            converged = true;
            break;
        }
        iterations += 1;
        let free: Vec<bool> = pg.iter().zip(&cur.g).map(|(p, g)| *p != 0.0 || *g == 0.0).collect();
        let mut d = direction(&h, &pg, &free);
        if dot(&d, &pg) >= 0.0 {
            h = identity(n);
            fresh = true;
            d = pg.iter().map(|g| -g).collect();
        }
        let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale > MAX_LOG_STEP {
            d.iter_mut().for_each(|v| *v *= MAX_LOG_STEP / scale);
        }

        let Some(next) = line_search(template, &cur, &d, lo, hi) else {
            if fresh {
                break;
            }
            h = identity(n);
            fresh = true;
            continue;
        };

        let s: Vec<f64> = next.x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.g.iter().zip(&cur.g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if fresh {
                let yy = dot(&y, &y);
                h = identity(n);
                h.iter_mut().for_each(|v| *v *= sy / yy);
                fresh = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
        cur = next;
    }

    let outcome = StartOutcome {
        initial_evidence,
        final_evidence: -cur.f,
        iterations,
        converged,
        log_hyperparameters: cur.x.clone(),
    };
    Some((cur.model, outcome))
}

fn line_search(template: &GpModel, cur: &Point, d: &[f64], lo: &[f64], hi: &[f64]) -> Option<Point> {
    let mut step = 1.0;
    for _ in 0..40 {
        let x: Vec<f64> = (0..d.len()).map(|i| (cur.x[i] + step * d[i]).clamp(lo[i], hi[i])).collect();
        let dx: Vec<f64> = x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
        if dx.iter().all(|v| *v == 0.0) {
            return None;
        }
        if let Some(p) = evaluate(template, x) {
            if p.f <= cur.f + 1e-4 * dot(&cur.g, &dx) {
                return Some(p);
            }
        }
        step *= 0.5;
    }
    None
}

fn direction(h: &[f64], g: &[f64], free: &[bool]) -> Vec<f64> {
    let n = g.len();
    (0..n)
        .map(|i| {
            if !free[i] {
                return 0.0;
            }
            -(0..n).filter(|&j| free[j]).map(|j| h[i * n + j] * g[j]).sum::<f64>()
        })
        .collect()
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    (0..n).for_each(|i| m[i * n + i] = 1.0);
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Vec<f64>, Vec<f64>) {
        let xs: Vec<f64> = (0..40).map(f64::from).collect();
        let ys = xs.iter().map(|x| (2.0 * std::f64::consts::PI * x / 14.0).sin() + 0.1 * (x * 0.37).cos()).collect();
        (xs, ys)
    }

    #[test]
    fn improves_on_every_start() {
        let (xs, ys) = data();
        let k = KernelSpec::sum(KernelSpec::rq(1.0, 8.0, 1.0), KernelSpec::periodic(1.0, 1.0, 1.0 / 14.0));
        let out = fit_detailed(&xs, &ys, &k, &OptimizerConfig::default()).unwrap();
        let best = out.model.log_marginal_likelihood();
        for s in out.starts.iter().flatten() {
            assert!(s.final_evidence >= s.initial_evidence);
            assert!(best >= s.initial_evidence);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (xs, ys) = data();
        let k = KernelSpec::rq(1.0, 5.0, 1.0);
        let cfg = OptimizerConfig { seed: 42, ..Default::default() };
        let a = fit(&xs, &ys, &k, &cfg).unwrap();
        let b = fit(&xs, &ys, &k, &cfg).unwrap();
        assert_eq!(a.log_hyperparameters(), b.log_hyperparameters());
    }

    #[test]
    fn rejects_duplicates_and_bad_config() {
        let k = KernelSpec::rq(1.0, 1.0, 1.0);
        assert!(fit(&[1.0, 1.0], &[0.0, 1.0], &k, &OptimizerConfig::default()).is_err());
        assert!(fit(&[1.0], &[0.0], &k, &OptimizerConfig::default()).is_err());
        let cfg = OptimizerConfig { starts: 0, ..Default::default() };
        assert!(fit(&[1.0, 2.0], &[0.0, 1.0], &k, &cfg).is_err());
    }

    #[test]
    fn quadratic_bfgs_update_satisfies_secant() {
        let mut h = identity(2);
        let s = [0.3, -0.1];
        let y = [0.9, 0.2];
        bfgs_update(&mut h, &s, &y, dot(&s, &y));
        let hy = [h[0] * y[0] + h[1] * y[1], h[2] * y[0] + h[3] * y[1]];
        assert!((hy[0] - s[0]).abs() < 1e-12 && (hy[1] - s[1]).abs() < 1e-12);
    }
}
