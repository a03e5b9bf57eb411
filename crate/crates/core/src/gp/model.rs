use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::kernel::KernelSpec;
use super::linalg::Cholesky;
use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

/// Exact GP regression model with a constant mean and Gaussian noise.
///
/// The Cholesky factor of `K + noise I + jitter I` and the weight vector are
/// computed on construction; the model is immutable afterwards.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(into = "GpRecord", try_from = "GpRecord")]
pub struct GpModel {
    kernel: KernelSpec,
    noise_variance: f64,
    mean: f64,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    jitter: f64,
    chol: Cholesky,
    alpha: Vec<f64>,
}

/// Serialized form: everything needed to rebuild the factorisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpRecord {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
    pub mean: f64,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl From<GpModel> for GpRecord {
    fn from(m: GpModel) -> Self {
        GpRecord {
            kernel: m.kernel,
            noise_variance: m.noise_variance,
            mean: m.mean,
            inputs: m.inputs,
            targets: m.targets,
        }
    }
}

impl TryFrom<GpRecord> for GpModel {
    type Error = Error;
    fn try_from(r: GpRecord) -> Result<Self> {
        GpModel::new(r.kernel, r.noise_variance, r.mean, r.inputs, r.targets)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl GpModel {
    pub fn new(
        kernel: KernelSpec,
        noise_variance: f64,
        mean: f64,
        inputs: Vec<f64>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        kernel.validate()?;
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(Error::InvalidInput(format!("noise variance {noise_variance} must be >= 0")));
        }
        if !mean.is_finite() {
            return Err(Error::InvalidInput("mean must be finite".into()));
        }
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::InvalidInput(format!(
                "need matching nonempty inputs and targets, got {} and {}",
                inputs.len(),
                targets.len()
            )));
        }
        if inputs.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("training data must be finite".into()));
        }
        let n = inputs.len();
        let mut k = kernel.gram(&inputs);
        for i in 0..n {
            k[i * n + i] += noise_variance;
        }
        let (chol, jitter) = factor_with_jitter(&mut k, n)?;
        let mut alpha: Vec<f64> = targets.iter().map(|y| y - mean).collect();
        chol.solve(&mut alpha);
        Ok(GpModel { kernel, noise_variance, mean, inputs, targets, jitter, chol, alpha })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Diagonal jitter that made the covariance factorisable.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Kernel hyperparameters followed by the noise variance, log scale.
    pub fn log_hyperparameters(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.kernel.params().iter().map(|v| v.ln()).collect();
        p.push(self.noise_variance.ln());
        p
    }

    /// Same data and mean with new log hyperparameters (noise last).
    pub fn with_log_hyperparameters(&self, theta: &[f64]) -> Result<GpModel> {
        let (kernel, noise) = split_log_hyperparameters(&self.kernel, theta)?;
        GpModel::new(kernel, noise, self.mean, self.inputs.clone(), self.targets.clone())
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let r: f64 = self.targets.iter().zip(&self.alpha).map(|(y, a)| (y - self.mean) * a).sum();
        let n = self.inputs.len() as f64;
        -0.5 * r - 0.5 * self.chol.log_det() - 0.5 * n * (2.0 * PI).ln()
    }

    /// Evidence and its gradient with respect to [`Self::log_hyperparameters`].
    pub fn log_marginal_likelihood_grad(&self) -> (f64, Vec<f64>) {
        let n = self.inputs.len();
        let p = self.kernel.n_params();
        // A = alpha alpha^T - K^{-1}; dL/dtheta = 1/2 tr(A dK/dtheta)
        let mut a = self.chol.inverse();
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = self.alpha[i] * self.alpha[j] - a[i * n + j];
            }
        }
        let mut grad = vec![0.0; p + 1];
        let mut dk = vec![0.0; p];
        for i in 0..n {
            for j in 0..=i {
                let tau = (self.inputs[i] - self.inputs[j]).abs();
                self.kernel.eval_lag_grad(tau, &mut dk);
                let w = if i == j { 0.5 * a[i * n + i] } else { a[i * n + j] };
                for (g, d) in grad.iter_mut().zip(&dk) {
                    *g += w * d;
                }
            }
        }
        let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
        grad[p] = 0.5 * self.noise_variance * trace;
        (self.log_marginal_likelihood(), grad)
    }

    /// Posterior mean and variance of the latent function at `times`.
    pub fn predict(&self, times: &[f64]) -> Result<Prediction> {
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("prediction times must be finite".into()));
        }
        let n = self.inputs.len();
        let mut mean = Vec::with_capacity(times.len());
        let mut variance = Vec::with_capacity(times.len());
        let mut ks = vec![0.0; n];
        for &t in times {
            for (k, &x) in ks.iter_mut().zip(&self.inputs) {
                *k = self.kernel.eval(t, x);
            }
            mean.push(self.mean + ks.iter().zip(&self.alpha).map(|(k, a)| k * a).sum::<f64>());
            self.chol.solve_lower(&mut ks);
            let explained: f64 = ks.iter().map(|v| v * v).sum();
            variance.push((self.kernel.eval(t, t) - explained).max(0.0));
        }
        Ok(Prediction { mean, variance })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<GpModel> {
        Ok(serde_json::from_str(text)?)
    }
}

pub(crate) fn split_log_hyperparameters(template: &KernelSpec, theta: &[f64]) -> Result<(KernelSpec, f64)> {
    let p = template.n_params();
    if theta.len() != p + 1 {
        return Err(Error::InvalidInput(format!("expected {} log hyperparameters, got {}", p + 1, theta.len())));
    }
    let mut kernel = template.clone();
    let natural: Vec<f64> = theta[..p].iter().map(|v| v.exp()).collect();
    kernel.set_params(&natural)?;
    Ok((kernel, theta[p].exp()))
}

fn factor_with_jitter(k: &mut [f64], n: usize) -> Result<(Cholesky, f64)> {
    let mean_diag = (0..n).map(|i| k[i * n + i]).sum::<f64>() / n as f64;
    if !(mean_diag > 0.0 && mean_diag.is_finite()) {
        return Err(Error::Conditioning { jitter: 0.0 });
    }
    let mut rel = JITTER_START;
    let mut added = 0.0;
    loop {
        let jitter = rel * mean_diag;
        for i in 0..n {
            k[i * n + i] += jitter - added;
        }
        added = jitter;
        if let Some(c) = Cholesky::factor(k, n) {
            return Ok((c, jitter));
        }
        if rel >= JITTER_MAX * (1.0 - 1e-12) {
            return Err(Error::Conditioning { jitter });
        }
        rel *= 10.0;
    }
}
