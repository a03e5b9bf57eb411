use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stationary covariance functions of one real input, built as an expression tree.
///
/// Every primitive carries its own variance multiplier. Hyperparameters are
/// enumerated in pre-order (left subtree before right subtree), and within a
/// primitive in declaration order; gradients use the same order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    /// `s * (1 + tau^2 / (2 shape l^2))^(-shape)`
    RationalQuadratic {
        variance: f64,
        length_scale: f64,
        shape: f64,
    },
    /// `s * exp(-2 sin^2(pi tau frequency) / l^2)`
    Periodic {
        variance: f64,
        length_scale: f64,
        frequency: f64,
    },
    /// `s` at zero lag, 0 elsewhere.
    White {
        variance: f64,
    },
    Sum(Box<KernelSpec>, Box<KernelSpec>),
    Product(Box<KernelSpec>, Box<KernelSpec>),
}

/// Role of a hyperparameter; selects its optimisation box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HyperKind {
    Variance,
    RqLength,
    RqShape,
    PeLength,
    PeFrequency,
}

/// Natural-scale optimisation box per hyperparameter role.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperBounds {
    pub variance: (f64, f64),
    pub rq_length: (f64, f64),
    pub rq_shape: (f64, f64),
    pub pe_length: (f64, f64),
    /// Default tops out at the Nyquist rate of daily data.
    pub pe_frequency: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        HyperBounds {
            variance: (1e-6, 1e6),
            rq_length: (1e-2, 1e4),
            rq_shape: (1e-3, 1e4),
            pe_length: (1e-2, 1e3),
            pe_frequency: (1e-3, 0.5),
        }
    }
}

impl HyperBounds {
    pub fn get(&self, kind: HyperKind) -> (f64, f64) {
        match kind {
            HyperKind::Variance => self.variance,
            HyperKind::RqLength => self.rq_length,
            HyperKind::RqShape => self.rq_shape,
            HyperKind::PeLength => self.pe_length,
            HyperKind::PeFrequency => self.pe_frequency,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("variance", self.variance),
            ("rq_length", self.rq_length),
            ("rq_shape", self.rq_shape),
            ("pe_length", self.pe_length),
            ("pe_frequency", self.pe_frequency),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::Config(format!("bounds for {name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

impl KernelSpec {
    pub fn rq(variance: f64, length_scale: f64, shape: f64) -> Self {
        KernelSpec::RationalQuadratic { variance, length_scale, shape }
    }

    pub fn periodic(variance: f64, length_scale: f64, frequency: f64) -> Self {
        KernelSpec::Periodic { variance, length_scale, frequency }
    }

    pub fn white(variance: f64) -> Self {
        KernelSpec::White { variance }
    }

    pub fn sum(a: KernelSpec, b: KernelSpec) -> Self {
        KernelSpec::Sum(Box::new(a), Box::new(b))
    }

    pub fn product(a: KernelSpec, b: KernelSpec) -> Self {
        KernelSpec::Product(Box::new(a), Box::new(b))
    }

    /// Covariance between inputs `x` and `x2`.
    pub fn eval(&self, x: f64, x2: f64) -> f64 {
        self.eval_lag((x - x2).abs())
    }

    /// Covariance at lag `tau = |x - x2|`.
    pub fn eval_lag(&self, tau: f64) -> f64 {
        match self {
            KernelSpec::RationalQuadratic { variance, length_scale, shape } => {
                variance * (1.0 + tau * tau / (2.0 * shape * length_scale * length_scale)).powf(-shape)
            }
            KernelSpec::Periodic { variance, length_scale, frequency } => {
                let s = (PI * tau * frequency).sin();
                variance * (-2.0 * s * s / (length_scale * length_scale)).exp()
            }
            KernelSpec::White { variance } => {
                if tau == 0.0 {
                    *variance
                } else {
                    0.0
                }
            }
            KernelSpec::Sum(a, b) => a.eval_lag(tau) + b.eval_lag(tau),
            KernelSpec::Product(a, b) => a.eval_lag(tau) * b.eval_lag(tau),
        }
    }

    /// Value at lag `tau`; writes d k / d log(theta) for every hyperparameter into `grad`.
    pub fn eval_lag_grad(&self, tau: f64, grad: &mut [f64]) -> f64 {
        debug_assert_eq!(grad.len(), self.n_params());
        match self {
            KernelSpec::RationalQuadratic { variance, length_scale, shape } => {
                let l2 = length_scale * length_scale;
                let u = tau * tau / (2.0 * shape * l2);
                let k = variance * (1.0 + u).powf(-shape);
                grad[0] = k;
                grad[1] = k * tau * tau / (l2 * (1.0 + u));
                grad[2] = shape * k * (u / (1.0 + u) - u.ln_1p());
                k
            }
            KernelSpec::Periodic { variance, length_scale, frequency } => {
                let l2 = length_scale * length_scale;
                let arg = PI * tau * frequency;
                let s = arg.sin();
                let k = variance * (-2.0 * s * s / l2).exp();
                grad[0] = k;
                grad[1] = k * 4.0 * s * s / l2;
                grad[2] = k * (-2.0 / l2) * (2.0 * arg).sin() * arg;
                k
            }
            KernelSpec::White { .. } => {
                let k = self.eval_lag(tau);
                grad[0] = k;
                k
            }
            KernelSpec::Sum(a, b) => {
                let (ga, gb) = grad.split_at_mut(a.n_params());
                a.eval_lag_grad(tau, ga) + b.eval_lag_grad(tau, gb)
            }
            KernelSpec::Product(a, b) => {
                let (ga, gb) = grad.split_at_mut(a.n_params());
                let ka = a.eval_lag_grad(tau, ga);
                let kb = b.eval_lag_grad(tau, gb);
                ga.iter_mut().for_each(|g| *g *= kb);
                gb.iter_mut().for_each(|g| *g *= ka);
                ka * kb
            }
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            KernelSpec::RationalQuadratic { .. } | KernelSpec::Periodic { .. } => 3,
            KernelSpec::White { .. } => 1,
            KernelSpec::Sum(a, b) | KernelSpec::Product(a, b) => a.n_params() + b.n_params(),
        }
    }

    /// Hyperparameters in pre-order, natural scale.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<f64>) {
        match self {
            KernelSpec::RationalQuadratic { variance, length_scale, shape } => {
                out.extend([*variance, *length_scale, *shape])
            }
            KernelSpec::Periodic { variance, length_scale, frequency } => {
                out.extend([*variance, *length_scale, *frequency])
            }
            KernelSpec::White { variance } => out.push(*variance),
            KernelSpec::Sum(a, b) | KernelSpec::Product(a, b) => {
                a.collect(out);
                b.collect(out);
            }
        }
    }

    /// Replaces the hyperparameters (natural scale, pre-order).
    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.n_params() {
            return Err(Error::InvalidInput(format!(
                "kernel has {} hyperparameters, got {}",
                self.n_params(),
                values.len()
            )));
        }
        self.assign(values);
        self.validate()
    }

    fn assign(&mut self, v: &[f64]) {
        match self {
            KernelSpec::RationalQuadratic { variance, length_scale, shape } => {
                (*variance, *length_scale, *shape) = (v[0], v[1], v[2])
            }
            KernelSpec::Periodic { variance, length_scale, frequency } => {
                (*variance, *length_scale, *frequency) = (v[0], v[1], v[2])
            }
            KernelSpec::White { variance } => *variance = v[0],
            KernelSpec::Sum(a, b) | KernelSpec::Product(a, b) => {
                let n = a.n_params();
                a.assign(&v[..n]);
                b.assign(&v[n..]);
            }
        }
    }

    pub fn kinds(&self) -> Vec<HyperKind> {
        let mut out = Vec::new();
        self.collect_kinds(&mut out);
        out
    }

    fn collect_kinds(&self, out: &mut Vec<HyperKind>) {
        use HyperKind::*;
        match self {
            KernelSpec::RationalQuadratic { .. } => out.extend([Variance, RqLength, RqShape]),
            KernelSpec::Periodic { .. } => out.extend([Variance, PeLength, PeFrequency]),
            KernelSpec::White { .. } => out.push(Variance),
            KernelSpec::Sum(a, b) | KernelSpec::Product(a, b) => {
                a.collect_kinds(out);
                b.collect_kinds(out);
            }
        }
    }

    /// Dotted hyperparameter names in pre-order, e.g. `sum.0.rq.length_scale`.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_names("", &mut out);
        out
    }

    fn collect_names(&self, prefix: &str, out: &mut Vec<String>) {
        let push = |out: &mut Vec<String>, tag: &str, names: &[&str]| {
            out.extend(names.iter().map(|n| format!("{prefix}{tag}.{n}")))
        };
        match self {
            KernelSpec::RationalQuadratic { .. } => push(out, "rq", &["variance", "length_scale", "shape"]),
            KernelSpec::Periodic { .. } => push(out, "pe", &["variance", "length_scale", "frequency"]),
            KernelSpec::White { .. } => push(out, "white", &["variance"]),
            KernelSpec::Sum(a, b) | KernelSpec::Product(a, b) => {
                let tag = if matches!(self, KernelSpec::Sum(..)) { "sum" } else { "product" };
                a.collect_names(&format!("{prefix}{tag}.0."), out);
                b.collect_names(&format!("{prefix}{tag}.1."), out);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let names = self.param_names();
        for (name, v) in names.iter().zip(self.params()) {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("kernel hyperparameter {name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    /// Gram matrix (row-major) on `inputs`.
    pub fn gram(&self, inputs: &[f64]) -> Vec<f64> {
        let n = inputs.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval(inputs[i], inputs[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::RationalQuadratic { variance, length_scale, shape } => {
                write!(f, "RQ(s2={variance:.4}, l={length_scale:.4}, a={shape:.4})")
            }
            KernelSpec::Periodic { variance, length_scale, frequency } => {
                write!(f, "PE(s2={variance:.4}, l={length_scale:.4}, w={frequency:.5})")
            }
            KernelSpec::White { variance } => write!(f, "White(s2={variance:.4})"),
            KernelSpec::Sum(a, b) => write!(f, "{a} + {b}"),
            KernelSpec::Product(a, b) => write!(f, "({a}) * ({b})"),
        }
    }
}
