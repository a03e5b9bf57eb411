use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense solution of an initial-value problem.
///
/// Stores the accepted mesh together with the state and its derivative at every
/// mesh point; between mesh points the solution is the cubic Hermite
/// interpolant of the two step ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    derivs: Vec<f64>,
}

impl Trajectory {
    pub(crate) fn new(dim: usize) -> Self {
        Trajectory { dim, times: Vec::new(), states: Vec::new(), derivs: Vec::new() }
    }

    pub(crate) fn push(&mut self, t: f64, y: &[f64], dy: &[f64]) {
        debug_assert!(self.times.last().is_none_or(|&last| t > last));
        self.times.push(t);
        self.states.extend_from_slice(y);
        self.derivs.extend_from_slice(dy);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t1(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one point")
    }

    /// Accepted step times.
    pub fn mesh(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State stored at mesh point `i`.
    pub fn state_at(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn derivative_at(&self, i: usize) -> &[f64] {
        &self.derivs[i * self.dim..(i + 1) * self.dim]
    }

    /// Interpolates the state at `t` into `out`.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let (t0, t1) = (self.t0(), self.t1());
        if !(t >= t0 && t <= t1) {
            return Err(Error::OutOfRange { t, t0, t1 });
        }
        self.interpolate(t, out);
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// Interpolation on the segment containing `t`; `t` must lie in the span.
    pub(crate) fn interpolate(&self, t: f64, out: &mut [f64]) {
        // index of the first mesh point strictly greater than t
        let j = self.times.partition_point(|&m| m <= t);
        if j > 0 && self.times[j - 1] == t {
            out.copy_from_slice(self.state_at(j - 1));
            return;
        }
        let j = j.clamp(1, self.times.len() - 1);
        self.hermite(j - 1, t, out);
    }

    /// Cubic Hermite interpolation on segment `[times[i], times[i + 1]]`.
    pub(crate) fn hermite(&self, i: usize, t: f64, out: &mut [f64]) {
        let (ta, tb) = (self.times[i], self.times[i + 1]);
        let h = tb - ta;
        let s = (t - ta) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let (ya, yb) = (self.state_at(i), self.state_at(i + 1));
        let (fa, fb) = (self.derivative_at(i), self.derivative_at(i + 1));
        for k in 0..self.dim {
            out[k] = h00 * ya[k] + h * (h10 * fa[k] + h11 * fb[k]) + h01 * yb[k];
        }
    }

    /// Interpolates the state at each requested time (rows follow `times`).
    pub fn sample(&self, times: &[f64]) -> Result<Vec<Vec<f64>>> {
        times.iter().map(|&t| self.eval(t)).collect()
    }

    /// One component over the requested times.
    pub fn channel(&self, component: usize, times: &[f64]) -> Result<Vec<f64>> {
        let mut buf = vec![0.0; self.dim];
        times
            .iter()
            .map(|&t| {
                self.eval_into(t, &mut buf)?;
                Ok(buf[component])
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic() -> Trajectory {
        // y = t^3 - t, y' = 3t^2 - 1 on mesh 0, 0.5, 2
        let mut tr = Trajectory::new(1);
        for t in [0.0f64, 0.5, 2.0] {
            tr.push(t, &[t.powi(3) - t], &[3.0 * t * t - 1.0]);
        }
        tr
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let tr = cubic();
        for t in [0.1, 0.25, 0.7, 1.3, 1.999] {
            let y = tr.eval(t).unwrap()[0];
            assert!((y - (t * t * t - t)).abs() < 1e-13, "t={t}");
        }
    }

    #[test]
    fn mesh_points_are_exact_and_continuous() {
        let tr = cubic();
        assert_eq!(tr.eval(0.5).unwrap(), tr.state_at(1).to_vec());
        let mut left = [0.0];
        let mut right = [0.0];
        tr.hermite(0, 0.5, &mut left);
        tr.hermite(1, 0.5, &mut right);
        assert!((left[0] - right[0]).abs() <= 1e-12 * left[0].abs().max(1.0));
    }

    #[test]
    fn out_of_span_rejected() {
        let tr = cubic();
        assert!(matches!(tr.eval(-0.1), Err(Error::OutOfRange { .. })));
        assert!(matches!(tr.eval(2.1), Err(Error::OutOfRange { .. })));
        assert!(tr.eval(f64::NAN).is_err());
    }
}
