//! Dense symmetric positive-definite factorisation.

/// Lower-triangular Cholesky factor `L` with `A = L L^T`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors the row-major `n x n` matrix `a` (only the lower triangle is read).
    /// Returns `None` when a pivot is not strictly positive and finite.
    pub fn factor(a: &[f64], n: usize) -> Option<Cholesky> {
        debug_assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let row_j = j * n;
            let mut d = a[row_j + j];
            for k in 0..j {
                d -= l[row_j + k] * l[row_j + k];
            }
            if !(d > 0.0 && d.is_finite()) {
                return None;
            }
            let djj = d.sqrt();
            l[row_j + j] = djj;
            for i in j + 1..n {
                let row_i = i * n;
                let mut s = a[row_i + j];
                for k in 0..j {
                    s -= l[row_i + k] * l[row_j + k];
                }
                l[row_i + j] = s / djj;
            }
        }
        Some(Cholesky { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// The factor `L`, row-major.
    pub fn lower(&self) -> &[f64] {
        &self.l
    }

    /// Solves `L x = b` in place.
    pub fn solve_lower(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&b[..i]).map(|(l, x)| l * x).sum();
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
    }

    /// Solves `L^T x = b` in place.
    pub fn solve_upper(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = b[i];
            for (k, bk) in b.iter().enumerate().skip(i + 1) {
                s -= self.l[k * n + i] * bk;
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        self.solve_lower(b);
        self.solve_upper(b);
    }

    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>() * 2.0
    }

    /// `A^{-1}`, row-major.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        // invert L, then form L^{-T} L^{-1}
        let mut linv = vec![0.0; n * n];
        for j in 0..n {
            linv[j * n + j] = 1.0 / self.l[j * n + j];
            for i in j + 1..n {
                let mut s = 0.0;
                for k in j..i {
                    s -= self.l[i * n + k] * linv[k * n + j];
                }
                linv[i * n + j] = s / self.l[i * n + i];
            }
        }
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in i..n {
                    s += linv[k * n + i] * linv[k * n + j];
                }
                inv[i * n + j] = s;
                inv[j * n + i] = s;
            }
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd() -> Vec<f64> {
        vec![4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0]
    }

    #[test]
    fn reconstructs_matrix() {
        let a = spd();
        let c = Cholesky::factor(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| c.l[i * 3 + k] * c.l[j * 3 + k]).sum();
                assert!((s - a[i * 3 + j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn solve_and_inverse() {
        let a = spd();
        let c = Cholesky::factor(&a, 3).unwrap();
        let mut x = vec![1.0, -2.0, 0.5];
        c.solve(&mut x);
        let b: Vec<f64> = (0..3).map(|i| (0..3).map(|k| a[i * 3 + k] * x[k]).sum()).collect();
        assert!(b.iter().zip([1.0, -2.0, 0.5]).all(|(u, v)| (u - v).abs() < 1e-13));
        let inv = c.inverse();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn log_det_of_diagonal() {
        let c = Cholesky::factor(&[2.0, 0.0, 0.0, 8.0], 2).unwrap();
        assert!((c.log_det() - 16f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn rejects_indefinite() {
        assert!(Cholesky::factor(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
        assert!(Cholesky::factor(&[f64::NAN], 1).is_none());
    }
}
