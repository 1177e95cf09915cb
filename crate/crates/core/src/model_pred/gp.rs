//! Bayesian linear regression and Gaussian-process regression.

use super::Regressor;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};

/// Jitter escalation bounds for kernel factorization.
pub const JITTER: (f64, f64) = (1e-10, 1e-4);

fn standardize(y: &[f64]) -> (f64, f64, Vec<f64>) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    (mean, scale, y.iter().map(|v| (v - mean) / scale).collect())
}

/// Linear model with Gaussian prior precision `alpha` and noise precision
/// `beta`, on standardized targets with an intercept feature.
#[derive(Clone, Debug)]
pub struct BayesLinear {
    mean: f64,
    scale: f64,
    w: Vec<f64>,
    cov: Cholesky<f64>,
    beta: f64,
}

impl BayesLinear {
    pub fn fit(x: &[Vec<f64>], y: &[f64], alpha: f64, beta: f64) -> Result<Self> {
        let (mean, scale, t) = standardize(y);
        let d = x[0].len() + 1;
        let mut a = Matrix::<f64>::zeros(d);
        let mut b = vec![0.0; d];
        for (row, &ti) in x.iter().zip(&t) {
            let phi: Vec<f64> = std::iter::once(1.0).chain(row.iter().copied()).collect();
            for i in 0..d {
                b[i] += beta * phi[i] * ti;
                for j in 0..d {
                    a[(i, j)] += beta * phi[i] * phi[j];
                }
            }
        }
        for i in 0..d {
            a[(i, i)] += alpha;
        }
        let (cov, _) = Cholesky::with_jitter(&a, JITTER.0, JITTER.1)?;
        let w = cov.solve(&b);
        Ok(Self { mean, scale, w, cov, beta })
    }

    /// Predictive mean and standard deviation.
    pub fn predict_dist(&self, x: &[f64]) -> (f64, f64) {
        let phi: Vec<f64> = std::iter::once(1.0).chain(x.iter().copied()).collect();
        let m: f64 = phi.iter().zip(&self.w).map(|(a, b)| a * b).sum();
        let v = self.cov.forward(&phi);
        let var = 1.0 / self.beta + v.iter().map(|q| q * q).sum::<f64>();
        (self.mean + self.scale * m, self.scale * var.sqrt())
    }
}

impl Regressor for BayesLinear {
    fn predict(&self, x: &[f64]) -> f64 {
        self.predict_dist(x).0
    }
}

/// RBF-kernel GP on standardized targets.
#[derive(Clone, Debug)]
pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    mean: f64,
    scale: f64,
    length_scale: f64,
    alpha: Vec<f64>,
    chol: Cholesky<f64>,
}

fn rbf(a: &[f64], b: &[f64], ls: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum();
    (-d2 / (2.0 * ls * ls)).exp()
}

impl GaussianProcess {
    pub fn fit(x: &[Vec<f64>], y: &[f64], length_scale: f64, noise: f64) -> Result<Self> {
        if !(length_scale > 0.0 && noise >= 0.0) {
            return Err(Error::invalid("length scale must be positive and noise non-negative"));
        }
        let (mean, scale, t) = standardize(y);
        let n = x.len();
        let mut k = Matrix::from_fn(n, |i, j| rbf(&x[i], &x[j], length_scale));
        for i in 0..n {
            k[(i, i)] += noise;
        }
        let (chol, _) = Cholesky::with_jitter(&k, JITTER.0, JITTER.1)?;
        let alpha = chol.solve(&t);
        Ok(Self { x: x.to_vec(), mean, scale, length_scale, alpha, chol })
    }

    pub fn predict_dist(&self, q: &[f64]) -> (f64, f64) {
        let ks: Vec<f64> = self.x.iter().map(|r| rbf(r, q, self.length_scale)).collect();
        let m: f64 = ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = self.chol.forward(&ks);
        let var = (1.0 - v.iter().map(|z| z * z).sum::<f64>()).max(0.0);
        (self.mean + self.scale * m, self.scale * var.sqrt())
    }
}

impl Regressor for GaussianProcess {
    fn predict(&self, x: &[f64]) -> f64 {
        self.predict_dist(x).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gp_interpolates_without_noise() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.3, 0.2]];
        let y = vec![0.2, 0.5, 0.9, 0.4];
        let gp = GaussianProcess::fit(&x, &y, 0.7, 0.0).unwrap();
        for (r, t) in x.iter().zip(&y) {
            assert!((gp.predict(r) - t).abs() < 1e-6);
            assert!(gp.predict_dist(r).1 < 1e-3);
        }
    }

    #[test]
    fn blr_recovers_a_line() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 * r[0] - 1.0).collect();
        let m = BayesLinear::fit(&x, &y, 1e-6, 1e6).unwrap();
        assert!((m.predict(&[5.0]) - 14.0).abs() < 1e-3);
    }

    #[test]
    fn constant_targets_are_handled() {
        let x = vec![vec![0.0], vec![1.0]];
        let gp = GaussianProcess::fit(&x, &[0.5, 0.5], 1.0, 1e-3).unwrap();
        assert!((gp.predict(&[0.5]) - 0.5).abs() < 1e-12);
    }
}
