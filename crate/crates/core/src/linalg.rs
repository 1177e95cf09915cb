//! Small dense linear algebra for the regression models and curve fits.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        self.data.chunks_exact(self.n).map(|row| row.iter().zip(v).map(|(&a, &b)| a * b).sum()).collect()
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    pub l: Matrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        let n = a.n;
        let mut l = Matrix::zeros(n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NumericalFailure(format!("matrix is not positive definite (pivot {j})")));
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    /// Factorizes `A + jitter·I`, escalating `jitter` tenfold from `start`
    /// up to `max` until the factorization succeeds.
    pub fn with_jitter(a: &Matrix<T>, start: f64, max: f64) -> Result<(Self, f64)> {
        if let Ok(c) = Self::new(a) {
            return Ok((c, 0.0));
        }
        let mut jitter = start;
        while jitter <= max * (1.0 + 1e-12) {
            let mut b = a.clone();
            for i in 0..b.n {
                b[(i, i)] += T::of(jitter);
            }
            if let Ok(c) = Self::new(&b) {
                return Ok((c, jitter));
            }
            jitter *= 10.0;
        }
        Err(Error::NumericalFailure(format!("Cholesky failed with jitter up to {max:e}")))
    }

    /// Solves `L y = b`.
    pub fn forward(&self, b: &[T]) -> Vec<T> {
        let n = self.l.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.n;
        let mut x = self.forward(b);
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    pub fn log_det(&self) -> T {
        (0..self.l.n).map(|i| self.l[(i, i)].ln()).sum::<T>() * T::of(2.0)
    }
}

/// Gaussian elimination with partial pivoting.
pub fn solve<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.n;
    let mut m = a.data.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().partial_cmp(&m[j * n + col].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .expect("non-empty");
        if !(m[piv * n + col].abs() > T::zero()) {
            return Err(Error::NumericalFailure("singular system".into()));
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            x.swap(col, piv);
        }
        for r in col + 1..n {
            let f = m[r * n + col] / m[col * n + col];
            for k in col..n {
                let v = m[col * n + k];
                m[r * n + k] -= f * v;
            }
            let v = x[col];
            x[r] -= f * v;
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= m[i * n + k] * x[k];
        }
        x[i] = s / m[i * n + i];
    }
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::NumericalFailure("non-finite solution".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd() -> Matrix<f64> {
        Matrix { n: 3, data: vec![4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0] }
    }

    #[test]
    fn cholesky_solves_and_reconstructs() {
        let a = spd();
        let c = Cholesky::new(&a).unwrap();
        let x = c.solve(&[1.0, 2.0, 3.0]);
        let back = a.mul_vec(&x);
        for (u, v) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((u - v).abs() < 1e-12);
        }
        let g = solve(&a, &[1.0, 2.0, 3.0]).unwrap();
        for (u, v) in g.iter().zip(&x) {
            assert!((u - v).abs() < 1e-12);
        }
        // det = 4(15-1) - 2(6-0.6) + 0.6(2-3) = 44.6
        assert!((c.log_det() - 44.6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        let a = Matrix { n: 2, data: vec![1.0, 1.0, 1.0, 1.0] };
        assert!(Cholesky::new(&a).is_err());
        let (_, j) = Cholesky::with_jitter(&a, 1e-10, 1e-4).unwrap();
        assert!(j > 0.0 && j <= 1e-4);
        let neg = Matrix { n: 1, data: vec![-1.0] };
        assert!(Cholesky::with_jitter(&neg, 1e-10, 1e-4).is_err());
    }

    #[test]
    fn singular_system_errors() {
        let a = Matrix { n: 2, data: vec![1.0, 2.0, 2.0, 4.0] };
        assert!(solve(&a, &[1.0, 1.0]).is_err());
    }
}
