//! Fully connected ReLU regressor trained with Adam.

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::Regressor;
use crate::seed::Rng;

#[derive(Clone, Debug)]
pub struct MlpParams {
    pub hidden_layers: usize,
    pub width: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self { hidden_layers: 5, width: 20, learning_rate: 0.01, epochs: 100, batch_size: 32 }
    }
}

#[derive(Clone, Debug)]
struct Layer {
    inp: usize,
    out: usize,
    /// Offset of the `out x inp` weights; biases follow.
    off: usize,
}

#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Layer>,
    params: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Mlp {
    fn new(d: usize, p: &MlpParams, rng: &mut Rng) -> Self {
        let mut dims = vec![d];
        dims.extend(std::iter::repeat_n(p.width.max(1), p.hidden_layers));
        dims.push(1);
        let mut layers = Vec::new();
        let mut off = 0;
        for w in dims.windows(2) {
            layers.push(Layer { inp: w[0], out: w[1], off });
            off += w[0] * w[1] + w[1];
        }
        let mut params = vec![0.0; off];
        for l in &layers {
            let a = (6.0 / l.inp.max(1) as f64).sqrt();
            for v in &mut params[l.off..l.off + l.inp * l.out] {
                *v = rng.random_range(-a..a);
            }
        }
        Self { layers, params, y_mean: 0.0, y_scale: 1.0 }
    }

    /// Activations of every layer (input first); hidden layers use ReLU.
    fn forward(&self, x: &[f64], acts: &mut Vec<Vec<f64>>) {
        acts.truncate(1);
        acts[0].clear();
        acts[0].extend_from_slice(x);
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let w = &self.params[l.off..l.off + l.inp * l.out];
            let b = &self.params[l.off + l.inp * l.out..l.off + l.inp * l.out + l.out];
            let src = &acts[li];
            let out: Vec<f64> = w
                .chunks_exact(l.inp)
                .zip(b)
                .map(|(row, &bi)| {
                    let z = row.iter().zip(src).fold(bi, |a, (&wi, &xi)| a + wi * xi);
                    if li < last {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
        }
    }

    pub fn fit(x: &[Vec<f64>], y: &[f64], p: &MlpParams, rng: &mut Rng) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let mut m = Self::new(d, p, rng);
        let n = y.len();
        m.y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - m.y_mean).powi(2)).sum::<f64>() / n as f64;
        m.y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let t: Vec<f64> = y.iter().map(|v| (v - m.y_mean) / m.y_scale).collect();

        let np = m.params.len();
        let (mut m1, mut m2, mut grad) = (vec![0.0; np], vec![0.0; np], vec![0.0; np]);
        let mut acts = vec![Vec::new()];
        let mut delta: Vec<f64> = Vec::new();
        let mut order: Vec<usize> = (0..n).collect();
        let mut step = 0i32;
        for _ in 0..p.epochs {
            order.shuffle(rng);
            for batch in order.chunks(p.batch_size.max(1)) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let scale = 2.0 / batch.len() as f64;
                for &i in batch {
                    m.forward(&x[i], &mut acts);
                    delta.clear();
                    delta.push(scale * (acts.last().unwrap()[0] - t[i]));
                    for (li, l) in m.layers.iter().enumerate().rev() {
                        let src = &acts[li];
                        let (wo, bo) = (l.off, l.off + l.inp * l.out);
                        let mut back = vec![0.0; l.inp];
                        for (o, &dl) in delta.iter().enumerate() {
                            if dl == 0.0 {
                                continue;
                            }
                            grad[bo + o] += dl;
                            let row = wo + o * l.inp;
                            for k in 0..l.inp {
                                grad[row + k] += dl * src[k];
                                back[k] += dl * m.params[row + k];
                            }
                        }
                        if li > 0 {
                            for (bk, &a) in back.iter_mut().zip(src) {
                                if a <= 0.0 {
                                    *bk = 0.0;
                                }
                            }
                        }
                        delta = back;
                    }
                }
                step += 1;
                let c1 = 1.0 - BETA1.powi(step);
                let c2 = 1.0 - BETA2.powi(step);
                for ((w, g), (a, b)) in m.params.iter_mut().zip(&grad).zip(m1.iter_mut().zip(m2.iter_mut())) {
                    *a = BETA1 * *a + (1.0 - BETA1) * g;
                    *b = BETA2 * *b + (1.0 - BETA2) * g * g;
                    *w -= p.learning_rate * (*a / c1) / ((*b / c2).sqrt() + ADAM_EPS);
                }
            }
        }
        m
    }
}

impl Regressor for Mlp {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut acts = vec![Vec::new()];
        self.forward(x, &mut acts);
        let v = self.y_mean + self.y_scale * acts.last().unwrap()[0];
        if v.is_finite() {
            v
        } else {
            self.y_mean
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn fits_a_smooth_function() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64 / 32.0 - 1.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[0]).collect();
        let p = MlpParams { hidden_layers: 2, width: 16, epochs: 400, learning_rate: 0.01, batch_size: 16 };
        let m = Mlp::fit(&x, &y, &p, &mut seed::rng(1, &[]));
        let mse: f64 = x.iter().zip(&y).map(|(r, t)| (m.predict(r) - t).powi(2)).sum::<f64>() / 64.0;
        assert!(mse < 5e-3, "{mse}");
    }

    #[test]
    fn same_seed_same_model() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let p = MlpParams { epochs: 5, ..Default::default() };
        let a = Mlp::fit(&x, &y, &p, &mut seed::rng(3, &[]));
        let b = Mlp::fit(&x, &y, &p, &mut seed::rng(3, &[]));
        assert_eq!(a.predict(&[1.0, 2.0]), b.predict(&[1.0, 2.0]));
    }
}
