use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::dataset::SyntheticDataset;
use super::network::{softmax_xent, Mode, Network};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    #[serde(default)]
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 50, batch_size: 20, learning_rate: 0.02, momentum: 0.9, schedule: LrSchedule::Cosine, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Annealed per epoch from the base rate towards zero.
    #[default]
    Cosine,
}

impl LrSchedule {
    /// Rate used during `epoch` (1-based) of `epochs`.
    pub fn rate(self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => 0.5 * base * (1.0 + (std::f64::consts::PI * (epoch - 1) as f64 / epochs as f64).cos()),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 4 {
            return Err(Error::invalid("epochs must be at least 4"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::invalid("learning rate must be positive and momentum in [0, 1)"));
        }
        Ok(())
    }
}

/// Per-epoch training record of one architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    /// Mean training loss of each epoch.
    pub train_loss: Vec<f64>,
    /// Validation accuracy after each epoch.
    pub val_acc: Vec<f64>,
    /// Mean validation loss after each epoch.
    pub val_loss: Vec<f64>,
}

impl LearningCurve {
    pub fn epochs(&self) -> usize {
        self.val_acc.len()
    }

    pub fn final_val_acc(&self) -> f64 {
        *self.val_acc.last().expect("non-empty curve")
    }

    pub fn prefix(&self, k: usize) -> LearningCurve {
        LearningCurve {
            train_loss: self.train_loss[..k].to_vec(),
            val_acc: self.val_acc[..k].to_vec(),
            val_loss: self.val_loss[..k].to_vec(),
        }
    }

    pub fn is_valid(&self) -> bool {
        let n = self.val_acc.len();
        n > 0
            && self.train_loss.len() == n
            && self.val_loss.len() == n
            && self.val_acc.iter().all(|a| (0.0..=1.0).contains(a))
            && self.train_loss.iter().all(|l| l.is_finite() && *l >= 0.0)
    }
}

/// Minibatch SGD with momentum on softmax cross-entropy.
pub fn train<T: Scalar>(net: &mut Network<T>, data: &SyntheticDataset, cfg: &TrainConfig) -> Result<LearningCurve> {
    cfg.validate()?;
    let n = data.train_x.len();
    let classes = net.program.classes;
    let mut rng = seed::rng(cfg.seed, &[seed::tag("shuffle")]);
    let mut order: Vec<usize> = (0..n).collect();
    let mut ws = net.workspace();
    let mut grad = vec![T::zero(); net.params.len()];
    let mut velocity = vec![T::zero(); net.params.len()];
    let mut glogits = vec![T::zero(); classes];
    let mut x = vec![T::zero(); data.in_dim];
    let mom = T::of(cfg.momentum);
    let mut curve = LearningCurve { train_loss: Vec::new(), val_acc: Vec::new(), val_loss: Vec::new() };
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let lr = T::of(cfg.schedule.rate(cfg.learning_rate, epoch, cfg.epochs));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let scale = T::one() / T::of(batch.len() as f64);
            for &i in batch {
                for (xi, &v) in x.iter_mut().zip(data.train_input(i)) {
                    *xi = T::of(v);
                }
                let logits = net.forward(&x, Mode::Normal, &mut ws);
                let loss = softmax_xent(logits, data.train_y[i], scale, &mut glogits);
                loss_sum += loss.to_f64_lossy();
                net.backward(&glogits, Mode::Normal, &mut ws, &mut grad, None);
            }
            for ((p, v), &g) in net.params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = mom * *v + g;
                *p -= lr * *v;
            }
        }
        let train_loss = loss_sum / n as f64;
        if !train_loss.is_finite() {
            return Err(Error::DivergedTraining { epoch });
        }
        let (acc, vloss) = evaluate(net, &data.val_x, &data.val_y);
        if !vloss.is_finite() {
            return Err(Error::DivergedTraining { epoch });
        }
        curve.train_loss.push(train_loss);
        curve.val_acc.push(acc);
        curve.val_loss.push(vloss);
    }
    Ok(curve)
}

/// Accuracy and mean cross-entropy on a labelled set.
pub fn evaluate<T: Scalar>(net: &Network<T>, xs: &[[f64; 2]], ys: &[usize]) -> (f64, f64) {
    let mut ws = net.workspace();
    let mut g = vec![T::zero(); net.program.classes];
    let mut correct = 0usize;
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let xin = [T::of(x[0]), T::of(x[1])];
        let logits = net.forward(&xin, Mode::Normal, &mut ws);
        // first maximal logit wins ties
        let pred = (0..logits.len()).fold(0, |best, c| if logits[c] > logits[best] { c } else { best });
        if pred == y {
            correct += 1;
        }
        loss += softmax_xent(logits, y, T::one(), &mut g).to_f64_lossy();
    }
    (correct as f64 / xs.len() as f64, loss / xs.len() as f64)
}

/// Statistics from one forward/backward pass over one minibatch.
#[derive(Clone, Debug)]
pub struct GradientSnapshot<T> {
    pub loss: T,
    /// `dL/dθ` for every parameter.
    pub grads: Vec<T>,
    /// Per cell dense layer, per unit: `Σ_batch z · dL/dz` of the layer output `z`.
    pub activation_saliency: Vec<(usize, Vec<T>)>,
    /// Per input: `d logits / d input`, flattened class-major.
    pub jacobian_rows: Vec<Vec<T>>,
}

/// Minibatch indices drawn without replacement from the training split.
pub fn minibatch(data: &SyntheticDataset, batch_size: usize, seed: u64) -> Vec<usize> {
    let n = data.train_x.len();
    let mut rng = seed::rng(seed, &[seed::tag("minibatch")]);
    index::sample(&mut rng, n, batch_size.min(n)).into_vec()
}

pub fn grad_snapshot<T: Scalar>(net: &Network<T>, data: &SyntheticDataset, batch_size: usize, seed: u64) -> GradientSnapshot<T> {
    let idx = minibatch(data, batch_size, seed);
    let xs: Vec<[f64; 2]> = idx.iter().map(|&i| data.train_x[i]).collect();
    let ys: Vec<usize> = idx.iter().map(|&i| data.train_y[i]).collect();
    grad_snapshot_on(net, &xs, &ys)
}

pub fn grad_snapshot_on<T: Scalar>(net: &Network<T>, xs: &[[f64; 2]], ys: &[usize]) -> GradientSnapshot<T> {
    let p = &net.program;
    let mut ws = net.workspace();
    let mut grads = vec![T::zero(); net.params.len()];
    let mut scratch = vec![T::zero(); net.params.len()];
    let mut glogits = vec![T::zero(); p.classes];
    let scale = T::one() / T::of(xs.len() as f64);
    let mut saliency: Vec<(usize, Vec<T>)> = p
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.in_cell)
        .map(|(i, l)| (i, vec![T::zero(); l.out]))
        .collect();
    let mut loss = T::zero();
    let mut jacobian_rows = Vec::with_capacity(xs.len());
    for (x, &y) in xs.iter().zip(ys) {
        let xin = [T::of(x[0]), T::of(x[1])];
        let logits = net.forward(&xin, Mode::Normal, &mut ws);
        loss += softmax_xent(logits, y, scale, &mut glogits) * scale;
        {
            let mut sink = |layer: usize, z: &[T], dz: &[T]| {
                let slot = saliency.iter_mut().find(|(l, _)| *l == layer).expect("cell layer");
                for ((s, &zi), &dzi) in slot.1.iter_mut().zip(z).zip(dz) {
                    *s += zi * dzi;
                }
            };
            net.backward(&glogits, Mode::Normal, &mut ws, &mut grads, Some(&mut sink));
        }
        let mut row = Vec::with_capacity(p.classes * p.in_dim);
        for c in 0..p.classes {
            let mut e = vec![T::zero(); p.classes];
            e[c] = T::one();
            net.backward(&e, Mode::Normal, &mut ws, &mut scratch, None);
            row.extend_from_slice(net.input_grad(&ws));
        }
        jacobian_rows.push(row);
    }
    GradientSnapshot { loss, grads, activation_saliency: saliency, jacobian_rows }
}

/// Gradient of the mean cross-entropy over a fixed batch.
pub fn batch_grad<T: Scalar>(net: &Network<T>, xs: &[[f64; 2]], ys: &[usize]) -> Vec<T> {
    let mut ws = net.workspace();
    let mut grads = vec![T::zero(); net.params.len()];
    let mut g = vec![T::zero(); net.program.classes];
    let scale = T::one() / T::of(xs.len() as f64);
    for (x, &y) in xs.iter().zip(ys) {
        let xin = [T::of(x[0]), T::of(x[1])];
        let logits = net.forward(&xin, Mode::Normal, &mut ws);
        softmax_xent(logits, y, scale, &mut g);
        net.backward(&g, Mode::Normal, &mut ws, &mut grads, None);
    }
    grads
}

/// Mean cross-entropy over a fixed batch for arbitrary parameters.
pub fn batch_loss<T: Scalar>(net: &Network<T>, xs: &[[f64; 2]], ys: &[usize]) -> T {
    let mut ws = net.workspace();
    let mut g = vec![T::zero(); net.program.classes];
    let scale = T::one() / T::of(xs.len() as f64);
    let mut loss = T::zero();
    for (x, &y) in xs.iter().zip(ys) {
        let xin = [T::of(x[0]), T::of(x[1])];
        let logits = net.forward(&xin, Mode::Normal, &mut ws);
        loss += softmax_xent(logits, y, scale, &mut g) * scale;
    }
    loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch_space::{Architecture, SearchSpace};
    use crate::microbench::{make_dataset, DatasetConfig, NetConfig};

    #[test]
    fn curve_prefix_and_validation() {
        let c = LearningCurve { train_loss: vec![1.0, 0.5, 0.25], val_acc: vec![0.1, 0.2, 0.3], val_loss: vec![2.0, 1.5, 1.2] };
        assert!(c.is_valid());
        assert_eq!(c.prefix(2).val_acc, vec![0.1, 0.2]);
        assert_eq!(c.final_val_acc(), 0.3);
    }

    #[test]
    fn too_few_epochs_rejected() {
        let cfg = TrainConfig { epochs: 3, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn diverged_training_reports_epoch() {
        let data = make_dataset(&DatasetConfig { n_train: 30, n_val: 30, ..Default::default() }).unwrap();
        let space = SearchSpace::default();
        let arch: Architecture = "2|3|1|2|3|1".parse().unwrap();
        let mut net = Network::<f64>::instantiate(&space, &arch, &NetConfig::default(), 2, 3, 0).unwrap();
        let cfg = TrainConfig { epochs: 5, learning_rate: 1e308, momentum: 0.9, ..Default::default() };
        match train(&mut net, &data, &cfg) {
            Err(Error::DivergedTraining { epoch }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_head_gives_zero_jacobian() {
        let data = make_dataset(&DatasetConfig::default()).unwrap();
        let space = SearchSpace::default();
        let arch: Architecture = "2|3|1|2|3|1".parse().unwrap();
        let mut net = Network::<f64>::instantiate(&space, &arch, &NetConfig::default(), 2, 3, 0).unwrap();
        let head = net.program.layers.last().unwrap().clone();
        net.params[head.w..head.b].iter_mut().for_each(|w| *w = 0.0);
        let snap = grad_snapshot(&net, &data, 8, 1);
        assert!(snap.jacobian_rows.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_inputs_share_jacobian_rows() {
        let space = SearchSpace::default();
        let arch: Architecture = "2|3|4|2|3|1".parse().unwrap();
        let net = Network::<f64>::instantiate(&space, &arch, &NetConfig::default(), 2, 3, 4).unwrap();
        let xs = [[0.3, -0.2], [0.3, -0.2], [0.9, 0.1]];
        let snap = grad_snapshot_on(&net, &xs, &[0, 1, 2]);
        assert_eq!(snap.jacobian_rows[0], snap.jacobian_rows[1]);
        assert_ne!(snap.jacobian_rows[0], snap.jacobian_rows[2]);
    }
}
