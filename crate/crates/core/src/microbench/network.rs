//! Cell networks compiled to a flat step program with a hand-written
//! reverse pass.
//!
//! A network is `stem -> cell x cells -> head`. Inside a cell node 0 is the
//! cell input, every other node is the sum of its incoming edge outputs and
//! the last node is the cell output. All hidden vectors have the configured
//! width.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::arch_space::{Architecture, OpKind, SearchSpace};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    XavierUniform,
    /// Zero-mean normal with the given standard deviation.
    Normal { std: f64 },
}

/// Largest supported layer width.
pub const MAX_WIDTH: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub width: usize,
    pub cells: usize,
    pub init: InitScheme,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { width: 8, cells: 1, init: InitScheme::XavierUniform }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

/// Affine layer `act(W x + b)`; `W` is row-major `out x inp`.
#[derive(Clone, Debug)]
pub struct DenseLayer {
    pub inp: usize,
    pub out: usize,
    pub w: usize,
    pub b: usize,
    pub act: Activation,
    /// True for layers that belong to a cell edge (as opposed to stem/head).
    pub in_cell: bool,
}

impl DenseLayer {
    pub fn param_count(&self) -> usize {
        self.inp * self.out + self.out
    }

    pub fn macs(&self) -> usize {
        self.inp * self.out
    }
}

#[derive(Clone, Copy, Debug)]
enum Step {
    Dense { layer: usize, src: usize, dst: usize },
    Squash { src: usize, dst: usize },
    Accumulate { src: usize, dst: usize },
}

/// Weight-independent structure of a network.
#[derive(Debug)]
pub struct Program {
    pub in_dim: usize,
    pub classes: usize,
    pub layers: Vec<DenseLayer>,
    steps: Vec<Step>,
    slot_offset: Vec<usize>,
    slot_len: Vec<usize>,
    value_len: usize,
    logits: usize,
    param_count: usize,
}

impl Program {
    pub fn compile(space: &SearchSpace, arch: &Architecture, cfg: &NetConfig, in_dim: usize, classes: usize) -> Result<Self> {
        space.check(arch)?;
        if cfg.width == 0 || cfg.width > MAX_WIDTH || classes > MAX_WIDTH || cfg.cells == 0 {
            return Err(Error::invalid(format!("width and classes must lie in 1..={MAX_WIDTH}, cells >= 1")));
        }
        let w = cfg.width;
        let mut b = Builder::default();
        let input = b.slot(in_dim);
        let mut cur = b.slot(w);
        b.dense(in_dim, w, Activation::Tanh, false, input, cur);
        let edges = space.edges();
        for _ in 0..cfg.cells {
            let mut nodes = vec![cur];
            nodes.extend((1..space.num_nodes).map(|_| b.slot(w)));
            for (e, &(from, to)) in edges.iter().enumerate() {
                let (src, dst) = (nodes[from], nodes[to]);
                match space.op(arch, e) {
                    OpKind::Zeroize => {}
                    OpKind::Skip => b.steps.push(Step::Accumulate { src, dst }),
                    OpKind::Dense => {
                        let t = b.slot(w);
                        b.dense(w, w, Activation::Tanh, true, src, t);
                        b.steps.push(Step::Accumulate { src: t, dst });
                    }
                    OpKind::Dense2 => {
                        let t1 = b.slot(w);
                        let t2 = b.slot(w);
                        b.dense(w, w, Activation::Tanh, true, src, t1);
                        b.dense(w, w, Activation::Tanh, true, t1, t2);
                        b.steps.push(Step::Accumulate { src: t2, dst });
                    }
                    OpKind::Squash => {
                        let t = b.slot(w);
                        b.steps.push(Step::Squash { src, dst: t });
                        b.steps.push(Step::Accumulate { src: t, dst });
                    }
                }
            }
            cur = *nodes.last().unwrap();
        }
        let logits = b.slot(classes);
        b.dense(w, classes, Activation::Identity, false, cur, logits);
        let value_len = b.slot_len.iter().sum();
        Ok(Self {
            in_dim,
            classes,
            param_count: b.params,
            layers: b.layers,
            steps: b.steps,
            slot_offset: b.slot_offset,
            slot_len: b.slot_len,
            value_len,
            logits,
        })
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Multiply-adds of one forward pass on one input.
    pub fn flop_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::macs).sum()
    }

    fn range(&self, slot: usize) -> std::ops::Range<usize> {
        self.slot_offset[slot]..self.slot_offset[slot] + self.slot_len[slot]
    }
}

#[derive(Default)]
struct Builder {
    layers: Vec<DenseLayer>,
    steps: Vec<Step>,
    slot_offset: Vec<usize>,
    slot_len: Vec<usize>,
    params: usize,
}

impl Builder {
    fn slot(&mut self, len: usize) -> usize {
        let off = self.slot_offset.last().map_or(0, |o| o + self.slot_len.last().unwrap());
        self.slot_offset.push(off);
        self.slot_len.push(len);
        self.slot_offset.len() - 1
    }

    fn dense(&mut self, inp: usize, out: usize, act: Activation, in_cell: bool, src: usize, dst: usize) {
        let layer = DenseLayer { inp, out, w: self.params, b: self.params + inp * out, act, in_cell };
        self.params += layer.param_count();
        self.layers.push(layer);
        self.steps.push(Step::Dense { layer: self.layers.len() - 1, src, dst });
    }
}

/// How nonlinearities are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Normal,
    /// Every nonlinearity replaced by the identity.
    Linear,
}

/// Per-sample activation buffers, reused across calls.
#[derive(Clone, Debug)]
pub struct Workspace<T> {
    pub values: Vec<T>,
    pub grads: Vec<T>,
}

/// A compiled network plus its parameters.
#[derive(Clone, Debug)]
pub struct Network<T> {
    pub program: Arc<Program>,
    pub params: Vec<T>,
}

impl<T: Scalar> Network<T> {
    pub fn instantiate(space: &SearchSpace, arch: &Architecture, cfg: &NetConfig, in_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        let program = Arc::new(Program::compile(space, arch, cfg, in_dim, classes)?);
        let mut rng = seed::rng(seed, &[seed::tag("init")]);
        let mut params = vec![T::zero(); program.param_count()];
        for layer in &program.layers {
            let fan = (layer.inp + layer.out) as f64;
            for p in &mut params[layer.w..layer.b] {
                let v = match cfg.init {
                    InitScheme::XavierUniform => {
                        let a = (6.0 / fan).sqrt();
                        rng.random_range(-a..a)
                    }
                    InitScheme::Normal { std } => Normal::new(0.0, std).expect("finite std").sample(&mut rng),
                };
                *p = T::of(v);
            }
        }
        Ok(Self { program, params })
    }

    pub fn param_count(&self) -> usize {
        self.program.param_count()
    }

    pub fn flop_count(&self) -> usize {
        self.program.flop_count()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network { program: self.program.clone(), params: self.params.iter().map(|p| U::of(p.to_f64_lossy())).collect() }
    }

    pub fn workspace(&self) -> Workspace<T> {
        let n = self.program.value_len;
        Workspace { values: vec![T::zero(); n], grads: vec![T::zero(); n] }
    }

    /// Runs one input through the network; returns the logits.
    pub fn forward<'w>(&self, x: &[T], mode: Mode, ws: &'w mut Workspace<T>) -> &'w [T] {
        forward_with(&self.program, &self.params, x, mode, ws)
    }

    /// Reverse pass for the most recent [`Network::forward`] in `ws`.
    ///
    /// Adds parameter gradients into `grad_params`; input gradients are left
    /// in the input slot and can be read with [`Network::input_grad`].
    pub fn backward(&self, grad_logits: &[T], mode: Mode, ws: &mut Workspace<T>, grad_params: &mut [T], sink: Option<&mut dyn FnMut(usize, &[T], &[T])>) {
        backward_with(&self.program, &self.params, grad_logits, mode, ws, grad_params, sink)
    }

    pub fn input_grad<'w>(&self, ws: &'w Workspace<T>) -> &'w [T] {
        &ws.grads[self.program.range(0)]
    }
}

pub(crate) fn forward_with<'w, T: Scalar>(p: &Program, params: &[T], x: &[T], mode: Mode, ws: &'w mut Workspace<T>) -> &'w [T] {
    let v = &mut ws.values;
    v.iter_mut().for_each(|x| *x = T::zero());
    v[p.range(0)].copy_from_slice(x);
    for step in &p.steps {
        match *step {
            Step::Dense { layer, src, dst } => {
                let l = &p.layers[layer];
                let (src, dst) = pair_mut(v, p.range(src), p.range(dst));
                let (w, b) = (&params[l.w..l.b], &params[l.b..l.b + l.out]);
                for ((out, row), &bias) in dst.iter_mut().zip(w.chunks_exact(l.inp)).zip(b) {
                    let acc = row.iter().zip(src.iter()).fold(bias, |a, (&wi, &xi)| a + wi * xi);
                    *out = match (l.act, mode) {
                        (Activation::Tanh, Mode::Normal) => tanh(acc),
                        _ => acc,
                    };
                }
            }
            Step::Squash { src, dst } => {
                let (src, dst) = pair_mut(v, p.range(src), p.range(dst));
                for (o, &i) in dst.iter_mut().zip(src.iter()) {
                    *o = match mode {
                        Mode::Normal => tanh(i),
                        Mode::Linear => i,
                    };
                }
            }
            Step::Accumulate { src, dst } => {
                let (src, dst) = pair_mut(v, p.range(src), p.range(dst));
                for (o, &i) in dst.iter_mut().zip(src.iter()) {
                    *o += i;
                }
            }
        }
    }
    &ws.values[p.range(p.logits)]
}

/// `tanh` through a single `exp`; libm's `tanh` dominated training time.
#[inline]
pub fn tanh<T: Scalar>(x: T) -> T {
    let e = (-(x.abs() + x.abs())).exp();
    let t = (T::one() - e) / (T::one() + e);
    if x < T::zero() {
        -t
    } else {
        t
    }
}

/// Disjoint `(read, write)` views of two slots.
#[inline]
fn pair_mut<T>(v: &mut [T], src: std::ops::Range<usize>, dst: std::ops::Range<usize>) -> (&[T], &mut [T]) {
    if src.start < dst.start {
        let (a, b) = v.split_at_mut(dst.start);
        (&a[src], &mut b[..dst.end - dst.start])
    } else {
        let (a, b) = v.split_at_mut(src.start);
        (&b[..src.end - src.start], &mut a[dst])
    }
}

/// Disjoint `(write, read)` gradient views plus a read view of values.
#[inline]
fn grad_pair<T>(g: &mut [T], src: std::ops::Range<usize>, dst: std::ops::Range<usize>) -> (&mut [T], &[T]) {
    if src.start < dst.start {
        let (a, b) = g.split_at_mut(dst.start);
        (&mut a[src], &b[..dst.end - dst.start])
    } else {
        let (a, b) = g.split_at_mut(src.start);
        (&mut b[..src.end - src.start], &a[dst])
    }
}

pub(crate) fn backward_with<T: Scalar>(
    p: &Program,
    params: &[T],
    grad_logits: &[T],
    mode: Mode,
    ws: &mut Workspace<T>,
    grad_params: &mut [T],
    mut sink: Option<&mut dyn FnMut(usize, &[T], &[T])>,
) {
    let v = &ws.values;
    let g = &mut ws.grads;
    g.iter_mut().for_each(|x| *x = T::zero());
    g[p.range(p.logits)].copy_from_slice(grad_logits);
    let one = T::one();
    let mut gpre = [T::zero(); MAX_WIDTH];
    for step in p.steps.iter().rev() {
        match *step {
            Step::Accumulate { src, dst } => {
                let (gs, gd) = grad_pair(g, p.range(src), p.range(dst));
                for (s, &d) in gs.iter_mut().zip(gd) {
                    *s += d;
                }
            }
            Step::Squash { src, dst } => {
                let vd = &v[p.range(dst)];
                let (gs, gd) = grad_pair(g, p.range(src), p.range(dst));
                for ((s, &d), &y) in gs.iter_mut().zip(gd).zip(vd) {
                    *s += match mode {
                        Mode::Normal => d * (one - y * y),
                        Mode::Linear => d,
                    };
                }
            }
            Step::Dense { layer, src, dst } => {
                let l = &p.layers[layer];
                let (vs, vd) = (&v[p.range(src)], &v[p.range(dst)]);
                if l.in_cell {
                    if let Some(f) = sink.as_mut() {
                        f(layer, vd, &g[p.range(dst)]);
                    }
                }
                let (gs, gd) = grad_pair(g, p.range(src), p.range(dst));
                let gpre = &mut gpre[..l.out];
                for ((gp, &d), &y) in gpre.iter_mut().zip(gd).zip(vd) {
                    *gp = match (l.act, mode) {
                        (Activation::Tanh, Mode::Normal) => d * (one - y * y),
                        _ => d,
                    };
                }
                let (gw, gb) = grad_params[l.w..l.b + l.out].split_at_mut(l.b - l.w);
                for (b, &gp) in gb.iter_mut().zip(gpre.iter()) {
                    *b += gp;
                }
                let w = &params[l.w..l.b];
                for ((grow, wrow), &gp) in gw.chunks_exact_mut(l.inp).zip(w.chunks_exact(l.inp)).zip(gpre.iter()) {
                    for (((gwi, &wi), &xi), gsi) in grow.iter_mut().zip(wrow).zip(vs).zip(gs.iter_mut()) {
                        *gwi += gp * xi;
                        *gsi += wi * gp;
                    }
                }
            }
        }
    }
}

/// Softmax cross-entropy of one sample; writes `d loss / d logits` scaled by `scale`.
pub fn softmax_xent<T: Scalar>(logits: &[T], label: usize, scale: T, grad: &mut [T]) -> T {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut z = T::zero();
    for (g, &l) in grad.iter_mut().zip(logits) {
        *g = (l - m).exp();
        z += *g;
    }
    for g in grad.iter_mut() {
        *g = *g / z * scale;
    }
    grad[label] -= scale;
    z.ln() + m - logits[label]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> SearchSpace {
        SearchSpace::default()
    }

    #[test]
    fn all_skip_counts_stem_and_head_only() {
        let cfg = NetConfig { width: 8, cells: 1, init: InitScheme::XavierUniform };
        let p = Program::compile(&space(), &Architecture::uniform(1, 6), &cfg, 2, 3).unwrap();
        assert_eq!(p.param_count(), (2 * 8 + 8) + (8 * 3 + 3));
        assert_eq!(p.flop_count(), 2 * 8 + 8 * 3);
    }

    #[test]
    fn param_count_hand_counted() {
        // dense, dense2, squash, skip, zeroize, dense with width 4, 2 cells
        let cfg = NetConfig { width: 4, cells: 2, init: InitScheme::XavierUniform };
        let a: Architecture = "2|3|4|1|0|2".parse().unwrap();
        let p = Program::compile(&space(), &a, &cfg, 2, 3).unwrap();
        let stem = 2 * 4 + 4;
        let head = 4 * 3 + 3;
        let per_dense = 4 * 4 + 4;
        // 1 + 2 + 1 dense layers per cell
        assert_eq!(p.param_count(), stem + head + 2 * 4 * per_dense);
        assert_eq!(p.flop_count(), 2 * 4 + 4 * 3 + 2 * 4 * 16);
    }

    #[test]
    fn all_zeroize_ignores_input() {
        let cfg = NetConfig::default();
        let net = Network::<f64>::instantiate(&space(), &Architecture::uniform(0, 6), &cfg, 2, 3, 1).unwrap();
        let mut ws = net.workspace();
        let a = net.forward(&[0.3, -0.8], Mode::Normal, &mut ws).to_vec();
        let b = net.forward(&[-5.0, 2.0], Mode::Normal, &mut ws).to_vec();
        assert_eq!(a, b);
    }

    #[test]
    fn instantiate_is_deterministic() {
        let cfg = NetConfig::default();
        let a: Architecture = "2|3|4|1|0|2".parse().unwrap();
        let n1 = Network::<f64>::instantiate(&space(), &a, &cfg, 2, 3, 9).unwrap();
        let n2 = Network::<f64>::instantiate(&space(), &a, &cfg, 2, 3, 9).unwrap();
        assert_eq!(n1.params, n2.params);
        let n3 = Network::<f64>::instantiate(&space(), &a, &cfg, 2, 3, 10).unwrap();
        assert_ne!(n1.params, n3.params);
    }

    #[test]
    fn fast_tanh_matches_libm() {
        for i in -400..=400 {
            let x = i as f64 * 0.05;
            assert!((tanh(x) - x.tanh()).abs() < 1e-15, "{x}");
        }
        assert_eq!(tanh(0.0f64), 0.0);
    }

    #[test]
    fn xent_gradient_sums_to_zero() {
        let mut g = [0.0; 3];
        let loss = softmax_xent(&[1.0, 2.0, 0.5], 1, 1.0, &mut g);
        assert!(loss > 0.0);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
        assert!(g[1] < 0.0);
    }
}
