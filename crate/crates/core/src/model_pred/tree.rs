//! Regression trees over binned features, random forests, and gradient
//! boosting.

use rand::seq::index;
use rand::Rng as _;

use super::Regressor;
use crate::seed::Rng;

/// Per-feature bin boundaries. Bin `b` of feature `f` holds training values
/// in `(max[f][b-1], max[f][b]]`.
#[derive(Clone, Debug)]
pub struct Binner {
    max: Vec<Vec<f64>>,
    min: Vec<Vec<f64>>,
}

impl Binner {
    /// Exact bins when a feature has at most `max_bins` distinct values,
    /// otherwise quantile bins.
    pub fn fit(x: &[Vec<f64>], max_bins: usize) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let mut max = Vec::with_capacity(d);
        let mut min = Vec::with_capacity(d);
        for f in 0..d {
            let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            let mut uniq = vals.clone();
            uniq.dedup();
            let uppers: Vec<f64> = if uniq.len() <= max_bins {
                uniq
            } else {
                let mut u: Vec<f64> = (1..=max_bins).map(|q| vals[(q * vals.len()).div_ceil(max_bins) - 1]).collect();
                u.dedup();
                u
            };
            let lowers = uppers
                .iter()
                .enumerate()
                .map(|(b, _)| if b == 0 { vals[0] } else { *vals.iter().find(|&&v| v > uppers[b - 1]).expect("value above previous bin") })
                .collect();
            max.push(uppers);
            min.push(lowers);
        }
        Self { max, min }
    }

    pub fn bin(&self, f: usize, v: f64) -> u16 {
        let u = &self.max[f];
        u.partition_point(|&m| m < v).min(u.len() - 1) as u16
    }

    pub fn bins(&self, f: usize) -> usize {
        self.max[f].len()
    }

    /// Raw-value threshold separating bin `b` from bin `b + 1`.
    fn threshold(&self, f: usize, b: usize) -> f64 {
        0.5 * (self.max[f][b] + self.min[f][b + 1])
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Vec<Vec<u16>> {
        x.iter().map(|r| r.iter().enumerate().map(|(f, &v)| self.bin(f, v)).collect()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    /// Fraction of features examined at each split.
    pub split_feature_fraction: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: None, min_samples_leaf: 1, min_samples_split: 2, split_feature_fraction: 1.0 }
    }
}

#[derive(Clone, Debug)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Grows a tree on `rows` (indices into `xb`/`y`, repeats allowed)
    /// using only `features`.
    pub fn grow(binner: &Binner, xb: &[Vec<u16>], y: &[f64], rows: Vec<usize>, features: &[usize], p: &TreeParams, rng: &mut Rng) -> Self {
        let mut t = Tree { nodes: Vec::new() };
        let mut hist_sum = Vec::new();
        let mut hist_cnt = Vec::new();
        t.build(binner, xb, y, rows, features, p, 0, rng, &mut hist_sum, &mut hist_cnt);
        t
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        &mut self,
        binner: &Binner,
        xb: &[Vec<u16>],
        y: &[f64],
        rows: Vec<usize>,
        features: &[usize],
        p: &TreeParams,
        depth: usize,
        rng: &mut Rng,
        hs: &mut Vec<f64>,
        hc: &mut Vec<usize>,
    ) -> usize {
        let id = self.nodes.len();
        let n = rows.len();
        let total: f64 = rows.iter().map(|&r| y[r]).sum();
        let mean = total / n as f64;
        self.nodes.push(Node::Leaf(mean));
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(y[r]), hi.max(y[r])));
        let min_leaf = p.min_samples_leaf.max(1);
        if lo == hi || n < p.min_samples_split || n < 2 * min_leaf || p.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }
        let m = ((features.len() as f64 * p.split_feature_fraction).ceil() as usize).clamp(1, features.len());
        let cand: Vec<usize> = if m == features.len() {
            features.to_vec()
        } else {
            let mut c: Vec<usize> = index::sample(rng, features.len(), m).into_iter().map(|i| features[i]).collect();
            c.sort_unstable();
            c
        };
        let base = total * total / n as f64;
        let mut best: Option<(f64, usize, usize)> = None;
        for &f in &cand {
            let nb = binner.bins(f);
            if nb < 2 {
                continue;
            }
            hs.clear();
            hs.resize(nb, 0.0);
            hc.clear();
            hc.resize(nb, 0);
            for &r in &rows {
                let b = xb[r][f] as usize;
                hs[b] += y[r];
                hc[b] += 1;
            }
            let (mut sl, mut cl) = (0.0, 0usize);
            for b in 0..nb - 1 {
                sl += hs[b];
                cl += hc[b];
                let cr = n - cl;
                if cl < min_leaf || cr < min_leaf {
                    continue;
                }
                if hc[b] == 0 && b > 0 {
                    continue;
                }
                let sr = total - sl;
                let gain = sl * sl / cl as f64 + sr * sr / cr as f64 - base;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, b));
                }
            }
        }
        let Some((_, f, b)) = best else { return id };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&r| (xb[r][f] as usize) <= b);
        let threshold = binner.threshold(f, b);
        let left = self.build(binner, xb, y, left_rows, features, p, depth + 1, rng, hs, hc);
        let right = self.build(binner, xb, y, right_rows, features, p, depth + 1, rng, hs, hc);
        self.nodes[id] = Node::Split { feature: f, threshold, left, right };
        id
    }
}

#[derive(Clone, Debug)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

#[derive(Clone, Debug)]
pub struct RandomForest {
    trees: Vec<Tree>,
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[f64], p: &ForestParams, rng: &mut Rng) -> Self {
        let binner = Binner::fit(x, usize::MAX);
        let xb = binner.transform(x);
        let features: Vec<usize> = (0..binner.max.len()).collect();
        let n = y.len();
        let trees = (0..p.n_trees.max(1))
            .map(|_| {
                let rows = if p.bootstrap { (0..n).map(|_| rng.random_range(0..n)).collect() } else { (0..n).collect() };
                Tree::grow(&binner, &xb, y, rows, &features, &p.tree, rng)
            })
            .collect();
        Self { trees }
    }
}

impl Regressor for RandomForest {
    fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Clone, Debug)]
pub struct BoostParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Fraction of features considered at each split.
    pub feature_fraction: f64,
    pub min_samples_leaf: usize,
    pub max_bins: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self { n_estimators: 505, learning_rate: 0.081, max_depth: 6, feature_fraction: 0.79, min_samples_leaf: 1, max_bins: 64 }
    }
}

/// Least-squares gradient boosting.
#[derive(Clone, Debug)]
pub struct GradientBoosting {
    base: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
}

impl GradientBoosting {
    pub fn fit(x: &[Vec<f64>], y: &[f64], p: &BoostParams, rng: &mut Rng) -> Self {
        let n = y.len();
        let base = y.iter().sum::<f64>() / n as f64;
        let mut gb = Self { base, learning_rate: p.learning_rate, trees: Vec::new() };
        if p.max_depth == 0 {
            return gb;
        }
        let binner = Binner::fit(x, p.max_bins.max(2));
        let xb = binner.transform(x);
        let d = binner.max.len();
        let features: Vec<usize> = (0..d).collect();
        let tp = TreeParams { max_depth: Some(p.max_depth), min_samples_leaf: p.min_samples_leaf.max(1), min_samples_split: 2, split_feature_fraction: p.feature_fraction };
        let mut pred = vec![base; n];
        let mut resid = vec![0.0; n];
        for _ in 0..p.n_estimators {
            for ((r, &t), &f) in resid.iter_mut().zip(y).zip(&pred) {
                *r = t - f;
            }
            let tree = Tree::grow(&binner, &xb, &resid, (0..n).collect(), &features, &tp, rng);
            for (f, row) in pred.iter_mut().zip(x) {
                *f += p.learning_rate * tree.predict(row);
            }
            gb.trees.push(tree);
        }
        gb
    }
}

impl Regressor for GradientBoosting {
    fn predict(&self, x: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn exact_bins_and_thresholds() {
        let x = vec![vec![0.0], vec![1.0], vec![1.0], vec![3.0]];
        let b = Binner::fit(&x, 64);
        assert_eq!(b.bins(0), 3);
        assert_eq!(b.bin(0, 1.0), 1);
        assert_eq!(b.bin(0, 2.0), 2);
        assert_eq!(b.threshold(0, 1), 2.0);
    }

    #[test]
    fn quantile_bins_cap_the_count() {
        let x: Vec<Vec<f64>> = (0..1000).map(|i| vec![i as f64]).collect();
        let b = Binner::fit(&x, 64);
        assert!(b.bins(0) <= 64);
        assert!(b.bin(0, 999.0) as usize == b.bins(0) - 1);
    }

    #[test]
    fn single_tree_memorizes_xor() {
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = vec![0.0, 1.0, 1.0, 0.0];
        let p = ForestParams { n_trees: 1, bootstrap: false, tree: TreeParams::default() };
        let rf = RandomForest::fit(&x, &y, &p, &mut seed::rng(0, &[]));
        for (r, t) in x.iter().zip(&y) {
            assert_eq!(rf.predict(r), *t);
        }
    }

    #[test]
    fn depth_zero_boosting_is_the_mean() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = vec![1.0, 2.0, 6.0];
        let p = BoostParams { max_depth: 0, ..Default::default() };
        let gb = GradientBoosting::fit(&x, &y, &p, &mut seed::rng(0, &[]));
        assert_eq!(gb.predict(&[5.0]), 3.0);
    }

    #[test]
    fn max_depth_is_respected() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64).collect();
        let b = Binner::fit(&x, 64);
        let xb = b.transform(&x);
        let p = TreeParams { max_depth: Some(3), ..Default::default() };
        let t = Tree::grow(&b, &xb, &y, (0..64).collect(), &[0], &p, &mut seed::rng(0, &[]));
        assert_eq!(t.depth(), 3);
    }
}
