//! Gradient-boosted regression trees with exact greedy split search.
//!
//! Features are presorted once per fit; each node keeps, for every feature,
//! its rows in sorted order, and a split stably partitions those lists. Split
//! search therefore costs O(rows * features) per tree level.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::rng_from_seed;
use rand::seq::index;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub trees: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    pub subsample: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    /// Squared error; predictions are conditional means.
    Squared,
    /// Binary log-loss; the raw score is a log-odds.
    Logistic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GbtModel {
    loss: Loss,
    base_score: f64,
    trees: Vec<Tree>,
    /// Training loss after the initial constant and after each round.
    pub loss_curve: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn training_loss(loss: Loss, y: &[f64], score: &[f64]) -> f64 {
    let n = y.len() as f64;
    match loss {
        Loss::Squared => y.iter().zip(score).map(|(y, f)| (y - f) * (y - f)).sum::<f64>() / n,
        Loss::Logistic => {
            y.iter()
                .zip(score)
                .map(|(&y, &f)| {
                    // log(1 + e^f) - y*f, stably
                    let softplus = if f > 0.0 { f + (-f).exp().ln_1p() } else { f.exp().ln_1p() };
                    softplus - y * f
                })
                .sum::<f64>()
                / n
        }
    }
}

struct Builder<'a> {
    columns: &'a [Vec<f64>],
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbtParams,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
    /// Row ids sorted by each feature; a node owns the range `lo..hi` of every list.
    lists: Vec<Vec<u32>>,
    scratch: Vec<u32>,
    /// Leaf value reached by every training row of the tree.
    row_value: &'a mut [f64],
}

struct SplitChoice {
    feature: usize,
    position: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.params.l2;
        if denom > 0.0 {
            g * g / denom
        } else {
            0.0
        }
    }

    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.params.l2;
        if denom > 0.0 {
            -g / denom * self.params.learning_rate
        } else {
            0.0
        }
    }

    fn best_split(&self, lo: usize, hi: usize, g_total: f64, h_total: f64) -> Option<SplitChoice> {
        let min_leaf = self.params.min_leaf.max(1);
        let count = hi - lo;
        if count < 2 * min_leaf {
            return None;
        }
        let parent = self.score(g_total, h_total);
        let mut best: Option<(f64, SplitChoice)> = None;
        for (feature, list) in self.lists.iter().enumerate() {
            let list = &list[lo..hi];
            let col = &self.columns[feature];
            let (mut gl, mut hl) = (0.0, 0.0);
            for pos in 0..count - 1 {
                let r = list[pos] as usize;
                gl += self.grad[r];
                hl += self.hess[r];
                let left_n = pos + 1;
                if left_n < min_leaf {
                    continue;
                }
                if count - left_n < min_leaf {
                    break;
                }
                let (a, b) = (col[r], col[list[pos + 1] as usize]);
                if a >= b {
                    continue;
                }
                let gain =
                    self.score(gl, hl) + self.score(g_total - gl, h_total - hl) - parent;
                if gain > 0.0 && best.as_ref().is_none_or(|(g, _)| gain > *g) {
                    let mid = 0.5 * (a + b);
                    let threshold = if mid < b { mid } else { a };
                    best = Some((
                        gain,
                        SplitChoice {
                            feature,
                            position: pos,
                            threshold,
                        },
                    ));
                }
            }
        }
        best.map(|(_, s)| s)
    }

    /// Stable in-place partition of every list's `lo..hi` range by `goes_left`.
    fn partition(&mut self, lo: usize, hi: usize) {
        for list in &mut self.lists {
            let mut write = lo;
            self.scratch.clear();
            for i in lo..hi {
                let r = list[i];
                if self.goes_left[r as usize] {
                    list[write] = r;
                    write += 1;
                } else {
                    self.scratch.push(r);
                }
            }
            list[write..hi].copy_from_slice(&self.scratch);
        }
    }

    fn build(&mut self, lo: usize, hi: usize, depth: usize) -> usize {
        let (g, h) = self.lists[0][lo..hi].iter().fold((0.0, 0.0), |(g, h), &r| {
            (g + self.grad[r as usize], h + self.hess[r as usize])
        });
        let id = self.nodes.len();
        let value = self.leaf_value(g, h);
        self.nodes.push(Node::Leaf(value));
        let split = if depth < self.params.depth {
            self.best_split(lo, hi, g, h)
        } else {
            None
        };
        let Some(split) = split else {
            for &r in &self.lists[0][lo..hi] {
                self.row_value[r as usize] = value;
            }
            return id;
        };
        let cut = lo + split.position + 1;
        let chosen = &self.lists[split.feature];
        for &r in &chosen[lo..cut] {
            self.goes_left[r as usize] = true;
        }
        for &r in &chosen[cut..hi] {
            self.goes_left[r as usize] = false;
        }
        self.partition(lo, hi);
        let left_id = self.build(lo, cut, depth + 1);
        let right_id = self.build(cut, hi, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: left_id,
            right: right_id,
        };
        id
    }
}

impl GbtModel {
    pub fn fit(params: &GbtParams, loss: Loss, x: &Matrix, y: &[f64], seed: u64) -> Result<Self> {
        let n = x.nrows();
        if n != y.len() {
            return Err(Error::Learner("feature and target lengths differ".into()));
        }
        if n == 0 || n < params.min_leaf {
            return Err(Error::Learner(format!(
                "{n} training rows is fewer than min_leaf = {}",
                params.min_leaf
            )));
        }
        let d = x.ncols();
        let columns: Vec<Vec<f64>> = (0..d).map(|j| x.column(j)).collect();
        let presorted: Vec<Vec<u32>> = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| {
                    col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b))
                });
                idx
            })
            .collect();

        let base_score = match loss {
            Loss::Squared => y.iter().sum::<f64>() / n as f64,
            Loss::Logistic => {
                let p = (y.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
                (p / (1.0 - p)).ln()
            }
        };
        let mut score = vec![base_score; n];
        let mut loss_curve = Vec::with_capacity(params.trees + 1);
        loss_curve.push(training_loss(loss, y, &score));

        let mut rng = rng_from_seed(seed);
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut in_sample = vec![true; n];
        let mut row_value = vec![0.0; n];
        let sample_size = ((params.subsample * n as f64).floor() as usize).clamp(1, n);
        let mut trees = Vec::with_capacity(params.trees);

        for _ in 0..params.trees {
            for i in 0..n {
                match loss {
                    Loss::Squared => {
                        grad[i] = score[i] - y[i];
                        hess[i] = 1.0;
                    }
                    Loss::Logistic => {
                        let p = sigmoid(score[i]);
                        grad[i] = p - y[i];
                        hess[i] = (p * (1.0 - p)).max(1e-12);
                    }
                }
            }
            let lists: Vec<Vec<u32>> = if sample_size < n {
                in_sample.iter_mut().for_each(|s| *s = false);
                for i in index::sample(&mut rng, n, sample_size) {
                    in_sample[i] = true;
                }
                presorted
                    .iter()
                    .map(|l| l.iter().copied().filter(|&r| in_sample[r as usize]).collect())
                    .collect()
            } else if d == 0 {
                vec![(0..n as u32).collect()]
            } else {
                presorted.clone()
            };
            let sampled = lists[0].len();
            let mut builder = Builder {
                columns: &columns,
                grad: &grad,
                hess: &hess,
                params,
                nodes: Vec::new(),
                goes_left: vec![false; n],
                lists,
                scratch: Vec::with_capacity(sampled),
                row_value: &mut row_value,
            };
            builder.build(0, sampled, 0);
            let tree = Tree {
                nodes: builder.nodes,
            };
            if sampled == n {
                score.iter_mut().zip(&row_value).for_each(|(s, v)| *s += v);
            } else {
                for (i, s) in score.iter_mut().enumerate() {
                    *s += tree.predict_row(x.row(i));
                }
            }
            loss_curve.push(training_loss(loss, y, &score));
            trees.push(tree);
        }
        Ok(Self {
            loss,
            base_score,
            trees,
            loss_curve,
        })
    }

    /// Raw score: the mean for squared loss, the log-odds for logistic loss.
    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.loss {
            Loss::Squared => self.raw_score(row),
            Loss::Logistic => sigmoid(self.raw_score(row)),
        }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }
}
