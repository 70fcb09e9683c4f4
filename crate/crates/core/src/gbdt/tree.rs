use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

/// Regression tree with axis-aligned splits. Rows with `x[feature] <=
/// threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub(crate) fn scale_leaves(&mut self, factor: f64) {
        match self {
            TreeNode::Leaf { value } => *value *= factor,
            TreeNode::Split { left, right, .. } => {
                left.scale_leaves(factor);
                right.scale_leaves(factor);
            }
        }
    }

    pub(crate) fn add_importances(&self, out: &mut [f64]) {
        if let TreeNode::Split {
            feature,
            gain,
            left,
            right,
            ..
        } = self
        {
            out[*feature] += gain;
            left.add_importances(out);
            right.add_importances(out);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_leaf_count: usize,
    pub lambda: f64,
}

/// Row orders of every feature, sorted by value.
pub(crate) struct Presorted {
    pub orders: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: &Matrix) -> Self {
        let orders = (0..x.cols())
            .map(|j| {
                let mut idx: Vec<u32> = (0..x.rows() as u32).collect();
                idx.sort_by(|&a, &b| x.get(a as usize, j).total_cmp(&x.get(b as usize, j)));
                idx
            })
            .collect();
        Self { orders }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    n: usize,
}

impl Stats {
    fn score(&self, lambda: f64) -> f64 {
        self.g * self.g / (self.h + lambda)
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn better(a: &Candidate, b: &Option<Candidate>) -> bool {
    match b {
        None => true,
        Some(b) => a.gain > b.gain || (a.gain == b.gain && a.feature < b.feature),
    }
}

enum Pending {
    Open { stats: Stats },
    Done(TreeNode),
}

/// Grows one tree on gradients `g` and hessians `h`, level by level.
/// Leaves hold the Newton step `-G / (H + lambda)`.
pub(crate) fn grow_tree(
    x: &Matrix,
    presorted: &Presorted,
    features: &[usize],
    g: &[f64],
    h: &[f64],
    params: TreeParams,
) -> TreeNode {
    let n = x.rows();
    let lambda = params.lambda;
    let leaf = |s: &Stats| TreeNode::Leaf {
        value: -s.g / (s.h + lambda),
    };

    // Nodes are numbered in creation order; `node_of[i]` is the open node
    // of row `i` at the current level, or `usize::MAX` once its node closed.
    let mut node_of = vec![0usize; n];
    let mut root = Stats::default();
    for i in 0..n {
        root.g += g[i];
        root.h += h[i];
        root.n += 1;
    }
    let mut nodes: Vec<Pending> = vec![Pending::Open { stats: root }];
    let mut children: Vec<Option<(usize, usize, usize, f64, f64)>> = vec![None];
    let mut open: Vec<usize> = vec![0];

    for _depth in 0..params.max_depth {
        if open.is_empty() {
            break;
        }
        let slot: Vec<usize> = {
            let mut s = vec![usize::MAX; nodes.len()];
            for (k, &id) in open.iter().enumerate() {
                s[id] = k;
            }
            s
        };
        let totals: Vec<Stats> = open
            .iter()
            .map(|&id| match &nodes[id] {
                Pending::Open { stats } => *stats,
                Pending::Done(_) => unreachable!(),
            })
            .collect();

        let per_feature: Vec<Vec<Option<Candidate>>> = features
            .par_iter()
            .map(|&f| {
                let mut best: Vec<Option<Candidate>> = vec![None; open.len()];
                let mut left = vec![Stats::default(); open.len()];
                let mut last = vec![f64::NAN; open.len()];
                for &row in &presorted.orders[f] {
                    let row = row as usize;
                    let id = node_of[row];
                    if id == usize::MAX {
                        continue;
                    }
                    let k = slot[id];
                    if k == usize::MAX {
                        continue;
                    }
                    let v = x.get(row, f);
                    let l = left[k];
                    if l.n >= params.min_leaf_count && v > last[k] {
                        let total = totals[k];
                        let r = Stats {
                            g: total.g - l.g,
                            h: total.h - l.h,
                            n: total.n - l.n,
                        };
                        if r.n >= params.min_leaf_count {
                            let gain = 0.5 * (l.score(lambda) + r.score(lambda) - total.score(lambda));
                            let mid = last[k] + 0.5 * (v - last[k]);
                            let threshold = if mid < v { mid } else { last[k] };
                            let c = Candidate {
                                gain,
                                feature: f,
                                threshold,
                            };
                            if gain > 0.0 && better(&c, &best[k]) {
                                best[k] = Some(c);
                            }
                        }
                    }
                    left[k].g += g[row];
                    left[k].h += h[row];
                    left[k].n += 1;
                    last[k] = v;
                }
                best
            })
            .collect();

        let mut next_open = Vec::new();
        let mut split_of: Vec<Option<Candidate>> = vec![None; open.len()];
        for (k, &id) in open.iter().enumerate() {
            let mut best: Option<Candidate> = None;
            for cands in &per_feature {
                if let Some(c) = &cands[k] {
                    if better(c, &best) {
                        best = Some(*c);
                    }
                }
            }
            match best {
                None => {
                    let stats = totals[k];
                    nodes[id] = Pending::Done(leaf(&stats));
                }
                Some(c) => {
                    let l_id = nodes.len();
                    nodes.push(Pending::Open { stats: Stats::default() });
                    children.push(None);
                    let r_id = nodes.len();
                    nodes.push(Pending::Open { stats: Stats::default() });
                    children.push(None);
                    children[id] = Some((l_id, r_id, c.feature, c.threshold, c.gain));
                    next_open.push(l_id);
                    next_open.push(r_id);
                    split_of[k] = Some(c);
                }
            }
        }
        for i in 0..n {
            let id = node_of[i];
            if id == usize::MAX {
                continue;
            }
            match children[id] {
                Some((l, r, f, t, _)) => {
                    let child = if x.get(i, f) <= t { l } else { r };
                    node_of[i] = child;
                    if let Pending::Open { stats } = &mut nodes[child] {
                        stats.g += g[i];
                        stats.h += h[i];
                        stats.n += 1;
                    }
                }
                None => node_of[i] = usize::MAX,
            }
        }
        open = next_open;
    }
    for id in open {
        if let Pending::Open { stats } = nodes[id] {
            nodes[id] = Pending::Done(leaf(&stats));
        }
    }

    fn assemble(id: usize, nodes: &mut Vec<Pending>, children: &[Option<(usize, usize, usize, f64, f64)>]) -> TreeNode {
        match children[id] {
            Some((l, r, feature, threshold, gain)) => TreeNode::Split {
                feature,
                threshold,
                gain,
                left: Box::new(assemble(l, nodes, children)),
                right: Box::new(assemble(r, nodes, children)),
            },
            None => match std::mem::replace(&mut nodes[id], Pending::Done(TreeNode::Leaf { value: 0.0 })) {
                Pending::Done(t) => t,
                Pending::Open { .. } => unreachable!("all nodes closed"),
            },
        }
    }
    assemble(0, &mut nodes, &children)
}
