//! Single CART tree: iterative growth with weighted Gini splits.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Flattened tree node. Serialized untagged: splits and leaves have
/// disjoint field sets, so the JSON stays compact and unambiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split { f: u32, t: f64, l: u32, r: u32 },
    Leaf { w0: f64, w1: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Route one example to its leaf and return the leaf's class
    /// weight masses. `value(f)` must already handle imputation.
    pub fn leaf_masses(&self, mut value: impl FnMut(usize) -> f64) -> (f64, f64) {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { w0, w1 } => return (*w0, *w1),
                Node::Split { f, t, l, r } => {
                    at = if value(*f as usize) <= *t {
                        *l as usize
                    } else {
                        *r as usize
                    };
                }
            }
        }
    }
}

pub struct FitContext<'a> {
    /// Column-major training data, nulls already imputed.
    pub columns: &'a [Vec<f64>],
    pub labels: &'a [bool],
    /// Per-class sample weight, indexed by label.
    pub class_weight: [f64; 2],
    pub max_features: usize,
    pub min_samples_leaf: usize,
    pub max_depth: usize,
    pub bootstrap: bool,
}

/// Raw per-feature importance tallies for one tree.
pub struct TreeTallies {
    /// Weighted sample mass reaching each node that splits on f.
    pub separated: Vec<f64>,
    /// Weighted Gini decrease attributed to splits on f.
    pub impurity: Vec<f64>,
}

fn gini(w0: f64, w1: f64) -> f64 {
    let s = w0 + w1;
    if s <= 0.0 {
        return 0.0;
    }
    let (p0, p1) = (w0 / s, w1 / s);
    1.0 - p0 * p0 - p1 * p1
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

fn find_best_split(
    ctx: &FitContext,
    rows: &[u32],
    w0: f64,
    w1: f64,
    rng: &mut ChaCha8Rng,
    scratch: &mut Vec<(f64, bool)>,
) -> Option<BestSplit> {
    let d = ctx.columns.len();
    let n = rows.len();
    let total = w0 + w1;
    let g_parent = gini(w0, w1);
    let mut best: Option<BestSplit> = None;

    for fi in rand::seq::index::sample(rng, d, ctx.max_features) {
        let col = &ctx.columns[fi];
        scratch.clear();
        scratch.extend(rows.iter().map(|&r| (col[r as usize], ctx.labels[r as usize])));
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

        let (mut wl0, mut wl1) = (0.0, 0.0);
        for i in 0..n - 1 {
            let (v, y) = scratch[i];
            if y {
                wl1 += ctx.class_weight[1];
            } else {
                wl0 += ctx.class_weight[0];
            }
            let next = scratch[i + 1].0;
            if !(v < next) {
                continue;
            }
            let (n_left, n_right) = (i + 1, n - i - 1);
            if n_left < ctx.min_samples_leaf || n_right < ctx.min_samples_leaf {
                continue;
            }
            let (wr0, wr1) = (w0 - wl0, w1 - wl1);
            let decrease = g_parent
                - ((wl0 + wl1) * gini(wl0, wl1) + (wr0 + wr1) * gini(wr0, wr1)) / total;
            if best.as_ref().map(|b| decrease > b.decrease).unwrap_or(true) {
                // Midpoint threshold; if rounding collapses it onto the
                // upper value, fall back to the lower one so both sides
                // stay nonempty under `x <= t`.
                let mut t = v + (next - v) / 2.0;
                if !(t < next) {
                    t = v;
                }
                best = Some(BestSplit {
                    feature: fi,
                    threshold: t,
                    decrease,
                });
            }
        }
    }
    best
}

/// Grow one tree from a per-tree seed. Returns the tree plus raw
/// importance tallies, which the forest averages and normalizes.
pub fn grow(ctx: &FitContext, seed: u64) -> (Tree, TreeTallies) {
    let n = ctx.labels.len();
    let d = ctx.columns.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut rows: Vec<u32> = if ctx.bootstrap {
        let mut sample: Vec<u32> = (0..n).map(|_| rng.random_range(0..n) as u32).collect();
        sample.sort_unstable();
        sample
    } else {
        (0..n as u32).collect()
    };

    let mut tallies = TreeTallies {
        separated: vec![0.0; d],
        impurity: vec![0.0; d],
    };
    let mut nodes: Vec<Node> = vec![Node::Leaf { w0: 0.0, w1: 0.0 }];
    // Explicit stack instead of recursion: depth is data-dependent and
    // can exceed the thread stack on adversarial inputs.
    struct Job {
        slot: usize,
        rows: Vec<u32>,
        depth: usize,
    }
    let mut stack = vec![Job {
        slot: 0,
        rows: std::mem::take(&mut rows),
        depth: 0,
    }];
    let mut scratch: Vec<(f64, bool)> = Vec::new();

    while let Some(job) = stack.pop() {
        let (mut w0, mut w1) = (0.0, 0.0);
        for &r in &job.rows {
            if ctx.labels[r as usize] {
                w1 += ctx.class_weight[1];
            } else {
                w0 += ctx.class_weight[0];
            }
        }
        let splittable = w0 > 0.0
            && w1 > 0.0
            && job.rows.len() >= 2 * ctx.min_samples_leaf
            && job.depth < ctx.max_depth;
        let split = if splittable {
            find_best_split(ctx, &job.rows, w0, w1, &mut rng, &mut scratch)
        } else {
            None
        };
        match split {
            Some(best) if best.decrease > 1e-12 => {
                tallies.separated[best.feature] += w0 + w1;
                let col = &ctx.columns[best.feature];
                let (left, right): (Vec<u32>, Vec<u32>) = job
                    .rows
                    .iter()
                    .partition(|&&r| col[r as usize] <= best.threshold);
                let (mut lw0, mut lw1) = (0.0, 0.0);
                for &r in &left {
                    if ctx.labels[r as usize] {
                        lw1 += ctx.class_weight[1];
                    } else {
                        lw0 += ctx.class_weight[0];
                    }
                }
                let (rw0, rw1) = (w0 - lw0, w1 - lw1);
                tallies.impurity[best.feature] += (w0 + w1) * gini(w0, w1)
                    - (lw0 + lw1) * gini(lw0, lw1)
                    - (rw0 + rw1) * gini(rw0, rw1);

                let l_slot = nodes.len();
                nodes.push(Node::Leaf { w0: 0.0, w1: 0.0 });
                let r_slot = nodes.len();
                nodes.push(Node::Leaf { w0: 0.0, w1: 0.0 });
                nodes[job.slot] = Node::Split {
                    f: best.feature as u32,
                    t: best.threshold,
                    l: l_slot as u32,
                    r: r_slot as u32,
                };
                stack.push(Job {
                    slot: r_slot,
                    rows: right,
                    depth: job.depth + 1,
                });
                stack.push(Job {
                    slot: l_slot,
                    rows: left,
                    depth: job.depth + 1,
                });
            }
            _ => {
                nodes[job.slot] = Node::Leaf { w0, w1 };
            }
        }
    }
    (Tree { nodes }, tallies)
}
