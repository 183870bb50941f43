//! CART regression trees with squared-error splits.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A fitted regression tree. Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features examined per node; `p` examines all.
    pub max_features: usize,
}

struct Grower<'a, R> {
    x: &'a [f64],
    p: usize,
    target: &'a [f64],
    params: GrowParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl<R: Rng> Grower<'_, R> {
    fn value(&self, slot_rows: &[u32], slots: &[u32]) -> f64 {
        let sum: f64 = slots
            .iter()
            .map(|&s| self.target[slot_rows[s as usize] as usize])
            .sum();
        sum / slots.len() as f64
    }

    /// `orders[f]` lists this node's slots sorted by feature `f`.
    fn grow(&mut self, slot_rows: &[u32], orders: Vec<Vec<u32>>, depth: usize) -> usize {
        let id = self.nodes.len();
        let slots = &orders[0];
        let count = slots.len();
        let leaf_value = self.value(slot_rows, slots);
        self.nodes.push(Node::Leaf { value: leaf_value });
        if depth >= self.params.max_depth || count < 2 * self.params.min_leaf.max(1) {
            return id;
        }

        let total: f64 = slots
            .iter()
            .map(|&s| self.target[slot_rows[s as usize] as usize])
            .sum();
        let parent_score = total * total / count as f64;
        let features: Vec<usize> = if self.params.max_features >= self.p {
            (0..self.p).collect()
        } else {
            let mut f = sample(self.rng, self.p, self.params.max_features).into_vec();
            f.sort_unstable();
            f
        };

        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<BestSplit> = None;
        for &f in &features {
            let order = &orders[f];
            let mut left_sum = 0.0;
            for k in 0..count - 1 {
                let row = slot_rows[order[k] as usize] as usize;
                left_sum += self.target[row];
                let n_left = k + 1;
                let n_right = count - n_left;
                if n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let here = self.x[row * self.p + f];
                let next = self.x[slot_rows[order[k + 1] as usize] as usize * self.p + f];
                if here == next {
                    continue;
                }
                let right_sum = total - left_sum;
                let score =
                    left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mut threshold = 0.5 * (here + next);
                    if threshold >= next {
                        threshold = here;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }

        let Some(best) = best else { return id };
        if best.score - parent_score <= 1e-12 * parent_score.abs().max(1e-300) {
            return id;
        }

        for &s in slots {
            let row = slot_rows[s as usize] as usize;
            self.goes_left[s as usize] = self.x[row * self.p + best.feature] <= best.threshold;
        }
        let mut left_orders = Vec::with_capacity(self.p);
        let mut right_orders = Vec::with_capacity(self.p);
        for order in orders {
            let (l, r): (Vec<u32>, Vec<u32>) =
                order.into_iter().partition(|&s| self.goes_left[s as usize]);
            left_orders.push(l);
            right_orders.push(r);
        }
        let left = self.grow(slot_rows, left_orders, depth + 1);
        let right = self.grow(slot_rows, right_orders, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }
}

/// Grows a tree on the rows listed in `slot_rows` (repeats allowed, as in a
/// bootstrap sample). `x` is row-major with width `p`.
pub(crate) fn grow_tree<R: Rng>(
    x: &[f64],
    p: usize,
    target: &[f64],
    slot_rows: &[u32],
    params: GrowParams,
    rng: &mut R,
) -> RegressionTree {
    let n = slot_rows.len();
    let orders: Vec<Vec<u32>> = (0..p)
        .map(|f| {
            let mut order: Vec<u32> = (0..n as u32).collect();
            order.sort_by(|&a, &b| {
                let xa = x[slot_rows[a as usize] as usize * p + f];
                let xb = x[slot_rows[b as usize] as usize * p + f];
                xa.total_cmp(&xb).then(a.cmp(&b))
            });
            order
        })
        .collect();
    let mut grower = Grower {
        x,
        p,
        target,
        params,
        rng,
        nodes: Vec::new(),
        goes_left: vec![false; n],
    };
    grower.grow(slot_rows, orders, 0);
    RegressionTree {
        nodes: grower.nodes,
    }
}
