//! Randomized k-d forest with a bounded number of point checks per query.
//!
//! Each tree splits on a dimension picked at random among the highest-variance
//! dimensions of a sample of the node's points, at the sample mean. Queries
//! descend every tree once and then keep expanding the closest unexplored
//! branches across all trees until the check budget is spent and `k`
//! candidates have been collected.

use std::collections::{BinaryHeap, HashSet};

use rand::Rng;

use super::action_set::{squared_distance, ActionId, ActionSet};
use super::knn::{Branch, KnnHeap, Neighbor};

const SAMPLE_SIZE: usize = 100;
const TOP_DIMS: usize = 5;

#[derive(Clone, Copy, Debug)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { dim: u32, value: f64, left: u32, right: u32 },
}

#[derive(Clone, Debug)]
struct KdTree {
    nodes: Vec<Node>,
    perm: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct KdForest {
    trees: Vec<KdTree>,
    checks: usize,
}

impl KdForest {
    pub fn build<R: Rng + ?Sized>(actions: &ActionSet, trees: usize, checks: usize, rng: &mut R) -> Self {
        let trees = (0..trees.max(1)).map(|_| KdTree::build(actions, rng)).collect();
        KdForest {
            trees,
            checks: checks.max(1),
        }
    }

    pub fn query(&self, actions: &ActionSet, q: &[f64], k: usize) -> Vec<Neighbor> {
        let mut result = KnnHeap::new(k);
        let mut branches = BinaryHeap::new();
        let mut checked: Option<HashSet<u32>> = (self.trees.len() > 1).then(HashSet::new);
        let mut checks = 0usize;
        let tree_stride = self.trees.iter().map(|t| t.nodes.len()).max().unwrap_or(0) as u32;
        let mut search = Search {
            actions,
            q,
            result: &mut result,
            branches: &mut branches,
            checked: &mut checked,
            checks: &mut checks,
            max_checks: self.checks,
        };
        for (t, tree) in self.trees.iter().enumerate() {
            search.descend(tree, t as u32 * tree_stride, 0, 0.0);
        }
        while let Some(b) = search.branches.pop() {
            if *search.checks >= search.max_checks && search.result.is_full() {
                break;
            }
            if b.dist > search.result.worst() {
                continue;
            }
            let t = b.node / tree_stride;
            let node = b.node % tree_stride;
            search.descend(&self.trees[t as usize], t * tree_stride, node, b.dist);
        }
        result.into_sorted()
    }
}

struct Search<'a> {
    actions: &'a ActionSet,
    q: &'a [f64],
    result: &'a mut KnnHeap,
    branches: &'a mut BinaryHeap<Branch>,
    checked: &'a mut Option<HashSet<u32>>,
    checks: &'a mut usize,
    max_checks: usize,
}

impl Search<'_> {
    fn descend(&mut self, tree: &KdTree, offset: u32, mut node: u32, mindist: f64) {
        loop {
            match tree.nodes[node as usize] {
                Node::Leaf { start, end } => {
                    if *self.checks >= self.max_checks && self.result.is_full() {
                        return;
                    }
                    for &p in &tree.perm[start as usize..end as usize] {
                        if let Some(seen) = self.checked.as_mut() {
                            if !seen.insert(p) {
                                continue;
                            }
                        }
                        *self.checks += 1;
                        let d = squared_distance(self.actions.row(p as usize), self.q);
                        self.result.push(Neighbor {
                            id: ActionId(p),
                            dist2: d,
                        });
                    }
                    return;
                }
                Node::Split {
                    dim,
                    value,
                    left,
                    right,
                } => {
                    let diff = self.q[dim as usize] - value;
                    let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                    let far_dist = mindist.max(diff * diff);
                    if far_dist <= self.result.worst() {
                        self.branches.push(Branch {
                            dist: far_dist,
                            node: offset + far,
                        });
                    }
                    node = near;
                }
            }
        }
    }
}

impl KdTree {
    fn build<R: Rng + ?Sized>(actions: &ActionSet, rng: &mut R) -> Self {
        let n = actions.len();
        let dim = actions.dim();
        let mut perm: Vec<u32> = (0..n as u32).collect();
        let mut nodes = vec![Node::Leaf { start: 0, end: n as u32 }];
        let mut work = vec![(0u32, 0usize, n)];
        let mut mean = vec![0.0; dim];
        let mut var = vec![0.0; dim];
        let mut order: Vec<usize> = (0..dim).collect();
        while let Some((id, start, end)) = work.pop() {
            if end - start <= 1 {
                continue;
            }
            let slice = &mut perm[start..end];
            let split = choose_split(actions, slice, rng, &mut mean, &mut var, &mut order)
                .or_else(|| midpoint_split(actions, slice));
            let Some((d, value)) = split else {
                // identical points: keep them in one bucket
                continue;
            };
            let mid = partition(slice, |p| actions.row(p as usize)[d] < value);
            let (left, right) = (nodes.len() as u32, nodes.len() as u32 + 1);
            nodes.push(Node::Leaf {
                start: start as u32,
                end: (start + mid) as u32,
            });
            nodes.push(Node::Leaf {
                start: (start + mid) as u32,
                end: end as u32,
            });
            nodes[id as usize] = Node::Split {
                dim: d as u32,
                value,
                left,
                right,
            };
            work.push((right, start + mid, end));
            work.push((left, start, start + mid));
        }
        KdTree { nodes, perm }
    }
}

/// Mean split on a random top-variance dimension, estimated from a sample.
/// Returns `None` when that split would leave one side empty.
fn choose_split<R: Rng + ?Sized>(
    actions: &ActionSet,
    points: &[u32],
    rng: &mut R,
    mean: &mut [f64],
    var: &mut [f64],
    order: &mut [usize],
) -> Option<(usize, f64)> {
    let sample: Vec<u32> = if points.len() <= SAMPLE_SIZE {
        points.to_vec()
    } else {
        (0..SAMPLE_SIZE)
            .map(|_| points[rng.random_range(0..points.len())])
            .collect()
    };
    let sample = &sample[..];
    mean.iter_mut().for_each(|m| *m = 0.0);
    var.iter_mut().for_each(|v| *v = 0.0);
    for &p in sample {
        for (m, x) in mean.iter_mut().zip(actions.row(p as usize)) {
            *m += x;
        }
    }
    let inv = 1.0 / sample.len() as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    for &p in sample {
        for ((v, m), x) in var.iter_mut().zip(mean.iter()).zip(actions.row(p as usize)) {
            let d = x - m;
            *v += d * d;
        }
    }
    for (i, o) in order.iter_mut().enumerate() {
        *o = i;
    }
    order.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    let top = order.iter().take(TOP_DIMS).filter(|&&d| var[d] > 0.0).count();
    if top == 0 {
        return None;
    }
    let d = order[rng.random_range(0..top)];
    let value = mean[d];
    let below = points
        .iter()
        .filter(|&&p| actions.row(p as usize)[d] < value)
        .count();
    (below > 0 && below < points.len()).then_some((d, value))
}

/// Split at the midpoint of the widest dimension; both sides are non-empty
/// whenever the points are not all identical.
fn midpoint_split(actions: &ActionSet, points: &[u32]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for d in 0..actions.dim() {
        let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
            let x = actions.row(p as usize)[d];
            (lo.min(x), hi.max(x))
        });
        if hi > lo && best.is_none_or(|(_, l, h)| hi - lo > h - l) {
            best = Some((d, lo, hi));
        }
    }
    best.map(|(d, lo, hi)| {
        let mid = 0.5 * (lo + hi);
        // guard against mid rounding up to hi
        (d, if mid > lo { mid } else { hi })
    })
}

/// Moves elements satisfying `pred` to the front, returning their count.
fn partition(slice: &mut [u32], pred: impl Fn(u32) -> bool) -> usize {
    let mut i = 0;
    for j in 0..slice.len() {
        if pred(slice[j]) {
            slice.swap(i, j);
            i += 1;
        }
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::knn::brute_force;
    use crate::rng;

    fn random_set(n: usize, dim: usize, seed: u64) -> ActionSet {
        let mut r = rng::stream(seed, 0);
        ActionSet::from_flat(dim, (0..n * dim).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn unlimited_checks_is_exact() {
        let set = random_set(500, 4, 1);
        let mut r = rng::stream(2, 0);
        let forest = KdForest::build(&set, 2, usize::MAX, &mut r);
        for i in 0..20 {
            let q = [i as f64 * 0.1 - 1.0, 0.3, -0.2, 0.05 * i as f64];
            assert_eq!(forest.query(&set, &q, 7), brute_force(&set, &q, 7));
        }
    }

    #[test]
    fn single_check_still_fills_k() {
        let set = random_set(300, 3, 4);
        let mut r = rng::stream(5, 0);
        let forest = KdForest::build(&set, 1, 1, &mut r);
        let res = forest.query(&set, &[0.0, 0.0, 0.0], 10);
        assert_eq!(res.len(), 10);
        let mut ids: Vec<_> = res.iter().map(|n| n.id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 10);
    }

    #[test]
    fn duplicates_share_a_bucket() {
        let set = ActionSet::from_flat(2, vec![1.0; 2 * 50]).unwrap();
        let mut r = rng::stream(0, 0);
        let forest = KdForest::build(&set, 3, 1, &mut r);
        let res = forest.query(&set, &[0.0, 0.0], 5);
        assert_eq!(res.len(), 5);
        assert_eq!(res[0].id, ActionId(0));
    }

    #[test]
    fn skewed_data_builds_without_deep_recursion() {
        let data: Vec<f64> = (0..60).map(|i| 2f64.powi(i)).collect();
        let set = ActionSet::from_flat(1, data).unwrap();
        let mut r = rng::stream(0, 0);
        let forest = KdForest::build(&set, 1, usize::MAX, &mut r);
        assert_eq!(forest.query(&set, &[3.0], 2), brute_force(&set, &[3.0], 2));
    }
}
