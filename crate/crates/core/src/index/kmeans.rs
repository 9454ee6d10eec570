//! Hierarchical k-means tree searched best-bin-first.
//!
//! Every internal node clusters its points into up to `branching` groups with
//! Lloyd iterations from a k-means++ seeding; nodes with fewer than
//! `branching` points are leaves. A query walks to the closest child at each
//! level, queuing the siblings by distance to their centers, and keeps
//! expanding the closest queued node until `checks` points have been examined
//! and `k` candidates collected.

use std::collections::BinaryHeap;

use rand::Rng;

use super::action_set::{squared_distance, ActionId, ActionSet};
use super::knn::{Branch, KnnHeap, Neighbor};

#[derive(Clone, Debug)]
struct Node {
    center: Vec<f64>,
    children: Vec<u32>,
    points: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct KMeansTree {
    nodes: Vec<Node>,
    checks: usize,
}

impl KMeansTree {
    pub fn build<R: Rng + ?Sized>(
        actions: &ActionSet,
        branching: usize,
        iterations: usize,
        checks: usize,
        rng: &mut R,
    ) -> Self {
        let branching = branching.max(2);
        let all: Vec<u32> = (0..actions.len() as u32).collect();
        let mut nodes = vec![Node {
            center: mean_of(actions, &all),
            children: Vec::new(),
            points: Vec::new(),
        }];
        let mut work = vec![(0usize, all)];
        while let Some((id, points)) = work.pop() {
            if points.len() < branching {
                nodes[id].points = points;
                continue;
            }
            let clusters = cluster(actions, &points, branching, iterations, rng);
            if clusters.len() < 2 {
                nodes[id].points = points;
                continue;
            }
            for (center, members) in clusters {
                let child = nodes.len();
                nodes.push(Node {
                    center,
                    children: Vec::new(),
                    points: Vec::new(),
                });
                nodes[id].children.push(child as u32);
                work.push((child, members));
            }
        }
        KMeansTree {
            nodes,
            checks: checks.max(1),
        }
    }

    pub fn query(&self, actions: &ActionSet, q: &[f64], k: usize) -> Vec<Neighbor> {
        let mut result = KnnHeap::new(k);
        let mut branches = BinaryHeap::new();
        let mut checks = 0usize;
        self.descend(actions, q, 0, &mut result, &mut branches, &mut checks);
        while let Some(b) = branches.pop() {
            if checks >= self.checks && result.is_full() {
                break;
            }
            self.descend(actions, q, b.node, &mut result, &mut branches, &mut checks);
        }
        result.into_sorted()
    }

    fn descend(
        &self,
        actions: &ActionSet,
        q: &[f64],
        mut node: u32,
        result: &mut KnnHeap,
        branches: &mut BinaryHeap<Branch>,
        checks: &mut usize,
    ) {
        loop {
            let n = &self.nodes[node as usize];
            if n.children.is_empty() {
                if *checks >= self.checks && result.is_full() {
                    return;
                }
                for &p in &n.points {
                    *checks += 1;
                    result.push(Neighbor {
                        id: ActionId(p),
                        dist2: squared_distance(actions.row(p as usize), q),
                    });
                }
                return;
            }
            let mut best = (f64::INFINITY, u32::MAX);
            let mut dists = Vec::with_capacity(n.children.len());
            for &c in &n.children {
                let d = squared_distance(&self.nodes[c as usize].center, q);
                dists.push((d, c));
                if d < best.0 || (d == best.0 && c < best.1) {
                    best = (d, c);
                }
            }
            for (d, c) in dists {
                if c != best.1 {
                    branches.push(Branch { dist: d, node: c });
                }
            }
            node = best.1;
        }
    }
}

fn mean_of(actions: &ActionSet, points: &[u32]) -> Vec<f64> {
    let mut m = vec![0.0; actions.dim()];
    for &p in points {
        for (a, x) in m.iter_mut().zip(actions.row(p as usize)) {
            *a += x;
        }
    }
    let inv = 1.0 / points.len().max(1) as f64;
    m.iter_mut().for_each(|a| *a *= inv);
    m
}

/// Lloyd's algorithm from k-means++ seeds. Empty clusters are dropped.
fn cluster<R: Rng + ?Sized>(
    actions: &ActionSet,
    points: &[u32],
    branching: usize,
    iterations: usize,
    rng: &mut R,
) -> Vec<(Vec<f64>, Vec<u32>)> {
    let dim = actions.dim();
    let mut centers = kmeans_pp(actions, points, branching, rng);
    let mut assign = vec![0usize; points.len()];
    for it in 0..iterations.max(1) {
        let mut changed = false;
        for (a, &p) in assign.iter_mut().zip(points) {
            let x = actions.row(p as usize);
            let mut best = (f64::INFINITY, 0);
            for (c, center) in centers.chunks_exact(dim).enumerate() {
                let d = squared_distance(center, x);
                if d < best.0 {
                    best = (d, c);
                }
            }
            if *a != best.1 {
                *a = best.1;
                changed = true;
            }
        }
        if it > 0 && !changed {
            break;
        }
        let mut sums = vec![0.0; centers.len()];
        let mut counts = vec![0usize; centers.len() / dim];
        for (a, &p) in assign.iter().zip(points) {
            counts[*a] += 1;
            for (s, x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(actions.row(p as usize)) {
                *s += x;
            }
        }
        for (c, count) in counts.iter().enumerate() {
            if *count > 0 {
                for d in 0..dim {
                    centers[c * dim + d] = sums[c * dim + d] / *count as f64;
                }
            }
        }
    }
    let nc = centers.len() / dim;
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); nc];
    for (a, &p) in assign.iter().zip(points) {
        members[*a].push(p);
    }
    members
        .into_iter()
        .filter(|m| !m.is_empty())
        .map(|m| (mean_of(actions, &m), m))
        .collect()
}

/// k-means++ seeding; returns centers as a flat `count × dim` buffer.
fn kmeans_pp<R: Rng + ?Sized>(actions: &ActionSet, points: &[u32], count: usize, rng: &mut R) -> Vec<f64> {
    let dim = actions.dim();
    let first = points[rng.random_range(0..points.len())];
    let mut centers = actions.row(first as usize).to_vec();
    let mut nearest: Vec<f64> = points
        .iter()
        .map(|&p| squared_distance(actions.row(p as usize), &centers))
        .collect();
    while centers.len() / dim < count {
        let total: f64 = nearest.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random_range(0.0..total);
        let mut pick = points.len() - 1;
        for (i, d) in nearest.iter().enumerate() {
            if target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = actions.row(points[pick] as usize).to_vec();
        for (n, &p) in nearest.iter_mut().zip(points) {
            *n = n.min(squared_distance(actions.row(p as usize), &c));
        }
        centers.extend(c);
    }
    centers
}
