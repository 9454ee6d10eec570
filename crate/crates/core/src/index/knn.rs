use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::action_set::{squared_distance, ActionId, ActionSet};

/// One retrieved action and its squared L2 distance to the query.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: ActionId,
    pub dist2: f64,
}

impl Neighbor {
    /// Total order: distance first, then smaller id.
    #[inline]
    pub fn cmp_rank(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.id.cmp(&other.id))
    }
}

#[derive(Clone, Copy, Debug)]
struct Ranked(Neighbor);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.cmp_rank(&other.0)
    }
}

/// Bounded collection of the `k` best neighbors seen so far.
#[derive(Debug)]
pub(crate) struct KnnHeap {
    k: usize,
    heap: BinaryHeap<Ranked>,
}

impl KnnHeap {
    pub fn new(k: usize) -> Self {
        KnnHeap {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    pub fn is_full(&self) -> bool {
        self.heap.len() >= self.k
    }

    /// Squared distance any new candidate must beat once the heap is full.
    #[inline]
    pub fn worst(&self) -> f64 {
        if self.is_full() {
            self.heap.peek().map_or(f64::INFINITY, |r| r.0.dist2)
        } else {
            f64::INFINITY
        }
    }

    #[inline]
    pub fn push(&mut self, n: Neighbor) {
        if self.heap.len() < self.k {
            self.heap.push(Ranked(n));
        } else if let Some(top) = self.heap.peek() {
            if n.cmp_rank(&top.0) == Ordering::Less {
                self.heap.pop();
                self.heap.push(Ranked(n));
            }
        }
    }

    pub fn into_sorted(self) -> Vec<Neighbor> {
        self.heap.into_sorted_vec().into_iter().map(|r| r.0).collect()
    }
}

/// Exact k nearest neighbors by linear scan, ties broken by smaller id.
pub fn brute_force(actions: &ActionSet, query: &[f64], k: usize) -> Vec<Neighbor> {
    let n = actions.len();
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }
    if k * 8 >= n {
        let mut all: Vec<Neighbor> = (0..n)
            .map(|i| Neighbor {
                id: ActionId(i as u32),
                dist2: squared_distance(actions.row(i), query),
            })
            .collect();
        if k < n {
            all.select_nth_unstable_by(k - 1, Neighbor::cmp_rank);
            all.truncate(k);
        }
        all.sort_unstable_by(Neighbor::cmp_rank);
        return all;
    }
    let mut heap = KnnHeap::new(k);
    for i in 0..n {
        let d = squared_distance(actions.row(i), query);
        if d <= heap.worst() {
            heap.push(Neighbor {
                id: ActionId(i as u32),
                dist2: d,
            });
        }
    }
    heap.into_sorted()
}

/// Min-heap entry for best-bin-first traversal.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Branch {
    pub dist: f64,
    pub node: u32,
}

impl PartialEq for Branch {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Branch {}
impl PartialOrd for Branch {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Branch {
    // reversed so BinaryHeap pops the closest branch first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.node.cmp(&self.node))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heap_keeps_k_best_with_id_ties() {
        let mut h = KnnHeap::new(2);
        for (id, d) in [(5, 1.0), (3, 1.0), (1, 2.0), (0, 1.0)] {
            h.push(Neighbor {
                id: ActionId(id),
                dist2: d,
            });
        }
        let ids: Vec<u32> = h.into_sorted().iter().map(|n| n.id.0).collect();
        assert_eq!(ids, vec![0, 3]);
    }

    #[test]
    fn brute_force_one_dimensional() {
        let set = ActionSet::from_flat(1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let r = brute_force(&set, &[1.2], 2);
        assert_eq!(r[0].id, ActionId(1));
        assert_eq!(r[1].id, ActionId(2));
        assert!((r[0].dist2 - 0.04).abs() < 1e-12);
        assert!((r[1].dist2 - 0.64).abs() < 1e-12);
    }

    #[test]
    fn brute_force_large_k_path_matches_heap_path() {
        let data: Vec<f64> = (0..40).map(|i| ((i * 7919) % 23) as f64).collect();
        let set = ActionSet::from_flat(1, data).unwrap();
        let small = brute_force(&set, &[11.3], 4);
        let large = brute_force(&set, &[11.3], 40);
        assert_eq!(&large[..4], &small[..]);
        assert!(large.windows(2).all(|w| w[0].cmp_rank(&w[1]) == Ordering::Less));
    }
}
