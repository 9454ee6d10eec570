//! Action embeddings and k-nearest-neighbor lookup over them.
//!
//! Four accuracy tiers are available. `Exact` is a linear scan. `Slow` is a
//! hierarchical k-means tree with branching factor 16, `Medium` a forest of
//! randomized k-d trees examining 39 points per query, and `Fast` a single
//! randomized k-d tree that examines one point before padding the answer up to
//! `k` from the closest remaining branches.

mod action_set;
mod kdtree;
mod kmeans;
mod knn;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use action_set::{squared_distance, ActionId, ActionSet};
pub use kdtree::KdForest;
pub use kmeans::KMeansTree;
pub use knn::{brute_force, Neighbor};

use crate::rng;
use crate::{Error, Result};

/// Ordered `k`-nearest result, ascending by distance then id.
pub type NeighborResult = Vec<Neighbor>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Exact,
    Slow,
    Medium,
    Fast,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::Exact, Tier::Slow, Tier::Medium, Tier::Fast];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Exact => "exact",
            Tier::Slow => "slow",
            Tier::Medium => "medium",
            Tier::Fast => "fast",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(Tier::Exact),
            "slow" => Ok(Tier::Slow),
            "medium" => Ok(Tier::Medium),
            "fast" => Ok(Tier::Fast),
            other => Err(Error::invalid(format!("unknown index tier {other:?}"))),
        }
    }
}

/// Structure and search budget of an index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexConfig {
    Exact,
    KMeansTree {
        branching: usize,
        iterations: usize,
        checks: usize,
    },
    KdForest {
        trees: usize,
        checks: usize,
    },
}

impl IndexConfig {
    pub const SLOW_BRANCHING: usize = 16;
    pub const SLOW_ITERATIONS: usize = 11;
    pub const SLOW_CHECKS: usize = 2048;
    pub const MEDIUM_TREES: usize = 4;
    pub const MEDIUM_CHECKS: usize = 39;

    pub fn for_tier(tier: Tier) -> Self {
        match tier {
            Tier::Exact => IndexConfig::Exact,
            Tier::Slow => IndexConfig::KMeansTree {
                branching: Self::SLOW_BRANCHING,
                iterations: Self::SLOW_ITERATIONS,
                checks: Self::SLOW_CHECKS,
            },
            Tier::Medium => IndexConfig::KdForest {
                trees: Self::MEDIUM_TREES,
                checks: Self::MEDIUM_CHECKS,
            },
            Tier::Fast => IndexConfig::KdForest { trees: 1, checks: 1 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            IndexConfig::Exact => Ok(()),
            IndexConfig::KMeansTree {
                branching, checks, ..
            } => {
                if branching < 2 {
                    return Err(Error::invalid("k-means branching must be at least 2"));
                }
                if checks < 1 {
                    return Err(Error::invalid("checks must be at least 1"));
                }
                Ok(())
            }
            IndexConfig::KdForest { trees, checks } => {
                if trees < 1 || checks < 1 {
                    return Err(Error::invalid("k-d forest needs at least one tree and one check"));
                }
                Ok(())
            }
        }
    }
}

impl From<Tier> for IndexConfig {
    fn from(t: Tier) -> Self {
        IndexConfig::for_tier(t)
    }
}

#[derive(Clone, Debug)]
enum Structure {
    Exact,
    KMeans(KMeansTree),
    Kd(KdForest),
}

/// Immutable k-NN index over an [`ActionSet`]. Safe to query from many
/// threads at once.
#[derive(Clone, Debug)]
pub struct ActionIndex {
    actions: Arc<ActionSet>,
    config: IndexConfig,
    structure: Structure,
}

impl ActionIndex {
    pub fn build(actions: Arc<ActionSet>, config: IndexConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if actions.is_empty() {
            return Err(Error::EmptyActionSet);
        }
        let mut r = rng::stream(seed, rng::streams::INDEX);
        let structure = match config {
            IndexConfig::Exact => Structure::Exact,
            IndexConfig::KMeansTree {
                branching,
                iterations,
                checks,
            } => Structure::KMeans(KMeansTree::build(&actions, branching, iterations, checks, &mut r)),
            IndexConfig::KdForest { trees, checks } => {
                Structure::Kd(KdForest::build(&actions, trees, checks, &mut r))
            }
        };
        Ok(ActionIndex {
            actions,
            config,
            structure,
        })
    }

    pub fn exact(actions: Arc<ActionSet>) -> Result<Self> {
        Self::build(actions, IndexConfig::Exact, 0)
    }

    pub fn actions(&self) -> &Arc<ActionSet> {
        &self.actions
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Up to `k` actions closest to `proto` in L2 (exactly `min(k, |A|)`).
    pub fn query(&self, proto: &[f64], k: usize) -> Result<NeighborResult> {
        Error::check_dim("query vector", self.actions.dim(), proto.len())?;
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if proto.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query vector".into()));
        }
        let k = k.min(self.actions.len());
        Ok(match &self.structure {
            Structure::Exact => brute_force(&self.actions, proto, k),
            Structure::KMeans(t) => t.query(&self.actions, proto, k),
            Structure::Kd(f) => f.query(&self.actions, proto, k),
        })
    }
}

/// Fraction of the true `k` nearest neighbors the index returns, averaged
/// over `num_queries` points drawn uniformly from the embedding bounding box.
pub fn measure_recall(index: &ActionIndex, num_queries: usize, k: usize, seed: u64) -> Result<f64> {
    if num_queries == 0 {
        return Err(Error::invalid("num_queries must be at least 1"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let actions = index.actions();
    let (lo, hi) = actions.bounding_box();
    let mut r = rng::stream(seed, rng::streams::QUERIES);
    let k_eff = k.min(actions.len());
    let mut hits = 0usize;
    let mut q = vec![0.0; actions.dim()];
    for _ in 0..num_queries {
        for ((v, l), h) in q.iter_mut().zip(&lo).zip(&hi) {
            *v = if h > l { r.random_range(*l..*h) } else { *l };
        }
        let truth: HashSet<ActionId> = brute_force(actions, &q, k_eff).iter().map(|n| n.id).collect();
        hits += index
            .query(&q, k_eff)?
            .iter()
            .filter(|n| truth.contains(&n.id))
            .count();
    }
    Ok(hits as f64 / (num_queries * k_eff) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_set() -> Arc<ActionSet> {
        Arc::new(ActionSet::from_flat(1, vec![0.0, 1.0, 2.0, 3.0]).unwrap())
    }

    #[test]
    fn single_action_answers_every_query() {
        let set = Arc::new(ActionSet::from_flat(2, vec![0.3, -0.7]).unwrap());
        for tier in Tier::ALL {
            let idx = ActionIndex::build(set.clone(), tier.into(), 7).unwrap();
            let r = idx.query(&[10.0, 4.0], 3).unwrap();
            assert_eq!(r.len(), 1);
            assert_eq!(r[0].id, ActionId(0));
        }
    }

    #[test]
    fn one_dimensional_two_nearest() {
        let idx = ActionIndex::exact(line_set()).unwrap();
        let r = idx.query(&[1.2], 2).unwrap();
        assert_eq!(r.iter().map(|n| n.id.0).collect::<Vec<_>>(), vec![1, 2]);
        assert!((r[0].dist2 - 0.04).abs() < 1e-12 && (r[1].dist2 - 0.64).abs() < 1e-12);
    }

    #[test]
    fn exact_hit_has_zero_distance() {
        let idx = ActionIndex::exact(line_set()).unwrap();
        let r = idx.query(&[2.0], 1).unwrap();
        assert_eq!(r[0], Neighbor { id: ActionId(2), dist2: 0.0 });
    }

    #[test]
    fn query_errors() {
        let idx = ActionIndex::exact(line_set()).unwrap();
        assert!(matches!(idx.query(&[1.0, 2.0], 1), Err(Error::DimensionMismatch { .. })));
        assert!(idx.query(&[1.0], 0).is_err());
    }

    #[test]
    fn exact_recall_is_one() {
        let mut r = rng::stream(3, 0);
        let set = Arc::new(
            ActionSet::from_flat(4, (0..4 * 200).map(|_| r.random_range(0.0..1.0)).collect()).unwrap(),
        );
        let idx = ActionIndex::exact(set).unwrap();
        assert_eq!(measure_recall(&idx, 25, 5, 1).unwrap(), 1.0);
    }

    #[test]
    fn tier_names_roundtrip() {
        for t in Tier::ALL {
            assert_eq!(t.as_str().parse::<Tier>().unwrap(), t);
        }
        assert!("turbo".parse::<Tier>().is_err());
    }
}
