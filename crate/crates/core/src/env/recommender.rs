//! Simulated item recommender.
//!
//! The state is the embedding of the item the user is looking at. Recommending
//! item `j` from item `i` is accepted with probability `W[i][j]`; an accepted
//! recommendation moves the user to `j`, pays `r_j` and ends the episode with
//! probability `accept_end`. A rejection moves the user to a uniformly random
//! item, pays nothing and ends the episode with probability `reject_end`.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{EnvStep, Environment};
use crate::index::{ActionId, ActionSet};
use crate::rng;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"WREC";
const VERSION: u32 = 1;

pub const DEFAULT_ACCEPT_END: f64 = 0.1;
pub const DEFAULT_REJECT_END: f64 = 0.2;
pub const GUIDED_SUPPORT: usize = 10;
pub const DEFAULT_MAX_STEPS: usize = 100;

/// Share of each row's probability mass kept after truncation.
const ACCEPT_MASS: f64 = 0.9;
const AFFINITY_SCALE: f64 = 5.0;
const CLUSTER_NOISE: f64 = 0.6;

/// Static data shared by every copy of a simulator.
#[derive(Clone, Debug, PartialEq)]
struct Catalog {
    embeddings: Arc<ActionSet>,
    /// Sparse rows `(j, W[i][j])`, sorted by `j`.
    rows: Vec<Vec<(u32, f64)>>,
    rewards: Vec<f64>,
    guided: Vec<Vec<ActionId>>,
}

#[derive(Clone, Debug)]
pub struct RecommenderSim {
    catalog: Arc<Catalog>,
    accept_end: f64,
    reject_end: f64,
    max_steps: usize,
    rng: rng::Rng,
    current: usize,
    steps: usize,
    done: bool,
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

impl RecommenderSim {
    /// Builds a simulator from explicit parts. `triplets` are `(i, j, W[i][j])`.
    pub fn from_parts(embeddings: ActionSet, triplets: &[(u32, u32, f64)], rewards: Vec<f64>, seed: u64) -> Result<Self> {
        let n = embeddings.len();
        if n == 0 {
            return Err(Error::EmptyActionSet);
        }
        Error::check_dim("reward count", n, rewards.len())?;
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("item reward".into()));
        }
        let mut rows = vec![Vec::new(); n];
        for &(i, j, w) in triplets {
            if i as usize >= n || j as usize >= n {
                return Err(Error::Format(format!("transition ({i}, {j}) out of range")));
            }
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Format(format!("acceptance probability {w} outside [0, 1]")));
            }
            rows[i as usize].push((j, w));
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|e| e.0);
            if row.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(Error::Format(format!("duplicate transition in row {i}")));
            }
            if row.iter().map(|e| e.1).sum::<f64>() > 1.0 + 1e-9 {
                return Err(Error::Format(format!("row {i} sums above 1")));
            }
        }
        let guided = rows
            .iter()
            .map(|row| {
                let mut by_w: Vec<(u32, f64)> = row.iter().copied().filter(|e| e.1 > 0.0).collect();
                by_w.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                by_w.truncate(GUIDED_SUPPORT);
                by_w.into_iter().map(|e| ActionId(e.0)).collect()
            })
            .collect();
        let catalog = Catalog {
            embeddings: Arc::new(embeddings),
            rows,
            rewards,
            guided,
        };
        let mut sim = RecommenderSim {
            catalog: Arc::new(catalog),
            accept_end: DEFAULT_ACCEPT_END,
            reject_end: DEFAULT_REJECT_END,
            max_steps: DEFAULT_MAX_STEPS,
            rng: rng::stream(seed, rng::streams::ENV),
            current: 0,
            steps: 0,
            done: true,
        };
        sim.reset();
        Ok(sim)
    }

    /// Synthetic catalog: items scattered around random unit cluster centers;
    /// each row of `W` is a softmax over scaled embedding dot products, cut
    /// to the `ceil(sparsity·n)` most likely items and rescaled to total mass 0.9.
    pub fn synthesize(num_items: usize, embed_dim: usize, sparsity: f64, seed: u64) -> Result<Self> {
        if num_items < 2 {
            return Err(Error::invalid("recommender needs at least 2 items"));
        }
        if embed_dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if !(sparsity > 0.0 && sparsity <= 1.0) {
            return Err(Error::invalid(format!("sparsity must lie in (0, 1], got {sparsity}")));
        }
        let mut r = rng::stream(seed, 0x5EC);
        let clusters = ((num_items as f64).sqrt() / 2.0).round().max(2.0) as usize;
        let gauss = |r: &mut rng::Rng| -> f64 { StandardNormal.sample(r) };
        let centers: Vec<Vec<f64>> = (0..clusters)
            .map(|_| {
                let mut c: Vec<f64> = (0..embed_dim).map(|_| gauss(&mut r)).collect();
                normalize(&mut c);
                c
            })
            .collect();
        let noise = CLUSTER_NOISE / (embed_dim as f64).sqrt();
        let mut flat = Vec::with_capacity(num_items * embed_dim);
        for _ in 0..num_items {
            let c = &centers[r.random_range(0..clusters)];
            let mut e: Vec<f64> = c.iter().map(|x| x + noise * gauss(&mut r)).collect();
            normalize(&mut e);
            flat.extend(e);
        }
        let rewards: Vec<f64> = (0..num_items).map(|_| r.random::<f64>()).collect();
        let embeddings = ActionSet::from_flat(embed_dim, flat)?;

        let keep = ((sparsity * num_items as f64).ceil() as usize).clamp(1, num_items - 1);
        let mut triplets = Vec::with_capacity(num_items * keep);
        let mut logits = vec![0.0; num_items];
        for i in 0..num_items {
            let ei = embeddings.row(i);
            for (j, l) in logits.iter_mut().enumerate() {
                *l = if j == i {
                    f64::NEG_INFINITY
                } else {
                    AFFINITY_SCALE * ei.iter().zip(embeddings.row(j)).map(|(a, b)| a * b).sum::<f64>()
                };
            }
            let mut order: Vec<usize> = (0..num_items).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
            order.truncate(keep);
            let top = logits[order[0]];
            let weights: Vec<f64> = order.iter().map(|&j| (logits[j] - top).exp()).collect();
            let total: f64 = weights.iter().sum();
            for (&j, w) in order.iter().zip(&weights) {
                triplets.push((i as u32, j as u32, ACCEPT_MASS * w / total));
            }
        }
        Self::from_parts(embeddings, &triplets, rewards, seed)
    }

    pub fn with_end_probabilities(mut self, accept_end: f64, reject_end: f64) -> Result<Self> {
        for p in [accept_end, reject_end] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("end probability {p} outside [0, 1]")));
            }
        }
        self.accept_end = accept_end;
        self.reject_end = reject_end;
        Ok(self)
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps.max(1);
        self
    }

    pub fn num_items(&self) -> usize {
        self.catalog.rewards.len()
    }

    pub fn current_item(&self) -> ActionId {
        ActionId::from(self.current)
    }

    /// Places the user on a given item and starts a fresh episode.
    pub fn reset_to(&mut self, item: ActionId) -> Result<Vec<f64>> {
        if item.index() >= self.num_items() {
            return Err(Error::invalid(format!("item {item} out of range")));
        }
        self.current = item.index();
        self.steps = 0;
        self.done = false;
        Ok(self.observe())
    }

    pub fn acceptance(&self, from: ActionId, to: ActionId) -> f64 {
        let row = &self.catalog.rows[from.index()];
        row.binary_search_by_key(&to.0, |e| e.0).map_or(0.0, |i| row[i].1)
    }

    /// Expected return of recommending `to` from `from`, given state values
    /// `values` and their mean (the value after a rejection).
    fn backup(&self, from: usize, to: usize, values: &[f64], mean: f64) -> f64 {
        let w = self.acceptance(ActionId(from as u32), ActionId(to as u32));
        let rejected = (1.0 - self.reject_end) * mean;
        w * (self.catalog.rewards[to] + (1.0 - self.accept_end) * values[to]) + (1.0 - w) * rejected
    }

    /// Optimal expected return from each item by value iteration, ignoring
    /// the step cap.
    pub fn optimal_values(&self, tolerance: f64) -> Vec<f64> {
        let n = self.num_items();
        let mut v = vec![0.0; n];
        loop {
            let mean = v.iter().sum::<f64>() / n as f64;
            let next: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| self.backup(i, j, &v, mean)).fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if delta < tolerance {
                return v;
            }
        }
    }

    /// Expected episode return, from a uniformly random start item, of the
    /// deterministic policy recommending `choice[i]` at item `i`. Ignores
    /// the step cap.
    pub fn policy_return(&self, choice: &[ActionId]) -> Result<f64> {
        let n = self.num_items();
        Error::check_dim("policy table", n, choice.len())?;
        if let Some(bad) = choice.iter().find(|a| a.index() >= n) {
            return Err(Error::invalid(format!("item {bad} out of range")));
        }
        let mut v = vec![0.0; n];
        loop {
            let mean = v.iter().sum::<f64>() / n as f64;
            let next: Vec<f64> = (0..n).map(|i| self.backup(i, choice[i].index(), &v, mean)).collect();
            let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if delta < 1e-10 {
                return Ok(v.iter().sum::<f64>() / n as f64);
            }
        }
    }

    /// Observation the simulator emits at `item`.
    pub fn observation_of(&self, item: ActionId) -> Vec<f64> {
        self.catalog.embeddings.get(item).to_vec()
    }

    /// Optimal expected episode return from a uniformly random start item.
    pub fn optimal_return(&self) -> f64 {
        let v = self.optimal_values(1e-10);
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn reward_of(&self, item: ActionId) -> f64 {
        self.catalog.rewards[item.index()]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.catalog.rewards
    }

    /// Sum of each row of `W`.
    pub fn row_sums(&self) -> Vec<f64> {
        self.catalog.rows.iter().map(|r| r.iter().map(|e| e.1).sum()).collect()
    }

    pub fn nonzero_transitions(&self) -> usize {
        self.catalog.rows.iter().map(Vec::len).sum()
    }

    fn observe(&self) -> Vec<f64> {
        self.catalog.embeddings.row(self.current).to_vec()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let emb = &self.catalog.embeddings;
        out.write_all(MAGIC)?;
        for v in [VERSION, emb.len() as u32, emb.dim() as u32] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&self.accept_end.to_le_bytes())?;
        out.write_all(&self.reject_end.to_le_bytes())?;
        out.write_all(&(self.nonzero_transitions() as u64).to_le_bytes())?;
        for v in emb.as_flat() {
            out.write_all(&v.to_le_bytes())?;
        }
        for (i, row) in self.catalog.rows.iter().enumerate() {
            for &(j, w) in row {
                out.write_all(&(i as u32).to_le_bytes())?;
                out.write_all(&j.to_le_bytes())?;
                out.write_all(&w.to_le_bytes())?;
            }
        }
        for r in &self.catalog.rewards {
            out.write_all(&r.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R, seed: u64) -> Result<Self> {
        fn u32_le<R: Read>(r: &mut R) -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        }
        fn f64_le<R: Read>(r: &mut R) -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        }
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a recommender file".into()));
        }
        let version = u32_le(&mut input)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported recommender version {version}")));
        }
        let n = u32_le(&mut input)? as usize;
        let dim = u32_le(&mut input)? as usize;
        let accept_end = f64_le(&mut input)?;
        let reject_end = f64_le(&mut input)?;
        let mut b = [0u8; 8];
        input.read_exact(&mut b)?;
        let nnz = u64::from_le_bytes(b) as usize;
        let mut flat = Vec::with_capacity(n * dim);
        for _ in 0..n * dim {
            flat.push(f64_le(&mut input)?);
        }
        let mut triplets = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let i = u32_le(&mut input)?;
            let j = u32_le(&mut input)?;
            triplets.push((i, j, f64_le(&mut input)?));
        }
        let mut rewards = Vec::with_capacity(n);
        for _ in 0..n {
            rewards.push(f64_le(&mut input)?);
        }
        Self::from_parts(ActionSet::from_flat(dim, flat)?, &triplets, rewards, seed)?
            .with_end_probabilities(accept_end, reject_end)
    }

    pub fn load(path: impl AsRef<Path>, seed: u64) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file), seed)
    }

    /// Same catalog, transition matrix and end probabilities.
    pub fn same_model(&self, other: &Self) -> bool {
        self.catalog == other.catalog && self.accept_end == other.accept_end && self.reject_end == other.reject_end
    }
}

impl Environment for RecommenderSim {
    fn observation_dim(&self) -> usize {
        self.catalog.embeddings.dim()
    }

    fn action_set(&self) -> &Arc<ActionSet> {
        &self.catalog.embeddings
    }

    fn reset(&mut self) -> Vec<f64> {
        self.current = self.rng.random_range(0..self.num_items());
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: ActionId) -> Result<EnvStep> {
        if self.done {
            return Err(Error::EpisodeOver);
        }
        if action.index() >= self.num_items() {
            return Err(Error::invalid(format!("item {action} out of range")));
        }
        let accept = self.acceptance(self.current_item(), action);
        let (reward, end_prob) = if self.rng.random::<f64>() < accept {
            self.current = action.index();
            (self.catalog.rewards[self.current], self.accept_end)
        } else {
            self.current = self.rng.random_range(0..self.num_items());
            (0.0, self.reject_end)
        };
        let terminal = self.rng.random::<f64>() < end_prob;
        self.steps += 1;
        let truncated = !terminal && self.steps >= self.max_steps;
        self.done = terminal || truncated;
        Ok(EnvStep {
            observation: self.observe(),
            reward,
            terminal,
            truncated,
        })
    }

    /// The ten items with the highest acceptance probability from the current item.
    fn exploration_support(&self) -> Option<&[ActionId]> {
        Some(&self.catalog.guided[self.current])
    }

    fn fork(&self, seed: u64) -> Self {
        let mut env = self.clone();
        env.rng = rng::stream(seed, rng::streams::ENV);
        env.reset();
        env
    }
}
