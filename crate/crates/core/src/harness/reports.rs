use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::run::write_csv;
use crate::index::{measure_recall, ActionIndex, ActionSet, IndexConfig, Tier};
use crate::lemma::{diminishing_returns_curve, expected_max, CurvePoint, LemmaScenario};
use crate::{rng, Error, Result};

/// Scenario grid for the expected-max report: every `p` against every
/// `(b, c)` band, each swept over `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaGrid {
    pub p: Vec<f64>,
    pub k: Vec<usize>,
    /// `(b, c)` pairs.
    pub bands: Vec<(f64, f64)>,
    pub q: f64,
    /// Monte Carlo draws per cell; `None` skips the simulation.
    pub mc_samples: Option<usize>,
    /// Allowed distance between closed form and simulation, in standard errors.
    pub tolerance_se: f64,
    pub seed: u64,
}

impl Default for LemmaGrid {
    fn default() -> Self {
        LemmaGrid {
            p: vec![0.0, 0.1, 0.3, 0.5, 0.9],
            k: vec![1, 2, 5, 10, 50],
            bands: vec![(0.5, 0.5), (0.5, 1.0), (1.0, 2.0)],
            q: 0.0,
            mc_samples: Some(1_000_000),
            tolerance_se: 4.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaVerdict {
    pub check: String,
    pub p: f64,
    pub b: f64,
    pub c: f64,
    pub k: usize,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct LemmaReport {
    pub points: Vec<CurvePoint>,
    pub verdicts: Vec<LemmaVerdict>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &LemmaVerdict> {
        self.verdicts.iter().filter(|v| !v.pass)
    }
}

pub const LEMMA_CURVE_FILE: &str = "lemma_curve.csv";
pub const LEMMA_VERDICT_FILE: &str = "lemma_verdicts.csv";

/// Curves for every grid cell plus verdicts: simulation agreement, growth in
/// `k`, and decline in `p`.
pub fn run_lemma_report(grid: &LemmaGrid, out: Option<&Path>) -> Result<LemmaReport> {
    if grid.k.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("k values must be strictly ascending"));
    }
    let mut points = Vec::new();
    let mut verdicts = Vec::new();
    let mut curve_id = 0u64;
    for &(b, c) in &grid.bands {
        for &p in &grid.p {
            if grid.k.is_empty() {
                continue;
            }
            let base = LemmaScenario::new(p, b, c, grid.k[0], grid.q)?;
            let curve = diminishing_returns_curve(&base, &grid.k, grid.mc_samples, rng::derive_seed(grid.seed, curve_id))?;
            curve_id += 1;
            for pt in &curve {
                let verdict = |check: &str, pass: bool, detail: String| LemmaVerdict {
                    check: check.into(),
                    p,
                    b,
                    c,
                    k: pt.k,
                    pass,
                    detail,
                };
                if let (Some(mean), Some(se)) = (pt.mc_mean, pt.mc_se) {
                    let gap = (pt.expected_max - mean).abs();
                    let pass = gap <= grid.tolerance_se * se || gap <= 1e-12;
                    verdicts.push(verdict("monte_carlo", pass, format!("gap {gap:.3e}, se {se:.3e}")));
                }
                let grows = pt.marginal_gain >= -1e-12;
                verdicts.push(verdict("non_decreasing_in_k", grows, format!("gain {:.3e}", pt.marginal_gain)));
            }
            points.extend(curve);
        }
        // decline in p at fixed k
        for &k in &grid.k {
            let mut prev: Option<(f64, f64)> = None;
            let mut ps = grid.p.clone();
            ps.sort_by(f64::total_cmp);
            for p in ps {
                let e = expected_max(&LemmaScenario::new(p, b, c, k, grid.q)?)?;
                if let Some((pp, pe)) = prev {
                    verdicts.push(LemmaVerdict {
                        check: "non_increasing_in_p".into(),
                        p,
                        b,
                        c,
                        k,
                        pass: e <= pe + 1e-12,
                        detail: format!("E({pp})={pe:.6} E({p})={e:.6}"),
                    });
                }
                prev = Some((p, e));
            }
        }
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(LEMMA_CURVE_FILE))?);
        crate::lemma::write_curve_csv(&points, &mut f)?;
        std::io::Write::flush(&mut f)?;
        write_csv(dir.join(LEMMA_VERDICT_FILE), &verdicts)?;
    }
    Ok(LemmaReport { points, verdicts })
}

pub fn read_curve<R: std::io::Read>(input: R) -> Result<Vec<CurvePoint>> {
    let mut rd = csv::Reader::from_reader(input);
    Ok(rd.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Recall benchmark over random embeddings, uniform on `[-1, 1]^dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecallConfig {
    pub points: usize,
    pub dim: usize,
    pub k: usize,
    pub queries: usize,
    pub seeds: Vec<u64>,
    pub tiers: Vec<Tier>,
}

impl Default for RecallConfig {
    fn default() -> Self {
        RecallConfig {
            points: 13_138,
            dim: 20,
            k: 10,
            queries: 200,
            seeds: (0..5).collect(),
            tiers: vec![Tier::Slow, Tier::Medium, Tier::Fast],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecallRow {
    pub tier: Tier,
    pub seed: u64,
    pub recall: f64,
}

#[derive(Clone, Debug)]
pub struct RecallReport {
    pub rows: Vec<RecallRow>,
}

impl RecallReport {
    pub fn median(&self, tier: Tier) -> Option<f64> {
        let mut v: Vec<f64> = self.rows.iter().filter(|r| r.tier == tier).map(|r| r.recall).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
    }

    /// Problems with the expected tier ordering: Slow ≥ Medium ≥ Fast,
    /// Slow ≥ 0.9 and Fast at least 0.05 below Slow. Empty when all hold or
    /// the tiers were not measured.
    pub fn ordering_violations(&self) -> Vec<String> {
        let (Some(slow), Some(medium), Some(fast)) = (self.median(Tier::Slow), self.median(Tier::Medium), self.median(Tier::Fast))
        else {
            return Vec::new();
        };
        let mut out = Vec::new();
        if slow < medium || medium < fast {
            out.push(format!("ordering broken: slow {slow:.3}, medium {medium:.3}, fast {fast:.3}"));
        }
        if slow < 0.9 {
            out.push(format!("slow recall {slow:.3} below 0.9"));
        }
        if fast > slow - 0.05 {
            out.push(format!("fast recall {fast:.3} within 0.05 of slow {slow:.3}"));
        }
        out
    }
}

pub const RECALL_FILE: &str = "recall.csv";

pub fn random_embeddings(points: usize, dim: usize, seed: u64) -> Result<ActionSet> {
    let mut r = rng::stream(seed, rng::streams::ENV);
    ActionSet::from_flat(dim, (0..points * dim).map(|_| r.random_range(-1.0..1.0)).collect())
}

pub fn run_recall_benchmark(config: &RecallConfig, out: Option<&Path>) -> Result<RecallReport> {
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let set = Arc::new(random_embeddings(config.points, config.dim, seed)?);
        for &tier in &config.tiers {
            let index = ActionIndex::build(set.clone(), IndexConfig::for_tier(tier), rng::derive_seed(seed, rng::streams::INDEX))?;
            rows.push(RecallRow {
                tier,
                seed,
                recall: measure_recall(&index, config.queries, config.k, seed)?,
            });
        }
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_csv(dir.join(RECALL_FILE), &rows)?;
    }
    Ok(RecallReport { rows })
}
