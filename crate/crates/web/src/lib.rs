//! Browser bindings. Each export takes plain numbers and returns a JSON
//! string, which the page parses and draws.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;
use wolpertinger::env::PuddleMap;
use wolpertinger::index::{ActionIndex, ActionSet, IndexConfig, Tier};
use wolpertinger::lemma::{diminishing_returns_curve, LemmaScenario};
use wolpertinger::rng;

fn to_js<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[derive(Serialize)]
pub struct CurveRow {
    pub k: usize,
    pub expected_max: f64,
    pub marginal_gain: f64,
    pub mc_mean: Option<f64>,
    pub mc_se: Option<f64>,
    /// Upper limit `q + b`.
    pub ceiling: f64,
}

pub fn lemma_curve_rows(p: f64, b: f64, c: f64, q: f64, k_max: usize, mc_samples: usize) -> wolpertinger::Result<Vec<CurveRow>> {
    let base = LemmaScenario::new(p, b, c, 1, q)?;
    let ks: Vec<usize> = (1..=k_max.max(1)).collect();
    let mc = (mc_samples > 0).then_some(mc_samples);
    Ok(diminishing_returns_curve(&base, &ks, mc, 7)?
        .into_iter()
        .map(|pt| CurveRow {
            k: pt.k,
            expected_max: pt.expected_max,
            marginal_gain: pt.marginal_gain,
            mc_mean: pt.mc_mean,
            mc_se: pt.mc_se,
            ceiling: q + b,
        })
        .collect())
}

/// Expected best value for `k = 1..=k_max`, with optional simulation.
#[wasm_bindgen]
pub fn lemma_curve(p: f64, b: f64, c: f64, q: f64, k_max: usize, mc_samples: usize) -> Result<String, JsError> {
    lemma_curve_rows(p, b, c, q, k_max, mc_samples).map(|r| to_js(&r)).map_err(js_err)
}

#[derive(Serialize)]
pub struct TierResult {
    pub tier: Tier,
    pub ids: Vec<u32>,
    /// Share of the exact neighbors this tier found.
    pub recall: f64,
}

#[derive(Serialize)]
pub struct Explorer {
    pub points: Vec<[f64; 2]>,
    pub query: [f64; 2],
    pub tiers: Vec<TierResult>,
}

pub fn explore(points: usize, seed: u64, qx: f64, qy: f64, k: usize) -> wolpertinger::Result<Explorer> {
    let mut r = rng::stream(seed, rng::streams::ENV);
    let flat: Vec<f64> = (0..points.max(1) * 2).map(|_| r.random_range(0.0..1.0)).collect();
    let set = Arc::new(ActionSet::from_flat(2, flat)?);
    let query = [qx, qy];
    let mut truth = Vec::new();
    let mut tiers = Vec::new();
    for tier in Tier::ALL {
        let index = ActionIndex::build(set.clone(), IndexConfig::for_tier(tier), seed)?;
        let ids: Vec<u32> = index.query(&query, k)?.iter().map(|n| n.id.0).collect();
        if tier == Tier::Exact {
            truth = ids.clone();
        }
        let hits = ids.iter().filter(|i| truth.contains(i)).count();
        tiers.push(TierResult {
            tier,
            recall: hits as f64 / truth.len().max(1) as f64,
            ids,
        });
    }
    Ok(Explorer {
        points: set.rows().map(|p| [p[0], p[1]]).collect(),
        query,
        tiers,
    })
}

/// Random points in the unit square and each tier's `k` neighbors of the query.
#[wasm_bindgen]
pub fn ann_explorer(points: usize, seed: u64, qx: f64, qy: f64, k: usize) -> Result<String, JsError> {
    explore(points, seed, qx, qy, k).map(|e| to_js(&e)).map_err(js_err)
}

#[derive(Serialize)]
pub struct PuddleView {
    pub rows: usize,
    pub cols: usize,
    pub ascii: String,
    /// Best return from each cell, row-major; `null` where the goal is unreachable.
    pub values: Vec<Option<f64>>,
    pub optimal_return: f64,
    /// Cells on one optimal path from the start.
    pub path: Vec<[usize; 2]>,
}

pub fn puddle_view(size: usize, seed: u64) -> wolpertinger::Result<PuddleView> {
    let map = if seed == 0 { PuddleMap::benchmark(size)? } else { PuddleMap::generate(size, seed)? };
    let values = map.value_table();
    let (rows, cols) = (map.rows(), map.cols());
    let mut path = vec![map.start()];
    let (mut r, mut c) = map.start();
    while map.cell(r, c) != wolpertinger::env::Cell::Goal {
        let step = |nr: usize, nc: usize| {
            if nr < rows && nc < cols {
                let (rew, _) = wolpertinger::env::puddle::puddle_reward(map.cell(nr, nc));
                rew + values[nr * cols + nc]
            } else {
                f64::NEG_INFINITY
            }
        };
        if step(r + 1, c) >= step(r, c + 1) {
            r += 1;
        } else {
            c += 1;
        }
        path.push((r, c));
    }
    Ok(PuddleView {
        rows,
        cols,
        ascii: map.to_ascii(),
        values: values.iter().map(|v| v.is_finite().then_some(*v)).collect(),
        optimal_return: map.optimal_return(),
        path: path.into_iter().map(|(r, c)| [r, c]).collect(),
    })
}

/// A puddle map (the shipped one for seed 0) with its value table and an optimal path.
#[wasm_bindgen]
pub fn puddle_dp(size: usize, seed: u64) -> Result<String, JsError> {
    puddle_view(size, seed).map(|v| to_js(&v)).map_err(js_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_rises_to_ceiling() {
        let rows = lemma_curve_rows(0.2, 1.0, 2.0, 0.0, 200, 0).unwrap();
        assert_eq!(rows.len(), 200);
        assert!(rows.windows(2).all(|w| w[1].expected_max >= w[0].expected_max));
        assert!(rows.last().unwrap().expected_max > 0.98);
        assert!(lemma_curve_rows(1.0, 1.0, 2.0, 0.0, 5, 0).is_err());
    }

    #[test]
    fn exact_tier_has_full_recall() {
        let e = explore(300, 3, 0.5, 0.5, 8).unwrap();
        assert_eq!(e.points.len(), 300);
        assert_eq!(e.tiers.len(), 4);
        assert_eq!(e.tiers[0].recall, 1.0);
        assert!(e.tiers.iter().all(|t| t.ids.len() == 8));
    }

    #[test]
    fn path_collects_optimal_return() {
        let v = puddle_view(20, 0).unwrap();
        assert_eq!(v.path.first(), Some(&[0, 0]));
        assert_eq!(v.path.last(), Some(&[19, 19]));
        assert_eq!(v.path.len(), 39);
        let total: f64 = v.path[1..]
            .iter()
            .map(|&[r, c]| {
                let ch = v.ascii.lines().nth(r).unwrap().as_bytes()[c];
                match ch {
                    b'G' => 250.0,
                    b'P' => -3.0,
                    _ => -1.0,
                }
            })
            .sum();
        assert_eq!(total, v.optimal_return);
    }
}
