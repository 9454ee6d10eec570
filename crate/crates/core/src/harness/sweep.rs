use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{run_experiment, ExperimentConfig, RunMetrics};
use crate::index::Tier;
use crate::policy::KSpec;
use crate::{par, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub k: Vec<KSpec>,
    pub tiers: Vec<Tier>,
    /// Seeds per cell; defaults to the base seed alone.
    #[serde(default)]
    pub seeds: Vec<u64>,
}

impl SweepConfig {
    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let mut value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        for o in overrides {
            super::apply_override(&mut value, o)?;
        }
        let mut cfg: SweepConfig = serde_json::from_value(value)?;
        cfg.base.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.is_empty() || self.tiers.is_empty() {
            return Err(Error::invalid("sweep needs at least one k and one tier"));
        }
        self.base.validate()
    }

    fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.base.seed]
        } else {
            self.seeds.clone()
        }
    }

    /// Cells in output order: k, then tier, then seed.
    pub fn cells(&self) -> Vec<SweepCell> {
        let mut out = Vec::new();
        for &k in &self.k {
            for &tier in &self.tiers {
                for seed in self.seeds() {
                    out.push(SweepCell { k, tier, seed });
                }
            }
        }
        out
    }

    pub fn cell_config(&self, cell: &SweepCell) -> ExperimentConfig {
        let mut c = self.base.clone();
        c.policy.k = cell.k;
        c.policy.tier = cell.tier;
        c.seed = cell.seed;
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepCell {
    pub k: KSpec,
    pub tier: Tier,
    pub seed: u64,
}

#[derive(Debug)]
pub struct CellResult {
    pub cell: SweepCell,
    pub outcome: Result<RunMetrics>,
}

/// One row per evaluation of each cell; failed cells get a single row whose
/// status carries the error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: String,
    pub k_resolved: Option<usize>,
    pub tier: Tier,
    pub seed: u64,
    pub env_steps: Option<u64>,
    pub mean_return: Option<f64>,
    pub expected_return: Option<f64>,
    pub fraction_of_optimal: Option<f64>,
    pub status: String,
    /// Set when the environment is a synthetic stand-in for data the
    /// original experiments used.
    pub synthetic_structure: bool,
}

/// Runs every (k, tier, seed) cell as an independent job. Cell failures are
/// recorded and do not stop the sweep.
pub fn run_sweep(config: &SweepConfig, out: Option<&Path>) -> Result<Vec<CellResult>> {
    config.validate()?;
    let cells = config.cells();
    let results = par::map(cells, |cell| {
        let c = config.cell_config(&cell);
        let dir = out.map(|o| o.join(cell_dir(&cell)));
        CellResult {
            cell,
            outcome: run_experiment(&c, dir.as_deref()),
        }
    });
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        super::run::write_csv(dir.join(SWEEP_FILE), &sweep_rows(config, &results))?;
    }
    Ok(results)
}

pub const SWEEP_FILE: &str = "sweep.csv";

fn cell_dir(cell: &SweepCell) -> String {
    let k = cell.k.to_string().replace('%', "pct");
    format!("k{k}_{}_seed{}", cell.tier, cell.seed)
}

pub fn sweep_rows(config: &SweepConfig, results: &[CellResult]) -> Vec<SweepRow> {
    let synthetic = config.base.env.synthetic_structure();
    let mut rows = Vec::new();
    for r in results {
        let base = SweepRow {
            k: r.cell.k.to_string(),
            k_resolved: None,
            tier: r.cell.tier,
            seed: r.cell.seed,
            env_steps: None,
            mean_return: None,
            expected_return: None,
            fraction_of_optimal: None,
            status: String::new(),
            synthetic_structure: synthetic,
        };
        match &r.outcome {
            Ok(m) => rows.extend(m.evaluations.iter().map(|e| SweepRow {
                k_resolved: Some(m.k),
                env_steps: Some(e.env_steps),
                mean_return: Some(e.mean_return),
                expected_return: e.expected_return,
                fraction_of_optimal: e.fraction_of_optimal,
                status: "ok".into(),
                ..base.clone()
            })),
            Err(e) => rows.push(SweepRow {
                status: format!("error: {e}"),
                ..base
            }),
        }
    }
    rows
}

pub fn read_sweep<R: std::io::Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut rd = csv::Reader::from_reader(input);
    Ok(rd.deserialize().collect::<std::result::Result<_, _>>()?)
}
