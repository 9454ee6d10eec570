use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use wolpertinger::harness::{self, ExperimentConfig, LemmaGrid, RecallConfig, SweepConfig};

#[derive(Parser)]
#[command(name = "wolp", version, about = "Wolpertinger policy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; replaces the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config key, e.g. `--set policy.k=5%` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one experiment.
    Train(Common),
    /// Train every (k, tier, seed) cell of a sweep.
    Sweep(Common),
    /// Expected-max report with Monte Carlo checks.
    Lemma(Common),
    /// Recall benchmark of the index tiers.
    Recall(Common),
    /// Greedy episodes from a saved checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 1000)]
        max_steps: usize,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Reads an optional JSON config (defaults when absent), applies overrides
/// and the seed flag.
fn load_value(common: &Common) -> Result<serde_json::Value> {
    let mut value = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => serde_json::json!({}),
    };
    for o in &common.overrides {
        harness::apply_override(&mut value, o)?;
    }
    Ok(value)
}

fn base_dir(common: &Common) -> PathBuf {
    common
        .config
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

fn out_dir(common: &Common, fallback: Option<&PathBuf>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| fallback.cloned())
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train(common) => {
            if common.config.is_none() {
                bail!("train needs --config");
            }
            let mut value = load_value(&common)?;
            if let Some(s) = common.seed {
                harness::apply_override(&mut value, &format!("seed={s}"))?;
            }
            let mut config = ExperimentConfig::from_value(value)?;
            config.base_dir = base_dir(&common);
            let out = out_dir(&common, config.out.as_ref());
            let m = harness::run_experiment(&config, Some(&out))?;
            let last = m.final_eval();
            println!(
                "env_steps {} episodes {} final mean return {:.3}{}",
                last.env_steps,
                last.episodes_trained,
                last.mean_return,
                last.fraction_of_optimal
                    .map(|f| format!(" ({:.1}% of optimal)", 100.0 * f))
                    .unwrap_or_default()
            );
            if let Some(sps) = m.median_steps_per_sec() {
                println!("median steps/sec {sps:.1}");
            }
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Sweep(common) => {
            if common.config.is_none() {
                bail!("sweep needs --config");
            }
            let mut value = load_value(&common)?;
            if let Some(s) = common.seed {
                harness::apply_override(&mut value, &format!("seeds=[{s}]"))?;
            }
            let mut config: SweepConfig = serde_json::from_value(value)?;
            config.validate()?;
            config.base.base_dir = base_dir(&common);
            let out = out_dir(&common, config.base.out.as_ref());
            let results = harness::run_sweep(&config, Some(&out))?;
            let mut ok = true;
            for r in &results {
                match &r.outcome {
                    Ok(m) => println!(
                        "k={} tier={} seed={} final {:.3} steps/sec {:.1}",
                        r.cell.k,
                        r.cell.tier,
                        r.cell.seed,
                        m.final_return(),
                        m.median_steps_per_sec().unwrap_or(0.0)
                    ),
                    Err(e) => {
                        ok = false;
                        println!("k={} tier={} seed={} FAILED: {e}", r.cell.k, r.cell.tier, r.cell.seed);
                    }
                }
            }
            println!("wrote {}", out.join(harness::SWEEP_FILE).display());
            Ok(ok)
        }
        Command::Lemma(common) => {
            let mut grid: LemmaGrid = serde_json::from_value(load_value(&common)?)?;
            if let Some(s) = common.seed {
                grid.seed = s;
            }
            let out = out_dir(&common, None);
            let report = harness::run_lemma_report(&grid, Some(&out))?;
            for v in report.failures() {
                println!("FAIL {} p={} b={} c={} k={}: {}", v.check, v.p, v.b, v.c, v.k, v.detail);
            }
            println!(
                "{} of {} checks passed; wrote {}",
                report.verdicts.len() - report.failures().count(),
                report.verdicts.len(),
                out.join(harness::LEMMA_CURVE_FILE).display()
            );
            Ok(report.passed())
        }
        Command::Recall(common) => {
            let mut config: RecallConfig = serde_json::from_value(load_value(&common)?)?;
            if let Some(s) = common.seed {
                config.seeds = vec![s];
            }
            let out = out_dir(&common, None);
            let report = harness::run_recall_benchmark(&config, Some(&out))?;
            for &tier in &config.tiers {
                if let Some(m) = report.median(tier) {
                    println!("{tier}: median recall@{} {m:.3}", config.k);
                }
            }
            let problems = report.ordering_violations();
            for p in &problems {
                println!("FAIL {p}");
            }
            Ok(problems.is_empty())
        }
        Command::Eval {
            common,
            checkpoint,
            episodes,
            max_steps,
        } => {
            let seed = common.seed.unwrap_or(0);
            let out = out_dir(&common, None);
            std::fs::create_dir_all(&out)?;
            let mut decisions = BufWriter::new(File::create(out.join("decisions.csv"))?);
            let returns = harness::evaluate_checkpoint(&checkpoint, episodes, max_steps, seed, Some(&mut decisions))?;
            decisions.flush()?;
            let mean = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
            println!("{} episodes, mean return {mean:.3}", returns.len());
            Ok(true)
        }
    }
}
