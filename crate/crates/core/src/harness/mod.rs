//! Experiment harness: JSON configs with dotted-key overrides, seeded
//! training runs with periodic greedy evaluation, (k, tier) sweeps, and the
//! expected-max and recall reports. Everything the CLI does goes through here.

mod config;
mod reports;
pub(crate) mod run;
mod sweep;

pub use config::{apply_override, EnvConfig, EvalConfig, ExperimentConfig};
pub use reports::{
    random_embeddings, read_curve, run_lemma_report, run_recall_benchmark, LemmaGrid, LemmaReport, LemmaVerdict,
    RecallConfig, RecallReport, RecallRow, LEMMA_CURVE_FILE, LEMMA_VERDICT_FILE, RECALL_FILE,
};
pub use run::{
    build_agent, evaluate_checkpoint, exact_greedy_return, read_metrics, run_experiment, EvalRow, RunMetrics, TimingRow, CHECKPOINT_DIR,
    CONFIG_FILE, METRICS_FILE, TIMING_FILE, TRAINING_LOG_FILE,
};
pub use sweep::{read_sweep, run_sweep, sweep_rows, CellResult, SweepCell, SweepConfig, SweepRow, SWEEP_FILE};
