use std::path::Path;

use wolpertinger::harness::{run_experiment, ExperimentConfig};

// Chain MDP with the full action set as candidates: the greedy policy must
// reach the dynamic-programming optimum within 20k steps for most seeds.
#[test]
fn chain_reaches_optimum() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/chain.json");
    let mut finals = Vec::new();
    for seed in 0..5 {
        let cfg = ExperimentConfig::load(&path, &[format!("seed={seed}")]).unwrap();
        let m = run_experiment(&cfg, None).unwrap();
        let best = m.optimal_return.unwrap();
        assert_eq!(best, 7.0);
        finals.push(m.final_return());
    }
    finals.sort_by(f64::total_cmp);
    assert_eq!(finals[2], 7.0, "final returns {finals:?}");
}
