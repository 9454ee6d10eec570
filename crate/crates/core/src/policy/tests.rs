use std::sync::Arc;

use rand::Rng;

use super::*;
use crate::index::{ActionSet, IndexConfig};
use crate::nn::{Activation, OutputActivation};
use crate::rng;

fn random_actions(n: usize, dim: usize, seed: u64) -> Arc<ActionSet> {
    let mut r = rng::stream(seed, 100);
    Arc::new(ActionSet::from_flat(dim, (0..n * dim).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap())
}

fn nets(state_dim: usize, action_dim: usize, seed: u64) -> (Mlp, Mlp) {
    let mut r = rng::stream(seed, 200);
    let out = OutputActivation::squash_to_box(&vec![-1.0; action_dim], &vec![1.0; action_dim]);
    let actor = Mlp::new(&[state_dim, 16, action_dim], Activation::Relu, out, &mut r).unwrap();
    let critic = Mlp::new(
        &[state_dim + action_dim, 16, 16, 1],
        Activation::Relu,
        OutputActivation::Identity,
        &mut r,
    )
    .unwrap();
    (actor, critic)
}

#[test]
fn k_spec_resolution() {
    assert_eq!("0.5%".parse::<KSpec>().unwrap().resolve(1_000_000).unwrap(), 5_000);
    assert_eq!("5%".parse::<KSpec>().unwrap().resolve(256).unwrap(), 13);
    assert_eq!("10%".parse::<KSpec>().unwrap().resolve(49).unwrap(), 5);
    assert_eq!("100%".parse::<KSpec>().unwrap().resolve(49).unwrap(), 49);
    assert_eq!(KSpec::Fraction(0.0001).resolve(10).unwrap(), 1);
    assert_eq!(KSpec::Count(500).resolve(49).unwrap(), 49);
    assert!(KSpec::Count(0).resolve(49).is_err());
    assert!(KSpec::Fraction(1.5).resolve(49).is_err());
    assert!("five".parse::<KSpec>().is_err());
}

#[test]
fn k_spec_serde() {
    let cfg: PolicyConfig = serde_json::from_str(r#"{"k": "5%", "tier": "slow"}"#).unwrap();
    assert_eq!(cfg.k, KSpec::Fraction(0.05));
    assert_eq!(cfg.refinement, Refinement::On);
    let cfg: PolicyConfig = serde_json::from_str(r#"{"k": 13, "tier": "fast", "refinement": "off"}"#).unwrap();
    assert_eq!(cfg.k, KSpec::Count(13));
    let back: PolicyConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn zero_actor_emits_box_center() {
    let out = OutputActivation::squash_to_box(&[-2.0, 0.0], &[4.0, 1.0]);
    let actor = Mlp::zeros(&[3, 8, 2], Activation::Relu, out).unwrap();
    assert_eq!(proto_action(&actor, &[0.4, -1.0, 9.0]).unwrap(), vec![1.0, 0.5]);
}

#[test]
fn proto_action_matches_manual_forward() {
    let (actor, _) = nets(3, 2, 17);
    let state = [0.2, -0.7, 1.3];
    // hand-rolled forward pass over the raw parameters
    let l0 = &actor.layers()[0];
    let hidden: Vec<f64> = (0..l0.outputs())
        .map(|o| {
            let z: f64 = l0.biases()[o]
                + (0..3).map(|i| l0.weights()[o * 3 + i] * state[i]).sum::<f64>();
            z.max(0.0)
        })
        .collect();
    let l1 = &actor.layers()[1];
    let expected: Vec<f64> = (0..2)
        .map(|o| {
            let z: f64 = l1.biases()[o]
                + (0..hidden.len())
                    .map(|i| l1.weights()[o * hidden.len() + i] * hidden[i])
                    .sum::<f64>();
            z.tanh()
        })
        .collect();
    let got = proto_action(&actor, &state).unwrap();
    for (g, e) in got.iter().zip(&expected) {
        assert!((g - e).abs() < 1e-14);
    }
    assert_eq!(got, proto_action(&actor, &state).unwrap());
}

#[test]
fn full_k_exact_equals_brute_force_argmax() {
    let actions = random_actions(49, 3, 1);
    let index = ActionIndex::exact(actions.clone()).unwrap();
    let (actor, critic) = nets(4, 3, 2);
    let policy = Wolpertinger::new(&actor, &critic, &index, 49).unwrap();
    let mut r = rng::stream(3, 0);
    for _ in 0..100 {
        let s: Vec<f64> = (0..4).map(|_| r.random_range(-2.0..2.0)).collect();
        // oracle: evaluate the critic on every action through a plain forward pass
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, a) in actions.rows().enumerate() {
            let input: Vec<f64> = s.iter().chain(a).copied().collect();
            let q = critic.forward(&input).unwrap()[0];
            if q > best.1 {
                best = (i, q);
            }
        }
        let d = policy.select_action(&s).unwrap();
        assert_eq!(d.chosen.index(), best.0);
        assert_eq!(full_argmax(&critic, &index, &s).unwrap().0.index(), best.0);
    }
}

#[test]
fn k_one_takes_nearest_neighbor() {
    let actions = random_actions(200, 2, 4);
    let index = ActionIndex::build(actions, IndexConfig::for_tier(Tier::Fast), 1).unwrap();
    let (actor, critic) = nets(3, 2, 5);
    let policy = Wolpertinger::new(&actor, &critic, &index, 1).unwrap();
    let s = [0.1, 0.2, 0.3];
    let d = policy.select_action(&s).unwrap();
    assert_eq!(d.chosen, index.query(&d.proto_action, 1).unwrap()[0].id);
    assert!(d.q_values.is_empty());
}

#[test]
fn refinement_picks_higher_q_candidate() {
    let actions = Arc::new(ActionSet::from_flat(1, vec![0.0, 0.5, 1.0]).unwrap());
    let index = ActionIndex::exact(actions).unwrap();
    let mut actor = Mlp::zeros(&[1, 1], Activation::Identity, OutputActivation::Identity).unwrap();
    actor.layers_mut()[0].biases_mut()[0] = 0.1;
    // Q(s, a) = 10·a, so Q(s, 0) = 0 and Q(s, 0.5) = 5
    let mut critic = Mlp::zeros(&[2, 1], Activation::Identity, OutputActivation::Identity).unwrap();
    critic.layers_mut()[0].weights_mut()[1] = 10.0;
    let policy = Wolpertinger::new(&actor, &critic, &index, 2).unwrap();
    let d = policy.select_action(&[0.0]).unwrap();
    assert_eq!(d.candidates.iter().map(|n| n.id.0).collect::<Vec<_>>(), vec![0, 1]);
    assert_eq!(d.chosen, ActionId(1));
    assert_eq!(d.chosen_q(), Some(5.0));

    let off = policy.with_refinement(Refinement::Off).select_action(&[0.0]).unwrap();
    assert_eq!(off.chosen, ActionId(0));
}

#[test]
fn q_ties_break_to_smaller_id() {
    let actions = Arc::new(ActionSet::from_flat(1, vec![0.0, 1.0, 2.0, 3.0]).unwrap());
    let index = ActionIndex::exact(actions).unwrap();
    let mut actor = Mlp::zeros(&[1, 1], Activation::Identity, OutputActivation::Identity).unwrap();
    actor.layers_mut()[0].biases_mut()[0] = 2.9;
    let critic = Mlp::zeros(&[2, 1], Activation::Identity, OutputActivation::Identity).unwrap();
    let d = Wolpertinger::new(&actor, &critic, &index, 3)
        .unwrap()
        .select_action(&[0.0])
        .unwrap();
    assert_eq!(d.chosen, ActionId(1));
}

#[test]
fn refinement_dominance_over_k() {
    let actions = random_actions(120, 2, 6);
    let index = ActionIndex::exact(actions).unwrap();
    let (actor, critic) = nets(3, 2, 7);
    let mut r = rng::stream(8, 0);
    for _ in 0..30 {
        let s: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut last = f64::NEG_INFINITY;
        for k in [1, 2, 3, 5, 8, 13, 40, 120] {
            let d = Wolpertinger::new(&actor, &critic, &index, k)
                .unwrap()
                .select_action(&s)
                .unwrap();
            let q = score_actions(&critic, &index, &s, &[d.chosen]).unwrap()[0];
            assert!(q >= last, "k={k}: {q} < {last}");
            last = q;
            if let Some(cq) = d.chosen_q() {
                assert!(d.q_values.iter().all(|&v| v <= cq));
            }
        }
    }
}

#[test]
fn no_exploration_matches_greedy() {
    let actions = random_actions(60, 2, 9);
    let index = ActionIndex::exact(actions).unwrap();
    let (actor, critic) = nets(3, 2, 10);
    let policy = Wolpertinger::new(&actor, &critic, &index, 6).unwrap();
    let mut r = rng::stream(11, 0);
    let s = [0.3, 0.1, -0.5];
    let explore = Exploration {
        epsilon: 0.0,
        noise_std: vec![0.0, 0.0],
    };
    let a = policy.select_action_explore(&s, &explore, None, &mut r).unwrap();
    assert_eq!(a, policy.select_action(&s).unwrap());
}

#[test]
fn certain_exploration_with_singleton_support() {
    let actions = random_actions(10, 2, 12);
    let index = ActionIndex::exact(actions).unwrap();
    let (actor, critic) = nets(3, 2, 13);
    let policy = Wolpertinger::new(&actor, &critic, &index, 3).unwrap();
    let mut r = rng::stream(14, 0);
    let e = Exploration::epsilon_only(1.0);
    for _ in 0..50 {
        let d = policy
            .select_action_explore(&[0.0, 0.0, 0.0], &e, Some(&[ActionId(7)]), &mut r)
            .unwrap();
        assert_eq!(d.chosen, ActionId(7));
        assert!(d.explored);
    }
}

#[test]
fn uniform_exploration_frequencies() {
    let actions = random_actions(10, 2, 15);
    let index = ActionIndex::exact(actions).unwrap();
    let (actor, critic) = nets(3, 2, 16);
    let policy = Wolpertinger::new(&actor, &critic, &index, 3).unwrap();
    let mut r = rng::stream(17, 0);
    let e = Exploration::epsilon_only(1.0);
    let n = 100_000;
    let mut counts = [0usize; 10];
    for _ in 0..n {
        let d = policy.select_action_explore(&[0.1, 0.2, 0.3], &e, None, &mut r).unwrap();
        counts[d.chosen.index()] += 1;
    }
    // binomial(n, 0.1): sigma = sqrt(n·0.1·0.9)
    let sigma = (n as f64 * 0.1 * 0.9).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 * 0.1).abs() <= 3.0 * sigma, "{counts:?}");
    }
}

#[test]
fn dimension_errors_propagate() {
    let actions = random_actions(10, 2, 18);
    let index = ActionIndex::exact(actions).unwrap();
    let (actor, critic) = nets(3, 2, 19);
    let policy = Wolpertinger::new(&actor, &critic, &index, 3).unwrap();
    assert!(matches!(policy.select_action(&[0.0]), Err(Error::DimensionMismatch { .. })));
    let (bad_actor, _) = nets(3, 4, 20);
    assert!(Wolpertinger::new(&bad_actor, &critic, &index, 3).is_err());
}

#[test]
fn decision_rows() {
    let actions = Arc::new(ActionSet::from_flat(1, vec![0.0, 0.5, 1.0]).unwrap());
    let index = ActionIndex::exact(actions).unwrap();
    let mut actor = Mlp::zeros(&[1, 1], Activation::Identity, OutputActivation::Identity).unwrap();
    actor.layers_mut()[0].biases_mut()[0] = 0.1;
    let mut critic = Mlp::zeros(&[2, 1], Activation::Identity, OutputActivation::Identity).unwrap();
    critic.layers_mut()[0].weights_mut()[1] = 10.0;
    let d = Wolpertinger::new(&actor, &critic, &index, 2).unwrap().select_action(&[0.0]).unwrap();
    let mut w = DecisionWriter::new(Vec::new()).unwrap();
    w.write(3, &d).unwrap();
    let text = String::from_utf8(w.finish().unwrap()).unwrap();
    assert_eq!(text, "step,proto_action,candidates,chosen,chosen_q\n3,0.1,2,1,5\n");
}
