use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wolpertinger::index::{brute_force, squared_distance};
use wolpertinger::lemma::{expected_max, LemmaScenario};
use wolpertinger::nn::snapshot::{read_snapshot, snapshot_bytes, write_snapshot};
use wolpertinger::{Activation, ActionIndex, ActionSet, IndexConfig, KSpec, Mlp, OutputActivation, Tier};

fn action_set() -> impl Strategy<Value = ActionSet> {
    (1usize..6, 1usize..120).prop_flat_map(|(dim, n)| {
        prop::collection::vec(-3.0f64..3.0, dim * n).prop_map(move |data| ActionSet::from_flat(dim, data).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_tier_returns_distinct_sorted_valid_neighbors(
        set in action_set(),
        k in 1usize..30,
        seed in any::<u64>(),
        tier in prop::sample::select(vec![Tier::Exact, Tier::Slow, Tier::Medium, Tier::Fast]),
    ) {
        let set = Arc::new(set);
        let query = set.get(wolpertinger::ActionId(0)).iter().map(|v| v + 0.1).collect::<Vec<_>>();
        let index = ActionIndex::build(set.clone(), IndexConfig::for_tier(tier), seed).unwrap();
        let got = index.query(&query, k).unwrap();
        prop_assert_eq!(got.len(), k.min(set.len()));
        let mut ids: Vec<usize> = got.iter().map(|n| n.id.index()).collect();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), got.len());
        for w in got.windows(2) {
            prop_assert!(w[0].dist2 <= w[1].dist2);
        }
        for n in &got {
            prop_assert_eq!(n.dist2, squared_distance(set.get(n.id), &query));
        }
        if tier == Tier::Exact {
            prop_assert_eq!(got, brute_force(&set, &query, k));
        }
    }

    #[test]
    fn fractional_k_stays_in_range(n in 1usize..2_000_000, f in 0.0001f64..1.0) {
        let k = KSpec::Fraction(f).resolve(n).unwrap();
        prop_assert!(k >= 1 && k <= n);
    }

    #[test]
    fn expected_max_bounded_and_growing_in_k(
        p in 0.0f64..0.99,
        b in 0.1f64..5.0,
        extra in 0.0f64..5.0,
        q in -10.0f64..10.0,
        k in 1usize..400,
    ) {
        let c = b + extra;
        let s = LemmaScenario::new(p, b, c, k, q).unwrap();
        let e = expected_max(&s).unwrap();
        let next = expected_max(&s.with_k(k + 1)).unwrap();
        prop_assert!(e <= q + b + 1e-12 && e >= q - c - 1e-12);
        prop_assert!(next >= e - 1e-12);
    }

    #[test]
    fn snapshots_roundtrip(
        sizes in prop::collection::vec(1usize..9, 2..5),
        seed in any::<u64>(),
    ) {
        let net = Mlp::new(&sizes, Activation::Tanh, OutputActivation::Identity, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut bytes = Vec::new();
        write_snapshot(&net, &mut bytes).unwrap();
        prop_assert_eq!(&bytes[..4], b"WOLP");
        prop_assert_eq!(&bytes, &snapshot_bytes(&net));
        let snap = read_snapshot(bytes.as_slice()).unwrap();
        let mut other = Mlp::zeros(&sizes, Activation::Tanh, OutputActivation::Identity).unwrap();
        snap.load_into(&mut other).unwrap();
        prop_assert_eq!(other, net);
    }

    #[test]
    fn action_set_csv_roundtrip(set in action_set()) {
        let mut text = Vec::new();
        set.write_csv(&mut text).unwrap();
        let back = ActionSet::from_csv_reader(text.as_slice()).unwrap();
        prop_assert_eq!(back.as_flat(), set.as_flat());
        prop_assert_eq!(back.dim(), set.dim());
    }
}

#[test]
fn half_percent_of_a_million() {
    assert_eq!(KSpec::Fraction(0.005).resolve(1_000_000).unwrap(), 5000);
    assert_eq!("0.5%".parse::<KSpec>().unwrap(), KSpec::Fraction(0.005));
}
