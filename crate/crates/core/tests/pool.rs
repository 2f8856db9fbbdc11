mod common;

use candle_core::{Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use s2p_core::dataset::ClassVocabulary;
use s2p_core::pool::{MixPolicy, PooledSketches, SketchPool};

/// A batch whose every pixel encodes `(id, label)` so pairing can be checked.
fn tagged(id: u32, labels: &[u32]) -> PooledSketches {
    let b = labels.len();
    let mut data = Vec::with_capacity(b * 3 * 2 * 2);
    for &l in labels {
        data.extend(std::iter::repeat_n(id as f32 * 100.0 + l as f32, 12));
    }
    PooledSketches::new(
        Tensor::from_vec(data, (b, 3, 2, 2), &Device::Cpu).unwrap(),
        labels.to_vec(),
    )
    .unwrap()
}

fn decode(p: &PooledSketches) -> Vec<(u32, u32)> {
    (0..p.labels.len())
        .map(|i| {
            let v: f32 = p
                .sketches
                .get(i)
                .unwrap()
                .flatten_all()
                .unwrap()
                .get(0)
                .unwrap()
                .to_scalar()
                .unwrap();
            ((v / 100.0).floor() as u32, (v % 100.0).round() as u32)
        })
        .collect()
}

fn vocab(n: usize, n_open: usize) -> ClassVocabulary {
    let names: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
    ClassVocabulary::with_open_indices(names, (n - n_open..n).collect()).unwrap()
}

#[test]
fn fill_phase_returns_fresh() {
    let mut pool = SketchPool::new(50, 0.5, 0).unwrap();
    let out = pool.query(tagged(1, &[0])).unwrap();
    assert_eq!(decode(&out), vec![(1, 0)]);
    assert_eq!(pool.len(), 1);
}

#[test]
fn stored_returns_follow_swap_likelihood() {
    let mut pool = SketchPool::new(50, 0.5, 42).unwrap();
    for i in 0..50 {
        pool.query(tagged(i, &[0])).unwrap();
    }
    let mut stored = 0;
    for i in 50..10_050u32 {
        let out = pool.query(tagged(i, &[0])).unwrap();
        if decode(&out)[0].0 != i {
            stored += 1;
        }
    }
    assert!((4850..=5150).contains(&stored), "{stored} stored returns");
}

#[test]
fn capacity_is_never_exceeded_and_pairs_stay_together() {
    let cap = 7;
    let mut pool = SketchPool::new(cap, 0.5, 9).unwrap();
    for i in 0..(10 * cap) as u32 {
        let labels = [i % 3, (i + 1) % 3];
        let out = pool.query(tagged(i, &labels)).unwrap();
        assert!(pool.len() <= cap);
        for ((_, encoded), &label) in decode(&out).iter().zip(&out.labels) {
            assert_eq!(*encoded, label);
        }
        for entry in pool.entries() {
            for ((_, encoded), &label) in decode(entry).iter().zip(&entry.labels) {
                assert_eq!(*encoded, label);
            }
        }
    }
    assert_eq!(pool.len(), cap);
}

#[test]
fn pooled_labels_are_class_blind() {
    let mut pool = SketchPool::new(5, 0.5, 3).unwrap();
    let mut seen = std::collections::BTreeSet::new();
    for i in 0..200u32 {
        let out = pool.query(tagged(i, &[i % 2])).unwrap();
        seen.extend(out.labels);
    }
    assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![0, 1]);
}

#[test]
fn query_sequence_is_reproducible() {
    let run = || {
        let mut pool = SketchPool::new(4, 0.5, 77).unwrap();
        (0..100u32)
            .map(|i| decode(&pool.query(tagged(i, &[1])).unwrap()))
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn substitution_frequency_matches_one_minus_t() {
    let policy = MixPolicy::new(0.4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let hits = (0..10_000)
        .filter(|_| policy.should_substitute(&mut rng))
        .count();
    let rate = hits as f64 / 10_000.0;
    assert!((rate - 0.6).abs() <= 0.015, "rate {rate}");
}

#[test]
fn default_thresholds() {
    assert!((MixPolicy::default_threshold(&vocab(10, 6)).unwrap() - 0.4).abs() < 1e-12);
    assert!((MixPolicy::default_threshold(&vocab(14, 2)).unwrap() - 12.0 / 14.0).abs() < 1e-12);
    assert_eq!(MixPolicy::default_threshold(&vocab(5, 0)).unwrap(), 1.0);
}

#[test]
fn train_state_mixing_rate_over_2000_steps() {
    let cfg = s2p_core::trainer::TrainConfig {
        mix_threshold: s2p_core::trainer::MixThreshold::Fixed(0.4),
        ..common::tiny_train(8)
    };
    let mut st = common::state(common::tiny_model(), cfg);
    let fake = Tensor::zeros((1, 3, 8, 8), candle_core::DType::F32, &Device::Cpu).unwrap();
    let substituted = (0..2000)
        .filter(|i| st.mix(&fake, &[(*i % 2) as u32]).unwrap().substituted())
        .count();
    let rate = substituted as f64 / 2000.0;
    assert!((0.57..=0.63).contains(&rate), "rate {rate}");
    assert!(st.pool.len() <= 50);
}
