mod common;

use candle_core::{DType, Device};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use s2p_core::dataset::{load_preprocessed, Domain, ImageArray};
use s2p_core::eval::{
    compute_accuracy, compute_fid, evaluate, export_embeddings, extract_features, frechet_distance,
    generate_test_set, train_judge, EmbeddingRow, FeatureExtractor, GaussianStats, Judge,
    JudgeConfig, Split, GENERATED_MANIFEST,
};
use s2p_core::models::{Backbone, Generator, GeneratorSpec};
use s2p_core::nn::ParamStore;
use s2p_core::Error;

fn gaussian_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..d)
                .map(|j| {
                    Distribution::<f64>::sample(&StandardNormal, &mut rng) * (1.0 + j as f64 * 0.3)
                        + j as f64
                })
                .collect()
        })
        .collect()
}

fn stats(mean: [f64; 2], cov: [[f64; 2]; 2]) -> GaussianStats {
    GaussianStats {
        mean: DVector::from_row_slice(&mean),
        cov: DMatrix::from_fn(2, 2, |i, j| cov[i][j]),
        n: 1000,
    }
}

/// Closed form for 2x2 SPD covariances: tr sqrt(A B) = sqrt(tr(AB) + 2 sqrt(det A det B)).
fn fid_2x2(m1: [f64; 2], c1: [[f64; 2]; 2], m2: [f64; 2], c2: [[f64; 2]; 2]) -> f64 {
    let tr = |c: [[f64; 2]; 2]| c[0][0] + c[1][1];
    let det = |c: [[f64; 2]; 2]| c[0][0] * c[1][1] - c[0][1] * c[1][0];
    let tr_ab =
        c1[0][0] * c2[0][0] + c1[0][1] * c2[1][0] + c1[1][0] * c2[0][1] + c1[1][1] * c2[1][1];
    let cross = (tr_ab + 2.0 * (det(c1) * det(c2)).sqrt()).sqrt();
    let dm = (m1[0] - m2[0]).powi(2) + (m1[1] - m2[1]).powi(2);
    dm + tr(c1) + tr(c2) - 2.0 * cross
}

fn spd() -> impl Strategy<Value = [[f64; 2]; 2]> {
    (0.1f64..3.0, 0.1f64..3.0, -0.9f64..0.9).prop_map(|(a, b, rho)| {
        let off = rho * (a * b).sqrt();
        [[a, off], [off, b]]
    })
}

#[test]
fn fid_of_a_set_with_itself_is_zero() {
    let x = gaussian_rows(300, 8, 1);
    assert!(compute_fid(&x, &x).unwrap() <= 1e-3);
}

#[test]
fn fid_diagonal_closed_form() {
    let a = stats([0.0, 1.0], [[1.0, 0.0], [0.0, 4.0]]);
    let b = stats([1.0, -1.0], [[9.0, 0.0], [0.0, 1.0]]);
    // |dm|^2 = 1 + 4; traces 5 + 10; cross term 2*(3 + 2)
    let want = 5.0 + 15.0 - 10.0;
    assert!((frechet_distance(&a, &b).unwrap() - want).abs() < 1e-4);
}

#[test]
fn fid_grows_with_noise() {
    let x = gaussian_rows(400, 6, 2);
    let noise = gaussian_rows(400, 6, 3);
    let mut last = -1.0;
    for sigma in [0.0, 0.1, 0.3, 0.6, 1.0, 2.0] {
        let y: Vec<Vec<f64>> = x
            .iter()
            .zip(&noise)
            .map(|(r, n)| r.iter().zip(n).map(|(a, b)| a + sigma * b).collect())
            .collect();
        let f = compute_fid(&x, &y).unwrap();
        assert!(f > last, "sigma {sigma}: {f} after {last}");
        last = f;
    }
}

#[test]
fn fid_rejects_degenerate_inputs() {
    let one = gaussian_rows(1, 4, 4);
    assert!(compute_fid(&one, &one).is_err());
    let a = gaussian_rows(10, 4, 5);
    let b = gaussian_rows(10, 3, 6);
    assert!(compute_fid(&a, &b).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fid_matches_two_by_two_oracle(
        c1 in spd(), c2 in spd(),
        m1 in prop::array::uniform2(-2.0f64..2.0), m2 in prop::array::uniform2(-2.0f64..2.0),
    ) {
        let got = frechet_distance(&stats(m1, c1), &stats(m2, c2)).unwrap();
        prop_assert!((got - fid_2x2(m1, c1, m2, c2)).abs() < 1e-4);
        let swapped = frechet_distance(&stats(m2, c2), &stats(m1, c1)).unwrap();
        prop_assert!((got - swapped).abs() < 1e-6);
        prop_assert!(got >= 0.0);
    }
}

#[test]
fn accuracy_basics() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let labels: Vec<u32> = (0..1000).map(|_| rng.random_range(0..10)).collect();
    let guesses: Vec<u32> = (0..1000).map(|_| rng.random_range(0..10)).collect();
    let acc = compute_accuracy(&guesses, &labels).unwrap();
    assert!((acc - 0.1).abs() <= 0.05, "{acc}");
    assert_eq!(compute_accuracy(&labels, &labels).unwrap(), 1.0);

    let mut pairs: Vec<(u32, u32)> = guesses
        .iter()
        .copied()
        .zip(labels.iter().copied())
        .collect();
    pairs.shuffle(&mut rng);
    let (g, l): (Vec<u32>, Vec<u32>) = pairs.into_iter().unzip();
    assert_eq!(compute_accuracy(&g, &l).unwrap(), acc);

    assert!(matches!(
        compute_accuracy(&[], &[]),
        Err(Error::Argument(_))
    ));
    assert!(matches!(
        compute_accuracy(&[1], &[1, 2]),
        Err(Error::Shape(_))
    ));
}

fn small_judge_config() -> JudgeConfig {
    JudgeConfig {
        base_width: 8,
        image_size: 16,
        epochs: 15,
        batch_size: 4,
        lr: 2e-3,
        val_fraction: 0.0,
        ..JudgeConfig::default()
    }
}

#[test]
fn judge_fits_toy_photos_and_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::toy_manifest(&dir.path().join("data"), 16);
    let (judge, report) = train_judge(&manifest, &small_judge_config(), &Device::Cpu).unwrap();
    assert_eq!(report.n_train, 16);
    assert_eq!(report.val_accuracy, None);
    assert_eq!(report.train_accuracy, 1.0);

    let path = dir.path().join("judge.bin");
    judge.save(&path).unwrap();
    let loaded = Judge::load(&path, &Device::Cpu).unwrap();
    let images: Vec<ImageArray> = manifest
        .photo_items()
        .iter()
        .map(|(p, _)| load_preprocessed(p, 16, Domain::Photo).unwrap())
        .collect();
    assert_eq!(
        judge.predict_arrays(&images, 4).unwrap(),
        loaded.predict_arrays(&images, 4).unwrap()
    );

    let other =
        s2p_core::dataset::ClassVocabulary::new(vec!["orange".into()], &[] as &[&str]).unwrap();
    assert!(matches!(
        loaded.check_vocabulary(&other),
        Err(Error::VocabularyMismatch(_))
    ));
}

#[test]
fn embedding_export_shape_and_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::toy_manifest(&dir.path().join("data"), 16);
    let judge = Judge::new(
        manifest.vocabulary.clone(),
        Backbone::SimpleCnn,
        8,
        16,
        3,
        &Device::Cpu,
    )
    .unwrap();
    let items = manifest.photo_items();
    let mut images: Vec<ImageArray> = items
        .iter()
        .cycle()
        .take(19)
        .map(|(p, _)| load_preprocessed(p, 16, Domain::Photo).unwrap())
        .collect();
    images.push(images[0].clone());
    let feats =
        extract_features(&judge as &dyn FeatureExtractor, &images, 7, &Device::Cpu).unwrap();
    assert_eq!(feats[0], feats[19]);
    let rows: Vec<EmbeddingRow> = feats
        .into_iter()
        .enumerate()
        .map(|(i, features)| EmbeddingRow {
            features,
            label: items[i % items.len()].1,
            tag: if i % 2 == 0 {
                "real".into()
            } else {
                "synthesized".into()
            },
        })
        .collect();
    let path = dir.path().join("emb.csv");
    export_embeddings(&rows, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 21);
    assert!(lines.iter().all(|l| l.split(',').count() == 66));
    assert!(lines[0].starts_with("f0,") && lines[0].ends_with(",label,tag"));
    let strip_tag = |l: &str| l.rsplitn(2, ',').nth(1).unwrap().to_string();
    assert_eq!(strip_tag(lines[1]), strip_tag(lines[20]));
}

fn tiny_photo_generator() -> Generator {
    let ps = ParamStore::new(9, DType::F32, &Device::Cpu);
    Generator::new(&ps, GeneratorSpec::sketch_to_photo(4, 1, 8), 2).unwrap()
}

#[test]
fn generated_set_counts_tags_and_skips() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::toy_manifest(&dir.path().join("data"), 16);
    let mut inputs = manifest.test_sketch_items();
    let n_ok = inputs.len();
    let bad = dir.path().join("bad.png");
    std::fs::write(&bad, b"junk").unwrap();
    inputs.push((bad.clone(), 0));
    let g = tiny_photo_generator();
    let out = dir.path().join("gen");
    let set = generate_test_set(
        &g,
        &manifest.vocabulary,
        &inputs,
        16,
        Some(&out),
        &Device::Cpu,
    )
    .unwrap();
    assert_eq!(set.entries.len(), n_ok);
    assert_eq!(set.skipped.len(), 1);
    assert_eq!(set.skipped[0].source, bad);
    for e in &set.entries {
        assert_eq!(e.open_domain, e.label == 1);
        assert!(out.join(&e.file).is_file(), "{}", e.file);
    }
    assert!(set.entries.iter().any(|e| e.file == "orange_0000.png"));
    assert!(out.join(GENERATED_MANIFEST).is_file());

    let again =
        generate_test_set(&g, &manifest.vocabulary, &inputs, 16, None, &Device::Cpu).unwrap();
    assert_eq!(
        set.images
            .iter()
            .map(|a| a.data.clone())
            .collect::<Vec<_>>(),
        again
            .images
            .iter()
            .map(|a| a.data.clone())
            .collect::<Vec<_>>()
    );
}

#[test]
fn split_metrics_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::toy_manifest(&dir.path().join("data"), 16);
    let judge = Judge::new(
        manifest.vocabulary.clone(),
        Backbone::SimpleCnn,
        4,
        16,
        1,
        &Device::Cpu,
    )
    .unwrap();
    let g = tiny_photo_generator();
    let report = evaluate(
        &g,
        &manifest.vocabulary,
        &manifest,
        &judge,
        &Split::ALL,
        16,
        None,
        &Device::Cpu,
    )
    .unwrap();
    let full = &report.splits[&Split::Full];
    let in_d = &report.splits[&Split::In];
    let open = &report.splits[&Split::Open];
    assert_eq!(full.n_generated, in_d.n_generated + open.n_generated);
    assert_eq!(full.n_reference, in_d.n_reference + open.n_reference);
    assert_eq!(full.n_generated, manifest.test_sketch_items().len());
    for m in [full, in_d, open] {
        let acc = m.accuracy.unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
    assert!(report.to_table().contains("open"));

    let wrong_size = evaluate(
        &g,
        &manifest.vocabulary,
        &manifest,
        &judge,
        &Split::ALL,
        32,
        None,
        &Device::Cpu,
    );
    assert!(matches!(wrong_size, Err(Error::Config(_))));
}
