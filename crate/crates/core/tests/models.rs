mod common;

use candle_core::{DType, Device, Tensor, D};
use s2p_core::models::{
    Backbone, Classifier, ClassifierSpec, DiscriminatorNorm, DiscriminatorSpec, Generator,
    GeneratorSpec, PatchDiscriminator,
};
use s2p_core::nn::ParamStore;
use s2p_core::Error;

fn store(seed: u64) -> ParamStore {
    ParamStore::new(seed, DType::F32, &Device::Cpu)
}

fn randn(shape: &[usize], scale: f64) -> Tensor {
    (Tensor::randn(0f32, 1.0, shape, &Device::Cpu).unwrap() * scale).unwrap()
}

fn values(t: &Tensor) -> Vec<f32> {
    t.flatten_all().unwrap().to_vec1().unwrap()
}

#[test]
fn photo_to_sketch_shapes() {
    let g = Generator::new(&store(0), GeneratorSpec::photo_to_sketch(4, 2), 2).unwrap();
    let y = g.photo_to_sketch(&randn(&[2, 3, 256, 256], 1.0)).unwrap();
    assert_eq!(y.dims(), &[2, 3, 256, 256]);
    let y = g.photo_to_sketch(&randn(&[1, 3, 128, 128], 1.0)).unwrap();
    assert_eq!(y.dims(), &[1, 3, 128, 128]);
}

#[test]
fn generators_accept_any_multiple_of_four() {
    let gs = Generator::new(&store(0), GeneratorSpec::photo_to_sketch(2, 1), 2).unwrap();
    let gp = Generator::new(&store(1), GeneratorSpec::sketch_to_photo(2, 1, 4), 2).unwrap();
    let labels = Tensor::new(&[1u32], &Device::Cpu).unwrap();
    for s in [8, 12, 20, 36] {
        let x = randn(&[1, 3, s, s], 1.0);
        assert_eq!(gs.photo_to_sketch(&x).unwrap().dims(), &[1, 3, s, s]);
        assert_eq!(
            gp.sketch_to_photo(&x, &labels).unwrap().dims(),
            &[1, 3, s, s]
        );
    }
    let err = gs
        .photo_to_sketch(&randn(&[1, 3, 30, 30], 1.0))
        .unwrap_err();
    assert!(matches!(err, Error::Shape(_)), "{err}");
}

#[test]
fn outputs_are_tanh_bounded() {
    let gs = Generator::new(&store(2), GeneratorSpec::photo_to_sketch(4, 1), 2).unwrap();
    let gp = Generator::new(&store(3), GeneratorSpec::sketch_to_photo(4, 1, 8), 2).unwrap();
    let x = randn(&[2, 3, 32, 32], 10.0);
    let labels = Tensor::new(&[0u32, 1], &Device::Cpu).unwrap();
    for y in [
        gs.photo_to_sketch(&x).unwrap(),
        gp.sketch_to_photo(&x, &labels).unwrap(),
    ] {
        assert!(values(&y).iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

#[test]
fn sketch_to_photo_contract() {
    let gp = Generator::new(&store(4), GeneratorSpec::sketch_to_photo(4, 2, 8), 3).unwrap();
    let x = randn(&[1, 3, 256, 256], 1.0);
    let y = gp
        .sketch_to_photo(&x, &Tensor::new(&[0u32], &Device::Cpu).unwrap())
        .unwrap();
    assert_eq!(y.dims(), &[1, 3, 256, 256]);
    let err = gp
        .sketch_to_photo(&x, &Tensor::new(&[3u32], &Device::Cpu).unwrap())
        .unwrap_err();
    assert!(matches!(err, Error::Argument(_)), "{err}");
}

#[test]
fn identity_heads_make_labels_indistinguishable() {
    let gp = Generator::new(&store(5), GeneratorSpec::sketch_to_photo(4, 2, 8), 2).unwrap();
    let x = randn(&[1, 3, 16, 16], 1.0);
    let a = gp
        .sketch_to_photo(&x, &Tensor::new(&[0u32], &Device::Cpu).unwrap())
        .unwrap();
    let b = gp
        .sketch_to_photo(&x, &Tensor::new(&[1u32], &Device::Cpu).unwrap())
        .unwrap();
    assert_eq!(values(&a), values(&b));
    let e = gp.label_embedding().unwrap();
    assert_eq!(
        e.forward(&Tensor::new(&[1u32], &Device::Cpu).unwrap())
            .unwrap()
            .len(),
        4
    );
}

#[test]
fn labels_separate_after_one_training_step() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::toy_manifest(dir.path(), 16);
    let mut st = common::state(common::tiny_model(), common::tiny_train(16));
    let (p, s) = common::next_batches(&mut st, &manifest);
    st.train_step(&p, &s).unwrap();
    let gp = &st.nets.g_p;
    let a = values(
        &gp.sketch_to_photo(&s.images, &Tensor::new(&[0u32], &Device::Cpu).unwrap())
            .unwrap(),
    );
    let b = values(
        &gp.sketch_to_photo(&s.images, &Tensor::new(&[1u32], &Device::Cpu).unwrap())
            .unwrap(),
    );
    let differing = a.iter().zip(&b).filter(|(x, y)| x != y).count();
    assert!(
        differing * 100 >= a.len(),
        "{differing} of {} differ",
        a.len()
    );
}

#[test]
fn discriminator_grid_and_score() {
    let spec = DiscriminatorSpec {
        base_width: 8,
        ..DiscriminatorSpec::default()
    };
    let d = PatchDiscriminator::new(&store(6), spec).unwrap();
    let x = randn(&[4, 3, 256, 256], 1.0);
    let logits = d.forward(&x).unwrap();
    assert_eq!(logits.dims(), &[4, 1, 30, 30]);
    assert_eq!(spec.receptive_field(), 70);
    let score: Vec<f32> = d.score(&x).unwrap().to_vec1().unwrap();
    for (b, s) in score.iter().enumerate() {
        let v = values(&logits.get(b).unwrap());
        let mean = v.iter().map(|&x| x as f64).sum::<f64>() / 900.0;
        assert!((mean - *s as f64).abs() < 1e-6);
    }
}

#[test]
fn center_pixel_only_moves_covering_patches() {
    let spec = DiscriminatorSpec {
        n_layers: 5,
        base_width: 4,
        norm: DiscriminatorNorm::None,
    };
    let d = PatchDiscriminator::new(&store(7), spec).unwrap();
    let x = randn(&[1, 3, 256, 256], 0.5);
    let mut bumped = values(&x);
    let center = 128;
    for c in 0..3 {
        bumped[c * 256 * 256 + center * 256 + center] += 0.5;
    }
    let y = Tensor::from_vec(bumped, (1, 3, 256, 256), &Device::Cpu).unwrap();
    let before = values(&d.forward(&x).unwrap());
    let after = values(&d.forward(&y).unwrap());
    let covers = |o: usize| {
        let (lo, hi) = spec.receptive_range(o);
        lo <= center as i64 && center as i64 <= hi
    };
    let mut moved = 0;
    for i in 0..30 {
        for j in 0..30 {
            let diff = (after[i * 30 + j] - before[i * 30 + j]).abs();
            if covers(i) && covers(j) {
                assert!(diff > 0.0, "covering logit ({i},{j}) unchanged");
                moved += 1;
            } else {
                assert_eq!(diff, 0.0, "logit ({i},{j}) outside the field moved");
            }
        }
    }
    assert_eq!(moved, 64);
}

#[test]
fn classifier_logits_and_softmax() {
    for backbone in [Backbone::SimpleCnn, Backbone::HrnetSmall] {
        let spec = ClassifierSpec {
            backbone,
            n_classes: 10,
            base_width: 4,
        };
        let r = Classifier::new(&store(8), spec).unwrap();
        for s in [8, 64] {
            let logits = r.forward(&randn(&[3, 3, s, s], 1.0)).unwrap();
            assert_eq!(logits.dims(), &[3, 10]);
            let sums: Vec<f32> = candle_nn::ops::softmax(&logits, D::Minus1)
                .unwrap()
                .sum(1)
                .unwrap()
                .to_vec1()
                .unwrap();
            assert!(
                sums.iter().all(|s| (s - 1.0).abs() < 1e-6),
                "{backbone}: {sums:?}"
            );
        }
        assert_eq!(
            r.features(&randn(&[2, 3, 16, 16], 1.0)).unwrap().dims(),
            &[2, r.feature_dim()]
        );
    }
}
