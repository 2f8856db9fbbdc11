//! Central finite-difference gradient checks at 8x8 in f64.

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s2p_core::models::{
    Backbone, Classifier, ClassifierSpec, DiscriminatorSpec, Generator, GeneratorSpec,
    PatchDiscriminator,
};
use s2p_core::nn::ParamStore;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-2;
pub const SLICE: usize = 10;

pub fn input(seed: u64, shape: (usize, usize, usize, usize)) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.0 * shape.1 * shape.2 * shape.3;
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
}

pub fn value(t: &Tensor) -> f64 {
    t.to_scalar::<f64>().unwrap()
}

pub fn set_elem(var: &Var, idx: usize, v: f64) {
    let shape = var.shape().clone();
    let mut data: Vec<f64> = var.as_tensor().flatten_all().unwrap().to_vec1().unwrap();
    data[idx] = v;
    var.set(&Tensor::from_vec(data, shape, &Device::Cpu).unwrap())
        .unwrap();
}

/// Checks `SLICE` sampled elements of every parameter; returns the worst relative error.
pub fn check(store: &ParamStore, loss: impl Fn() -> Tensor, seed: u64) -> f64 {
    let grads = loss().backward().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (name, var) in store.named_vars() {
        let analytic: Vec<f64> = grads
            .get(var.as_tensor())
            .map(|g| g.flatten_all().unwrap().to_vec1().unwrap())
            .unwrap_or_else(|| vec![0.0; var.elem_count()]);
        let base: Vec<f64> = var.as_tensor().flatten_all().unwrap().to_vec1().unwrap();
        for _ in 0..SLICE.min(base.len()) {
            let i = rng.random_range(0..base.len());
            set_elem(&var, i, base[i] + H);
            let up = value(&loss());
            set_elem(&var, i, base[i] - H);
            let down = value(&loss());
            set_elem(&var, i, base[i]);
            let numeric = (up - down) / (2.0 * H);
            let a = analytic[i];
            let scale = a.abs().max(numeric.abs());
            let err = if scale < 1e-7 {
                0.0
            } else {
                (a - numeric).abs() / scale
            };
            assert!(err <= TOL, "{name}[{i}]: analytic {a}, numeric {numeric}");
            worst = worst.max(err);
            checked += 1;
        }
    }
    assert!(checked >= store.len());
    worst
}

pub fn store(seed: u64) -> ParamStore {
    ParamStore::new(seed, DType::F64, &Device::Cpu)
}

/// Redraws every parameter at fan-in scale. At init the convs are tiny and
/// biases zero, so pre-activations sit closer to the activation kinks than
/// the finite-difference step.
pub fn spread(ps: &ParamStore, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, var) in ps.named_vars() {
        let dims = var.dims().to_vec();
        let fan_in = if dims.len() > 1 {
            dims[1..].iter().product::<usize>()
        } else {
            4
        };
        let bound = 1.0 / (fan_in as f64).sqrt();
        let v: Vec<f64> = (0..var.elem_count())
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        var.set(&Tensor::from_vec(v, dims, &Device::Cpu).unwrap())
            .unwrap();
    }
}

pub fn weighted_sum(y: &Tensor, w: &Tensor) -> Tensor {
    (y * w).unwrap().sum_all().unwrap()
}

/// Worst relative error over the sampled slices.
pub fn photo_to_sketch_generator() -> f64 {
    let ps = store(1);
    let g = Generator::new(&ps, GeneratorSpec::photo_to_sketch(4, 1), 2).unwrap();
    spread(&ps, 1);
    let x = input(10, (2, 3, 8, 8));
    let w = input(11, (2, 3, 8, 8));
    check(
        &ps,
        || weighted_sum(&g.photo_to_sketch(&x).unwrap(), &w),
        100,
    )
}

/// Worst relative error over the sampled slices.
pub fn sketch_to_photo_generator() -> f64 {
    let ps = store(2);
    let g = Generator::new(&ps, GeneratorSpec::sketch_to_photo(4, 1, 4), 3).unwrap();
    spread(&ps, 2);
    let x = input(20, (2, 3, 8, 8));
    let w = input(21, (2, 3, 8, 8));
    let labels = Tensor::new(&[2u32, 0], &Device::Cpu).unwrap();
    check(
        &ps,
        || weighted_sum(&g.sketch_to_photo(&x, &labels).unwrap(), &w),
        200,
    )
}

/// Worst relative error over the sampled slices.
pub fn patch_discriminator() -> f64 {
    let ps = store(3);
    let spec = DiscriminatorSpec {
        n_layers: 3,
        base_width: 4,
        ..DiscriminatorSpec::default()
    };
    let d = PatchDiscriminator::new(&ps, spec).unwrap();
    spread(&ps, 3);
    let x = input(40, (2, 3, 8, 8));
    let out = d.forward(&x).unwrap();
    let w = input(41, out.dims4().unwrap());
    check(&ps, || weighted_sum(&d.forward(&x).unwrap(), &w), 300)
}

/// Worst relative error over the sampled slices.
pub fn classifier() -> f64 {
    let mut worst: f64 = 0.0;
    for (k, backbone) in [Backbone::SimpleCnn, Backbone::HrnetSmall]
        .into_iter()
        .enumerate()
    {
        let ps = store(4 + k as u64);
        let spec = ClassifierSpec {
            backbone,
            n_classes: 3,
            base_width: 4,
        };
        let r = Classifier::new(&ps, spec).unwrap();
        spread(&ps, 4 + k as u64);
        let x = input(50, (2, 3, 8, 8));
        let labels = Tensor::new(&[1u32, 2], &Device::Cpu).unwrap();
        worst = worst.max(check(
            &ps,
            || candle_nn::loss::cross_entropy(&r.forward(&x).unwrap(), &labels).unwrap(),
            400 + k as u64,
        ));
    }
    worst
}
