#![allow(dead_code)]

use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use candle_core::Device;
use image::{DynamicImage, Rgb, RgbImage};
use s2p_core::dataset::toy::{write_toy_dataset, ToyDatasetSpec};
use s2p_core::dataset::{load_dataset_manifest, BatchLoader, ClassVocabulary};
use s2p_core::models::{Backbone, ModelConfig};
use s2p_core::trainer::{save_checkpoint, CheckpointBundle, TrainConfig, TrainState};
use s2p_service::{cors_layer, router, AppState, Snapshot};
use serde_json::Value;
use tower::ServiceExt;

pub const SIZE: usize = 16;

pub const SCRIBBLE: [&str; 10] = [
    "pineapple", "cookie", "orange", "watermelon", "strawberry", "chicken", "cupcake", "moon",
    "soccer", "basketball",
];

pub fn model() -> ModelConfig {
    ModelConfig {
        base_width: 4,
        n_blocks: 1,
        embed_dim: 8,
        d_layers: 3,
        d_base_width: 4,
        classifier: Backbone::SimpleCnn,
        classifier_width: 2,
    }
}

fn train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        image_size: SIZE,
        batch_size: 2,
        seed,
        ..TrainConfig::default()
    }
}

/// Untrained checkpoint over the ten-class vocabulary with six open classes.
pub fn scribble_checkpoint(dir: &Path) -> PathBuf {
    let vocab = ClassVocabulary::new(SCRIBBLE.iter().map(|s| s.to_string()).collect(), &SCRIBBLE[4..]).unwrap();
    let st = TrainState::new(model(), train_config(0), vocab, &Device::Cpu).unwrap();
    let path = dir.join("scribble.bin");
    save_checkpoint(&CheckpointBundle::capture(&st).unwrap(), &path).unwrap();
    path
}

/// Two-class toy checkpoint after `steps` updates.
pub fn toy_checkpoint(dir: &Path, name: &str, seed: u64, steps: usize) -> PathBuf {
    let data = dir.join("toy-data");
    if !data.exists() {
        write_toy_dataset(&data, &ToyDatasetSpec::two_class(SIZE as u32)).unwrap();
    }
    let vocab = ClassVocabulary::new(vec!["orange".into(), "lime".into()], &["lime"]).unwrap();
    let manifest = load_dataset_manifest(&data, &vocab).unwrap();
    let mut st = TrainState::new(model(), train_config(seed), vocab, &Device::Cpu).unwrap();
    let loader = BatchLoader::new(SIZE, false, false, candle_core::DType::F32, &Device::Cpu);
    for _ in 0..steps {
        let (p, s) = loader.next_training_batch(&manifest, 2, &mut st.data_rng).unwrap();
        st.train_step(&p, &s).unwrap();
    }
    let path = dir.join(name);
    save_checkpoint(&CheckpointBundle::capture(&st).unwrap(), &path).unwrap();
    path
}

pub fn app_with(checkpoint: Option<&Path>, styles: &[(&str, &Path)]) -> (Arc<AppState>, Router) {
    let state = Arc::new(AppState::new());
    if let Some(p) = checkpoint {
        state.set_checkpoint(Snapshot::load(p).unwrap());
    }
    for (id, p) in styles {
        state.add_style(*id, Snapshot::load(p).unwrap());
    }
    let app = router(state.clone(), cors_layer(&[]).unwrap());
    (state, app)
}

pub fn png(width: u32, height: u32, seed: u8) -> Vec<u8> {
    let img = RgbImage::from_fn(width, height, |x, y| {
        let on = (x + y + seed as u32) % 7 == 0;
        if on { Rgb([0, 0, 0]) } else { Rgb([255, 255, 255]) }
    });
    let mut out = Cursor::new(Vec::new());
    DynamicImage::ImageRgb8(img).write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

pub fn b64(bytes: &[u8]) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

pub fn unb64(text: &str) -> Vec<u8> {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.decode(text).unwrap()
}

pub async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

pub fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

pub fn post_json(uri: &str, body: Value) -> Request<Body> {
    Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

/// multipart/form-data with one file part and text parts.
pub fn post_multipart(uri: &str, file_field: &str, file: &[u8], text: &[(&str, &str)]) -> Request<Body> {
    let boundary = "s2pboundary7MA4YWxk";
    let mut body = Vec::new();
    for (k, v) in text {
        body.extend(format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{k}\"\r\n\r\n{v}\r\n").bytes());
    }
    body.extend(
        format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"{file_field}\"; filename=\"x.png\"\r\nContent-Type: image/png\r\n\r\n"
        )
        .bytes(),
    );
    body.extend_from_slice(file);
    body.extend(format!("\r\n--{boundary}--\r\n").bytes());
    Request::post(uri)
        .header("content-type", format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap()
}

pub fn decode(png: &[u8]) -> DynamicImage {
    image::load_from_memory(png).unwrap()
}
