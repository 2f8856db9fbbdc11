use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use candle_core::Device;
use clap::Args;
use serde_json::json;

use s2p_core::config::RunConfig;
use s2p_core::dataset::load_dataset_manifest;
use s2p_core::dataset::toy::{write_toy_dataset, ToyDatasetSpec};
use s2p_core::eval::{self, Judge, JudgeConfig, Split};
use s2p_core::imageio::{save_png, tensor_to_images};
use s2p_core::models::Backbone;
use s2p_core::trainer::{load_checkpoint, run_training, RunOptions};
use s2p_service::{ApiError, ServeConfig, Snapshot, MAX_OUTPUT_SIZE};

use crate::manifest;
use crate::outcome::{Failure, Outcome};
use crate::{Common, ConfigArgs};

#[derive(Debug, Clone, Args)]
pub struct JudgeArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// simple_cnn or hrnet_small.
    #[arg(long, default_value = "simple_cnn")]
    pub backbone: String,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Fraction of each class's photos held out for validation.
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
}

/// Config written next to a toy dataset, ready for `train --config`.
pub const TOY_CONFIG: &str = "toy.cfg";

fn out_dir(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn require_file(path: &Path, what: &str) -> Outcome {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{what} {} does not exist", path.display())))
    }
}

fn require_dir(path: &Path, what: &str) -> Outcome {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{what} {} does not exist", path.display())))
    }
}

fn run_config(args: &ConfigArgs) -> Outcome<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            require_file(path, "config file")?;
            RunConfig::from_file(path)?
        }
        None => RunConfig::default(),
    };
    for assignment in &args.overrides {
        cfg.apply_override(assignment)?;
    }
    Ok(cfg)
}

fn dataset_root(settings: &s2p_core::config::Settings) -> Outcome<PathBuf> {
    let root = settings.require_root()?.to_path_buf();
    require_dir(&root, "dataset root")?;
    Ok(root)
}

pub fn train(common: &Common, args: &ConfigArgs, resume: Option<PathBuf>, force: bool) -> Outcome {
    let mut cfg = run_config(args)?;
    if let Some(seed) = common.seed {
        cfg.set("train.seed", &seed.to_string())?;
    }
    let settings = cfg.settings()?;
    let root = dataset_root(&settings)?;
    if let Some(path) = &resume {
        require_file(path, "checkpoint")?;
    }
    let vocabulary = settings.vocabulary()?;
    let dataset = load_dataset_manifest(&root, &vocabulary)?;
    let out = out_dir(common, "runs/train");
    manifest::write(&out, "train", settings.train.seed, json!(cfg.effective()))?;
    let opts = RunOptions {
        out_dir: out,
        resume,
        flip: settings.flip,
        cache: settings.cache,
        force,
    };
    let summary = run_training(&dataset, settings.model, &settings.train, &opts, &Device::Cpu)?;
    log::info!("{} steps, {} epochs", summary.steps, summary.epochs_completed);
    match summary.last_checkpoint {
        Some(path) => println!("{}", path.display()),
        None => println!("no checkpoint written"),
    }
    Ok(())
}

pub fn train_judge(common: &Common, args: &JudgeArgs) -> Outcome {
    let cfg = run_config(&args.config)?;
    let settings = cfg.settings()?;
    let root = dataset_root(&settings)?;
    let vocabulary = settings.vocabulary()?;
    let dataset = load_dataset_manifest(&root, &vocabulary)?;
    let backbone: Backbone = args.backbone.parse()?;
    let judge_cfg = JudgeConfig {
        backbone,
        base_width: args.width,
        image_size: settings.train.image_size,
        epochs: args.epochs,
        batch_size: args.batch_size,
        lr: args.lr,
        seed: common.seed.unwrap_or(0),
        val_fraction: args.val_fraction,
    };
    let out = out_dir(common, "runs/judge");
    manifest::write(
        &out,
        "train-judge",
        judge_cfg.seed,
        json!({ "data": cfg.effective(), "judge": judge_cfg }),
    )?;
    let (judge, report) = eval::train_judge(&dataset, &judge_cfg, &Device::Cpu)?;
    let path = out.join("judge.bin");
    judge.save(&path)?;
    std::fs::write(out.join("judge_report.json"), serde_json::to_string_pretty(&report)?)?;
    let val = report.val_accuracy.map_or("-".to_string(), |a| format!("{a:.3}"));
    println!("train accuracy {:.3}, validation accuracy {val}", report.train_accuracy);
    println!("{}", path.display());
    Ok(())
}

fn parse_splits(text: &str) -> Outcome<Vec<Split>> {
    let mut splits = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let split: Split = part.parse()?;
        if !splits.contains(&split) {
            splits.push(split);
        }
    }
    if splits.is_empty() {
        return Err(Failure::Usage("--splits names no split".into()));
    }
    Ok(splits)
}

pub fn evaluate(common: &Common, checkpoint: &Path, judge: &Path, data: &Path, splits: &str) -> Outcome {
    require_file(checkpoint, "checkpoint")?;
    require_file(judge, "judge")?;
    require_dir(data, "dataset root")?;
    let splits = parse_splits(splits)?;
    let device = Device::Cpu;
    let bundle = load_checkpoint(checkpoint, &device, None, false)?;
    let judge = Judge::load(judge, &device)?;
    judge.check_vocabulary(&bundle.vocabulary)?;
    let dataset = load_dataset_manifest(data, &bundle.vocabulary)?;
    let nets = bundle.networks(&device)?;

    let out = out_dir(common, "runs/eval");
    manifest::write(
        &out,
        "evaluate",
        common.seed.unwrap_or(0),
        json!({
            "checkpoint": checkpoint,
            "data": data,
            "splits": splits,
            "image_size": bundle.train.image_size,
        }),
    )?;
    let report = eval::evaluate(
        &nets.g_p,
        &bundle.vocabulary,
        &dataset,
        &judge,
        &splits,
        bundle.train.image_size,
        Some(&out.join("generated")),
        &device,
    )?;
    let table = report.to_table();
    std::fs::write(out.join("metrics.json"), serde_json::to_string_pretty(&report)?)?;
    std::fs::write(out.join("metrics.txt"), &table)?;
    print!("{table}");
    Ok(())
}

/// Literal paths pass through; patterns expand in sorted order.
fn expand_inputs(inputs: &[String]) -> Outcome<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for input in inputs {
        if !input.contains(['*', '?', '[']) {
            paths.push(PathBuf::from(input));
            continue;
        }
        let pattern =
            glob::glob(input).map_err(|e| Failure::Usage(format!("bad pattern `{input}`: {e}")))?;
        let mut matched: Vec<PathBuf> = pattern.filter_map(|p| p.ok()).collect();
        if matched.is_empty() {
            log::warn!("`{input}` matches no file");
        }
        matched.sort();
        paths.extend(matched);
    }
    if paths.is_empty() {
        return Err(Failure::Usage("no input files".into()));
    }
    Ok(paths)
}

fn check_size(size: Option<usize>) -> Outcome {
    match size {
        Some(s) if s == 0 || s > MAX_OUTPUT_SIZE => Err(Failure::Usage(format!(
            "--size must be in 1..={MAX_OUTPUT_SIZE}, got {s}"
        ))),
        _ => Ok(()),
    }
}

/// Output name from the input stem, suffixed when two inputs share a stem.
fn output_name(path: &Path, used: &mut BTreeMap<String, usize>) -> String {
    let stem = path.file_stem().map_or("image".into(), |s| s.to_string_lossy().into_owned());
    let n = used.entry(stem.clone()).or_insert(0);
    *n += 1;
    if *n == 1 {
        format!("{stem}.png")
    } else {
        format!("{stem}_{n}.png")
    }
}

/// Runs `convert` on every input, skipping unreadable ones. Succeeds when at
/// least one output was written.
fn convert_all(
    inputs: &[PathBuf],
    out: &Path,
    convert: impl Fn(&[u8]) -> Result<Vec<u8>, ApiError>,
) -> Outcome<usize> {
    std::fs::create_dir_all(out)?;
    let mut used = BTreeMap::new();
    let mut written = 0;
    for path in inputs {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                continue;
            }
        };
        match convert(&bytes) {
            Ok(png) => {
                let target = out.join(output_name(path, &mut used));
                std::fs::write(&target, png)?;
                println!("{}", target.display());
                written += 1;
            }
            Err(ApiError::BadImage(reason)) => log::warn!("skipping {}: {reason}", path.display()),
            Err(e) => return Err(Failure::Runtime(e.to_string())),
        }
    }
    if written == 0 {
        return Err(Failure::Runtime("no input could be processed".into()));
    }
    Ok(written)
}

fn load_snapshot(checkpoint: &Path) -> Outcome<Snapshot> {
    require_file(checkpoint, "checkpoint")?;
    Ok(Snapshot::load(checkpoint)?)
}

pub fn synthesize(
    common: &Common,
    checkpoint: &Path,
    label: &str,
    size: Option<usize>,
    inputs: &[String],
) -> Outcome {
    check_size(size)?;
    let snap = load_snapshot(checkpoint)?;
    let index = snap.label_index(label).map_err(|_| {
        Failure::Usage(format!(
            "unknown label `{label}`; vocabulary: {}",
            snap.vocabulary.names().join(", ")
        ))
    })?;
    let paths = expand_inputs(inputs)?;
    let out = out_dir(common, "runs/synthesize");
    manifest::write(
        &out,
        "synthesize",
        common.seed.unwrap_or(0),
        json!({
            "checkpoint": checkpoint,
            "fingerprint": snap.fingerprint,
            "label": label,
            "size": size.unwrap_or(snap.image_size),
            "inputs": paths,
        }),
    )?;
    let n = convert_all(&paths, &out, |png| snap.synthesize(png, index, size))?;
    log::info!("wrote {n} of {} photos", paths.len());
    Ok(())
}

pub fn extract_sketch(common: &Common, checkpoint: &Path, size: Option<usize>, inputs: &[String]) -> Outcome {
    check_size(size)?;
    let snap = load_snapshot(checkpoint)?;
    let paths = expand_inputs(inputs)?;
    let out = out_dir(common, "runs/sketches");
    manifest::write(
        &out,
        "extract-sketch",
        common.seed.unwrap_or(0),
        json!({
            "checkpoint": checkpoint,
            "fingerprint": snap.fingerprint,
            "size": size.unwrap_or(snap.image_size),
            "inputs": paths,
        }),
    )?;
    let n = convert_all(&paths, &out, |png| snap.extract_sketch(png, size))?;
    log::info!("wrote {n} of {} sketches", paths.len());
    Ok(())
}

pub fn serve(
    common: &Common,
    checkpoint: Option<PathBuf>,
    host: String,
    port: u16,
    styles: &[String],
    cors_origins: Vec<String>,
) -> Outcome {
    if let Some(path) = &checkpoint {
        require_file(path, "checkpoint")?;
    }
    let styles = styles
        .iter()
        .map(|s| s2p_service::parse_style(s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::Usage)?;
    for (_, path) in &styles {
        require_file(path, "style checkpoint")?;
    }
    // validate origins before binding
    let _ = s2p_service::cors_layer(&cors_origins).map_err(Failure::Usage)?;
    let config = ServeConfig {
        host,
        port,
        checkpoint,
        styles,
        cors_origins,
    };
    if let Some(out) = &common.out {
        manifest::write(
            out,
            "serve",
            common.seed.unwrap_or(0),
            json!({
                "host": config.host,
                "port": config.port,
                "checkpoint": config.checkpoint,
                "styles": config.styles,
                "cors_origins": config.cors_origins,
            }),
        )?;
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime
        .block_on(s2p_service::serve(config))
        .map_err(|e| Failure::Runtime(e.to_string()))
}

pub fn dump_pool(common: &Common, checkpoint: &Path) -> Outcome {
    require_file(checkpoint, "checkpoint")?;
    let bundle = load_checkpoint(checkpoint, &Device::Cpu, None, false)?;
    let out = out_dir(common, "runs/pool");
    manifest::write(
        &out,
        "dump-pool",
        common.seed.unwrap_or(0),
        json!({ "checkpoint": checkpoint, "step": bundle.step }),
    )?;
    let dir = out.join("pool");
    std::fs::create_dir_all(&dir)?;
    let mut rows = Vec::new();
    for (i, entry) in bundle.pool.iter().enumerate() {
        let images = tensor_to_images(&entry.sketches)?;
        for (j, (img, &label)) in images.iter().zip(&entry.labels).enumerate() {
            let class = bundle.vocabulary.name(label as usize).unwrap_or("?");
            let file = format!("{i:03}_{j}_{class}.png");
            save_png(img, &dir.join(&file))?;
            rows.push(json!({ "entry": i, "index": j, "label": label, "class": class, "file": file }));
        }
    }
    std::fs::write(dir.join("pool.json"), serde_json::to_string_pretty(&rows)?)?;
    println!("{} pooled batches, {} sketches in {}", bundle.pool.len(), rows.len(), dir.display());
    Ok(())
}

pub fn toy_data(common: &Common, size: u32) -> Outcome {
    let mut spec = ToyDatasetSpec::two_class(size);
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    let out = out_dir(common, "toy-data");
    write_toy_dataset(&out, &spec)?;
    let classes: Vec<_> = spec.classes.iter().map(|c| &c.name).collect();
    let open: Vec<_> = spec.classes.iter().filter(|c| !c.with_sketches).map(|c| c.name.as_str()).collect();
    let root = std::path::absolute(&out)?;
    std::fs::write(
        out.join(TOY_CONFIG),
        format!(
            "[data]\nroot = {}\nopen_domain = {}\nimage_size = {size}\n",
            root.display(),
            open.join(",")
        ),
    )?;
    manifest::write(
        &out,
        "toy-data",
        spec.seed,
        json!({ "size": size, "classes": classes, "photos_per_class": spec.photos_per_class }),
    )?;
    println!("{}", out.join(TOY_CONFIG).display());
    Ok(())
}
