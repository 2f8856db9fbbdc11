use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use candle_core::Device;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_preprocessed, ClassVocabulary, DatasetManifest, Domain, ImageArray};
use crate::error::{Error, Result};
use crate::models::Generator;

use super::fid::compute_fid;
use super::generate::generate_test_set;
use super::judge::Judge;
use super::{extract_features, FeatureExtractor};

const EVAL_BATCH: usize = 16;

/// Fraction of predictions equal to their label.
pub fn compute_accuracy(predicted: &[u32], labels: &[u32]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Argument(
            "accuracy of an empty set is undefined".into(),
        ));
    }
    if predicted.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Judge accuracy on images conditioned on `labels` from a generator with `vocabulary`.
pub fn judge_accuracy(
    judge: &Judge,
    vocabulary: &ClassVocabulary,
    images: &[ImageArray],
    labels: &[u32],
) -> Result<f64> {
    judge.check_vocabulary(vocabulary)?;
    if images.is_empty() {
        return Err(Error::Argument(
            "accuracy of an empty set is undefined".into(),
        ));
    }
    compute_accuracy(&judge.predict_arrays(images, EVAL_BATCH)?, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Full,
    In,
    Open,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Full, Split::In, Split::Open];

    pub fn contains(self, vocabulary: &ClassVocabulary, label: u32) -> bool {
        match self {
            Split::Full => true,
            Split::In => !vocabulary.is_open(label as usize),
            Split::Open => vocabulary.is_open(label as usize),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Full => "full",
            Split::In => "in",
            Split::Open => "open",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Split::Full),
            "in" => Ok(Split::In),
            "open" => Ok(Split::Open),
            other => Err(Error::Config(format!(
                "unknown split `{other}` (expected full, in or open)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub n_generated: usize,
    pub n_reference: usize,
    /// `None` when either set has fewer than two images.
    pub fid: Option<f64>,
    /// `None` for an empty split.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub splits: BTreeMap<Split, SplitMetrics>,
    pub n_skipped: usize,
}

impl MetricsReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<6} {:>10} {:>8} {:>6} {:>6}",
            "split", "FID", "Acc", "n_gen", "n_ref"
        );
        for (split, m) in &self.splits {
            let fid = m.fid.map_or("-".to_string(), |v| format!("{v:.3}"));
            let acc = m.accuracy.map_or("-".to_string(), |v| format!("{v:.3}"));
            let _ = writeln!(
                out,
                "{:<6} {fid:>10} {acc:>8} {:>6} {:>6}",
                split.name(),
                m.n_generated,
                m.n_reference
            );
        }
        out
    }
}

/// Synthesizes a photo for every test sketch and scores each requested split
/// against the real photos of the same classes.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    g_p: &Generator,
    vocabulary: &ClassVocabulary,
    manifest: &DatasetManifest,
    judge: &Judge,
    splits: &[Split],
    image_size: usize,
    out_dir: Option<&Path>,
    device: &Device,
) -> Result<MetricsReport> {
    judge.check_vocabulary(vocabulary)?;
    if manifest.vocabulary.names() != vocabulary.names() {
        return Err(Error::VocabularyMismatch(format!(
            "dataset classes {:?} differ from checkpoint classes {:?}",
            manifest.vocabulary.names(),
            vocabulary.names()
        )));
    }
    if judge.image_size != image_size {
        return Err(Error::Config(format!(
            "judge expects {0}x{0} images but the generator produces {1}x{1}",
            judge.image_size, image_size
        )));
    }
    let wanted = |label: u32| splits.iter().any(|s| s.contains(vocabulary, label));
    let inputs: Vec<_> = manifest
        .test_sketch_items()
        .into_iter()
        .filter(|(_, l)| wanted(*l))
        .collect();
    let generated = generate_test_set(g_p, vocabulary, &inputs, image_size, out_dir, device)?;
    let gen_labels: Vec<u32> = generated.entries.iter().map(|e| e.label).collect();

    let mut ref_images = Vec::new();
    let mut ref_labels = Vec::new();
    for (path, label) in manifest.photo_items() {
        if wanted(label) {
            ref_images.push(load_preprocessed(&path, image_size, Domain::Photo)?);
            ref_labels.push(label);
        }
    }

    let predictions = if generated.images.is_empty() {
        Vec::new()
    } else {
        judge.predict_arrays(&generated.images, EVAL_BATCH)?
    };
    let gen_feats = extract_features(
        judge as &dyn FeatureExtractor,
        &generated.images,
        EVAL_BATCH,
        device,
    )?;
    let ref_feats = extract_features(
        judge as &dyn FeatureExtractor,
        &ref_images,
        EVAL_BATCH,
        device,
    )?;

    let mut report = MetricsReport {
        splits: BTreeMap::new(),
        n_skipped: generated.skipped.len(),
    };
    for &split in splits {
        let gi: Vec<usize> = (0..gen_labels.len())
            .filter(|&i| split.contains(vocabulary, gen_labels[i]))
            .collect();
        let ri: Vec<usize> = (0..ref_labels.len())
            .filter(|&i| split.contains(vocabulary, ref_labels[i]))
            .collect();
        let accuracy = if gi.is_empty() {
            None
        } else {
            let p: Vec<u32> = gi.iter().map(|&i| predictions[i]).collect();
            let l: Vec<u32> = gi.iter().map(|&i| gen_labels[i]).collect();
            Some(compute_accuracy(&p, &l)?)
        };
        let fid = if gi.len() >= 2 && ri.len() >= 2 {
            let g: Vec<Vec<f64>> = gi.iter().map(|&i| gen_feats[i].clone()).collect();
            let r: Vec<Vec<f64>> = ri.iter().map(|&i| ref_feats[i].clone()).collect();
            Some(compute_fid(&g, &r)?)
        } else {
            None
        };
        report.splits.insert(
            split,
            SplitMetrics {
                n_generated: gi.len(),
                n_reference: ri.len(),
                fid,
                accuracy,
            },
        );
    }
    Ok(report)
}

/// One embedding table row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub features: Vec<f64>,
    pub label: u32,
    pub tag: String,
}

/// CSV with columns `f0..f{d-1},label,tag`.
pub fn export_embeddings(rows: &[EmbeddingRow], path: &Path) -> Result<()> {
    let d = rows.first().map_or(0, |r| r.features.len());
    if rows.iter().any(|r| r.features.len() != d) {
        return Err(Error::Shape("embedding rows differ in length".into()));
    }
    let mut out = String::new();
    let header: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
    let _ = writeln!(out, "{},label,tag", header.join(","));
    for r in rows {
        if r.tag.contains([',', '"', '\n']) {
            return Err(Error::Argument(format!(
                "tag `{}` must not contain separators",
                r.tag
            )));
        }
        let feats: Vec<String> = r.features.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{},{},{}", feats.join(","), r.label, r.tag);
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
