use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::ImageReader;
use serde::{Deserialize, Serialize};

use super::vocab::ClassVocabulary;
use crate::error::{Error, Result};

pub const PHOTOS_DIR: &str = "photos";
pub const SKETCHES_DIR: &str = "sketches";
pub const TEST_SKETCHES_DIR: &str = "test_sketches";

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub photos: usize,
    pub training_sketches: usize,
    pub excluded_sketches: usize,
    pub test_sketches: usize,
}

/// File lists for an unpaired sketch/photo corpus.
///
/// Layout: `root/photos/<class>/*`, `root/sketches/<class>/*` and optionally
/// `root/test_sketches/<class>/*`. Sketches found for open-domain classes are
/// moved to `excluded_sketches` and never used for training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub vocabulary: ClassVocabulary,
    pub photos: Vec<Vec<PathBuf>>,
    pub training_sketches: Vec<Vec<PathBuf>>,
    pub excluded_sketches: Vec<Vec<PathBuf>>,
    pub test_sketches: Vec<Vec<PathBuf>>,
    /// Files that were present but could not be read as images.
    pub skipped: Vec<PathBuf>,
}

fn is_image_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false)
}

fn decodable(path: &Path) -> bool {
    ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .map(|r| r.into_dimensions().is_ok())
        .unwrap_or(false)
}

/// Sorted names of the sub-directories of `dir` (empty if `dir` is absent).
pub fn class_dirs(dir: &Path) -> Result<Vec<String>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let entries =
        fs::read_dir(dir).map_err(|e| Error::io(format!("reading {}", dir.display()), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(format!("reading {}", dir.display()), e))?;
        if entry.path().is_dir() {
            out.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    out.sort();
    Ok(out)
}

/// Sorted class names found under `root/photos`.
pub fn infer_class_names(root: &Path) -> Result<Vec<String>> {
    let photos = root.join(PHOTOS_DIR);
    if !photos.is_dir() {
        return Err(Error::Config(format!(
            "dataset root {} has no `{PHOTOS_DIR}` directory",
            root.display()
        )));
    }
    class_dirs(&photos)
}

/// Loads the per-class image lists of one split directory.
fn scan_split(
    dir: &Path,
    vocabulary: &ClassVocabulary,
    skipped: &mut Vec<PathBuf>,
) -> Result<Vec<Vec<PathBuf>>> {
    let mut lists = vec![Vec::new(); vocabulary.len()];
    for class in class_dirs(dir)? {
        let idx = vocabulary.index_of(&class).ok_or_else(|| {
            Error::VocabularyMismatch(format!(
                "directory {} names class `{class}` which is not in the vocabulary {:?}",
                dir.join(&class).display(),
                vocabulary.names()
            ))
        })?;
        let class_dir = dir.join(&class);
        let mut files: Vec<PathBuf> = fs::read_dir(&class_dir)
            .map_err(|e| Error::io(format!("reading {}", class_dir.display()), e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| is_image_file(p))
            .collect();
        files.sort();
        for f in files {
            if decodable(&f) {
                lists[idx].push(f);
            } else {
                log::warn!("skipping unreadable image {}", f.display());
                skipped.push(f);
            }
        }
    }
    Ok(lists)
}

pub fn load_dataset_manifest(root: &Path, vocabulary: &ClassVocabulary) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::Config(format!(
            "dataset root {} does not exist",
            root.display()
        )));
    }
    if !root.join(PHOTOS_DIR).is_dir() {
        return Err(Error::Config(format!(
            "dataset root {} has no `{PHOTOS_DIR}` directory",
            root.display()
        )));
    }
    let mut skipped = Vec::new();
    let photos = scan_split(&root.join(PHOTOS_DIR), vocabulary, &mut skipped)?;
    let all_sketches = scan_split(&root.join(SKETCHES_DIR), vocabulary, &mut skipped)?;
    let test_sketches = scan_split(&root.join(TEST_SKETCHES_DIR), vocabulary, &mut skipped)?;

    let mut training_sketches = Vec::with_capacity(vocabulary.len());
    let mut excluded_sketches = Vec::with_capacity(vocabulary.len());
    for (idx, list) in all_sketches.into_iter().enumerate() {
        if vocabulary.is_open(idx) {
            training_sketches.push(Vec::new());
            excluded_sketches.push(list);
        } else {
            training_sketches.push(list);
            excluded_sketches.push(Vec::new());
        }
    }
    let manifest = DatasetManifest {
        root: root.to_path_buf(),
        vocabulary: vocabulary.clone(),
        photos,
        training_sketches,
        excluded_sketches,
        test_sketches,
        skipped,
    };
    for (name, c) in manifest.counts() {
        log::info!(
            "class {name}: {} photos, {} training sketches, {} excluded, {} test sketches",
            c.photos,
            c.training_sketches,
            c.excluded_sketches,
            c.test_sketches
        );
    }
    for idx in manifest.vocabulary.in_domain() {
        if manifest.training_sketches[idx].is_empty() {
            log::warn!(
                "in-domain class {} has no training sketches; list it in data.open_domain",
                manifest.vocabulary.names()[idx]
            );
        }
    }
    Ok(manifest)
}

impl DatasetManifest {
    pub fn counts(&self) -> BTreeMap<String, ClassCounts> {
        self.vocabulary
            .names()
            .iter()
            .enumerate()
            .map(|(i, name)| {
                (
                    name.clone(),
                    ClassCounts {
                        photos: self.photos[i].len(),
                        training_sketches: self.training_sketches[i].len(),
                        excluded_sketches: self.excluded_sketches[i].len(),
                        test_sketches: self.test_sketches[i].len(),
                    },
                )
            })
            .collect()
    }

    pub fn n_photos(&self) -> usize {
        self.photos.iter().map(Vec::len).sum()
    }

    pub fn n_training_sketches(&self) -> usize {
        self.training_sketches.iter().map(Vec::len).sum()
    }

    /// `(path, label)` of every training photo, in class order.
    pub fn photo_items(&self) -> Vec<(PathBuf, u32)> {
        flatten(&self.photos)
    }

    pub fn training_sketch_items(&self) -> Vec<(PathBuf, u32)> {
        flatten(&self.training_sketches)
    }

    pub fn test_sketch_items(&self) -> Vec<(PathBuf, u32)> {
        flatten(&self.test_sketches)
    }

    /// JSON cache document: file lists plus per-class counts.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            #[serde(flatten)]
            manifest: &'a DatasetManifest,
            counts: BTreeMap<String, ClassCounts>,
        }
        Ok(serde_json::to_string_pretty(&Doc {
            manifest: self,
            counts: self.counts(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: DatasetManifest = serde_json::from_str(text)?;
        let n = manifest.vocabulary.len();
        for (field, lists) in [
            ("photos", &manifest.photos),
            ("training_sketches", &manifest.training_sketches),
            ("excluded_sketches", &manifest.excluded_sketches),
            ("test_sketches", &manifest.test_sketches),
        ] {
            if lists.len() != n {
                return Err(Error::integrity(
                    field,
                    format!("{} class lists for {n} classes", lists.len()),
                ));
            }
        }
        for idx in manifest.vocabulary.open_domain() {
            if !manifest.training_sketches[*idx].is_empty() {
                return Err(Error::integrity(
                    "training_sketches",
                    format!("open-domain class {idx} has training sketches"),
                ));
            }
        }
        Ok(manifest)
    }
}

fn flatten(lists: &[Vec<PathBuf>]) -> Vec<(PathBuf, u32)> {
    lists
        .iter()
        .enumerate()
        .flat_map(|(label, files)| files.iter().map(move |f| (f.clone(), label as u32)))
        .collect()
}
