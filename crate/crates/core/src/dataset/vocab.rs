use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered class labels plus the set of open-domain classes (no training sketches).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVocabulary", into = "RawVocabulary")]
pub struct ClassVocabulary {
    names: Vec<String>,
    open_domain: BTreeSet<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawVocabulary {
    names: Vec<String>,
    open_domain: Vec<usize>,
}

impl TryFrom<RawVocabulary> for ClassVocabulary {
    type Error = Error;

    fn try_from(raw: RawVocabulary) -> Result<Self> {
        ClassVocabulary::with_open_indices(raw.names, raw.open_domain)
    }
}

impl From<ClassVocabulary> for RawVocabulary {
    fn from(v: ClassVocabulary) -> Self {
        RawVocabulary {
            names: v.names,
            open_domain: v.open_domain.into_iter().collect(),
        }
    }
}

impl ClassVocabulary {
    /// Builds a vocabulary from class names and the names of the open-domain classes.
    pub fn new<S: AsRef<str>>(names: Vec<String>, open_domain: &[S]) -> Result<Self> {
        let mut indices = Vec::with_capacity(open_domain.len());
        for name in open_domain {
            let name = name.as_ref();
            let idx = names.iter().position(|n| n == name).ok_or_else(|| {
                Error::VocabularyMismatch(format!(
                    "open-domain class `{name}` is not in the vocabulary {names:?}"
                ))
            })?;
            indices.push(idx);
        }
        Self::with_open_indices(names, indices)
    }

    pub fn with_open_indices(names: Vec<String>, open_domain: Vec<usize>) -> Result<Self> {
        let mut seen = HashSet::new();
        for name in &names {
            if name.trim().is_empty() {
                return Err(Error::Config("class names must be non-empty".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("duplicate class name `{name}`")));
            }
        }
        let open: BTreeSet<usize> = open_domain.into_iter().collect();
        if let Some(&bad) = open.iter().find(|&&i| i >= names.len()) {
            return Err(Error::Config(format!(
                "open-domain index {bad} out of range for {} classes",
                names.len()
            )));
        }
        Ok(Self {
            names,
            open_domain: open,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_open(&self, index: usize) -> bool {
        self.open_domain.contains(&index)
    }

    pub fn open_domain(&self) -> &BTreeSet<usize> {
        &self.open_domain
    }

    pub fn in_domain(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.names.len()).filter(|i| !self.open_domain.contains(i))
    }

    pub fn n_open(&self) -> usize {
        self.open_domain.len()
    }

    pub fn n_in(&self) -> usize {
        self.names.len() - self.open_domain.len()
    }

    /// Training needs at least one class with real sketches.
    pub fn check_trainable(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Config("vocabulary is empty".into()));
        }
        if self.n_in() == 0 {
            return Err(Error::Config(
                "every class is open-domain; at least one in-domain class is required".into(),
            ));
        }
        Ok(())
    }

    /// Same vocabulary with a different open-domain set.
    pub fn with_open_domain<S: AsRef<str>>(&self, open_domain: &[S]) -> Result<Self> {
        Self::new(self.names.clone(), open_domain)
    }

    pub fn check_label(&self, label: u32) -> Result<()> {
        if (label as usize) < self.len() {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "label {label} out of range for {} classes",
                self.len()
            )))
        }
    }
}
