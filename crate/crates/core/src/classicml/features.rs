//! Unigram + bigram bag-of-words features.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::textproc::analyze;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Counts,
    /// Raw count × smoothed idf `ln((1+N)/(1+df)) + 1`, then L2-normalized.
    TfIdf,
}

/// Sparse vector with strictly increasing feature ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVector {
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn get(&self, id: usize) -> f64 {
        self.entries
            .binary_search_by_key(&id, |e| e.0)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(j, v)| v * dense[j]).sum()
    }
}

/// Unigrams and space-joined bigrams of a token list, with repeats.
pub fn ngram_features(tokens: &[String]) -> Vec<String> {
    let mut out: Vec<String> = tokens.to_vec();
    out.extend(tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    out
}

/// Feature ids (sorted feature strings) and document frequencies learned
/// from a training set.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDictionary {
    ids: HashMap<String, usize>,
    features: Vec<String>,
    idf: Vec<f64>,
    weighting: Weighting,
}

impl FeatureDictionary {
    pub fn fit<S: AsRef<str>>(docs: &[S], weighting: Weighting) -> Result<FeatureDictionary> {
        if docs.is_empty() {
            return Err(Error::InvalidInput(
                "cannot build features from an empty training set".into(),
            ));
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in docs {
            let unique: BTreeSet<String> = ngram_features(&analyze(doc.as_ref())).into_iter().collect();
            for f in unique {
                *df.entry(f).or_default() += 1;
            }
        }
        let n = docs.len() as f64;
        let features: Vec<String> = df.keys().cloned().collect();
        let idf = df
            .values()
            .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        let ids = features.iter().enumerate().map(|(i, f)| (f.clone(), i)).collect();
        Ok(FeatureDictionary {
            ids,
            features,
            idf,
            weighting,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    pub fn id(&self, feature: &str) -> Option<usize> {
        self.ids.get(feature).copied()
    }

    pub fn feature(&self, id: usize) -> Option<&str> {
        self.features.get(id).map(String::as_str)
    }

    pub fn idf(&self, id: usize) -> f64 {
        self.idf[id]
    }

    /// Vector of `text`; features unseen in training are dropped.
    pub fn transform(&self, text: &str) -> SparseVector {
        self.transform_tokens(&analyze(text))
    }

    pub fn transform_tokens(&self, tokens: &[String]) -> SparseVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for f in ngram_features(tokens) {
            if let Some(&id) = self.ids.get(&f) {
                *counts.entry(id).or_default() += 1.0;
            }
        }
        let mut entries: Vec<(usize, f64)> = counts.into_iter().collect();
        if self.weighting == Weighting::TfIdf {
            for (id, v) in &mut entries {
                *v *= self.idf[*id];
            }
            let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                entries.iter_mut().for_each(|(_, v)| *v /= norm);
            }
        }
        SparseVector { entries }
    }

    /// Smoothed idf of every feature, in id order.
    pub fn idf_values(&self) -> &[f64] {
        &self.idf
    }

    /// `feature<TAB>id` lines in id order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for (i, f) in self.features.iter().enumerate() {
            text.push_str(&format!("{f}\t{i}\n"));
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Reads a dictionary file; `idf` comes from the model's parameter blobs.
    pub fn load(path: &Path, weighting: Weighting, idf: Vec<f64>) -> Result<FeatureDictionary> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut features = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let bad = |reason: &str| Error::MalformedLine {
                line: n + 1,
                reason: reason.to_string(),
            };
            let (f, id) = line.split_once('\t').ok_or_else(|| bad("expected feature<TAB>id"))?;
            if id.parse::<usize>().ok() != Some(n) {
                return Err(bad("ids must be consecutive from 0"));
            }
            features.push(f.to_string());
        }
        if idf.len() != features.len() {
            return Err(Error::Format(format!(
                "{} idf values for {} features",
                idf.len(),
                features.len()
            )));
        }
        let ids = features.iter().enumerate().map(|(i, f)| (f.clone(), i)).collect();
        Ok(FeatureDictionary {
            ids,
            features,
            idf,
            weighting,
        })
    }
}

/// Fits a dictionary on `train` and vectorizes its comments.
pub fn featurize(train: &Dataset, weighting: Weighting) -> Result<(FeatureDictionary, Vec<SparseVector>)> {
    let texts: Vec<&str> = train.comments().iter().map(|c| c.text.as_str()).collect();
    let dict = FeatureDictionary::fit(&texts, weighting)?;
    let vectors = texts.iter().map(|t| dict.transform(t)).collect();
    Ok((dict, vectors))
}
