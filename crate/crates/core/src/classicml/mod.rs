//! Traditional baselines — multinomial Naive Bayes, linear SVM and random
//! forest — with one classifier per aspect over unigram + bigram features.
//!
//! Content aspects use the 4-way label space {Absent, Pos, Neu, Neg} and
//! OTHERS the 2-way {Absent, Present}, exactly like the neural heads.

pub mod features;
pub mod forest;
pub mod nb;
pub mod svm;

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use features::{featurize, ngram_features, FeatureDictionary, SparseVector, Weighting};
pub use forest::{ForestConfig, RandomForest, Tree};
pub use nb::NaiveBayes;
pub use svm::{LinearSvm, SvmConfig};

use crate::corpus::{Aspect, Dataset};
use crate::embed::fnv1a;
use crate::error::{Error, Result};
use crate::models::bundle::{read_json, write_json, BundleMeta};
use crate::models::{Prediction, Predictor};
use crate::neuralcore::{gold_class, head_size};
use crate::textproc::analyze;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassicKind {
    NaiveBayes,
    LinearSvm,
    RandomForest,
}

impl ClassicKind {
    pub const ALL: [ClassicKind; 3] = [
        ClassicKind::NaiveBayes,
        ClassicKind::LinearSvm,
        ClassicKind::RandomForest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassicKind::NaiveBayes => "naive_bayes",
            ClassicKind::LinearSvm => "linear_svm",
            ClassicKind::RandomForest => "random_forest",
        }
    }

    /// Counts for Naive Bayes (multinomial over term counts), tf-idf otherwise.
    pub fn default_weighting(self) -> Weighting {
        match self {
            ClassicKind::NaiveBayes => Weighting::Counts,
            ClassicKind::LinearSvm | ClassicKind::RandomForest => Weighting::TfIdf,
        }
    }
}

impl fmt::Display for ClassicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassicKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassicKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown classic model {s:?} (expected naive_bayes, linear_svm or random_forest)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicConfig {
    pub kind: ClassicKind,
    pub seed: u64,
    pub weighting: Weighting,
    #[serde(default)]
    pub svm: SvmConfig,
    #[serde(default)]
    pub forest: ForestConfig,
}

impl ClassicConfig {
    pub fn new(kind: ClassicKind, seed: u64) -> ClassicConfig {
        ClassicConfig {
            kind,
            seed,
            weighting: kind.default_weighting(),
            svm: SvmConfig::default(),
            forest: ForestConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Head {
    Nb(NaiveBayes),
    Svm(LinearSvm),
    Rf(RandomForest),
}

#[derive(Clone, Debug)]
pub struct ClassicModel {
    config: ClassicConfig,
    dictionary: FeatureDictionary,
    heads: Vec<Head>,
    model_id: String,
}

pub fn train_classic(config: &ClassicConfig, train: &Dataset) -> Result<ClassicModel> {
    let gold = train.gold_labels()?;
    let (dictionary, xs) = featurize(train, config.weighting)?;
    let n_features = dictionary.len();
    let heads = Aspect::ALL
        .par_iter()
        .map(|&aspect| {
            let k = head_size(aspect);
            let ys: Vec<usize> = gold.iter().map(|g| gold_class(g, aspect)).collect();
            let missing: Vec<usize> = (0..k).filter(|c| !ys.contains(c)).collect();
            if !missing.is_empty() {
                log::warn!("{aspect}: classes {missing:?} never occur in training");
            }
            let seed = config.seed.wrapping_mul(31).wrapping_add(aspect.index() as u64);
            match config.kind {
                ClassicKind::NaiveBayes => Head::Nb(NaiveBayes::fit(&xs, &ys, k, n_features)),
                ClassicKind::LinearSvm => Head::Svm(LinearSvm::fit(&xs, &ys, k, n_features, &config.svm, seed)),
                ClassicKind::RandomForest => Head::Rf(RandomForest::fit(&xs, &ys, k, n_features, &config.forest, seed)),
            }
        })
        .collect();
    let mut model = ClassicModel {
        config: config.clone(),
        dictionary,
        heads,
        model_id: String::new(),
    };
    model.model_id = model.fingerprint();
    Ok(model)
}

fn one_hot_argmax(scores: &[f64]) -> Vec<f64> {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    let mut out = vec![0.0; scores.len()];
    out[best] = 1.0;
    out
}

impl ClassicModel {
    pub fn config(&self) -> &ClassicConfig {
        &self.config
    }

    pub fn kind(&self) -> ClassicKind {
        self.config.kind
    }

    pub fn dictionary(&self) -> &FeatureDictionary {
        &self.dictionary
    }

    /// Per-aspect class distributions: NB posteriors, forest vote shares,
    /// and a one-hot of the largest margin for the SVM.
    pub fn distributions(&self, x: &SparseVector) -> Vec<Vec<f64>> {
        self.heads
            .iter()
            .map(|h| match h {
                Head::Nb(nb) => nb.posterior(x),
                Head::Svm(svm) => one_hot_argmax(&svm.margins(x)),
                Head::Rf(rf) => rf.distribution(x),
            })
            .collect()
    }

    fn blobs(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = vec![("idf".to_string(), self.dictionary.idf_values().to_vec())];
        let as_f64 = |v: &[usize]| -> Vec<f64> {
            v.iter()
                .map(|&x| if x == forest::LEAF { -1.0 } else { x as f64 })
                .collect()
        };
        for (&aspect, head) in Aspect::ALL.iter().zip(&self.heads) {
            let a = aspect.name();
            match head {
                Head::Nb(nb) => {
                    out.push((format!("{a}.log_prior"), nb.log_prior.clone()));
                    out.push((format!("{a}.log_likelihood"), nb.log_likelihood.clone()));
                }
                Head::Svm(svm) => {
                    for (c, w) in svm.weights.iter().enumerate() {
                        if let Some(w) = w {
                            out.push((format!("{a}.w{c}"), w.clone()));
                        }
                    }
                }
                Head::Rf(rf) => {
                    for (t, tree) in rf.trees.iter().enumerate() {
                        out.push((format!("{a}.t{t}.feature"), as_f64(&tree.feature)));
                        out.push((format!("{a}.t{t}.threshold"), tree.threshold.clone()));
                        out.push((format!("{a}.t{t}.left"), as_f64(&tree.left)));
                        out.push((format!("{a}.t{t}.right"), as_f64(&tree.right)));
                        out.push((format!("{a}.t{t}.value"), tree.value.clone()));
                    }
                }
            }
        }
        out
    }

    fn fingerprint(&self) -> String {
        let mut bytes = Vec::new();
        for (name, values) in self.blobs() {
            bytes.extend(name.as_bytes());
            for v in values {
                bytes.extend(v.to_le_bytes());
            }
        }
        format!(
            "{}-s{}-{:08x}",
            self.config.kind,
            self.config.seed,
            fnv1a(&bytes) as u32
        )
    }

    /// Writes `model.json`, `weights.bin` (f64 little-endian blobs in the
    /// order listed in `model.json`) and `dictionary.tsv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let blobs = self.blobs();
        let meta = BundleMeta {
            kind: "classic".into(),
            model_id: self.model_id.clone(),
            body: ClassicMeta {
                config: self.config.clone(),
                n_features: self.dictionary.len(),
                blobs: blobs
                    .iter()
                    .map(|(name, v)| BlobSpec {
                        name: name.clone(),
                        len: v.len(),
                    })
                    .collect(),
            },
        };
        write_json(&dir.join("model.json"), &meta)?;
        let path = dir.join("weights.bin");
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for (_, values) in &blobs {
            let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
            w.write_all(&bytes).map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        self.dictionary.save(&dir.join("dictionary.tsv"))
    }

    pub fn load(dir: &Path) -> Result<ClassicModel> {
        let meta: BundleMeta<ClassicMeta> = read_json(&dir.join("model.json"))?;
        if meta.kind != "classic" {
            return Err(Error::Format(format!("{} holds a {} model", dir.display(), meta.kind)));
        }
        let path = dir.join("weights.bin");
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let total: usize = meta.body.blobs.iter().map(|b| b.len).sum();
        if bytes.len() != 8 * total {
            return Err(Error::Format(format!(
                "{} holds {} bytes, the descriptor lists {}",
                path.display(),
                bytes.len(),
                8 * total
            )));
        }
        let mut values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let mut blobs: HashMap<String, Vec<f64>> = HashMap::new();
        for spec in &meta.body.blobs {
            blobs.insert(spec.name.clone(), values.by_ref().take(spec.len).collect());
        }
        let mut take = |name: &str| -> Result<Vec<f64>> {
            blobs
                .remove(name)
                .ok_or_else(|| Error::Format(format!("missing parameter blob {name}")))
        };
        let config = meta.body.config;
        let n_features = meta.body.n_features;
        let dictionary = FeatureDictionary::load(&dir.join("dictionary.tsv"), config.weighting, take("idf")?)?;
        if dictionary.len() != n_features {
            return Err(Error::Format("dictionary size does not match the model".into()));
        }
        let as_usize = |v: Vec<f64>| -> Vec<usize> {
            v.into_iter()
                .map(|x| if x < 0.0 { forest::LEAF } else { x as usize })
                .collect()
        };
        let mut heads = Vec::with_capacity(11);
        for &aspect in &Aspect::ALL {
            let a = aspect.name();
            let k = head_size(aspect);
            let head = match config.kind {
                ClassicKind::NaiveBayes => Head::Nb(NaiveBayes {
                    n_classes: k,
                    n_features,
                    log_prior: take(&format!("{a}.log_prior"))?,
                    log_likelihood: take(&format!("{a}.log_likelihood"))?,
                }),
                ClassicKind::LinearSvm => Head::Svm(LinearSvm {
                    n_features,
                    weights: (0..k).map(|c| take(&format!("{a}.w{c}")).ok()).collect(),
                }),
                ClassicKind::RandomForest => {
                    let mut trees = Vec::new();
                    for t in 0..config.forest.n_trees {
                        trees.push(Tree {
                            feature: as_usize(take(&format!("{a}.t{t}.feature"))?),
                            threshold: take(&format!("{a}.t{t}.threshold"))?,
                            left: as_usize(take(&format!("{a}.t{t}.left"))?),
                            right: as_usize(take(&format!("{a}.t{t}.right"))?),
                            value: take(&format!("{a}.t{t}.value"))?,
                        });
                    }
                    Head::Rf(RandomForest { n_classes: k, trees })
                }
            };
            heads.push(head);
        }
        let mut model = ClassicModel {
            config,
            dictionary,
            heads,
            model_id: String::new(),
        };
        model.model_id = model.fingerprint();
        if model.model_id != meta.model_id {
            return Err(Error::Format(format!(
                "bundle id {} does not match its parameters ({})",
                meta.model_id, model.model_id
            )));
        }
        Ok(model)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BlobSpec {
    name: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassicMeta {
    config: ClassicConfig,
    n_features: usize,
    blobs: Vec<BlobSpec>,
}

impl Predictor for ClassicModel {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn predict(&self, text: &str) -> Prediction {
        let tokens = analyze(text);
        if tokens.is_empty() {
            return Prediction::degenerate();
        }
        let x = self.dictionary.transform_tokens(&tokens);
        let heads = self
            .distributions(&x)
            .into_iter()
            .map(|h| h.into_iter().map(|v| v as f32).collect())
            .collect();
        Prediction::from_heads(heads)
    }
}
