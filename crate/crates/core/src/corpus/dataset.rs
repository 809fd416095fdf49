use std::collections::HashSet;
use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::label::{Aspect, AspectState, LabelSet, Polarity};
use crate::error::{Error, Result};
use crate::textproc;

/// Comments longer than this many tokens are removed by [`clean_corpus`].
pub const MAX_COMMENT_TOKENS: usize = 250;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub index: u64,
    pub text: String,
    pub n_star: u8,
    pub date_time: Option<NaiveDateTime>,
    pub product: String,
    pub labels: Option<LabelSet>,
}

/// Unvalidated string fields of one comment, as they arrive from a CSV row
/// or an ingestion request.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RawComment {
    pub index: String,
    #[serde(alias = "text")]
    pub comment: String,
    pub n_star: String,
    #[serde(default)]
    pub date_time: String,
    #[serde(default)]
    pub product: String,
    #[serde(default)]
    pub label: String,
}

impl RawComment {
    /// Validates the fields. The second element reports a timestamp that
    /// could not be parsed and was dropped.
    pub fn parse(&self) -> std::result::Result<(Comment, Option<String>), String> {
        let index: u64 = self
            .index
            .trim()
            .parse()
            .map_err(|_| format!("index `{}` is not a non-negative integer", self.index))?;
        let n_star = parse_star(&self.n_star)?;
        let labels = if self.label.trim().is_empty() {
            None
        } else {
            Some(LabelSet::parse(&self.label).map_err(|e| e.to_string())?)
        };
        let mut warning = None;
        let date_time = if self.date_time.trim().is_empty() {
            None
        } else {
            match parse_timestamp(&self.date_time) {
                Some(ts) => Some(ts),
                None => {
                    warning = Some(format!("unparseable timestamp `{}`", self.date_time));
                    None
                }
            }
        };
        Ok((
            Comment {
                index,
                text: self.comment.clone(),
                n_star,
                date_time,
                product: self.product.trim().to_string(),
                labels,
            },
            warning,
        ))
    }
}

fn parse_star(s: &str) -> std::result::Result<u8, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("n_star `{s}` is not a number"))?;
    if v.fract() != 0.0 || !(1.0..=5.0).contains(&v) {
        return Err(format!("n_star `{s}` outside 1..5"));
    }
    Ok(v as u8)
}

/// ISO-8601 first, then `dd/mm/yyyy hh:mm`.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
        "%d/%m/%Y %H:%M",
        "%d/%m/%Y %H:%M:%S",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    ts.format("%Y-%m-%dT%H:%M:%S%.f").to_string()
}

/// An ordered, index-unique collection of comments.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    name: String,
    comments: Vec<Comment>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, comments: Vec<Comment>) -> Result<Dataset> {
        let mut seen = HashSet::with_capacity(comments.len());
        for c in &comments {
            if !seen.insert(c.index) {
                return Err(Error::InvalidInput(format!("duplicate comment index {}", c.index)));
            }
        }
        Ok(Dataset {
            name: name.into(),
            comments,
        })
    }

    pub fn empty(name: impl Into<String>) -> Dataset {
        Dataset {
            name: name.into(),
            comments: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn comments(&self) -> &[Comment] {
        &self.comments
    }

    pub fn len(&self) -> usize {
        self.comments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comments.is_empty()
    }

    /// Gold label sets; fails on the first unlabeled comment.
    pub fn gold_labels(&self) -> Result<Vec<LabelSet>> {
        self.comments
            .iter()
            .map(|c| {
                c.labels
                    .ok_or_else(|| Error::InvalidInput(format!("comment {} is unlabeled", c.index)))
            })
            .collect()
    }

    pub fn into_comments(self) -> Vec<Comment> {
        self.comments
    }
}

/// Column names used by [`load_csv`]. Extra columns in the file are ignored.
#[derive(Clone, Debug)]
pub struct CsvSchema {
    pub index: String,
    pub comment: String,
    pub n_star: String,
    pub date_time: String,
    pub label: String,
    /// Optional; comments default to the dataset name when the column is missing.
    pub product: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            index: "index".into(),
            comment: "comment".into(),
            n_star: "n_star".into(),
            date_time: "date_time".into(),
            label: "label".into(),
            product: "product".into(),
        }
    }
}

pub(crate) struct CsvColumns {
    pub index: usize,
    pub comment: usize,
    pub n_star: usize,
    pub date_time: usize,
    pub label: usize,
    pub product: Option<usize>,
}

impl CsvSchema {
    pub(crate) fn resolve(&self, headers: &csv::StringRecord) -> Result<CsvColumns> {
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim().trim_start_matches('\u{feff}') == name)
        };
        let need = |name: &str| {
            find(name).ok_or_else(|| Error::MalformedRow {
                row: 1,
                reason: format!("header is missing column `{name}`"),
            })
        };
        Ok(CsvColumns {
            index: need(&self.index)?,
            comment: need(&self.comment)?,
            n_star: need(&self.n_star)?,
            date_time: need(&self.date_time)?,
            label: need(&self.label)?,
            product: find(&self.product),
        })
    }
}

pub(crate) fn raw_from_record(rec: &csv::StringRecord, cols: &CsvColumns, default_product: &str) -> RawComment {
    let get = |i: usize| rec.get(i).unwrap_or("").to_string();
    RawComment {
        index: get(cols.index),
        comment: get(cols.comment),
        n_star: get(cols.n_star),
        date_time: get(cols.date_time),
        product: cols
            .product
            .map(get)
            .filter(|p| !p.trim().is_empty())
            .unwrap_or_else(|| default_product.to_string()),
        label: get(cols.label),
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

/// Reads a UTF-8 corpus CSV, preserving row order.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = dataset_name(path);
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let cols = schema.resolve(&headers)?;
    let mut comments = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        let raw = raw_from_record(&rec, &cols, &name);
        let (comment, warning) = raw.parse().map_err(|reason| Error::MalformedRow { row, reason })?;
        if let Some(w) = warning {
            log::warn!("{}: row {row}: {w}; timestamp set to null", path.display());
        }
        if !seen.insert(comment.index) {
            return Err(Error::MalformedRow {
                row,
                reason: format!("duplicate index {}", comment.index),
            });
        }
        comments.push(comment);
    }
    Ok(Dataset { name, comments })
}

/// Writes the corpus CSV layout read by [`load_csv`], plus a `product` column.
pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["index", "comment", "n_star", "date_time", "label", "product"])?;
    for c in &ds.comments {
        w.write_record([
            c.index.to_string(),
            c.text.clone(),
            c.n_star.to_string(),
            c.date_time.as_ref().map(format_timestamp).unwrap_or_default(),
            c.labels.map(|l| l.to_label_string()).unwrap_or_default(),
            c.product.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rejection {
    pub index: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RejectionLog {
    pub entries: Vec<Rejection>,
}

impl RejectionLog {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// `index<TAB>reason` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.entries {
            out.push_str(&format!("{}\t{}\n", r.index, r.reason));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_text().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Reads an exclusion list: one comment index per line, `#` comments allowed.
/// Lines may also be rejection-log lines (`index<TAB>reason`).
pub fn load_exclusions(path: &Path) -> Result<HashSet<u64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.split('\t').next().unwrap_or("").trim();
        if field.is_empty() || field.starts_with('#') {
            continue;
        }
        let idx = field.parse().map_err(|_| Error::MalformedLine {
            line: i + 1,
            reason: format!("`{field}` is not a comment index"),
        })?;
        out.insert(idx);
    }
    Ok(out)
}

/// Drops comments longer than [`MAX_COMMENT_TOKENS`] tokens.
pub fn clean_corpus(ds: &Dataset) -> (Dataset, RejectionLog) {
    clean_corpus_with_exclusions(ds, &HashSet::new())
}

/// As [`clean_corpus`], additionally dropping manually excluded indices.
pub fn clean_corpus_with_exclusions(ds: &Dataset, excluded: &HashSet<u64>) -> (Dataset, RejectionLog) {
    let mut log = RejectionLog::default();
    let mut kept = Vec::with_capacity(ds.len());
    for c in &ds.comments {
        if excluded.contains(&c.index) {
            log.entries.push(Rejection {
                index: c.index,
                reason: "excluded".into(),
            });
        } else if textproc::analyze(&c.text).len() > MAX_COMMENT_TOKENS {
            log.entries.push(Rejection {
                index: c.index,
                reason: "length".into(),
            });
        } else {
            kept.push(c.clone());
        }
    }
    (
        Dataset {
            name: ds.name.clone(),
            comments: kept,
        },
        log,
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            dev: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    /// Dev and test sizes are floored; train takes the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // the epsilon keeps e.g. 0.1 * 10 from flooring to 0.99999
        let dev = (self.dev * n as f64 + 1e-9).floor() as usize;
        let test = (self.test * n as f64 + 1e-9).floor() as usize;
        (n - dev - test, dev, test)
    }
}

pub struct Split {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
}

/// Seeded uniform shuffle into train/dev/test. Each part keeps the input order.
pub fn split_dataset(ds: &Dataset, ratios: SplitRatios, seed: u64) -> Result<Split> {
    let parts = [ratios.train, ratios.dev, ratios.test];
    if parts.iter().any(|r| !(0.0..=1.0).contains(r)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "split ratios {parts:?} must be in [0,1] and sum to 1"
        )));
    }
    let n = ds.len();
    if n < 10 {
        return Err(Error::InvalidInput(format!(
            "cannot split {n} comments; at least 10 are needed"
        )));
    }
    let (_, n_dev, n_test) = ratios.sizes(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut assign = vec![0u8; n];
    for &pos in &order[..n_dev] {
        assign[pos] = 1;
    }
    for &pos in &order[n_dev..n_dev + n_test] {
        assign[pos] = 2;
    }
    let mut buckets: [Vec<Comment>; 3] = Default::default();
    for (c, &a) in ds.comments.iter().zip(&assign) {
        buckets[a as usize].push(c.clone());
    }
    let [train, dev, test] = buckets;
    Ok(Split {
        train: Dataset {
            name: format!("{}-train", ds.name),
            comments: train,
        },
        dev: Dataset {
            name: format!("{}-dev", ds.name),
            comments: dev,
        },
        test: Dataset {
            name: format!("{}-test", ds.name),
            comments: test,
        },
    })
}

/// Per-aspect label counts. Content aspects use columns Pos/Neu/Neg;
/// OTHERS only has `present`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectCounts {
    pub aspect: Aspect,
    pub pos: usize,
    pub neu: usize,
    pub neg: usize,
    pub present: usize,
}

impl AspectCounts {
    pub fn total(&self) -> usize {
        self.pos + self.neu + self.neg + self.present
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_comments: usize,
    pub n_tokens: usize,
    pub n_aspect_labels: usize,
    pub avg_aspects_per_comment: f64,
    pub avg_length: f64,
    pub per_aspect: Vec<AspectCounts>,
}

pub fn corpus_stats(ds: &Dataset) -> Result<CorpusStats> {
    let mut per_aspect: Vec<AspectCounts> = Aspect::ALL
        .iter()
        .map(|&aspect| AspectCounts {
            aspect,
            pos: 0,
            neu: 0,
            neg: 0,
            present: 0,
        })
        .collect();
    let mut n_tokens = 0;
    let mut n_labels = 0;
    for c in &ds.comments {
        let labels = c
            .labels
            .ok_or_else(|| Error::InvalidInput(format!("comment {} is unlabeled", c.index)))?;
        n_tokens += textproc::analyze(&c.text).len();
        for (aspect, state) in labels.iter() {
            let row = &mut per_aspect[aspect.index()];
            match state {
                AspectState::Polar(Polarity::Pos) => row.pos += 1,
                AspectState::Polar(Polarity::Neu) => row.neu += 1,
                AspectState::Polar(Polarity::Neg) => row.neg += 1,
                AspectState::Present => row.present += 1,
                AspectState::Absent => unreachable!("iter skips absent aspects"),
            }
            n_labels += 1;
        }
    }
    let n = ds.len();
    let ratio = |num: usize| if n == 0 { 0.0 } else { num as f64 / n as f64 };
    Ok(CorpusStats {
        n_comments: n,
        n_tokens,
        n_aspect_labels: n_labels,
        avg_aspects_per_comment: ratio(n_labels),
        avg_length: ratio(n_tokens),
        per_aspect,
    })
}
