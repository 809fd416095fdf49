//! Social-listening aggregation: predict every comment of a product and
//! summarize aspect proportions and per-aspect sentiment distributions.

use std::cmp::Reverse;
use std::collections::BTreeMap;

use chrono::{DateTime, NaiveDateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{format_timestamp, Aspect, Comment, LabelSet, Polarity};
use crate::embed::fnv1a;
use crate::error::{Error, Result};
use crate::models::Predictor;

/// Percentages over Pos/Neu/Neg, summing to 100.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentimentDistribution {
    #[serde(rename = "Pos")]
    pub pos: f64,
    #[serde(rename = "Neu")]
    pub neu: f64,
    #[serde(rename = "Neg")]
    pub neg: f64,
}

impl SentimentDistribution {
    /// `None` when there is nothing to distribute.
    pub fn from_counts(counts: [u64; 3]) -> Option<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return None;
        }
        let pct = |c: u64| 100.0 * c as f64 / total as f64;
        Some(SentimentDistribution {
            pos: pct(counts[0]),
            neu: pct(counts[1]),
            neg: pct(counts[2]),
        })
    }

    pub fn get(&self, polarity: Polarity) -> f64 {
        match polarity {
            Polarity::Pos => self.pos,
            Polarity::Neu => self.neu,
            Polarity::Neg => self.neg,
        }
    }

    pub fn total(&self) -> f64 {
        self.pos + self.neu + self.neg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AspectStat {
    pub aspect: Aspect,
    /// Comments whose decoded labels contain the aspect.
    pub mentions: u64,
    /// Share of all decoded aspect mentions, in percent.
    pub proportion: f64,
    /// Mentions per polarity in Pos/Neu/Neg order; all zero for OTHERS.
    pub polarity_counts: [u64; 3],
    /// Absent for OTHERS and for aspects with no mentions.
    pub distribution: Option<SentimentDistribution>,
    /// Mentioning comments, newest first; undated comments last.
    pub comment_ids: Vec<u64>,
}

/// Mentions per aspect within one calendar month (`YYYY-MM`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonthBucket {
    pub month: String,
    pub mentions: BTreeMap<Aspect, u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AspectSummary {
    pub product: String,
    pub n_comments: usize,
    pub total_mentions: u64,
    /// One entry per aspect, in canonical aspect order.
    pub aspects: Vec<AspectStat>,
    /// Monthly mention counts over dated comments, oldest month first.
    pub timeline: Vec<MonthBucket>,
    pub model_id: String,
    /// Order-independent fingerprint of the summarized comments.
    pub comment_set_hash: String,
    pub generated_at: DateTime<Utc>,
}

impl AspectSummary {
    pub fn stat(&self, aspect: Aspect) -> &AspectStat {
        &self.aspects[aspect.index()]
    }

    /// Equality ignoring `generated_at`.
    pub fn same_content(&self, other: &AspectSummary) -> bool {
        AspectSummary {
            generated_at: other.generated_at,
            ..self.clone()
        } == *other
    }
}

/// Fingerprint of a comment set that does not depend on comment order.
pub fn comment_set_hash(comments: &[Comment]) -> String {
    let mut keyed: Vec<(u64, &str, Option<NaiveDateTime>)> = comments
        .iter()
        .map(|c| (c.index, c.text.as_str(), c.date_time))
        .collect();
    keyed.sort();
    let mut bytes = Vec::new();
    for (index, text, ts) in keyed {
        bytes.extend_from_slice(&index.to_le_bytes());
        bytes.extend_from_slice(text.as_bytes());
        bytes.push(0);
        if let Some(ts) = ts {
            bytes.extend_from_slice(format_timestamp(&ts).as_bytes());
        }
        bytes.push(0);
    }
    format!("{:016x}", fnv1a(&bytes))
}

/// Aggregates decoded labels for the comments of `product` (comments of
/// other products are ignored).
pub fn summarize_product(product: &str, comments: &[Comment], model: &dyn Predictor) -> Result<AspectSummary> {
    let mine: Vec<&Comment> = comments.iter().filter(|c| c.product == product).collect();
    if mine.is_empty() {
        return Err(Error::InvalidInput(format!("empty product `{product}`")));
    }
    let decoded: Vec<LabelSet> = mine.par_iter().map(|c| model.predict_labels(&c.text)).collect();
    Ok(aggregate(product, &mine, &decoded, model.model_id()))
}

fn aggregate(product: &str, comments: &[&Comment], decoded: &[LabelSet], model_id: &str) -> AspectSummary {
    let mut mentions = [0u64; 11];
    let mut polarity = [[0u64; 3]; 11];
    let mut ids: Vec<Vec<(Option<NaiveDateTime>, u64)>> = vec![Vec::new(); 11];
    let mut timeline: BTreeMap<String, BTreeMap<Aspect, u64>> = BTreeMap::new();
    for (c, labels) in comments.iter().zip(decoded) {
        for (aspect, _) in labels.iter() {
            let a = aspect.index();
            mentions[a] += 1;
            if let Some(p) = labels.polarity(aspect) {
                polarity[a][p.index()] += 1;
            }
            ids[a].push((c.date_time, c.index));
            if let Some(ts) = c.date_time {
                *timeline
                    .entry(ts.format("%Y-%m").to_string())
                    .or_default()
                    .entry(aspect)
                    .or_default() += 1;
            }
        }
    }
    let total: u64 = mentions.iter().sum();
    let aspects = Aspect::ALL
        .iter()
        .map(|&aspect| {
            let a = aspect.index();
            let mut sorted = std::mem::take(&mut ids[a]);
            // newest first, undated last, ties by ascending id
            sorted.sort_by_key(|&(ts, id)| (ts.is_none(), Reverse(ts), id));
            AspectStat {
                aspect,
                mentions: mentions[a],
                proportion: if total == 0 {
                    0.0
                } else {
                    100.0 * mentions[a] as f64 / total as f64
                },
                polarity_counts: polarity[a],
                distribution: if aspect.is_content() {
                    SentimentDistribution::from_counts(polarity[a])
                } else {
                    None
                },
                comment_ids: sorted.into_iter().map(|(_, id)| id).collect(),
            }
        })
        .collect();
    let owned: Vec<Comment> = comments.iter().map(|&c| c.clone()).collect();
    AspectSummary {
        product: product.to_string(),
        n_comments: comments.len(),
        total_mentions: total,
        aspects,
        timeline: timeline
            .into_iter()
            .map(|(month, mentions)| MonthBucket { month, mentions })
            .collect(),
        model_id: model_id.to_string(),
        comment_set_hash: comment_set_hash(&owned),
        generated_at: Utc::now(),
    }
}

/// One content aspect's sentiment breakdown and contributing comments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drilldown {
    pub product: String,
    pub aspect: Aspect,
    pub mentions: u64,
    pub polarity_counts: [u64; 3],
    pub distribution: Option<SentimentDistribution>,
    pub comment_ids: Vec<u64>,
    pub model_id: String,
}

/// Rejects OTHERS, which carries no sentiment.
pub fn drilldown_aspect(summary: &AspectSummary, aspect: Aspect) -> Result<Drilldown> {
    if !aspect.is_content() {
        return Err(Error::InvalidInput(format!(
            "{aspect} has no sentiment polarity; choose one of the ten content aspects"
        )));
    }
    let stat = summary.stat(aspect);
    Ok(Drilldown {
        product: summary.product.clone(),
        aspect,
        mentions: stat.mentions,
        polarity_counts: stat.polarity_counts,
        distribution: stat.distribution,
        comment_ids: stat.comment_ids.clone(),
        model_id: summary.model_id.clone(),
    })
}
