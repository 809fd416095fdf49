//! Inter-annotator agreement: Cohen's kappa, pairwise matrices per task and
//! per annotation round.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::hash::Hash;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{raw_from_record, Aspect, CsvSchema, LabelSet};
use crate::error::{Error, Result};
use crate::evaluation::Task;

/// Minimum pairwise kappa for an annotation round to pass.
pub const GATE_THRESHOLD: f64 = 0.8;

/// Cohen's kappa together with the observed and chance agreement it was
/// computed from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub k: f64,
    pub pr_a: f64,
    pub pr_e: f64,
    pub n: usize,
}

/// Chance-corrected agreement `k = (Pr(a) - Pr(e)) / (1 - Pr(e))` between two
/// label sequences.
///
/// Agreement and marginal products are tallied in integers, so the result is
/// exactly symmetric and exactly invariant under relabelling categories or
/// permuting items.
pub fn cohen_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<Kappa> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "kappa needs equal-length sequences, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("kappa needs at least one item".into()));
    }
    let n = a.len() as u128;
    let mut agree = 0u128;
    let mut marginals: HashMap<&T, (u128, u128)> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        if x == y {
            agree += 1;
        }
        marginals.entry(x).or_default().0 += 1;
        marginals.entry(y).or_default().1 += 1;
    }
    let chance: u128 = marginals.values().map(|(ca, cb)| ca * cb).sum();
    let pr_a = agree as f64 / n as f64;
    let pr_e = chance as f64 / (n * n) as f64;
    let k = if chance == n * n {
        if agree == n {
            1.0
        } else {
            return Err(Error::InvalidInput(
                "kappa is undefined: chance agreement is 1 but observed agreement is not".into(),
            ));
        }
    } else {
        (pr_a - pr_e) / (1.0 - pr_e)
    };
    Ok(Kappa {
        k,
        pr_a,
        pr_e,
        n: a.len(),
    })
}

/// One annotator's labels for one round, keyed by item id.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationRun {
    pub annotator: String,
    pub round: u32,
    pub items: BTreeMap<u64, LabelSet>,
}

impl AnnotationRun {
    pub fn new(annotator: impl Into<String>, round: u32, items: impl IntoIterator<Item = (u64, LabelSet)>) -> Self {
        AnnotationRun {
            annotator: annotator.into(),
            round,
            items: items.into_iter().collect(),
        }
    }
}

/// Flattens two runs into the paired categorical decisions compared for
/// `task`: aspect presence per (item, aspect), or polarity per (item,
/// content aspect) where both annotators marked the aspect.
pub fn paired_decisions(a: &AnnotationRun, b: &AnnotationRun, task: Task) -> Result<(Vec<u8>, Vec<u8>)> {
    if !a.items.keys().eq(b.items.keys()) {
        return Err(Error::InvalidInput(format!(
            "annotators `{}` and `{}` labelled different items in round {}",
            a.annotator, b.annotator, a.round
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (la, lb) in a.items.values().zip(b.items.values()) {
        match task {
            Task::Aspect => {
                for aspect in Aspect::ALL {
                    xs.push(la.contains(aspect) as u8);
                    ys.push(lb.contains(aspect) as u8);
                }
            }
            Task::Sentiment => {
                for aspect in Aspect::CONTENT {
                    if let (Some(pa), Some(pb)) = (la.polarity(aspect), lb.polarity(aspect)) {
                        xs.push(pa.index() as u8);
                        ys.push(pb.index() as u8);
                    }
                }
            }
        }
    }
    Ok((xs, ys))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairKappa {
    pub first: String,
    pub second: String,
    #[serde(flatten)]
    pub kappa: Kappa,
}

/// Agreement of every annotator pair within one round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundAgreement {
    pub round: u32,
    pub n_items: usize,
    pub annotators: Vec<String>,
    /// Symmetric kappa matrix over `annotators`, with a unit diagonal.
    pub matrix: Vec<Vec<f64>>,
    pub pairs: Vec<PairKappa>,
    pub mean_kappa: f64,
    pub min_kappa: f64,
    pub gate: bool,
}

/// Per-round point of the agreement-over-rounds series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundPoint {
    pub round: u32,
    pub mean_kappa: f64,
    pub min_kappa: f64,
    pub gate: bool,
}

/// Headline agreement (the latest round) plus the per-round series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub task: Task,
    pub threshold: f64,
    #[serde(flatten)]
    pub latest: RoundAgreement,
    pub series: Vec<RoundPoint>,
    pub rounds: Vec<RoundAgreement>,
}

impl AgreementReport {
    pub fn gate(&self) -> bool {
        self.latest.gate
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn round_agreement(round: u32, runs: &[&AnnotationRun], task: Task) -> Result<RoundAgreement> {
    if runs.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "round {round} has {} annotator(s); agreement needs at least 2",
            runs.len()
        )));
    }
    let n = runs.len();
    let mut matrix = vec![vec![1.0; n]; n];
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let (xs, ys) = paired_decisions(runs[i], runs[j], task)?;
            let kappa = cohen_kappa(&xs, &ys).map_err(|e| {
                Error::InvalidInput(format!(
                    "round {round}, `{}` vs `{}`: {e}",
                    runs[i].annotator, runs[j].annotator
                ))
            })?;
            matrix[i][j] = kappa.k;
            matrix[j][i] = kappa.k;
            pairs.push(PairKappa {
                first: runs[i].annotator.clone(),
                second: runs[j].annotator.clone(),
                kappa,
            });
        }
    }
    let mean_kappa = pairs.iter().map(|p| p.kappa.k).sum::<f64>() / pairs.len() as f64;
    let min_kappa = pairs.iter().map(|p| p.kappa.k).fold(f64::INFINITY, f64::min);
    Ok(RoundAgreement {
        round,
        n_items: runs[0].items.len(),
        annotators: runs.iter().map(|r| r.annotator.clone()).collect(),
        matrix,
        pairs,
        mean_kappa,
        min_kappa,
        gate: min_kappa >= GATE_THRESHOLD,
    })
}

/// Pairwise kappa for every round present in `runs`. Annotators are ordered
/// by id within a round; the report headline is the highest round number.
pub fn pairwise_agreement(runs: &[AnnotationRun], task: Task) -> Result<AgreementReport> {
    let mut by_round: BTreeMap<u32, Vec<&AnnotationRun>> = BTreeMap::new();
    for run in runs {
        by_round.entry(run.round).or_default().push(run);
    }
    if by_round.is_empty() {
        return Err(Error::InvalidInput("agreement needs at least 2 annotation runs".into()));
    }
    let mut rounds = Vec::with_capacity(by_round.len());
    for (round, mut group) in by_round {
        group.sort_by(|a, b| a.annotator.cmp(&b.annotator));
        if let Some(w) = group.windows(2).find(|w| w[0].annotator == w[1].annotator) {
            return Err(Error::InvalidInput(format!(
                "annotator `{}` appears twice in round {round}",
                w[0].annotator
            )));
        }
        rounds.push(round_agreement(round, &group, task)?);
    }
    let series = rounds
        .iter()
        .map(|r| RoundPoint {
            round: r.round,
            mean_kappa: r.mean_kappa,
            min_kappa: r.min_kappa,
            gate: r.gate,
        })
        .collect();
    let latest = rounds.last().cloned().expect("at least one round");
    Ok(AgreementReport {
        task,
        threshold: GATE_THRESHOLD,
        latest,
        series,
        rounds,
    })
}

/// Reads annotation runs from a corpus-layout CSV with an extra `annotator`
/// column and an optional `round` column (default 1). Every row must carry
/// a label.
pub fn load_annotation_csv(path: &Path) -> Result<Vec<AnnotationRun>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let cols = CsvSchema::default().resolve(&headers)?;
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().trim_start_matches('\u{feff}') == name)
    };
    let annotator_col = find("annotator").ok_or_else(|| Error::MalformedRow {
        row: 1,
        reason: "header is missing column `annotator`".into(),
    })?;
    let round_col = find("round");
    let mut runs: BTreeMap<(u32, String), AnnotationRun> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let bad = |reason: String| Error::MalformedRow { row, reason };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let annotator = rec.get(annotator_col).unwrap_or("").trim().to_string();
        if annotator.is_empty() {
            return Err(bad("empty annotator".into()));
        }
        let round = match round_col.and_then(|c| rec.get(c)).map(str::trim) {
            None | Some("") => 1,
            Some(s) => s
                .parse()
                .map_err(|_| bad(format!("round `{s}` is not a non-negative integer")))?,
        };
        let (comment, _) = raw_from_record(&rec, &cols, "").parse().map_err(bad)?;
        let labels = comment
            .labels
            .ok_or_else(|| bad("annotation row has no label".into()))?;
        let run = runs
            .entry((round, annotator.clone()))
            .or_insert_with(|| AnnotationRun::new(annotator.clone(), round, []));
        if run.items.insert(comment.index, labels).is_some() {
            return Err(bad(format!(
                "annotator `{annotator}` labelled item {} twice in round {round}",
                comment.index
            )));
        }
    }
    Ok(runs.into_values().collect())
}
