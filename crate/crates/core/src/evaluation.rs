//! Two-task scoring: aspect detection and aspect-sentiment detection.
//!
//! Counting conventions:
//! * precision or recall with a zero denominator is 0, and F1 of (0, 0) is 0;
//! * a cell with no gold and no predicted instance at all (TP+FP+FN = 0) is
//!   undefined and reported as NaN, and NaN rows are left out of the macro
//!   averages;
//! * the sentiment score of an aspect is the unweighted mean over its
//!   defined polarities; OTHERS has no sentiment row (always NaN).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{Aspect, LabelSet, Polarity};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Aspect,
    Sentiment,
}

/// True positive / false positive / false negative tally.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Counts {
    pub fn is_defined(&self) -> bool {
        self.tp + self.fp + self.fn_ > 0
    }

    pub fn score(&self) -> Prf {
        if !self.is_defined() {
            return Prf::NAN;
        }
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let p = ratio(self.tp, self.tp + self.fp);
        let r = ratio(self.tp, self.tp + self.fn_);
        Prf { p, r, f1: f1(p, r) }
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Precision, recall and F1 as fractions in [0, 1], or NaN when undefined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    #[serde(rename = "P", with = "nan_as_null")]
    pub p: f64,
    #[serde(rename = "R", with = "nan_as_null")]
    pub r: f64,
    #[serde(rename = "F1", with = "nan_as_null")]
    pub f1: f64,
}

impl Prf {
    pub const NAN: Prf = Prf {
        p: f64::NAN,
        r: f64::NAN,
        f1: f64::NAN,
    };

    pub fn is_nan(&self) -> bool {
        self.f1.is_nan()
    }

    /// Component-wise mean over the non-NaN entries; NaN when there are none.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a Prf>) -> Prf {
        let defined: Vec<&Prf> = items.into_iter().filter(|s| !s.is_nan()).collect();
        if defined.is_empty() {
            return Prf::NAN;
        }
        let n = defined.len() as f64;
        Prf {
            p: defined.iter().map(|s| s.p).sum::<f64>() / n,
            r: defined.iter().map(|s| s.r).sum::<f64>() / n,
            f1: defined.iter().map(|s| s.f1).sum::<f64>() / n,
        }
    }

    /// Bitwise equality that treats NaN as equal to NaN.
    pub fn same_as(&self, other: &Prf) -> bool {
        let eq = |a: f64, b: f64| (a.is_nan() && b.is_nan()) || a == b;
        eq(self.p, other.p) && eq(self.r, other.r) && eq(self.f1, other.f1)
    }
}

mod nan_as_null {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AspectRow {
    pub aspect: Aspect,
    #[serde(flatten)]
    pub score: Prf,
}

/// Per-aspect scores for one task plus their macro average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    pub task: Task,
    pub rows: Vec<AspectRow>,
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl EvalReport {
    fn new(system: &str, task: Task, rows: Vec<AspectRow>) -> EvalReport {
        let macro_avg = Prf::mean(rows.iter().map(|r| &r.score));
        let mut metadata = BTreeMap::new();
        metadata.insert(
            "zero_division".into(),
            "P or R with zero denominator = 0; F1(0,0) = 0; cells with TP+FP+FN = 0 are NaN".into(),
        );
        metadata.insert("macro".into(), "unweighted mean over non-NaN rows".into());
        if task == Task::Sentiment {
            metadata.insert(
                "sentiment_row".into(),
                "unweighted mean over defined polarities; OTHERS is NaN".into(),
            );
        }
        EvalReport {
            system: system.to_string(),
            task,
            rows,
            macro_avg,
            metadata,
        }
    }

    pub fn row(&self, aspect: Aspect) -> &Prf {
        &self.rows[aspect.index()].score
    }

    /// Equality that treats NaN cells as equal.
    pub fn same_as(&self, other: &EvalReport) -> bool {
        self.system == other.system
            && self.task == other.task
            && self.metadata == other.metadata
            && self.macro_avg.same_as(&other.macro_avg)
            && self.rows.len() == other.rows.len()
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(a, b)| a.aspect == b.aspect && a.score.same_as(&b.score))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<EvalReport> {
        Ok(serde_json::from_str(text)?)
    }
}

fn check_lengths(gold: &[LabelSet], pred: &[LabelSet]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(Error::InvalidInput(format!(
            "{} gold label sets but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    Ok(())
}

/// Presence tallies for each of the 11 aspects.
pub fn aspect_counts(gold: &[LabelSet], pred: &[LabelSet]) -> Result<[Counts; 11]> {
    check_lengths(gold, pred)?;
    let mut counts = [Counts::default(); 11];
    for (g, p) in gold.iter().zip(pred) {
        for (a, c) in Aspect::ALL.iter().zip(counts.iter_mut()) {
            match (g.contains(*a), p.contains(*a)) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => {}
            }
        }
    }
    Ok(counts)
}

/// Tallies per content aspect and polarity.
pub fn sentiment_counts(gold: &[LabelSet], pred: &[LabelSet]) -> Result<[[Counts; 3]; 10]> {
    check_lengths(gold, pred)?;
    let mut counts = [[Counts::default(); 3]; 10];
    for (g, p) in gold.iter().zip(pred) {
        for (a, row) in Aspect::CONTENT.iter().zip(counts.iter_mut()) {
            let (gp, pp) = (g.polarity(*a), p.polarity(*a));
            for (pol, c) in Polarity::ALL.iter().zip(row.iter_mut()) {
                match (gp == Some(*pol), pp == Some(*pol)) {
                    (true, true) => c.tp += 1,
                    (false, true) => c.fp += 1,
                    (true, false) => c.fn_ += 1,
                    (false, false) => {}
                }
            }
        }
    }
    Ok(counts)
}

pub fn aspect_scores(system: &str, gold: &[LabelSet], pred: &[LabelSet]) -> Result<EvalReport> {
    let counts = aspect_counts(gold, pred)?;
    let rows = Aspect::ALL
        .iter()
        .zip(&counts)
        .map(|(&aspect, c)| AspectRow {
            aspect,
            score: c.score(),
        })
        .collect();
    Ok(EvalReport::new(system, Task::Aspect, rows))
}

pub fn sentiment_scores(system: &str, gold: &[LabelSet], pred: &[LabelSet]) -> Result<EvalReport> {
    let counts = sentiment_counts(gold, pred)?;
    let mut rows: Vec<AspectRow> = Aspect::CONTENT
        .iter()
        .zip(&counts)
        .map(|(&aspect, per_pol)| {
            let scores: Vec<Prf> = per_pol.iter().map(Counts::score).collect();
            AspectRow {
                aspect,
                score: Prf::mean(&scores),
            }
        })
        .collect();
    rows.push(AspectRow {
        aspect: Aspect::Others,
        score: Prf::NAN,
    });
    Ok(EvalReport::new(system, Task::Sentiment, rows))
}

/// Both task reports for one system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub system: String,
    pub aspect: EvalReport,
    pub sentiment: EvalReport,
}

impl SystemReport {
    pub fn same_as(&self, other: &SystemReport) -> bool {
        self.system == other.system && self.aspect.same_as(&other.aspect) && self.sentiment.same_as(&other.sentiment)
    }
}

pub fn evaluate(system: &str, gold: &[LabelSet], pred: &[LabelSet]) -> Result<SystemReport> {
    Ok(SystemReport {
        system: system.to_string(),
        aspect: aspect_scores(system, gold, pred)?,
        sentiment: sentiment_scores(system, gold, pred)?,
    })
}

/// Percentage with two decimals, or `NaN`.
pub fn pct(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{:.2}", 100.0 * v)
    }
}

fn table_header(first: &str, width: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{first:<width$} | {:^26} | {:^26}",
        "Aspect Detection", "Sentiment Detection"
    );
    let _ = writeln!(
        s,
        "{:<width$} | {:>8} {:>8} {:>8} | {:>8} {:>8} {:>8}",
        "", "P", "R", "F1", "P", "R", "F1"
    );
    let _ = writeln!(s, "{}", "-".repeat(width + 60));
    s
}

fn table_row(label: &str, width: usize, a: &Prf, s: &Prf) -> String {
    format!(
        "{label:<width$} | {:>8} {:>8} {:>8} | {:>8} {:>8} {:>8}\n",
        pct(a.p),
        pct(a.r),
        pct(a.f1),
        pct(s.p),
        pct(s.r),
        pct(s.f1)
    )
}

/// System comparison: one row of macro P/R/F1 per system and task.
pub fn render_comparison(reports: &[SystemReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("no reports to render".into()));
    }
    let width = reports
        .iter()
        .map(|r| r.system.chars().count())
        .max()
        .unwrap_or(0)
        .max(12);
    let mut out = table_header("System", width);
    for r in reports {
        out.push_str(&table_row(
            &r.system,
            width,
            &r.aspect.macro_avg,
            &r.sentiment.macro_avg,
        ));
    }
    Ok(out)
}

/// Per-aspect breakdown of one system, ending in the macro-average row.
pub fn render_per_aspect(report: &SystemReport) -> String {
    let width = 12;
    let mut out = table_header("Aspect", width);
    for &a in &Aspect::ALL {
        out.push_str(&table_row(
            a.name(),
            width,
            report.aspect.row(a),
            report.sentiment.row(a),
        ));
    }
    out.push_str(&table_row(
        "Macro Avg",
        width,
        &report.aspect.macro_avg,
        &report.sentiment.macro_avg,
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ls(items: &[(Aspect, Polarity)]) -> LabelSet {
        items.iter().fold(LabelSet::new(), |s, &(a, p)| s.with(a, p))
    }

    #[test]
    fn identity_scores_one_where_defined() {
        let gold = vec![
            ls(&[(Aspect::Battery, Polarity::Pos)]),
            ls(&[(Aspect::Screen, Polarity::Neg), (Aspect::Battery, Polarity::Neu)]),
            LabelSet::new().with_others(),
        ];
        let r = evaluate("x", &gold, &gold).unwrap();
        for row in r.aspect.rows.iter().chain(&r.sentiment.rows) {
            assert!(row.score.is_nan() || row.score.f1 == 1.0, "{row:?}");
        }
        assert_eq!(r.aspect.macro_avg.f1, 1.0);
        assert_eq!(r.sentiment.macro_avg.f1, 1.0);
        assert!(r.sentiment.row(Aspect::Others).is_nan());
        assert!(!r.aspect.row(Aspect::Others).is_nan());
    }

    #[test]
    fn disjoint_prediction() {
        let gold = vec![ls(&[(Aspect::Battery, Polarity::Pos)])];
        let pred = vec![ls(&[(Aspect::Screen, Polarity::Neg)])];
        let r = aspect_scores("x", &gold, &pred).unwrap();
        assert_eq!(r.row(Aspect::Battery).r, 0.0);
        assert_eq!(r.row(Aspect::Screen).p, 0.0);
        assert_eq!(r.row(Aspect::Battery).f1, 0.0);
    }

    #[test]
    fn sentiment_mismatch_and_match() {
        let gold = vec![ls(&[
            (Aspect::Battery, Polarity::Pos),
            (Aspect::General, Polarity::Pos),
        ])];
        let pred = vec![ls(&[
            (Aspect::Battery, Polarity::Neg),
            (Aspect::General, Polarity::Pos),
        ])];
        let r = sentiment_scores("x", &gold, &pred).unwrap();
        assert_eq!(r.row(Aspect::Battery).f1, 0.0);
        assert_eq!(r.row(Aspect::General).f1, 1.0);
        assert_eq!(r.macro_avg.f1, 0.5);
    }

    #[test]
    fn all_absent_prediction_has_zero_recall() {
        let gold = vec![
            ls(&[(Aspect::Battery, Polarity::Pos)]),
            ls(&[(Aspect::Camera, Polarity::Neu)]),
        ];
        let pred = vec![LabelSet::new(); 2];
        let r = evaluate("x", &gold, &pred).unwrap();
        for row in r
            .aspect
            .rows
            .iter()
            .chain(&r.sentiment.rows)
            .filter(|r| !r.score.is_nan())
        {
            assert_eq!(row.score.r, 0.0);
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(aspect_scores("x", &[LabelSet::new()], &[]).is_err());
        assert!(sentiment_scores("x", &[], &[LabelSet::new()]).is_err());
    }

    #[test]
    fn json_round_trip_with_nulls() {
        let gold = vec![ls(&[(Aspect::Battery, Polarity::Pos)])];
        let pred = vec![ls(&[(Aspect::Battery, Polarity::Pos), (Aspect::Price, Polarity::Neg)])];
        let r = sentiment_scores("Bi-LSTM", &gold, &pred).unwrap();
        let text = r.to_json().unwrap();
        assert!(text.contains("\"F1\": null"));
        assert!(text.contains("\"macro\""));
        let back = EvalReport::from_json(&text).unwrap();
        assert!(back.same_as(&r));
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn rendering_uses_percents_and_nan() {
        let gold = vec![ls(&[(Aspect::Battery, Polarity::Pos)]), LabelSet::new().with_others()];
        let r = evaluate("Perfect", &gold, &gold).unwrap();
        let cmp = render_comparison(std::slice::from_ref(&r)).unwrap();
        assert!(cmp.contains("Perfect"));
        assert_eq!(cmp.matches("100.00").count(), 6);
        let per = render_per_aspect(&r);
        let others = per.lines().find(|l| l.starts_with("OTHERS")).unwrap();
        assert_eq!(others.matches("NaN").count(), 3);
        assert!(per.lines().last().unwrap().starts_with("Macro Avg"));
        assert!(render_comparison(&[]).is_err());
    }
}
