use std::collections::HashMap;

use absa_core::corpus::parse_timestamp;
use absa_core::listening::{drilldown_aspect, summarize_product, AspectSummary};
use absa_core::models::{Prediction, Predictor};
use absa_core::{Aspect, Comment, LabelSet, Polarity};
use proptest::prelude::*;

/// Fixed lookup model: known phrases decode to fixed labels, anything else
/// to nothing.
struct Stub {
    table: HashMap<String, LabelSet>,
}

impl Predictor for Stub {
    fn model_id(&self) -> &str {
        "stub-1"
    }

    fn predict(&self, text: &str) -> Prediction {
        let mut p = Prediction::degenerate();
        if let Some(l) = self.table.get(text) {
            p.decoded = *l;
            p.degenerate = false;
        }
        p
    }
}

fn stub() -> Stub {
    use Aspect::*;
    use Polarity::*;
    let mut table = HashMap::new();
    table.insert("pin tốt".to_string(), LabelSet::new().with(Battery, Pos));
    table.insert("pin tệ".to_string(), LabelSet::new().with(Battery, Neg));
    table.insert(
        "màn đẹp giá rẻ".to_string(),
        LabelSet::new().with(Screen, Pos).with(Price, Pos),
    );
    table.insert("camera bình thường".to_string(), LabelSet::new().with(Camera, Neu));
    table.insert("shop giao nhanh".to_string(), LabelSet::new().with_others());
    table.insert(
        "máy lag pin tệ".to_string(),
        LabelSet::new().with(Performance, Neg).with(Battery, Neg),
    );
    Stub { table }
}

/// 30 comments: 10 "pin tốt", 4 "pin tệ", 6 "màn đẹp giá rẻ", 3 "camera bình
/// thường", 2 "shop giao nhanh", 3 "máy lag pin tệ", 2 with no decodable text.
fn fixture() -> Vec<Comment> {
    let plan = [
        ("pin tốt", 10),
        ("pin tệ", 4),
        ("màn đẹp giá rẻ", 6),
        ("camera bình thường", 3),
        ("shop giao nhanh", 2),
        ("máy lag pin tệ", 3),
        ("", 2),
    ];
    let mut out = Vec::new();
    for (text, n) in plan {
        for _ in 0..n {
            let i = out.len() as u64;
            out.push(Comment {
                index: i,
                text: text.into(),
                n_star: 4,
                date_time: parse_timestamp(&format!("2021-{:02}-{:02} 09:00", 1 + i % 3, 1 + i)),
                product: "galaxy".into(),
                labels: None,
            });
        }
    }
    assert_eq!(out.len(), 30);
    out
}

#[test]
fn thirty_comment_fixture_matches_hand_counts() {
    let s = summarize_product("galaxy", &fixture(), &stub()).unwrap();
    assert_eq!(s.n_comments, 30);
    assert_eq!(s.model_id, "stub-1");
    // BATTERY 10 + 4 + 3, SCREEN 6, PRICE 6, CAMERA 3, OTHERS 2, PERFORMANCE 3
    assert_eq!(s.total_mentions, 37);
    let expect = [
        (Aspect::Battery, 17, 45.945946),
        (Aspect::Screen, 6, 16.216216),
        (Aspect::Price, 6, 16.216216),
        (Aspect::Camera, 3, 8.108108),
        (Aspect::Performance, 3, 8.108108),
        (Aspect::Others, 2, 5.405405),
        (Aspect::Features, 0, 0.0),
    ];
    for (aspect, mentions, pct) in expect {
        let st = s.stat(aspect);
        assert_eq!(st.mentions, mentions, "{aspect}");
        assert!((st.proportion - pct).abs() < 1e-5, "{aspect}: {}", st.proportion);
    }
    let total: f64 = s.aspects.iter().map(|a| a.proportion).sum();
    assert!((total - 100.0).abs() < 0.01);

    let battery = s.stat(Aspect::Battery);
    assert_eq!(battery.polarity_counts, [10, 0, 7]);
    let d = battery.distribution.unwrap();
    assert!((d.pos - 58.823529).abs() < 1e-5);
    assert_eq!(d.neu, 0.0);
    assert!((d.neg - 41.176471).abs() < 1e-5);
    assert_eq!(s.stat(Aspect::Camera).distribution.unwrap().neu, 100.0);
    assert!(s.stat(Aspect::Others).distribution.is_none());
    assert!(s.stat(Aspect::Features).distribution.is_none());
    for a in &s.aspects {
        if let Some(d) = a.distribution {
            assert!((d.total() - 100.0).abs() < 0.01);
        }
    }
}

#[test]
fn drilldown_sorts_newest_first_and_rejects_others() {
    let s = summarize_product("galaxy", &fixture(), &stub()).unwrap();
    let d = drilldown_aspect(&s, Aspect::Camera).unwrap();
    // camera comments are ids 20, 21, 22 dated 2021-03-21, 2021-01-22, 2021-02-23
    assert_eq!(d.comment_ids, vec![20, 22, 21]);
    assert_eq!(d.model_id, "stub-1");
    assert!(drilldown_aspect(&s, Aspect::Others).is_err());
    let empty = drilldown_aspect(&s, Aspect::Storage).unwrap();
    assert!(empty.distribution.is_none() && empty.comment_ids.is_empty());
}

#[test]
fn timeline_counts_dated_mentions_by_month() {
    let s = summarize_product("galaxy", &fixture(), &stub()).unwrap();
    let months: Vec<&str> = s.timeline.iter().map(|b| b.month.as_str()).collect();
    assert_eq!(months, ["2021-01", "2021-02", "2021-03"]);
    let total: u64 = s.timeline.iter().flat_map(|b| b.mentions.values()).sum();
    assert_eq!(total, 37);
}

#[test]
fn unknown_product_is_an_error() {
    let err = summarize_product("iphone", &fixture(), &stub()).unwrap_err();
    assert!(err.to_string().contains("empty product"));
}

#[test]
fn summary_json_round_trips() {
    let s = summarize_product("galaxy", &fixture(), &stub()).unwrap();
    let json = serde_json::to_string(&s).unwrap();
    let back: AspectSummary = serde_json::from_str(&json).unwrap();
    assert_eq!(back, s);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["aspects"][3]["aspect"], "BATTERY");
    assert!(v["aspects"][10]["distribution"].is_null());
}

proptest! {
    #[test]
    fn proportions_sum_to_100_and_order_does_not_matter(
        picks in prop::collection::vec(0usize..7, 1..40),
        rotate in 0usize..40,
    ) {
        let texts = ["pin tốt", "pin tệ", "màn đẹp giá rẻ", "camera bình thường", "shop giao nhanh", "máy lag pin tệ", ""];
        let comments: Vec<Comment> = picks
            .iter()
            .enumerate()
            .map(|(i, &p)| Comment {
                index: i as u64,
                text: texts[p].into(),
                n_star: 3,
                date_time: None,
                product: "p".into(),
                labels: None,
            })
            .collect();
        let model = stub();
        let s = summarize_product("p", &comments, &model).unwrap();
        if s.total_mentions > 0 {
            let total: f64 = s.aspects.iter().map(|a| a.proportion).sum();
            prop_assert!((total - 100.0).abs() < 0.01);
        }
        let mut shuffled = comments.clone();
        let k = rotate % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let t = summarize_product("p", &shuffled, &model).unwrap();
        prop_assert!(s.same_content(&t));
    }
}
