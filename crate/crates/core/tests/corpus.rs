use std::collections::HashSet;
use std::io::Write;

use absa_core::corpus::{
    clean_corpus, clean_corpus_with_exclusions, corpus_stats, load_csv, save_csv, split_dataset, Comment, CsvSchema,
    Dataset, SplitRatios,
};
use absa_core::{Aspect, AspectState, Error, LabelSet, Polarity};
use proptest::prelude::*;

fn write_csv(body: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
    f.write_all(body.as_bytes()).unwrap();
    f
}

fn comment(index: u64, text: &str, labels: Option<LabelSet>) -> Comment {
    Comment {
        index,
        text: text.to_string(),
        n_star: 5,
        date_time: None,
        product: "p".into(),
        labels,
    }
}

#[test]
fn loads_label_grammar_rows() {
    let f = write_csv(
        "index,comment,n_star,date_time,label\n\
         1,pin trâu,5,2021-03-01T10:00:00,{BATTERY#Positive};{GENERAL#Positive}\n\
         2,shop giao nhanh,4,01/03/2021 10:00,{OTHERS}\n\
         3,chưa gán nhãn,3,,\n",
    );
    let ds = load_csv(f.path(), &CsvSchema::default()).unwrap();
    assert_eq!(ds.len(), 3);
    let first = ds.comments()[0].labels.unwrap();
    assert_eq!(first.get(Aspect::Battery), AspectState::Polar(Polarity::Pos));
    assert_eq!(first.get(Aspect::General), AspectState::Polar(Polarity::Pos));
    assert_eq!(first.len(), 2);
    assert_eq!(
        ds.comments()[1].labels.unwrap().get(Aspect::Others),
        AspectState::Present
    );
    assert_eq!(ds.comments()[1].date_time.unwrap().to_string(), "2021-03-01 10:00:00");
    assert!(ds.comments()[2].labels.is_none());
    // no product column: defaults to the file stem
    let stem = f.path().file_stem().unwrap().to_string_lossy().to_string();
    assert_eq!(ds.comments()[0].product, stem);
}

#[test]
fn duplicate_aspect_is_a_row_error() {
    let f = write_csv(
        "index,comment,n_star,date_time,label\n\
         1,ok,5,,{BATTERY#Positive}\n\
         2,pin,5,,{BATTERY#Positive};{BATTERY#Negative}\n",
    );
    match load_csv(f.path(), &CsvSchema::default()) {
        Err(Error::MalformedRow { row, reason }) => {
            assert_eq!(row, 3);
            assert!(reason.contains("duplicate"), "{reason}");
        }
        other => panic!("expected row error, got {other:?}"),
    }
}

#[test]
fn unknown_aspect_and_bad_star_are_errors() {
    let f = write_csv("index,comment,n_star,date_time,label\n1,x,5,,{WIFI#Positive}\n");
    assert!(matches!(
        load_csv(f.path(), &CsvSchema::default()),
        Err(Error::MalformedRow { row: 2, .. })
    ));
    let f = write_csv("index,comment,n_star,date_time,label\n1,x,9,,{OTHERS}\n");
    assert!(matches!(
        load_csv(f.path(), &CsvSchema::default()),
        Err(Error::MalformedRow { row: 2, .. })
    ));
    let f = write_csv("index,text,n_star,date_time,label\n1,x,5,,{OTHERS}\n");
    assert!(matches!(
        load_csv(f.path(), &CsvSchema::default()),
        Err(Error::MalformedRow { row: 1, .. })
    ));
}

#[test]
fn unparseable_timestamp_is_kept_as_null() {
    let f = write_csv("index,comment,n_star,date_time,label\n1,x,5,yesterday,{OTHERS}\n");
    let ds = load_csv(f.path(), &CsvSchema::default()).unwrap();
    assert_eq!(ds.comments()[0].date_time, None);
}

#[test]
fn cleaning_length_boundary() {
    let long = vec!["a"; 251].join(" ");
    let exact = vec!["a"; 250].join(" ");
    let ds = Dataset::new(
        "t",
        vec![
            comment(1, &long, None),
            comment(2, &exact, None),
            comment(3, "ngắn", None),
        ],
    )
    .unwrap();
    let (kept, log) = clean_corpus(&ds);
    assert_eq!(kept.comments().iter().map(|c| c.index).collect::<Vec<_>>(), vec![2, 3]);
    assert_eq!(log.to_text(), "1\tlength\n");
    assert_eq!(kept.comments()[0], ds.comments()[1]);

    let (empty, log) = clean_corpus(&Dataset::empty("e"));
    assert!(empty.is_empty() && log.is_empty());

    let excluded: HashSet<u64> = [3].into_iter().collect();
    let (kept, log) = clean_corpus_with_exclusions(&ds, &excluded);
    assert_eq!(kept.len(), 1);
    assert_eq!(log.to_text(), "1\tlength\n3\texcluded\n");
}

fn numbered(n: usize) -> Dataset {
    Dataset::new("n", (1..=n as u64).map(|i| comment(i, "x", None)).collect()).unwrap()
}

#[test]
fn split_sizes() {
    let s = split_dataset(&numbered(11122), SplitRatios::default(), 42).unwrap();
    assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (7786, 1112, 2224));
    let s = split_dataset(&numbered(10), SplitRatios::default(), 1).unwrap();
    assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (7, 1, 2));
    assert!(split_dataset(&numbered(9), SplitRatios::default(), 1).is_err());
    let bad = SplitRatios {
        train: 0.5,
        dev: 0.1,
        test: 0.2,
    };
    assert!(split_dataset(&numbered(100), bad, 1).is_err());
}

#[test]
fn split_is_deterministic_and_exhaustive() {
    let ds = numbered(500);
    let a = split_dataset(&ds, SplitRatios::default(), 9).unwrap();
    let b = split_dataset(&ds, SplitRatios::default(), 9).unwrap();
    assert_eq!(a.train, b.train);
    assert_eq!(a.dev, b.dev);
    assert_eq!(a.test, b.test);
    let c = split_dataset(&ds, SplitRatios::default(), 10).unwrap();
    assert_ne!(a.dev, c.dev);
    let mut all: Vec<u64> = [&a.train, &a.dev, &a.test]
        .iter()
        .flat_map(|d| d.comments().iter().map(|c| c.index))
        .collect();
    all.sort_unstable();
    assert_eq!(all, (1..=500).collect::<Vec<_>>());
}

#[test]
fn stats_arithmetic() {
    let three = LabelSet::new()
        .with(Aspect::Battery, Polarity::Pos)
        .with(Aspect::Screen, Polarity::Neg)
        .with_others();
    let four = LabelSet::new()
        .with(Aspect::Battery, Polarity::Neu)
        .with(Aspect::Camera, Polarity::Pos)
        .with(Aspect::Price, Polarity::Pos)
        .with(Aspect::General, Polarity::Pos);
    let ds = Dataset::new("s", vec![comment(1, "a b", Some(three)), comment(2, "c", Some(four))]).unwrap();
    let stats = corpus_stats(&ds).unwrap();
    assert_eq!(stats.avg_aspects_per_comment, 3.5);
    assert_eq!(stats.n_aspect_labels, 7);

    let one = Dataset::new(
        "one",
        vec![comment(
            1,
            "pin trâu",
            Some(LabelSet::new().with(Aspect::Battery, Polarity::Pos)),
        )],
    )
    .unwrap();
    let stats = corpus_stats(&one).unwrap();
    assert_eq!(stats.n_tokens, 2);
    assert_eq!(stats.avg_length, 2.0);

    let unlabeled = Dataset::new("u", vec![comment(1, "x", None)]).unwrap();
    assert!(corpus_stats(&unlabeled).is_err());
}

#[test]
fn stats_table_matches_hand_count() {
    // Hand count of the fixture below:
    //   SCREEN pos 2 neg 1 | CAMERA neg 3 | BATTERY pos 3 neu 1 | PRICE neu 2
    //   GENERAL pos 2 | SER&ACC neg 1 | OTHERS 2  → 17 labels, 10 comments
    let rows = [
        "{SCREEN#Positive};{BATTERY#Positive}",
        "{SCREEN#Positive};{CAMERA#Negative};{GENERAL#Positive}",
        "{BATTERY#Positive}",
        "{OTHERS}",
        "{SCREEN#Negative};{PRICE#Neutral}",
        "{BATTERY#Neutral};{CAMERA#Negative}",
        "{PRICE#Neutral};{GENERAL#Positive};{SER&ACC#Negative}",
        "{OTHERS}",
        "{BATTERY#Positive}",
        "{CAMERA#Negative}",
    ];
    let ds = Dataset::new(
        "ten",
        rows.iter()
            .enumerate()
            .map(|(i, l)| comment(i as u64 + 1, "w w w", Some(LabelSet::parse(l).unwrap())))
            .collect(),
    )
    .unwrap();
    let stats = corpus_stats(&ds).unwrap();
    let row = |a: Aspect| stats.per_aspect[a.index()].clone();
    assert_eq!((row(Aspect::Screen).pos, row(Aspect::Screen).neg), (2, 1));
    assert_eq!(row(Aspect::Camera).neg, 3);
    assert_eq!((row(Aspect::Battery).pos, row(Aspect::Battery).neu), (3, 1));
    assert_eq!(row(Aspect::Price).neu, 2);
    assert_eq!(row(Aspect::General).pos, 2);
    assert_eq!(row(Aspect::SerAcc).neg, 1);
    assert_eq!(row(Aspect::Others).present, 2);
    assert_eq!(row(Aspect::Storage).total(), 0);
    assert_eq!(stats.n_aspect_labels, 17);
    assert_eq!(stats.per_aspect.iter().map(|r| r.total()).sum::<usize>(), 17);
    assert_eq!(stats.n_tokens, 30);
    assert!((stats.avg_aspects_per_comment - 1.7).abs() < 1e-12);
}

fn arb_labels() -> impl Strategy<Value = Option<LabelSet>> {
    let polar = proptest::collection::vec(proptest::option::of(0usize..3), 10);
    prop_oneof![
        Just(None),
        (polar, any::<bool>()).prop_map(|(ps, others)| {
            let mut set = LabelSet::new();
            for (a, p) in Aspect::CONTENT.iter().zip(ps) {
                if let Some(p) = p {
                    set.set(*a, Polarity::ALL[p]).unwrap();
                }
            }
            if others || set.is_empty() {
                set.set_others(true);
            }
            Some(set)
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_then_load_is_identity(
        rows in proptest::collection::vec(("[a-zđâ ,\"!]{0,30}", 1u8..=5, proptest::option::of(0i64..100_000), arb_labels(), "[a-c]{1,3}"), 0..20)
    ) {
        let base = chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let comments: Vec<Comment> = rows.into_iter().enumerate().map(|(i, (text, n_star, mins, labels, product))| Comment {
            index: i as u64 + 1,
            text,
            n_star,
            date_time: mins.map(|m| base + chrono::Duration::minutes(m)),
            product,
            labels,
        }).collect();
        let ds = Dataset::new("rt", comments).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        save_csv(&ds, &path).unwrap();
        let back = load_csv(&path, &CsvSchema::default()).unwrap();
        prop_assert_eq!(back.comments(), ds.comments());
    }

    #[test]
    fn cleaning_only_removes(lens in proptest::collection::vec(0usize..300, 0..12)) {
        let ds = Dataset::new("c", lens.iter().enumerate().map(|(i, &n)| comment(i as u64, &vec!["t"; n].join(" "), None)).collect()).unwrap();
        let (kept, log) = clean_corpus(&ds);
        prop_assert_eq!(kept.len() + log.len(), ds.len());
        for c in kept.comments() {
            prop_assert!(ds.comments().contains(c));
            prop_assert!(absa_core::textproc::analyze(&c.text).len() <= 250);
        }
    }
}
