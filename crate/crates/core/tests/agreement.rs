use std::io::Write;

use absa_core::agreement::{cohen_kappa, load_annotation_csv, pairwise_agreement, AnnotationRun};
use absa_core::evaluation::Task;
use absa_core::{Aspect, LabelSet, Polarity};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook evaluation of the kappa formula with float marginals.
fn oracle_kappa(a: &[u8], b: &[u8]) -> f64 {
    let n = a.len() as f64;
    let pr_a = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut pr_e = 0.0;
    for c in 0..=u8::MAX {
        let ma = a.iter().filter(|&&x| x == c).count() as f64 / n;
        let mb = b.iter().filter(|&&x| x == c).count() as f64 / n;
        pr_e += ma * mb;
    }
    (pr_a - pr_e) / (1.0 - pr_e)
}

#[test]
fn worked_fixture_matches_hand_value() {
    let a = ["P", "P", "N", "N", "P"];
    let b = ["P", "N", "N", "N", "P"];
    let k = cohen_kappa(&a, &b).unwrap();
    assert!((k.pr_a - 0.8).abs() < 1e-12);
    assert!((k.pr_e - 0.48).abs() < 1e-12);
    assert!((k.k - 0.615385).abs() < 1e-6);
}

#[test]
fn identical_sequences_give_exactly_one() {
    let a = [0u8, 1, 2, 2, 1, 0, 0];
    assert_eq!(cohen_kappa(&a, &a).unwrap().k, 1.0);
}

#[test]
fn independent_uniform_sequences_are_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..5 {
        let a: Vec<u8> = (0..10_000).map(|_| rng.gen_range(0..3)).collect();
        let b: Vec<u8> = (0..10_000).map(|_| rng.gen_range(0..3)).collect();
        assert!(cohen_kappa(&a, &b).unwrap().k.abs() < 0.05);
    }
}

fn labels(n: usize, seed: u64) -> Vec<(u64, LabelSet)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n as u64)
        .map(|i| {
            let mut l = LabelSet::new();
            for a in Aspect::CONTENT {
                if rng.gen_bool(0.3) {
                    l = l.with(a, Polarity::ALL[rng.gen_range(0..3)]);
                }
            }
            if l.is_empty() {
                l = l.with_others();
            }
            (i, l)
        })
        .collect()
}

#[test]
fn two_identical_runs() {
    let items = labels(50, 1);
    let runs = [
        AnnotationRun::new("a", 1, items.clone()),
        AnnotationRun::new("b", 1, items),
    ];
    for task in [Task::Aspect, Task::Sentiment] {
        let r = pairwise_agreement(&runs, task).unwrap();
        assert_eq!(r.latest.matrix, vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(r.gate());
    }
}

#[test]
fn five_annotators_give_ten_pairs_and_a_symmetric_matrix() {
    let base = labels(40, 2);
    let runs: Vec<AnnotationRun> = (0..5)
        .map(|i| {
            let mut items = base.clone();
            // each annotator flips a different item to OTHERS only
            items[i].1 = LabelSet::new().with_others();
            AnnotationRun::new(format!("ann{i}"), 1, items)
        })
        .collect();
    let r = pairwise_agreement(&runs, Task::Aspect).unwrap();
    assert_eq!(r.latest.pairs.len(), 10);
    for i in 0..5 {
        assert_eq!(r.latest.matrix[i][i], 1.0);
        for j in 0..5 {
            assert_eq!(r.latest.matrix[i][j], r.latest.matrix[j][i]);
            assert!((-1.0..=1.0).contains(&r.latest.matrix[i][j]));
        }
    }
}

#[test]
fn one_dissenting_annotator_fails_the_gate() {
    let base = labels(60, 3);
    let dissent: Vec<(u64, LabelSet)> = labels(60, 99);
    let runs = [
        AnnotationRun::new("a", 1, base.clone()),
        AnnotationRun::new("b", 1, base.clone()),
        AnnotationRun::new("c", 1, base),
        AnnotationRun::new("d", 1, dissent),
    ];
    let r = pairwise_agreement(&runs, Task::Aspect).unwrap();
    assert!(!r.gate());
    // the three agreeing annotators are perfect among themselves
    let perfect = r.latest.pairs.iter().filter(|p| p.kappa.k == 1.0).count();
    assert_eq!(perfect, 3);
    assert!(r.latest.min_kappa < 0.8);
}

#[test]
fn rounds_form_a_series_with_the_last_round_as_headline() {
    let r1 = labels(30, 4);
    let r2 = labels(30, 5);
    let runs = [
        AnnotationRun::new("a", 1, r1.clone()),
        AnnotationRun::new("b", 1, labels(30, 6)),
        AnnotationRun::new("a", 2, r2.clone()),
        AnnotationRun::new("b", 2, r2),
    ];
    let r = pairwise_agreement(&runs, Task::Aspect).unwrap();
    assert_eq!(r.series.len(), 2);
    assert!(!r.series[0].gate);
    assert!(r.series[1].gate);
    assert_eq!(r.latest.round, 2);
    let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(json["series"].as_array().unwrap().len(), 2);
    assert_eq!(json["task"], "aspect");
}

#[test]
fn invalid_inputs_are_rejected() {
    let items = labels(5, 7);
    assert!(pairwise_agreement(&[AnnotationRun::new("a", 1, items.clone())], Task::Aspect).is_err());
    let dup = [
        AnnotationRun::new("a", 1, items.clone()),
        AnnotationRun::new("a", 1, items),
    ];
    assert!(pairwise_agreement(&dup, Task::Aspect).is_err());
    // no item where both annotators mark the same aspect: sentiment kappa undefined
    let a = AnnotationRun::new("a", 1, [(1, LabelSet::new().with(Aspect::Battery, Polarity::Pos))]);
    let b = AnnotationRun::new("b", 1, [(1, LabelSet::new().with(Aspect::Screen, Polarity::Pos))]);
    assert!(pairwise_agreement(&[a, b], Task::Sentiment).is_err());
}

#[test]
fn loads_annotation_csv() {
    let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
    f.write_all(
        "index,comment,n_star,date_time,label,annotator,round\n\
         1,pin trâu,5,,{BATTERY#Positive},an,1\n\
         2,màn đẹp,5,,{SCREEN#Positive},an,1\n\
         1,pin trâu,5,,{BATTERY#Positive},binh,1\n\
         2,màn đẹp,5,,{SCREEN#Neutral},binh,1\n"
            .as_bytes(),
    )
    .unwrap();
    let runs = load_annotation_csv(f.path()).unwrap();
    assert_eq!(runs.len(), 2);
    let r = pairwise_agreement(&runs, Task::Sentiment).unwrap();
    assert_eq!(r.latest.pairs[0].kappa.n, 2);
    assert_eq!(r.latest.pairs[0].kappa.pr_a, 0.5);
    let aspect = pairwise_agreement(&runs, Task::Aspect).unwrap();
    assert_eq!(aspect.latest.matrix[0][1], 1.0);
}

#[test]
fn annotation_csv_errors() {
    let cases = [
        "index,comment,n_star,date_time,label\n1,x,5,,{OTHERS}\n",
        "index,comment,n_star,date_time,label,annotator\n1,x,5,,,an\n",
        "index,comment,n_star,date_time,label,annotator\n1,x,5,,{OTHERS},an\n1,x,5,,{OTHERS},an\n",
        "index,comment,n_star,date_time,label,annotator,round\n1,x,5,,{OTHERS},an,two\n",
    ];
    for body in cases {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        let err = load_annotation_csv(f.path()).unwrap_err();
        assert!(err.is_data_error(), "{body}: {err}");
    }
}

fn sequence_pair() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    (1usize..60).prop_flat_map(|n| (prop::collection::vec(0u8..4, n), prop::collection::vec(0u8..4, n)))
}

fn is_defined(a: &[u8], b: &[u8]) -> bool {
    // chance agreement is 1 only when both raters use one shared label
    !(a.iter().all(|&x| x == a[0]) && b.iter().all(|&x| x == a[0]))
}

proptest! {
    #[test]
    fn kappa_matches_oracle_and_is_symmetric((a, b) in sequence_pair()) {
        prop_assume!(is_defined(&a, &b));
        let k = cohen_kappa(&a, &b).unwrap().k;
        prop_assert!((k - oracle_kappa(&a, &b)).abs() < 1e-9);
        prop_assert_eq!(k, cohen_kappa(&b, &a).unwrap().k);
        prop_assert!((-1.0..=1.0).contains(&k));
    }

    #[test]
    fn kappa_is_invariant_to_relabelling_and_item_order(
        (a, b) in sequence_pair(),
        perm in Just([0u8, 1, 2, 3]).prop_shuffle(),
        seed in any::<u64>(),
    ) {
        prop_assume!(is_defined(&a, &b));
        let k = cohen_kappa(&a, &b).unwrap().k;
        let ra: Vec<u8> = a.iter().map(|&x| perm[x as usize] + 10).collect();
        let rb: Vec<u8> = b.iter().map(|&x| perm[x as usize] + 10).collect();
        prop_assert_eq!(k, cohen_kappa(&ra, &rb).unwrap().k);
        let mut order: Vec<usize> = (0..a.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let pa: Vec<u8> = order.iter().map(|&i| a[i]).collect();
        let pb: Vec<u8> = order.iter().map(|&i| b[i]).collect();
        prop_assert_eq!(k, cohen_kappa(&pa, &pb).unwrap().k);
    }

    #[test]
    fn self_agreement_is_one(a in prop::collection::vec(0u8..4, 2..60)) {
        prop_assume!(a.iter().any(|&x| x != a[0]));
        prop_assert_eq!(cohen_kappa(&a, &a).unwrap().k, 1.0);
    }
}
