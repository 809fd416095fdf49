use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use absa_core::corpus::save_csv;
use absa_core::corpus::synthetic::keyword_corpus;
use serde_json::Value;
use tempfile::TempDir;

fn absa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_absa"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn corpus(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let path = dir.join(format!("corpus-{n}-{seed}.csv"));
    save_csv(&keyword_corpus(n, seed), &path).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const KAPPA_CSV: &str = "\
index,comment,n_star,date_time,label,annotator
1,a,5,,{BATTERY#Positive},ann1
2,b,5,,{BATTERY#Positive},ann1
3,c,1,,{BATTERY#Negative},ann1
4,d,1,,{BATTERY#Negative},ann1
5,e,5,,{BATTERY#Positive},ann1
1,a,5,,{BATTERY#Positive},ann2
2,b,5,,{BATTERY#Negative},ann2
3,c,1,,{BATTERY#Negative},ann2
4,d,1,,{BATTERY#Negative},ann2
5,e,5,,{BATTERY#Positive},ann2
";

#[test]
fn split_is_byte_identical_for_a_seed() {
    let dir = TempDir::new().unwrap();
    let input = corpus(dir.path(), 200, 3);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let o = absa(&["split", "--in", p(&input), "--seed", "11", "--out-dir", p(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["train.csv", "dev.csv", "test.csv"] {
        assert_eq!(
            fs::read(out_a.join(name)).unwrap(),
            fs::read(out_b.join(name)).unwrap(),
            "{name}"
        );
    }
    let o = absa(&[
        "split",
        "--in",
        p(&input),
        "--seed",
        "11",
        "--out-dir",
        p(&out_a),
        "--json",
    ]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["parts"]["train"]["n"], 140);
    assert_eq!(v["parts"]["dev"]["n"], 20);
    assert_eq!(v["parts"]["test"]["n"], 40);
}

#[test]
fn kappa_prints_the_worked_fixture() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("runs.csv");
    fs::write(&path, KAPPA_CSV).unwrap();
    let o = absa(&["kappa", "--runs", p(&path), "--task", "sentiment"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("k = 0.6154"), "{}", stdout(&o));

    let o = absa(&["kappa", "--runs", p(&path), "--json"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let reports = v.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["task"], "aspect");
    assert_eq!(reports[0]["min_kappa"], 1.0);
    assert!((reports[1]["min_kappa"].as_f64().unwrap() - 0.615385).abs() < 1e-6);
    assert_eq!(reports[1]["gate"], false);
}

#[test]
fn train_eval_predict_round_trip() {
    let dir = TempDir::new().unwrap();
    let input = corpus(dir.path(), 300, 5);
    let bundle = dir.path().join("nb");
    let o = absa(&[
        "train",
        "--arch",
        "naive_bayes",
        "--train",
        p(&input),
        "--out",
        p(&bundle),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model_id = stdout(&o).trim().to_string();
    assert!(!model_id.is_empty());

    let report = dir.path().join("report.json");
    let o = absa(&["eval", "--model", p(&bundle), "--test", p(&input), "--out", p(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("BATTERY"), "{text}");
    let v: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["system"], model_id.as_str());
    assert_eq!(v["aspect"]["metadata"]["n_test"], "300");
    assert_eq!(v["aspect"]["rows"].as_array().unwrap().len(), 11);
    // OTHERS has no sentiment row value
    assert!(v["sentiment"]["rows"][10]["F1"].is_null());

    let o = absa(&["predict", "--model", p(&bundle), "--text", "pin trâu", "--text", ""]);
    assert!(o.status.success());
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(lines[0], "{BATTERY#Positive}\tpin trâu");
    assert_eq!(lines[1], "-\t");

    let o = absa(&["predict", "--model", p(&bundle), "--text", "pin trâu", "--json"]);
    let v: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["model_id"], model_id.as_str());
}

#[test]
fn ingest_and_stats() {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("raw.csv");
    let long = vec!["pin"; 400].join(" ");
    fs::write(
        &raw,
        format!(
            "index,comment,n_star,date_time,label\n\
             1,pin trâu,5,2021-01-02 10:00,{{BATTERY#Positive}}\n\
             2,{long},5,2021-01-02 10:00,{{BATTERY#Positive}}\n\
             3,mình mới mua,3,,{{OTHERS}}\n\
             4,màn hình đẹp,4,,{{SCREEN#Positive}}\n"
        ),
    )
    .unwrap();
    let exclude = dir.path().join("exclude.txt");
    fs::write(&exclude, "3\n").unwrap();
    let clean = dir.path().join("clean.csv");
    let rejections = dir.path().join("rej.tsv");
    let o = absa(&[
        "ingest",
        "--in",
        p(&raw),
        "--out",
        p(&clean),
        "--rejections",
        p(&rejections),
        "--exclude",
        p(&exclude),
        "--json",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["input"], 4);
    assert_eq!(v["kept"], 2);
    let log = fs::read_to_string(&rejections).unwrap();
    assert!(log.contains("2\tlength") && log.contains("3\texcluded"), "{log}");

    let o = absa(&["stats", "--in", p(&clean), "--json"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["n_comments"], 2);
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = TempDir::new().unwrap();
    assert_eq!(absa(&["split", "--bogus"]).status.code(), Some(1));
    assert_eq!(absa(&[]).status.code(), Some(1));
    assert_eq!(absa(&["--help"]).status.code(), Some(0));

    let input = corpus(dir.path(), 50, 1);
    let o = absa(&["split", "--in", p(&input), "--seed", "1", "--ratios", "0.5,0.5"]);
    assert_eq!(o.status.code(), Some(1));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "index,comment,n_star,date_time,label\n1,x,5,,{NOPE#Positive}\n").unwrap();
    let o = absa(&["stats", "--in", p(&bad)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let o = absa(&["stats", "--in", p(&dir.path().join("missing.csv"))]);
    assert_eq!(o.status.code(), Some(3));
}
