use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use absa_core::agreement::{load_annotation_csv, pairwise_agreement, AgreementReport, AnnotationRun};
use absa_core::classicml::{train_classic, ClassicConfig, ClassicKind};
use absa_core::corpus::{
    clean_corpus_with_exclusions, corpus_stats, load_csv, load_exclusions, save_csv, split_dataset, CorpusStats,
    CsvSchema, SplitRatios,
};
use absa_core::evaluation::{evaluate, render_comparison, render_per_aspect, SystemReport, Task};
use absa_core::models::{apply_config_text, load_model, train, AnyModel, ModelConfig, Predictor, TrainConfig};
use absa_core::Dataset;
use anyhow::{Context, Result};
use serde_json::json;

use crate::{
    Cli, Command, EvalArgs, IngestArgs, KappaArgs, KappaTask, PredictArgs, ServeArgs, SplitArgs, StatsArgs, TrainArgs,
    UsageError,
};

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Split(a) => split(a),
        Command::Stats(a) => stats(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Kappa(a) => kappa(a),
        Command::Serve(a) => serve(a),
    }
}

fn read_corpus(path: &Path) -> Result<Dataset> {
    load_csv(path, &CsvSchema::default()).with_context(|| format!("reading {}", path.display()))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let raw = read_corpus(&a.input)?;
    let excluded = match &a.exclude {
        Some(p) => load_exclusions(p).with_context(|| format!("reading {}", p.display()))?,
        None => Default::default(),
    };
    let (clean, rejections) = clean_corpus_with_exclusions(&raw, &excluded);
    save_csv(&clean, &a.out)?;
    if let Some(p) = &a.rejections {
        rejections.save(p)?;
    }
    log::info!(
        "kept {} of {} comments, rejected {}",
        clean.len(),
        raw.len(),
        rejections.len()
    );
    if a.json {
        print_json(&json!({
            "input": raw.len(),
            "kept": clean.len(),
            "rejected": rejections.len(),
            "output": a.out,
        }))
    } else {
        println!(
            "kept {}\trejected {}\t{}",
            clean.len(),
            rejections.len(),
            a.out.display()
        );
        Ok(())
    }
}

fn parse_ratios(s: &str) -> Result<SplitRatios> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| UsageError(format!("--ratios expects three numbers like 0.7,0.1,0.2, got {s:?}")))?;
    let [train, dev, test] = parts[..] else {
        return Err(UsageError(format!("--ratios expects three numbers, got {}", parts.len())).into());
    };
    if [train, dev, test].iter().any(|r| !(0.0..=1.0).contains(r)) || ((train + dev + test) - 1.0).abs() > 1e-9 {
        return Err(UsageError(format!("--ratios {s} must lie in [0,1] and sum to 1")).into());
    }
    Ok(SplitRatios { train, dev, test })
}

fn split(a: SplitArgs) -> Result<()> {
    let ratios = parse_ratios(&a.ratios)?;
    let ds = read_corpus(&a.input)?;
    let parts = split_dataset(&ds, ratios, a.seed)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut sizes = Vec::new();
    for (name, part) in [("train", &parts.train), ("dev", &parts.dev), ("test", &parts.test)] {
        let path = a.out_dir.join(format!("{name}.csv"));
        save_csv(part, &path)?;
        sizes.push((name, part.len(), path));
    }
    if a.json {
        let obj: serde_json::Map<String, serde_json::Value> = sizes
            .iter()
            .map(|(n, len, path)| (n.to_string(), json!({ "n": len, "path": path })))
            .collect();
        print_json(&json!({ "seed": a.seed, "parts": obj }))
    } else {
        for (name, len, path) in sizes {
            println!("{name}\t{len}\t{}", path.display());
        }
        Ok(())
    }
}

fn render_stats(s: &CorpusStats) -> String {
    let mut out = format!(
        "comments            {}\ntokens              {}\naspect labels       {}\naspects per comment {:.2}\nmean length         {:.2}\n\n",
        s.n_comments, s.n_tokens, s.n_aspect_labels, s.avg_aspects_per_comment, s.avg_length
    );
    out.push_str(&format!(
        "{:<12} {:>7} {:>7} {:>7} {:>8} {:>7}\n",
        "Aspect", "Pos", "Neu", "Neg", "Present", "Total"
    ));
    for c in &s.per_aspect {
        out.push_str(&format!(
            "{:<12} {:>7} {:>7} {:>7} {:>8} {:>7}\n",
            c.aspect.name(),
            c.pos,
            c.neu,
            c.neg,
            c.present,
            c.total()
        ));
    }
    out
}

fn stats(a: StatsArgs) -> Result<()> {
    let ds = read_corpus(&a.input)?;
    let s = corpus_stats(&ds)?;
    if a.json {
        print_json(&s)
    } else {
        print!("{}", render_stats(&s));
        Ok(())
    }
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut mc = ModelConfig::default();
    let mut tc = TrainConfig::default();
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        apply_config_text(&text, &mut mc, &mut tc).with_context(|| format!("in config {}", path.display()))?;
    }
    if let Some(seed) = a.seed {
        tc.seed = seed;
    }
    if let Some(epochs) = a.epochs {
        tc.epochs = epochs;
    }
    let train_set = read_corpus(&a.train)?;
    let model = if let Ok(kind) = a.arch.parse::<ClassicKind>() {
        if a.dev.is_some() {
            log::warn!("classical models do not use a dev set; ignoring --dev");
        }
        AnyModel::Classic(train_classic(&ClassicConfig::new(kind, tc.seed), &train_set)?)
    } else {
        mc.architecture = a.arch.parse().map_err(|e| {
            UsageError(format!(
                "--arch: {e}; classical options are naive_bayes, linear_svm, random_forest"
            ))
        })?;
        mc.validate()?;
        tc.validate()?;
        let dev_set = match &a.dev {
            Some(p) => read_corpus(p)?,
            None => Dataset::empty("dev"),
        };
        let mut observer = |r: &absa_core::models::EpochRecord| {
            log::info!(
                "epoch {:>3}  loss {:.4}  dev aspect F1 {:.4}  dev sentiment F1 {:.4}{}",
                r.epoch,
                r.train_loss,
                r.dev_aspect_f1,
                r.dev_sentiment_f1,
                if r.improved { "  *" } else { "" }
            );
        };
        AnyModel::Neural(train(&mc, &tc, &train_set, &dev_set, &mut observer)?)
    };
    model.save(&a.out)?;
    let id = model.model_id().to_string();
    log::info!("saved {} to {}", id, a.out.display());
    if a.json {
        let history = match &model {
            AnyModel::Neural(m) => serde_json::to_value(m.history())?,
            AnyModel::Classic(_) => serde_json::Value::Null,
        };
        print_json(
            &json!({ "model_id": id, "kind": model.kind(), "seed": tc.seed, "bundle": a.out, "history": history }),
        )
    } else {
        println!("{id}");
        Ok(())
    }
}

fn eval(a: EvalArgs) -> Result<()> {
    let test = read_corpus(&a.test)?;
    let gold = test.gold_labels()?;
    let mut reports: Vec<SystemReport> = Vec::with_capacity(a.models.len());
    for dir in &a.models {
        let model = load_model(dir).with_context(|| format!("loading model {}", dir.display()))?;
        let pred: Vec<_> = test.comments().iter().map(|c| model.predict_labels(&c.text)).collect();
        let mut report = evaluate(model.model_id(), &gold, &pred)?;
        let mut meta = vec![
            ("model_id", model.model_id().to_string()),
            ("model_kind", model.kind()),
            ("test_file", a.test.display().to_string()),
            ("n_test", test.len().to_string()),
        ];
        match &model {
            AnyModel::Neural(m) => {
                meta.push(("seed", m.train_config().seed.to_string()));
                meta.push(("model_config", serde_json::to_string(m.config())?));
                meta.push(("train_config", serde_json::to_string(m.train_config())?));
            }
            AnyModel::Classic(m) => {
                meta.push(("seed", m.config().seed.to_string()));
                meta.push(("model_config", serde_json::to_string(m.config())?));
            }
        }
        for r in [&mut report.aspect, &mut report.sentiment] {
            for (k, v) in &meta {
                r.metadata.insert(k.to_string(), v.clone());
            }
        }
        reports.push(report);
    }
    let json_text = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0])?
    } else {
        serde_json::to_string_pretty(&reports)?
    };
    if let Some(out) = &a.out {
        fs::write(out, format!("{json_text}\n")).with_context(|| format!("writing {}", out.display()))?;
    }
    if a.json {
        println!("{json_text}");
    } else {
        print!("{}", render_comparison(&reports)?);
        for r in &reports {
            println!();
            println!("{}", r.system);
            print!("{}", render_per_aspect(r));
        }
    }
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let mut texts = a.texts.clone();
    if let Some(path) = &a.input {
        let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
        for line in io::BufReader::new(file).lines() {
            texts.push(line?);
        }
    }
    if texts.is_empty() {
        return Err(UsageError("give at least one --text or an --in file".into()).into());
    }
    let model = load_model(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let mut out = io::stdout().lock();
    for text in &texts {
        let p = model.predict(text);
        if a.json {
            let line = json!({ "model_id": model.model_id(), "text": text, "prediction": p });
            writeln!(out, "{}", serde_json::to_string(&line)?)?;
        } else {
            let labels = p.decoded.to_label_string();
            writeln!(out, "{}\t{text}", if labels.is_empty() { "-" } else { &labels })?;
        }
    }
    Ok(())
}

fn render_agreement(r: &AgreementReport) -> String {
    let task = match r.task {
        Task::Aspect => "aspect",
        Task::Sentiment => "sentiment",
    };
    let l = &r.latest;
    let mut out = format!(
        "{task} task, round {} ({} annotators, {} items)\n",
        l.round,
        l.annotators.len(),
        l.n_items
    );
    for p in &l.pairs {
        out.push_str(&format!(
            "  {} vs {}: k = {:.4}  Pr(a) = {:.4}  Pr(e) = {:.4}  n = {}\n",
            p.first, p.second, p.kappa.k, p.kappa.pr_a, p.kappa.pr_e, p.kappa.n
        ));
    }
    out.push_str(&format!(
        "  mean k = {:.4}  min k = {:.4}  gate (min k >= {}): {}\n",
        l.mean_kappa,
        l.min_kappa,
        r.threshold,
        if l.gate { "pass" } else { "fail" }
    ));
    if r.series.len() > 1 {
        out.push_str("  rounds:");
        for s in &r.series {
            out.push_str(&format!(" {}={:.4}", s.round, s.mean_kappa));
        }
        out.push('\n');
    }
    out
}

fn kappa(a: KappaArgs) -> Result<()> {
    let mut runs: Vec<AnnotationRun> = Vec::new();
    for path in &a.runs {
        runs.extend(load_annotation_csv(path).with_context(|| format!("reading {}", path.display()))?);
    }
    let tasks: &[Task] = match a.task {
        KappaTask::Aspect => &[Task::Aspect],
        KappaTask::Sentiment => &[Task::Sentiment],
        KappaTask::Both => &[Task::Aspect, Task::Sentiment],
    };
    let reports = tasks
        .iter()
        .map(|&t| pairwise_agreement(&runs, t))
        .collect::<absa_core::Result<Vec<_>>>()?;
    if a.json {
        if reports.len() == 1 {
            print_json(&reports[0])
        } else {
            print_json(&reports)
        }
    } else {
        for r in &reports {
            print!("{}", render_agreement(r));
        }
        Ok(())
    }
}

fn serve(a: ServeArgs) -> Result<()> {
    let config = absa_service::ServiceConfig {
        listen_addr: a.listen,
        data_dir: a.data_dir,
        api_token: std::env::var("API_TOKEN").ok().filter(|t| !t.is_empty()),
    };
    if let Some(dir) = &a.model {
        let state = absa_service::open_state(&config.data_dir, None)?;
        let model = load_model(dir).with_context(|| format!("loading model {}", dir.display()))?;
        let id = state.registry.register(model)?;
        state.registry.activate(&id)?;
    }
    let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    runtime.block_on(absa_service::serve(config))?;
    Ok(())
}
