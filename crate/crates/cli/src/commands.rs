use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use kgctx_core::concepts::{EntailmentInstance, LabelSet};
use kgctx_core::cost::{build_cost_graph, CostGraph, CostKind};
use kgctx_core::grn::{
    evaluate, load_checkpoint, load_embeddings, save_checkpoint, train_with, GrnModel, PathTokenMode, TokenVocab,
};
use kgctx_core::kg::{ingest_conceptnet, load_snapshot, multi_edge_relation_stats, open_assertions, save_snapshot};
use kgctx_core::paths::{bundle_stats, contextualize_all, read_bundles, write_bundles, BundleRecord};
use kgctx_core::sha256_hex;

use crate::config::PipelineConfig;
use crate::{EvalArgs, ExtractArgs, IngestArgs, StatsArgs, TrainArgs, UsageError, WeightArgs};

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn load_bundles(path: &Path) -> anyhow::Result<Vec<BundleRecord>> {
    read_bundles(open(path)?).with_context(|| format!("reading {}", path.display()))
}

/// Must run before the first parallel section. Results never depend on
/// the worker count, only throughput does.
fn set_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        std::env::set_var("RAYON_NUM_THREADS", n.max(1).to_string());
    }
}

fn parse_mode(s: &str) -> anyhow::Result<PathTokenMode> {
    s.parse().map_err(|e| UsageError(format!("{e}")).into())
}

pub fn ingest(args: IngestArgs) -> anyhow::Result<()> {
    let cfg = PipelineConfig::load(args.config.as_deref())?;
    let lang = args.lang.unwrap_or(cfg.lang);
    let reader = open_assertions(&args.assertions)?;
    let (graph, report) =
        ingest_conceptnet(reader, &lang).with_context(|| format!("reading {}", args.assertions.display()))?;
    save_snapshot(&graph, &args.out)?;
    println!("{report}");
    print!("{}", report.to_key_values());
    println!("fingerprint={}", graph.fingerprint_hex());
    Ok(())
}

pub fn weight(args: WeightArgs) -> anyhow::Result<()> {
    let cfg = PipelineConfig::load(args.config.as_deref())?;
    let kind: CostKind = args.cost.as_deref().unwrap_or(&cfg.cost).parse()?;
    let graph = load_snapshot(&args.graph)?;
    let cg = build_cost_graph(&graph, kind);
    let summary = cg.validate()?;
    cg.save(&args.out)?;
    println!("cost={kind}");
    println!("edges={}", summary.edges);
    println!("min={}", summary.min);
    println!("max={}", summary.max);
    println!("mean={}", summary.mean);
    println!("graph={}", graph.fingerprint_hex());
    Ok(())
}

/// Parses instance lines; bad lines are reported and skipped.
fn read_instances(path: &Path, labels: &LabelSet) -> anyhow::Result<(Vec<EntailmentInstance>, usize)> {
    let mut out = Vec::new();
    let mut skipped = 0;
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<EntailmentInstance>(&line)
            .map_err(anyhow::Error::from)
            .and_then(|inst| inst.validate(labels).map(|_| inst).map_err(Into::into));
        match parsed {
            Ok(inst) => out.push(inst),
            Err(e) => {
                eprintln!("{}:{}: skipped: {e}", path.display(), i + 1);
                skipped += 1;
            }
        }
    }
    Ok((out, skipped))
}

pub fn extract(args: ExtractArgs) -> anyhow::Result<()> {
    let mut cfg = PipelineConfig::load(args.config.as_deref())?;
    set_threads(args.threads);
    if let Some(h) = args.max_hops {
        cfg.max_hops = h;
    }
    if args.directed {
        cfg.undirected = false;
    } else if args.undirected {
        cfg.undirected = true;
    }
    if let Some(v) = args.hop_limit {
        cfg.hop_limit = v;
    }
    if let Some(v) = args.tie_break {
        cfg.tie_break = v;
    }
    if let Some(v) = args.max_ngram {
        cfg.max_ngram = v;
    }
    if let Some(v) = args.stopwords {
        cfg.stopwords = Some(v);
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    let labels = match args.labels {
        Some(l) => LabelSet::new(l)?,
        None => cfg.model.labels.clone(),
    };
    let opts = cfg.search_options()?;
    let extraction = cfg.extraction()?;

    let graph = load_snapshot(&args.graph)?;
    let cg = CostGraph::load(&graph, &args.cost)?;
    let (instances, skipped) = read_instances(&args.data, &labels)?;
    let bundles = contextualize_all(&instances, &cg, &extraction, &opts, cfg.seed)?;
    let records: Vec<BundleRecord> = bundles.iter().map(|b| b.to_record(&graph)).collect();
    write_bundles(create(&args.out)?, &records)?;

    println!("cost={}", cg.kind());
    println!("max_hops={} undirected={} hop_limit={}", opts.max_hops, opts.undirected, opts.hop_limit);
    println!("skipped_lines={skipped}");
    println!("{}", bundle_stats(&records));
    Ok(())
}

pub fn stats(args: StatsArgs) -> anyhow::Result<()> {
    if let Some(path) = &args.graph {
        let graph = load_snapshot(path)?;
        println!("nodes={}", graph.node_count());
        println!("edges={}", graph.edge_count());
        println!("relations={}", graph.relation_count());
        print!("{}", multi_edge_relation_stats(&graph).display(&graph));
    }
    if let Some(path) = &args.bundles {
        println!("{}", bundle_stats(&load_bundles(path)?));
    }
    Ok(())
}

fn history_path(model: &Path) -> PathBuf {
    let mut name = model.as_os_str().to_owned();
    name.push(".history.jsonl");
    PathBuf::from(name)
}

pub fn train(args: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = PipelineConfig::load(args.config.as_deref())?;
    set_threads(args.threads);
    if let Some(m) = &args.mode {
        cfg.model.mode = parse_mode(m)?;
    }
    if let Some(e) = args.epochs {
        cfg.train.max_epochs = e;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.freeze_embeddings {
        cfg.train.freeze_embeddings = true;
    }
    if let Some(p) = args.embeddings {
        cfg.embeddings = Some(p);
    }
    cfg.model.validate()?;
    let train_cfg = cfg.train_config();
    train_cfg.validate()?;

    let train_bytes = std::fs::read(&args.paths).with_context(|| format!("cannot open {}", args.paths.display()))?;
    let train_set = read_bundles(&train_bytes[..]).with_context(|| format!("reading {}", args.paths.display()))?;
    let dev_set = args.dev.as_deref().map(load_bundles).transpose()?;

    let vocab = TokenVocab::from_bundles(&train_set, cfg.model.mode);
    let mut model = GrnModel::new(cfg.model.clone(), vocab, cfg.seed)?;
    model.data_hash = Some(sha256_hex(&train_bytes));
    if let Some(path) = &cfg.embeddings {
        let cov = load_embeddings(&mut model, open(path)?).with_context(|| format!("reading {}", path.display()))?;
        println!(
            "embeddings matched={} vocab={} coverage={:.4} malformed={}",
            cov.matched, cov.vocab_size, cov.coverage, cov.malformed
        );
    }

    let history_file = args.history.unwrap_or_else(|| history_path(&args.model));
    let mut history = create(&history_file)?;
    let mut write_err = None;
    let (best, records) = train_with(&model, &train_set, dev_set.as_deref(), &train_cfg, |rec| {
        eprintln!(
            "epoch {} loss {:.6} {}",
            rec.epoch,
            rec.train_loss,
            match (rec.dev_acc, rec.train_acc) {
                (Some(a), _) => format!("dev_acc {a:.4}"),
                (None, Some(a)) => format!("train_acc {a:.4}"),
                _ => String::new(),
            }
        );
        let line = serde_json::to_string(rec).expect("history record serializes");
        if let Err(e) = writeln!(history, "{line}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e).with_context(|| format!("writing {}", history_file.display()));
    }
    history.flush()?;
    save_checkpoint(&best, &args.model)?;

    let train_eval = evaluate(&best, &train_set)?;
    println!("mode={}", best.config.mode);
    println!("vocab={}", best.vocab.len());
    println!("parameters={}", best.weights.parameter_count());
    println!("epochs={}", records.len());
    println!("train_accuracy={}", fmt_acc(train_eval.accuracy));
    if let Some(dev) = &dev_set {
        println!("dev_accuracy={}", fmt_acc(evaluate(&best, dev)?.accuracy));
    }
    Ok(())
}

fn fmt_acc(a: Option<f64>) -> String {
    a.map_or_else(|| "none".to_string(), |a| format!("{a:.6}"))
}

pub fn eval(args: EvalArgs) -> anyhow::Result<()> {
    set_threads(args.threads);
    let model = load_checkpoint(&args.model)?;
    if let Some(m) = &args.mode {
        let mode = parse_mode(m)?;
        if mode != model.config.mode {
            return Err(UsageError(format!(
                "--mode {mode} does not match the checkpoint, which was trained on {}",
                model.config.mode
            ))
            .into());
        }
    }
    let bundles = load_bundles(&args.paths)?;
    let e = evaluate(&model, &bundles)?;
    println!("count={}", e.count);
    println!("correct={}", e.correct);
    println!("accuracy={}", fmt_acc(e.accuracy));
    println!("labels={}", e.labels.join(","));
    for (label, row) in e.labels.iter().zip(&e.confusion) {
        let counts: Vec<String> = row.iter().map(usize::to_string).collect();
        println!("confusion.{label}={}", counts.join(","));
    }
    if let Some(path) = &args.predictions {
        let mut w = create(path)?;
        for (b, p) in bundles.iter().zip(&e.predictions) {
            let line = serde_json::json!({ "id": b.id, "gold": b.label, "predicted": p });
            writeln!(w, "{line}")?;
        }
        w.flush()?;
    }
    Ok(())
}
