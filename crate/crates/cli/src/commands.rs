use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use cpgbn_core::corpus::{build_vocabulary, class_names, distinct_terms};
use cpgbn_core::eval::{
    cv_report, extract_features, render_phrase_table, split_report, top_phrases, ExtractConfig,
    FeatureMatrix, SvmConfig, TopicTree,
};
use cpgbn_core::sgmcmc::{TlasgrConfig, TlasgrTrainer};
use cpgbn_core::trace::{TraceRow, TraceWriter};
use cpgbn_core::vae::{
    from_section, predict_label, to_section, AdamConfig, EncoderParams, HybridConfig, HybridTrainer,
    SupervisedHead,
};
use cpgbn_core::{Checkpoint, Corpus, GibbsSampler, Globals, Hyperparams, RngStream, Vocabulary};

use crate::args::*;
use crate::data::{labels_of, load_checkpoint, load_corpus, load_vocab, read_raw, require};
use crate::manifest::Manifest;

fn hyperparams(m: &ModelArgs) -> Hyperparams {
    let mut h = Hyperparams::new(m.filter_width, m.layers.0.clone());
    h.e0 = m.e0;
    h.f0 = m.f0;
    h.eta = vec![m.eta; m.layers.0.len()];
    h
}

fn every(n: usize) -> usize {
    (n / 20).max(1)
}

/// Trace file, or a sink when none was requested.
fn trace_writer<T: TraceRow>(path: Option<&Path>) -> Result<Option<TraceWriter<BufWriter<File>, T>>> {
    path.map(|p| {
        let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
        Ok(TraceWriter::new(BufWriter::new(f))?)
    })
    .transpose()
}

struct Training {
    vocab: Vocabulary,
    corpus: Corpus,
    manifest: Manifest,
}

fn prepare<C: Serialize>(command: &'static str, data: &DataArgs, model: &ModelArgs, config: &C) -> Result<Training> {
    require(&data.corpus)?;
    let vocab = load_vocab(&data.vocab)?;
    let corpus = load_corpus(&data.corpus, &vocab, None, model.filter_width, data.pad_short)?;
    let mut manifest = Manifest::new(command, Some(model.seed), config)?;
    manifest.input(&data.corpus)?;
    manifest.input(&data.vocab)?;
    eprintln!(
        "{} documents, {} tokens, |V| = {}",
        corpus.documents.len(),
        corpus.total_tokens(),
        vocab.len()
    );
    Ok(Training {
        vocab,
        corpus,
        manifest,
    })
}

fn finish(mut manifest: Manifest, out: &TrainOutput) -> Result<()> {
    manifest.output(&out.out)?;
    if let Some(t) = &out.trace {
        manifest.output(t)?;
    }
    let path = manifest.write(out.output.manifest.as_deref(), &out.out)?;
    eprintln!("wrote {} and {}", out.out.display(), path.display());
    Ok(())
}

fn initial_globals(hyper: Hyperparams, vocab: &Vocabulary, seed: u64) -> Result<Globals> {
    Ok(Globals::from_prior(hyper, vocab.len(), &mut RngStream::new(seed, u64::MAX))?)
}

pub fn vocab(a: &VocabArgs) -> Result<()> {
    let raw = read_raw(&a.corpus)?;
    let docs: Vec<Vec<String>> = raw.into_iter().map(|d| d.tokens).collect();
    let v = build_vocabulary(&docs, a.cap)?;
    v.save(&a.out)?;
    eprintln!("{} distinct terms, kept {} plus the unknown term", distinct_terms(&docs), v.len() - 1);
    let mut m = Manifest::new("vocab", None, a)?;
    m.input(&a.corpus)?;
    m.output(&a.out)?;
    m.write(a.output.manifest.as_deref(), &a.out)?;
    Ok(())
}

pub fn train_gibbs(a: &GibbsArgs) -> Result<()> {
    let t = prepare("train-gibbs", &a.data, &a.model, a)?;
    let globals = initial_globals(hyperparams(&a.model), &t.vocab, a.model.seed)?;
    let mut sampler = GibbsSampler::new(globals, t.corpus.observations(), a.model.seed)?;
    let mut trace = trace_writer(a.out.trace.as_deref())?;
    for i in 0..a.sweeps {
        let r = sampler.sweep()?;
        if let Some(w) = trace.as_mut() {
            w.write(&r)?;
        }
        if (i + 1) % every(a.sweeps) == 0 {
            eprintln!("sweep {}: point log-likelihood {:.3}", r.sweep, r.point_loglik.total());
        }
    }
    if let Some(mut w) = trace {
        w.flush()?;
    }
    let settings = serde_json::to_value(a)?;
    Checkpoint::new(sampler.globals, a.model.seed, settings).save(&a.out.out)?;
    finish(t.manifest, &a.out)
}

fn tlasgr_config(s: &ScheduleArgs, local_sweeps: usize) -> TlasgrConfig {
    TlasgrConfig {
        batch_size: s.batch_size,
        eps0: s.eps0,
        tau: s.tau,
        kappa: s.kappa,
        local_sweeps,
        ..TlasgrConfig::default()
    }
}

pub fn train_sgmcmc(a: &SgmcmcArgs) -> Result<()> {
    let t = prepare("train-sgmcmc", &a.data, &a.model, a)?;
    let globals = initial_globals(hyperparams(&a.model), &t.vocab, a.model.seed)?;
    let cfg = tlasgr_config(&a.schedule, a.local_sweeps);
    let mut trainer = TlasgrTrainer::new(globals, t.corpus.observations(), cfg, a.model.seed)?;
    let mut trace = trace_writer(a.out.trace.as_deref())?;
    let n = a.schedule.iterations;
    for i in 0..n {
        let r = trainer.minibatch_sweep()?;
        if let Some(w) = trace.as_mut() {
            w.write(&r)?;
        }
        if (i + 1) % every(n) == 0 {
            eprintln!("iteration {}: batch point log-likelihood {:.3}", r.iteration, r.batch_loglik.total());
        }
    }
    if let Some(mut w) = trace {
        w.flush()?;
    }
    let settings = serde_json::to_value(a)?;
    Checkpoint::new(trainer.globals, a.model.seed, settings).save(&a.out.out)?;
    finish(t.manifest, &a.out)
}

fn hybrid(a: &HybridArgs, supervised: Option<f64>, command: &'static str, config: &impl Serialize) -> Result<()> {
    let t = prepare(command, &a.data, &a.model, config)?;
    let hyper = hyperparams(&a.model);
    let globals = initial_globals(hyper.clone(), &t.vocab, a.model.seed)?;
    let mut rng = RngStream::new(a.model.seed, u64::MAX - 1);
    let encoder = EncoderParams::init(&hyper, t.vocab.len(), &mut rng);
    let cfg = HybridConfig {
        tlasgr: tlasgr_config(&a.schedule, 1),
        adam: AdamConfig {
            lr: a.lr,
            ..AdamConfig::default()
        },
        xi: supervised.unwrap_or(0.0),
    };
    let mut trainer = HybridTrainer::new(globals, encoder, t.corpus.observations(), cfg, a.model.seed)?;
    let mut settings = serde_json::to_value(config)?;
    if let Some(xi) = supervised {
        let labels = labels_of(&t.corpus, &a.data.corpus)?;
        let classes = t.corpus.num_classes().unwrap_or(0);
        let head = SupervisedHead::init(classes, &hyper.layer_widths, xi, &mut rng)?;
        trainer = trainer.with_labels(labels, head)?;
        settings["class_names"] = serde_json::to_value(&t.corpus.class_names)?;
    }
    let mut trace = trace_writer(a.out.trace.as_deref())?;
    let n = a.schedule.iterations;
    for i in 0..n {
        let r = trainer.iterate()?;
        if let Some(w) = trace.as_mut() {
            w.write(&r)?;
        }
        if (i + 1) % every(n) == 0 {
            eprintln!("iteration {}: ELBO {:.3}, cross-entropy {:.4}", r.iteration, r.elbo, r.class);
        }
    }
    if let Some(mut w) = trace {
        w.flush()?;
    }
    let mut ckpt = Checkpoint::new(trainer.globals.clone(), a.model.seed, settings.clone());
    ckpt.encoder = Some(to_section(&trainer.encoder, trainer.head.as_ref(), settings)?);
    ckpt.save(&a.out.out)?;
    finish(t.manifest, &a.out)
}

pub fn train_hybrid(a: &HybridArgs) -> Result<()> {
    hybrid(a, None, "train-hybrid", a)
}

pub fn train_supervised(a: &SupervisedArgs) -> Result<()> {
    hybrid(&a.hybrid, Some(a.xi), "train-supervised", a)
}

pub fn extract(a: &ExtractArgs) -> Result<()> {
    require(&a.data.corpus)?;
    let ckpt = load_checkpoint(&a.model)?;
    let vocab = load_vocab(&a.data.vocab)?;
    ensure!(
        vocab.len() == ckpt.globals.bank.vocab_size(),
        "vocabulary has {} terms but the model was trained on {}",
        vocab.len(),
        ckpt.globals.bank.vocab_size()
    );
    let f = ckpt.globals.hyper.filter_width;
    let corpus = load_corpus(&a.data.corpus, &vocab, None, f, a.data.pad_short)?;
    let cfg = ExtractConfig {
        burn_in: a.burn_in,
        collect: a.collect,
    };
    let features = extract_features(&ckpt.globals, corpus.observations(), cfg, a.seed)?;
    let file = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    features.write_csv(BufWriter::new(file))?;
    let mut m = Manifest::new("extract", Some(a.seed), a)?;
    for p in [&a.data.corpus, &a.data.vocab, &a.model] {
        m.input(p)?;
    }
    m.output(&a.out)?;
    m.write(a.output.manifest.as_deref(), &a.out)?;
    eprintln!("wrote {} x {} features to {}", features.rows, features.cols, a.out.display());
    Ok(())
}

fn read_features(path: &Path) -> Result<Vec<Vec<f64>>> {
    require(path)?;
    let f = File::open(path)?;
    Ok(FeatureMatrix::read_csv(f)
        .with_context(|| format!("reading features {}", path.display()))?
        .to_rows())
}

/// Labels of a raw corpus file mapped onto `names`.
fn raw_labels(path: &Path, names: &[String]) -> Result<Vec<usize>> {
    read_raw(path)?
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let l = d
                .label
                .as_ref()
                .with_context(|| format!("{} has no labels", path.display()))?;
            names
                .iter()
                .position(|n| n == l)
                .with_context(|| format!("document {}: unknown class {l:?}", j + 1))
        })
        .collect()
}

#[derive(Serialize)]
struct PredictionReport {
    accuracy: f64,
    documents: usize,
    classes: usize,
}

pub fn classify(a: &ClassifyArgs) -> Result<()> {
    require(&a.corpus)?;
    let mut m = Manifest::new("classify", Some(a.seed), a)?;
    let json = match (&a.features, &a.model) {
        (Some(fp), _) => {
            let names = class_names(&read_raw(&a.corpus)?)
                .with_context(|| format!("{} has no labels", a.corpus.display()))?;
            let x = read_features(fp)?;
            let y = raw_labels(&a.corpus, &names)?;
            ensure!(x.len() == y.len(), "{} feature rows for {} documents", x.len(), y.len());
            m.input(&a.corpus)?;
            m.input(fp)?;
            let cfg = SvmConfig {
                lambda: a.lambda,
                epochs: a.epochs,
                standardize: true,
            };
            let report = match (&a.test_corpus, &a.test_features) {
                (Some(tc), Some(tf)) => {
                    let tx = read_features(tf)?;
                    let ty = raw_labels(tc, &names)?;
                    ensure!(tx.len() == ty.len(), "{} test rows for {} documents", tx.len(), ty.len());
                    m.input(tc)?;
                    m.input(tf)?;
                    split_report((&x, &y), (&tx, &ty), a.runs, &cfg, a.seed)?
                }
                (None, None) => cv_report(&x, &y, a.folds, a.runs, &cfg, a.seed)?,
                _ => bail!("--test-corpus and --test-features go together"),
            };
            eprintln!("accuracy {:.4} +- {:.4} over {} runs", report.mean, report.std, report.runs.len());
            serde_json::to_string_pretty(&report)?
        }
        (None, Some(mp)) => {
            let vp = a.vocab.as_ref().context("--model needs --vocab")?;
            let ckpt = load_checkpoint(mp)?;
            let section = ckpt.encoder.as_ref().context("checkpoint has no encoder")?;
            let (encoder, head) = from_section(section)?;
            let head = head.context("checkpoint has no classifier head")?;
            let names: Option<Vec<String>> = serde_json::from_value(ckpt.settings["class_names"].clone())?;
            let names = names.context("checkpoint lacks class names")?;
            let vocab = load_vocab(vp)?;
            let path = a.test_corpus.as_ref().unwrap_or(&a.corpus);
            let f = ckpt.globals.hyper.filter_width;
            let corpus = load_corpus(path, &vocab, Some(&names), f, a.pad_short)?;
            let labels = labels_of(&corpus, path)?;
            let mut hits = 0;
            for (d, &y) in corpus.documents.iter().zip(&labels) {
                let (pred, _) = predict_label(&d.observation(), &encoder, &ckpt.globals.layers, &head)?;
                hits += usize::from(pred == y);
            }
            m.input(path)?;
            m.input(vp)?;
            m.input(mp)?;
            let report = PredictionReport {
                accuracy: hits as f64 / labels.len() as f64,
                documents: labels.len(),
                classes: names.len(),
            };
            eprintln!("accuracy {:.4} on {} documents", report.accuracy, report.documents);
            serde_json::to_string_pretty(&report)?
        }
        (None, None) => bail!("classify needs --features or --model"),
    };
    fs::write(&a.out, json + "\n")?;
    m.output(&a.out)?;
    m.write(a.output.manifest.as_deref(), &a.out)?;
    Ok(())
}

fn model_vocab(model: &Path, vocab: &Path) -> Result<(Checkpoint, Vocabulary)> {
    let ckpt = load_checkpoint(model)?;
    let v = load_vocab(vocab)?;
    ensure!(
        v.len() == ckpt.globals.bank.vocab_size(),
        "vocabulary has {} terms but the model has {}",
        v.len(),
        ckpt.globals.bank.vocab_size()
    );
    Ok((ckpt, v))
}

pub fn phrases(a: &PhrasesArgs) -> Result<()> {
    let (ckpt, vocab) = model_vocab(&a.model, &a.vocab)?;
    let tables = top_phrases(&ckpt.globals.bank, a.top_n)?;
    let text = if a.out.extension().is_some_and(|e| e == "json") {
        #[derive(Serialize)]
        struct Row {
            kernel: usize,
            columns: Vec<Vec<(String, f64)>>,
            phrases: Vec<(String, f64)>,
        }
        let name = |w: u32| vocab.term(w).unwrap_or("?").to_string();
        let rows: Vec<Row> = tables
            .iter()
            .map(|t| Row {
                kernel: t.kernel,
                columns: t.columns.iter().map(|c| c.iter().map(|&(w, p)| (name(w), p)).collect()).collect(),
                phrases: t.phrases.iter().map(|p| (p.render(Some(&vocab)), p.score)).collect(),
            })
            .collect();
        serde_json::to_string_pretty(&rows)? + "\n"
    } else {
        render_phrase_table(&tables, Some(&vocab))
    };
    fs::write(&a.out, text)?;
    let mut m = Manifest::new("phrases", None, a)?;
    m.input(&a.model)?;
    m.input(&a.vocab)?;
    m.output(&a.out)?;
    m.write(a.output.manifest.as_deref(), &a.out)?;
    Ok(())
}

pub fn tree(a: &TreeArgs) -> Result<()> {
    let (ckpt, vocab) = model_vocab(&a.model, &a.vocab)?;
    let layers = &ckpt.globals.layers;
    ensure!(layers.depth() >= 2, "the model has a single layer; trees need at least two");
    let root_layer = a.root_layer.unwrap_or(layers.depth());
    let fan_out = match a.fan_out.0.as_slice() {
        [m] => vec![*m; root_layer.saturating_sub(1)],
        f => f.to_vec(),
    };
    let tree = TopicTree::build(layers, &ckpt.globals.bank, (root_layer, a.root_node), &fan_out)?;
    let mut w = BufWriter::new(File::create(&a.out)?);
    w.write_all(tree.to_dot(Some(&vocab)).as_bytes())?;
    w.flush()?;
    let mut m = Manifest::new("tree", None, a)?;
    m.input(&a.model)?;
    m.input(&a.vocab)?;
    m.output(&a.out)?;
    m.write(a.output.manifest.as_deref(), &a.out)?;
    eprintln!("tree with {:?} nodes per layer", tree.layer_counts());
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct TraceSummary {
    pub column: String,
    pub rows: usize,
    pub first_window_mean: f64,
    pub last_window_mean: f64,
    pub best: f64,
    pub last: f64,
    pub improved: bool,
}

pub fn summarize_trace(path: &Path, column: Option<&str>, window: f64) -> Result<TraceSummary> {
    require(path)?;
    ensure!(window > 0.0 && window <= 0.5, "window must lie in (0, 0.5]");
    let mut rdr = csv::Reader::from_reader(File::open(path)?);
    let header = rdr.headers()?.clone();
    let idx = match column {
        Some(c) => header
            .iter()
            .position(|h| h == c)
            .with_context(|| format!("no column {c:?} in {}", path.display()))?,
        None => {
            ensure!(header.len() >= 2, "trace needs at least two columns");
            1
        }
    };
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let v: f64 = rec
            .get(idx)
            .context("short trace row")?
            .parse()
            .with_context(|| format!("parsing {}", path.display()))?;
        values.push(v);
    }
    ensure!(!values.is_empty(), "empty trace");
    let w = ((values.len() as f64 * window).ceil() as usize).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let first = mean(&values[..w]);
    let last = mean(&values[values.len() - w..]);
    Ok(TraceSummary {
        column: header[idx].to_string(),
        rows: values.len(),
        first_window_mean: first,
        last_window_mean: last,
        best: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        last: *values.last().expect("nonempty"),
        improved: last > first,
    })
}

pub fn eval_trace(a: &EvalTraceArgs) -> Result<()> {
    let s = summarize_trace(&a.trace, a.column.as_deref(), a.window)?;
    let json = serde_json::to_string_pretty(&s)? + "\n";
    match &a.out {
        Some(p) => fs::write(p, json)?,
        None => print!("{json}"),
    }
    Ok(())
}
