use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use slm_core::ablation::{run_grid, GridRow, GridSettings, GRID_CSV_HEADER};
use slm_core::corpus::{write_csv_roc, write_jsonl};
use slm_core::embedding::write_embeddings;
use slm_core::metrics::{evaluate as score, EvalReport};
use slm_core::model::{load_checkpoint, save_checkpoint};
use slm_core::{
    embed_story, init_params, load_corpus, load_embeddings, order_story, split_corpus, template_stories,
    train_from, Checkpoint, CorpusFormat, EmbeddedStory, Error, ModelConfig, Permutation, Scorer,
    ScorerKind, StoryOrder, Strategy,
};

use crate::config::{Config, EncoderFile};
use crate::meta::{self, Meta};
use crate::{AblateArgs, EncodeArgs, EvaluateArgs, Invalid, OrderArgs, Part, SynthArgs, TrainArgs};

fn select<T: Clone>(items: Vec<T>, part: Part, cfg: &Config) -> slm_core::Result<Vec<T>> {
    if part == Part::All {
        return Ok(items);
    }
    let split = split_corpus(&items, &cfg.split.spec(cfg.seed)?)?;
    Ok(match part {
        Part::Train => split.train,
        Part::Validation => split.validation,
        Part::Test => split.test,
        Part::All => unreachable!(),
    })
}

fn corpus_dim(stories: &[EmbeddedStory<f64>]) -> Result<usize, Invalid> {
    let first = stories
        .first()
        .ok_or_else(|| Invalid("embedding file has no stories".into()))?;
    let d = first.dim();
    if let Some(s) = stories.iter().find(|s| s.dim() != d) {
        return Err(Invalid(format!(
            "story {:?} has dimension {} but {:?} has {d}",
            s.story_id,
            s.dim(),
            first.story_id
        )));
    }
    Ok(d)
}

fn format_for(path: &Path, explicit: Option<CorpusFormat>) -> CorpusFormat {
    explicit.unwrap_or_else(|| CorpusFormat::from_path(path))
}

pub fn encode(mut cfg: Config, a: &EncodeArgs) -> anyhow::Result<()> {
    if let Some(d) = a.dim {
        cfg.encode.dim = d;
    }
    if a.format.is_some() {
        cfg.encode.format = a.format;
    }
    if cfg.encode.dim == 0 {
        return Err(Invalid("embedding dimension must be positive".into()).into());
    }
    let stories = load_corpus(&a.corpus, format_for(&a.corpus, cfg.encode.format))
        .with_context(|| format!("reading {}", a.corpus.display()))?;
    let meta = Meta::new("encode", &cfg, &[("corpus", &a.corpus)])?;
    let embedded = stories
        .par_iter()
        .map(|s| embed_story::<f64>(s, cfg.encode.dim, cfg.seed))
        .collect::<slm_core::Result<Vec<_>>>()?;
    write_embeddings(&embedded, Some(meta.value()), meta::create(&a.out)?)?;
    eprintln!(
        "encoded {} stories at d={} -> {}",
        embedded.len(),
        cfg.encode.dim,
        a.out.display()
    );
    Ok(())
}

pub fn train(mut cfg: Config, a: &TrainArgs) -> anyhow::Result<()> {
    if let Some(b) = a.backbone {
        cfg.model.backbone = b;
    }
    if let Some(e) = a.epochs {
        cfg.training.epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        cfg.training.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        cfg.training.batch_size = b;
    }
    if let Some(l2) = a.l2 {
        cfg.training.l2 = l2;
    }
    cfg.training.seed = cfg.seed;
    cfg.training.validate()?;

    let stories = select(load_embeddings::<f64>(&a.embeddings)?, a.part, &cfg)?;
    let d = corpus_dim(&stories)?;
    let (params, epochs_done) = match &a.resume {
        Some(path) => {
            let ck: Checkpoint<f64> =
                load_checkpoint(path).with_context(|| format!("reading {}", path.display()))?;
            if ck.params.config.d != d {
                return Err(Error::DimensionMismatch {
                    record: 0,
                    expected: ck.params.config.d,
                    found: d,
                }
                .into());
            }
            cfg.model.backbone = ck.params.config.backbone;
            (ck.params, ck.epochs_done)
        }
        None => (init_params(&cfg.model.resolve(d, cfg.seed)?)?, 0),
    };

    let mut inputs: Vec<(&str, &Path)> = vec![("embeddings", &a.embeddings)];
    if let Some(r) = &a.resume {
        inputs.push(("resume", r));
    }
    let meta = Meta::new("train", &cfg, &inputs)?;
    let outcome = train_from(params, &stories, &cfg.training, epochs_done)?;
    let ck = Checkpoint {
        params: outcome.params,
        epochs_done: epochs_done + cfg.training.epochs,
        training: Some(cfg.training.clone()),
        metadata: meta.value().clone(),
    };
    save_checkpoint(&ck, &a.out)?;

    let trace_path = a
        .trace
        .clone()
        .unwrap_or_else(|| a.out.with_extension("loss.csv"));
    let append = a.resume.is_some() && trace_path.exists();
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(&trace_path)
        .map_err(|e| Error::io(&trace_path, e))?;
    let mut w = std::io::BufWriter::new(file);
    if !append {
        meta::write_line(&mut w, &meta.csv_comment(), &trace_path)?;
        meta::write_line(&mut w, "epoch,mean_loss,learning_rate", &trace_path)?;
    }
    for e in &outcome.trace {
        meta::write_line(
            &mut w,
            &format!("{},{:.10e},{:.10e}", e.epoch, e.mean_loss, e.learning_rate),
            &trace_path,
        )?;
    }
    meta::finish(w, &trace_path)?;

    let first = outcome.trace.first().map_or(f64::NAN, |e| e.mean_loss);
    let last = outcome.trace.last().map_or(f64::NAN, |e| e.mean_loss);
    eprintln!(
        "trained {} on {} stories, epochs {}..={}, loss {first:.4} -> {last:.4}",
        ck.params.config.backbone,
        stories.len(),
        epochs_done + 1,
        ck.epochs_done
    );
    Ok(())
}

pub fn order(mut cfg: Config, a: &OrderArgs) -> anyhow::Result<()> {
    if let Some(s) = a.strategy {
        cfg.order.strategy = s;
    }
    if let Some(s) = a.scorer {
        cfg.order.scorer = s;
    }
    let stories = select(load_embeddings::<f64>(&a.embeddings)?, a.part, &cfg)?;
    if stories.is_empty() {
        return Err(Invalid("no stories to order".into()).into());
    }

    let checkpoint = match (cfg.order.scorer, &a.checkpoint) {
        (ScorerKind::LmCosine, None) => {
            return Err(Invalid("the lm-cosine scorer needs --checkpoint".into()).into())
        }
        (ScorerKind::LmCosine, Some(path)) => {
            let ck: Checkpoint<f64> =
                load_checkpoint(path).with_context(|| format!("reading {}", path.display()))?;
            let d = corpus_dim(&stories)?;
            if ck.params.config.d != d {
                return Err(Error::DimensionMismatch {
                    record: 0,
                    expected: ck.params.config.d,
                    found: d,
                }
                .into());
            }
            Some(ck)
        }
        _ => None,
    };
    let scorer = match cfg.order.scorer {
        ScorerKind::LmCosine => Scorer::Model(&checkpoint.as_ref().expect("loaded above").params),
        ScorerKind::CbowCosine => Scorer::EmbeddingCosine,
        ScorerKind::NgramOverlap => Scorer::NgramOverlap {
            max_n: cfg.order.max_n,
        },
        ScorerKind::Oracle => Scorer::Oracle,
    };

    let mut inputs: Vec<(&str, &Path)> = vec![("embeddings", &a.embeddings)];
    if let (Some(path), Some(_)) = (&a.checkpoint, &checkpoint) {
        inputs.push(("checkpoint", path));
    }
    let meta = Meta::new("order", &cfg, &inputs)?;
    let orders = stories
        .par_iter()
        .map(|s| {
            order_story(s, scorer, cfg.order.strategy, cfg.seed)
                .with_context(|| format!("story {:?}", s.story_id))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut w = meta::create(&a.out)?;
    meta::write_line(&mut w, &meta.jsonl_line(), &a.out)?;
    for o in &orders {
        meta::write_line(&mut w, &serde_json::to_string(o)?, &a.out)?;
    }
    meta::finish(w, &a.out)?;
    let exact = orders
        .iter()
        .filter(|o| o.predicted_order.iter().enumerate().all(|(i, &p)| i == p))
        .count();
    eprintln!(
        "ordered {} stories with {} / {}; {exact} in gold order",
        orders.len(),
        cfg.order.scorer,
        cfg.order.strategy
    );
    Ok(())
}

fn read_predictions(path: &Path) -> anyhow::Result<Vec<StoryOrder>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.trim_start().starts_with("{\"_meta\"") {
            continue;
        }
        let o: StoryOrder = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(o);
    }
    if out.is_empty() {
        return Err(Invalid(format!("{} holds no predictions", path.display())).into());
    }
    Ok(out)
}

/// Checks one record against its gold story length and its own fields.
fn check_prediction(o: &StoryOrder, gold_len: usize) -> anyhow::Result<()> {
    let bad = |msg: String| Invalid(format!("story {:?}: {msg}", o.story_id));
    if o.predicted_order.len() != gold_len {
        return Err(bad(format!(
            "prediction has {} sentences, gold has {gold_len}",
            o.predicted_order.len()
        ))
        .into());
    }
    if !o.gold_perm.is_empty() || !o.shuffled_order.is_empty() {
        let gp = Permutation::new(o.gold_perm.clone())?;
        let so = Permutation::new(o.shuffled_order.clone())?;
        if gp.len() != gold_len || gp.compose(&so)?.as_slice() != o.predicted_order.as_slice() {
            return Err(bad("predicted_order disagrees with gold_perm and shuffled_order".into()).into());
        }
    }
    Ok(())
}

pub fn evaluate(cfg: Config, a: &EvaluateArgs) -> anyhow::Result<()> {
    let gold = select(
        load_corpus(&a.gold, format_for(&a.gold, a.gold_format))
            .with_context(|| format!("reading {}", a.gold.display()))?,
        a.part,
        &cfg,
    )?;
    let lens: HashMap<&str, usize> = gold.iter().map(|s| (s.story_id.as_str(), s.len())).collect();
    let orders = read_predictions(&a.predictions)?;

    let mut seen = HashSet::new();
    let mut preds = Vec::with_capacity(orders.len());
    for o in &orders {
        let len = *lens
            .get(o.story_id.as_str())
            .ok_or_else(|| Error::UnknownStory(o.story_id.clone()))?;
        if !seen.insert(o.story_id.as_str()) {
            return Err(Error::DuplicateStoryId(o.story_id.clone()).into());
        }
        check_prediction(o, len)?;
        preds.push(o.prediction()?);
    }
    if let Some(missing) = gold.iter().find(|s| !seen.contains(s.story_id.as_str())) {
        return Err(Invalid(format!("no prediction for story_id {:?}", missing.story_id)).into());
    }
    let report = score(&preds)?;
    let meta = Meta::new("evaluate", &cfg, &[("predictions", &a.predictions), ("gold", &a.gold)])?;
    if let Some(path) = &a.out_json {
        write_report_json(&report, &meta, path)?;
    }
    if let Some(path) = &a.out_csv {
        write_report_csv(&report, &meta, path)?;
    }
    println!(
        "stories {}  tau {:.6}  pmr {:.6}  pairwise {:.6}",
        report.story_count, report.mean_tau, report.pmr, report.mean_pairwise_ratio
    );
    Ok(())
}

fn write_report_json(report: &EvalReport, meta: &Meta, path: &Path) -> anyhow::Result<()> {
    let mut value = serde_json::to_value(report)?;
    value
        .as_object_mut()
        .expect("report is an object")
        .insert("_meta".into(), meta.value().clone());
    let mut w = meta::create(path)?;
    serde_json::to_writer_pretty(&mut w, &value)?;
    meta::write_line(&mut w, "", path)?;
    Ok(meta::finish(w, path)?)
}

fn write_report_csv(report: &EvalReport, meta: &Meta, path: &Path) -> anyhow::Result<()> {
    let mut w = meta::create(path)?;
    meta::write_line(&mut w, &meta.csv_comment(), path)?;
    let mut csv = csv_writer(&mut w);
    csv.write_record(["story_id", "tau", "exact_match", "pairwise_ratio"])?;
    for s in &report.stories {
        csv.write_record([
            s.story_id.clone(),
            s.tau.to_string(),
            (s.exact_match as u8).to_string(),
            s.pairwise_ratio.to_string(),
        ])?;
    }
    csv.flush()?;
    drop(csv);
    Ok(meta::finish(w, path)?)
}

fn csv_writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

fn parse_encoder(spec: &str) -> Result<EncoderFile, Invalid> {
    let (name, path) = spec
        .split_once('=')
        .ok_or_else(|| Invalid(format!("--encoder expects name=path, got {spec:?}")))?;
    if name.is_empty() || path.is_empty() {
        return Err(Invalid(format!("--encoder expects name=path, got {spec:?}")));
    }
    Ok(EncoderFile {
        name: name.to_string(),
        path: PathBuf::from(path),
    })
}

pub fn ablate(mut cfg: Config, a: &AblateArgs) -> anyhow::Result<()> {
    if !a.encoders.is_empty() {
        cfg.ablate.encoders = a
            .encoders
            .iter()
            .map(|s| parse_encoder(s))
            .collect::<Result<_, _>>()?;
    }
    if !a.models.is_empty() {
        cfg.ablate.models = a.models.clone();
    }
    if let Some(e) = a.epochs {
        cfg.training.epochs = e;
    }
    cfg.training.seed = cfg.seed;
    if cfg.ablate.encoders.is_empty() {
        return Err(Invalid("no encoders given (--encoder name=path or ablate.encoders)".into()).into());
    }
    if cfg.ablate.models.is_empty() {
        return Err(Invalid("no models given".into()).into());
    }
    cfg.training.validate()?;
    let split = cfg.split.spec(cfg.seed)?;

    let inputs: Vec<(&str, &Path)> = cfg
        .ablate
        .encoders
        .iter()
        .filter(|e| e.path.exists())
        .map(|e| (e.name.as_str(), e.path.as_path()))
        .collect();
    let meta = Meta::new("ablate", &cfg, &inputs)?;

    let mut rows = Vec::new();
    for enc in &cfg.ablate.encoders {
        let loaded = load_embeddings::<f64>(&enc.path).and_then(|s| {
                corpus_dim(&s)
                    .map(|d| (s, d))
                    .map_err(|e| Error::Config(e.0))
            });
        match loaded {
            Ok((stories, d)) => {
                let mut template = ModelConfig::new(d, cfg.model.backbone, cfg.seed);
                if let Some(heads) = cfg.model.heads {
                    template.heads = heads;
                }
                if let Some(t) = cfg.model.depth_steps {
                    template.depth_steps = t;
                }
                let settings = GridSettings {
                    model: template,
                    hidden_multiplier: cfg.ablate.hidden_multiplier,
                    training: cfg.training.clone(),
                    split: split.clone(),
                    order_seed: cfg.seed,
                };
                rows.extend(run_grid(&[(enc.name.clone(), stories)], &cfg.ablate.models, &settings));
            }
            Err(e) => {
                for &model in &cfg.ablate.models {
                    for strategy in [Strategy::BruteForce, Strategy::NearestNeighbor] {
                        rows.push(GridRow::failed(&enc.name, model, strategy, &e));
                    }
                }
            }
        }
    }

    let mut w = meta::create(&a.out)?;
    meta::write_line(&mut w, &meta.csv_comment(), &a.out)?;
    meta::write_line(&mut w, GRID_CSV_HEADER, &a.out)?;
    for r in &rows {
        meta::write_line(&mut w, &r.csv_line(), &a.out)?;
    }
    meta::finish(w, &a.out)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!("wrote {} grid rows ({failed} failed) -> {}", rows.len(), a.out.display());
    Ok(())
}

pub fn synth(cfg: Config, a: &SynthArgs) -> anyhow::Result<()> {
    if a.stories == 0 {
        return Err(Invalid("--stories must be positive".into()).into());
    }
    let stories = template_stories(a.stories, cfg.seed);
    let meta = Meta::new("synth", &cfg, &[])?;
    let mut w = meta::create(&a.out)?;
    match format_for(&a.out, a.format) {
        CorpusFormat::CsvRoc => {
            meta::write_line(&mut w, &meta.csv_comment(), &a.out)?;
            write_csv_roc(&stories, &mut w)?
        }
        CorpusFormat::Jsonl => {
            meta::write_line(&mut w, &meta.jsonl_line(), &a.out)?;
            write_jsonl(&stories, &mut w)?
        }
    }
    meta::finish(w, &a.out)?;
    eprintln!("wrote {} stories -> {}", stories.len(), a.out.display());
    Ok(())
}
