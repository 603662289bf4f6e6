use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_encoder, extract_features, load_encoder, make_synthetic, read_json, save_encoder, write_json, write_jsonl, AnnotatedDocument, DocFeatures,
    ExtractOptions, PipelineError, RunConfig, Task,
};
use crate::evalkit::{corpus_rouge, format_report, parse_report};
use crate::features::{DiscourseEncoder, FeatureKind};
use crate::nn::{grad_check, load_checkpoint, save_checkpoint, Adagrad, GradCheckReport, ParamStore, SeededRng};
use crate::regressor::{RegExample, RegTrainer, Regressor};
use crate::summarizer::{Phase, PreparedExample, SummTrainer, Summarizer};
use crate::vocab::Vocab;

pub const CONFIG_FILE: &str = "config.txt";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const VOCAB_FILE: &str = "vocab.json";
pub const METRICS_FILE: &str = "metrics.txt";
pub const TRAIN_LOG_FILE: &str = "train_log.txt";
pub const DECODES_FILE: &str = "decodes.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

/// Document indices of a seeded 80/10/10 partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

/// Dev and test each get a tenth of the documents (at least one); the rest
/// is training data.
pub fn split_indices(n: usize, seed: u64) -> Result<Split, PipelineError> {
    if n < 3 {
        return Err(PipelineError::Input(format!("{n} documents cannot be split into train/dev/test")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).split("split").shuffle(&mut order);
    let held = (n / 10).max(1);
    let test = order.split_off(n - held);
    let dev = order.split_off(n - 2 * held);
    Ok(Split { train: order, dev, test })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummDecode {
    pub doc_id: String,
    pub hypothesis: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<String>>,
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PetitionPrediction {
    pub doc_id: String,
    pub y_hat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    pub bucket_probs: [f64; 6],
}

/// Cycles through shuffled indices, reshuffling at each epoch boundary.
struct Batcher {
    items: Vec<usize>,
    pos: usize,
    rng: SeededRng,
}

impl Batcher {
    fn new(items: Vec<usize>, rng: SeededRng) -> Self {
        let mut b = Batcher { items, pos: 0, rng };
        b.rng.shuffle(&mut b.items);
        b
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.items.len());
        if self.pos + size > self.items.len() {
            self.rng.shuffle(&mut self.items);
            self.pos = 0;
        }
        let out = self.items[self.pos..self.pos + size].to_vec();
        self.pos += size;
        out
    }
}

fn sub_seed(seed: u64, label: &str) -> u64 {
    SeededRng::new(seed).split(label).next_u64()
}

fn feature_limit(cfg: &RunConfig) -> usize {
    match cfg.task {
        Task::Summ => cfg.max_enc_len,
        Task::Petition => cfg.max_len,
    }
}

/// Features the configuration asks for, with the encoder used (if latent).
fn features_for(
    cfg: &RunConfig,
    corpus: &[AnnotatedDocument],
    encoder: Option<DiscourseEncoder>,
) -> Result<(Option<Vec<DocFeatures>>, Option<DiscourseEncoder>), PipelineError> {
    let Some(kind) = cfg.feature_kind() else {
        return Ok((None, None));
    };
    let encoder = match (kind, encoder) {
        (FeatureKind::Shallow, _) => None,
        (FeatureKind::Latent, Some(e)) => Some(e),
        (FeatureKind::Latent, None) => Some(build_encoder(corpus, cfg.encoder, cfg.vocab_size, sub_seed(cfg.seed, "encoder"))?),
    };
    let opts = ExtractOptions {
        limit: feature_limit(cfg),
        parse_missing: cfg.parse_missing,
        scorer_seed: sub_seed(cfg.seed, "parser"),
    };
    let feats = extract_features(corpus, kind == FeatureKind::Shallow, encoder.as_ref(), &opts)?;
    Ok((Some(feats), encoder))
}

fn write_report(path: &Path, metrics: &BTreeMap<String, f64>) -> Result<(), PipelineError> {
    std::fs::write(path, format_report(metrics)).map_err(|e| PipelineError::io(path, e))
}

/// Trains on the configured task, keeps the parameters with the best dev
/// score, evaluates on test, and writes every artifact under `out`.
pub fn run(cfg: &RunConfig, corpus: &[AnnotatedDocument], out: &Path) -> Result<BTreeMap<String, f64>, PipelineError> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;
    let config_path = out.join(CONFIG_FILE);
    std::fs::write(&config_path, cfg.to_text()).map_err(|e| PipelineError::io(&config_path, e))?;
    let split = split_indices(corpus.len(), cfg.seed).map_err(|e| e.in_stage("split"))?;
    let (features, encoder) = features_for(cfg, corpus, None).map_err(|e| e.in_stage("feature extraction"))?;
    if let Some(enc) = &encoder {
        save_encoder(enc, out)?;
    }
    let metrics = match cfg.task {
        Task::Summ => run_summ(cfg, corpus, features.as_deref(), &split, out)?,
        Task::Petition => run_petition(cfg, corpus, features.as_deref(), &split, out)?,
    };
    write_report(&out.join(METRICS_FILE), &metrics)?;
    Ok(metrics)
}

fn summ_examples(
    cfg: &RunConfig,
    model: &Summarizer,
    corpus: &[AnnotatedDocument],
    features: Option<&[DocFeatures]>,
    require_summary: bool,
) -> Result<Vec<PreparedExample>, PipelineError> {
    let empty = Vec::new();
    corpus
        .iter()
        .enumerate()
        .map(|(i, doc)| {
            let summary = match (&doc.summary_tokens, require_summary) {
                (Some(s), _) => s,
                (None, false) => &empty,
                (None, true) => return Err(PipelineError::Input("summarization needs summary_tokens".into()).in_doc(&doc.doc_id)),
            };
            let rows = match (features, cfg.feature_kind()) {
                (Some(f), Some(kind)) => Some(f[i].word_rows(kind, doc.tokens.len())?),
                _ => None,
            };
            model
                .prepare(&doc.tokens, summary, rows.as_deref())
                .map_err(|e| PipelineError::from(e).in_doc(&doc.doc_id))
        })
        .collect()
}

fn pick<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

fn run_summ(
    cfg: &RunConfig,
    corpus: &[AnnotatedDocument],
    features: Option<&[DocFeatures]>,
    split: &Split,
    out: &Path,
) -> Result<BTreeMap<String, f64>, PipelineError> {
    let train_tokens = split.train.iter().flat_map(|&i| {
        let d = &corpus[i];
        let n = d.tokens.len().min(cfg.max_enc_len);
        d.tokens[..n].iter().chain(d.summary_tokens.iter().flatten()).map(String::as_str)
    });
    let vocab = Vocab::build(train_tokens, cfg.vocab_size);
    let mut model = Summarizer::new(cfg.summ_config(), vocab, sub_seed(cfg.seed, "model"))?;
    let examples = summ_examples(cfg, &model, corpus, features, true).map_err(|e| e.in_stage("prepare"))?;
    let train = pick(&examples, &split.train);
    let dev = pick(&examples, &split.dev);

    let mut trainer = SummTrainer::with_optimizer(Box::new(Adagrad::new(cfg.lr, cfg.adagrad_init)?), cfg.clip_norm);
    let mut batcher = Batcher::new((0..train.len()).collect(), SeededRng::new(cfg.seed).split("batches"));
    let total = cfg.mle_steps + cfg.coverage_steps;
    let mut log = String::new();
    let mut best: Option<(f64, usize, Phase, ParamStore)> = None;
    for step in 1..=total {
        let phase = if step <= cfg.mle_steps {
            Phase::Mle
        } else {
            Phase::Coverage { lambda: cfg.lambda_cov }
        };
        let batch = pick(&train, &batcher.next(cfg.batch_size));
        let loss = trainer
            .train_step(&mut model, &batch, phase)
            .map_err(|e| PipelineError::from(e).in_stage("train"))?;
        if step % cfg.eval_every == 0 || step == total {
            let d = model.evaluate(&dev, phase.coverage(), phase.lambda())?;
            log.push_str(&format!(
                "step={step} phase={} train_loss={} dev_nll={} dev_coverage={}\n",
                if phase.coverage() { "coverage" } else { "mle" },
                loss.total,
                d.nll,
                d.coverage
            ));
            if best.as_ref().map_or(true, |b| d.nll < b.0) {
                best = Some((d.nll, step, phase, model.params().clone()));
            }
        }
    }
    let (best_nll, best_step, best_phase, best_params) = best.expect("at least one evaluation");
    model.params_mut().copy_from(&best_params)?;
    std::fs::write(out.join(TRAIN_LOG_FILE), log).map_err(|e| PipelineError::io(out, e))?;
    save_checkpoint(model.params(), &out.join(CHECKPOINT_FILE))?;
    write_json(&out.join(VOCAB_FILE), model.vocab())?;

    let test_docs = pick(corpus, &split.test);
    let test_ex = pick(&examples, &split.test);
    let decodes = decode_examples(cfg, &model, &test_docs, &test_ex, best_phase.coverage()).map_err(|e| e.in_stage("decode"))?;
    write_jsonl(&out.join(DECODES_FILE), &decodes)?;
    let mut metrics = rouge_metrics(&decodes)?;
    metrics.insert("best_step".into(), best_step as f64);
    metrics.insert("best_dev_nll".into(), best_nll);
    metrics.insert("best_coverage".into(), if best_phase.coverage() { 1.0 } else { 0.0 });
    metrics.insert("train_docs".into(), split.train.len() as f64);
    metrics.insert("test_docs".into(), split.test.len() as f64);
    Ok(metrics)
}

fn decode_examples(
    cfg: &RunConfig,
    model: &Summarizer,
    docs: &[AnnotatedDocument],
    examples: &[PreparedExample],
    coverage: bool,
) -> Result<Vec<SummDecode>, PipelineError> {
    let beam = cfg.beam_config();
    docs.par_iter()
        .zip(examples)
        .map(|(doc, ex)| {
            let (hyp, words) = model.decode(ex, &beam, coverage).map_err(|e| PipelineError::from(e).in_doc(&doc.doc_id))?;
            Ok(SummDecode {
                doc_id: doc.doc_id.clone(),
                hypothesis: words,
                reference: doc.summary_tokens.clone(),
                log_prob: hyp.log_prob,
            })
        })
        .collect()
}

fn rouge_metrics(decodes: &[SummDecode]) -> Result<BTreeMap<String, f64>, PipelineError> {
    let pairs: Vec<(Vec<String>, Vec<String>)> = decodes
        .iter()
        .filter_map(|d| d.reference.clone().map(|r| (d.hypothesis.clone(), r)))
        .collect();
    if pairs.is_empty() {
        return Ok(BTreeMap::new());
    }
    let score = corpus_rouge(&pairs)?;
    Ok(score.to_metrics().into_iter().map(|(k, v)| (format!("test_{k}"), v)).collect())
}

/// Decodes `corpus` with the model stored in `run_dir`; writes decodes and,
/// when references are present, ROUGE metrics under `out`.
pub fn decode_corpus(run_dir: &Path, corpus: &[AnnotatedDocument], out: &Path) -> Result<BTreeMap<String, f64>, PipelineError> {
    let cfg = RunConfig::load(&run_dir.join(CONFIG_FILE), None)?;
    if cfg.task != Task::Summ {
        return Err(PipelineError::Input(format!("{} is not a summarization run", run_dir.display())));
    }
    let vocab: Vocab = read_json(&run_dir.join(VOCAB_FILE))?;
    let model = Summarizer::from_parts(cfg.summ_config(), vocab, load_checkpoint(&run_dir.join(CHECKPOINT_FILE))?)?;
    let run_metrics = read_report(&run_dir.join(METRICS_FILE))?;
    let coverage = run_metrics.get("best_coverage").copied().unwrap_or(0.0) > 0.5;
    let encoder = stored_encoder(&cfg, run_dir)?;
    let (features, _) = features_for(&cfg, corpus, encoder)?;
    let examples = summ_examples(&cfg, &model, corpus, features.as_deref(), false)?;
    let decodes = decode_examples(&cfg, &model, corpus, &examples, coverage)?;
    std::fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;
    write_jsonl(&out.join(DECODES_FILE), &decodes)?;
    let metrics = rouge_metrics(&decodes)?;
    if !metrics.is_empty() {
        write_report(&out.join(METRICS_FILE), &metrics)?;
    }
    Ok(metrics)
}

fn stored_encoder(cfg: &RunConfig, run_dir: &Path) -> Result<Option<DiscourseEncoder>, PipelineError> {
    if cfg.feature_kind() == Some(FeatureKind::Latent) {
        Ok(Some(load_encoder(run_dir)?))
    } else {
        Ok(None)
    }
}

fn read_report(path: &Path) -> Result<BTreeMap<String, f64>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(parse_report(&text)?)
}

fn petition_tokens(doc: &AnnotatedDocument) -> Vec<&str> {
    doc.title_tokens
        .iter()
        .flatten()
        .chain(&doc.tokens)
        .map(String::as_str)
        .collect()
}

fn reg_examples(
    cfg: &RunConfig,
    model: &Regressor,
    corpus: &[AnnotatedDocument],
    features: Option<&[DocFeatures]>,
) -> Result<Vec<RegExample>, PipelineError> {
    let kind = cfg.feature_kind();
    let edu_level = model.config().variant.is_edu_level();
    corpus
        .iter()
        .enumerate()
        .map(|(i, doc)| {
            let count = doc
                .signature_count
                .ok_or_else(|| PipelineError::Input("petition regression needs signature_count".into()).in_doc(&doc.doc_id))?;
            let tokens = petition_tokens(doc);
            let (word_rows, edu_rows) = match (features, kind) {
                (Some(f), Some(k)) if edu_level => (None, f[i].rows(k).map(<[Vec<f64>]>::to_vec)),
                (Some(f), Some(k)) => {
                    let title = tokens.len() - doc.tokens.len();
                    let body = f[i].word_rows(k, doc.tokens.len())?;
                    let width = body.first().map_or(0, Vec::len);
                    let mut rows = vec![vec![0.0; width]; title];
                    rows.extend(body);
                    (Some(rows), None)
                }
                _ => (None, None),
            };
            model
                .prepare(&tokens, word_rows.as_deref(), edu_rows.as_deref(), count)
                .map_err(|e| PipelineError::from(e).in_doc(&doc.doc_id))
        })
        .collect()
}

fn run_petition(
    cfg: &RunConfig,
    corpus: &[AnnotatedDocument],
    features: Option<&[DocFeatures]>,
    split: &Split,
    out: &Path,
) -> Result<BTreeMap<String, f64>, PipelineError> {
    let train_tokens: Vec<&str> = split.train.iter().flat_map(|&i| petition_tokens(&corpus[i])).collect();
    let vocab = Vocab::build(train_tokens, cfg.vocab_size);
    let mut model = Regressor::new(cfg.reg_config(), vocab, sub_seed(cfg.seed, "model"))?;
    if let Some(path) = &cfg.pretrained_vectors {
        let p = Path::new(path);
        let file = std::fs::File::open(p).map_err(|e| PipelineError::io(p, e))?;
        let filled = model.load_word_vectors(std::io::BufReader::new(file))?;
        log::info!("initialized {filled} embedding rows from {path}");
    }
    let examples = reg_examples(cfg, &model, corpus, features).map_err(|e| e.in_stage("prepare"))?;
    let train = pick(&examples, &split.train);
    let dev = pick(&examples, &split.dev);

    let optimizer = Box::new(Adagrad::new(cfg.lr, cfg.adagrad_init)?);
    let mut trainer = RegTrainer::with_optimizer(optimizer, cfg.clip_norm, sub_seed(cfg.seed, "dropout"));
    let mut batcher = Batcher::new((0..train.len()).collect(), SeededRng::new(cfg.seed).split("batches"));
    let mut log = String::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    for step in 1..=cfg.steps {
        let batch = pick(&train, &batcher.next(cfg.batch_size));
        let loss = trainer
            .train_step(&mut model, &batch)
            .map_err(|e| PipelineError::from(e).in_stage("train"))?;
        if step % cfg.eval_every == 0 || step == cfg.steps {
            let (mae, mape) = model.evaluate(&dev)?;
            log.push_str(&format!("step={step} train_loss={loss} dev_mae={mae} dev_mape={mape}\n"));
            if best.as_ref().map_or(true, |b| mae < b.0) {
                best = Some((mae, step, model.params().clone()));
            }
        }
    }
    let (best_mae, best_step, best_params) = best.expect("at least one evaluation");
    model.params_mut().copy_from(&best_params)?;
    std::fs::write(out.join(TRAIN_LOG_FILE), log).map_err(|e| PipelineError::io(out, e))?;
    save_checkpoint(model.params(), &out.join(CHECKPOINT_FILE))?;
    write_json(&out.join(VOCAB_FILE), model.vocab())?;

    let test_docs = pick(corpus, &split.test);
    let test_ex = pick(&examples, &split.test);
    let (preds, mut metrics) = predict_petitions(&model, &test_docs, &test_ex)?;
    write_jsonl(&out.join(PREDICTIONS_FILE), &preds)?;
    metrics.insert("best_step".into(), best_step as f64);
    metrics.insert("best_dev_mae".into(), best_mae);
    metrics.insert("train_docs".into(), split.train.len() as f64);
    metrics.insert("test_docs".into(), split.test.len() as f64);
    Ok(metrics)
}

fn predict_petitions(
    model: &Regressor,
    docs: &[AnnotatedDocument],
    examples: &[RegExample],
) -> Result<(Vec<PetitionPrediction>, BTreeMap<String, f64>), PipelineError> {
    let preds = docs
        .par_iter()
        .zip(examples)
        .map(|(doc, ex)| {
            let p = model.predict(ex)?;
            Ok(PetitionPrediction {
                doc_id: doc.doc_id.clone(),
                y_hat: p.y_hat,
                y: Some(ex.y),
                bucket_probs: p.bucket_probs(),
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let (mae, mape) = model.evaluate(examples)?;
    let metrics = BTreeMap::from([("test_mae".to_string(), mae), ("test_mape".to_string(), mape)]);
    Ok((preds, metrics))
}

/// Evaluates the regressor stored in `run_dir` on a labelled corpus.
pub fn evaluate_petitions(run_dir: &Path, corpus: &[AnnotatedDocument], out: &Path) -> Result<BTreeMap<String, f64>, PipelineError> {
    let cfg = RunConfig::load(&run_dir.join(CONFIG_FILE), None)?;
    if cfg.task != Task::Petition {
        return Err(PipelineError::Input(format!("{} is not a petition run", run_dir.display())));
    }
    let vocab: Vocab = read_json(&run_dir.join(VOCAB_FILE))?;
    let model = Regressor::from_parts(cfg.reg_config(), vocab, load_checkpoint(&run_dir.join(CHECKPOINT_FILE))?)?;
    let encoder = stored_encoder(&cfg, run_dir)?;
    let (features, _) = features_for(&cfg, corpus, encoder)?;
    let examples = reg_examples(&cfg, &model, corpus, features.as_deref())?;
    let (preds, metrics) = predict_petitions(&model, corpus, &examples)?;
    std::fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))?;
    write_jsonl(&out.join(PREDICTIONS_FILE), &preds)?;
    write_report(&out.join(METRICS_FILE), &metrics)?;
    Ok(metrics)
}

/// Central-difference check of the configured model's loss on one
/// synthetic document, at the configured dimensions.
pub fn grad_check_config(cfg: &RunConfig, samples_per_param: usize) -> Result<GradCheckReport, PipelineError> {
    cfg.validate()?;
    let corpus = make_synthetic(cfg.task, 1, cfg.seed)?;
    let (features, _) = features_for(cfg, &corpus, None)?;
    let tokens: Vec<&str> = corpus.iter().flat_map(petition_tokens).chain(corpus[0].summary_tokens.iter().flatten().map(String::as_str)).collect();
    let vocab = Vocab::build(tokens.iter().step_by(2), cfg.vocab_size);
    let eps = 1e-3;
    let seed = sub_seed(cfg.seed, "grad-check");
    let report = match cfg.task {
        Task::Summ => {
            let mut model = Summarizer::new(cfg.summ_config(), vocab, sub_seed(cfg.seed, "model"))?;
            let ex = summ_examples(cfg, &model, &corpus, features.as_deref(), true)?;
            let mut probe = model.clone();
            let lambda = cfg.lambda_cov;
            grad_check(model.params_mut(), eps, samples_per_param, seed, |p| {
                probe.params_mut().copy_from(p)?;
                probe
                    .loss_and_grads(&ex, true, lambda)
                    .map(|(c, g)| (c.total, g))
                    .map_err(|e| crate::nn::NnError::Check(e.to_string()))
            })?
        }
        Task::Petition => {
            let mut model = Regressor::new(cfg.reg_config(), vocab, sub_seed(cfg.seed, "model"))?;
            let ex = reg_examples(cfg, &model, &corpus, features.as_deref())?;
            let mut probe = model.clone();
            grad_check(model.params_mut(), eps, samples_per_param, seed, |p| {
                probe.params_mut().copy_from(p)?;
                probe.loss_and_grads(&ex, None).map_err(|e| crate::nn::NnError::Check(e.to_string()))
            })?
        }
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_partition() {
        let s = split_indices(20, 3).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (16, 2, 2));
        let mut all: Vec<usize> = s.train.iter().chain(&s.dev).chain(&s.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert_eq!(s, split_indices(20, 3).unwrap());
        assert!(split_indices(2, 3).is_err());
    }

    #[test]
    fn batcher_covers_epoch() {
        let mut b = Batcher::new((0..5).collect(), SeededRng::new(1));
        let mut seen: Vec<usize> = b.next(2).into_iter().chain(b.next(2)).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 4);
        assert_eq!(b.next(9).len(), 5);
    }
}
