use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::PipelineError;
use crate::features::{EncoderConfig, FeatureKind, Incorporation, SHALLOW_DIM};
use crate::regressor::{RegConfig, RegVariant};
use crate::summarizer::{BeamConfig, SummConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Summ,
    Petition,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Summ => "summ",
            Task::Petition => "petition",
        }
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "summ" => Ok(Task::Summ),
            "petition" => Ok(Task::Petition),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

/// Everything a run needs, read from flat `key = value` text.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub corpus: Option<String>,
    /// Regressor architecture (petition runs only).
    pub variant: Option<RegVariant>,
    pub incorporation: Incorporation,
    pub features: Option<FeatureKind>,
    pub vocab_size: usize,
    pub n_docs: usize,
    pub parse_missing: bool,

    pub emb_dim: usize,
    pub hidden: usize,
    pub encoder: EncoderConfig,
    pub filters: usize,
    pub filter_widths: Vec<usize>,
    pub fc: Vec<usize>,
    pub dropout: f64,
    pub l2: f64,
    pub lambda_ord: f64,
    pub floor_head: bool,
    pub pretrained_vectors: Option<String>,

    pub lr: f64,
    pub adagrad_init: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub mle_steps: usize,
    pub coverage_steps: usize,
    pub lambda_cov: f64,
    pub eval_every: usize,

    pub max_enc_len: usize,
    pub max_dec_len: usize,
    pub max_len: usize,
    pub beam_size: usize,
    pub min_dec_len: usize,
    pub max_decode_len: usize,
}

impl RunConfig {
    pub fn new(task: Task, seed: u64) -> Self {
        let enc = EncoderConfig::default();
        RunConfig {
            task,
            seed,
            corpus: None,
            variant: None,
            incorporation: Incorporation::None,
            features: None,
            vocab_size: 50_000,
            n_docs: 100,
            parse_missing: false,
            emb_dim: 16,
            hidden: 32,
            encoder: enc,
            filters: 8,
            filter_widths: vec![3, 4, 5],
            fc: vec![16, 8],
            dropout: 0.3,
            l2: 1e-4,
            lambda_ord: 1.0,
            floor_head: true,
            pretrained_vectors: None,
            lr: 0.15,
            adagrad_init: 0.1,
            clip_norm: 2.0,
            batch_size: 8,
            steps: 500,
            mle_steps: 500,
            coverage_steps: 0,
            lambda_cov: 1.0,
            eval_every: 50,
            max_enc_len: 400,
            max_dec_len: 100,
            max_len: 400,
            beam_size: 4,
            min_dec_len: 35,
            max_decode_len: 100,
        }
    }

    /// Parses config text. `seed` may be omitted when `seed_override` is
    /// given; the override wins otherwise.
    pub fn parse(text: &str, seed_override: Option<u64>) -> Result<Self, PipelineError> {
        let mut pairs: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| cfg_err(i + 1, format!("expected `key = value`, got `{line}`")))?;
            let k = k.trim().to_string();
            if pairs.iter().any(|(_, seen, _)| *seen == k) {
                return Err(cfg_err(i + 1, format!("duplicate key `{k}`")));
            }
            pairs.push((i + 1, k, v.trim().to_string()));
        }
        let find = |key: &str| pairs.iter().find(|(_, k, _)| k == key);
        let task = match find("task") {
            Some((line, _, v)) => v.parse().map_err(|e| cfg_err(*line, e))?,
            None => return Err(cfg_err(0, "missing required key `task`".into())),
        };
        let seed = match (seed_override, find("seed")) {
            (Some(s), _) => s,
            (None, Some((line, _, v))) => parse_val(*line, "seed", v)?,
            (None, None) => return Err(cfg_err(0, "missing required key `seed`".into())),
        };
        let mut cfg = RunConfig::new(task, seed);
        for (line, key, value) in &pairs {
            cfg.set(*line, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::parse(&text, seed_override)
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<(), PipelineError> {
        let e = &mut self.encoder;
        match key {
            "task" | "seed" => {}
            "corpus" => self.corpus = Some(v.to_string()),
            "variant" => self.variant = Some(v.parse().map_err(|m| cfg_err(line, m))?),
            "incorporation" => self.incorporation = v.parse().map_err(|m| cfg_err(line, m))?,
            "features" => self.features = Some(v.parse().map_err(|m| cfg_err(line, m))?),
            "vocab_size" => self.vocab_size = parse_val(line, key, v)?,
            "n_docs" => self.n_docs = parse_val(line, key, v)?,
            "parse_missing" => self.parse_missing = parse_val(line, key, v)?,
            "emb_dim" => self.emb_dim = parse_val(line, key, v)?,
            "hidden" => self.hidden = parse_val(line, key, v)?,
            "enc_word_dim" => e.word_dim = parse_val(line, key, v)?,
            "enc_pos_dim" => e.pos_dim = parse_val(line, key, v)?,
            "enc_syntax_dim" => e.syntax_dim = parse_val(line, key, v)?,
            "enc_word_hidden" => e.word_hidden = parse_val(line, key, v)?,
            "enc_syntax_hidden" => e.syntax_hidden = parse_val(line, key, v)?,
            "enc_context_hidden" => e.context_hidden = parse_val(line, key, v)?,
            "filters" => self.filters = parse_val(line, key, v)?,
            "filter_widths" => self.filter_widths = parse_list(line, key, v)?,
            "fc" => self.fc = parse_list(line, key, v)?,
            "dropout" => self.dropout = parse_val(line, key, v)?,
            "l2" => self.l2 = parse_val(line, key, v)?,
            "lambda_ord" => self.lambda_ord = parse_val(line, key, v)?,
            "floor_head" => self.floor_head = parse_val(line, key, v)?,
            "pretrained_vectors" => self.pretrained_vectors = Some(v.to_string()),
            "lr" => self.lr = parse_val(line, key, v)?,
            "adagrad_init" => self.adagrad_init = parse_val(line, key, v)?,
            "clip_norm" => self.clip_norm = parse_val(line, key, v)?,
            "batch_size" => self.batch_size = parse_val(line, key, v)?,
            "steps" => self.steps = parse_val(line, key, v)?,
            "mle_steps" => self.mle_steps = parse_val(line, key, v)?,
            "coverage_steps" => self.coverage_steps = parse_val(line, key, v)?,
            "lambda_cov" => self.lambda_cov = parse_val(line, key, v)?,
            "eval_every" => self.eval_every = parse_val(line, key, v)?,
            "max_enc_len" => self.max_enc_len = parse_val(line, key, v)?,
            "max_dec_len" => self.max_dec_len = parse_val(line, key, v)?,
            "max_len" => self.max_len = parse_val(line, key, v)?,
            "beam_size" => self.beam_size = parse_val(line, key, v)?,
            "min_dec_len" => self.min_dec_len = parse_val(line, key, v)?,
            "max_decode_len" => self.max_decode_len = parse_val(line, key, v)?,
            other => return Err(cfg_err(line, format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let e = &self.encoder;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("task", self.task.as_str().into());
        kv("seed", self.seed.to_string());
        if let Some(c) = &self.corpus {
            kv("corpus", c.clone());
        }
        if let Some(v) = self.variant {
            kv("variant", v.as_str().into());
        }
        kv("incorporation", self.incorporation.as_str().into());
        if let Some(f) = self.features {
            kv("features", f.as_str().into());
        }
        kv("vocab_size", self.vocab_size.to_string());
        kv("n_docs", self.n_docs.to_string());
        kv("parse_missing", self.parse_missing.to_string());
        kv("emb_dim", self.emb_dim.to_string());
        kv("hidden", self.hidden.to_string());
        kv("enc_word_dim", e.word_dim.to_string());
        kv("enc_pos_dim", e.pos_dim.to_string());
        kv("enc_syntax_dim", e.syntax_dim.to_string());
        kv("enc_word_hidden", e.word_hidden.to_string());
        kv("enc_syntax_hidden", e.syntax_hidden.to_string());
        kv("enc_context_hidden", e.context_hidden.to_string());
        kv("filters", self.filters.to_string());
        kv("filter_widths", list(&self.filter_widths));
        kv("fc", list(&self.fc));
        kv("dropout", self.dropout.to_string());
        kv("l2", self.l2.to_string());
        kv("lambda_ord", self.lambda_ord.to_string());
        kv("floor_head", self.floor_head.to_string());
        if let Some(p) = &self.pretrained_vectors {
            kv("pretrained_vectors", p.clone());
        }
        kv("lr", self.lr.to_string());
        kv("adagrad_init", self.adagrad_init.to_string());
        kv("clip_norm", self.clip_norm.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("steps", self.steps.to_string());
        kv("mle_steps", self.mle_steps.to_string());
        kv("coverage_steps", self.coverage_steps.to_string());
        kv("lambda_cov", self.lambda_cov.to_string());
        kv("eval_every", self.eval_every.to_string());
        kv("max_enc_len", self.max_enc_len.to_string());
        kv("max_dec_len", self.max_dec_len.to_string());
        kv("max_len", self.max_len.to_string());
        kv("beam_size", self.beam_size.to_string());
        kv("min_dec_len", self.min_dec_len.to_string());
        kv("max_decode_len", self.max_decode_len.to_string());
        out
    }

    /// Feature kind actually fed to the model, if any.
    pub fn feature_kind(&self) -> Option<FeatureKind> {
        match self.variant {
            Some(RegVariant::BiLstmEduLatent) if self.task == Task::Petition => Some(FeatureKind::Latent),
            Some(RegVariant::BiLstmEduShallow) if self.task == Task::Petition => Some(FeatureKind::Shallow),
            _ if self.incorporation.uses_features() => Some(self.features.unwrap_or(FeatureKind::Shallow)),
            _ => None,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self.feature_kind() {
            None => 0,
            Some(FeatureKind::Shallow) => SHALLOW_DIM,
            Some(FeatureKind::Latent) => self.encoder.output_dim(),
        }
    }

    pub fn summ_config(&self) -> SummConfig {
        SummConfig {
            emb_dim: self.emb_dim,
            hidden: self.hidden,
            max_enc_len: self.max_enc_len,
            max_dec_len: self.max_dec_len,
            ..SummConfig::desk()
        }
        .with_features(self.incorporation, self.feature_dim())
    }

    pub fn reg_config(&self) -> RegConfig {
        let variant = self.variant.unwrap_or(RegVariant::Cnn);
        RegConfig {
            variant,
            incorporation: self.incorporation,
            feature_dim: self.feature_dim(),
            emb_dim: self.emb_dim,
            filter_widths: self.filter_widths.clone(),
            filters: self.filters,
            fc: self.fc.clone(),
            hidden: self.hidden,
            dropout: self.dropout,
            l2: self.l2,
            lambda_ord: self.lambda_ord,
            floor_head: self.floor_head,
            max_len: self.max_len,
        }
    }

    pub fn beam_config(&self) -> BeamConfig {
        BeamConfig {
            beam_size: self.beam_size,
            min_len: self.min_dec_len,
            max_len: self.max_decode_len,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(cfg_err(0, m));
        let e = &self.encoder;
        let positive = [
            ("vocab_size", self.vocab_size),
            ("n_docs", self.n_docs),
            ("emb_dim", self.emb_dim),
            ("hidden", self.hidden),
            ("enc_word_dim", e.word_dim),
            ("enc_pos_dim", e.pos_dim),
            ("enc_syntax_dim", e.syntax_dim),
            ("enc_word_hidden", e.word_hidden),
            ("enc_syntax_hidden", e.syntax_hidden),
            ("enc_context_hidden", e.context_hidden),
            ("batch_size", self.batch_size),
            ("eval_every", self.eval_every),
            ("max_enc_len", self.max_enc_len),
            ("max_dec_len", self.max_dec_len),
            ("max_len", self.max_len),
            ("beam_size", self.beam_size),
            ("max_decode_len", self.max_decode_len),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return bad(format!("`{k}` must be positive"));
        }
        if !(self.lr > 0.0) || !(self.adagrad_init > 0.0) || !(self.clip_norm >= 0.0) || !(self.lambda_cov >= 0.0) {
            return bad("lr and adagrad_init must be positive; clip_norm and lambda_cov non-negative".into());
        }
        if self.min_dec_len > self.max_decode_len {
            return bad(format!("min_dec_len {} exceeds max_decode_len {}", self.min_dec_len, self.max_decode_len));
        }
        match self.task {
            Task::Summ => {
                if self.variant.is_some() {
                    return bad("`variant` applies to petition runs only".into());
                }
                if self.mle_steps + self.coverage_steps == 0 {
                    return bad("summ runs need mle_steps + coverage_steps > 0".into());
                }
            }
            Task::Petition => {
                if self.steps == 0 {
                    return bad("`steps` must be positive".into());
                }
                match (self.variant, self.features) {
                    (Some(RegVariant::BiLstmEduLatent), Some(FeatureKind::Shallow)) | (Some(RegVariant::BiLstmEduShallow), Some(FeatureKind::Latent)) => {
                        return bad(format!("`features` contradicts variant {}", self.variant.expect("matched").as_str()));
                    }
                    _ => {}
                }
                self.reg_config().validate().map_err(|e| cfg_err(0, e.to_string()))?;
            }
        }
        Ok(())
    }
}

fn cfg_err(line: usize, message: String) -> PipelineError {
    PipelineError::Config { line, message }
}

fn parse_val<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, PipelineError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| cfg_err(line, format!("`{key}`: cannot parse `{v}`: {e}")))
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<usize>, PipelineError> {
    v.split(',').map(|p| parse_val(line, key, p.trim())).collect()
}
