use std::io::BufRead;

use super::{ordinal_targets, OrdinalTarget, RegError, SIGNATURE_FLOOR};
use crate::features::Incorporation;
use crate::nn::{register_bilstm, register_linear, BiLstmVars, Gradients, Graph, LinearVars, ParamStore, SeededRng, Var};
use crate::vocab::Vocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegVariant {
    Cnn,
    BiLstmWords,
    BiLstmEduLatent,
    BiLstmEduShallow,
}

impl RegVariant {
    pub const ALL: [RegVariant; 4] = [
        RegVariant::Cnn,
        RegVariant::BiLstmWords,
        RegVariant::BiLstmEduLatent,
        RegVariant::BiLstmEduShallow,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RegVariant::Cnn => "cnn",
            RegVariant::BiLstmWords => "bilstm-words",
            RegVariant::BiLstmEduLatent => "bilstm-edu-latent",
            RegVariant::BiLstmEduShallow => "bilstm-edu-shallow",
        }
    }

    pub fn is_recurrent(self) -> bool {
        self != RegVariant::Cnn
    }

    /// Reads EDU vectors instead of words.
    pub fn is_edu_level(self) -> bool {
        matches!(self, RegVariant::BiLstmEduLatent | RegVariant::BiLstmEduShallow)
    }
}

impl std::str::FromStr for RegVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RegVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown regressor variant `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegConfig {
    pub variant: RegVariant,
    pub incorporation: Incorporation,
    /// Per-word feature width for M1/M2, or per-EDU input width for the
    /// EDU-level variants.
    pub feature_dim: usize,
    pub emb_dim: usize,
    pub filter_widths: Vec<usize>,
    pub filters: usize,
    /// Fully connected tanh layers before the output (CNN uses all, the
    /// recurrent variants use the first).
    pub fc: Vec<usize>,
    pub hidden: usize,
    pub dropout: f64,
    pub l2: f64,
    pub lambda_ord: f64,
    /// `y_hat = ELU(z) + 1 + ln(150)` when set, `y_hat = z` otherwise.
    pub floor_head: bool,
    pub max_len: usize,
}

impl RegConfig {
    /// Full-scale shapes: filters {3,4,5} x 128 with FC 256/64; Bi-LSTM with
    /// 200 hidden units, dropout 0.3.
    pub fn full(variant: RegVariant) -> Self {
        RegConfig {
            variant,
            incorporation: Incorporation::None,
            feature_dim: 0,
            emb_dim: 300,
            filter_widths: vec![3, 4, 5],
            filters: 128,
            fc: vec![256, 64],
            hidden: 200,
            dropout: 0.3,
            l2: 1e-4,
            lambda_ord: 1.0,
            floor_head: true,
            max_len: 400,
        }
    }

    pub fn desk(variant: RegVariant) -> Self {
        RegConfig {
            emb_dim: 16,
            filters: 8,
            fc: vec![16, 8],
            hidden: 16,
            ..Self::full(variant)
        }
    }

    pub fn validate(&self) -> Result<(), RegError> {
        let bad = |m: String| Err(RegError::Config(m));
        match self.incorporation {
            Incorporation::M3 => return bad("M3 is an attention-side method and has no regressor counterpart".into()),
            Incorporation::M2 if !self.variant.is_recurrent() => {
                return bad("M2 is only available with recurrent variants".into());
            }
            Incorporation::M1 | Incorporation::M2 if self.variant.is_edu_level() => {
                return bad(format!("{} already reads discourse features; use incorporation none", self.variant.as_str()));
            }
            _ => {}
        }
        let needs_features = self.variant.is_edu_level() || self.incorporation.uses_features();
        if needs_features != (self.feature_dim > 0) {
            return bad(format!(
                "feature dimension {} for {} with incorporation {}",
                self.feature_dim,
                self.variant.as_str(),
                self.incorporation.as_str()
            ));
        }
        if self.emb_dim == 0 || self.hidden == 0 || self.fc.is_empty() || self.fc.contains(&0) || self.max_len == 0 {
            return bad("dimensions must be positive and at least one FC layer is required".into());
        }
        if self.variant == RegVariant::Cnn && (self.filter_widths.is_empty() || self.filter_widths.contains(&0) || self.filters == 0) {
            return bad("CNN needs at least one positive filter width and count".into());
        }
        if !(0.0..1.0).contains(&self.dropout) || self.l2 < 0.0 || self.lambda_ord < 0.0 {
            return bad("dropout must be in [0, 1); l2 and lambda_ord non-negative".into());
        }
        Ok(())
    }

    fn word_input_dim(&self) -> usize {
        match self.incorporation {
            Incorporation::M1 => self.emb_dim + self.feature_dim,
            _ => self.emb_dim,
        }
    }
}

/// One petition ready for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct RegExample {
    /// Title followed by body, as vocabulary ids (word variants).
    pub tokens: Vec<usize>,
    /// One vector per token (M1/M2).
    pub word_features: Option<Vec<Vec<f64>>>,
    /// One vector per EDU (EDU-level variants).
    pub edu_features: Option<Vec<Vec<f64>>>,
    /// Natural log of the signature count.
    pub y: f64,
    pub ordinal: OrdinalTarget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegPrediction {
    pub y_hat: f64,
    /// Cumulative `P(count >= threshold_k)`.
    pub cumulative: [f64; 5],
}

impl RegPrediction {
    /// Probabilities of the six scale buckets `[0,10), [10,100), ...,
    /// [100000, inf)`, from differences of the cumulative estimates.
    pub fn bucket_probs(&self) -> [f64; 6] {
        let c = self.cumulative;
        let mut out = [0.0; 6];
        out[0] = (1.0 - c[0]).max(0.0);
        for k in 1..5 {
            out[k] = (c[k - 1] - c[k]).max(0.0);
        }
        out[5] = c[4];
        out
    }
}

#[derive(Debug, Clone)]
pub struct Regressor {
    config: RegConfig,
    vocab: Vocab,
    params: ParamStore,
}

pub(crate) struct Forward {
    pub y_hat: Var,
    pub ordinal: Var,
}

impl Regressor {
    pub fn new(config: RegConfig, vocab: Vocab, seed: u64) -> Result<Self, RegError> {
        config.validate()?;
        let mut rng = SeededRng::new(seed).split("regressor").split("init");
        let mut p = ParamStore::new();
        let penultimate_in = match config.variant {
            RegVariant::Cnn => {
                p.add_uniform("emb", vec![vocab.len(), config.emb_dim], 0.1, &mut rng)?;
                let inp = config.word_input_dim();
                for &w in &config.filter_widths {
                    register_linear(&mut p, &format!("conv{w}"), w * inp, config.filters, &mut rng)?;
                }
                config.filters * config.filter_widths.len()
            }
            RegVariant::BiLstmWords => {
                p.add_uniform("emb", vec![vocab.len(), config.emb_dim], 0.1, &mut rng)?;
                register_bilstm(&mut p, "rnn", config.word_input_dim(), config.hidden, &mut rng)?;
                if config.incorporation == Incorporation::M2 {
                    register_bilstm(&mut p, "rnn2", 2 * config.hidden + config.feature_dim, config.hidden, &mut rng)?;
                }
                2 * config.hidden
            }
            RegVariant::BiLstmEduLatent | RegVariant::BiLstmEduShallow => {
                register_bilstm(&mut p, "rnn", config.feature_dim, config.hidden, &mut rng)?;
                2 * config.hidden
            }
        };
        let layers = if config.variant == RegVariant::Cnn { config.fc.len() } else { 1 };
        let mut width = penultimate_in;
        for (i, &out) in config.fc.iter().take(layers).enumerate() {
            register_linear(&mut p, &format!("fc{i}"), width, out, &mut rng)?;
            width = out;
        }
        register_linear(&mut p, "out", width, 1, &mut rng)?;
        register_linear(&mut p, "ord", width, 5, &mut rng)?;
        Ok(Regressor { config, vocab, params: p })
    }

    pub fn from_parts(config: RegConfig, vocab: Vocab, params: ParamStore) -> Result<Self, RegError> {
        let fresh = Regressor::new(config, vocab, 0)?;
        let expected: Vec<(&str, &[usize])> = fresh.params.iter().map(|(n, t)| (n, t.shape())).collect();
        let got: Vec<(&str, &[usize])> = params.iter().map(|(n, t)| (n, t.shape())).collect();
        if expected != got {
            return Err(RegError::Config("checkpoint parameters do not match the model configuration".into()));
        }
        Ok(Regressor {
            config: fresh.config,
            vocab: fresh.vocab,
            params,
        })
    }

    pub fn config(&self) -> &RegConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Reads `token v1 v2 ...` lines into the embedding rows of known
    /// tokens; returns how many rows were filled.
    pub fn load_word_vectors<R: BufRead>(&mut self, reader: R) -> Result<usize, RegError> {
        let dim = self.config.emb_dim;
        let vocab = &self.vocab;
        let table = self
            .params
            .get_mut("emb")
            .map_err(|_| RegError::Config(format!("{} has no word embeddings", self.config.variant.as_str())))?;
        let mut filled = 0;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| RegError::Input(e.to_string()))?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let Some(id) = vocab.get(token) else { continue };
            let values = parts
                .map(str::parse::<f32>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| RegError::Input(format!("word vectors line {}: {e}", i + 1)))?;
            if values.len() != dim {
                return Err(RegError::Input(format!(
                    "word vectors line {}: {} values, expected {dim}",
                    i + 1,
                    values.len()
                )));
            }
            table.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(&values);
            filled += 1;
        }
        Ok(filled)
    }

    /// Builds a training or evaluation example. `tokens` is title then body.
    pub fn prepare<S: AsRef<str>>(
        &self,
        tokens: &[S],
        word_features: Option<&[Vec<f64>]>,
        edu_features: Option<&[Vec<f64>]>,
        signature_count: u64,
    ) -> Result<RegExample, RegError> {
        if signature_count == 0 {
            return Err(RegError::Input("signature count must be positive".into()));
        }
        let cfg = &self.config;
        let n = tokens.len().min(cfg.max_len);
        let check_width = |rows: &[Vec<f64>], what: &str| -> Result<(), RegError> {
            match rows.iter().position(|r| r.len() != cfg.feature_dim) {
                Some(i) => Err(RegError::Input(format!(
                    "{what} row {i} has width {}, expected {}",
                    rows[i].len(),
                    cfg.feature_dim
                ))),
                None => Ok(()),
            }
        };
        let (ids, word_features) = if cfg.variant.is_edu_level() {
            (Vec::new(), None)
        } else {
            if tokens.is_empty() {
                return Err(RegError::Input("empty token sequence".into()));
            }
            let wf = if cfg.incorporation.uses_features() {
                let f = word_features.ok_or_else(|| RegError::Input("word-level features required".into()))?;
                if f.len() != tokens.len() {
                    return Err(RegError::Input(format!("{} feature rows for {} tokens", f.len(), tokens.len())));
                }
                check_width(f, "word feature")?;
                Some(f[..n].to_vec())
            } else {
                None
            };
            (self.vocab.ids(&tokens[..n]), wf)
        };
        let edu_features = if cfg.variant.is_edu_level() {
            let f = edu_features.ok_or_else(|| RegError::Input("EDU features required".into()))?;
            if f.is_empty() {
                return Err(RegError::Input("document has no EDUs".into()));
            }
            check_width(f, "EDU feature")?;
            Some(f.to_vec())
        } else {
            None
        };
        Ok(RegExample {
            tokens: ids,
            word_features,
            edu_features,
            y: (signature_count as f64).ln(),
            ordinal: ordinal_targets(signature_count),
        })
    }

    fn dropout(&self, g: &mut Graph<'_>, x: Var, rng: Option<&mut SeededRng>) -> Result<Var, RegError> {
        let p = self.config.dropout;
        match rng {
            Some(rng) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let mask = (0..g.len_of(x)).map(|_| if rng.bernoulli(p) { 0.0 } else { keep }).collect();
                let m = g.input(mask);
                Ok(g.mul(x, m)?)
            }
            _ => Ok(x),
        }
    }

    fn word_inputs(&self, g: &mut Graph<'_>, ex: &RegExample) -> Result<(Vec<Var>, Option<Vec<Var>>), RegError> {
        let emb = g.param("emb")?;
        let feats = ex
            .word_features
            .as_ref()
            .map(|f| f.iter().map(|r| g.input(r.clone())).collect::<Vec<_>>());
        let mut xs = Vec::with_capacity(ex.tokens.len());
        for (i, &id) in ex.tokens.iter().enumerate() {
            let w = g.embed_row(emb, id)?;
            xs.push(match (&feats, self.config.incorporation) {
                (Some(f), Incorporation::M1) => g.concat(&[w, f[i]])?,
                _ => w,
            });
        }
        Ok((xs, feats))
    }

    /// Forward pass; `rng` enables dropout.
    pub(crate) fn forward(&self, g: &mut Graph<'_>, ex: &RegExample, mut rng: Option<&mut SeededRng>) -> Result<Forward, RegError> {
        let cfg = &self.config;
        let mut h = match cfg.variant {
            RegVariant::Cnn => {
                let (mut xs, _) = self.word_inputs(g, ex)?;
                if xs.is_empty() {
                    return Err(RegError::Input("empty token sequence".into()));
                }
                let widest = *cfg.filter_widths.iter().max().expect("validated");
                let width = g.len_of(xs[0]);
                while xs.len() < widest {
                    xs.push(g.zeros(width));
                }
                let mut pooled = Vec::with_capacity(cfg.filter_widths.len());
                for &w in &cfg.filter_widths {
                    let conv = LinearVars::bind(g, &format!("conv{w}"))?;
                    let mut maps = Vec::with_capacity(xs.len() + 1 - w);
                    for win in xs.windows(w) {
                        let x = g.concat(win)?;
                        let z = conv.apply(g, x)?;
                        maps.push(g.tanh(z));
                    }
                    pooled.push(g.max_over(&maps)?);
                }
                g.concat(&pooled)?
            }
            RegVariant::BiLstmWords => {
                let (xs, feats) = self.word_inputs(g, ex)?;
                if xs.is_empty() {
                    return Err(RegError::Input("empty token sequence".into()));
                }
                let mut states = BiLstmVars::bind(g, "rnn")?.run(g, &xs)?.states;
                if let (Incorporation::M2, Some(f)) = (cfg.incorporation, feats) {
                    let stacked = states
                        .iter()
                        .zip(&f)
                        .map(|(&s, &fi)| g.concat(&[s, fi]))
                        .collect::<Result<Vec<_>, _>>()?;
                    states = BiLstmVars::bind(g, "rnn2")?.run(g, &stacked)?.states;
                }
                g.mean_over(&states)?
            }
            RegVariant::BiLstmEduLatent | RegVariant::BiLstmEduShallow => {
                let f = ex
                    .edu_features
                    .as_ref()
                    .ok_or_else(|| RegError::Input("EDU features required".into()))?;
                let xs: Vec<Var> = f.iter().map(|r| g.input(r.clone())).collect();
                let states = BiLstmVars::bind(g, "rnn")?.run(g, &xs)?.states;
                g.mean_over(&states)?
            }
        };
        h = self.dropout(g, h, rng.as_deref_mut())?;
        let layers = if cfg.variant == RegVariant::Cnn { cfg.fc.len() } else { 1 };
        for i in 0..layers {
            let z = LinearVars::bind(g, &format!("fc{i}"))?.apply(g, h)?;
            h = g.tanh(z);
        }
        let z = LinearVars::bind(g, "out")?.apply(g, h)?;
        let y_hat = if cfg.floor_head {
            let e = g.elu(z);
            g.affine(e, 1.0, 1.0 + (SIGNATURE_FLOOR as f64).ln())
        } else {
            z
        };
        let ordinal = LinearVars::bind(g, "ord")?.apply(g, h)?;
        Ok(Forward { y_hat, ordinal })
    }

    /// MSE plus weighted ordinal BCE for one example, on the graph.
    pub(crate) fn example_loss(&self, g: &mut Graph<'_>, ex: &RegExample, rng: Option<&mut SeededRng>) -> Result<Var, RegError> {
        let out = self.forward(g, ex, rng)?;
        let y = g.input(vec![ex.y]);
        let diff = g.sub(out.y_hat, y)?;
        let mse = g.mul(diff, diff)?;
        if self.config.lambda_ord == 0.0 {
            return Ok(mse);
        }
        let t = ex.ordinal.as_f64();
        let pos = g.log_sigmoid(out.ordinal);
        let neg_logits = g.affine(out.ordinal, -1.0, 0.0);
        let neg = g.log_sigmoid(neg_logits);
        let tv = g.input(t.to_vec());
        let inv = g.input(t.iter().map(|v| 1.0 - v).collect());
        let a = g.dot(tv, pos)?;
        let b = g.dot(inv, neg)?;
        let ll = g.add(a, b)?;
        let bce = g.affine(ll, -self.config.lambda_ord / 5.0, 0.0);
        Ok(g.add(mse, bce)?)
    }

    /// Batch-mean loss and gradients; `rng` enables dropout.
    pub fn loss_and_grads(&self, batch: &[RegExample], mut rng: Option<&mut SeededRng>) -> Result<(f64, Gradients), RegError> {
        if batch.is_empty() {
            return Err(RegError::Input("empty batch".into()));
        }
        let view = self.params.view();
        let mut g = Graph::new(&view);
        let losses = batch
            .iter()
            .map(|ex| self.example_loss(&mut g, ex, rng.as_deref_mut()))
            .collect::<Result<Vec<_>, _>>()?;
        let total = g.mean_scalars(&losses)?;
        let value = g.scalar(total);
        if !value.is_finite() {
            return Ok((value, Gradients::new()));
        }
        Ok((value, g.backward(total)?.param_grads(&g)))
    }

    pub fn predict(&self, ex: &RegExample) -> Result<RegPrediction, RegError> {
        let view = self.params.view();
        let mut g = Graph::new(&view);
        let out = self.forward(&mut g, ex, None)?;
        let logits = g.value(out.ordinal);
        let mut cumulative = [0.0; 5];
        for (c, &o) in cumulative.iter_mut().zip(logits) {
            *c = 1.0 / (1.0 + (-o).exp());
        }
        Ok(RegPrediction {
            y_hat: g.scalar(out.y_hat),
            cumulative,
        })
    }

    /// `(MAE, MAPE)` over the examples.
    pub fn evaluate(&self, examples: &[RegExample]) -> Result<(f64, f64), RegError> {
        let preds = examples
            .iter()
            .map(|ex| self.predict(ex).map(|p| p.y_hat))
            .collect::<Result<Vec<_>, _>>()?;
        let golds: Vec<f64> = examples.iter().map(|e| e.y).collect();
        super::evaluate(&preds, &golds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        Vocab::build("ban the tax on small farms now please".split(' '), 20)
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn tiny(variant: RegVariant, inc: Incorporation, d: usize) -> RegConfig {
        RegConfig {
            incorporation: inc,
            feature_dim: d,
            emb_dim: 3,
            filter_widths: vec![2, 3],
            filters: 2,
            fc: vec![3, 2],
            hidden: 2,
            ..RegConfig::desk(variant)
        }
    }

    #[test]
    fn config_validation() {
        assert!(tiny(RegVariant::Cnn, Incorporation::M3, 2).validate().is_err());
        assert!(tiny(RegVariant::Cnn, Incorporation::M2, 2).validate().is_err());
        assert!(tiny(RegVariant::BiLstmWords, Incorporation::M2, 2).validate().is_ok());
        assert!(tiny(RegVariant::Cnn, Incorporation::M1, 2).validate().is_ok());
        assert!(tiny(RegVariant::BiLstmEduShallow, Incorporation::M1, 21).validate().is_err());
        assert!(tiny(RegVariant::BiLstmEduShallow, Incorporation::None, 0).validate().is_err());
        assert!(tiny(RegVariant::BiLstmWords, Incorporation::None, 3).validate().is_err());
    }

    #[test]
    fn cnn_scalar_output_for_short_and_long_inputs() {
        let m = Regressor::new(tiny(RegVariant::Cnn, Incorporation::None, 0), vocab(), 1).unwrap();
        for text in ["ban", "ban the tax", "ban the tax on small farms now please"] {
            let ex = m.prepare(&toks(text), None, None, 1000).unwrap();
            let p = m.predict(&ex).unwrap();
            assert!(p.y_hat.is_finite());
            assert!(p.y_hat > (150f64).ln());
        }
    }

    #[test]
    fn edu_variant_single_step() {
        let m = Regressor::new(tiny(RegVariant::BiLstmEduShallow, Incorporation::None, 21), vocab(), 1).unwrap();
        let f = vec![vec![0.5; 21]];
        let ex = m.prepare::<String>(&[], None, Some(&f), 500).unwrap();
        assert!(m.predict(&ex).unwrap().y_hat.is_finite());
        let wrong = vec![vec![0.5; 20]];
        assert!(m.prepare::<String>(&[], None, Some(&wrong), 500).is_err());
    }

    #[test]
    fn empty_tokens_rejected() {
        let m = Regressor::new(tiny(RegVariant::BiLstmWords, Incorporation::None, 0), vocab(), 1).unwrap();
        assert!(matches!(m.prepare::<String>(&[], None, None, 500), Err(RegError::Input(_))));
    }

    #[test]
    fn bucket_probs_sum_to_one() {
        let p = RegPrediction {
            y_hat: 5.0,
            cumulative: [0.99, 0.9, 0.6, 0.2, 0.01],
        };
        let b = p.bucket_probs();
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn word_vectors_fill_known_rows() {
        let mut m = Regressor::new(tiny(RegVariant::BiLstmWords, Incorporation::None, 0), vocab(), 1).unwrap();
        let text = "tax 1 2 3\nzzz 4 5 6\n\nfarms 0.5 0.5 0.5\n";
        assert_eq!(m.load_word_vectors(text.as_bytes()).unwrap(), 2);
        let id = m.vocab().id("tax");
        assert_eq!(&m.params().get("emb").unwrap().data()[id * 3..id * 3 + 3], &[1.0, 2.0, 3.0]);
        assert!(m.load_word_vectors("tax 1 2".as_bytes()).is_err());
    }

    #[test]
    fn plain_loss_matches_graph_loss() {
        let m = Regressor::new(tiny(RegVariant::BiLstmWords, Incorporation::None, 0), vocab(), 4).unwrap();
        let ex = m.prepare(&toks("ban the tax"), None, None, 12_345).unwrap();
        let (graph_loss, _) = m.loss_and_grads(std::slice::from_ref(&ex), None).unwrap();
        let view = m.params().view();
        let mut g = Graph::new(&view);
        let out = m.forward(&mut g, &ex, None).unwrap();
        let logits: [f64; 5] = g.value(out.ordinal).try_into().unwrap();
        let plain = super::super::loss(g.scalar(out.y_hat), ex.y, &logits, &ex.ordinal, 1.0).unwrap();
        assert!((plain - graph_loss).abs() < 1e-12);
    }
}
