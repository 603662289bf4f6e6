//! Pointer-generator network with coverage and optional discourse features.

use super::{BeamConfig, Hypothesis, StepModel, SummError};
use crate::features::Incorporation;
use crate::nn::{register_bilstm, register_linear, register_lstm, BiLstmVars, Gradients, Graph, LinearVars, LstmVars, ParamStore, ParamView, SeededRng, Var};
use crate::vocab::{ExtendedVocab, Vocab, EOS, START, UNK};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummConfig {
    pub emb_dim: usize,
    pub hidden: usize,
    pub mode: Incorporation,
    /// Width of the per-word feature vectors; 0 when `mode` is `None`.
    pub feature_dim: usize,
    pub max_enc_len: usize,
    pub max_dec_len: usize,
}

impl SummConfig {
    /// Full-scale sizes: 128-d embeddings, 256-d hidden states, 400/100 truncation.
    pub fn full() -> Self {
        SummConfig {
            emb_dim: 128,
            hidden: 256,
            mode: Incorporation::None,
            feature_dim: 0,
            max_enc_len: 400,
            max_dec_len: 100,
        }
    }

    pub fn desk() -> Self {
        SummConfig {
            emb_dim: 16,
            hidden: 32,
            ..Self::full()
        }
    }

    pub fn with_features(mut self, mode: Incorporation, feature_dim: usize) -> Self {
        self.mode = mode;
        self.feature_dim = if mode.uses_features() { feature_dim } else { 0 };
        self
    }

    fn validate(&self) -> Result<(), SummError> {
        if self.emb_dim == 0 || self.hidden == 0 || self.max_enc_len == 0 || self.max_dec_len == 0 {
            return Err(SummError::Config("dimensions and truncation limits must be positive".into()));
        }
        if self.mode.uses_features() != (self.feature_dim > 0) {
            return Err(SummError::Config(format!(
                "mode {} with feature dimension {}",
                self.mode.as_str(),
                self.feature_dim
            )));
        }
        Ok(())
    }

    /// Attention width; equal to the encoder state width.
    pub fn attn_dim(&self) -> usize {
        2 * self.hidden
    }
}

/// A source/target pair mapped to ids and truncated.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedExample {
    /// Base-vocabulary ids (OOV as UNK) for the encoder.
    pub source: Vec<usize>,
    /// Extended ids for the copy mechanism.
    pub source_ext: Vec<usize>,
    /// Decoder inputs: START followed by the target (base ids).
    pub decoder_input: Vec<usize>,
    /// Gold outputs in extended ids, ending with EOS.
    pub target: Vec<usize>,
    pub features: Option<Vec<Vec<f64>>>,
    pub oovs: Vec<String>,
}

impl PreparedExample {
    pub fn extended_len(&self, vocab_len: usize) -> usize {
        vocab_len + self.oovs.len()
    }
}

/// Per-step values recorded along a teacher-forced pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    /// Attention scores `e^t` before the softmax.
    pub attention_logits: Vec<f64>,
    pub attention: Vec<f64>,
    /// Coverage before this step's attention is added.
    pub coverage: Vec<f64>,
    pub coverage_loss: f64,
    pub p_gen: f64,
    pub p_vocab: Vec<f64>,
    pub target_prob: f64,
}

/// Scalar loss parts of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossComponents {
    pub total: f64,
    /// Mean per-token negative log-likelihood.
    pub nll: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone)]
pub struct Summarizer {
    config: SummConfig,
    vocab: Vocab,
    params: ParamStore,
}

pub(crate) struct Encoded {
    /// `n x 2H` encoder states.
    states: Var,
    /// `n x A` precomputed `W_h h_i`.
    keys: Var,
    /// `n x A` precomputed `W_f f_i` (M3 only).
    feature_keys: Option<Var>,
    init: (Var, Var),
    source_ext: Vec<usize>,
    ext_len: usize,
    n: usize,
}

pub(crate) struct StepOut {
    pub h: Var,
    pub c: Var,
    pub coverage: Option<Var>,
    pub logits: Var,
    pub attention: Var,
    pub p_vocab: Var,
    pub p_gen: Var,
    pub covloss: Option<Var>,
}

impl Summarizer {
    pub fn new(config: SummConfig, vocab: Vocab, seed: u64) -> Result<Self, SummError> {
        config.validate()?;
        let (e, h, d, a, v) = (config.emb_dim, config.hidden, config.feature_dim, config.attn_dim(), vocab.len());
        let root = SeededRng::new(seed).split("summarizer");
        let mut rng = root.split("init");
        let mut p = ParamStore::new();
        p.add_uniform("emb", vec![v, e], 0.1, &mut rng)?;
        let enc_in = if config.mode == Incorporation::M1 { e + d } else { e };
        register_bilstm(&mut p, "enc1", enc_in, h, &mut rng)?;
        if config.mode == Incorporation::M2 {
            register_bilstm(&mut p, "enc2", 2 * h + d, h, &mut rng)?;
        }
        register_linear(&mut p, "reduce.h", 2 * h, h, &mut rng)?;
        register_linear(&mut p, "reduce.c", 2 * h, h, &mut rng)?;
        register_lstm(&mut p, "dec", e, h, &mut rng)?;
        p.add_xavier("att.wh", a, 2 * h, &mut rng)?;
        p.add_xavier("att.ws", a, h, &mut rng)?;
        p.add_zeros("att.b", vec![a])?;
        p.add_uniform("att.v", vec![a], 0.1, &mut rng)?;
        p.add_uniform("att.wc", vec![a], 0.1, &mut rng)?;
        if config.mode == Incorporation::M3 {
            p.add_xavier("att.wf", a, d, &mut rng)?;
        }
        register_linear(&mut p, "out.v", 3 * h, h, &mut rng)?;
        register_linear(&mut p, "out.v2", h, v, &mut rng)?;
        p.add_uniform("ptr.wh", vec![2 * h], 0.1, &mut rng)?;
        p.add_uniform("ptr.ws", vec![h], 0.1, &mut rng)?;
        p.add_uniform("ptr.wx", vec![e], 0.1, &mut rng)?;
        p.add_zeros("ptr.b", vec![1])?;
        Ok(Summarizer { config, vocab, params: p })
    }

    /// Wraps stored weights; shapes are checked against `config`.
    pub fn from_parts(config: SummConfig, vocab: Vocab, params: ParamStore) -> Result<Self, SummError> {
        let fresh = Summarizer::new(config, vocab, 0)?;
        let expected: Vec<(&str, &[usize])> = fresh.params.iter().map(|(n, t)| (n, t.shape())).collect();
        let got: Vec<(&str, &[usize])> = params.iter().map(|(n, t)| (n, t.shape())).collect();
        if expected != got {
            return Err(SummError::Config("checkpoint parameters do not match the model configuration".into()));
        }
        Ok(Summarizer {
            config,
            vocab: fresh.vocab,
            params,
        })
    }

    pub fn config(&self) -> &SummConfig {
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

    /// Truncates to the configured limits and maps tokens to ids. `features`
    /// holds one vector per source token (before truncation).
    pub fn prepare<S: AsRef<str>, T: AsRef<str>>(
        &self,
        source: &[S],
        target: &[T],
        features: Option<&[Vec<f64>]>,
    ) -> Result<PreparedExample, SummError> {
        if source.is_empty() {
            return Err(SummError::Input("empty source document".into()));
        }
        let n = source.len().min(self.config.max_enc_len);
        let features = self.check_features(features, source.len(), n)?;
        let source = &source[..n];
        let ext = ExtendedVocab::new(&self.vocab, source);
        let target = &target[..target.len().min(self.config.max_dec_len)];
        let mut target_ext = ext.ids(target);
        target_ext.push(EOS);
        let mut decoder_input = vec![START];
        decoder_input.extend(target.iter().map(|t| self.vocab.id(t.as_ref())));
        Ok(PreparedExample {
            source: self.vocab.ids(source),
            source_ext: ext.ids(source),
            decoder_input,
            target: target_ext,
            features,
            oovs: ext.oovs().to_vec(),
        })
    }

    fn check_features(&self, features: Option<&[Vec<f64>]>, len: usize, keep: usize) -> Result<Option<Vec<Vec<f64>>>, SummError> {
        match (self.config.mode.uses_features(), features) {
            (false, _) => Ok(None),
            (true, None) => Err(SummError::Input(format!("mode {} needs features", self.config.mode.as_str()))),
            (true, Some(f)) => {
                if f.len() != len {
                    return Err(SummError::Alignment(format!("{} feature rows for {len} source tokens", f.len())));
                }
                if let Some(bad) = f.iter().position(|r| r.len() != self.config.feature_dim) {
                    return Err(SummError::Alignment(format!(
                        "feature row {bad} has width {}, expected {}",
                        f[bad].len(),
                        self.config.feature_dim
                    )));
                }
                Ok(Some(f[..keep].to_vec()))
            }
        }
    }

    /// Encoder side: `{h_i}`, attention keys and the decoder's initial state.
    pub(crate) fn encode(&self, g: &mut Graph<'_>, ex: &PreparedExample) -> Result<Encoded, SummError> {
        let n = ex.source.len();
        let emb = g.param("emb")?;
        let feature_rows = match &ex.features {
            Some(f) if f.len() != n => {
                return Err(SummError::Alignment(format!("{} feature rows for {n} source tokens", f.len())));
            }
            Some(f) => Some(f.iter().map(|r| g.input(r.clone())).collect::<Vec<_>>()),
            None => None,
        };
        let mut inputs = Vec::with_capacity(n);
        for (i, &id) in ex.source.iter().enumerate() {
            let w = g.embed_row(emb, id)?;
            inputs.push(match (self.config.mode, &feature_rows) {
                (Incorporation::M1, Some(f)) => g.concat(&[w, f[i]])?,
                _ => w,
            });
        }
        let enc1 = BiLstmVars::bind(g, "enc1")?.run(g, &inputs)?;
        let enc = match (self.config.mode, &feature_rows) {
            (Incorporation::M2, Some(f)) => {
                let stacked = enc1
                    .states
                    .iter()
                    .zip(f)
                    .map(|(&h, &fi)| g.concat(&[h, fi]))
                    .collect::<Result<Vec<_>, _>>()?;
                BiLstmVars::bind(g, "enc2")?.run(g, &stacked)?
            }
            _ => enc1,
        };
        let states = g.stack(&enc.states)?;
        let wh = g.param("att.wh")?;
        let keys = g.linear_rows(states, wh)?;
        let feature_keys = match (self.config.mode, &feature_rows) {
            (Incorporation::M3, Some(f)) => {
                let fm = g.stack(f)?;
                let wf = g.param("att.wf")?;
                Some(g.linear_rows(fm, wf)?)
            }
            _ => None,
        };
        let finals_h = g.concat(&[enc.forward_final.0, enc.backward_final.0])?;
        let finals_c = g.concat(&[enc.forward_final.1, enc.backward_final.1])?;
        let h0 = LinearVars::bind(g, "reduce.h")?.apply(g, finals_h)?;
        let c0 = LinearVars::bind(g, "reduce.c")?.apply(g, finals_c)?;
        Ok(Encoded {
            states,
            keys,
            feature_keys,
            init: (h0, c0),
            source_ext: ex.source_ext.clone(),
            ext_len: ex.extended_len(self.vocab.len()),
            n,
        })
    }

    /// One decoder step: feed `prev` (base id), attend, and mix generation
    /// with copying. `coverage` is `Some` when the coverage mechanism is on.
    pub(crate) fn step(&self, g: &mut Graph<'_>, enc: &Encoded, prev: usize, h: Var, c: Var, coverage: Option<Var>) -> Result<StepOut, SummError> {
        let emb = g.param("emb")?;
        let x = g.embed_row(emb, prev)?;
        let (h, c) = LstmVars::bind(g, "dec")?.step(g, x, h, c)?;

        let ws = g.param("att.ws")?;
        let b = g.param("att.b")?;
        let ws_s = g.matvec(ws, h)?;
        let query = g.add(ws_s, b)?;
        let mut pre = g.add_row_broadcast(enc.keys, query)?;
        if let Some(cov) = coverage {
            let wc = g.param("att.wc")?;
            let ct = g.outer(cov, wc);
            pre = g.add(pre, ct)?;
        }
        if let Some(fk) = enc.feature_keys {
            pre = g.add(pre, fk)?;
        }
        let act = g.tanh(pre);
        let v = g.param("att.v")?;
        let logits = g.matvec(act, v)?;
        let attention = g.softmax(logits)?;
        let context = g.vecmat(attention, enc.states)?;

        let sc = g.concat(&[h, context])?;
        let hidden = LinearVars::bind(g, "out.v")?.apply(g, sc)?;
        let scores = LinearVars::bind(g, "out.v2")?.apply(g, hidden)?;
        let p_vocab = g.softmax(scores)?;

        let pwh = g.param("ptr.wh")?;
        let pws = g.param("ptr.ws")?;
        let pwx = g.param("ptr.wx")?;
        let pb = g.param("ptr.b")?;
        let a1 = g.dot(pwh, context)?;
        let a2 = g.dot(pws, h)?;
        let a3 = g.dot(pwx, x)?;
        let z = g.add(a1, a2)?;
        let z = g.add(z, a3)?;
        let z = g.add(z, pb)?;
        let p_gen = g.sigmoid(z);

        let (coverage, covloss) = match coverage {
            Some(cov) => {
                let m = g.min(attention, cov)?;
                let loss = g.sum(m);
                (Some(g.add(cov, attention)?), Some(loss))
            }
            None => (None, None),
        };
        Ok(StepOut {
            h,
            c,
            coverage,
            logits,
            attention,
            p_vocab,
            p_gen,
            covloss,
        })
    }

    /// Probability of extended id `target` under the mixed distribution.
    fn target_prob(&self, g: &mut Graph<'_>, enc: &Encoded, out: &StepOut, target: usize) -> Result<Var, SummError> {
        let gen = if target < self.vocab.len() {
            let pv = g.pick(out.p_vocab, target)?;
            Some(g.mul(out.p_gen, pv)?)
        } else {
            None
        };
        let copy = if enc.source_ext.contains(&target) {
            let mask = enc.source_ext.iter().map(|&s| f64::from(u8::from(s == target))).collect();
            let mask = g.input(mask);
            let mass = g.dot(out.attention, mask)?;
            let one_minus = g.affine(out.p_gen, -1.0, 1.0);
            Some(g.mul(one_minus, mass)?)
        } else {
            None
        };
        match (gen, copy) {
            (Some(a), Some(b)) => Ok(g.add(a, b)?),
            (Some(a), None) | (None, Some(a)) => Ok(a),
            (None, None) => Err(SummError::Input(format!("target id {target} is neither in the vocabulary nor the source"))),
        }
    }

    /// Teacher-forced loss of one example: mean token NLL plus
    /// `lambda_cov` times mean coverage loss (when `coverage` is on).
    pub(crate) fn example_loss(
        &self,
        g: &mut Graph<'_>,
        ex: &PreparedExample,
        coverage: bool,
        lambda_cov: f64,
        mut trace: Option<&mut Vec<StepTrace>>,
    ) -> Result<(Var, Var, Option<Var>), SummError> {
        let enc = self.encode(g, ex)?;
        let (mut h, mut c) = enc.init;
        let mut cov = coverage.then(|| g.zeros(enc.n));
        let mut nlls = Vec::with_capacity(ex.target.len());
        let mut covs = Vec::with_capacity(ex.target.len());
        for (&prev, &tgt) in ex.decoder_input.iter().zip(&ex.target) {
            let before = cov.map(|c| g.value(c).to_vec());
            let out = self.step(g, &enc, prev, h, c, cov)?;
            let p = self.target_prob(g, &enc, &out, tgt)?;
            let lp = g.ln(p);
            nlls.push(g.affine(lp, -1.0, 0.0));
            if let Some(cl) = out.covloss {
                covs.push(cl);
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(StepTrace {
                    attention_logits: g.value(out.logits).to_vec(),
                    attention: g.value(out.attention).to_vec(),
                    coverage: before.unwrap_or_else(|| vec![0.0; enc.n]),
                    coverage_loss: out.covloss.map_or(0.0, |v| g.scalar(v)),
                    p_gen: g.scalar(out.p_gen),
                    p_vocab: g.value(out.p_vocab).to_vec(),
                    target_prob: g.scalar(p),
                });
            }
            (h, c, cov) = (out.h, out.c, out.coverage);
        }
        let nll = g.mean_scalars(&nlls)?;
        if covs.is_empty() || lambda_cov == 0.0 {
            return Ok((nll, nll, (!covs.is_empty()).then(|| g.mean_scalars(&covs)).transpose()?));
        }
        let cov_mean = g.mean_scalars(&covs)?;
        let weighted = g.affine(cov_mean, lambda_cov, 0.0);
        Ok((g.add(nll, weighted)?, nll, Some(cov_mean)))
    }

    /// Batch-mean loss on a graph; returns `(total, components)`.
    pub(crate) fn batch_loss(
        &self,
        g: &mut Graph<'_>,
        batch: &[PreparedExample],
        coverage: bool,
        lambda_cov: f64,
    ) -> Result<(Var, LossComponents), SummError> {
        if batch.is_empty() {
            return Err(SummError::Input("empty batch".into()));
        }
        let mut totals = Vec::with_capacity(batch.len());
        let (mut nll, mut cov) = (0.0, 0.0);
        for ex in batch {
            let (t, n, c) = self.example_loss(g, ex, coverage, lambda_cov, None)?;
            totals.push(t);
            nll += g.scalar(n) / batch.len() as f64;
            cov += c.map_or(0.0, |c| g.scalar(c)) / batch.len() as f64;
        }
        let total = g.mean_scalars(&totals)?;
        let comps = LossComponents {
            total: g.scalar(total),
            nll,
            coverage: cov,
        };
        Ok((total, comps))
    }

    /// Batch loss and its parameter gradients, without updating anything.
    pub fn loss_and_grads(&self, batch: &[PreparedExample], coverage: bool, lambda_cov: f64) -> Result<(LossComponents, Gradients), SummError> {
        let view = self.params.view();
        let mut g = Graph::new(&view);
        let (loss, comps) = self.batch_loss(&mut g, batch, coverage, lambda_cov)?;
        if !comps.total.is_finite() {
            return Ok((comps, Gradients::new()));
        }
        let grads = g.backward(loss)?.param_grads(&g);
        Ok((comps, grads))
    }

    /// Loss without gradients.
    pub fn evaluate(&self, batch: &[PreparedExample], coverage: bool, lambda_cov: f64) -> Result<LossComponents, SummError> {
        let view = self.params.view();
        let mut g = Graph::new(&view);
        Ok(self.batch_loss(&mut g, batch, coverage, lambda_cov)?.1)
    }

    /// Teacher-forced pass recording attention, coverage and distributions.
    pub fn trace(&self, ex: &PreparedExample, coverage: bool) -> Result<Vec<StepTrace>, SummError> {
        let view = self.params.view();
        let mut g = Graph::new(&view);
        let mut out = Vec::new();
        self.example_loss(&mut g, ex, coverage, 0.0, Some(&mut out))?;
        Ok(out)
    }

    /// Beam-search decode; returns extended ids and their surface tokens.
    pub fn decode(&self, ex: &PreparedExample, cfg: &BeamConfig, coverage: bool) -> Result<(Hypothesis, Vec<String>), SummError> {
        let view = self.params.view();
        let mut stepper = self.stepper(&view, ex, coverage);
        let hyp = super::beam_decode(&mut stepper, cfg)?;
        let words = self.surface(ex, &hyp.tokens);
        Ok((hyp, words))
    }

    pub fn surface(&self, ex: &PreparedExample, ids: &[usize]) -> Vec<String> {
        let v = self.vocab.len();
        ids.iter()
            .map(|&i| {
                if i < v {
                    self.vocab.token(i).unwrap_or_default().to_string()
                } else {
                    ex.oovs.get(i - v).cloned().unwrap_or_default()
                }
            })
            .collect()
    }

    pub(crate) fn stepper<'a, 'v>(&'a self, view: &'v ParamView, ex: &'a PreparedExample, coverage: bool) -> SummStepper<'a, 'v> {
        SummStepper {
            model: self,
            graph: Graph::new(view),
            ex,
            enc: None,
            coverage,
        }
    }
}

/// Mixed output distribution over the extended vocabulary:
/// `P(w) = p_gen P_voc(w) + (1 - p_gen) sum_{i: w_i = w} a_i`.
pub fn final_distribution(p_vocab: &[f64], p_gen: f64, attention: &[f64], source_ext: &[usize], ext_len: usize) -> Vec<f64> {
    let mut p = vec![0.0; ext_len.max(p_vocab.len())];
    for (o, &v) in p.iter_mut().zip(p_vocab) {
        *o = p_gen * v;
    }
    for (&id, &a) in source_ext.iter().zip(attention) {
        p[id] += (1.0 - p_gen) * a;
    }
    p
}

/// `sum_i min(a_i, c_i)`.
pub fn coverage_loss(attention: &[f64], coverage: &[f64]) -> f64 {
    attention.iter().zip(coverage).map(|(a, c)| a.min(*c)).sum()
}

pub(crate) struct SummStepper<'a, 'v> {
    model: &'a Summarizer,
    graph: Graph<'v>,
    ex: &'a PreparedExample,
    enc: Option<Encoded>,
    coverage: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DecoderState {
    h: Var,
    c: Var,
    coverage: Option<Var>,
}

impl StepModel for SummStepper<'_, '_> {
    type State = DecoderState;

    fn initial(&mut self) -> Result<DecoderState, SummError> {
        let enc = self.model.encode(&mut self.graph, self.ex)?;
        let state = DecoderState {
            h: enc.init.0,
            c: enc.init.1,
            coverage: self.coverage.then(|| self.graph.zeros(enc.n)),
        };
        self.enc = Some(enc);
        Ok(state)
    }

    fn step(&mut self, state: &DecoderState, prev: Option<usize>) -> Result<(Vec<f64>, DecoderState), SummError> {
        let enc = self.enc.as_ref().ok_or_else(|| SummError::Input("decoder stepped before initialization".into()))?;
        let v = self.model.vocab.len();
        let prev = match prev {
            None => START,
            Some(i) if i >= v => UNK,
            Some(i) => i,
        };
        let out = self.model.step(&mut self.graph, enc, prev, state.h, state.c, state.coverage)?;
        let g = &self.graph;
        let p = final_distribution(g.value(out.p_vocab), g.scalar(out.p_gen), g.value(out.attention), &enc.source_ext, enc.ext_len);
        let lp = p.into_iter().map(f64::ln).collect();
        Ok((
            lp,
            DecoderState {
                h: out.h,
                c: out.c,
                coverage: out.coverage,
            },
        ))
    }

    fn eos(&self) -> usize {
        EOS
    }
}
