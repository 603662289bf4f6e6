//! Frozen discourse encoder producing contextualized EDU vectors.
//!
//! Per EDU, word and POS embeddings run through one Bi-LSTM and syntax
//! vectors through another; each is average-pooled and the two pools are
//! concatenated into `h^e`. A document-level Bi-LSTM over `{h^e}` gives `{f}`.

use super::{syntax_stub, FeatureError};
use crate::discourse::EduSpan;
use crate::nn::{avg_pool, bilstm_run, register_bilstm, LstmWeights, ParamStore, SeededRng, Tensor};
use crate::vocab::Vocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub word_dim: usize,
    pub pos_dim: usize,
    pub syntax_dim: usize,
    pub word_hidden: usize,
    pub syntax_hidden: usize,
    pub context_hidden: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            word_dim: 32,
            pos_dim: 8,
            syntax_dim: 16,
            word_hidden: 32,
            syntax_hidden: 16,
            context_hidden: 32,
        }
    }
}

impl EncoderConfig {
    /// `|h^e| = 2 H_w + 2 H_s`.
    pub fn edu_dim(&self) -> usize {
        2 * self.word_hidden + 2 * self.syntax_hidden
    }

    /// `|f| = 2 H_c`.
    pub fn output_dim(&self) -> usize {
        2 * self.context_hidden
    }
}

/// Borrowed view of the document fields the encoder reads.
#[derive(Debug, Clone, Copy)]
pub struct EncoderInput<'a> {
    pub tokens: &'a [String],
    pub pos: &'a [String],
    pub spans: &'a [EduSpan],
    /// Per-token vectors; stub vectors are generated when absent.
    pub syntax: Option<&'a [Vec<f64>]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentFeatureSequence {
    /// Pooled EDU representations `h^e`.
    pub edu: Vec<Vec<f64>>,
    /// Contextualized EDU vectors `f`.
    pub f: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct DiscourseEncoder {
    config: EncoderConfig,
    words: Vocab,
    pos: Vocab,
    params: ParamStore,
}

fn tensor(v: impl IntoIterator<Item = f64>) -> Result<Tensor, FeatureError> {
    Ok(Tensor::vector(v.into_iter().map(|x| x as f32).collect())?)
}

impl DiscourseEncoder {
    /// Seeded random weights: embeddings uniform(-0.1, 0.1), LSTM matrices
    /// Xavier, biases zero.
    pub fn seeded(config: EncoderConfig, words: Vocab, pos: Vocab, seed: u64) -> Result<Self, FeatureError> {
        let rng = SeededRng::new(seed).split("discourse-encoder");
        let mut params = ParamStore::new();
        params.add_uniform("enc.word_emb", vec![words.len(), config.word_dim], 0.1, &mut rng.split("word_emb"))?;
        params.add_uniform("enc.pos_emb", vec![pos.len(), config.pos_dim], 0.1, &mut rng.split("pos_emb"))?;
        let mut lstm_rng = rng.split("lstm");
        register_bilstm(&mut params, "enc.edu_words", config.word_dim + config.pos_dim, config.word_hidden, &mut lstm_rng)?;
        register_bilstm(&mut params, "enc.edu_syntax", config.syntax_dim, config.syntax_hidden, &mut lstm_rng)?;
        register_bilstm(&mut params, "enc.context", config.edu_dim(), config.context_hidden, &mut lstm_rng)?;
        Ok(DiscourseEncoder {
            config,
            words,
            pos,
            params,
        })
    }

    /// Rebuilds an encoder from stored weights, inferring dimensions.
    pub fn from_parts(words: Vocab, pos: Vocab, params: ParamStore) -> Result<Self, FeatureError> {
        let (wv, word_dim) = params.get("enc.word_emb")?.dims2();
        let (pv, pos_dim) = params.get("enc.pos_emb")?.dims2();
        if wv != words.len() || pv != pos.len() {
            return Err(FeatureError::Alignment(format!(
                "embedding tables ({wv}, {pv}) do not match vocabularies ({}, {})",
                words.len(),
                pos.len()
            )));
        }
        let ew = LstmWeights::from_store(&params, "enc.edu_words.fw")?;
        let es = LstmWeights::from_store(&params, "enc.edu_syntax.fw")?;
        let ctx = LstmWeights::from_store(&params, "enc.context.fw")?;
        let config = EncoderConfig {
            word_dim,
            pos_dim,
            syntax_dim: es.input_dim(),
            word_hidden: ew.hidden(),
            syntax_hidden: es.hidden(),
            context_hidden: ctx.hidden(),
        };
        if ew.input_dim() != word_dim + pos_dim || ctx.input_dim() != config.edu_dim() {
            return Err(FeatureError::Alignment("encoder LSTM input widths are inconsistent".into()));
        }
        Ok(DiscourseEncoder {
            config,
            words,
            pos,
            params,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn word_vocab(&self) -> &Vocab {
        &self.words
    }

    pub fn pos_vocab(&self) -> &Vocab {
        &self.pos
    }

    fn embedding(&self, table: &str, row: usize) -> Result<Vec<f32>, FeatureError> {
        let t = self.params.get(table)?;
        let (_, d) = t.dims2();
        Ok(t.data()[row * d..(row + 1) * d].to_vec())
    }

    fn check(&self, input: &EncoderInput<'_>) -> Result<(), FeatureError> {
        let n = input.tokens.len();
        if input.spans.is_empty() {
            return Err(FeatureError::Alignment("document has no EDUs".into()));
        }
        if input.pos.len() != n {
            return Err(FeatureError::Alignment(format!("{} POS tags for {n} tokens", input.pos.len())));
        }
        for s in input.spans {
            if s.start >= s.end || s.end > n {
                return Err(FeatureError::Alignment(format!(
                    "EDU {} span [{}, {}) outside {n} tokens",
                    s.edu_id, s.start, s.end
                )));
            }
        }
        if let Some(syn) = input.syntax {
            if syn.len() != n {
                return Err(FeatureError::Alignment(format!("{} syntax vectors for {n} tokens", syn.len())));
            }
            if let Some(bad) = syn.iter().position(|v| v.len() != self.config.syntax_dim) {
                return Err(FeatureError::Alignment(format!(
                    "syntax vector {bad} has dimension {}, expected {}",
                    syn[bad].len(),
                    self.config.syntax_dim
                )));
            }
        }
        Ok(())
    }

    pub fn encode(&self, input: &EncoderInput<'_>) -> Result<LatentFeatureSequence, FeatureError> {
        self.check(input)?;
        let p = &self.params;
        let words_fw = LstmWeights::from_store(p, "enc.edu_words.fw")?;
        let words_bw = LstmWeights::from_store(p, "enc.edu_words.bw")?;
        let syn_fw = LstmWeights::from_store(p, "enc.edu_syntax.fw")?;
        let syn_bw = LstmWeights::from_store(p, "enc.edu_syntax.bw")?;
        let mut edus = Vec::with_capacity(input.spans.len());
        for span in input.spans {
            let mut word_inputs = Vec::with_capacity(span.len());
            let mut syn_inputs = Vec::with_capacity(span.len());
            for i in span.start..span.end {
                let mut x = self.embedding("enc.word_emb", self.words.id(&input.tokens[i]))?;
                x.extend(self.embedding("enc.pos_emb", self.pos.id(&input.pos[i]))?);
                word_inputs.push(Tensor::vector(x)?);
                let s = match input.syntax {
                    Some(syn) => tensor(syn[i].iter().copied())?,
                    None => tensor(syntax_stub(&input.tokens[i], &input.pos[i], self.config.syntax_dim))?,
                };
                syn_inputs.push(s);
            }
            let hw = avg_pool(&bilstm_run(&word_inputs, words_fw, words_bw)?)?;
            let hs = avg_pool(&bilstm_run(&syn_inputs, syn_fw, syn_bw)?)?;
            let mut he = hw.into_data();
            he.extend_from_slice(hs.data());
            edus.push(Tensor::vector(he)?);
        }
        let ctx = bilstm_run(
            &edus,
            LstmWeights::from_store(p, "enc.context.fw")?,
            LstmWeights::from_store(p, "enc.context.bw")?,
        )?;
        let widen = |t: &Tensor| t.data().iter().map(|&v| f64::from(v)).collect::<Vec<f64>>();
        Ok(LatentFeatureSequence {
            edu: edus.iter().map(widen).collect(),
            f: ctx.iter().map(widen).collect(),
        })
    }
}
