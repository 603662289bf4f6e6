//! Greedy and beam-search decoding over any step-wise scorer.

use std::cmp::Ordering;

use super::SummError;

/// One decoding step: log-probabilities over the (extended) vocabulary for
/// the next token given a state and the previously emitted token.
pub trait StepModel {
    type State: Clone;

    fn initial(&mut self) -> Result<Self::State, SummError>;

    fn step(&mut self, state: &Self::State, prev: Option<usize>) -> Result<(Vec<f64>, Self::State), SummError>;

    fn eos(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_size: 4,
            min_len: 35,
            max_len: 100,
        }
    }
}

/// A finished hypothesis. `tokens` excludes the end marker.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    /// Number of scored steps (tokens plus the end marker if emitted).
    pub steps: usize,
}

impl Hypothesis {
    pub fn normalized(&self) -> f64 {
        self.log_prob / self.steps.max(1) as f64
    }
}

fn check(cfg: &BeamConfig) -> Result<(), SummError> {
    if cfg.beam_size == 0 || cfg.min_len > cfg.max_len {
        return Err(SummError::Config(format!(
            "beam {} with length window [{}, {}]",
            cfg.beam_size, cfg.min_len, cfg.max_len
        )));
    }
    Ok(())
}

fn masked(mut lp: Vec<f64>, eos: usize, t: usize, min_len: usize) -> Vec<f64> {
    if t < min_len {
        if let Some(v) = lp.get_mut(eos) {
            *v = f64::NEG_INFINITY;
        }
    }
    lp
}

/// Highest-scoring index, lowest index on ties; NaN never wins.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] || xs[best].is_nan() {
            best = i;
        }
    }
    best
}

/// Argmax decoding with the same length window as [`beam_decode`].
pub fn greedy_decode<M: StepModel>(model: &mut M, min_len: usize, max_len: usize) -> Result<Hypothesis, SummError> {
    check(&BeamConfig {
        beam_size: 1,
        min_len,
        max_len,
    })?;
    let eos = model.eos();
    let mut state = model.initial()?;
    let mut prev = None;
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        steps: 0,
    };
    for t in 0..max_len {
        let (lp, next) = model.step(&state, prev)?;
        let lp = masked(lp, eos, t, min_len);
        let k = argmax(&lp);
        hyp.log_prob += lp[k];
        hyp.steps += 1;
        if k == eos {
            return Ok(hyp);
        }
        hyp.tokens.push(k);
        state = next;
        prev = Some(k);
    }
    Ok(hyp)
}

struct Live<S> {
    tokens: Vec<usize>,
    log_prob: f64,
    state: S,
}

struct Candidate {
    beam: usize,
    token: usize,
    log_prob: f64,
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.log_prob
        .total_cmp(&a.log_prob)
        .then(a.token.cmp(&b.token))
        .then(a.beam.cmp(&b.beam))
}

/// Beam search. Each live hypothesis proposes its `2 * beam` best tokens;
/// candidates are ranked by cumulative log-probability (ties: lower token id,
/// then lower beam index). The end marker is suppressed before `min_len`
/// tokens and hypotheses still open after `max_len` tokens are finished as is.
/// Finished hypotheses are ranked by length-normalized log-probability.
pub fn beam_decode<M: StepModel>(model: &mut M, cfg: &BeamConfig) -> Result<Hypothesis, SummError> {
    check(cfg)?;
    let eos = model.eos();
    let k = cfg.beam_size;
    let mut live = vec![Live {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: model.initial()?,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for t in 0..cfg.max_len {
        let mut candidates = Vec::new();
        let mut next_states = Vec::with_capacity(live.len());
        for (b, hyp) in live.iter().enumerate() {
            let (lp, next) = model.step(&hyp.state, hyp.tokens.last().copied())?;
            let lp = masked(lp, eos, t, cfg.min_len);
            let mut order: Vec<usize> = (0..lp.len()).filter(|&i| !lp[i].is_nan() && lp[i] > f64::NEG_INFINITY).collect();
            order.sort_by(|&i, &j| lp[j].total_cmp(&lp[i]).then(i.cmp(&j)));
            order.truncate(2 * k);
            candidates.extend(order.into_iter().map(|token| Candidate {
                beam: b,
                token,
                log_prob: hyp.log_prob + lp[token],
            }));
            next_states.push(next);
        }
        candidates.sort_by(rank);
        let mut new_live = Vec::with_capacity(k);
        for c in candidates {
            let parent = &live[c.beam];
            if c.token == eos {
                finished.push(Hypothesis {
                    tokens: parent.tokens.clone(),
                    log_prob: c.log_prob,
                    steps: parent.tokens.len() + 1,
                });
            } else {
                let mut tokens = parent.tokens.clone();
                tokens.push(c.token);
                new_live.push(Live {
                    tokens,
                    log_prob: c.log_prob,
                    state: next_states[c.beam].clone(),
                });
            }
            if new_live.len() == k || finished.len() >= k {
                break;
            }
        }
        live = new_live;
        if finished.len() >= k || live.is_empty() {
            break;
        }
    }
    if finished.len() < k {
        finished.extend(live.into_iter().map(|h| Hypothesis {
            steps: h.tokens.len(),
            tokens: h.tokens,
            log_prob: h.log_prob,
        }));
    }
    let mut best: Option<Hypothesis> = None;
    for h in finished {
        if best.as_ref().map_or(true, |b| h.normalized() > b.normalized()) {
            best = Some(h);
        }
    }
    best.ok_or_else(|| SummError::Config("beam search produced no hypothesis".into()))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Bigram table LM: `table[prev][next]` are log-probabilities, with row
    /// `vocab` used for the first step.
    #[derive(Debug, Clone)]
    pub(crate) struct TableLm {
        pub table: Vec<Vec<f64>>,
        pub eos: usize,
    }

    impl StepModel for TableLm {
        type State = ();

        fn initial(&mut self) -> Result<(), SummError> {
            Ok(())
        }

        fn step(&mut self, _: &(), prev: Option<usize>) -> Result<(Vec<f64>, ()), SummError> {
            let row = prev.unwrap_or(self.table.len() - 1);
            Ok((self.table[row].clone(), ()))
        }

        fn eos(&self) -> usize {
            self.eos
        }
    }

    fn ln(ps: &[f64]) -> Vec<f64> {
        ps.iter().map(|p| p.ln()).collect()
    }

    /// Tokens: 0 = end, 1 = a, 2 = b. Greedy takes `a` (0.6) but `b a` (0.36)
    /// beats `a a` / `a b` (0.3).
    pub(crate) fn garden_path() -> TableLm {
        TableLm {
            table: vec![
                ln(&[1.0, 0.0, 0.0]),
                ln(&[0.0, 0.5, 0.5]),
                ln(&[0.0, 0.9, 0.1]),
                ln(&[0.0, 0.6, 0.4]),
            ],
            eos: 0,
        }
    }

    #[test]
    fn beam_two_beats_greedy_on_garden_path() {
        let cfg = BeamConfig {
            beam_size: 2,
            min_len: 2,
            max_len: 2,
        };
        let greedy = greedy_decode(&mut garden_path(), 2, 2).unwrap();
        assert_eq!(greedy.tokens, vec![1, 1]);
        let beam = beam_decode(&mut garden_path(), &cfg).unwrap();
        assert_eq!(beam.tokens, vec![2, 1]);
        assert!((beam.log_prob - 0.36f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn beam_one_is_greedy_on_garden_path() {
        let cfg = BeamConfig {
            beam_size: 1,
            min_len: 0,
            max_len: 5,
        };
        let g = greedy_decode(&mut garden_path(), 0, 5).unwrap();
        assert_eq!(beam_decode(&mut garden_path(), &cfg).unwrap(), g);
    }

    #[test]
    fn length_window_is_enforced() {
        // the end marker is by far the likeliest token everywhere
        let lm = TableLm {
            table: vec![ln(&[0.98, 0.01, 0.01]); 4],
            eos: 0,
        };
        for (min_len, max_len) in [(0, 0), (0, 3), (2, 3), (3, 3), (1, 7)] {
            for beam_size in 1..4 {
                let cfg = BeamConfig {
                    beam_size,
                    min_len,
                    max_len,
                };
                let h = beam_decode(&mut lm.clone(), &cfg).unwrap();
                assert!((min_len..=max_len).contains(&h.tokens.len()), "{cfg:?}: {h:?}");
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let bad = BeamConfig {
            beam_size: 0,
            min_len: 0,
            max_len: 3,
        };
        assert!(beam_decode(&mut garden_path(), &bad).is_err());
        assert!(greedy_decode(&mut garden_path(), 4, 3).is_err());
    }
}
