use super::{LossComponents, PreparedExample, SummError, Summarizer};
use crate::nn::{clip_global_norm, Adagrad, Optimizer};

/// Training phase: plain maximum likelihood, or with the coverage mechanism
/// and a weighted coverage penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase {
    Mle,
    Coverage { lambda: f64 },
}

impl Phase {
    pub fn coverage(self) -> bool {
        matches!(self, Phase::Coverage { .. })
    }

    pub fn lambda(self) -> f64 {
        match self {
            Phase::Mle => 0.0,
            Phase::Coverage { lambda } => lambda,
        }
    }
}

/// Owns the optimizer state for one summarizer.
pub struct SummTrainer {
    optimizer: Box<dyn Optimizer + Send>,
    clip_norm: f64,
    steps: usize,
}

impl SummTrainer {
    /// Adagrad (lr 0.15, accumulator 0.1) with global-norm clipping at 2.0.
    pub fn new() -> Result<Self, SummError> {
        Ok(Self::with_optimizer(Box::new(Adagrad::new(0.15, 0.1)?), 2.0))
    }

    pub fn with_optimizer(optimizer: Box<dyn Optimizer + Send>, clip_norm: f64) -> Self {
        SummTrainer {
            optimizer,
            clip_norm,
            steps: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One optimizer update on the batch-mean loss.
    pub fn train_step(&mut self, model: &mut Summarizer, batch: &[PreparedExample], phase: Phase) -> Result<LossComponents, SummError> {
        let (comps, grads) = model.loss_and_grads(batch, phase.coverage(), phase.lambda())?;
        if !comps.total.is_finite() {
            return Err(SummError::NonFinite {
                step: self.steps,
                detail: format!("loss {} (nll {}, coverage {})", comps.total, comps.nll, comps.coverage),
            });
        }
        if let Some(name) = grads.is_finite() {
            return Err(SummError::NonFinite {
                step: self.steps,
                detail: format!("gradient of `{name}` is not finite"),
            });
        }
        let params = model.params_mut();
        params.accumulate(&grads, 1.0)?;
        if self.clip_norm > 0.0 {
            clip_global_norm(params, self.clip_norm);
        }
        self.optimizer.step(params)?;
        self.steps += 1;
        Ok(comps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Incorporation;
    use crate::summarizer::SummConfig;
    use crate::vocab::Vocab;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn loss_decreases_on_repeated_pair() {
        let src = words("the cat sat on the mat near the dog");
        let tgt = words("cat sat on mat");
        let cfg = SummConfig {
            emb_dim: 8,
            hidden: 8,
            ..SummConfig::desk()
        };
        let mut model = Summarizer::new(cfg, Vocab::build(src.iter().map(String::as_str), 50), 1).unwrap();
        let ex = model.prepare(&src, &tgt, None).unwrap();
        let mut tr = SummTrainer::new().unwrap();
        let losses: Vec<f64> = (0..50)
            .map(|_| tr.train_step(&mut model, std::slice::from_ref(&ex), Phase::Mle).unwrap().total)
            .collect();
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "{losses:?}");
        }
    }

    #[test]
    fn coverage_phase_reports_penalty() {
        let src = words("a b c d");
        let cfg = SummConfig {
            emb_dim: 4,
            hidden: 4,
            ..SummConfig::desk()
        }
        .with_features(Incorporation::None, 0);
        let mut model = Summarizer::new(cfg, Vocab::build(src.iter().map(String::as_str), 20), 2).unwrap();
        let ex = model.prepare(&src, &words("b c"), None).unwrap();
        let mut tr = SummTrainer::new().unwrap();
        let c = tr.train_step(&mut model, &[ex], Phase::Coverage { lambda: 1.0 }).unwrap();
        assert!(c.coverage > 0.0);
        assert!((c.total - (c.nll + c.coverage)).abs() < 1e-12);
        assert_eq!(tr.steps(), 1);
    }
}
