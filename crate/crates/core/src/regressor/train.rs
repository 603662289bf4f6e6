use super::{RegError, RegExample, Regressor};
use crate::nn::{clip_global_norm, Adagrad, Optimizer, SeededRng};

/// Optimizer state and dropout stream for one regressor.
pub struct RegTrainer {
    optimizer: Box<dyn Optimizer + Send>,
    clip_norm: f64,
    rng: SeededRng,
    steps: usize,
}

impl RegTrainer {
    pub fn new(lr: f64, seed: u64) -> Result<Self, RegError> {
        Ok(Self::with_optimizer(Box::new(Adagrad::new(lr, 0.1)?), 2.0, seed))
    }

    pub fn with_optimizer(optimizer: Box<dyn Optimizer + Send>, clip_norm: f64, seed: u64) -> Self {
        RegTrainer {
            optimizer,
            clip_norm,
            rng: SeededRng::new(seed).split("regressor-dropout"),
            steps: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One update on the batch-mean loss with dropout active. The L2 term
    /// `l2/2 * ||w||^2` enters as `l2 * w` added to each gradient.
    pub fn train_step(&mut self, model: &mut Regressor, batch: &[RegExample]) -> Result<f64, RegError> {
        let (loss, grads) = model.loss_and_grads(batch, Some(&mut self.rng))?;
        if !loss.is_finite() {
            return Err(RegError::Training {
                step: self.steps,
                detail: format!("non-finite loss {loss}"),
            });
        }
        if let Some(name) = grads.is_finite() {
            return Err(RegError::Training {
                step: self.steps,
                detail: format!("gradient of `{name}` is not finite"),
            });
        }
        let l2 = model.config().l2;
        let params = model.params_mut();
        params.accumulate(&grads, 1.0)?;
        if l2 > 0.0 {
            let mut decay = crate::nn::Gradients::new();
            for (name, value) in params.iter() {
                decay.insert(name, value.data().iter().map(|&w| f64::from(w)).collect());
            }
            params.accumulate(&decay, l2)?;
        }
        if self.clip_norm > 0.0 {
            clip_global_norm(params, self.clip_norm);
        }
        self.optimizer.step(params)?;
        self.steps += 1;
        Ok(loss)
    }
}
