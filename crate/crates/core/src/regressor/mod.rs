//! Petition-popularity regression: convolutional and recurrent variants,
//! discourse features, and an ordinal auxiliary objective.

mod model;
mod train;

pub use model::{RegConfig, RegExample, RegPrediction, RegVariant, Regressor};
pub use train::RegTrainer;

use thiserror::Error;

use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum RegError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("training error at step {step}: {detail}")]
    Training { step: usize, detail: String },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Signature-count scales predicted by the ordinal objective.
pub const ORDINAL_THRESHOLDS: [u64; 5] = [10, 100, 1_000, 10_000, 100_000];

/// Dataset floor on signature counts; also the offset of the output head.
pub const SIGNATURE_FLOOR: u64 = 150;

/// Cumulative indicators: component `k` is set iff `count >= threshold_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrdinalTarget(pub [bool; 5]);

impl OrdinalTarget {
    pub fn as_f64(&self) -> [f64; 5] {
        self.0.map(|b| if b { 1.0 } else { 0.0 })
    }
}

pub fn ordinal_targets(signature_count: u64) -> OrdinalTarget {
    OrdinalTarget(ORDINAL_THRESHOLDS.map(|t| signature_count >= t))
}

/// Logits are clipped to `[-ORDINAL_LOGIT_CLIP, ORDINAL_LOGIT_CLIP]` in [`loss`].
pub const ORDINAL_LOGIT_CLIP: f64 = 20.0;

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `(y_hat - y)^2 + lambda_ord * mean_k BCE(sigmoid(logit_k), target_k)`.
pub fn loss(y_hat: f64, y: f64, ordinal_logits: &[f64; 5], targets: &OrdinalTarget, lambda_ord: f64) -> Result<f64, RegError> {
    if !(lambda_ord >= 0.0) {
        return Err(RegError::Config(format!("lambda_ord {lambda_ord} must be non-negative")));
    }
    let mse = (y_hat - y).powi(2);
    let bce: f64 = ordinal_logits
        .iter()
        .zip(targets.as_f64())
        .map(|(&o, t)| {
            let o = o.clamp(-ORDINAL_LOGIT_CLIP, ORDINAL_LOGIT_CLIP);
            -(t * log_sigmoid(o) + (1.0 - t) * log_sigmoid(-o))
        })
        .sum::<f64>()
        / 5.0;
    let total = mse + lambda_ord * bce;
    if !total.is_finite() {
        return Err(RegError::Training {
            step: 0,
            detail: format!("non-finite loss from y_hat {y_hat}, y {y}"),
        });
    }
    Ok(total)
}

/// Mean absolute error and mean absolute percentage error, both in the
/// space of the values given (log signature counts in this crate).
pub fn evaluate(predictions: &[f64], golds: &[f64]) -> Result<(f64, f64), RegError> {
    if predictions.len() != golds.len() {
        return Err(RegError::Input(format!(
            "{} predictions for {} gold values",
            predictions.len(),
            golds.len()
        )));
    }
    if golds.is_empty() {
        return Err(RegError::Input("evaluation over zero examples".into()));
    }
    if golds.iter().any(|&y| y == 0.0) {
        return Err(RegError::Input("MAPE undefined for a zero gold value".into()));
    }
    let n = golds.len() as f64;
    let mae = predictions.iter().zip(golds).map(|(p, y)| (p - y).abs()).sum::<f64>() / n;
    let mape = 100.0 / n * predictions.iter().zip(golds).map(|(p, y)| ((p - y) / y).abs()).sum::<f64>();
    Ok((mae, mape))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordinal_examples() {
        assert_eq!(ordinal_targets(12_345).0, [true, true, true, true, false]);
        assert_eq!(ordinal_targets(5).0, [false; 5]);
        assert_eq!(ordinal_targets(100_000).0, [true; 5]);
        assert_eq!(ordinal_targets(10).0, [true, false, false, false, false]);
    }

    #[test]
    fn loss_examples() {
        let t = ordinal_targets(12_345);
        let perfect = [100.0, 100.0, 100.0, 100.0, -100.0];
        let floor = loss(3.0, 3.0, &perfect, &t, 1.0).unwrap();
        assert!(floor > 0.0 && floor < 1e-8, "{floor}");
        assert_eq!(loss(5.0, 3.0, &[0.0; 5], &t, 0.0).unwrap(), 4.0);
        assert!(loss(1.0, 1.0, &[0.0; 5], &t, -1.0).is_err());
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(evaluate(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), (0.0, 0.0));
        let (_, mape) = evaluate(&[110.0], &[100.0]).unwrap();
        assert!((mape - 10.0).abs() < 1e-12);
        let (a, _) = evaluate(&[1.0, 4.0], &[2.0, 3.0]).unwrap();
        let (b, _) = evaluate(&[11.0, 14.0], &[12.0, 13.0]).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(evaluate(&[1.0], &[1.0, 2.0]).is_err());
        assert!(evaluate(&[], &[]).is_err());
    }
}
