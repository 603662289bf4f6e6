use std::collections::BTreeMap;

use super::{NnError, ParamStore, Result};

/// Consumes the accumulated gradients in a [`ParamStore`] and zeroes them.
pub trait Optimizer {
    fn step(&mut self, params: &mut ParamStore) -> Result<()>;
}

fn check_finite(name: &str, grad: &[f32]) -> Result<()> {
    if let Some(bad) = grad.iter().find(|g| !g.is_finite()) {
        return Err(NnError::Training {
            param: name.to_string(),
            reason: format!("non-finite gradient {bad}"),
        });
    }
    Ok(())
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(params: &mut ParamStore, max_norm: f64) -> f64 {
    let mut sq = 0.0f64;
    for (_, _, g) in params.iter_mut_with_grad() {
        sq += g.data().iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>();
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm.is_finite() {
        let k = max_norm / norm;
        for (_, _, g) in params.iter_mut_with_grad() {
            g.data_mut().iter_mut().for_each(|v| *v = (f64::from(*v) * k) as f32);
        }
    }
    norm
}

/// Per-coordinate adaptive step: `acc += g^2; w -= lr * g / sqrt(acc)`.
#[derive(Debug, Clone)]
pub struct Adagrad {
    lr: f64,
    init_acc: f64,
    accumulators: BTreeMap<String, Vec<f32>>,
}

impl Adagrad {
    pub fn new(lr: f64, init_acc: f64) -> Result<Self> {
        if !(lr > 0.0) || !(init_acc >= 0.0) {
            return Err(NnError::Training {
                param: "<optimizer>".into(),
                reason: format!("invalid adagrad settings lr={lr} init_acc={init_acc}"),
            });
        }
        Ok(Adagrad {
            lr,
            init_acc,
            accumulators: BTreeMap::new(),
        })
    }

    pub fn accumulator(&self, name: &str) -> Option<&[f32]> {
        self.accumulators.get(name).map(Vec::as_slice)
    }
}

impl Optimizer for Adagrad {
    fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        for (name, _, g) in params.iter_mut_with_grad() {
            check_finite(name, g.data())?;
        }
        for (name, value, grad) in params.iter_mut_with_grad() {
            let acc = self
                .accumulators
                .entry(name.to_string())
                .or_insert_with(|| vec![self.init_acc as f32; value.len()]);
            for ((w, g), a) in value.data_mut().iter_mut().zip(grad.data_mut()).zip(acc.iter_mut()) {
                let gv = f64::from(*g);
                let na = f64::from(*a) + gv * gv;
                *a = na as f32;
                if na > 0.0 {
                    *w = (f64::from(*w) - self.lr * gv / na.sqrt()) as f32;
                }
                *g = 0.0;
            }
        }
        Ok(())
    }
}

/// Plain gradient descent.
#[derive(Debug, Clone)]
pub struct Sgd {
    lr: f64,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Sgd { lr }
    }
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        for (name, _, g) in params.iter_mut_with_grad() {
            check_finite(name, g.data())?;
        }
        for (_, value, grad) in params.iter_mut_with_grad() {
            for (w, g) in value.data_mut().iter_mut().zip(grad.data_mut()) {
                *w = (f64::from(*w) - self.lr * f64::from(*g)) as f32;
                *g = 0.0;
            }
        }
        Ok(())
    }
}
