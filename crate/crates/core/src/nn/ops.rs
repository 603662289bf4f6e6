//! Forward-only kernels on [`Tensor`]s. Reductions accumulate in `f64`.

use super::{dim_err, ParamStore, Result, Tensor};

/// Numerically stable softmax (max-subtracted).
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    if x.is_empty() {
        return dim_err("softmax of empty vector");
    }
    let max = x.data().iter().fold(f64::NEG_INFINITY, |m, &v| m.max(f64::from(v)));
    let exps: Vec<f64> = x.data().iter().map(|&v| (f64::from(v) - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Tensor::new(x.shape().to_vec(), exps.iter().map(|e| (e / total) as f32).collect())
}

/// Weights of one LSTM direction: `w` is `4H x (in + H)` applied to `[x; h]`,
/// gate blocks ordered input, forget, cell, output.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a> {
    pub w: &'a Tensor,
    pub b: &'a Tensor,
}

impl<'a> LstmWeights<'a> {
    pub fn from_store(store: &'a ParamStore, prefix: &str) -> Result<Self> {
        Ok(LstmWeights {
            w: store.get(&format!("{prefix}.w"))?,
            b: store.get(&format!("{prefix}.b"))?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.b.len() / 4
    }

    pub fn input_dim(&self) -> usize {
        self.w.dims2().1 - self.hidden()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn lstm_step(x: &Tensor, h_prev: &Tensor, c_prev: &Tensor, weights: LstmWeights<'_>) -> Result<(Tensor, Tensor)> {
    let hidden = weights.hidden();
    let (rows, cols) = weights.w.dims2();
    if weights.b.len() != 4 * hidden || rows != 4 * hidden || weights.b.len() % 4 != 0 {
        return dim_err(format!("lstm weight shape {rows}x{cols} with bias {}", weights.b.len()));
    }
    if x.len() + hidden != cols || h_prev.len() != hidden || c_prev.len() != hidden {
        return dim_err(format!(
            "lstm step: x {} + h {} vs weight columns {cols} (hidden {hidden}), c {}",
            x.len(),
            h_prev.len(),
            c_prev.len()
        ));
    }
    let input: Vec<f64> = x.data().iter().chain(h_prev.data()).map(|&v| f64::from(v)).collect();
    let w = weights.w.data();
    let z: Vec<f64> = (0..rows)
        .map(|r| {
            let row = &w[r * cols..(r + 1) * cols];
            let dot: f64 = row.iter().zip(&input).map(|(&a, &b)| f64::from(a) * b).sum();
            dot + f64::from(weights.b.data()[r])
        })
        .collect();
    let mut h = Vec::with_capacity(hidden);
    let mut c = Vec::with_capacity(hidden);
    for k in 0..hidden {
        let i = sigmoid(z[k]);
        let f = sigmoid(z[hidden + k]);
        let g = z[2 * hidden + k].tanh();
        let o = sigmoid(z[3 * hidden + k]);
        let cell = f * f64::from(c_prev.data()[k]) + i * g;
        c.push(cell as f32);
        h.push((o * cell.tanh()) as f32);
    }
    Ok((Tensor::vector(h)?, Tensor::vector(c)?))
}

fn run_direction<'t, I>(xs: I, weights: LstmWeights<'_>) -> Result<Vec<Tensor>>
where
    I: Iterator<Item = &'t Tensor>,
{
    let hidden = weights.hidden();
    let mut h = Tensor::zeros(vec![hidden])?;
    let mut c = Tensor::zeros(vec![hidden])?;
    let mut out = Vec::new();
    for x in xs {
        let (nh, nc) = lstm_step(x, &h, &c, weights)?;
        out.push(nh.clone());
        h = nh;
        c = nc;
    }
    Ok(out)
}

/// Bidirectional run; position `t` yields `[forward_t; backward_t]`.
pub fn bilstm_run(xs: &[Tensor], forward: LstmWeights<'_>, backward: LstmWeights<'_>) -> Result<Vec<Tensor>> {
    if xs.is_empty() {
        return dim_err("bilstm over empty sequence");
    }
    let dim = xs[0].len();
    if xs.iter().any(|x| x.len() != dim) {
        return dim_err("bilstm inputs have non-uniform dimension");
    }
    let fw = run_direction(xs.iter(), forward)?;
    let mut bw = run_direction(xs.iter().rev(), backward)?;
    bw.reverse();
    fw.into_iter()
        .zip(bw)
        .map(|(f, b)| {
            let mut v = f.into_data();
            v.extend_from_slice(b.data());
            Tensor::vector(v)
        })
        .collect()
}

/// Elementwise arithmetic mean.
pub fn avg_pool(xs: &[Tensor]) -> Result<Tensor> {
    let Some(first) = xs.first() else {
        return dim_err("average pool over empty sequence");
    };
    let dim = first.len();
    let mut acc = vec![0.0f64; dim];
    for x in xs {
        if x.len() != dim {
            return dim_err("average pool inputs have non-uniform dimension");
        }
        for (a, &v) in acc.iter_mut().zip(x.data()) {
            *a += f64::from(v);
        }
    }
    let n = xs.len() as f64;
    Tensor::new(first.shape().to_vec(), acc.into_iter().map(|a| (a / n) as f32).collect())
}
