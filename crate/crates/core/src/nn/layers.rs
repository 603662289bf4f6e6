//! Parameter registration and graph-side building blocks.

use super::{Graph, ParamStore, Result, SeededRng, Var};

/// Registers `{prefix}.w` (`4H x (input + H)`, Xavier) and `{prefix}.b` (zeros).
pub fn register_lstm(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden: usize, rng: &mut SeededRng) -> Result<()> {
    store.add_xavier(&format!("{prefix}.w"), 4 * hidden, input_dim + hidden, rng)?;
    store.add_zeros(&format!("{prefix}.b"), vec![4 * hidden])
}

pub fn register_bilstm(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden: usize, rng: &mut SeededRng) -> Result<()> {
    register_lstm(store, &format!("{prefix}.fw"), input_dim, hidden, rng)?;
    register_lstm(store, &format!("{prefix}.bw"), input_dim, hidden, rng)
}

/// Registers `{prefix}.w` (`out x in`, Xavier) and `{prefix}.b` (zeros).
pub fn register_linear(store: &mut ParamStore, prefix: &str, input_dim: usize, output_dim: usize, rng: &mut SeededRng) -> Result<()> {
    store.add_xavier(&format!("{prefix}.w"), output_dim, input_dim, rng)?;
    store.add_zeros(&format!("{prefix}.b"), vec![output_dim])
}

#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    w: Var,
    b: Var,
    hidden: usize,
}

impl LstmVars {
    pub fn bind(g: &mut Graph<'_>, prefix: &str) -> Result<Self> {
        let w = g.param(&format!("{prefix}.w"))?;
        let b = g.param(&format!("{prefix}.b"))?;
        let hidden = g.len_of(b) / 4;
        Ok(LstmVars { w, b, hidden })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn step(&self, g: &mut Graph<'_>, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hd = self.hidden;
        let xin = g.concat(&[x, h])?;
        let wx = g.matvec(self.w, xin)?;
        let z = g.add(wx, self.b)?;
        let zi = g.slice(z, 0, hd)?;
        let zf = g.slice(z, hd, hd)?;
        let zg = g.slice(z, 2 * hd, hd)?;
        let zo = g.slice(z, 3 * hd, hd)?;
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let cand = g.tanh(zg);
        let o = g.sigmoid(zo);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_new = g.add(keep, write)?;
        let tc = g.tanh(c_new);
        let h_new = g.mul(o, tc)?;
        Ok((h_new, c_new))
    }

    /// Runs from zero state; returns `(h, c)` per position in input order.
    pub fn run(&self, g: &mut Graph<'_>, xs: &[Var]) -> Result<Vec<(Var, Var)>> {
        let mut h = g.zeros(self.hidden);
        let mut c = g.zeros(self.hidden);
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            (h, c) = self.step(g, x, h, c)?;
            out.push((h, c));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BiLstmVars {
    pub forward: LstmVars,
    pub backward: LstmVars,
}

/// Outputs of a bidirectional run.
#[derive(Debug, Clone)]
pub struct BiLstmOutput {
    /// `[forward_t; backward_t]` per position.
    pub states: Vec<Var>,
    /// Final forward `(h, c)` (last position).
    pub forward_final: (Var, Var),
    /// Final backward `(h, c)` (first position).
    pub backward_final: (Var, Var),
}

impl BiLstmVars {
    pub fn bind(g: &mut Graph<'_>, prefix: &str) -> Result<Self> {
        Ok(BiLstmVars {
            forward: LstmVars::bind(g, &format!("{prefix}.fw"))?,
            backward: LstmVars::bind(g, &format!("{prefix}.bw"))?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.forward.hidden + self.backward.hidden
    }

    pub fn run(&self, g: &mut Graph<'_>, xs: &[Var]) -> Result<BiLstmOutput> {
        if xs.is_empty() {
            return super::dim_err("bilstm over empty sequence");
        }
        let fw = self.forward.run(g, xs)?;
        let rev: Vec<Var> = xs.iter().rev().copied().collect();
        let mut bw = self.backward.run(g, &rev)?;
        bw.reverse();
        let states = fw
            .iter()
            .zip(&bw)
            .map(|(f, b)| g.concat(&[f.0, b.0]))
            .collect::<Result<Vec<_>>>()?;
        Ok(BiLstmOutput {
            states,
            forward_final: *fw.last().expect("non-empty"),
            backward_final: bw[0],
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    w: Var,
    b: Var,
}

impl LinearVars {
    pub fn bind(g: &mut Graph<'_>, prefix: &str) -> Result<Self> {
        Ok(LinearVars {
            w: g.param(&format!("{prefix}.w"))?,
            b: g.param(&format!("{prefix}.b"))?,
        })
    }

    pub fn apply(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let wx = g.matvec(self.w, x)?;
        g.add(wx, self.b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{bilstm_run, lstm_step, LstmWeights, Tensor};

    #[test]
    fn graph_lstm_matches_tensor_kernel() {
        let mut rng = SeededRng::new(11);
        let mut s = ParamStore::new();
        register_bilstm(&mut s, "enc", 3, 4, &mut rng).unwrap();
        // non-zero biases so every term participates
        for name in ["enc.fw.b", "enc.bw.b"] {
            for v in s.get_mut(name).unwrap().data_mut() {
                *v = rng.uniform(-0.5, 0.5) as f32;
            }
        }
        let xs: Vec<Vec<f32>> = (0..5)
            .map(|_| (0..3).map(|_| rng.uniform(-1.0, 1.0) as f32).collect())
            .collect();
        let tensors: Vec<Tensor> = xs.iter().map(|x| Tensor::vector(x.clone()).unwrap()).collect();
        let expected = bilstm_run(
            &tensors,
            LstmWeights::from_store(&s, "enc.fw").unwrap(),
            LstmWeights::from_store(&s, "enc.bw").unwrap(),
        )
        .unwrap();

        let view = s.view();
        let mut g = Graph::new(&view);
        let bi = BiLstmVars::bind(&mut g, "enc").unwrap();
        let inputs: Vec<Var> = xs
            .iter()
            .map(|x| g.input(x.iter().map(|&v| f64::from(v)).collect()))
            .collect();
        let out = bi.run(&mut g, &inputs).unwrap();
        for (e, v) in expected.iter().zip(&out.states) {
            for (a, b) in e.data().iter().zip(g.value(*v)) {
                assert!((f64::from(*a) - b).abs() < 1e-6);
            }
        }

        let (h1, _) = lstm_step(
            &tensors[0],
            &Tensor::zeros(vec![4]).unwrap(),
            &Tensor::zeros(vec![4]).unwrap(),
            LstmWeights::from_store(&s, "enc.fw").unwrap(),
        )
        .unwrap();
        for (a, b) in h1.data().iter().zip(&g.value(out.states[0])[..4]) {
            assert!((f64::from(*a) - b).abs() < 1e-6);
        }
    }
}
