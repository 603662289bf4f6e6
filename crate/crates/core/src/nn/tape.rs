//! Reverse-mode automatic differentiation over a linear tape of vector and
//! matrix operations. Values are `f64`; parameters are read from a
//! [`ParamView`] without copying.

use super::{dim_err, Gradients, ParamView, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Value {
    Owned(Vec<f64>),
    Param(usize),
}

#[derive(Debug)]
enum Op {
    Input,
    Param,
    EmbedRow(Var, usize),
    MatVec(Var, Var),
    LinearRows(Var, Var),
    VecMat(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRowBroadcast(Var, Var),
    Outer(Var, Var),
    ScaleBy(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Elu(Var),
    LogSigmoid(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Stack(Vec<Var>),
    Pick(Var, usize),
    ScatterAdd(Var, Vec<usize>),
    Sum(Var),
    Dot(Var, Var),
    Min(Var, Var),
    MaxOver(Vec<Var>, Vec<usize>),
    MeanOver(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Value,
    rows: usize,
    cols: usize,
    op: Op,
}

/// Computation graph for one forward/backward evaluation.
pub struct Graph<'v> {
    view: &'v ParamView,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    // log σ(x) = -softplus(-x)
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

impl<'v> Graph<'v> {
    pub fn new(view: &'v ParamView) -> Self {
        Graph {
            view,
            nodes: Vec::new(),
            param_vars: vec![None; view.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, rows: usize, cols: usize, op: Op) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            value: Value::Owned(value),
            rows,
            cols,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match &self.nodes[v.0].value {
            Value::Owned(x) => x,
            Value::Param(idx) => self.view.value(*idx),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn len_of(&self, v: Var) -> usize {
        let n = &self.nodes[v.0];
        n.rows * n.cols
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    /// Constant vector input (no gradient flows out of the graph from it).
    pub fn input(&mut self, data: Vec<f64>) -> Var {
        let n = data.len();
        self.push(data, n, 1, Op::Input)
    }

    pub fn input_matrix(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if rows * cols != data.len() {
            return dim_err(format!("input matrix {rows}x{cols} from {} values", data.len()));
        }
        Ok(self.push(data, rows, cols, Op::Input))
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.input(vec![0.0; n])
    }

    /// Trainable parameter; repeated calls return the same node.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        let idx = self.view.lookup(name)?;
        if let Some(v) = self.param_vars[idx] {
            return Ok(v);
        }
        let (rows, cols) = self.view.dims(idx);
        self.nodes.push(Node {
            value: Value::Param(idx),
            rows,
            cols,
            op: Op::Param,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[idx] = Some(v);
        Ok(v)
    }

    pub fn embed_row(&mut self, table: Var, row: usize) -> Result<Var> {
        let (rows, cols) = self.dims(table);
        if row >= rows {
            return dim_err(format!("embedding row {row} out of {rows}"));
        }
        let val = self.value(table)[row * cols..(row + 1) * cols].to_vec();
        Ok(self.push(val, cols, 1, Op::EmbedRow(table, row)))
    }

    /// `W x` for `W: r x c`, `x` of length `c`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (r, c) = self.dims(w);
        if self.len_of(x) != c {
            return dim_err(format!("matvec {r}x{c} with vector of {}", self.len_of(x)));
        }
        let wv = self.value(w);
        let xv = self.value(x);
        let out = (0..r)
            .map(|i| wv[i * c..(i + 1) * c].iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect();
        Ok(self.push(out, r, 1, Op::MatVec(w, x)))
    }

    /// `X W^T` for `X: n x k`, `W: m x k`.
    pub fn linear_rows(&mut self, x: Var, w: Var) -> Result<Var> {
        let (n, k) = self.dims(x);
        let (m, k2) = self.dims(w);
        if k != k2 {
            return dim_err(format!("linear_rows {n}x{k} by ({m}x{k2})^T"));
        }
        let xv = self.value(x);
        let wv = self.value(w);
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            let xr = &xv[i * k..(i + 1) * k];
            for j in 0..m {
                out.push(xr.iter().zip(&wv[j * k..(j + 1) * k]).map(|(a, b)| a * b).sum());
            }
        }
        Ok(self.push(out, n, m, Op::LinearRows(x, w)))
    }

    /// `a^T M` for `a` of length `n`, `M: n x d`.
    pub fn vecmat(&mut self, a: Var, m: Var) -> Result<Var> {
        let (n, d) = self.dims(m);
        if self.len_of(a) != n {
            return dim_err(format!("vecmat {} by {n}x{d}", self.len_of(a)));
        }
        let av = self.value(a);
        let mv = self.value(m);
        let mut out = vec![0.0; d];
        for i in 0..n {
            for (o, x) in out.iter_mut().zip(&mv[i * d..(i + 1) * d]) {
                *o += av[i] * x;
            }
        }
        Ok(self.push(out, d, 1, Op::VecMat(a, m)))
    }

    fn same_len(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.len_of(a) != self.len_of(b) {
            return dim_err(format!("{what}: lengths {} and {}", self.len_of(a), self.len_of(b)));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op, what: &str) -> Result<Var> {
        self.same_len(a, b, what)?;
        let (r, c) = self.dims(a);
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| f(*x, *y)).collect();
        Ok(self.push(out, r, c, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }

    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, f64::min, Op::Min(a, b), "min")
    }

    /// Adds vector `v` (length `k`) to every row of `m: n x k`.
    pub fn add_row_broadcast(&mut self, m: Var, v: Var) -> Result<Var> {
        let (n, k) = self.dims(m);
        if self.len_of(v) != k {
            return dim_err(format!("row broadcast of {} onto {n}x{k}", self.len_of(v)));
        }
        let mv = self.value(m);
        let vv = self.value(v);
        let out = (0..n * k).map(|i| mv[i] + vv[i % k]).collect();
        Ok(self.push(out, n, k, Op::AddRowBroadcast(m, v)))
    }

    /// `a b^T` as an `n x m` matrix.
    pub fn outer(&mut self, a: Var, b: Var) -> Var {
        let n = self.len_of(a);
        let m = self.len_of(b);
        let av = self.value(a);
        let bv = self.value(b);
        let out = av.iter().flat_map(|x| bv.iter().map(move |y| x * y)).collect();
        self.push(out, n, m, Op::Outer(a, b))
    }

    /// Scalar node `s` times vector `x`.
    pub fn scale_by(&mut self, s: Var, x: Var) -> Result<Var> {
        if self.len_of(s) != 1 {
            return dim_err("scale_by needs a scalar");
        }
        let k = self.scalar(s);
        let (r, c) = self.dims(x);
        let out = self.value(x).iter().map(|v| k * v).collect();
        Ok(self.push(out, r, c, Op::ScaleBy(s, x)))
    }

    /// `k x + b` for constants `k`, `b`.
    pub fn affine(&mut self, x: Var, k: f64, b: f64) -> Var {
        let (r, c) = self.dims(x);
        let out = self.value(x).iter().map(|v| k * v + b).collect();
        self.push(out, r, c, Op::Affine(x, k))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.dims(x);
        let out = self.value(x).iter().map(|&v| f(v)).collect();
        self.push(out, r, c, op)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Log(x))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        self.unary(x, |v| if v > 0.0 { v } else { v.exp_m1() }, Op::Elu(x))
    }

    pub fn log_sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, log_sigmoid, Op::LogSigmoid(x))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let n = self.len_of(x);
        if n == 0 {
            return dim_err("softmax of empty vector");
        }
        let xv = self.value(x);
        let max = xv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = xv.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let out = exps.into_iter().map(|e| e / total).collect();
        Ok(self.push(out, n, 1, Op::Softmax(x)))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return dim_err("concat of nothing");
        }
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        let n = out.len();
        Ok(self.push(out, n, 1, Op::Concat(parts.to_vec())))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        if start + len > self.len_of(x) || len == 0 {
            return dim_err(format!("slice [{start}, {}) of {}", start + len, self.len_of(x)));
        }
        let out = self.value(x)[start..start + len].to_vec();
        Ok(self.push(out, len, 1, Op::Slice(x, start)))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let Some(&first) = rows.first() else {
            return dim_err("stack of nothing");
        };
        let d = self.len_of(first);
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            if self.len_of(r) != d {
                return dim_err("stack rows differ in length");
            }
            out.extend_from_slice(self.value(r));
        }
        Ok(self.push(out, rows.len(), d, Op::Stack(rows.to_vec())))
    }

    pub fn pick(&mut self, x: Var, idx: usize) -> Result<Var> {
        if idx >= self.len_of(x) {
            return dim_err(format!("pick {idx} of {}", self.len_of(x)));
        }
        let v = self.value(x)[idx];
        Ok(self.push(vec![v], 1, 1, Op::Pick(x, idx)))
    }

    /// `out[ids[i]] += a[i]` into a zero vector of length `size`.
    pub fn scatter_add(&mut self, a: Var, ids: &[usize], size: usize) -> Result<Var> {
        if ids.len() != self.len_of(a) {
            return dim_err("scatter_add ids/values length mismatch");
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= size) {
            return dim_err(format!("scatter_add id {bad} out of {size}"));
        }
        let mut out = vec![0.0; size];
        for (&i, v) in ids.iter().zip(self.value(a)) {
            out[i] += v;
        }
        Ok(self.push(out, size, 1, Op::ScatterAdd(a, ids.to_vec())))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(vec![s], 1, 1, Op::Sum(x))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len(a, b, "dot")?;
        let s = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).sum();
        Ok(self.push(vec![s], 1, 1, Op::Dot(a, b)))
    }

    /// Elementwise maximum over equal-length vectors.
    pub fn max_over(&mut self, xs: &[Var]) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return dim_err("max over nothing");
        };
        let d = self.len_of(first);
        let mut out = self.value(first).to_vec();
        let mut arg = vec![0usize; d];
        for (k, &x) in xs.iter().enumerate().skip(1) {
            if self.len_of(x) != d {
                return dim_err("max_over inputs differ in length");
            }
            for (j, &v) in self.value(x).iter().enumerate() {
                if v > out[j] {
                    out[j] = v;
                    arg[j] = k;
                }
            }
        }
        Ok(self.push(out, d, 1, Op::MaxOver(xs.to_vec(), arg)))
    }

    /// Elementwise mean over equal-length vectors.
    pub fn mean_over(&mut self, xs: &[Var]) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return dim_err("mean over nothing");
        };
        let d = self.len_of(first);
        let mut out = vec![0.0; d];
        for &x in xs {
            if self.len_of(x) != d {
                return dim_err("mean_over inputs differ in length");
            }
            for (o, v) in out.iter_mut().zip(self.value(x)) {
                *o += v;
            }
        }
        let n = xs.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        Ok(self.push(out, d, 1, Op::MeanOver(xs.to_vec())))
    }

    /// Mean of scalar nodes.
    pub fn mean_scalars(&mut self, xs: &[Var]) -> Result<Var> {
        let m = self.mean_over(xs)?;
        if self.len_of(m) != 1 {
            return dim_err("mean_scalars over non-scalars");
        }
        Ok(m)
    }

    /// Reverse sweep from scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Backward> {
        if self.len_of(loss) != 1 {
            return dim_err("backward from non-scalar");
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Backward { grads })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = self.value(Var(i));
        match &node.op {
            Op::Input | Op::Param => {}
            Op::EmbedRow(t, row) => {
                let cols = self.nodes[t.0].cols;
                let dt = slot(grads, &self.nodes, *t);
                for (d, gv) in dt[row * cols..(row + 1) * cols].iter_mut().zip(g) {
                    *d += gv;
                }
            }
            Op::MatVec(w, x) => {
                let (r, c) = self.dims(*w);
                let wv = self.value(*w);
                let xv = self.value(*x);
                {
                    let dw = slot(grads, &self.nodes, *w);
                    for ri in 0..r {
                        let gr = g[ri];
                        if gr != 0.0 {
                            for (d, xj) in dw[ri * c..(ri + 1) * c].iter_mut().zip(xv) {
                                *d += gr * xj;
                            }
                        }
                    }
                }
                let dx = slot(grads, &self.nodes, *x);
                for ri in 0..r {
                    let gr = g[ri];
                    if gr != 0.0 {
                        for (d, wj) in dx.iter_mut().zip(&wv[ri * c..(ri + 1) * c]) {
                            *d += gr * wj;
                        }
                    }
                }
            }
            Op::LinearRows(x, w) => {
                let (n, k) = self.dims(*x);
                let (m, _) = self.dims(*w);
                let xv = self.value(*x);
                let wv = self.value(*w);
                {
                    let dx = slot(grads, &self.nodes, *x);
                    for a in 0..n {
                        for j in 0..m {
                            let gv = g[a * m + j];
                            for (d, wj) in dx[a * k..(a + 1) * k].iter_mut().zip(&wv[j * k..(j + 1) * k]) {
                                *d += gv * wj;
                            }
                        }
                    }
                }
                let dw = slot(grads, &self.nodes, *w);
                for a in 0..n {
                    for j in 0..m {
                        let gv = g[a * m + j];
                        for (d, xj) in dw[j * k..(j + 1) * k].iter_mut().zip(&xv[a * k..(a + 1) * k]) {
                            *d += gv * xj;
                        }
                    }
                }
            }
            Op::VecMat(a, m) => {
                let (n, d) = self.dims(*m);
                let av = self.value(*a);
                let mv = self.value(*m);
                {
                    let da = slot(grads, &self.nodes, *a);
                    for r in 0..n {
                        da[r] += mv[r * d..(r + 1) * d].iter().zip(g).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
                let dm = slot(grads, &self.nodes, *m);
                for r in 0..n {
                    for (dd, gv) in dm[r * d..(r + 1) * d].iter_mut().zip(g) {
                        *dd += av[r] * gv;
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(slot(grads, &self.nodes, *a), g);
                add_into(slot(grads, &self.nodes, *b), g);
            }
            Op::Sub(a, b) => {
                add_into(slot(grads, &self.nodes, *a), g);
                for (d, gv) in slot(grads, &self.nodes, *b).iter_mut().zip(g) {
                    *d -= gv;
                }
            }
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                for ((d, gv), y) in slot(grads, &self.nodes, *a).iter_mut().zip(g).zip(bv) {
                    *d += gv * y;
                }
                for ((d, gv), x) in slot(grads, &self.nodes, *b).iter_mut().zip(g).zip(av) {
                    *d += gv * x;
                }
            }
            Op::Min(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                {
                    let da = slot(grads, &self.nodes, *a);
                    for j in 0..g.len() {
                        if av[j] <= bv[j] {
                            da[j] += g[j];
                        }
                    }
                }
                let db = slot(grads, &self.nodes, *b);
                for j in 0..g.len() {
                    if av[j] > bv[j] {
                        db[j] += g[j];
                    }
                }
            }
            Op::AddRowBroadcast(m, v) => {
                let k = self.len_of(*v);
                add_into(slot(grads, &self.nodes, *m), g);
                let dv = slot(grads, &self.nodes, *v);
                for (j, gv) in g.iter().enumerate() {
                    dv[j % k] += gv;
                }
            }
            Op::Outer(a, b) => {
                let m = self.len_of(*b);
                let av = self.value(*a);
                let bv = self.value(*b);
                {
                    let da = slot(grads, &self.nodes, *a);
                    for (r, d) in da.iter_mut().enumerate() {
                        *d += g[r * m..(r + 1) * m].iter().zip(bv).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
                let db = slot(grads, &self.nodes, *b);
                for (r, ar) in av.iter().enumerate() {
                    for (d, gv) in db.iter_mut().zip(&g[r * m..(r + 1) * m]) {
                        *d += ar * gv;
                    }
                }
            }
            Op::ScaleBy(s, x) => {
                let k = self.scalar(*s);
                let xv = self.value(*x);
                slot(grads, &self.nodes, *s)[0] += g.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
                for (d, gv) in slot(grads, &self.nodes, *x).iter_mut().zip(g) {
                    *d += k * gv;
                }
            }
            Op::Affine(x, k) => {
                for (d, gv) in slot(grads, &self.nodes, *x).iter_mut().zip(g) {
                    *d += k * gv;
                }
            }
            Op::Sigmoid(x) => {
                for ((d, gv), y) in slot(grads, &self.nodes, *x).iter_mut().zip(g).zip(out) {
                    *d += gv * y * (1.0 - y);
                }
            }
            Op::Tanh(x) => {
                for ((d, gv), y) in slot(grads, &self.nodes, *x).iter_mut().zip(g).zip(out) {
                    *d += gv * (1.0 - y * y);
                }
            }
            Op::Exp(x) => {
                for ((d, gv), y) in slot(grads, &self.nodes, *x).iter_mut().zip(g).zip(out) {
                    *d += gv * y;
                }
            }
            Op::Log(x) => {
                let xv = self.value(*x);
                for ((d, gv), xi) in slot(grads, &self.nodes, *x).iter_mut().zip(g).zip(xv) {
                    *d += gv / xi;
                }
            }
            Op::Elu(x) => {
                let xv = self.value(*x);
                for (((d, gv), xi), y) in slot(grads, &self.nodes, *x).iter_mut().zip(g).zip(xv).zip(out) {
                    *d += if *xi > 0.0 { *gv } else { gv * (y + 1.0) };
                }
            }
            Op::LogSigmoid(x) => {
                let xv = self.value(*x);
                for ((d, gv), xi) in slot(grads, &self.nodes, *x).iter_mut().zip(g).zip(xv) {
                    *d += gv * sigmoid(-xi);
                }
            }
            Op::Softmax(x) => {
                let dotp: f64 = g.iter().zip(out).map(|(a, b)| a * b).sum();
                for ((d, gv), y) in slot(grads, &self.nodes, *x).iter_mut().zip(g).zip(out) {
                    *d += y * (gv - dotp);
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.len_of(p);
                    add_into(slot(grads, &self.nodes, p), &g[off..off + n]);
                    off += n;
                }
            }
            Op::Slice(x, start) => {
                let dx = slot(grads, &self.nodes, *x);
                add_into(&mut dx[*start..*start + g.len()], g);
            }
            Op::Stack(rows) => {
                let d = node.cols;
                for (r, &v) in rows.iter().enumerate() {
                    add_into(slot(grads, &self.nodes, v), &g[r * d..(r + 1) * d]);
                }
            }
            Op::Pick(x, idx) => {
                slot(grads, &self.nodes, *x)[*idx] += g[0];
            }
            Op::ScatterAdd(a, ids) => {
                let da = slot(grads, &self.nodes, *a);
                for (d, &id) in da.iter_mut().zip(ids) {
                    *d += g[id];
                }
            }
            Op::Sum(x) => {
                for d in slot(grads, &self.nodes, *x).iter_mut() {
                    *d += g[0];
                }
            }
            Op::Dot(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                for (d, y) in slot(grads, &self.nodes, *a).iter_mut().zip(bv) {
                    *d += g[0] * y;
                }
                for (d, x) in slot(grads, &self.nodes, *b).iter_mut().zip(av) {
                    *d += g[0] * x;
                }
            }
            Op::MaxOver(xs, arg) => {
                for (j, &k) in arg.iter().enumerate() {
                    slot(grads, &self.nodes, xs[k])[j] += g[j];
                }
            }
            Op::MeanOver(xs) => {
                let n = xs.len() as f64;
                for &x in xs {
                    for (d, gv) in slot(grads, &self.nodes, x).iter_mut().zip(g) {
                        *d += gv / n;
                    }
                }
            }
        }
    }
}

fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'a mut Vec<f64> {
    let n = nodes[v.0].rows * nodes[v.0].cols;
    grads[v.0].get_or_insert_with(|| vec![0.0; n])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Result of a reverse sweep.
pub struct Backward {
    grads: Vec<Option<Vec<f64>>>,
}

impl Backward {
    /// Gradient of the loss with respect to any node (None if unreached).
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradients of every parameter touched by the graph.
    pub fn param_grads(&self, graph: &Graph<'_>) -> Gradients {
        let mut out = Gradients::new();
        for (idx, var) in graph.param_vars.iter().enumerate() {
            if let Some(v) = var {
                if let Some(g) = self.grad(*v) {
                    out.insert(graph.view.name(idx), g.to_vec());
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ParamStore, Tensor};

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::matrix(2, 3, vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]).unwrap())
            .unwrap();
        s.insert("v", Tensor::vector(vec![0.7, -0.1, 0.2]).unwrap()).unwrap();
        s
    }

    /// Central differences on an input vector for a scalar function built on the graph.
    fn numeric_input_grad(build: &dyn Fn(&mut Graph<'_>, Var) -> Var, x0: &[f64]) -> Vec<f64> {
        let s = store();
        let view = s.view();
        let h = 1e-6;
        (0..x0.len())
            .map(|i| {
                let eval = |delta: f64| {
                    let mut x = x0.to_vec();
                    x[i] += delta;
                    let mut g = Graph::new(&view);
                    let xv = g.input(x);
                    let out = build(&mut g, xv);
                    g.scalar(out)
                };
                (eval(h) - eval(-h)) / (2.0 * h)
            })
            .collect()
    }

    fn check_input_grad(build: &dyn Fn(&mut Graph<'_>, Var) -> Var, x0: &[f64]) {
        let s = store();
        let view = s.view();
        let mut g = Graph::new(&view);
        let x = g.input(x0.to_vec());
        let out = build(&mut g, x);
        let back = g.backward(out).unwrap();
        let analytic = back.grad(x).unwrap().to_vec();
        let numeric = numeric_input_grad(build, x0);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-6 * (1.0 + n.abs()), "analytic {analytic:?} vs numeric {numeric:?}");
        }
    }

    #[test]
    fn elementwise_and_reduction_grads() {
        let x0 = [0.3, -0.8, 1.1];
        check_input_grad(
            &|g, x| {
                let s = g.sigmoid(x);
                let t = g.tanh(s);
                let e = g.elu(x);
                let m = g.mul(t, e).unwrap();
                let ls = g.log_sigmoid(m);
                g.sum(ls)
            },
            &x0,
        );
        check_input_grad(
            &|g, x| {
                let sm = g.softmax(x).unwrap();
                let p = g.pick(sm, 1).unwrap();
                g.ln(p)
            },
            &x0,
        );
        check_input_grad(
            &|g, x| {
                let w = g.param("w").unwrap();
                let y = g.matvec(w, x).unwrap();
                let c = g.concat(&[y, x]).unwrap();
                let s = g.slice(c, 1, 3).unwrap();
                let ex = g.exp(s);
                let a = g.affine(ex, -0.5, 2.0);
                let mn = g.min(a, s).unwrap();
                g.dot(mn, x).unwrap()
            },
            &x0,
        );
    }

    #[test]
    fn matrix_op_grads() {
        let x0 = [0.3, -0.8, 1.1, 0.2, 0.5, -0.4];
        check_input_grad(
            &|g, x| {
                let a = g.slice(x, 0, 3).unwrap();
                let b = g.slice(x, 3, 3).unwrap();
                let m = g.stack(&[a, b]).unwrap();
                let w = g.param("w").unwrap();
                let lr = g.linear_rows(m, w).unwrap();
                let v2 = g.slice(x, 1, 2).unwrap();
                let bc = g.add_row_broadcast(lr, v2).unwrap();
                let t = g.tanh(bc);
                let att = g.slice(x, 2, 2).unwrap();
                let sm = g.softmax(att).unwrap();
                let ctx = g.vecmat(sm, t).unwrap();
                let o = g.outer(sm, ctx);
                let s = g.sum(o);
                let sc = g.scale_by(s, ctx).unwrap();
                let mx = g.max_over(&[sc, ctx]).unwrap();
                let mean = g.mean_over(&[mx, ctx]).unwrap();
                let sa = g.scatter_add(mean, &[2, 0], 4).unwrap();
                let sq = g.mul(sa, sa).unwrap();
                g.sum(sq)
            },
            &x0,
        );
    }

    #[test]
    fn param_grads_and_embedding() {
        let s = store();
        let view = s.view();
        let mut g = Graph::new(&view);
        let w = g.param("w").unwrap();
        assert_eq!(g.param("w").unwrap(), w);
        let row = g.embed_row(w, 1).unwrap();
        let v = g.param("v").unwrap();
        let d = g.dot(row, v).unwrap();
        let back = g.backward(d).unwrap();
        let grads = back.param_grads(&g);
        assert_eq!(grads.get("w").unwrap(), &[0.0, 0.0, 0.0, 0.7f32 as f64, -0.1f32 as f64, 0.2f32 as f64]);
        assert_eq!(grads.get("v").unwrap(), &[0.4f32 as f64, 0.5f32 as f64, -0.6f32 as f64]);
    }

    #[test]
    fn shape_errors() {
        let s = store();
        let view = s.view();
        let mut g = Graph::new(&view);
        let w = g.param("w").unwrap();
        let x = g.input(vec![1.0, 2.0]);
        assert!(g.matvec(w, x).is_err());
        assert!(g.param("nope").is_err());
        assert!(g.backward(x).is_err());
    }
}
