//! Reverse-mode differentiation over an explicitly recorded operation list.
//!
//! Every value is a row-major matrix. Operations append a node that keeps
//! whatever forward context its backward rule needs; [`Tape::backward`]
//! walks the nodes in reverse and accumulates input gradients. Leaves may
//! borrow their data (model parameters are never copied onto the tape).
//! Dropping the tape frees all recorded context.

use std::borrow::Cow;

use rand::Rng;

use super::linalg::{matmul, matmul_nt, matmul_tn};
use super::Tensor;
use crate::error::{Error, Result};

/// Target value excluded from [`Tape::cross_entropy`].
pub const IGNORE_INDEX: usize = usize::MAX;

/// Additive score bias for masked attention keys.
pub const MASK_BIAS: f64 = -1e9;

pub const LAYER_NORM_EPS: f64 = 1e-12;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    AddConst(Var),
    Scale(Var, f64),
    Sum(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gelu(Var),
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
        count: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    GatherRows {
        x: Var,
        rows: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node<'a> {
    rows: usize,
    cols: usize,
    value: Cow<'a, [f64]>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    grads: Vec<Option<Vec<f64>>>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Cow<'a, [f64]>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(rows, cols, Cow::Owned(value), op, rg)
    }

    /// Borrowed leaf; gradients are tracked when `tensor.requires_grad`.
    pub fn leaf(&mut self, tensor: &'a Tensor) -> Var {
        self.push(
            tensor.rows(),
            tensor.cols(),
            Cow::Borrowed(&tensor.data),
            Op::Leaf,
            tensor.requires_grad,
        )
    }

    /// Borrowed leaf with explicit gradient tracking.
    pub fn param(&mut self, tensor: &'a Tensor, requires_grad: bool) -> Var {
        self.push(
            tensor.rows(),
            tensor.cols(),
            Cow::Borrowed(&tensor.data),
            Op::Leaf,
            requires_grad,
        )
    }

    /// Owned constant (no gradient).
    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if rows * cols != data.len() {
            return Err(Error::shape("constant", format!("{rows}x{cols} vs {} values", data.len())));
        }
        Ok(self.push(rows, cols, Cow::Owned(data), Op::Leaf, false))
    }

    /// Owned leaf that tracks gradients.
    pub fn variable(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if rows * cols != data.len() {
            return Err(Error::shape("variable", format!("{rows}x{cols} vs {} values", data.len())));
        }
        Ok(self.push(rows, cols, Cow::Owned(data), Op::Leaf, true))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::matrix(n.rows, n.cols, n.value.to_vec()).expect("node shape is consistent")
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    // ---- operations -------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::shape("matmul", format!("{m}x{k} · {k2}x{n}")));
        }
        let out = matmul(self.value(a), self.value(b), m, k, n);
        Ok(self.derived(m, n, out, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        if k != k2 {
            return Err(Error::shape("matmul_nt", format!("{m}x{k} · ({n}x{k2})ᵀ")));
        }
        let out = matmul_nt(self.value(a), self.value(b), m, k, n);
        Ok(self.derived(m, n, out, Op::MatMulNt(a, b), &[a, b]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        Ok(self.derived(r, c, out, Op::Add(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("mul", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        Ok(self.derived(r, c, out, Op::Mul(a, b), &[a, b]))
    }

    /// `a (n×m) + bias (1×m)` broadcast over rows.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if self.shape(bias) != (1, c) {
            return Err(Error::shape("add_row", format!("{r}x{c} + {:?}", self.shape(bias))));
        }
        let b = self.value(bias);
        let out = self
            .value(a)
            .chunks(c)
            .flat_map(|row| row.iter().zip(b).map(|(x, y)| x + y))
            .collect();
        Ok(self.derived(r, c, out, Op::AddRow(a, bias), &[a, bias]))
    }

    /// Adds a constant of the same shape; the gradient passes through.
    pub fn add_const(&mut self, a: Var, constant: &[f64]) -> Result<Var> {
        let (r, c) = self.shape(a);
        if constant.len() != r * c {
            return Err(Error::shape("add_const", format!("{r}x{c} + {} values", constant.len())));
        }
        let out = self.value(a).iter().zip(constant).map(|(x, y)| x + y).collect();
        Ok(self.derived(r, c, out, Op::AddConst(a), &[a]))
    }

    /// Adds a constant row to every row; the gradient passes through.
    pub fn add_const_row(&mut self, a: Var, row: &[f64]) -> Result<Var> {
        let (r, c) = self.shape(a);
        if row.len() != c {
            return Err(Error::shape("add_const_row", format!("{r}x{c} + row of {}", row.len())));
        }
        let out = self
            .value(a)
            .chunks(c)
            .flat_map(|x| x.iter().zip(row).map(|(p, q)| p + q))
            .collect();
        Ok(self.derived(r, c, out, Op::AddConst(a), &[a]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x * s).collect();
        self.derived(r, c, out, Op::Scale(a, s), &[a])
    }

    /// Sum of all elements, as a 1×1 value.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.derived(1, 1, vec![s], Op::Sum(a), &[a])
    }

    /// Softmax over the last axis.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut out = self.value(a).to_vec();
        if c > 0 {
            for row in out.chunks_mut(c) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    total += *x;
                }
                for x in row.iter_mut() {
                    *x /= total;
                }
            }
        }
        self.derived(r, c, out, Op::SoftmaxRows(a), &[a])
    }

    /// Row-wise normalization to zero mean and unit variance followed by
    /// `gain ⊙ x̂ + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        if self.shape(gain) != (1, c) || self.shape(bias) != (1, c) {
            return Err(Error::shape("layer_norm", format!("input {r}x{c}, gain/bias must be 1x{c}")));
        }
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        let xs = self.value(x);
        for i in 0..r {
            let row = &xs[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[i] = is;
            for (h, v) in xhat[i * c..(i + 1) * c].iter_mut().zip(row) {
                *h = (v - mean) * is;
            }
        }
        let (g, b) = (self.value(gain), self.value(bias));
        let out = xhat
            .chunks(c)
            .flat_map(|row| row.iter().zip(g).zip(b).map(|((h, g), b)| h * g + b))
            .collect();
        Ok(self.derived(
            r,
            c,
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            &[x, gain, bias],
        ))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self
            .value(a)
            .iter()
            .map(|&x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()))
            .collect();
        self.derived(r, c, out, Op::Gelu(a), &[a])
    }

    /// Rows of `table` selected by `ids`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (n, d) = self.shape(table);
        if let Some(&bad) = ids.iter().find(|&&i| i >= n) {
            return Err(Error::IdOutOfRange { id: bad, size: n });
        }
        let t = self.value(table);
        let out = ids.iter().flat_map(|&i| t[i * d..(i + 1) * d].iter().copied()).collect();
        Ok(self.derived(
            ids.len(),
            d,
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    /// Inverted dropout. Identity (no node) when `rng` is `None` or the
    /// rate is zero.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: Option<&mut R>) -> Var {
        let Some(rng) = rng else { return x };
        if rate <= 0.0 {
            return x;
        }
        let (r, c) = self.shape(x);
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..r * c)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let out = self.value(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.derived(r, c, out, Op::Dropout { x, mask }, &[x])
    }

    /// Mean negative log-likelihood over targets that are not
    /// [`IGNORE_INDEX`].
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(logits);
        if targets.len() != r {
            return Err(Error::shape("cross_entropy", format!("{r} rows vs {} targets", targets.len())));
        }
        if let Some(&t) = targets.iter().find(|&&t| t != IGNORE_INDEX && t >= c) {
            return Err(Error::LabelOutOfRange { label: t, classes: c });
        }
        let count = targets.iter().filter(|&&t| t != IGNORE_INDEX).count();
        if count == 0 {
            return Err(Error::EmptyReduction);
        }
        let xs = self.value(logits);
        let mut probs = vec![0.0; r * c];
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t == IGNORE_INDEX {
                continue;
            }
            let row = &xs[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let log_z = max + total.ln();
            for (p, x) in probs[i * c..(i + 1) * c].iter_mut().zip(row) {
                *p = (x - log_z).exp();
            }
            loss += log_z - row[t];
        }
        let mean = loss / count as f64;
        Ok(self.derived(
            1,
            1,
            vec![mean],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                count,
            },
            &[logits],
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if start + width > c {
            return Err(Error::shape("slice_cols", format!("{start}+{width} > {c}")));
        }
        let out = self
            .value(x)
            .chunks(c)
            .flat_map(|row| row[start..start + width].iter().copied())
            .collect();
        Ok(self.derived(r, width, out, Op::SliceCols { x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat_cols", "no inputs"));
        };
        let r = self.shape(first).0;
        if let Some(bad) = parts.iter().find(|p| self.shape(**p).0 != r) {
            return Err(Error::shape("concat_cols", format!("{r} rows vs {:?}", self.shape(*bad))));
        }
        let total: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for p in parts {
                let c = self.shape(*p).1;
                out.extend_from_slice(&self.value(*p)[i * c..(i + 1) * c]);
            }
        }
        Ok(self.derived(r, total, out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(x);
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::shape("gather_rows", format!("row {bad} of {r}")));
        }
        let xs = self.value(x);
        let out = rows.iter().flat_map(|&i| xs[i * c..(i + 1) * c].iter().copied()).collect();
        Ok(self.derived(
            rows.len(),
            c,
            out,
            Op::GatherRows {
                x,
                rows: rows.to_vec(),
            },
            &[x],
        ))
    }

    // ---- backward ---------------------------------------------------------

    /// Backpropagates from a scalar output.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        self.backward_with_seed(output, 1.0)
    }

    /// Backpropagates `seed · ∂output/∂·` from a scalar output.
    pub fn backward_with_seed(&mut self, output: Var, seed: f64) -> Result<()> {
        if self.shape(output) != (1, 1) {
            return Err(Error::shape("backward", format!("output is {:?}, not scalar", self.shape(output))));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[output.0] = Some(vec![seed]);
        for i in (0..=output.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => g.iter_mut().zip(delta).for_each(|(a, b)| *a += b),
            slot => *slot = Some(delta),
        }
    }

    fn accumulate_with(&mut self, v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let len = self.nodes[v.0].value.len();
        let slot = self.grads[v.0].get_or_insert_with(|| vec![0.0; len]);
        f(slot);
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let (rows, cols) = (self.nodes[i].rows, self.nodes[i].cols);
        // Split the borrow: the op is read while gradients are written.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = self.shape(a);
                let n = cols;
                if self.needs(a) {
                    let da = matmul_nt(g, self.value(b), m, n, k);
                    self.accumulate(a, da);
                }
                if self.needs(b) {
                    let db = matmul_tn(self.value(a), g, m, k, n);
                    self.accumulate(b, db);
                }
            }
            &Op::MatMulNt(a, b) => {
                let (m, k) = self.shape(a);
                let n = cols;
                if self.needs(a) {
                    let da = matmul(g, self.value(b), m, n, k);
                    self.accumulate(a, da);
                }
                if self.needs(b) {
                    let db = matmul_tn(g, self.value(a), m, n, k);
                    self.accumulate(b, db);
                }
            }
            &Op::Add(a, b) => {
                self.accumulate(a, g.to_vec());
                self.accumulate(b, g.to_vec());
            }
            &Op::Mul(a, b) => {
                if self.needs(a) {
                    let da = g.iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
                    self.accumulate(a, da);
                }
                if self.needs(b) {
                    let db = g.iter().zip(self.value(a)).map(|(x, y)| x * y).collect();
                    self.accumulate(b, db);
                }
            }
            &Op::AddRow(a, bias) => {
                self.accumulate(a, g.to_vec());
                self.accumulate_with(bias, |db| {
                    for row in g.chunks(cols) {
                        db.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                    }
                });
            }
            &Op::AddConst(a) => self.accumulate(a, g.to_vec()),
            &Op::Scale(a, s) => self.accumulate(a, g.iter().map(|x| x * s).collect()),
            &Op::Sum(a) => {
                let n = self.nodes[a.0].value.len();
                self.accumulate(a, vec![g[0]; n]);
            }
            &Op::SoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let mut dx = vec![0.0; rows * cols];
                for r in 0..rows {
                    let (yr, gr) = (&y[r * cols..(r + 1) * cols], &g[r * cols..(r + 1) * cols]);
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..cols {
                        dx[r * cols + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(a, dx);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let (x, gain, bias) = (*x, *gain, *bias);
                self.accumulate_with(gain, |dg| {
                    for (hr, gr) in xhat.chunks(cols).zip(g.chunks(cols)) {
                        for j in 0..cols {
                            dg[j] += gr[j] * hr[j];
                        }
                    }
                });
                self.accumulate_with(bias, |db| {
                    for gr in g.chunks(cols) {
                        db.iter_mut().zip(gr).for_each(|(d, x)| *d += x);
                    }
                });
                if self.needs(x) {
                    let gv = self.value(gain);
                    let n = cols as f64;
                    let mut dx = vec![0.0; rows * cols];
                    for r in 0..rows {
                        let hr = &xhat[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dh: Vec<f64> = gr.iter().zip(gv).map(|(a, b)| a * b).collect();
                        let mean_dh = dh.iter().sum::<f64>() / n;
                        let mean_dh_h = dh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / n;
                        for j in 0..cols {
                            dx[r * cols + j] = inv_std[r] * (dh[j] - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                    self.accumulate(x, dx);
                }
            }
            &Op::Gelu(a) => {
                let dx = self
                    .value(a)
                    .iter()
                    .zip(g)
                    .map(|(&x, &gy)| {
                        let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
                        let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                        gy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
                    })
                    .collect();
                self.accumulate(a, dx);
            }
            Op::Embedding { table, ids } => {
                self.accumulate_with(*table, |dt| {
                    for (r, &id) in ids.iter().enumerate() {
                        let src = &g[r * cols..(r + 1) * cols];
                        dt[id * cols..(id + 1) * cols]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, x)| *d += x);
                    }
                });
            }
            Op::Dropout { x, mask } => {
                self.accumulate(*x, g.iter().zip(mask).map(|(a, m)| a * m).collect());
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                count,
            } => {
                let c = self.shape(*logits).1;
                let scale = g[0] / *count as f64;
                let mut dx = vec![0.0; probs.len()];
                for (r, &t) in targets.iter().enumerate() {
                    if t == IGNORE_INDEX {
                        continue;
                    }
                    for j in 0..c {
                        dx[r * c + j] = probs[r * c + j] * scale;
                    }
                    dx[r * c + t] -= scale;
                }
                self.accumulate(*logits, dx);
            }
            &Op::SliceCols { x, start } => {
                let c = self.shape(x).1;
                self.accumulate_with(x, |dx| {
                    for r in 0..rows {
                        dx[r * c + start..r * c + start + cols]
                            .iter_mut()
                            .zip(&g[r * cols..(r + 1) * cols])
                            .for_each(|(d, v)| *d += v);
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let c = self.shape(p).1;
                    self.accumulate_with(p, |dp| {
                        for r in 0..rows {
                            dp[r * c..(r + 1) * c]
                                .iter_mut()
                                .zip(&g[r * cols + offset..r * cols + offset + c])
                                .for_each(|(d, v)| *d += v);
                        }
                    });
                    offset += c;
                }
            }
            Op::GatherRows { x, rows: idx } => {
                self.accumulate_with(*x, |dx| {
                    for (r, &src) in idx.iter().enumerate() {
                        dx[src * cols..(src + 1) * cols]
                            .iter_mut()
                            .zip(&g[r * cols..(r + 1) * cols])
                            .for_each(|(d, v)| *d += v);
                    }
                });
            }
        }
        self.nodes[i].op = op;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap()
            .with_grad()
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(1, 2, vec![0.0, 0.0]).unwrap();
        let y = tape.softmax_rows(x);
        assert_eq!(tape.value(y), &[0.5, 0.5]);
    }

    #[test]
    fn cross_entropy_of_uniform_logits_is_ln_classes() {
        let mut tape = Tape::new();
        let x = tape.constant(1, 2, vec![0.0, 0.0]).unwrap();
        let l = tape.cross_entropy(x, &[0]).unwrap();
        assert!((tape.scalar(l) - std::f64::consts::LN_2).abs() < 1e-15);
        let all_ignored = tape.cross_entropy(x, &[IGNORE_INDEX]);
        assert!(matches!(all_ignored, Err(Error::EmptyReduction)));
        assert!(matches!(tape.cross_entropy(x, &[2]), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn layer_norm_of_constant_row_is_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(2, 4, vec![3.0, 3.0, 3.0, 3.0, -0.7, -0.7, -0.7, -0.7]).unwrap();
        let g = tape.constant(1, 4, vec![1.0; 4]).unwrap();
        let b = tape.constant(1, 4, vec![0.0; 4]).unwrap();
        let y = tape.layer_norm(x, g, b).unwrap();
        assert!(tape.value(y).iter().all(|v| v.abs() < 1e-9), "{:?}", tape.value(y));
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::new();
        let x = tape.constant(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(tape.dropout(x, 0.5, None::<&mut ChaCha8Rng>), x);
        assert_eq!(tape.dropout(x, 0.0, Some(&mut rng)), x);
    }

    #[test]
    fn dropout_rate_and_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 20_000;
        let r = 0.3;
        let mut tape = Tape::new();
        let x = tape.constant(1, n, vec![1.0; n]).unwrap();
        let y = tape.dropout(x, r, Some(&mut rng));
        let zeros = tape.value(y).iter().filter(|v| **v == 0.0).count() as f64;
        let sigma = (n as f64 * r * (1.0 - r)).sqrt();
        assert!((zeros - n as f64 * r).abs() < 3.0 * sigma);
        let keep = 1.0 / (1.0 - r);
        assert!(tape.value(y).iter().all(|v| *v == 0.0 || *v == keep));
    }

    #[test]
    fn shape_errors() {
        let mut tape = Tape::new();
        let a = tape.constant(2, 3, vec![0.0; 6]).unwrap();
        let b = tape.constant(2, 3, vec![0.0; 6]).unwrap();
        assert!(matches!(tape.matmul(a, b), Err(Error::ShapeMismatch { .. })));
        assert!(tape.matmul_nt(a, b).is_ok());
        let c = tape.constant(3, 2, vec![0.0; 6]).unwrap();
        assert!(tape.add(a, c).is_err());
        assert!(tape.backward(a).is_err());
    }

    #[test]
    fn square_gradient_is_exact() {
        let x = Tensor::new(vec![1, 1], vec![3.0]).unwrap().with_grad();
        let report = grad_check(std::slice::from_ref(&x), 1e-5, None, |tape, v| {
            let sq = tape.mul(v[0], v[0])?;
            Ok(tape.sum(sq))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-9);
        let mut tape = Tape::new();
        let v = tape.leaf(&x);
        let sq = tape.mul(v, v).unwrap();
        let s = tape.sum(sq);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(v).unwrap(), &[6.0]);
    }

    #[test]
    fn matmul_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = [random(&mut rng, &[3, 4]), random(&mut rng, &[4, 2]), random(&mut rng, &[3, 2])];
        let report = grad_check(&params, 1e-5, None, |tape, v| {
            let y = tape.matmul(v[0], v[1])?;
            let w = tape.mul(y, v[2])?;
            Ok(tape.sum(w))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn every_op_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = [
            random(&mut rng, &[4, 6]),
            random(&mut rng, &[6, 5]),
            random(&mut rng, &[1, 5]),
            random(&mut rng, &[1, 5]),
            random(&mut rng, &[1, 5]),
            random(&mut rng, &[7, 5]),
            random(&mut rng, &[4, 5]),
        ];
        let report = grad_check(&params, 1e-5, None, |tape, v| {
            let h = tape.matmul(v[0], v[1])?;
            let h = tape.add_row(h, v[2])?;
            let h = tape.layer_norm(h, v[3], v[4])?;
            let h = tape.gelu(h);
            let e = tape.embedding(v[5], &[0, 3, 3, 6])?;
            let h = tape.add(h, e)?;
            let h = tape.mul(h, v[6])?;
            let left = tape.slice_cols(h, 0, 2)?;
            let right = tape.slice_cols(h, 2, 3)?;
            let h = tape.concat_cols(&[right, left])?;
            let h = tape.scale(h, 0.7);
            let h = tape.add_const_row(h, &[0.1, -0.2, 0.3, 0.0, 1.0])?;
            let s = tape.matmul_nt(h, v[5])?;
            let s = tape.softmax_rows(s);
            let s = tape.gather_rows(s, &[1, 0, 1, 3])?;
            let s = tape.scale(s, 5.0);
            tape.cross_entropy(s, &[2, IGNORE_INDEX, 6, 0])
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }

    #[test]
    fn dropout_backward_uses_same_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, &[3, 4]);
        let mut tape = Tape::new();
        let v = tape.leaf(&x);
        let y = tape.dropout(v, 0.5, Some(&mut rng));
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        let g = tape.grad(v).unwrap().to_vec();
        for (j, gj) in g.iter().enumerate() {
            let ratio = if x.data[j] == 0.0 { 0.0 } else { tape.value(y)[j] / x.data[j] };
            assert!((gj - ratio).abs() < 1e-12);
        }
    }
}
