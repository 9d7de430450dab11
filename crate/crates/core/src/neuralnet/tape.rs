//! Reverse-mode automatic differentiation over row-major 2-D tensors.
//!
//! Every forward operation appends a node holding its output value; the
//! backward sweep walks the tape in reverse and accumulates vector-Jacobian
//! products. Sequences are stored flattened as `[batch * seq_len, width]`.

use matrixmultiply::dgemm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(usize),
    MatMul { a: Var, b: Var },
    Linear { x: Var, w: Var, b: Option<Var> },
    Add { a: Var, b: Var },
    Gelu { x: Var },
    LeakyRelu { x: Var, slope: f64 },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Gather { table: Var, ids: Vec<usize> },
    Attention(Box<AttentionCache>),
    SelectRows { x: Var, rows: Vec<usize> },
    ConcatCols { parts: Vec<Var> },
    Interleave { parts: Vec<(Var, usize)>, batch: usize },
    Mse { pred: Var, target: Vec<f64> },
    Bce { logits: Var, target: Vec<f64> },
    SoftmaxXent { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
}

#[derive(Debug)]
struct AttentionCache {
    q: Var,
    k: Var,
    v: Var,
    batch: usize,
    seq: usize,
    heads: usize,
    key_valid: Vec<bool>,
    /// softmax weights, `[batch, heads, seq, seq]`
    probs: Vec<f64>,
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// C (m×n) = op(A) (m×k) · op(B) (k×n) + beta·C, with A/B stored row-major
/// and optionally transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: slice lengths match the dimensions and strides above.
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const LN_EPS: f64 = 1e-5;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Row-wise softmax of a `[rows, cols]` buffer.
pub fn softmax_rows(values: &[f64], cols: usize) -> Vec<f64> {
    let mut out = values.to_vec();
    for row in out.chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node { rows, cols, value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        (self.nodes[v.0].rows, self.nodes[v.0].cols)
    }

    pub fn input(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        self.push(rows, cols, value, Op::Input)
    }

    /// Leaf for trainable parameter `index`; its gradient is reported by
    /// [`Gradients::param`].
    pub fn param(&mut self, index: usize, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        self.push(rows, cols, value, Op::Param(index))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dimensions");
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), false, self.value(b), false, &mut out, false);
        self.push(m, n, out, Op::MatMul { a, b })
    }

    /// `x · w + b` with `w: [in, out]` and `b: [1, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let (m, k) = self.shape(x);
        let (k2, n) = self.shape(w);
        assert_eq!(k, k2, "linear input width");
        let mut out = vec![0.0; m * n];
        if let Some(b) = b {
            let bias = self.value(b);
            assert_eq!(bias.len(), n);
            for row in out.chunks_mut(n) {
                row.copy_from_slice(bias);
            }
        }
        gemm(m, k, n, self.value(x), false, self.value(w), false, &mut out, b.is_some());
        self.push(m, n, out, Op::Linear { x, w, b })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shapes");
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        self.push(r, c, out, Op::Add { a, b })
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| gelu(v)).collect();
        self.push(r, c, out, Op::Gelu { x })
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let (r, c) = self.shape(x);
        let out = self
            .value(x)
            .iter()
            .map(|&v| if v > 0.0 { v } else { slope * v })
            .collect();
        self.push(r, c, out, Op::LeakyRelu { x, slope })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let (r, c) = self.shape(x);
        let g = self.value(gamma);
        let b = self.value(beta);
        assert_eq!(g.len(), c);
        let mut out = vec![0.0; r * c];
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        for (i, row) in self.value(x).chunks(c).enumerate() {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[i] = is;
            for j in 0..c {
                let h = (row[j] - mean) * is;
                xhat[i * c + j] = h;
                out[i * c + j] = h * g[j] + b[j];
            }
        }
        self.push(r, c, out, Op::LayerNorm { x, gamma, beta, xhat, inv_std })
    }

    /// Rows of `table` selected by `ids` (embedding lookup).
    pub fn gather(&mut self, table: Var, ids: Vec<usize>) -> Var {
        let (_, c) = self.shape(table);
        let t = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * c);
        for &id in &ids {
            out.extend_from_slice(&t[id * c..(id + 1) * c]);
        }
        self.push(ids.len(), c, out, Op::Gather { table, ids })
    }

    /// Multi-head scaled dot-product attention over `batch` sequences of
    /// `seq` rows each. Keys with `key_valid == false` receive zero weight.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, batch: usize, seq: usize, heads: usize, key_valid: Vec<bool>) -> Var {
        let (rows, d) = self.shape(q);
        assert_eq!(rows, batch * seq, "attention layout");
        assert_eq!(key_valid.len(), rows);
        assert_eq!(d % heads, 0);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let mut probs = vec![0.0; batch * heads * seq * seq];
        let mut out = vec![0.0; rows * d];
        let mut scores = vec![0.0; seq];
        for b in 0..batch {
            for h in 0..heads {
                let off = h * dh;
                for i in 0..seq {
                    let qi = &qv[(b * seq + i) * d + off..(b * seq + i) * d + off + dh];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..seq {
                        if key_valid[b * seq + j] {
                            let kj = &kv[(b * seq + j) * d + off..(b * seq + j) * d + off + dh];
                            let s = qi.iter().zip(kj).map(|(x, y)| x * y).sum::<f64>() * scale;
                            scores[j] = s;
                            max = max.max(s);
                        }
                    }
                    let p = &mut probs[((b * heads + h) * seq + i) * seq..((b * heads + h) * seq + i + 1) * seq];
                    let mut sum = 0.0;
                    for j in 0..seq {
                        if key_valid[b * seq + j] {
                            p[j] = (scores[j] - max).exp();
                            sum += p[j];
                        }
                    }
                    if sum > 0.0 {
                        for pj in p.iter_mut() {
                            *pj /= sum;
                        }
                    }
                    let o = &mut out[(b * seq + i) * d + off..(b * seq + i) * d + off + dh];
                    for j in 0..seq {
                        if p[j] != 0.0 {
                            let vj = &vv[(b * seq + j) * d + off..(b * seq + j) * d + off + dh];
                            for (oo, x) in o.iter_mut().zip(vj) {
                                *oo += p[j] * x;
                            }
                        }
                    }
                }
            }
        }
        self.push(
            rows,
            d,
            out,
            Op::Attention(Box::new(AttentionCache {
                q,
                k,
                v,
                batch,
                seq,
                heads,
                key_valid,
                probs,
            })),
        )
    }

    pub fn select_rows(&mut self, x: Var, rows: Vec<usize>) -> Var {
        let (_, c) = self.shape(x);
        let xv = self.value(x);
        let mut out = Vec::with_capacity(rows.len() * c);
        for &r in &rows {
            out.extend_from_slice(&xv[r * c..(r + 1) * c]);
        }
        self.push(rows.len(), c, out, Op::SelectRows { x, rows })
    }

    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Var {
        assert!(!parts.is_empty());
        let rows = self.shape(parts[0]).0;
        let widths: Vec<usize> = parts.iter().map(|&p| self.shape(p).1).collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            assert_eq!(self.shape(p).0, rows, "concat_cols row counts");
            let pv = self.value(p);
            for r in 0..rows {
                out[r * total + off..r * total + off + w].copy_from_slice(&pv[r * w..(r + 1) * w]);
            }
            off += w;
        }
        self.push(rows, total, out, Op::ConcatCols { parts })
    }

    /// Builds per-sample sequences from parts holding `rows_per_sample` rows
    /// for each of `batch` samples: sample b gets part 0's rows, then part 1's…
    pub fn interleave(&mut self, parts: Vec<(Var, usize)>, batch: usize) -> Var {
        let cols = self.shape(parts[0].0).1;
        let per_sample: usize = parts.iter().map(|p| p.1).sum();
        let mut out = Vec::with_capacity(batch * per_sample * cols);
        for b in 0..batch {
            for &(p, r) in &parts {
                assert_eq!(self.shape(p), (batch * r, cols), "interleave part shape");
                out.extend_from_slice(&self.value(p)[b * r * cols..(b + 1) * r * cols]);
            }
        }
        self.push(batch * per_sample, cols, out, Op::Interleave { parts, batch })
    }

    /// Mean squared error of a `[m, 1]` prediction.
    pub fn mse_loss(&mut self, pred: Var, target: Vec<f64>) -> Var {
        let p = self.value(pred);
        assert_eq!(p.len(), target.len());
        let loss = p.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
        self.push(1, 1, vec![loss], Op::Mse { pred, target })
    }

    /// Mean binary cross-entropy of `[m, 1]` logits against 0/1 targets.
    pub fn bce_loss(&mut self, logits: Var, target: Vec<f64>) -> Var {
        let z = self.value(logits);
        assert_eq!(z.len(), target.len());
        let loss = z.iter().zip(&target).map(|(&z, &y)| softplus(z) - y * z).sum::<f64>() / z.len() as f64;
        self.push(1, 1, vec![loss], Op::Bce { logits, target })
    }

    /// Mean softmax cross-entropy of `[m, c]` logits.
    pub fn softmax_xent(&mut self, logits: Var, labels: Vec<usize>) -> Var {
        let (m, c) = self.shape(logits);
        assert_eq!(labels.len(), m);
        let probs = softmax_rows(self.value(logits), c);
        let loss = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -probs[i * c + y].max(1e-300).ln())
            .sum::<f64>()
            / m as f64;
        self.push(1, 1, vec![loss], Op::SoftmaxXent { logits, labels, probs })
    }

    /// Backpropagates from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        grads[loss.0] = vec![1.0];

        for idx in (0..=loss.0).rev() {
            if grads[idx].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads[idx]);
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input | Op::Param(_) => {
                    grads[idx] = g;
                    continue;
                }
                Op::MatMul { a, b } => {
                    let (m, k) = self.shape(*a);
                    let n = node.cols;
                    let da = acc(&mut grads, *a, m * k);
                    gemm(m, n, k, &g, false, self.value(*b), true, da, true);
                    let db = acc(&mut grads, *b, k * n);
                    gemm(k, m, n, self.value(*a), true, &g, false, db, true);
                }
                Op::Linear { x, w, b } => {
                    let (m, k) = self.shape(*x);
                    let n = node.cols;
                    let dx = acc(&mut grads, *x, m * k);
                    gemm(m, n, k, &g, false, self.value(*w), true, dx, true);
                    let dw = acc(&mut grads, *w, k * n);
                    gemm(k, m, n, self.value(*x), true, &g, false, dw, true);
                    if let Some(b) = b {
                        let db = acc(&mut grads, *b, n);
                        for row in g.chunks(n) {
                            for (d, v) in db.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                    }
                }
                Op::Add { a, b } => {
                    for t in [*a, *b] {
                        let d = acc(&mut grads, t, g.len());
                        for (d, v) in d.iter_mut().zip(&g) {
                            *d += v;
                        }
                    }
                }
                Op::Gelu { x } => {
                    let xv = self.value(*x);
                    let d = acc(&mut grads, *x, g.len());
                    for ((d, gv), &xi) in d.iter_mut().zip(&g).zip(xv) {
                        *d += gv * gelu_grad(xi);
                    }
                }
                Op::LeakyRelu { x, slope } => {
                    let xv = self.value(*x);
                    let d = acc(&mut grads, *x, g.len());
                    for ((d, gv), &xi) in d.iter_mut().zip(&g).zip(xv) {
                        *d += if xi > 0.0 { *gv } else { slope * gv };
                    }
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let c = node.cols;
                    let gam = self.value(*gamma).to_vec();
                    {
                        let dg = acc(&mut grads, *gamma, c);
                        for (row_g, row_h) in g.chunks(c).zip(xhat.chunks(c)) {
                            for j in 0..c {
                                dg[j] += row_g[j] * row_h[j];
                            }
                        }
                    }
                    {
                        let db = acc(&mut grads, *beta, c);
                        for row_g in g.chunks(c) {
                            for j in 0..c {
                                db[j] += row_g[j];
                            }
                        }
                    }
                    let dx = acc(&mut grads, *x, g.len());
                    let mut dxhat = vec![0.0; c];
                    for (i, (row_g, row_h)) in g.chunks(c).zip(xhat.chunks(c)).enumerate() {
                        let mut sum = 0.0;
                        let mut dot = 0.0;
                        for j in 0..c {
                            dxhat[j] = row_g[j] * gam[j];
                            sum += dxhat[j];
                            dot += dxhat[j] * row_h[j];
                        }
                        let scale = inv_std[i] / c as f64;
                        for j in 0..c {
                            dx[i * c + j] += scale * (c as f64 * dxhat[j] - sum - row_h[j] * dot);
                        }
                    }
                }
                Op::Gather { table, ids } => {
                    let (tr, c) = self.shape(*table);
                    let dt = acc(&mut grads, *table, tr * c);
                    for (i, &id) in ids.iter().enumerate() {
                        for j in 0..c {
                            dt[id * c + j] += g[i * c + j];
                        }
                    }
                }
                Op::Attention(cache) => self.attention_backward(cache, &g, &mut grads),
                Op::SelectRows { x, rows } => {
                    let (xr, c) = self.shape(*x);
                    let dx = acc(&mut grads, *x, xr * c);
                    for (i, &r) in rows.iter().enumerate() {
                        for j in 0..c {
                            dx[r * c + j] += g[i * c + j];
                        }
                    }
                }
                Op::ConcatCols { parts } => {
                    let total = node.cols;
                    let rows = node.rows;
                    let mut off = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        let dp = acc(&mut grads, p, rows * w);
                        for r in 0..rows {
                            for j in 0..w {
                                dp[r * w + j] += g[r * total + off + j];
                            }
                        }
                        off += w;
                    }
                }
                Op::Interleave { parts, batch } => {
                    let cols = node.cols;
                    let mut cursor = 0;
                    for b in 0..*batch {
                        for &(p, r) in parts {
                            let len = self.nodes[p.0].value.len();
                            let dp = acc(&mut grads, p, len);
                            let src = &g[cursor..cursor + r * cols];
                            for (d, v) in dp[b * r * cols..(b + 1) * r * cols].iter_mut().zip(src) {
                                *d += v;
                            }
                            cursor += r * cols;
                        }
                    }
                }
                Op::Mse { pred, target } => {
                    let p = self.value(*pred);
                    let m = p.len() as f64;
                    let d = acc(&mut grads, *pred, p.len());
                    for ((d, &pv), &t) in d.iter_mut().zip(p).zip(target) {
                        *d += g[0] * 2.0 * (pv - t) / m;
                    }
                }
                Op::Bce { logits, target } => {
                    let z = self.value(*logits);
                    let m = z.len() as f64;
                    let d = acc(&mut grads, *logits, z.len());
                    for ((d, &zv), &t) in d.iter_mut().zip(z).zip(target) {
                        *d += g[0] * (sigmoid(zv) - t) / m;
                    }
                }
                Op::SoftmaxXent { logits, labels, probs } => {
                    let (m, c) = self.shape(*logits);
                    let d = acc(&mut grads, *logits, m * c);
                    for (i, &y) in labels.iter().enumerate() {
                        for j in 0..c {
                            let onehot = if j == y { 1.0 } else { 0.0 };
                            d[i * c + j] += g[0] * (probs[i * c + j] - onehot) / m as f64;
                        }
                    }
                }
            }
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(p) => Some((p, i)),
                _ => None,
            })
            .collect();
        Gradients { grads, params }
    }

    fn attention_backward(&self, c: &AttentionCache, g: &[f64], grads: &mut [Vec<f64>]) {
        let (rows, d) = self.shape(c.q);
        let dh = d / c.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(c.q), self.value(c.k), self.value(c.v));
        let seq = c.seq;
        let mut dq = vec![0.0; rows * d];
        let mut dk = vec![0.0; rows * d];
        let mut dv = vec![0.0; rows * d];
        let mut dp = vec![0.0; seq];
        for b in 0..c.batch {
            for h in 0..c.heads {
                let off = h * dh;
                for i in 0..seq {
                    let p = &c.probs[((b * c.heads + h) * seq + i) * seq..((b * c.heads + h) * seq + i + 1) * seq];
                    let go = &g[(b * seq + i) * d + off..(b * seq + i) * d + off + dh];
                    let mut dot = 0.0;
                    for j in 0..seq {
                        if !c.key_valid[b * seq + j] {
                            dp[j] = 0.0;
                            continue;
                        }
                        let vrow = (b * seq + j) * d + off;
                        let vj = &vv[vrow..vrow + dh];
                        dp[j] = go.iter().zip(vj).map(|(x, y)| x * y).sum();
                        dot += p[j] * dp[j];
                        if p[j] != 0.0 {
                            for (dvv, gv) in dv[vrow..vrow + dh].iter_mut().zip(go) {
                                *dvv += p[j] * gv;
                            }
                        }
                    }
                    let qrow = (b * seq + i) * d + off;
                    for j in 0..seq {
                        if !c.key_valid[b * seq + j] {
                            continue;
                        }
                        let ds = p[j] * (dp[j] - dot) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let krow = (b * seq + j) * d + off;
                        for t in 0..dh {
                            dq[qrow + t] += ds * kv[krow + t];
                            dk[krow + t] += ds * qv[qrow + t];
                        }
                    }
                }
            }
        }
        for (var, delta) in [(c.q, dq), (c.k, dk), (c.v, dv)] {
            let target = acc(grads, var, rows * d);
            for (t, x) in target.iter_mut().zip(delta) {
                *t += x;
            }
        }
    }
}

fn acc(grads: &mut [Vec<f64>], v: Var, len: usize) -> &mut [f64] {
    let g = &mut grads[v.0];
    if g.is_empty() {
        *g = vec![0.0; len];
    }
    g
}

/// Result of a backward sweep.
pub struct Gradients {
    grads: Vec<Vec<f64>>,
    params: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of any node (empty when the loss does not depend on it).
    pub fn of(&self, v: Var) -> &[f64] {
        &self.grads[v.0]
    }

    /// Per-parameter gradients indexed by parameter number; parameters that
    /// did not take part in the graph get zeros.
    pub fn param_grads(&self, sizes: &[usize]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
        for &(p, node) in &self.params {
            for (o, g) in out[p].iter_mut().zip(&self.grads[node]) {
                *o += g;
            }
        }
        out
    }
}
