use super::tape::{Node, Tape, Var};
use super::{Result, Tensor, TensorError, ACTIVATION_CLAMP, COSINE_EPS};

pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    ScaleBy(Var, Var),
    DivBy(Var, Var),
    MatMul(Var, Var),
    MatVec(Var, Var),
    VecMat(Var, Var),
    Outer(Var, Var),
    AddRows(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Softplus(Var),
    Relu(Var),
    Power(Var, Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Stack(Vec<Var>),
    Gather(Var, usize),
    Sum(Var),
    Mean(Var),
    Dot(Var, Var),
    Softmax(Var),
    CrossEntropy(Var, usize, Vec<f64>),
    BceLogits(Var, Vec<f64>),
    Cosine(Var, Var),
    CosineRows(Var, Var),
    CircConv(Var, Var),
}

fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-ACTIVATION_CLAMP, ACTIVATION_CLAMP);
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in x.iter_mut() {
        *v /= total;
    }
}

fn dim_err(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> TensorError {
    TensorError::Dimension {
        op,
        lhs: lhs.shape().to_vec(),
        rhs: rhs.shape().to_vec(),
    }
}

fn is_vector(t: &Tensor) -> bool {
    t.rank() <= 1
}

/// Forward primitives. Each records one node; shape errors are reported before
/// anything is recorded.
impl Tape {
    fn unary(
        &self,
        name: &'static str,
        x: Var,
        f: impl Fn(f64) -> f64,
        op: impl FnOnce(Var) -> Op,
    ) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let t = &nodes[x.0].value;
            Tensor {
                shape: t.shape().to_vec(),
                data: t.data().iter().map(|&v| f(v)).collect(),
            }
        };
        self.push(name, value, op(x))
    }

    fn zip(
        &self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            if ta.shape() != tb.shape() {
                return Err(dim_err(name, ta, tb));
            }
            Tensor {
                shape: ta.shape().to_vec(),
                data: ta
                    .data()
                    .iter()
                    .zip(tb.data())
                    .map(|(&x, &y)| f(x, y))
                    .collect(),
            }
        };
        self.push(name, value, op)
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `scale * x + shift` with constant coefficients.
    pub fn affine(&self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        self.unary("affine", x, |v| scale * v + shift, |x| Op::Affine(x, scale))
    }

    /// Multiplies every entry of `x` by the one-element tensor `s`.
    pub fn scale_by(&self, s: Var, x: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let (ts, tx) = (&nodes[s.0].value, &nodes[x.0].value);
            let Some(k) = ts.item() else {
                return Err(dim_err("scale_by", ts, tx));
            };
            Tensor {
                shape: tx.shape().to_vec(),
                data: tx.data().iter().map(|v| k * v).collect(),
            }
        };
        self.push("scale_by", value, Op::ScaleBy(s, x))
    }

    /// Divides every entry of `x` by the one-element tensor `s`.
    pub fn div_by(&self, x: Var, s: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let (tx, ts) = (&nodes[x.0].value, &nodes[s.0].value);
            let Some(k) = ts.item() else {
                return Err(dim_err("div_by", tx, ts));
            };
            Tensor {
                shape: tx.shape().to_vec(),
                data: tx.data().iter().map(|v| v / k).collect(),
            }
        };
        self.push("div_by", value, Op::DivBy(x, s))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            if ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows() {
                return Err(dim_err("matmul", ta, tb));
            }
            let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let row = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let av = ta.data()[i * k + p];
                    let brow = &tb.data()[p * n..(p + 1) * n];
                    for (o, &bv) in row.iter_mut().zip(brow) {
                        *o += av * bv;
                    }
                }
            }
            Tensor {
                shape: vec![m, n],
                data: out,
            }
        };
        self.push("matmul", value, Op::MatMul(a, b))
    }

    /// Matrix `[m×k]` times vector `[k]`.
    pub fn matvec(&self, w: Var, x: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let (tw, tx) = (&nodes[w.0].value, &nodes[x.0].value);
            if tw.rank() != 2 || !is_vector(tx) || tw.cols() != tx.numel() {
                return Err(dim_err("matvec", tw, tx));
            }
            let k = tw.cols();
            let xd = tx.data();
            let data = tw
                .data()
                .chunks_exact(k)
                .map(|row| row.iter().zip(xd).map(|(a, b)| a * b).sum())
                .collect::<Vec<f64>>();
            Tensor::vector(data)
        };
        self.push("matvec", value, Op::MatVec(w, x))
    }

    /// Vector `[n]` times matrix `[n×k]`: the weighted sum of the matrix rows.
    pub fn vecmat(&self, w: Var, m: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let (tw, tm) = (&nodes[w.0].value, &nodes[m.0].value);
            if tm.rank() != 2 || !is_vector(tw) || tm.rows() != tw.numel() {
                return Err(dim_err("vecmat", tw, tm));
            }
            let k = tm.cols();
            let mut out = vec![0.0; k];
            for (&wi, row) in tw.data().iter().zip(tm.data().chunks_exact(k)) {
                for (o, &r) in out.iter_mut().zip(row) {
                    *o += wi * r;
                }
            }
            Tensor::vector(out)
        };
        self.push("vecmat", value, Op::VecMat(w, m))
    }

    pub fn outer(&self, u: Var, v: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let (tu, tv) = (&nodes[u.0].value, &nodes[v.0].value);
            if !is_vector(tu) || !is_vector(tv) {
                return Err(dim_err("outer", tu, tv));
            }
            let mut data = Vec::with_capacity(tu.numel() * tv.numel());
            for &a in tu.data() {
                data.extend(tv.data().iter().map(|b| a * b));
            }
            Tensor {
                shape: vec![tu.numel(), tv.numel()],
                data,
            }
        };
        self.push("outer", value, Op::Outer(u, v))
    }

    /// Adds vector `[k]` to every row of matrix `[n×k]`.
    pub fn add_rows(&self, m: Var, v: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let (tm, tv) = (&nodes[m.0].value, &nodes[v.0].value);
            if tm.rank() != 2 || !is_vector(tv) || tm.cols() != tv.numel() {
                return Err(dim_err("add_rows", tm, tv));
            }
            let k = tm.cols();
            let mut data = tm.data().to_vec();
            for row in data.chunks_exact_mut(k) {
                for (o, &b) in row.iter_mut().zip(tv.data()) {
                    *o += b;
                }
            }
            Tensor {
                shape: tm.shape().to_vec(),
                data,
            }
        };
        self.push("add_rows", value, Op::AddRows(m, v))
    }

    pub fn sigmoid(&self, x: Var) -> Result<Var> {
        self.unary("sigmoid", x, sigmoid, Op::Sigmoid)
    }

    pub fn tanh(&self, x: Var) -> Result<Var> {
        self.unary(
            "tanh",
            x,
            |v| v.clamp(-ACTIVATION_CLAMP, ACTIVATION_CLAMP).tanh(),
            Op::Tanh,
        )
    }

    pub fn softplus(&self, x: Var) -> Result<Var> {
        self.unary("softplus", x, softplus, Op::Softplus)
    }

    pub fn relu(&self, x: Var) -> Result<Var> {
        self.unary("relu", x, |v| v.max(0.0), Op::Relu)
    }

    /// Elementwise `x^gamma` for non-negative `x` and a one-element exponent.
    pub fn power(&self, x: Var, gamma: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let (tx, tg) = (&nodes[x.0].value, &nodes[gamma.0].value);
            let Some(g) = tg.item() else {
                return Err(dim_err("power", tx, tg));
            };
            if tx.data().iter().any(|&v| v < 0.0) {
                return Err(TensorError::Config {
                    op: "power",
                    msg: "base must be non-negative".into(),
                });
            }
            Tensor {
                shape: tx.shape().to_vec(),
                data: tx.data().iter().map(|v| v.powf(g)).collect(),
            }
        };
        self.push("power", value, Op::Power(x, gamma))
    }

    /// Concatenates vectors (scalars count as length one).
    pub fn concat(&self, parts: &[Var]) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let mut data = Vec::new();
            for p in parts {
                let t = &nodes[p.0].value;
                if !is_vector(t) {
                    return Err(dim_err("concat", t, t));
                }
                data.extend_from_slice(t.data());
            }
            if data.is_empty() {
                return Err(TensorError::Contract("concat of nothing".into()));
            }
            Tensor::vector(data)
        };
        self.push("concat", value, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&self, x: Var, start: usize, len: usize) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let t = &nodes[x.0].value;
            if !is_vector(t) || start + len > t.numel() || len == 0 {
                return Err(TensorError::Dimension {
                    op: "slice",
                    lhs: t.shape().to_vec(),
                    rhs: vec![start, len],
                });
            }
            Tensor::vector(t.data()[start..start + len].to_vec())
        };
        self.push("slice", value, Op::Slice(x, start))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&self, rows: &[Var]) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let Some(first) = rows.first() else {
                return Err(TensorError::Contract("stack of nothing".into()));
            };
            let k = nodes[first.0].value.numel();
            let mut data = Vec::with_capacity(k * rows.len());
            for r in rows {
                let t = &nodes[r.0].value;
                if !is_vector(t) || t.numel() != k {
                    return Err(dim_err("stack", &nodes[first.0].value, t));
                }
                data.extend_from_slice(t.data());
            }
            Tensor {
                shape: vec![rows.len(), k],
                data,
            }
        };
        self.push("stack", value, Op::Stack(rows.to_vec()))
    }

    /// Row `index` of a matrix (embedding lookup); backward scatter-adds.
    pub fn gather(&self, m: Var, index: usize) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let t = &nodes[m.0].value;
            if t.rank() != 2 || index >= t.rows() {
                return Err(TensorError::Dimension {
                    op: "gather",
                    lhs: t.shape().to_vec(),
                    rhs: vec![index],
                });
            }
            Tensor::vector(t.row(index).to_vec())
        };
        self.push("gather", value, Op::Gather(m, index))
    }

    pub fn sum(&self, x: Var) -> Result<Var> {
        let s = self.nodes()[x.0].value.sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&self, x: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let t = &nodes[x.0].value;
            if t.numel() == 0 {
                return Err(TensorError::Contract("mean of empty tensor".into()));
            }
            t.sum() / t.numel() as f64
        };
        self.push("mean", Tensor::scalar(value), Op::Mean(x))
    }

    pub fn dot(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            if ta.numel() != tb.numel() {
                return Err(dim_err("dot", ta, tb));
            }
            ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).sum()
        };
        self.push("dot", Tensor::scalar(value), Op::Dot(a, b))
    }

    pub fn softmax(&self, x: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let t = &nodes[x.0].value;
            if t.numel() == 0 || !is_vector(t) {
                return Err(TensorError::Dimension {
                    op: "softmax",
                    lhs: t.shape().to_vec(),
                    rhs: vec![],
                });
            }
            let mut data = t.data().to_vec();
            softmax_in_place(&mut data);
            Tensor::vector(data)
        };
        self.push("softmax", value, Op::Softmax(x))
    }

    /// `-ln softmax(logits)[target]`.
    pub fn cross_entropy(&self, logits: Var, target: usize) -> Result<Var> {
        let (loss, probs) = {
            let nodes = self.nodes();
            let t = &nodes[logits.0].value;
            if !is_vector(t) || target >= t.numel() {
                return Err(TensorError::Dimension {
                    op: "cross_entropy",
                    lhs: t.shape().to_vec(),
                    rhs: vec![target],
                });
            }
            let max = t.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + t.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            let mut probs = t.data().to_vec();
            softmax_in_place(&mut probs);
            (lse - t.data()[target], probs)
        };
        self.push(
            "cross_entropy",
            Tensor::scalar(loss),
            Op::CrossEntropy(logits, target, probs),
        )
    }

    /// Summed binary cross-entropy of independent logits against 0/1 targets.
    pub fn bce_with_logits(&self, logits: Var, targets: &[f64]) -> Result<Var> {
        let loss = {
            let nodes = self.nodes();
            let t = &nodes[logits.0].value;
            if t.numel() != targets.len() {
                return Err(TensorError::Dimension {
                    op: "bce_with_logits",
                    lhs: t.shape().to_vec(),
                    rhs: vec![targets.len()],
                });
            }
            t.data()
                .iter()
                .zip(targets)
                .map(|(&x, &y)| softplus(x) - y * x)
                .sum::<f64>()
        };
        self.push(
            "bce_with_logits",
            Tensor::scalar(loss),
            Op::BceLogits(logits, targets.to_vec()),
        )
    }

    /// `u·v / (|u||v| + eps)`.
    pub fn cosine_similarity(&self, u: Var, v: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let (tu, tv) = (&nodes[u.0].value, &nodes[v.0].value);
            if tu.numel() != tv.numel() || !is_vector(tu) || !is_vector(tv) {
                return Err(dim_err("cosine_similarity", tu, tv));
            }
            cosine(tu.data(), tv.data())
        };
        self.push("cosine_similarity", Tensor::scalar(value), Op::Cosine(u, v))
    }

    /// Cosine similarity of `key` against every row of `m`.
    pub fn cosine_rows(&self, m: Var, key: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let (tm, tk) = (&nodes[m.0].value, &nodes[key.0].value);
            if tm.rank() != 2 || !is_vector(tk) || tm.cols() != tk.numel() {
                return Err(dim_err("cosine_rows", tm, tk));
            }
            Tensor::vector(
                tm.data()
                    .chunks_exact(tm.cols())
                    .map(|row| cosine(row, tk.data()))
                    .collect(),
            )
        };
        self.push("cosine_rows", value, Op::CosineRows(m, key))
    }

    /// `out[i] = Σ_j w[(i - offset_j) mod N] · s[j]` with offsets centred on zero.
    pub fn circular_convolve(&self, w: Var, s: Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes();
            let (tw, ts) = (&nodes[w.0].value, &nodes[s.0].value);
            if !is_vector(tw) || !is_vector(ts) {
                return Err(dim_err("circular_convolve", tw, ts));
            }
            let (n, k) = (tw.numel(), ts.numel());
            if k % 2 == 0 || k > n {
                return Err(TensorError::Config {
                    op: "circular_convolve",
                    msg: format!("kernel length {k} must be odd and at most {n}"),
                });
            }
            let mut out = vec![0.0; n];
            for (i, o) in out.iter_mut().enumerate() {
                for (j, &sj) in ts.data().iter().enumerate() {
                    *o += tw.data()[conv_index(i, j, n, k)] * sj;
                }
            }
            Tensor::vector(out)
        };
        self.push("circular_convolve", value, Op::CircConv(w, s))
    }
}

/// Source index for output `i`, kernel tap `j`.
fn conv_index(i: usize, j: usize, n: usize, k: usize) -> usize {
    let half = (k - 1) / 2;
    // offset = j - half; source = i - offset = i + half - j
    (i + half + n - j) % n
}

fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nu * nv + COSINE_EPS)
}

/// Accumulates `g_out · ∂cos/∂u` into `gu` and `g_out · ∂cos/∂v` into `gv`.
fn cosine_backward(u: &[f64], v: &[f64], g_out: f64, gu: &mut [f64], gv: &mut [f64]) {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let denom = nu * nv + COSINE_EPS;
    let coef = dot / (denom * denom);
    for i in 0..u.len() {
        let dnu = if nu > 0.0 { u[i] / nu } else { 0.0 };
        let dnv = if nv > 0.0 { v[i] / nv } else { 0.0 };
        gu[i] += g_out * (v[i] / denom - coef * nv * dnu);
        gv[i] += g_out * (u[i] / denom - coef * nu * dnv);
    }
}

fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'a mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()])
}

/// Propagates the gradient `g` of node `i` into its inputs, all of which have
/// smaller indices and therefore live in `grads`.
pub(crate) fn backprop(nodes: &[Node], i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let val = |v: Var| nodes[v.0].value.data();
    let out = nodes[i].value.data();
    match &nodes[i].op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            add_into(slot(grads, nodes, *a), g);
            add_into(slot(grads, nodes, *b), g);
        }
        Op::Sub(a, b) => {
            add_into(slot(grads, nodes, *a), g);
            for (o, gv) in slot(grads, nodes, *b).iter_mut().zip(g) {
                *o -= gv;
            }
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(*a).to_vec(), val(*b).to_vec());
            for ((o, gv), y) in slot(grads, nodes, *a).iter_mut().zip(g).zip(&vb) {
                *o += gv * y;
            }
            for ((o, gv), x) in slot(grads, nodes, *b).iter_mut().zip(g).zip(&va) {
                *o += gv * x;
            }
        }
        Op::Affine(x, scale) => {
            for (o, gv) in slot(grads, nodes, *x).iter_mut().zip(g) {
                *o += scale * gv;
            }
        }
        Op::ScaleBy(s, x) => {
            let k = val(*s)[0];
            let xs = val(*x);
            let ds: f64 = g.iter().zip(xs).map(|(a, b)| a * b).sum();
            slot(grads, nodes, *s)[0] += ds;
            for (o, gv) in slot(grads, nodes, *x).iter_mut().zip(g) {
                *o += k * gv;
            }
        }
        Op::DivBy(x, s) => {
            let k = val(*s)[0];
            let xs = val(*x);
            let ds: f64 = -g.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>() / (k * k);
            for (o, gv) in slot(grads, nodes, *x).iter_mut().zip(g) {
                *o += gv / k;
            }
            slot(grads, nodes, *s)[0] += ds;
        }
        Op::MatMul(a, b) => {
            let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
            let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
            let (da, db) = (ta.data(), tb.data());
            {
                let ga = slot(grads, nodes, *a);
                for i in 0..m {
                    for p in 0..k {
                        let brow = &db[p * n..(p + 1) * n];
                        let grow = &g[i * n..(i + 1) * n];
                        ga[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
            }
            let gb = slot(grads, nodes, *b);
            for i in 0..m {
                for p in 0..k {
                    let av = da[i * k + p];
                    let grow = &g[i * n..(i + 1) * n];
                    for (o, gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                        *o += av * gv;
                    }
                }
            }
        }
        Op::MatVec(w, x) => {
            let tw = &nodes[w.0].value;
            let k = tw.cols();
            let xs = val(*x);
            {
                let gw = slot(grads, nodes, *w);
                for (row, &gi) in gw.chunks_exact_mut(k).zip(g) {
                    if gi != 0.0 {
                        for (o, &xv) in row.iter_mut().zip(xs) {
                            *o += gi * xv;
                        }
                    }
                }
            }
            let gx = slot(grads, nodes, *x);
            for (row, &gi) in tw.data().chunks_exact(k).zip(g) {
                if gi != 0.0 {
                    for (o, &wv) in gx.iter_mut().zip(row) {
                        *o += gi * wv;
                    }
                }
            }
        }
        Op::VecMat(w, m) => {
            let tm = &nodes[m.0].value;
            let k = tm.cols();
            let ws = val(*w);
            {
                let gw = slot(grads, nodes, *w);
                for (o, row) in gw.iter_mut().zip(tm.data().chunks_exact(k)) {
                    *o += row.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            let gm = slot(grads, nodes, *m);
            for (row, &wi) in gm.chunks_exact_mut(k).zip(ws) {
                for (o, gv) in row.iter_mut().zip(g) {
                    *o += wi * gv;
                }
            }
        }
        Op::Outer(u, v) => {
            let (us, vs) = (val(*u).to_vec(), val(*v).to_vec());
            let n = vs.len();
            {
                let gu = slot(grads, nodes, *u);
                for (o, grow) in gu.iter_mut().zip(g.chunks_exact(n)) {
                    *o += grow.iter().zip(&vs).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            let gv = slot(grads, nodes, *v);
            for (grow, &uv) in g.chunks_exact(n).zip(&us) {
                for (o, gx) in gv.iter_mut().zip(grow) {
                    *o += uv * gx;
                }
            }
        }
        Op::AddRows(m, v) => {
            let k = nodes[v.0].value.numel();
            add_into(slot(grads, nodes, *m), g);
            let gv = slot(grads, nodes, *v);
            for grow in g.chunks_exact(k) {
                add_into(gv, grow);
            }
        }
        Op::Sigmoid(x) => {
            for ((o, gv), y) in slot(grads, nodes, *x).iter_mut().zip(g).zip(out) {
                *o += gv * y * (1.0 - y);
            }
        }
        Op::Tanh(x) => {
            for ((o, gv), y) in slot(grads, nodes, *x).iter_mut().zip(g).zip(out) {
                *o += gv * (1.0 - y * y);
            }
        }
        Op::Softplus(x) => {
            let xs = val(*x).to_vec();
            for ((o, gv), xv) in slot(grads, nodes, *x).iter_mut().zip(g).zip(&xs) {
                *o += gv * sigmoid(*xv);
            }
        }
        Op::Relu(x) => {
            let xs = val(*x).to_vec();
            for ((o, gv), xv) in slot(grads, nodes, *x).iter_mut().zip(g).zip(&xs) {
                if *xv > 0.0 {
                    *o += gv;
                }
            }
        }
        Op::Power(x, gamma) => {
            let xs = val(*x).to_vec();
            let gm = val(*gamma)[0];
            let mut dgamma = 0.0;
            for ((gv, xv), y) in g.iter().zip(&xs).zip(out) {
                if *xv > 0.0 {
                    dgamma += gv * y * xv.ln();
                }
            }
            for ((o, gv), xv) in slot(grads, nodes, *x).iter_mut().zip(g).zip(&xs) {
                *o += gv * gm * xv.powf(gm - 1.0);
            }
            slot(grads, nodes, *gamma)[0] += dgamma;
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for p in parts {
                let n = nodes[p.0].value.numel();
                add_into(slot(grads, nodes, *p), &g[offset..offset + n]);
                offset += n;
            }
        }
        Op::Slice(x, start) => {
            let gx = slot(grads, nodes, *x);
            add_into(&mut gx[*start..*start + g.len()], g);
        }
        Op::Stack(rows) => {
            let k = out.len() / rows.len();
            for (r, grow) in rows.iter().zip(g.chunks_exact(k)) {
                add_into(slot(grads, nodes, *r), grow);
            }
        }
        Op::Gather(m, index) => {
            let k = g.len();
            let gm = slot(grads, nodes, *m);
            add_into(&mut gm[index * k..(index + 1) * k], g);
        }
        Op::Sum(x) => {
            for o in slot(grads, nodes, *x).iter_mut() {
                *o += g[0];
            }
        }
        Op::Mean(x) => {
            let gx = slot(grads, nodes, *x);
            let n = gx.len() as f64;
            for o in gx.iter_mut() {
                *o += g[0] / n;
            }
        }
        Op::Dot(a, b) => {
            let (va, vb) = (val(*a).to_vec(), val(*b).to_vec());
            for (o, y) in slot(grads, nodes, *a).iter_mut().zip(&vb) {
                *o += g[0] * y;
            }
            for (o, x) in slot(grads, nodes, *b).iter_mut().zip(&va) {
                *o += g[0] * x;
            }
        }
        Op::Softmax(x) => {
            let gy: f64 = g.iter().zip(out).map(|(a, b)| a * b).sum();
            for ((o, gv), y) in slot(grads, nodes, *x).iter_mut().zip(g).zip(out) {
                *o += y * (gv - gy);
            }
        }
        Op::CrossEntropy(x, target, probs) => {
            let gx = slot(grads, nodes, *x);
            for (j, (o, p)) in gx.iter_mut().zip(probs).enumerate() {
                let onehot = if j == *target { 1.0 } else { 0.0 };
                *o += g[0] * (p - onehot);
            }
        }
        Op::BceLogits(x, targets) => {
            let xs = val(*x).to_vec();
            for ((o, xv), t) in slot(grads, nodes, *x).iter_mut().zip(&xs).zip(targets) {
                *o += g[0] * (sigmoid(*xv) - t);
            }
        }
        Op::Cosine(u, v) => {
            let (us, vs) = (val(*u).to_vec(), val(*v).to_vec());
            let mut gu = vec![0.0; us.len()];
            let mut gv = vec![0.0; vs.len()];
            cosine_backward(&us, &vs, g[0], &mut gu, &mut gv);
            add_into(slot(grads, nodes, *u), &gu);
            add_into(slot(grads, nodes, *v), &gv);
        }
        Op::CosineRows(m, key) => {
            let tm = &nodes[m.0].value;
            let k = tm.cols();
            let ks = val(*key).to_vec();
            let mut gk = vec![0.0; k];
            let mut gm = vec![0.0; tm.numel()];
            for ((row, grow), &gi) in tm.data().chunks_exact(k).zip(gm.chunks_exact_mut(k)).zip(g) {
                cosine_backward(row, &ks, gi, grow, &mut gk);
            }
            add_into(slot(grads, nodes, *m), &gm);
            add_into(slot(grads, nodes, *key), &gk);
        }
        Op::CircConv(w, s) => {
            let (ws, ss) = (val(*w).to_vec(), val(*s).to_vec());
            let (n, k) = (ws.len(), ss.len());
            {
                let gw = slot(grads, nodes, *w);
                for (i, gi) in g.iter().enumerate() {
                    for (j, sj) in ss.iter().enumerate() {
                        gw[conv_index(i, j, n, k)] += gi * sj;
                    }
                }
            }
            let gs = slot(grads, nodes, *s);
            for (i, gi) in g.iter().enumerate() {
                for (j, o) in gs.iter_mut().enumerate() {
                    *o += gi * ws[conv_index(i, j, n, k)];
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
