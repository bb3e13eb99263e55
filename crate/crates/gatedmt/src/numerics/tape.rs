//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Ops record their inputs during the forward pass; `backward` walks the tape
//! in reverse accumulating vector-Jacobian products. One tape per training
//! step, single-threaded, fixed evaluation order, so runs are bit-reproducible.
//!
//! The `*_unordered` attention ops normalize their reduction order over the
//! key axis (addends are sorted by value before summation). Attention over an
//! unordered set of image embeddings is therefore bit-identical under any
//! permutation of its inputs.

use crate::error::{Error, Result};
use crate::numerics::precision::{nan_debug, quantize};
use crate::numerics::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

// the `unordered` flags only shape the forward reduction order; backward is
// order-independent, so the fields are never read back off the tape
#[allow(dead_code)]
#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, unordered: bool },
    Add { a: Var, b: Var },
    AddBias { x: Var, bias: Var },
    ScaleScalar { x: Var, s: Var },
    ScaleConst { x: Var, c: f64 },
    AddMask { x: Var },
    Relu { x: Var },
    Tanh { x: Var },
    SoftmaxRows { x: Var, unordered: bool },
    Transpose { x: Var },
    ConcatRows { a: Var, b: Var },
    SliceCols { x: Var, start: usize, len: usize },
    ConcatCols { parts: Vec<Var> },
    GatherRows { table: Var, ids: Vec<usize> },
    LayerNorm { x: Var, gain: Var, bias: Var, eps: f64 },
    CrossEntropy { logits: Var, targets: Vec<usize>, pad: usize },
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Sum with a canonical (value-sorted) addend order; permutation-invariant.
fn sorted_sum(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.iter().sum()
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` loss w.r.t. `v` (zeros if unused).
    pub fn grad(&self, v: Var) -> Tensor {
        match &self.nodes[v.0].grad {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.nodes[v.0].value.shape().to_vec()),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if nan_debug() && value.has_non_finite() {
            return Err(Error::numeric(format!("non-finite value out of {:?}", op)));
        }
        self.nodes.push(Node { value, grad: None, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, grad: None, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t)
    }

    // ── forward ops ──────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// Matrix product whose contraction axis is an unordered set (keys).
    pub fn matmul_unordered(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, unordered: bool) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape().len() != 2 || bv.shape().len() != 2 {
            return Err(Error::shape("matmul expects rank-2 tensors"));
        }
        let (n, k) = (av.rows(), av.cols());
        let (k2, m) = (bv.rows(), bv.cols());
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner dims {k} vs {k2} ({:?} x {:?})",
                av.shape(),
                bv.shape()
            )));
        }
        let mut out = Tensor::zeros(vec![n, m]);
        if unordered {
            let mut scratch = vec![0.0; k];
            for i in 0..n {
                for j in 0..m {
                    for (kk, s) in scratch.iter_mut().enumerate() {
                        *s = av.at(i, kk) * bv.at(kk, j);
                    }
                    out.set(i, j, quantize(sorted_sum(&mut scratch)));
                }
            }
        } else {
            for i in 0..n {
                for j in 0..m {
                    let mut acc = 0.0;
                    for kk in 0..k {
                        acc += av.at(i, kk) * bv.at(kk, j);
                    }
                    out.set(i, j, quantize(acc));
                }
            }
        }
        self.push(out, Op::MatMul { a, b, unordered })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(Error::shape(format!(
                "add shape mismatch {:?} vs {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| quantize(x + y))
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        self.push(out, Op::Add { a, b })
    }

    /// Row-broadcast bias add: x (n×d) + bias (d).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (&self.nodes[x.0].value, &self.nodes[bias.0].value);
        let d = xv.cols();
        if bv.len() != d {
            return Err(Error::shape(format!(
                "bias length {} vs row width {d}",
                bv.len()
            )));
        }
        let mut out = xv.clone();
        let n = xv.rows();
        for i in 0..n {
            for j in 0..d {
                out.set(i, j, quantize(xv.at(i, j) + bv.data()[j]));
            }
        }
        self.push(out, Op::AddBias { x, bias })
    }

    /// Multiply a tensor by a scalar node (the tanh gate path).
    pub fn scale_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        if !self.nodes[s.0].value.is_scalar() {
            return Err(Error::shape("scale_scalar: s must be scalar"));
        }
        let sv = self.nodes[s.0].value.item();
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|v| quantize(v * sv)).collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(out, Op::ScaleScalar { x, s })
    }

    pub fn scale_const(&mut self, x: Var, c: f64) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|v| quantize(v * c)).collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(out, Op::ScaleConst { x, c })
    }

    /// Add a constant tensor (attention masks); no gradient flows to the mask.
    pub fn add_mask(&mut self, x: Var, mask: &Tensor) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        if xv.shape() != mask.shape() {
            return Err(Error::shape("add_mask shape mismatch"));
        }
        let data = xv
            .data()
            .iter()
            .zip(mask.data())
            .map(|(a, b)| quantize(a + b))
            .collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(out, Op::AddMask { x })
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(out, Op::Relu { x })
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|&v| quantize(v.tanh())).collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(out, Op::Tanh { x })
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        self.softmax_impl(x, false)
    }

    /// Softmax whose axis is an unordered key set (sorted-sum denominator).
    pub fn softmax_rows_unordered(&mut self, x: Var) -> Result<Var> {
        self.softmax_impl(x, true)
    }

    fn softmax_impl(&mut self, x: Var, unordered: bool) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let (n, d) = (xv.rows(), xv.cols());
        let mut out = Tensor::zeros(vec![n, d]);
        if xv.shape().len() == 1 {
            out = Tensor::zeros(vec![d]);
        }
        let mut exps = vec![0.0; d];
        for i in 0..n {
            let row = xv.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for (j, e) in exps.iter_mut().enumerate() {
                *e = (row[j] - max).exp();
            }
            let denom = if unordered {
                let mut copy = exps.clone();
                sorted_sum(&mut copy)
            } else {
                exps.iter().sum()
            };
            for j in 0..d {
                out.data_mut()[i * d + j] = quantize(exps[j] / denom);
            }
        }
        self.push(out, Op::SoftmaxRows { x, unordered })
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        if xv.shape().len() != 2 {
            return Err(Error::shape("transpose expects rank-2"));
        }
        let (n, m) = (xv.rows(), xv.cols());
        let mut out = Tensor::zeros(vec![m, n]);
        for i in 0..n {
            for j in 0..m {
                out.set(j, i, xv.at(i, j));
            }
        }
        self.push(out, Op::Transpose { x })
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.cols() != bv.cols() {
            return Err(Error::shape("concat_rows column mismatch"));
        }
        let mut data = av.data().to_vec();
        data.extend_from_slice(bv.data());
        let out = Tensor::new(vec![av.rows() + bv.rows(), av.cols()], data)?;
        self.push(out, Op::ConcatRows { a, b })
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let (n, d) = (xv.rows(), xv.cols());
        if start + len > d {
            return Err(Error::shape(format!(
                "slice_cols {start}..{} out of width {d}",
                start + len
            )));
        }
        let mut out = Tensor::zeros(vec![n, len]);
        for i in 0..n {
            for j in 0..len {
                out.set(i, j, xv.at(i, start + j));
            }
        }
        self.push(out, Op::SliceCols { x, start, len })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_cols: no parts"));
        }
        let n = self.nodes[parts[0].0].value.rows();
        let total: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
        let mut out = Tensor::zeros(vec![n, total]);
        let mut off = 0;
        for p in parts {
            let pv = &self.nodes[p.0].value;
            if pv.rows() != n {
                return Err(Error::shape("concat_cols row mismatch"));
            }
            for i in 0..n {
                for j in 0..pv.cols() {
                    out.set(i, off + j, pv.at(i, j));
                }
            }
            off += pv.cols();
        }
        self.push(out, Op::ConcatCols { parts: parts.to_vec() })
    }

    /// Row gather (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = &self.nodes[table.0].value;
        let (rows, d) = (tv.rows(), tv.cols());
        let mut out = Tensor::zeros(vec![ids.len(), d]);
        for (i, &id) in ids.iter().enumerate() {
            if id >= rows {
                return Err(Error::data(format!("gather id {id} >= table rows {rows}")));
            }
            for j in 0..d {
                out.set(i, j, tv.at(id, j));
            }
        }
        self.push(out, Op::GatherRows { table, ids: ids.to_vec() })
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (xv, gv, bv) = (
            &self.nodes[x.0].value,
            &self.nodes[gain.0].value,
            &self.nodes[bias.0].value,
        );
        let d = xv.cols();
        if gv.len() != d || bv.len() != d {
            return Err(Error::shape(format!(
                "layer_norm: gain/bias length {}/{} vs width {d}",
                gv.len(),
                bv.len()
            )));
        }
        let n = xv.rows();
        let mut out = Tensor::zeros(xv.shape().to_vec());
        for i in 0..n {
            let row = xv.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..d {
                let xhat = (row[j] - mean) * inv;
                out.data_mut()[i * d + j] = quantize(gv.data()[j] * xhat + bv.data()[j]);
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, eps })
    }

    /// Mean negative log-likelihood over non-pad target positions.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], pad: usize) -> Result<Var> {
        let lv = &self.nodes[logits.0].value;
        let (t, v) = (lv.rows(), lv.cols());
        if targets.len() != t {
            return Err(Error::shape(format!(
                "cross_entropy: {} targets for {t} logit rows",
                targets.len()
            )));
        }
        let mut total = 0.0;
        let mut count = 0usize;
        for (i, &tid) in targets.iter().enumerate() {
            if tid >= v {
                return Err(Error::data(format!("target id {tid} >= vocab {v}")));
            }
            if tid == pad {
                continue;
            }
            let row = lv.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[tid];
            count += 1;
        }
        if count == 0 {
            return Err(Error::data("empty loss support: all targets are pad"));
        }
        let out = Tensor::scalar(total / count as f64);
        self.push(out, Op::CrossEntropy { logits, targets: targets.to_vec(), pad })
    }

    // ── backward ─────────────────────────────────────────────────────────

    fn accum(&mut self, v: Var, delta: &Tensor) {
        let node = &mut self.nodes[v.0];
        match &mut node.grad {
            Some(g) => {
                for (gi, di) in g.data_mut().iter_mut().zip(delta.data()) {
                    *gi += di;
                }
            }
            None => node.grad = Some(delta.clone()),
        }
    }

    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::numeric("backward: loss must be scalar"));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(dy) = self.nodes[idx].grad.clone() else {
                continue;
            };
            // placeholder op to take ownership without borrow conflicts
            let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
            match &op {
                Op::Leaf => {}
                Op::MatMul { a, b, .. } => {
                    let av = self.nodes[a.0].value.clone();
                    let bv = self.nodes[b.0].value.clone();
                    let (n, k) = (av.rows(), av.cols());
                    let m = bv.cols();
                    let mut da = Tensor::zeros(vec![n, k]);
                    let mut db = Tensor::zeros(vec![k, m]);
                    for i in 0..n {
                        for kk in 0..k {
                            let mut acc = 0.0;
                            for j in 0..m {
                                acc += dy.at(i, j) * bv.at(kk, j);
                            }
                            da.set(i, kk, acc);
                        }
                    }
                    for kk in 0..k {
                        for j in 0..m {
                            let mut acc = 0.0;
                            for i in 0..n {
                                acc += av.at(i, kk) * dy.at(i, j);
                            }
                            db.set(kk, j, acc);
                        }
                    }
                    self.accum(*a, &da);
                    self.accum(*b, &db);
                }
                Op::Add { a, b } => {
                    self.accum(*a, &dy);
                    self.accum(*b, &dy);
                }
                Op::AddBias { x, bias } => {
                    self.accum(*x, &dy);
                    let d = dy.cols();
                    let mut db = Tensor::zeros(vec![d]);
                    for i in 0..dy.rows() {
                        for j in 0..d {
                            db.data_mut()[j] += dy.at(i, j);
                        }
                    }
                    self.accum(*bias, &db);
                }
                Op::ScaleScalar { x, s } => {
                    let sv = self.nodes[s.0].value.item();
                    let xv = self.nodes[x.0].value.clone();
                    let dx = Tensor::new(
                        dy.shape().to_vec(),
                        dy.data().iter().map(|d| d * sv).collect(),
                    )?;
                    let ds: f64 = dy.data().iter().zip(xv.data()).map(|(d, x)| d * x).sum();
                    self.accum(*x, &dx);
                    self.accum(*s, &Tensor::new(vec![1], vec![ds])?);
                }
                Op::ScaleConst { x, c } => {
                    let dx = Tensor::new(
                        dy.shape().to_vec(),
                        dy.data().iter().map(|d| d * c).collect(),
                    )?;
                    self.accum(*x, &dx);
                }
                Op::AddMask { x } => self.accum(*x, &dy),
                Op::Relu { x } => {
                    let xv = &self.nodes[x.0].value;
                    let dx = Tensor::new(
                        dy.shape().to_vec(),
                        dy.data()
                            .iter()
                            .zip(xv.data())
                            .map(|(d, &x)| if x > 0.0 { *d } else { 0.0 })
                            .collect(),
                    )?;
                    self.accum(*x, &dx);
                }
                Op::Tanh { x } => {
                    let yv = &self.nodes[idx].value;
                    let dx = Tensor::new(
                        dy.shape().to_vec(),
                        dy.data()
                            .iter()
                            .zip(yv.data())
                            .map(|(d, y)| d * (1.0 - y * y))
                            .collect(),
                    )?;
                    self.accum(*x, &dx);
                }
                Op::SoftmaxRows { x, .. } => {
                    let yv = self.nodes[idx].value.clone();
                    let (n, d) = (yv.rows(), yv.cols());
                    let mut dx = Tensor::zeros(yv.shape().to_vec());
                    for i in 0..n {
                        let mut dot = 0.0;
                        for j in 0..d {
                            dot += dy.data()[i * d + j] * yv.data()[i * d + j];
                        }
                        for j in 0..d {
                            dx.data_mut()[i * d + j] =
                                yv.data()[i * d + j] * (dy.data()[i * d + j] - dot);
                        }
                    }
                    self.accum(*x, &dx);
                }
                Op::Transpose { x } => {
                    let (n, m) = (dy.rows(), dy.cols());
                    let mut dx = Tensor::zeros(vec![m, n]);
                    for i in 0..n {
                        for j in 0..m {
                            dx.set(j, i, dy.at(i, j));
                        }
                    }
                    self.accum(*x, &dx);
                }
                Op::ConcatRows { a, b } => {
                    let ar = self.nodes[a.0].value.rows();
                    let d = dy.cols();
                    let da = Tensor::new(vec![ar, d], dy.data()[..ar * d].to_vec())?;
                    let db = Tensor::new(
                        vec![dy.rows() - ar, d],
                        dy.data()[ar * d..].to_vec(),
                    )?;
                    self.accum(*a, &da);
                    self.accum(*b, &db);
                }
                Op::SliceCols { x, start, len } => {
                    let xv = &self.nodes[x.0].value;
                    let (n, d) = (xv.rows(), xv.cols());
                    let mut dx = Tensor::zeros(vec![n, d]);
                    for i in 0..n {
                        for j in 0..*len {
                            dx.set(i, start + j, dy.at(i, j));
                        }
                    }
                    self.accum(*x, &dx);
                }
                Op::ConcatCols { parts } => {
                    let n = dy.rows();
                    let mut off = 0;
                    for p in parts {
                        let w = self.nodes[p.0].value.cols();
                        let mut dp = Tensor::zeros(vec![n, w]);
                        for i in 0..n {
                            for j in 0..w {
                                dp.set(i, j, dy.at(i, off + j));
                            }
                        }
                        self.accum(*p, &dp);
                        off += w;
                    }
                }
                Op::GatherRows { table, ids } => {
                    let tv = &self.nodes[table.0].value;
                    let (rows, d) = (tv.rows(), tv.cols());
                    let mut dt = Tensor::zeros(vec![rows, d]);
                    for (i, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            let cur = dt.at(id, j);
                            dt.set(id, j, cur + dy.at(i, j));
                        }
                    }
                    self.accum(*table, &dt);
                }
                Op::LayerNorm { x, gain, bias, eps } => {
                    let xv = self.nodes[x.0].value.clone();
                    let gv = self.nodes[gain.0].value.clone();
                    let (n, d) = (xv.rows(), xv.cols());
                    let mut dx = Tensor::zeros(xv.shape().to_vec());
                    let mut dg = Tensor::zeros(vec![d]);
                    let mut db = Tensor::zeros(vec![d]);
                    for i in 0..n {
                        let row = xv.row(i);
                        let mean = row.iter().sum::<f64>() / d as f64;
                        let var =
                            row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                        let inv = 1.0 / (var + eps).sqrt();
                        let mut m1 = 0.0;
                        let mut m2 = 0.0;
                        let mut xhat = vec![0.0; d];
                        let mut dxh = vec![0.0; d];
                        for j in 0..d {
                            xhat[j] = (row[j] - mean) * inv;
                            dxh[j] = dy.data()[i * d + j] * gv.data()[j];
                            m1 += dxh[j];
                            m2 += dxh[j] * xhat[j];
                        }
                        m1 /= d as f64;
                        m2 /= d as f64;
                        for j in 0..d {
                            dx.data_mut()[i * d + j] = (dxh[j] - m1 - xhat[j] * m2) * inv;
                            dg.data_mut()[j] += dy.data()[i * d + j] * xhat[j];
                            db.data_mut()[j] += dy.data()[i * d + j];
                        }
                    }
                    self.accum(*x, &dx);
                    self.accum(*gain, &dg);
                    self.accum(*bias, &db);
                }
                Op::CrossEntropy { logits, targets, pad } => {
                    let lv = self.nodes[logits.0].value.clone();
                    let (t, v) = (lv.rows(), lv.cols());
                    let count = targets.iter().filter(|&&x| x != *pad).count() as f64;
                    let scale = dy.item() / count;
                    let mut dl = Tensor::zeros(vec![t, v]);
                    for (i, &tid) in targets.iter().enumerate() {
                        if tid == *pad {
                            continue;
                        }
                        let row = lv.row(i);
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|x| (x - max).exp()).sum();
                        for j in 0..v {
                            let p = (row[j] - max).exp() / denom;
                            let onehot = if j == tid { 1.0 } else { 0.0 };
                            dl.set(i, j, scale * (p - onehot));
                        }
                    }
                    self.accum(*logits, &dl);
                }
            }
            self.nodes[idx].op = op;
        }
        Ok(())
    }
}
