//! Dense tensors and a recording tape for reverse-mode gradients.
//!
//! A [`Tape`] records every operation applied to its [`Var`] handles. Calling
//! [`Tape::backward`] on a scalar walks the record once in reverse and returns
//! a gradient for every parameter of the [`ParamStore`].
//!
//! There is no implicit broadcasting. Row- or column-wise expansion goes
//! through [`Tape::expand_cols`] or [`Tape::gather_rows`].

mod gradcheck;
mod suite;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, ParamCheck, GRAD_CHECK_FLOOR};
pub use suite::op_gradient_suite;
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use tensor::{matmul_nt_raw, matmul_raw, matmul_tn_raw};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Index of a learnable tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named learnable tensors. Names are dotted paths whose first segment is
/// the owning component (`fusion.x.0`, `gat.1.head0.w`, ...).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }
}

/// Gradients for every parameter of a store, indexed by [`ParamId`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Tensor::is_finite)
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SegmentSum(Var, Vec<usize>),
    SegmentMean(Var, Vec<usize>, Vec<usize>),
    SegmentSoftmax(Var, Vec<usize>),
    LeakyRelu(Var, f64),
    Elu(Var),
    Exp(Var),
    Ln(Var),
    Softplus(Var),
    Sum(Var),
    Mean(Var),
    ExpandCols(Var),
    ScaleRows(Var, Vec<f64>),
    LogSoftmaxRows(Var),
    Pick(Var, Vec<usize>),
}

/// Append-only record of executed operations.
#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<Tensor>,
    ops: Vec<Op>,
    params: Vec<(Var, ParamId)>,
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<()> {
    if cfg!(debug_assertions) && !t.is_finite() {
        return Err(Error::NonFinite { op });
    }
    Ok(())
}

fn check_segments(op: &'static str, seg: &[usize], rows: usize, n: usize) -> Result<()> {
    if seg.len() != rows {
        return Err(Error::shape(
            op,
            format!("{} segment ids for {rows} rows", seg.len()),
        ));
    }
    if let Some(&bad) = seg.iter().find(|&&s| s >= n) {
        return Err(Error::shape(op, format!("segment id {bad} >= {n}")));
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded operations, leaves included.
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.0].shape()
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        check_finite(op_name, &value)?;
        self.values.push(value);
        self.ops.push(op);
        Ok(Var(self.values.len() - 1))
    }

    fn dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let s = self.shape(v);
        if s.len() != 2 {
            return Err(Error::shape(op, format!("expected a matrix, got {s:?}")));
        }
        Ok((s[0], s[1]))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    /// Records a constant input that receives no gradient slot.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.values.push(value);
        self.ops.push(Op::Leaf);
        Var(self.values.len() - 1)
    }

    /// Records the current value of a parameter.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.constant(store.get(id).clone());
        self.params.push((v, id));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a, "matmul")?;
        let (k2, n) = self.dims(b, "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("{m}x{k} * {k2}x{n}")));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push("matmul", Tensor::matrix(m, n, out)?, Op::MatMul(a, b))
    }

    /// `a * b^T`; weight matrices are stored `out x in` and applied this way.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a, "matmul_nt")?;
        let (n, k2) = self.dims(b, "matmul_nt")?;
        if k != k2 {
            return Err(Error::shape("matmul_nt", format!("{m}x{k} * ({n}x{k2})^T")));
        }
        let out = matmul_nt_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push("matmul_nt", Tensor::matrix(m, n, out)?, Op::MatMulNt(a, b))
    }

    fn zip_with(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(a, b, name)?;
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(va.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "add", |x, y| x + y)?;
        self.push("add", t, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "sub", |x, y| x - y)?;
        self.push("sub", t, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_with(a, b, "mul", |x, y| x * y)?;
        self.push("mul", t, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let t = self.value(a).map(|x| x * factor);
        self.push("scale", t, Op::Scale(a, factor))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let t = self.value(a).map(|x| x + c);
        self.push("add_scalar", t, Op::AddScalar(a))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat_cols", "no inputs"));
        };
        let (rows, _) = self.dims(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims(p, "concat_cols")?;
            if r != rows {
                return Err(Error::shape("concat_cols", format!("{r} rows vs {rows}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        self.push(
            "concat_cols",
            Tensor::matrix(rows, total, data)?,
            Op::ConcatCols(parts.to_vec()),
        )
    }

    /// Vertical stacking of matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat_rows", "no inputs"));
        };
        let (_, cols) = self.dims(first, "concat_rows")?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = self.dims(p, "concat_rows")?;
            if c != cols {
                return Err(Error::shape("concat_rows", format!("{c} columns vs {cols}")));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        self.push(
            "concat_rows",
            Tensor::matrix(rows, cols, data)?,
            Op::ConcatRows(parts.to_vec()),
        )
    }

    /// `out[i] = a[index[i]]`.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let (rows, cols) = self.dims(a, "gather_rows")?;
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(Error::shape("gather_rows", format!("row {bad} >= {rows}")));
        }
        let va = self.value(a);
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index {
            data.extend_from_slice(va.row(i));
        }
        self.push(
            "gather_rows",
            Tensor::matrix(index.len(), cols, data)?,
            Op::GatherRows(a, index.to_vec()),
        )
    }

    /// Sums rows sharing a segment id; empty segments yield zero rows.
    pub fn segment_sum(&mut self, a: Var, segments: &[usize], num_segments: usize) -> Result<Var> {
        let (rows, cols) = self.dims(a, "segment_sum")?;
        check_segments("segment_sum", segments, rows, num_segments)?;
        let mut out = Tensor::zeros(&[num_segments, cols]);
        let va = &self.values[a.0];
        for (i, &s) in segments.iter().enumerate() {
            for (o, x) in out.row_mut(s).iter_mut().zip(va.row(i)) {
                *o += x;
            }
        }
        self.push("segment_sum", out, Op::SegmentSum(a, segments.to_vec()))
    }

    /// Averages rows sharing a segment id. Every segment must be non-empty.
    pub fn segment_mean(&mut self, a: Var, segments: &[usize], num_segments: usize) -> Result<Var> {
        let (rows, cols) = self.dims(a, "segment_mean")?;
        check_segments("segment_mean", segments, rows, num_segments)?;
        let mut counts = vec![0usize; num_segments];
        for &s in segments {
            counts[s] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptySegment {
                op: "segment_mean",
                segment: empty,
            });
        }
        let mut out = Tensor::zeros(&[num_segments, cols]);
        let va = &self.values[a.0];
        for (i, &s) in segments.iter().enumerate() {
            let inv = 1.0 / counts[s] as f64;
            for (o, x) in out.row_mut(s).iter_mut().zip(va.row(i)) {
                *o += x * inv;
            }
        }
        self.push(
            "segment_mean",
            out,
            Op::SegmentMean(a, segments.to_vec(), counts),
        )
    }

    /// Column-wise softmax over the rows of each segment.
    pub fn segment_softmax(&mut self, a: Var, segments: &[usize], num_segments: usize) -> Result<Var> {
        let (rows, cols) = self.dims(a, "segment_softmax")?;
        check_segments("segment_softmax", segments, rows, num_segments)?;
        let va = &self.values[a.0];
        let mut max = vec![f64::NEG_INFINITY; num_segments * cols];
        for (i, &s) in segments.iter().enumerate() {
            for (c, &x) in va.row(i).iter().enumerate() {
                let m = &mut max[s * cols + c];
                *m = m.max(x);
            }
        }
        let mut out = Tensor::zeros(&[rows, cols]);
        let mut denom = vec![0.0; num_segments * cols];
        for (i, &s) in segments.iter().enumerate() {
            for (c, &x) in va.row(i).iter().enumerate() {
                let e = (x - max[s * cols + c]).exp();
                out.set(i, c, e);
                denom[s * cols + c] += e;
            }
        }
        for (i, &s) in segments.iter().enumerate() {
            for (c, o) in out.row_mut(i).iter_mut().enumerate() {
                *o /= denom[s * cols + c];
            }
        }
        self.push(
            "segment_softmax",
            out,
            Op::SegmentSoftmax(a, segments.to_vec()),
        )
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let t = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push("leaky_relu", t, Op::LeakyRelu(a, slope))
    }

    /// ELU with unit scale.
    pub fn elu(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.push("elu", t, Op::Elu(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(f64::exp);
        self.push("exp", t, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&x| x <= 0.0) {
            return Err(Error::NonFinite { op: "ln" });
        }
        let t = self.value(a).map(f64::ln);
        self.push("ln", t, Op::Ln(a))
    }

    /// `ln(1 + e^x)`, computed stably.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(softplus);
        self.push("softplus", t, Op::Softplus(a))
    }

    /// Sum of all entries as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.is_empty() {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let m = va.data().iter().sum::<f64>() / va.len() as f64;
        self.push("mean", Tensor::scalar(m), Op::Mean(a))
    }

    /// Repeats a single column `n` times.
    pub fn expand_cols(&mut self, a: Var, n: usize) -> Result<Var> {
        let (rows, cols) = self.dims(a, "expand_cols")?;
        if cols != 1 {
            return Err(Error::shape("expand_cols", format!("expected one column, got {cols}")));
        }
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .flat_map(|&x| std::iter::repeat_n(x, n))
            .collect();
        self.push("expand_cols", Tensor::matrix(rows, n, data)?, Op::ExpandCols(a))
    }

    /// Multiplies row `i` by the constant `factors[i]`.
    pub fn scale_rows(&mut self, a: Var, factors: &[f64]) -> Result<Var> {
        let (rows, _) = self.dims(a, "scale_rows")?;
        if factors.len() != rows {
            return Err(Error::shape(
                "scale_rows",
                format!("{} factors for {rows} rows", factors.len()),
            ));
        }
        let mut t = self.value(a).clone();
        for (i, &f) in factors.iter().enumerate() {
            for x in t.row_mut(i) {
                *x *= f;
            }
        }
        self.push("scale_rows", t, Op::ScaleRows(a, factors.to_vec()))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (rows, _) = self.dims(a, "log_softmax_rows")?;
        let mut t = self.value(a).clone();
        for i in 0..rows {
            let row = t.row_mut(i);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            for x in row {
                *x -= lse;
            }
        }
        self.push("log_softmax_rows", t, Op::LogSoftmaxRows(a))
    }

    /// `out[i] = a[i, columns[i]]`, as a column.
    pub fn pick(&mut self, a: Var, columns: &[usize]) -> Result<Var> {
        let (rows, cols) = self.dims(a, "pick")?;
        if columns.len() != rows {
            return Err(Error::shape("pick", format!("{} picks for {rows} rows", columns.len())));
        }
        if let Some(&bad) = columns.iter().find(|&&c| c >= cols) {
            return Err(Error::shape("pick", format!("column {bad} >= {cols}")));
        }
        let va = self.value(a);
        let data = columns.iter().enumerate().map(|(i, &c)| va.get(i, c)).collect();
        self.push("pick", Tensor::matrix(rows, 1, data)?, Op::Pick(a, columns.to_vec()))
    }

    /// Reverse pass from a scalar `loss`. Parameters of `store` that were
    /// never recorded, or that `loss` does not depend on, get zero gradients.
    pub fn backward(&self, loss: Var, store: &ParamStore) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(shape, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_op(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let mut out: Vec<Tensor> = store.values.iter().map(|v| Tensor::zeros(v.shape())).collect();
        for &(var, id) in &self.params {
            if let Some(Some(g)) = grads.get(var.0) {
                out[id.0].add_assign(g);
            }
        }
        Ok(Gradients { grads: out })
    }

    fn backprop_op(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, delta: Tensor| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        };
        let out = &self.values[idx];
        match &self.ops[idx] {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                acc(*a, Tensor::matrix(m, k, matmul_nt_raw(g.data(), vb.data(), m, n, k)).unwrap());
                acc(*b, Tensor::matrix(k, n, matmul_tn_raw(va.data(), g.data(), m, k, n)).unwrap());
            }
            Op::MatMulNt(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.rows());
                acc(*a, Tensor::matrix(m, k, matmul_raw(g.data(), vb.data(), m, n, k)).unwrap());
                acc(*b, Tensor::matrix(n, k, matmul_tn_raw(g.data(), va.data(), m, n, k)).unwrap());
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                acc(*a, zip(g, vb, |x, y| x * y));
                acc(*b, zip(g, va, |x, y| x * y));
            }
            Op::Scale(a, f) => acc(*a, g.map(|x| x * f)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    let mut d = Vec::with_capacity(rows * w);
                    for i in 0..rows {
                        d.extend_from_slice(&g.row(i)[offset..offset + w]);
                    }
                    acc(*p, Tensor::matrix(rows, w, d).unwrap());
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    let shape = self.value(*p).shape().to_vec();
                    acc(*p, Tensor::new(shape, g.data()[offset..offset + len].to_vec()).unwrap());
                    offset += len;
                }
            }
            Op::GatherRows(a, index) => {
                let mut d = Tensor::zeros(self.value(*a).shape());
                for (i, &src) in index.iter().enumerate() {
                    for (o, x) in d.row_mut(src).iter_mut().zip(g.row(i)) {
                        *o += x;
                    }
                }
                acc(*a, d);
            }
            Op::SegmentSum(a, seg) => {
                let mut d = Tensor::zeros(self.value(*a).shape());
                for (i, &s) in seg.iter().enumerate() {
                    d.row_mut(i).copy_from_slice(g.row(s));
                }
                acc(*a, d);
            }
            Op::SegmentMean(a, seg, counts) => {
                let mut d = Tensor::zeros(self.value(*a).shape());
                for (i, &s) in seg.iter().enumerate() {
                    let inv = 1.0 / counts[s] as f64;
                    for (o, x) in d.row_mut(i).iter_mut().zip(g.row(s)) {
                        *o = x * inv;
                    }
                }
                acc(*a, d);
            }
            Op::SegmentSoftmax(a, seg) => {
                // dx = y * (g - sum_seg(g * y))
                let cols = out.cols();
                let nseg = seg.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; nseg * cols];
                for (i, &s) in seg.iter().enumerate() {
                    for c in 0..cols {
                        dot[s * cols + c] += g.get(i, c) * out.get(i, c);
                    }
                }
                let mut d = Tensor::zeros(out.shape());
                for (i, &s) in seg.iter().enumerate() {
                    for c in 0..cols {
                        d.set(i, c, out.get(i, c) * (g.get(i, c) - dot[s * cols + c]));
                    }
                }
                acc(*a, d);
            }
            Op::LeakyRelu(a, slope) => {
                let va = self.value(*a);
                acc(*a, zip(g, va, |gx, x| if x > 0.0 { gx } else { gx * slope }));
            }
            Op::Elu(a) => {
                let va = self.value(*a);
                acc(*a, zip(g, va, |gx, x| if x > 0.0 { gx } else { gx * x.exp() }));
            }
            Op::Exp(a) => acc(*a, zip(g, out, |gx, y| gx * y)),
            Op::Ln(a) => acc(*a, zip(g, self.value(*a), |gx, x| gx / x)),
            Op::Softplus(a) => acc(*a, zip(g, self.value(*a), |gx, x| gx * sigmoid(x))),
            Op::Sum(a) => acc(*a, Tensor::full(self.value(*a).shape(), g.item())),
            Op::Mean(a) => {
                let va = self.value(*a);
                acc(*a, Tensor::full(va.shape(), g.item() / va.len() as f64));
            }
            Op::ExpandCols(a) => {
                let rows = g.rows();
                let data = (0..rows).map(|i| g.row(i).iter().sum()).collect();
                acc(*a, Tensor::matrix(rows, 1, data).unwrap());
            }
            Op::ScaleRows(a, factors) => {
                let mut d = g.clone();
                for (i, &f) in factors.iter().enumerate() {
                    for x in d.row_mut(i) {
                        *x *= f;
                    }
                }
                acc(*a, d);
            }
            Op::LogSoftmaxRows(a) => {
                // dx = g - softmax * rowsum(g)
                let mut d = g.clone();
                for i in 0..g.rows() {
                    let total: f64 = g.row(i).iter().sum();
                    for (dx, y) in d.row_mut(i).iter_mut().zip(out.row(i)) {
                        *dx -= y.exp() * total;
                    }
                }
                acc(*a, d);
            }
            Op::Pick(a, columns) => {
                let mut d = Tensor::zeros(self.value(*a).shape());
                for (i, &c) in columns.iter().enumerate() {
                    d.set(i, c, g.get(i, 0));
                }
                acc(*a, d);
            }
        }
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).unwrap()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
