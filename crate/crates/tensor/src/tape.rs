//! Define-by-run recording of matrix operations and their reverse pass.
//!
//! A [`Tape`] is rebuilt for every forward pass. Each operation appends a
//! node holding its output value and the handles of its inputs; [`Tape::backward`]
//! walks the nodes in exact reverse order and accumulates adjoints.

use std::rc::Rc;
use std::sync::atomic::{AtomicU32, Ordering};

use crate::error::{Result, TensorError};
use crate::matrix::{gemm, Matrix};

static NEXT_TAPE: AtomicU32 = AtomicU32::new(1);

/// Handle to a matrix recorded on a particular tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    index: u32,
    tape: u32,
}

impl Var {
    pub fn index(self) -> usize {
        self.index as usize
    }
}

/// One `(target row, source row, source block, coefficient)` term of a
/// [`Tape::block_mix`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixTerm {
    pub dst: u32,
    pub src: u32,
    pub block: u32,
    pub coef: f64,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MulCol(Var, Var),
    LeakyRelu(Var, f64),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Sum(Var),
    SumCols(Var),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherRows(Var, Rc<[usize]>),
    ScatterAddRows(Var, Rc<[usize]>),
    PickCols(Var, Rc<[usize]>),
    SegmentSoftmax(Var, Rc<[usize]>),
    SegmentMax(Var, Vec<usize>),
    BlockMix(Var, Rc<[MixTerm]>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of primitive operations.
#[derive(Debug)]
pub struct Tape {
    id: u32,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn owns(&self, v: Var) -> bool {
        v.tape == self.id && v.index() < self.nodes.len()
    }

    fn node(&self, v: Var) -> &Node {
        assert!(
            v.tape == self.id,
            "variable from tape {} used on tape {}",
            v.tape,
            self.id
        );
        &self.nodes[v.index()]
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.node(v).value.shape()
    }

    /// Value of a 1×1 variable.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.as_slice()[0]
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        let index = self.nodes.len() as u32;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            index,
            tape: self.id,
        }
    }

    fn grad_of(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.node(v).requires_grad)
    }

    /// Trainable input: receives a gradient on [`Tape::backward`].
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::Shape {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        self.same_shape(op, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va
            .as_slice()
            .iter()
            .zip(vb.as_slice())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Matrix::from_vec(va.rows(), va.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with("add", a, b, |x, y| x + y)?;
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with("sub", a, b, |x, y| x - y)?;
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_with("mul", a, b, |x, y| x * y)?;
        let rg = self.grad_of(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        let rg = self.grad_of(&[a]);
        self.push(value, Op::Scale(a, factor), rg)
    }

    /// Adds a 1×c row to every row of an n×c matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr.0 != 1 || sr.1 != sa.1 {
            return Err(TensorError::Shape {
                op: "add_row",
                left: sa,
                right: sr,
            });
        }
        let mut value = self.value(a).clone();
        let r = self.value(row).as_slice().to_vec();
        for i in 0..sa.0 {
            for (v, b) in value.row_mut(i).iter_mut().zip(&r) {
                *v += b;
            }
        }
        let rg = self.grad_of(&[a, row]);
        Ok(self.push(value, Op::AddRow(a, row), rg))
    }

    /// Scales row `r` of an n×c matrix by `s[r]`, where `s` is n×1.
    pub fn mul_col(&mut self, a: Var, s: Var) -> Result<Var> {
        let (sa, ss) = (self.shape(a), self.shape(s));
        if ss != (sa.0, 1) {
            return Err(TensorError::Shape {
                op: "mul_col",
                left: sa,
                right: ss,
            });
        }
        let mut value = self.value(a).clone();
        let sv = self.value(s).as_slice().to_vec();
        for (i, f) in sv.iter().enumerate() {
            value.row_mut(i).iter_mut().for_each(|v| *v *= f);
        }
        let rg = self.grad_of(&[a, s]);
        Ok(self.push(value, Op::MulCol(a, s), rg))
    }

    /// `max(x, slope * x)` elementwise; the subgradient at 0 is `slope`.
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let rg = self.grad_of(&[a]);
        self.push(value, Op::LeakyRelu(a, slope), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.cols() == 0 {
            return Err(TensorError::Invalid {
                op: "softmax_rows",
                detail: "zero columns".into(),
            });
        }
        if !x.all_finite() {
            return Err(TensorError::NonFinite { op: "softmax_rows" });
        }
        let mut value = x.clone();
        for i in 0..value.rows() {
            let row = value.row_mut(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        let rg = self.grad_of(&[a]);
        Ok(self.push(value, Op::SoftmaxRows(a), rg))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.cols() == 0 {
            return Err(TensorError::Invalid {
                op: "log_softmax_rows",
                detail: "zero columns".into(),
            });
        }
        if !x.all_finite() {
            return Err(TensorError::NonFinite {
                op: "log_softmax_rows",
            });
        }
        let mut value = x.clone();
        for i in 0..value.rows() {
            let row = value.row_mut(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let rg = self.grad_of(&[a]);
        Ok(self.push(value, Op::LogSoftmaxRows(a), rg))
    }

    /// Sum of all entries as a 1×1 matrix.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let rg = self.grad_of(&[a]);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Row sums: n×c → n×1.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let sums: Vec<f64> = (0..x.rows()).map(|i| x.row(i).iter().sum()).collect();
        let value = Matrix::column_vector(&sums);
        let rg = self.grad_of(&[a]);
        self.push(value, Op::SumCols(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(TensorError::Invalid {
            op: "concat_cols",
            detail: "no inputs".into(),
        })?;
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.0 != rows {
                return Err(TensorError::Shape {
                    op: "concat_cols",
                    left: self.shape(first),
                    right: s,
                });
            }
            cols += s.1;
        }
        let mut value = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let src = self.value(p);
            let w = src.cols();
            for i in 0..rows {
                value.row_mut(i)[offset..offset + w].copy_from_slice(src.row(i));
            }
            offset += w;
        }
        let rg = self.grad_of(parts);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if start + len > x.rows() {
            return Err(TensorError::Invalid {
                op: "slice_rows",
                detail: format!("rows {start}..{} out of {}", start + len, x.rows()),
            });
        }
        let c = x.cols();
        let value = Matrix::from_vec(len, c, x.as_slice()[start * c..(start + len) * c].to_vec())?;
        let rg = self.grad_of(&[a]);
        Ok(self.push(value, Op::SliceRows(a, start), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if start + len > x.cols() {
            return Err(TensorError::Invalid {
                op: "slice_cols",
                detail: format!("cols {start}..{} out of {}", start + len, x.cols()),
            });
        }
        let mut value = Matrix::zeros(x.rows(), len);
        for i in 0..x.rows() {
            value.row_mut(i).copy_from_slice(&x.row(i)[start..start + len]);
        }
        let rg = self.grad_of(&[a]);
        Ok(self.push(value, Op::SliceCols(a, start), rg))
    }

    /// `out[k] = a[index[k]]`.
    pub fn gather_rows(&mut self, a: Var, index: Rc<[usize]>) -> Result<Var> {
        let x = self.value(a);
        let mut value = Matrix::zeros(index.len(), x.cols());
        for (k, &src) in index.iter().enumerate() {
            if src >= x.rows() {
                return Err(TensorError::Invalid {
                    op: "gather_rows",
                    detail: format!("row {src} out of {}", x.rows()),
                });
            }
            value.row_mut(k).copy_from_slice(x.row(src));
        }
        let rg = self.grad_of(&[a]);
        Ok(self.push(value, Op::GatherRows(a, index), rg))
    }

    /// `out[index[k]] += a[k]` into an `rows`×c zero matrix.
    pub fn scatter_add_rows(&mut self, a: Var, index: Rc<[usize]>, rows: usize) -> Result<Var> {
        let x = self.value(a);
        if index.len() != x.rows() {
            return Err(TensorError::Invalid {
                op: "scatter_add_rows",
                detail: format!("{} indices for {} rows", index.len(), x.rows()),
            });
        }
        let mut value = Matrix::zeros(rows, x.cols());
        for (k, &dst) in index.iter().enumerate() {
            if dst >= rows {
                return Err(TensorError::Invalid {
                    op: "scatter_add_rows",
                    detail: format!("row {dst} out of {rows}"),
                });
            }
            for (o, v) in value.row_mut(dst).iter_mut().zip(x.row(k)) {
                *o += v;
            }
        }
        let rg = self.grad_of(&[a]);
        Ok(self.push(value, Op::ScatterAddRows(a, index), rg))
    }

    /// `out[r] = a[r, cols[r]]` as an n×1 column.
    pub fn pick_cols(&mut self, a: Var, cols: Rc<[usize]>) -> Result<Var> {
        let x = self.value(a);
        if cols.len() != x.rows() || cols.iter().any(|&c| c >= x.cols()) {
            return Err(TensorError::Invalid {
                op: "pick_cols",
                detail: format!("{} column picks for a {:?} matrix", cols.len(), x.shape()),
            });
        }
        let picked: Vec<f64> = cols.iter().enumerate().map(|(r, &c)| x.get(r, c)).collect();
        let value = Matrix::column_vector(&picked);
        let rg = self.grad_of(&[a]);
        Ok(self.push(value, Op::PickCols(a, cols), rg))
    }

    /// Softmax of an E×1 column within groups sharing the same segment id.
    pub fn segment_softmax(&mut self, a: Var, segment: Rc<[usize]>, segments: usize) -> Result<Var> {
        let x = self.value(a);
        if x.cols() != 1 || segment.len() != x.rows() {
            return Err(TensorError::Invalid {
                op: "segment_softmax",
                detail: format!("{} segment ids for a {:?} matrix", segment.len(), x.shape()),
            });
        }
        if !x.all_finite() {
            return Err(TensorError::NonFinite {
                op: "segment_softmax",
            });
        }
        let mut max = vec![f64::NEG_INFINITY; segments];
        for (&s, &v) in segment.iter().zip(x.as_slice()) {
            if s >= segments {
                return Err(TensorError::Invalid {
                    op: "segment_softmax",
                    detail: format!("segment {s} out of {segments}"),
                });
            }
            max[s] = max[s].max(v);
        }
        let mut total = vec![0.0; segments];
        let mut out: Vec<f64> = segment
            .iter()
            .zip(x.as_slice())
            .map(|(&s, &v)| {
                let e = (v - max[s]).exp();
                total[s] += e;
                e
            })
            .collect();
        for (o, &s) in out.iter_mut().zip(segment.iter()) {
            *o /= total[s];
        }
        let value = Matrix::column_vector(&out);
        let rg = self.grad_of(&[a]);
        Ok(self.push(value, Op::SegmentSoftmax(a, segment), rg))
    }

    /// Columnwise maximum over each contiguous block of rows; `offsets`
    /// holds `segments + 1` row boundaries.
    pub fn segment_max(&mut self, a: Var, offsets: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if offsets.len() < 2 || *offsets.last().unwrap() != x.rows() || offsets[0] != 0 {
            return Err(TensorError::Invalid {
                op: "segment_max",
                detail: format!("offsets do not cover {} rows", x.rows()),
            });
        }
        let c = x.cols();
        let segments = offsets.len() - 1;
        let mut value = Matrix::zeros(segments, c);
        let mut argmax = vec![0usize; segments * c];
        for g in 0..segments {
            let (lo, hi) = (offsets[g], offsets[g + 1]);
            if lo >= hi {
                return Err(TensorError::Invalid {
                    op: "segment_max",
                    detail: format!("segment {g} is empty"),
                });
            }
            let out = value.row_mut(g);
            out.copy_from_slice(x.row(lo));
            argmax[g * c..(g + 1) * c].iter_mut().for_each(|v| *v = lo);
            for r in lo + 1..hi {
                for (j, &v) in x.row(r).iter().enumerate() {
                    if v > out[j] {
                        out[j] = v;
                        argmax[g * c + j] = r;
                    }
                }
            }
        }
        let rg = self.grad_of(&[a]);
        Ok(self.push(value, Op::SegmentMax(a, argmax), rg))
    }

    /// Sparse block mixing: with `a` of shape n×(k·width),
    /// `out[t.dst] += t.coef * a[t.src, t.block·width .. (t.block+1)·width]`
    /// for every term, into a `rows`×width zero matrix.
    pub fn block_mix(&mut self, a: Var, terms: Rc<[MixTerm]>, width: usize, rows: usize) -> Result<Var> {
        let x = self.value(a);
        if width == 0 || x.cols() % width != 0 {
            return Err(TensorError::Invalid {
                op: "block_mix",
                detail: format!("{} columns are not blocks of {width}", x.cols()),
            });
        }
        let blocks = x.cols() / width;
        let mut value = Matrix::zeros(rows, width);
        for t in terms.iter() {
            let (dst, src, block) = (t.dst as usize, t.src as usize, t.block as usize);
            if dst >= rows || src >= x.rows() || block >= blocks {
                return Err(TensorError::Invalid {
                    op: "block_mix",
                    detail: format!("term {t:?} out of range"),
                });
            }
            let from = &x.row(src)[block * width..(block + 1) * width];
            for (o, v) in value.row_mut(dst).iter_mut().zip(from) {
                *o += t.coef * v;
            }
        }
        let rg = self.grad_of(&[a]);
        Ok(self.push(value, Op::BlockMix(a, terms), rg))
    }

    /// Reverse pass from a 1×1 `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.owns(loss) {
            return Err(TensorError::ForeignVar);
        }
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(TensorError::NotScalar(shape));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.index() + 1];
        grads[loss.index()] = Some(Matrix::scalar(1.0));
        for i in (0..=loss.index()).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                if self.node(*a).requires_grad {
                    let (slot, beta) = slot(grads, *a, m, k);
                    // dA = dC · Bᵀ
                    gemm(
                        m,
                        n,
                        k,
                        1.0,
                        (g.as_slice(), n as isize, 1),
                        (vb.as_slice(), 1, n as isize),
                        beta,
                        slot.as_mut_slice(),
                    );
                }
                if self.node(*b).requires_grad {
                    let (slot, beta) = slot(grads, *b, k, n);
                    // dB = Aᵀ · dC
                    gemm(
                        k,
                        m,
                        n,
                        1.0,
                        (va.as_slice(), 1, k as isize),
                        (g.as_slice(), n as isize, 1),
                        beta,
                        slot.as_mut_slice(),
                    );
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g, 1.0);
                self.accumulate(grads, *b, g, 1.0);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g, 1.0);
                self.accumulate(grads, *b, g, -1.0);
            }
            Op::Mul(a, b) => {
                if self.node(*a).requires_grad {
                    let d = hadamard(g, self.value(*b));
                    self.accumulate(grads, *a, &d, 1.0);
                }
                if self.node(*b).requires_grad {
                    let d = hadamard(g, self.value(*a));
                    self.accumulate(grads, *b, &d, 1.0);
                }
            }
            Op::Scale(a, f) => self.accumulate(grads, *a, g, *f),
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g, 1.0);
                if self.node(*row).requires_grad {
                    let mut d = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (o, v) in d.as_mut_slice().iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *row, &d, 1.0);
                }
            }
            Op::MulCol(a, s) => {
                let sv = self.value(*s);
                if self.node(*a).requires_grad {
                    let mut d = g.clone();
                    for i in 0..d.rows() {
                        let f = sv.as_slice()[i];
                        d.row_mut(i).iter_mut().for_each(|v| *v *= f);
                    }
                    self.accumulate(grads, *a, &d, 1.0);
                }
                if self.node(*s).requires_grad {
                    let va = self.value(*a);
                    let d: Vec<f64> = (0..g.rows())
                        .map(|i| g.row(i).iter().zip(va.row(i)).map(|(x, y)| x * y).sum())
                        .collect();
                    self.accumulate(grads, *s, &Matrix::column_vector(&d), 1.0);
                }
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                let data = g
                    .as_slice()
                    .iter()
                    .zip(x.as_slice())
                    .map(|(&gv, &xv)| if xv > 0.0 { gv } else { slope * gv })
                    .collect();
                let d = Matrix::from_vec(g.rows(), g.cols(), data).expect("shape");
                self.accumulate(grads, *a, &d, 1.0);
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let dot: f64 = y.row(i).iter().zip(g.row(i)).map(|(p, q)| p * q).sum();
                    for ((o, &p), &q) in d.row_mut(i).iter_mut().zip(y.row(i)).zip(g.row(i)) {
                        *o = p * (q - dot);
                    }
                }
                self.accumulate(grads, *a, &d, 1.0);
            }
            Op::LogSoftmaxRows(a) => {
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let total: f64 = g.row(i).iter().sum();
                    for ((o, &ly), &q) in d.row_mut(i).iter_mut().zip(y.row(i)).zip(g.row(i)) {
                        *o = q - ly.exp() * total;
                    }
                }
                self.accumulate(grads, *a, &d, 1.0);
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                let d = Matrix::filled(r, c, g.as_slice()[0]);
                self.accumulate(grads, *a, &d, 1.0);
            }
            Op::SumCols(a) => {
                let (r, c) = self.shape(*a);
                let mut d = Matrix::zeros(r, c);
                for i in 0..r {
                    let v = g.as_slice()[i];
                    d.row_mut(i).iter_mut().for_each(|x| *x = v);
                }
                self.accumulate(grads, *a, &d, 1.0);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (r, w) = self.shape(p);
                    if self.node(p).requires_grad {
                        let mut d = Matrix::zeros(r, w);
                        for i in 0..r {
                            d.row_mut(i).copy_from_slice(&g.row(i)[offset..offset + w]);
                        }
                        self.accumulate(grads, p, &d, 1.0);
                    }
                    offset += w;
                }
            }
            Op::SliceRows(a, start) => {
                let (r, c) = self.shape(*a);
                let (slot, _) = slot(grads, *a, r, c);
                let dst = &mut slot.as_mut_slice()[start * c..(start + g.rows()) * c];
                for (o, v) in dst.iter_mut().zip(g.as_slice()) {
                    *o += v;
                }
            }
            Op::SliceCols(a, start) => {
                let (r, c) = self.shape(*a);
                let (slot, _) = slot(grads, *a, r, c);
                for i in 0..r {
                    let dst = &mut slot.row_mut(i)[*start..start + g.cols()];
                    for (o, v) in dst.iter_mut().zip(g.row(i)) {
                        *o += v;
                    }
                }
            }
            Op::GatherRows(a, index) => {
                let (r, c) = self.shape(*a);
                let (slot, _) = slot(grads, *a, r, c);
                for (k, &src) in index.iter().enumerate() {
                    for (o, v) in slot.row_mut(src).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
            }
            Op::ScatterAddRows(a, index) => {
                let (r, c) = self.shape(*a);
                let (slot, _) = slot(grads, *a, r, c);
                for (k, &dst) in index.iter().enumerate() {
                    for (o, v) in slot.row_mut(k).iter_mut().zip(g.row(dst)) {
                        *o += v;
                    }
                }
            }
            Op::PickCols(a, cols) => {
                let (r, c) = self.shape(*a);
                let (slot, _) = slot(grads, *a, r, c);
                for (i, &col) in cols.iter().enumerate() {
                    let v = slot.get(i, col) + g.as_slice()[i];
                    slot.set(i, col, v);
                }
            }
            Op::SegmentSoftmax(a, segment) => {
                let y = node.value.as_slice();
                let segments = segment.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; segments];
                for ((&s, &p), &q) in segment.iter().zip(y).zip(g.as_slice()) {
                    dot[s] += p * q;
                }
                let d: Vec<f64> = segment
                    .iter()
                    .zip(y)
                    .zip(g.as_slice())
                    .map(|((&s, &p), &q)| p * (q - dot[s]))
                    .collect();
                self.accumulate(grads, *a, &Matrix::column_vector(&d), 1.0);
            }
            Op::SegmentMax(a, argmax) => {
                let (r, c) = self.shape(*a);
                let (slot, _) = slot(grads, *a, r, c);
                for (k, &src) in argmax.iter().enumerate() {
                    let (gr, j) = (k / c, k % c);
                    let v = slot.get(src, j) + g.get(gr, j);
                    slot.set(src, j, v);
                }
            }
            Op::BlockMix(a, terms) => {
                let (r, c) = self.shape(*a);
                let width = g.cols();
                let (slot, _) = slot(grads, *a, r, c);
                for t in terms.iter() {
                    let block = t.block as usize;
                    let dst = &mut slot.row_mut(t.src as usize)[block * width..(block + 1) * width];
                    for (o, v) in dst.iter_mut().zip(g.row(t.dst as usize)) {
                        *o += t.coef * v;
                    }
                }
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, d: &Matrix, factor: f64) {
        if !self.node(v).requires_grad {
            return;
        }
        match &mut grads[v.index()] {
            Some(existing) => existing.add_scaled(d, factor),
            empty @ None => {
                *empty = Some(if factor == 1.0 {
                    d.clone()
                } else {
                    d.map(|x| x * factor)
                })
            }
        }
    }
}

/// Gradient slot for `v`, created zeroed when absent. The returned beta is
/// 0 for a fresh slot and 1 for an existing one.
fn slot(grads: &mut [Option<Matrix>], v: Var, rows: usize, cols: usize) -> (&mut Matrix, f64) {
    let entry = &mut grads[v.index()];
    let beta = if entry.is_some() { 1.0 } else { 0.0 };
    (entry.get_or_insert_with(|| Matrix::zeros(rows, cols)), beta)
}

fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("shape")
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    tape: u32,
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a leaf. Leaves the loss does
    /// not reach get an all-zero matrix of the leaf's shape.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Result<Matrix> {
        if v.tape != self.tape || !tape.owns(v) || tape.id != self.tape {
            return Err(TensorError::ForeignVar);
        }
        match self.grads.get(v.index()).and_then(Option::as_ref) {
            Some(g) => Ok(g.clone()),
            None => {
                let (r, c) = tape.shape(v);
                Ok(Matrix::zeros(r, c))
            }
        }
    }

    /// Moves the gradient out, avoiding a copy.
    pub fn take(&mut self, tape: &Tape, v: Var) -> Result<Matrix> {
        if v.tape != self.tape || !tape.owns(v) || tape.id != self.tape {
            return Err(TensorError::ForeignVar);
        }
        match self.grads.get_mut(v.index()).and_then(Option::take) {
            Some(g) => Ok(g),
            None => {
                let (r, c) = tape.shape(v);
                Ok(Matrix::zeros(r, c))
            }
        }
    }
}
