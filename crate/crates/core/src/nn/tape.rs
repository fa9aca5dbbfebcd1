//! Reverse-mode automatic differentiation over dense 2-D arrays.
//!
//! A [`Tape`] records every operation of one forward pass. Values live on the
//! tape; a [`Var`] is an index into it. Only nodes that depend on a parameter
//! carry gradients, so large constant inputs cost nothing in the backward pass.

use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2, Axis};

use super::params::{ParamId, ParamStore};
use crate::error::{CcsdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// `tanh` through a single `exp`; absolute error below 1e-15, several times
/// cheaper than the libm routine.
pub fn tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

/// Constant sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMat {
    pub rows: usize,
    pub cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl SparseMat {
    /// Nonzero entries of a dense matrix.
    pub fn from_dense(a: &Array2<f64>) -> Self {
        Self::from_view(a.view())
    }

    pub fn from_view(a: ArrayView2<f64>) -> Self {
        let (rows, cols) = a.dim();
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        let mut push_row = |row: &[f64], indptr: &mut Vec<usize>| {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        };
        match a.as_slice() {
            Some(flat) if cols > 0 => flat.chunks_exact(cols).for_each(|row| push_row(row, &mut indptr)),
            _ => a.rows().into_iter().for_each(|row| push_row(&row.to_vec(), &mut indptr)),
        }
        SparseMat {
            rows,
            cols,
            indptr,
            indices,
            data,
        }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out[[r, self.indices[k]]] = self.data[k];
            }
        }
        out
    }

    /// `self · b`.
    pub fn dot(&self, b: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, b.ncols()));
        for r in 0..self.rows {
            let mut row = out.row_mut(r);
            for k in self.indptr[r]..self.indptr[r + 1] {
                row.scaled_add(self.data[k], &b.row(self.indices[k]));
            }
        }
        out
    }

    /// `selfᵀ · g`.
    pub fn t_dot(&self, g: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.cols, g.ncols()));
        for r in 0..self.rows {
            let gr = g.row(r);
            for k in self.indptr[r]..self.indptr[r + 1] {
                out.row_mut(self.indices[k]).scaled_add(self.data[k], &gr);
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param(ParamId),
    MatMul(Var, Var),
    SparseMatMul(Arc<SparseMat>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    AddConst(Var),
    Scale(Var, f64),
    Tanh(Var),
    Relu(Var),
    Square(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Reshape(Var),
    Transpose(Var),
    Sum(Var),
    RowSum(Var),
    ScaleRows(Var, Var),
    ScaleCols(Var, Var),
    RsqrtSafe(Var),
    ClampMin(Var, f64),
    MaskMul(Var, Array2<f64>),
    GatherRows(Var, Vec<usize>),
    ScatterRows(Var, Vec<usize>),
    Opaque(&'static str),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Parameter gradients produced by [`Tape::backward`], indexed like the store.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

fn accumulate(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
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

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].grad
    }

    fn push(&mut self, value: Array2<f64>, op: Op, grad: bool) -> Var {
        debug_assert!(value.is_standard_layout());
        self.nodes.push(Node { value, op, grad });
        Var(self.nodes.len() - 1)
    }

    fn g(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].grad)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        let value = value.as_standard_layout().into_owned();
        self.push(value, Op::Const, false)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id), true)
    }

    /// A forward-only value computed outside the tape from `inputs`. Backward
    /// fails with an error naming `name` if a gradient must flow through it.
    pub fn opaque(&mut self, name: &'static str, value: Array2<f64>, inputs: &[Var]) -> Var {
        let g = self.g(inputs);
        self.push(value, Op::Opaque(name), g)
    }

    fn shape_err(op: &str, a: &[usize], b: &[usize]) -> CcsdError {
        CcsdError::Shape(format!("{op}: {a:?} vs {b:?}"))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.nrows() {
            return Err(Self::shape_err("matmul", va.shape(), vb.shape()));
        }
        let v = va.dot(vb);
        let g = self.g(&[a, b]);
        Ok(self.push(v, Op::MatMul(a, b), g))
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Self::shape_err(op, self.value(a).shape(), self.value(b).shape()));
        }
        Ok(())
    }

    /// Constant sparse matrix times `b`.
    pub fn sparse_matmul(&mut self, s: &Arc<SparseMat>, b: Var) -> Result<Var> {
        let vb = self.value(b);
        if s.cols != vb.nrows() {
            return Err(Self::shape_err("sparse_matmul", &[s.rows, s.cols], vb.shape()));
        }
        let v = s.dot(vb);
        let g = self.g(&[b]);
        Ok(self.push(v, Op::SparseMatMul(s.clone(), b), g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.value(a) + self.value(b);
        let g = self.g(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), g))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a) - self.value(b);
        let g = self.g(&[a, b]);
        Ok(self.push(v, Op::Sub(a, b), g))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a) * self.value(b);
        let g = self.g(&[a, b]);
        Ok(self.push(v, Op::Mul(a, b), g))
    }

    /// `a + 1·row` with `row` of shape `[1, cols]`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.nrows() != 1 || vr.ncols() != va.ncols() {
            return Err(Self::shape_err("add_row", va.shape(), vr.shape()));
        }
        let v = va + vr;
        let g = self.g(&[a, row]);
        Ok(self.push(v, Op::AddRow(a, row), g))
    }

    pub fn add_const(&mut self, a: Var, c: &Array2<f64>) -> Result<Var> {
        if self.value(a).shape() != c.shape() {
            return Err(Self::shape_err("add_const", self.value(a).shape(), c.shape()));
        }
        let v = self.value(a) + c;
        let g = self.g(&[a]);
        Ok(self.push(v, Op::AddConst(a), g))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        let g = self.g(&[a]);
        self.push(v, Op::Scale(a, c), g)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(tanh);
        let g = self.g(&[a]);
        self.push(v, Op::Tanh(a), g)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        let g = self.g(&[a]);
        self.push(v, Op::Relu(a), g)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        let g = self.g(&[a]);
        self.push(v, Op::Square(a), g)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views)
            .map_err(|e| CcsdError::Shape(format!("concat_cols: {e}")))?
            .as_standard_layout()
            .into_owned();
        let g = self.g(parts);
        Ok(self.push(v, Op::ConcatCols(parts.to_vec()), g))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let va = self.value(a);
        if start > end || end > va.ncols() {
            return Err(CcsdError::Shape(format!("slice_cols {start}..{end} of {:?}", va.shape())));
        }
        let v = va.slice(s![.., start..end]).to_owned();
        let g = self.g(&[a]);
        Ok(self.push(v, Op::SliceCols(a, start), g))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let va = self.value(a);
        if va.len() != rows * cols {
            return Err(Self::shape_err("reshape", va.shape(), &[rows, cols]));
        }
        let v = va.clone().into_shape_with_order((rows, cols)).expect("standard layout");
        let g = self.g(&[a]);
        Ok(self.push(v, Op::Reshape(a), g))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().as_standard_layout().into_owned();
        let g = self.g(&[a]);
        self.push(v, Op::Transpose(a), g)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        let g = self.g(&[a]);
        self.push(v, Op::Sum(a), g)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Row sums as an `[n, 1]` column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let g = self.g(&[a]);
        self.push(v, Op::RowSum(a), g)
    }

    /// `a[i, j] · d[i]` with `d` of shape `[n, 1]`.
    pub fn scale_rows(&mut self, a: Var, d: Var) -> Result<Var> {
        let (va, vd) = (self.value(a), self.value(d));
        if vd.ncols() != 1 || vd.nrows() != va.nrows() {
            return Err(Self::shape_err("scale_rows", va.shape(), vd.shape()));
        }
        let v = va * vd;
        let g = self.g(&[a, d]);
        Ok(self.push(v, Op::ScaleRows(a, d), g))
    }

    /// `a[i, j] · d[j]` with `d` of shape `[1, m]`.
    pub fn scale_cols(&mut self, a: Var, d: Var) -> Result<Var> {
        let (va, vd) = (self.value(a), self.value(d));
        if vd.nrows() != 1 || vd.ncols() != va.ncols() {
            return Err(Self::shape_err("scale_cols", va.shape(), vd.shape()));
        }
        let v = va * vd;
        let g = self.g(&[a, d]);
        Ok(self.push(v, Op::ScaleCols(a, d), g))
    }

    /// `x^(-1/2)` for positive entries and 0 elsewhere.
    pub fn rsqrt_safe(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| if x > 0.0 { 1.0 / x.sqrt() } else { 0.0 });
        let g = self.g(&[a]);
        self.push(v, Op::RsqrtSafe(a), g)
    }

    pub fn clamp_min(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).mapv(|x| x.max(c));
        let g = self.g(&[a]);
        self.push(v, Op::ClampMin(a, c), g)
    }

    /// Elementwise product with a constant mask.
    pub fn mask(&mut self, a: Var, m: &Array2<f64>) -> Result<Var> {
        if self.value(a).shape() != m.shape() {
            return Err(Self::shape_err("mask", self.value(a).shape(), m.shape()));
        }
        let v = self.value(a) * m;
        let g = self.g(&[a]);
        Ok(self.push(v, Op::MaskMul(a, m.clone()), g))
    }

    /// Rows `a[idx[r]]`; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let va = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= va.nrows()) {
            return Err(CcsdError::Shape(format!("gather row {bad} of {}", va.nrows())));
        }
        let v = va.select(Axis(0), idx);
        let g = self.g(&[a]);
        Ok(self.push(v, Op::GatherRows(a, idx.to_vec()), g))
    }

    /// Output with `rows` rows where row `idx[r]` accumulates `a[r]`.
    pub fn scatter_rows(&mut self, a: Var, idx: &[usize], rows: usize) -> Result<Var> {
        let va = self.value(a);
        if idx.len() != va.nrows() || idx.iter().any(|&i| i >= rows) {
            return Err(CcsdError::Shape(format!(
                "scatter of {} rows into {rows} with {} indices",
                va.nrows(),
                idx.len()
            )));
        }
        let mut v = Array2::zeros((rows, va.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            let mut row = v.row_mut(i);
            row += &va.row(r);
        }
        let g = self.g(&[a]);
        Ok(self.push(v, Op::ScatterRows(a, idx.to_vec()), g))
    }

    /// Gradients of the scalar `loss` with respect to every parameter on the tape.
    pub fn backward(&self, loss: Var, num_params: usize) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(CcsdError::Shape(format!("loss must be scalar, got {:?}", lv.shape())));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));
        let mut out = Gradients {
            grads: vec![None; num_params],
        };
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.grad {
                continue;
            }
            let need = |v: Var| self.nodes[v.0].grad;
            match &node.op {
                Op::Const => {}
                Op::Param(id) => {
                    if id.0 >= num_params {
                        return Err(CcsdError::Shape(format!("parameter {} outside store", id.0)));
                    }
                    accumulate(&mut out.grads[id.0], g);
                }
                Op::Opaque(name) => return Err(CcsdError::UnsupportedBackward(name)),
                Op::MatMul(a, b) => {
                    if need(*a) {
                        accumulate(&mut grads[a.0], g.dot(&self.value(*b).t()));
                    }
                    if need(*b) {
                        accumulate(&mut grads[b.0], self.value(*a).t().dot(&g));
                    }
                }
                Op::SparseMatMul(sp, b) => accumulate(&mut grads[b.0], sp.t_dot(&g)),
                Op::Add(a, b) => {
                    if need(*a) {
                        accumulate(&mut grads[a.0], g.clone());
                    }
                    if need(*b) {
                        accumulate(&mut grads[b.0], g);
                    }
                }
                Op::Sub(a, b) => {
                    if need(*b) {
                        accumulate(&mut grads[b.0], -&g);
                    }
                    if need(*a) {
                        accumulate(&mut grads[a.0], g);
                    }
                }
                Op::Mul(a, b) => {
                    if need(*a) {
                        accumulate(&mut grads[a.0], &g * self.value(*b));
                    }
                    if need(*b) {
                        accumulate(&mut grads[b.0], &g * self.value(*a));
                    }
                }
                Op::AddRow(a, r) => {
                    if need(*r) {
                        accumulate(&mut grads[r.0], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if need(*a) {
                        accumulate(&mut grads[a.0], g);
                    }
                }
                Op::AddConst(a) => accumulate(&mut grads[a.0], g),
                Op::Scale(a, c) => accumulate(&mut grads[a.0], g * *c),
                Op::Tanh(a) => {
                    let y = &node.value;
                    let mut d = g;
                    d.zip_mut_with(y, |gi, &yi| *gi *= 1.0 - yi * yi);
                    accumulate(&mut grads[a.0], d);
                }
                Op::Relu(a) => {
                    let mut d = g;
                    d.zip_mut_with(self.value(*a), |gi, &xi| {
                        if xi <= 0.0 {
                            *gi = 0.0
                        }
                    });
                    accumulate(&mut grads[a.0], d);
                }
                Op::Square(a) => {
                    let mut d = g;
                    d.zip_mut_with(self.value(*a), |gi, &xi| *gi *= 2.0 * xi);
                    accumulate(&mut grads[a.0], d);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        if need(*p) {
                            accumulate(&mut grads[p.0], g.slice(s![.., start..start + w]).to_owned());
                        }
                        start += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let va = self.value(*a);
                    let mut d = Array2::zeros(va.raw_dim());
                    d.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    accumulate(&mut grads[a.0], d);
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).raw_dim();
                    let d = g.into_shape_with_order(shape).expect("same length");
                    accumulate(&mut grads[a.0], d);
                }
                Op::Transpose(a) => {
                    accumulate(&mut grads[a.0], g.t().as_standard_layout().into_owned())
                }
                Op::Sum(a) => {
                    let shape = self.value(*a).raw_dim();
                    accumulate(&mut grads[a.0], Array2::from_elem(shape, g[[0, 0]]));
                }
                Op::RowSum(a) => {
                    let shape = self.value(*a).raw_dim();
                    let d = Array2::from_shape_fn(shape, |(r, _)| g[[r, 0]]);
                    accumulate(&mut grads[a.0], d);
                }
                Op::ScaleRows(a, d) => {
                    if need(*d) {
                        let gd = (&g * self.value(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                        accumulate(&mut grads[d.0], gd);
                    }
                    if need(*a) {
                        accumulate(&mut grads[a.0], &g * self.value(*d));
                    }
                }
                Op::ScaleCols(a, d) => {
                    if need(*d) {
                        let gd = (&g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                        accumulate(&mut grads[d.0], gd);
                    }
                    if need(*a) {
                        accumulate(&mut grads[a.0], &g * self.value(*d));
                    }
                }
                Op::RsqrtSafe(a) => {
                    let mut d = g;
                    d.zip_mut_with(self.value(*a), |gi, &xi| {
                        *gi = if xi > 0.0 { *gi * -0.5 * xi.powf(-1.5) } else { 0.0 }
                    });
                    accumulate(&mut grads[a.0], d);
                }
                Op::ClampMin(a, c) => {
                    let mut d = g;
                    d.zip_mut_with(self.value(*a), |gi, &xi| {
                        if xi < *c {
                            *gi = 0.0
                        }
                    });
                    accumulate(&mut grads[a.0], d);
                }
                Op::MaskMul(a, m) => accumulate(&mut grads[a.0], g * m),
                Op::GatherRows(a, idx) => {
                    let va = self.value(*a);
                    let mut d = Array2::zeros(va.raw_dim());
                    for (r, &i) in idx.iter().enumerate() {
                        let mut row = d.row_mut(i);
                        row += &g.row(r);
                    }
                    accumulate(&mut grads[a.0], d);
                }
                Op::ScatterRows(a, idx) => {
                    accumulate(&mut grads[a.0], g.select(Axis(0), idx));
                }
            }
        }
        Ok(out)
    }
}
