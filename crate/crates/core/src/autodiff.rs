//! Define-by-run reverse-mode differentiation over 2-D row-major matrices.
//!
//! A [`Graph`] records every operation applied to its [`Var`] handles. Rows
//! are samples (pixel coordinates) and columns are features, so one graph
//! covers a whole minibatch. The graph is rebuilt for every batch.
//!
//! ```
//! use coordflow::autodiff::Graph;
//! use coordflow::tensor::Tensor;
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.leaf(Tensor::scalar(3.0).with_grad());
//! let y = g.mul(x, x).unwrap();
//! let grads = g.backward(y).unwrap();
//! assert_eq!(grads.get(x).unwrap(), &[6.0]);
//! ```

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Sin(Var),
    Cos(Var),
    Exp(Var),
    Abs(Var),
    Square(Var),
    Softmax(Var),
    Sum(Var),
    Mean(Var),
    MeanCols(Var),
    SliceCols {
        src: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Fourier {
        src: Var,
        freqs: Vec<f64>,
        include_input: bool,
    },
}

struct Node<T> {
    value: Vec<T>,
    rows: usize,
    cols: usize,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// `None` when `var` was not reachable from the loss or does not
    /// require a gradient.
    pub fn get(&self, var: Var) -> Option<&[T]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Moves the gradient of `var` into `tensor.grad` (accumulating).
    pub fn write_into(&self, var: Var, tensor: &mut Tensor<T>) -> Result<()> {
        if let Some(g) = self.get(var) {
            tensor.accumulate_grad(g)?;
        }
        Ok(())
    }
}

/// The tape.
pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &str, detail: String) -> Error {
    Error::Shape(format!("{op}: {detail}"))
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<T>, rows: usize, cols: usize, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            value,
            rows,
            cols,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    /// Records a tensor as a leaf. It participates in the tape iff
    /// `tensor.requires_grad` is set.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let (rows, cols) = tensor.dims2();
        let rg = tensor.requires_grad;
        self.push(tensor.into_data(), rows, cols, Op::Leaf, rg)
    }

    /// Records a leaf from borrowed data without copying the tensor metadata.
    pub fn leaf_from(&mut self, rows: usize, cols: usize, data: &[T], requires_grad: bool) -> Result<Var> {
        if data.len() != rows * cols {
            return Err(shape_err("leaf", format!("{} values for {rows}x{cols}", data.len())));
        }
        Ok(self.push(data.to_vec(), rows, cols, Op::Leaf, requires_grad))
    }

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<T>) -> Result<Var> {
        if data.len() != rows * cols {
            return Err(shape_err(
                "constant",
                format!("{} values for {rows}x{cols}", data.len()),
            ));
        }
        Ok(self.push(data, rows, cols, Op::Leaf, false))
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.node(v).value
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        let n = self.node(v);
        Tensor::matrix(n.rows, n.cols, n.value.clone()).expect("node shape is consistent")
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar_value(&self, v: Var) -> Result<T> {
        let n = self.node(v);
        if n.value.len() != 1 {
            return Err(shape_err("scalar_value", format!("node is {}x{}", n.rows, n.cols)));
        }
        Ok(n.value[0])
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (na, nb) = (self.node(a), self.node(b));
        if na.rows != nb.rows || na.cols != nb.cols {
            return Err(shape_err(
                op,
                format!("operands are {}x{} and {}x{}", na.rows, na.cols, nb.rows, nb.cols),
            ));
        }
        Ok((na.rows, na.cols))
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(T, T) -> T, name: &str) -> Result<Var> {
        let (rows, cols) = self.same_shape(name, a, b)?;
        let value = self
            .node(a)
            .value
            .iter()
            .zip(&self.node(b).value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.node(a).requires_grad || self.node(b).requires_grad;
        Ok(self.push(value, rows, cols, op, rg))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(T) -> T) -> Var {
        let n = self.node(a);
        let (rows, cols, rg) = (n.rows, n.cols, n.requires_grad);
        let value = n.value.iter().map(|&x| f(x)).collect();
        self.push(value, rows, cols, op, rg)
    }

    /// `[m,k] × [k,n] → [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a), self.node(b));
        if na.cols != nb.rows {
            return Err(shape_err(
                "matmul",
                format!("cannot multiply {}x{} by {}x{}", na.rows, na.cols, nb.rows, nb.cols),
            ));
        }
        let (m, k, n) = (na.rows, na.cols, nb.cols);
        let mut out = vec![T::zero(); m * n];
        gemm_nn(&na.value, &nb.value, &mut out, m, k, n, T::zero());
        let rg = na.requires_grad || nb.requires_grad;
        Ok(self.push(out, m, n, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y, "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y, "mul")
    }

    /// Adds a `[1,n]` row to every row of `[m,n]` (bias add).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (na, nr) = (self.node(a), self.node(row));
        if nr.rows != 1 || nr.cols != na.cols {
            return Err(shape_err(
                "add_row",
                format!(
                    "row operand {}x{} does not fit {}x{}",
                    nr.rows, nr.cols, na.rows, na.cols
                ),
            ));
        }
        let (rows, cols) = (na.rows, na.cols);
        let mut out = na.value.clone();
        for r in out.chunks_exact_mut(cols.max(1)) {
            r.iter_mut().zip(&nr.value).for_each(|(o, &b)| *o = *o + b);
        }
        let rg = na.requires_grad || nr.requires_grad;
        Ok(self.push(out, rows, cols, Op::AddRow(a, row), rg))
    }

    /// Multiplies every column of `[m,n]` by an `[m,1]` column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (na, nc) = (self.node(a), self.node(col));
        if nc.cols != 1 || nc.rows != na.rows {
            return Err(shape_err(
                "mul_col",
                format!(
                    "column operand {}x{} does not fit {}x{}",
                    nc.rows, nc.cols, na.rows, na.cols
                ),
            ));
        }
        let (rows, cols) = (na.rows, na.cols);
        let mut out = na.value.clone();
        for (r, &c) in out.chunks_exact_mut(cols.max(1)).zip(&nc.value) {
            r.iter_mut().for_each(|o| *o = *o * c);
        }
        let rg = na.requires_grad || nc.requires_grad;
        Ok(self.push(out, rows, cols, Op::MulCol(a, col), rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let kt = T::from_f64_lossy(k);
        self.unary(a, Op::Scale(a, k), |x| x * kt)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let kt = T::from_f64_lossy(k);
        self.unary(a, Op::AddScalar(a), |x| x + kt)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > T::zero() { x } else { T::zero() })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sin(a), T::sin)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, Op::Cos(a), T::cos)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), T::exp)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Op::Abs(a), T::abs)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// Softmax along the last axis, max-subtracted.
    pub fn softmax(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let (rows, cols, rg) = (n.rows, n.cols, n.requires_grad);
        let mut out = n.value.clone();
        for r in out.chunks_exact_mut(cols.max(1)) {
            softmax_in_place(r);
        }
        self.push(out, rows, cols, Op::Softmax(a), rg)
    }

    /// Sum of all elements as a 1×1 node, accumulated in f64.
    pub fn sum(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let s: f64 = n.value.iter().map(|v| v.to_f64_lossy()).sum();
        let rg = n.requires_grad;
        self.push(vec![T::from_f64_lossy(s)], 1, 1, Op::Sum(a), rg)
    }

    /// Mean of all elements as a 1×1 node, accumulated in f64.
    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let s: f64 = n.value.iter().map(|v| v.to_f64_lossy()).sum();
        let m = s / n.value.len().max(1) as f64;
        let rg = n.requires_grad;
        self.push(vec![T::from_f64_lossy(m)], 1, 1, Op::Mean(a), rg)
    }

    /// Row-wise mean over columns: `[m,n] → [m,1]`.
    pub fn mean_cols(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let (rows, cols, rg) = (n.rows, n.cols, n.requires_grad);
        let inv = T::one() / T::from_usize(cols.max(1)).unwrap();
        let out = n
            .value
            .chunks_exact(cols.max(1))
            .map(|r| r.iter().fold(T::zero(), |acc, &v| acc + v) * inv)
            .collect();
        self.push(out, rows, 1, Op::MeanCols(a), rg)
    }

    /// Columns `start..start+len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.node(a);
        if start + len > n.cols {
            return Err(shape_err(
                "slice_cols",
                format!(
                    "columns {start}..{} out of range for {}x{}",
                    start + len,
                    n.rows,
                    n.cols
                ),
            ));
        }
        let (rows, cols, rg) = (n.rows, n.cols, n.requires_grad);
        let mut out = Vec::with_capacity(rows * len);
        for r in n.value.chunks_exact(cols.max(1)) {
            out.extend_from_slice(&r[start..start + len]);
        }
        Ok(self.push(out, rows, len, Op::SliceCols { src: a, start }, rg))
    }

    /// Concatenates along columns; every part must have the same row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(shape_err("concat_cols", "no operands".into()));
        };
        let rows = self.node(first).rows;
        if let Some(bad) = parts.iter().find(|p| self.node(**p).rows != rows) {
            return Err(shape_err(
                "concat_cols",
                format!("operand has {} rows, expected {rows}", self.node(*bad).rows),
            ));
        }
        let cols: usize = parts.iter().map(|p| self.node(*p).cols).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                let n = self.node(*p);
                out.extend_from_slice(&n.value[r * n.cols..(r + 1) * n.cols]);
            }
        }
        let rg = parts.iter().any(|p| self.node(*p).requires_grad);
        Ok(self.push(out, rows, cols, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Fourier features of an `[m,1]` column: `[v?, sin(f₀πv), cos(f₀πv), sin(f₁πv), …]`.
    pub fn fourier(&mut self, a: Var, freqs: &[f64], include_input: bool) -> Result<Var> {
        let n = self.node(a);
        if n.cols != 1 {
            return Err(shape_err(
                "fourier",
                format!("expects a column, got {}x{}", n.rows, n.cols),
            ));
        }
        let (rows, rg) = (n.rows, n.requires_grad);
        let width = 2 * freqs.len() + usize::from(include_input);
        let omegas: Vec<T> = freqs.iter().map(|f| T::from_f64_lossy(f * PI)).collect();
        let mut out = Vec::with_capacity(rows * width);
        for &v in &n.value {
            if include_input {
                out.push(v);
            }
            for &w in &omegas {
                let (s, c) = (w * v).sin_cos();
                out.push(s);
                out.push(c);
            }
        }
        let op = Op::Fourier {
            src: a,
            freqs: freqs.to_vec(),
            include_input,
        };
        Ok(self.push(out, rows, width, op, rg))
    }

    /// Reverse pass from a 1×1 loss node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let ln = self.node(loss);
        if ln.value.len() != 1 {
            return Err(Error::Gradient(format!(
                "backward needs a scalar loss, got {}x{}",
                ln.rows, ln.cols
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        if !ln.requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else { continue };
            self.propagate(idx, &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, dy: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        let wants = |v: &Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (na, nb) = (self.node(*a), self.node(*b));
                let (m, k, n) = (na.rows, na.cols, nb.cols);
                if wants(a) {
                    // dA = dY · Bᵀ
                    let mut da = vec![T::zero(); m * k];
                    unsafe {
                        T::gemm(
                            m,
                            n,
                            k,
                            T::one(),
                            dy.as_ptr(),
                            n as isize,
                            1,
                            nb.value.as_ptr(),
                            1,
                            n as isize,
                            T::zero(),
                            da.as_mut_ptr(),
                            k as isize,
                            1,
                        );
                    }
                    accumulate(grads, *a, da);
                }
                if wants(b) {
                    // dB = Aᵀ · dY
                    let mut db = vec![T::zero(); k * n];
                    unsafe {
                        T::gemm(
                            k,
                            m,
                            n,
                            T::one(),
                            na.value.as_ptr(),
                            1,
                            k as isize,
                            dy.as_ptr(),
                            n as isize,
                            1,
                            T::zero(),
                            db.as_mut_ptr(),
                            n as isize,
                            1,
                        );
                    }
                    accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                if wants(a) {
                    accumulate(grads, *a, dy.to_vec());
                }
                if wants(b) {
                    accumulate(grads, *b, dy.to_vec());
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    accumulate(grads, *a, dy.to_vec());
                }
                if wants(b) {
                    accumulate(grads, *b, dy.iter().map(|&g| -g).collect());
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&self.node(*a).value, &self.node(*b).value);
                if wants(a) {
                    accumulate(grads, *a, dy.iter().zip(vb).map(|(&g, &y)| g * y).collect());
                }
                if wants(b) {
                    accumulate(grads, *b, dy.iter().zip(va).map(|(&g, &x)| g * x).collect());
                }
            }
            Op::AddRow(a, row) => {
                if wants(a) {
                    accumulate(grads, *a, dy.to_vec());
                }
                if wants(row) {
                    let mut dr = vec![T::zero(); node.cols];
                    for r in dy.chunks_exact(node.cols.max(1)) {
                        dr.iter_mut().zip(r).for_each(|(d, &g)| *d = *d + g);
                    }
                    accumulate(grads, *row, dr);
                }
            }
            Op::MulCol(a, col) => {
                let cols = node.cols.max(1);
                let (va, vc) = (&self.node(*a).value, &self.node(*col).value);
                if wants(a) {
                    let mut da = dy.to_vec();
                    for (r, &c) in da.chunks_exact_mut(cols).zip(vc) {
                        r.iter_mut().for_each(|d| *d = *d * c);
                    }
                    accumulate(grads, *a, da);
                }
                if wants(col) {
                    let dc = dy
                        .chunks_exact(cols)
                        .zip(va.chunks_exact(cols))
                        .map(|(g, x)| g.iter().zip(x).fold(T::zero(), |acc, (&g, &x)| acc + g * x))
                        .collect();
                    accumulate(grads, *col, dc);
                }
            }
            Op::Scale(a, k) => {
                let kt = T::from_f64_lossy(*k);
                accumulate(grads, *a, dy.iter().map(|&g| g * kt).collect());
            }
            Op::AddScalar(a) => accumulate(grads, *a, dy.to_vec()),
            Op::Relu(a) => {
                let x = &self.node(*a).value;
                let d = dy
                    .iter()
                    .zip(x)
                    .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                    .collect();
                accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let d = dy.iter().zip(y).map(|(&g, &y)| g * y * (T::one() - y)).collect();
                accumulate(grads, *a, d);
            }
            Op::Sin(a) => {
                let x = &self.node(*a).value;
                accumulate(grads, *a, dy.iter().zip(x).map(|(&g, &x)| g * x.cos()).collect());
            }
            Op::Cos(a) => {
                let x = &self.node(*a).value;
                accumulate(grads, *a, dy.iter().zip(x).map(|(&g, &x)| -g * x.sin()).collect());
            }
            Op::Exp(a) => {
                let y = &node.value;
                accumulate(grads, *a, dy.iter().zip(y).map(|(&g, &y)| g * y).collect());
            }
            Op::Abs(a) => {
                let x = &self.node(*a).value;
                let d = dy
                    .iter()
                    .zip(x)
                    .map(|(&g, &x)| {
                        if x > T::zero() {
                            g
                        } else if x < T::zero() {
                            -g
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                accumulate(grads, *a, d);
            }
            Op::Square(a) => {
                let x = &self.node(*a).value;
                let two = T::one() + T::one();
                accumulate(grads, *a, dy.iter().zip(x).map(|(&g, &x)| two * g * x).collect());
            }
            Op::Softmax(a) => {
                let cols = node.cols.max(1);
                let mut d = vec![T::zero(); dy.len()];
                for ((dr, g), y) in d
                    .chunks_exact_mut(cols)
                    .zip(dy.chunks_exact(cols))
                    .zip(node.value.chunks_exact(cols))
                {
                    let dot = g.iter().zip(y).fold(T::zero(), |acc, (&g, &y)| acc + g * y);
                    for ((o, &g), &y) in dr.iter_mut().zip(g).zip(y) {
                        *o = y * (g - dot);
                    }
                }
                accumulate(grads, *a, d);
            }
            Op::Sum(a) => {
                let n = self.node(*a).value.len();
                accumulate(grads, *a, vec![dy[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.node(*a).value.len();
                let g = dy[0] / T::from_usize(n.max(1)).unwrap();
                accumulate(grads, *a, vec![g; n]);
            }
            Op::MeanCols(a) => {
                let na = self.node(*a);
                let inv = T::one() / T::from_usize(na.cols.max(1)).unwrap();
                let mut d = Vec::with_capacity(na.value.len());
                for &g in dy {
                    d.extend(std::iter::repeat_n(g * inv, na.cols));
                }
                accumulate(grads, *a, d);
            }
            Op::SliceCols { src, start } => {
                let ns = self.node(*src);
                let mut d = vec![T::zero(); ns.value.len()];
                for (dr, g) in d
                    .chunks_exact_mut(ns.cols.max(1))
                    .zip(dy.chunks_exact(node.cols.max(1)))
                {
                    dr[*start..*start + node.cols].copy_from_slice(g);
                }
                accumulate(grads, *src, d);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let np = self.node(*p);
                    if np.requires_grad {
                        let mut d = Vec::with_capacity(np.value.len());
                        for r in dy.chunks_exact(node.cols.max(1)) {
                            d.extend_from_slice(&r[offset..offset + np.cols]);
                        }
                        accumulate(grads, *p, d);
                    }
                    offset += np.cols;
                }
            }
            Op::Fourier {
                src,
                freqs,
                include_input,
            } => {
                let width = node.cols;
                let skip = usize::from(*include_input);
                let omegas: Vec<T> = freqs.iter().map(|f| T::from_f64_lossy(f * PI)).collect();
                let d = dy
                    .chunks_exact(width.max(1))
                    .zip(node.value.chunks_exact(width.max(1)))
                    .map(|(g, y)| {
                        let mut acc = if *include_input { g[0] } else { T::zero() };
                        for (k, &w) in omegas.iter().enumerate() {
                            let (s, c) = (y[skip + 2 * k], y[skip + 2 * k + 1]);
                            acc = acc + w * (g[skip + 2 * k] * c - g[skip + 2 * k + 1] * s);
                        }
                        acc
                    })
                    .collect();
                accumulate(grads, *src, d);
            }
        }
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, d: Vec<T>) {
    match &mut grads[v.0] {
        Some(g) => g.iter_mut().zip(&d).for_each(|(a, &b)| *a = *a + b),
        slot @ None => *slot = Some(d),
    }
}

fn gemm_nn<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize, beta: T) {
    if m == 0 || n == 0 {
        return;
    }
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(r: &mut [T]) {
    let max = r.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for v in r.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    r.iter_mut().for_each(|v| *v = *v / sum);
}
