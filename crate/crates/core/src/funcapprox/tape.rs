//! A small reverse-mode differentiation tape over dense row-major matrices.
//!
//! Every operation appends a node holding its output value, a gradient slot
//! of the same shape, and the operation that produced it. Inputs always
//! precede their consumers, so a reverse sweep over the node list is a valid
//! topological order.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Error::check_dim("tensor data", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn scalar(x: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![x],
        }
    }

    /// An `n × 1` column.
    pub fn column(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

/// `out[i][j] += Σ_l a[i][l] · b[l][j]` with optional transposes.
fn gemm_acc(a: &Tensor, ta: bool, b: &Tensor, tb: bool, out: &mut [f64]) {
    let (m, inner) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let n = if tb { b.rows } else { b.cols };
    let at = |i: usize, l: usize| if ta { a.data[l * a.cols + i] } else { a.data[i * a.cols + l] };
    for i in 0..m {
        for l in 0..inner {
            let x = at(i, l);
            if x == 0.0 {
                continue;
            }
            let row = &mut out[i * n..(i + 1) * n];
            if tb {
                for (j, o) in row.iter_mut().enumerate() {
                    *o += x * b.data[j * b.cols + l];
                }
            } else {
                for (o, &y) in row.iter_mut().zip(&b.data[l * b.cols..(l + 1) * b.cols]) {
                    *o += x * y;
                }
            }
        }
    }
}

/// Exponential linear unit with α = 1.
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// Matrix plus a `1 × cols` row broadcast over rows.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Elu(Var),
    Sum(Var),
    SumSquares(Var),
}

#[derive(Clone, Debug)]
pub struct TensorNode {
    pub value: Tensor,
    pub grad: Tensor,
    op: Op,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<TensorNode>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let grad = Tensor::zeros(value.rows, value.cols);
        self.nodes.push(TensorNode { value, grad, op });
        Var(self.nodes.len() - 1)
    }

    /// A parameter or constant input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` root with respect to `v`.
    pub fn grad(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.cols, y.rows, "matmul inner dimensions");
        let mut out = Tensor::zeros(x.rows, y.cols);
        gemm_acc(x, false, y, false, &mut out.data);
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!((1, x.cols), r.shape(), "broadcast row shape");
        let mut out = x.clone();
        for chunk in out.data.chunks_mut(x.cols) {
            for (o, b) in chunk.iter_mut().zip(&r.data) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    fn same_shape(&self, a: Var, b: Var) {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "elementwise shapes");
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b);
        let out = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b);
        let out = self.value(a).zip(self.value(b), |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b);
        let out = self.value(a).zip(self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| c * x);
        self.push(out, Op::Scale(a, c))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(elu);
        self.push(out, Op::Elu(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().map(|x| x * x).sum();
        self.push(Tensor::scalar(s), Op::SumSquares(a))
    }

    /// Fills every gradient slot with `∂root/∂node`.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let shape = self.value(root).shape();
        if shape != (1, 1) {
            return Err(Error::invalid(format!(
                "backward needs a scalar root, found shape {shape:?}"
            )));
        }
        for node in &mut self.nodes {
            node.grad.data.iter_mut().for_each(|g| *g = 0.0);
        }
        self.nodes[root.0].grad.data[0] = 1.0;

        for i in (0..=root.0).rev() {
            let (head, tail) = self.nodes.split_at_mut(i);
            let node = &tail[0];
            let g = &node.grad;
            match node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    // Cannot alias: inputs precede the node. `a == b` needs
                    // the values before either gradient is touched.
                    let (x, y) = (head[a.0].value.clone(), head[b.0].value.clone());
                    gemm_acc(g, false, &y, true, &mut head[a.0].grad.data);
                    gemm_acc(&x, true, g, false, &mut head[b.0].grad.data);
                }
                Op::AddRow(a, row) => {
                    accumulate(&mut head[a.0].grad.data, &g.data, |d| d);
                    let cols = g.cols;
                    let rg = &mut head[row.0].grad.data;
                    for chunk in g.data.chunks(cols) {
                        for (o, d) in rg.iter_mut().zip(chunk) {
                            *o += d;
                        }
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut head[a.0].grad.data, &g.data, |d| d);
                    accumulate(&mut head[b.0].grad.data, &g.data, |d| d);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut head[a.0].grad.data, &g.data, |d| d);
                    accumulate(&mut head[b.0].grad.data, &g.data, |d| -d);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (head[a.0].value.clone(), head[b.0].value.clone());
                    for ((o, d), yv) in head[a.0].grad.data.iter_mut().zip(&g.data).zip(&y.data) {
                        *o += d * yv;
                    }
                    for ((o, d), xv) in head[b.0].grad.data.iter_mut().zip(&g.data).zip(&x.data) {
                        *o += d * xv;
                    }
                }
                Op::Scale(a, c) => accumulate(&mut head[a.0].grad.data, &g.data, |d| c * d),
                Op::Tanh(a) => chain(&mut head[a.0].grad.data, g, &node.value, |_, y| 1.0 - y * y),
                Op::Sigmoid(a) => chain(&mut head[a.0].grad.data, g, &node.value, |_, y| y * (1.0 - y)),
                Op::Elu(a) => {
                    let x = &head[a.0].value.clone();
                    chain(&mut head[a.0].grad.data, g, x, |x, _| if x > 0.0 { 1.0 } else { x.exp() });
                }
                Op::Sum(a) => {
                    let d = g.data[0];
                    head[a.0].grad.data.iter_mut().for_each(|o| *o += d);
                }
                Op::SumSquares(a) => {
                    let d = g.data[0];
                    let n = &mut head[a.0];
                    for (o, x) in n.grad.data.iter_mut().zip(&n.value.data) {
                        *o += 2.0 * x * d;
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate(dst: &mut [f64], src: &[f64], f: impl Fn(f64) -> f64) {
    for (o, &d) in dst.iter_mut().zip(src) {
        *o += f(d);
    }
}

/// `dst += g ⊙ f'(·)`, where the local derivative sees either the input or
/// the output (whichever `vals` holds) through `f(x, y)`.
fn chain(dst: &mut [f64], g: &Tensor, vals: &Tensor, f: impl Fn(f64, f64) -> f64) {
    for ((o, &d), &v) in dst.iter_mut().zip(&g.data).zip(&vals.data) {
        *o += d * f(v, v);
    }
}
