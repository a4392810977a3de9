use std::rc::Rc;

use super::{matmul, softmax_rows, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Constant sparse matrix in coordinate form.
#[derive(Clone, Debug, PartialEq)]
pub struct Sparse {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Sparse {
    pub fn new(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>) -> Self {
        debug_assert!(entries.iter().all(|&(r, c, _)| r < rows && c < cols));
        Self { rows, cols, entries }
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(self.rows, self.cols);
        for &(r, c, w) in &self.entries {
            t.data_mut()[r * self.cols + c] += w;
        }
        t
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
    MulConst(Var, Tensor),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Softmax(Var),
    MaskedLogSoftmax(Var, Rc<Vec<bool>>),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    Concat(Vec<Var>),
    Min(Var, Var),
    Clamp(Var, f64, f64),
    Spmm(Rc<Sparse>, Var),
    GatherRows(Var, Rc<Vec<usize>>),
    GatherFlat(Var, Rc<Vec<usize>>),
    Reshape(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records forward operations in order so `backward` can replay them in reverse.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints for every node of a tape after one backward pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`; zeros if the output does not depend on it.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn collect(&self, vars: &[Var]) -> Vec<Tensor> {
        vars.iter().map(|&v| self.get(v)).collect()
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::matrix(t.rows(), t.cols(), t.data().iter().map(|&x| f(x)).collect()).unwrap()
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::matrix(a.rows(), a.cols(), a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()).unwrap()
}

fn transpose(t: &Tensor) -> Tensor {
    let (r, c) = (t.rows(), t.cols());
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = t.data()[i * c + j];
        }
    }
    Tensor::matrix(c, r, out).unwrap()
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Tensor) -> Result<Var, TensorError> {
        let value = if value.shape().len() == 1 {
            Tensor::matrix(1, value.cols(), value.into_data())?
        } else {
            value
        };
        self.push("leaf", value, Op::Leaf)
    }

    pub fn leaves(&mut self, values: &[Tensor]) -> Result<Vec<Var>, TensorError> {
        values.iter().map(|t| self.leaf(t.clone())).collect()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let v = matmul(self.value(a), self.value(b))?;
        self.push("matmul", v, Op::MatMul(a, b))
    }

    fn same(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.same_shape(y) {
            Ok(())
        } else {
            Err(shape_err(op, x, y))
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same("add", a, b)?;
        let v = zip(self.value(a), self.value(b), |x, y| x + y);
        self.push("add", v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same("sub", a, b)?;
        let v = zip(self.value(a), self.value(b), |x, y| x - y);
        self.push("sub", v, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same("mul", a, b)?;
        let v = zip(self.value(a), self.value(b), |x, y| x * y);
        self.push("mul", v, Op::Mul(a, b))
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var, TensorError> {
        if !self.value(a).same_shape(&c) {
            return Err(shape_err("mul_const", self.value(a), &c));
        }
        let v = zip(self.value(a), &c, |x, y| x * y);
        self.push("mul_const", v, Op::MulConst(a, c))
    }

    /// Adds a 1 × c row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (x, b) = (self.value(a), self.value(row));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(shape_err("add_row", x, b));
        }
        let c = x.cols();
        let data = x.data().iter().enumerate().map(|(k, &v)| v + b.data()[k % c]).collect();
        let v = Tensor::matrix(x.rows(), c, data)?;
        self.push("add_row", v, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, TensorError> {
        let v = map(self.value(a), |x| x * s);
        self.push("scale", v, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var, TensorError> {
        let v = map(self.value(a), |x| x + s);
        self.push("add_scalar", v, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = map(self.value(a), |x| x.max(0.0));
        self.push("relu", v, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = map(self.value(a), f64::exp);
        self.push("exp", v, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = map(self.value(a), f64::ln);
        self.push("log", v, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = map(self.value(a), |x| x * x);
        self.push("square", v, Op::Square(a))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = softmax_rows(self.value(a));
        self.push("softmax", v, Op::Softmax(a))
    }

    /// Row-wise log-softmax over entries where `allowed` is true. Disallowed
    /// entries come out as 0 and pass no gradient. Every row needs at least
    /// one allowed entry.
    pub fn masked_log_softmax(&mut self, a: Var, allowed: Vec<bool>) -> Result<Var, TensorError> {
        let x = self.value(a);
        let (r, c) = (x.rows(), x.cols());
        if allowed.len() != r * c {
            return Err(TensorError::Shape {
                op: "masked_log_softmax",
                left: x.shape().to_vec(),
                right: vec![allowed.len()],
            });
        }
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &x.data()[i * c..(i + 1) * c];
            let mask = &allowed[i * c..(i + 1) * c];
            let max = row
                .iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| (v - max).exp()).sum();
            let lse = max + z.ln();
            for j in 0..c {
                if mask[j] {
                    out[i * c + j] = row[j] - lse;
                }
            }
        }
        let v = Tensor::matrix(r, c, out)?;
        self.push("masked_log_softmax", v, Op::MaskedLogSoftmax(a, Rc::new(allowed)))
    }

    /// Sum of all entries, 1 × 1.
    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let v = Tensor::scalar(self.value(a).data().iter().sum());
        self.push("sum", v, Op::Sum(a))
    }

    /// Mean of all entries, 1 × 1.
    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let x = self.value(a);
        let v = Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64);
        self.push("mean", v, Op::Mean(a))
    }

    /// Per-row sums, r × 1.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var, TensorError> {
        let x = self.value(a);
        let data = (0..x.rows()).map(|i| x.row_slice(i).iter().sum()).collect();
        let v = Tensor::matrix(x.rows(), 1, data)?;
        self.push("sum_cols", v, Op::SumCols(a))
    }

    /// Horizontal concatenation of tensors with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let r = self.value(parts[0]).rows();
        for &p in parts {
            if self.value(p).rows() != r {
                return Err(shape_err("concat", self.value(parts[0]), self.value(p)));
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let v = Tensor::matrix(r, total, data)?;
        self.push("concat", v, Op::Concat(parts.to_vec()))
    }

    /// Elementwise minimum; ties send the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same("min", a, b)?;
        let v = zip(self.value(a), self.value(b), f64::min);
        self.push("min", v, Op::Min(a, b))
    }

    /// Elementwise clamp; the gradient is zero outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, TensorError> {
        let v = map(self.value(a), |x| x.clamp(lo, hi));
        self.push("clamp", v, Op::Clamp(a, lo, hi))
    }

    /// `s · a` for a constant sparse `s`.
    pub fn spmm(&mut self, s: Rc<Sparse>, a: Var) -> Result<Var, TensorError> {
        let x = self.value(a);
        if s.cols != x.rows() {
            return Err(TensorError::Shape {
                op: "spmm",
                left: vec![s.rows, s.cols],
                right: x.shape().to_vec(),
            });
        }
        let c = x.cols();
        let mut out = vec![0.0; s.rows * c];
        for &(i, j, w) in &s.entries {
            let src = x.row_slice(j);
            for (o, &v) in out[i * c..(i + 1) * c].iter_mut().zip(src) {
                *o += w * v;
            }
        }
        let v = Tensor::matrix(s.rows, c, out)?;
        self.push("spmm", v, Op::Spmm(s, a))
    }

    /// Stacks the listed rows of `a` (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Result<Var, TensorError> {
        let x = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.rows()) {
            return Err(TensorError::Shape {
                op: "gather_rows",
                left: x.shape().to_vec(),
                right: vec![bad],
            });
        }
        let c = x.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in &idx {
            data.extend_from_slice(x.row_slice(i));
        }
        let v = Tensor::matrix(idx.len(), c, data)?;
        self.push("gather_rows", v, Op::GatherRows(a, Rc::new(idx)))
    }

    /// Picks entries by flat row-major index into a k × 1 column.
    pub fn gather_flat(&mut self, a: Var, idx: Vec<usize>) -> Result<Var, TensorError> {
        let x = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.len()) {
            return Err(TensorError::Shape {
                op: "gather_flat",
                left: x.shape().to_vec(),
                right: vec![bad],
            });
        }
        let data = idx.iter().map(|&i| x.data()[i]).collect();
        let v = Tensor::matrix(idx.len(), 1, data)?;
        self.push("gather_flat", v, Op::GatherFlat(a, Rc::new(idx)))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, TensorError> {
        let x = self.value(a);
        if rows * cols != x.len() {
            return Err(TensorError::Shape {
                op: "reshape",
                left: x.shape().to_vec(),
                right: vec![rows, cols],
            });
        }
        let v = Tensor::matrix(rows, cols, x.data().to_vec())?;
        self.push("reshape", v, Op::Reshape(a))
    }

    /// Reverse accumulation from a 1 × 1 output.
    pub fn backward(&self, out: Var) -> Result<Gradients, TensorError> {
        let root = self.value(out);
        if root.len() != 1 {
            return Err(TensorError::NotScalar(root.shape().to_vec()));
        }
        let n = out.0 + 1;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Tensor::scalar(1.0));
        for k in (0..n).rev() {
            let Some(g) = grads[k].take() else { continue };
            self.propagate(k, &g, &mut grads);
            grads[k] = Some(g);
        }
        for g in grads.iter().flatten() {
            if !g.is_finite() {
                return Err(TensorError::NonFinite { op: "backward" });
            }
        }
        let shapes = self.nodes.iter().map(|n| (n.value.rows(), n.value.cols())).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, k: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[k];
        let y = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                accumulate(grads, *a, matmul(g, &transpose(val(*b))).unwrap());
                accumulate(grads, *b, matmul(&transpose(val(*a)), g).unwrap());
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, map(g, |x| -x));
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, zip(g, val(*b), |x, y| x * y));
                accumulate(grads, *b, zip(g, val(*a), |x, y| x * y));
            }
            Op::MulConst(a, c) => accumulate(grads, *a, zip(g, c, |x, y| x * y)),
            Op::AddRow(a, row) => {
                accumulate(grads, *a, g.clone());
                let c = g.cols();
                let mut gb = vec![0.0; c];
                for (k, &v) in g.data().iter().enumerate() {
                    gb[k % c] += v;
                }
                accumulate(grads, *row, Tensor::row(gb));
            }
            Op::Scale(a, s) => accumulate(grads, *a, map(g, |x| x * s)),
            Op::AddScalar(a) => accumulate(grads, *a, g.clone()),
            Op::Relu(a) => accumulate(grads, *a, zip(g, val(*a), |x, v| if v > 0.0 { x } else { 0.0 })),
            Op::Exp(a) => accumulate(grads, *a, zip(g, y, |x, e| x * e)),
            Op::Log(a) => accumulate(grads, *a, zip(g, val(*a), |x, v| x / v)),
            Op::Square(a) => accumulate(grads, *a, zip(g, val(*a), |x, v| 2.0 * x * v)),
            Op::Softmax(a) => {
                let c = y.cols();
                let mut out = vec![0.0; y.len()];
                for i in 0..y.rows() {
                    let (p, gi) = (y.row_slice(i), g.row_slice(i));
                    let dot: f64 = p.iter().zip(gi).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        out[i * c + j] = p[j] * (gi[j] - dot);
                    }
                }
                accumulate(grads, *a, Tensor::matrix(y.rows(), c, out).unwrap());
            }
            Op::MaskedLogSoftmax(a, mask) => {
                let c = y.cols();
                let mut out = vec![0.0; y.len()];
                for i in 0..y.rows() {
                    let range = i * c..(i + 1) * c;
                    let (lp, gi, m) = (&y.data()[range.clone()], &g.data()[range.clone()], &mask[range]);
                    let total: f64 = gi.iter().zip(m).filter(|(_, &m)| m).map(|(g, _)| g).sum();
                    for j in 0..c {
                        if m[j] {
                            out[i * c + j] = gi[j] - lp[j].exp() * total;
                        }
                    }
                }
                accumulate(grads, *a, Tensor::matrix(y.rows(), c, out).unwrap());
            }
            Op::Sum(a) => {
                let x = val(*a);
                accumulate(grads, *a, Tensor::full(x.rows(), x.cols(), g.item()));
            }
            Op::Mean(a) => {
                let x = val(*a);
                accumulate(grads, *a, Tensor::full(x.rows(), x.cols(), g.item() / x.len() as f64));
            }
            Op::SumCols(a) => {
                let x = val(*a);
                let c = x.cols();
                let data = (0..x.len()).map(|k| g.data()[k / c]).collect();
                accumulate(grads, *a, Tensor::matrix(x.rows(), c, data).unwrap());
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                let total = g.cols();
                for &p in parts {
                    let x = val(p);
                    let c = x.cols();
                    let mut data = Vec::with_capacity(x.len());
                    for i in 0..x.rows() {
                        data.extend_from_slice(&g.data()[i * total + offset..i * total + offset + c]);
                    }
                    accumulate(grads, p, Tensor::matrix(x.rows(), c, data).unwrap());
                    offset += c;
                }
            }
            Op::Min(a, b) => {
                let (x, z) = (val(*a), val(*b));
                let ga = Tensor::matrix(
                    g.rows(),
                    g.cols(),
                    (0..g.len()).map(|k| if x.data()[k] <= z.data()[k] { g.data()[k] } else { 0.0 }).collect(),
                )
                .unwrap();
                let gb = zip(g, &ga, |t, s| t - s);
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::Clamp(a, lo, hi) => {
                accumulate(grads, *a, zip(g, val(*a), |x, v| if v >= *lo && v <= *hi { x } else { 0.0 }));
            }
            Op::Spmm(s, a) => {
                let x = val(*a);
                let c = x.cols();
                let mut out = vec![0.0; x.len()];
                for &(i, j, w) in &s.entries {
                    for (o, &v) in out[j * c..(j + 1) * c].iter_mut().zip(g.row_slice(i)) {
                        *o += w * v;
                    }
                }
                accumulate(grads, *a, Tensor::matrix(x.rows(), c, out).unwrap());
            }
            Op::GatherRows(a, idx) => {
                let x = val(*a);
                let c = x.cols();
                let mut out = vec![0.0; x.len()];
                for (r, &i) in idx.iter().enumerate() {
                    for (o, &v) in out[i * c..(i + 1) * c].iter_mut().zip(g.row_slice(r)) {
                        *o += v;
                    }
                }
                accumulate(grads, *a, Tensor::matrix(x.rows(), c, out).unwrap());
            }
            Op::GatherFlat(a, idx) => {
                let x = val(*a);
                let mut out = vec![0.0; x.len()];
                for (r, &i) in idx.iter().enumerate() {
                    out[i] += g.data()[r];
                }
                accumulate(grads, *a, Tensor::matrix(x.rows(), x.cols(), out).unwrap());
            }
            Op::Reshape(a) => {
                let x = val(*a);
                accumulate(grads, *a, Tensor::matrix(x.rows(), x.cols(), g.data().to_vec()).unwrap());
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot => *slot = Some(g),
    }
}
