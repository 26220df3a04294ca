//! Reverse-mode differentiation tape.
//!
//! Every operation records its parents and enough saved state to run the
//! backward rule. Nodes are appended in topological order, so the backward
//! pass is a single reverse sweep.

use crate::autodiff::tensor::{matmul, matmul_at, matmul_bt, Tensor};
use crate::error::{Error, Result};

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn id(&self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    Add { a: Var, b: Var },
    AddRow { x: Var, bias: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: f64 },
    Sum { x: Var },
    Relu { x: Var },
    MaxOverPoints { x: Var, argmax: Vec<usize> },
    SoftmaxCrossEntropy { logits: Var, probs: Vec<f64> },
    Mse { a: Var, b: Var },
    Concat { a: Var, b: Var },
    Affine { x: Var, gamma: Var, beta: Var },
    Slice { x: Var, start: usize },
    Sqrt { x: Var },
    Cross { a: Var, b: Var },
    MulScalar { v: Var, s: Var },
    DivScalar { v: Var, s: Var },
}

struct Node {
    value: Tensor,
    grad: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::ShapeMismatch(format!("{op}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1))
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].grad
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let grad = Tensor::zeros(value.rows(), value.cols());
        self.nodes.push(Node { value, grad, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.cols() != bv.rows() {
            return Err(shape_err("matmul", av.shape(), bv.shape()));
        }
        let out = matmul(av, bv);
        Ok(self.push(out, Op::MatMul { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(shape_err("add", av.shape(), bv.shape()));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data)?;
        Ok(self.push(out, Op::Add { a, b }))
    }

    /// Broadcast a `1×m` bias over every row of an `n×m` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (&self.nodes[x.0].value, &self.nodes[bias.0].value);
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(shape_err("add_row", xv.shape(), bv.shape()));
        }
        let m = xv.cols();
        let mut out = xv.clone();
        for i in 0..out.rows() {
            for j in 0..m {
                let v = out.get(i, j) + bv.get(0, j);
                out.set(i, j, v);
            }
        }
        Ok(self.push(out, Op::AddRow { x, bias }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(shape_err("sub", av.shape(), bv.shape()));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| x - y)
            .collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data)?;
        Ok(self.push(out, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(shape_err("mul", av.shape(), bv.shape()));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data)?;
        Ok(self.push(out, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|v| v * c).collect();
        let out = Tensor::from_vec(xv.rows(), xv.cols(), data).expect("same shape");
        self.push(out, Op::Scale { x, c })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.nodes[x.0].value.data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { x })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|v| v.max(0.0)).collect();
        let out = Tensor::from_vec(xv.rows(), xv.cols(), data).expect("same shape");
        self.push(out, Op::Relu { x })
    }

    /// Column-wise max over the point (row) dimension: `n×m -> 1×m`.
    /// Ties route the gradient to the lowest row index.
    pub fn max_over_points(&mut self, x: Var) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        let (n, m) = xv.shape();
        if n == 0 {
            return Err(Error::InvalidInput("max_over_points on empty input".into()));
        }
        let mut best = xv.row_slice(0).to_vec();
        let mut argmax = vec![0usize; m];
        for i in 1..n {
            let row = xv.row_slice(i);
            for j in 0..m {
                if row[j] > best[j] {
                    best[j] = row[j];
                    argmax[j] = i;
                }
            }
        }
        let out = Tensor::from_vec(1, m, best)?;
        Ok(self.push(out, Op::MaxOverPoints { x, argmax }))
    }

    /// Numerically stable cross-entropy of softmax(logits) against `label`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let lv = &self.nodes[logits.0].value;
        if lv.rows() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "softmax_cross_entropy expects a 1xK logit row, got {}x{}",
                lv.rows(),
                lv.cols()
            )));
        }
        let k = lv.cols();
        if label >= k {
            return Err(Error::InvalidInput(format!(
                "label {label} out of range for {k} classes"
            )));
        }
        let max = lv.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = lv.data().iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();
        let loss = -(lv.data()[label] - max - z.ln());
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                probs: probs
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| if i == label { p - 1.0 } else { p })
                    .collect(),
            },
        ))
    }

    /// Mean squared element-wise error between two same-shape tensors.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(shape_err("mse", av.shape(), bv.shape()));
        }
        let n = av.len() as f64;
        let s: f64 = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        Ok(self.push(Tensor::scalar(s / n), Op::Mse { a, b }))
    }

    /// Concatenate two row vectors: `1×p ++ 1×q -> 1×(p+q)`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.rows() != 1 || bv.rows() != 1 {
            return Err(shape_err("concat", av.shape(), bv.shape()));
        }
        let mut data = av.data().to_vec();
        data.extend_from_slice(bv.data());
        let out = Tensor::from_vec(1, av.cols() + bv.cols(), data)?;
        Ok(self.push(out, Op::Concat { a, b }))
    }

    /// Learned per-channel affine: `y[i][j] = x[i][j] * gamma[j] + beta[j]`.
    pub fn affine(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (xv, gv, bv) = (
            &self.nodes[x.0].value,
            &self.nodes[gamma.0].value,
            &self.nodes[beta.0].value,
        );
        if gv.rows() != 1 || gv.cols() != xv.cols() {
            return Err(shape_err("affine gamma", xv.shape(), gv.shape()));
        }
        if bv.shape() != gv.shape() {
            return Err(shape_err("affine beta", gv.shape(), bv.shape()));
        }
        let m = xv.cols();
        let mut out = xv.clone();
        for i in 0..out.rows() {
            for j in 0..m {
                let v = out.get(i, j) * gv.get(0, j) + bv.get(0, j);
                out.set(i, j, v);
            }
        }
        Ok(self.push(out, Op::Affine { x, gamma, beta }))
    }

    /// Sub-range of a row vector.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        if xv.rows() != 1 || start + len > xv.cols() {
            return Err(Error::ShapeMismatch(format!(
                "slice [{start}..{}] of 1x{} vector",
                start + len,
                xv.cols()
            )));
        }
        let data = xv.data()[start..start + len].to_vec();
        let out = Tensor::from_vec(1, len, data)?;
        Ok(self.push(out, Op::Slice { x, start }))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|v| v.sqrt()).collect();
        let out = Tensor::from_vec(xv.rows(), xv.cols(), data).expect("same shape");
        self.push(out, Op::Sqrt { x })
    }

    /// Cross product of two 1×3 row vectors.
    pub fn cross(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != (1, 3) || bv.shape() != (1, 3) {
            return Err(shape_err("cross", av.shape(), bv.shape()));
        }
        let (x, y) = (av.data(), bv.data());
        let out = Tensor::row(&[
            x[1] * y[2] - x[2] * y[1],
            x[2] * y[0] - x[0] * y[2],
            x[0] * y[1] - x[1] * y[0],
        ]);
        Ok(self.push(out, Op::Cross { a, b }))
    }

    /// Row vector times a scalar variable.
    pub fn mul_scalar(&mut self, v: Var, s: Var) -> Result<Var> {
        let (vv, sv) = (&self.nodes[v.0].value, &self.nodes[s.0].value);
        if sv.shape() != (1, 1) {
            return Err(shape_err("mul_scalar", vv.shape(), sv.shape()));
        }
        let c = sv.item();
        let data = vv.data().iter().map(|x| x * c).collect();
        let out = Tensor::from_vec(vv.rows(), vv.cols(), data)?;
        Ok(self.push(out, Op::MulScalar { v, s }))
    }

    /// Row vector divided by a scalar variable.
    pub fn div_scalar(&mut self, v: Var, s: Var) -> Result<Var> {
        let (vv, sv) = (&self.nodes[v.0].value, &self.nodes[s.0].value);
        if sv.shape() != (1, 1) {
            return Err(shape_err("div_scalar", vv.shape(), sv.shape()));
        }
        let c = sv.item();
        if c == 0.0 {
            return Err(Error::Degenerate("div_scalar by zero".into()));
        }
        let data = vv.data().iter().map(|x| x / c).collect();
        let out = Tensor::from_vec(vv.rows(), vv.cols(), data)?;
        Ok(self.push(out, Op::DivScalar { v, s }))
    }

    /// Dot product of two row vectors, composed from `mul` and `sum`.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let p = self.mul(a, b)?;
        Ok(self.sum(p))
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad.fill(0.0);
        }
    }

    /// Populate gradients of every node with ∂root/∂node.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.nodes[root.0].value.shape() != (1, 1) {
            let (r, c) = self.nodes[root.0].value.shape();
            return Err(Error::InvalidInput(format!(
                "backward requires a scalar root, got {r}x{c}"
            )));
        }
        self.zero_grads();
        self.nodes[root.0].grad.set(0, 0, 1.0);

        for id in (0..=root.0).rev() {
            // Split borrows: take the grad out, propagate, put it back.
            let g = std::mem::replace(&mut self.nodes[id].grad, Tensor::zeros(0, 0));
            self.propagate(id, &g);
            self.nodes[id].grad = g;
        }
        Ok(())
    }

    fn add_grad(&mut self, v: Var, delta: &Tensor) {
        let g = &mut self.nodes[v.0].grad;
        debug_assert_eq!(g.shape(), delta.shape());
        for (gi, di) in g.data_mut().iter_mut().zip(delta.data()) {
            *gi += di;
        }
    }

    fn propagate(&mut self, id: usize, g: &Tensor) {
        // Copy the small saved state out of the node so parent grads can be
        // mutated without aliasing.
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (a, b) = (*a, *b);
                let da = matmul_bt(g, &self.nodes[b.0].value);
                let db = matmul_at(&self.nodes[a.0].value, g);
                self.add_grad(a, &da);
                self.add_grad(b, &db);
            }
            Op::Add { a, b } => {
                let (a, b) = (*a, *b);
                self.add_grad(a, g);
                self.add_grad(b, g);
            }
            Op::AddRow { x, bias } => {
                let (x, bias) = (*x, *bias);
                self.add_grad(x, g);
                let m = g.cols();
                let mut db = Tensor::zeros(1, m);
                for i in 0..g.rows() {
                    for j in 0..m {
                        let v = db.get(0, j) + g.get(i, j);
                        db.set(0, j, v);
                    }
                }
                self.add_grad(bias, &db);
            }
            Op::Sub { a, b } => {
                let (a, b) = (*a, *b);
                self.add_grad(a, g);
                let neg = Tensor::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data().iter().map(|v| -v).collect(),
                )
                .expect("same shape");
                self.add_grad(b, &neg);
            }
            Op::Mul { a, b } => {
                let (a, b) = (*a, *b);
                let da = {
                    let bv = &self.nodes[b.0].value;
                    Tensor::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect(),
                    )
                    .expect("same shape")
                };
                let db = {
                    let av = &self.nodes[a.0].value;
                    Tensor::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect(),
                    )
                    .expect("same shape")
                };
                self.add_grad(a, &da);
                self.add_grad(b, &db);
            }
            Op::Scale { x, c } => {
                let (x, c) = (*x, *c);
                let dx = Tensor::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data().iter().map(|v| v * c).collect(),
                )
                .expect("same shape");
                self.add_grad(x, &dx);
            }
            Op::Sum { x } => {
                let x = *x;
                let gs = g.item();
                let xv = &self.nodes[x.0].value;
                let dx = Tensor::from_vec(xv.rows(), xv.cols(), vec![gs; xv.len()])
                    .expect("same shape");
                self.add_grad(x, &dx);
            }
            Op::Relu { x } => {
                let x = *x;
                let xv = &self.nodes[x.0].value;
                let dx = Tensor::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data()
                        .iter()
                        .zip(xv.data())
                        .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                        .collect(),
                )
                .expect("same shape");
                self.add_grad(x, &dx);
            }
            Op::MaxOverPoints { x, argmax } => {
                let x = *x;
                let argmax = argmax.clone();
                let xv = &self.nodes[x.0].value;
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                for (j, &row) in argmax.iter().enumerate() {
                    dx.set(row, j, g.get(0, j));
                }
                self.add_grad(x, &dx);
            }
            Op::SoftmaxCrossEntropy { logits, probs } => {
                let logits = *logits;
                let gs = g.item();
                let dl = Tensor::from_vec(1, probs.len(), probs.iter().map(|p| p * gs).collect())
                    .expect("same shape");
                self.add_grad(logits, &dl);
            }
            Op::Mse { a, b } => {
                let (a, b) = (*a, *b);
                let gs = g.item();
                let n = self.nodes[a.0].value.len() as f64;
                let da = {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    Tensor::from_vec(
                        av.rows(),
                        av.cols(),
                        av.data()
                            .iter()
                            .zip(bv.data())
                            .map(|(x, y)| gs * 2.0 * (x - y) / n)
                            .collect(),
                    )
                    .expect("same shape")
                };
                let db = Tensor::from_vec(
                    da.rows(),
                    da.cols(),
                    da.data().iter().map(|v| -v).collect(),
                )
                .expect("same shape");
                self.add_grad(a, &da);
                self.add_grad(b, &db);
            }
            Op::Concat { a, b } => {
                let (a, b) = (*a, *b);
                let p = self.nodes[a.0].value.cols();
                let da = Tensor::from_vec(1, p, g.data()[..p].to_vec()).expect("same shape");
                let db = Tensor::from_vec(1, g.cols() - p, g.data()[p..].to_vec())
                    .expect("same shape");
                self.add_grad(a, &da);
                self.add_grad(b, &db);
            }
            Op::Affine { x, gamma, beta } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let m = g.cols();
                let dx = {
                    let gv = &self.nodes[gamma.0].value;
                    let mut t = Tensor::zeros(g.rows(), m);
                    for i in 0..g.rows() {
                        for j in 0..m {
                            t.set(i, j, g.get(i, j) * gv.get(0, j));
                        }
                    }
                    t
                };
                let (dgamma, dbeta) = {
                    let xv = &self.nodes[x.0].value;
                    let mut dg = Tensor::zeros(1, m);
                    let mut db = Tensor::zeros(1, m);
                    for i in 0..g.rows() {
                        for j in 0..m {
                            dg.set(0, j, dg.get(0, j) + g.get(i, j) * xv.get(i, j));
                            db.set(0, j, db.get(0, j) + g.get(i, j));
                        }
                    }
                    (dg, db)
                };
                self.add_grad(x, &dx);
                self.add_grad(gamma, &dgamma);
                self.add_grad(beta, &dbeta);
            }
            Op::Slice { x, start } => {
                let (x, start) = (*x, *start);
                let xv = &self.nodes[x.0].value;
                let mut dx = Tensor::zeros(1, xv.cols());
                for (j, gv) in g.data().iter().enumerate() {
                    dx.set(0, start + j, *gv);
                }
                self.add_grad(x, &dx);
            }
            Op::Sqrt { x } => {
                let x = *x;
                let yv = &self.nodes[id].value;
                let dx = Tensor::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data()
                        .iter()
                        .zip(yv.data())
                        .map(|(gv, y)| gv / (2.0 * y))
                        .collect(),
                )
                .expect("same shape");
                self.add_grad(x, &dx);
            }
            Op::Cross { a, b } => {
                let (a, b) = (*a, *b);
                let cross3 = |x: &[f64], y: &[f64]| -> [f64; 3] {
                    [
                        x[1] * y[2] - x[2] * y[1],
                        x[2] * y[0] - x[0] * y[2],
                        x[0] * y[1] - x[1] * y[0],
                    ]
                };
                // c = a×b: grad_a = b×g, grad_b = g×a.
                let da = cross3(self.nodes[b.0].value.data(), g.data());
                let db = cross3(g.data(), self.nodes[a.0].value.data());
                self.add_grad(a, &Tensor::row(&da));
                self.add_grad(b, &Tensor::row(&db));
            }
            Op::MulScalar { v, s } => {
                let (v, s) = (*v, *s);
                let c = self.nodes[s.0].value.item();
                let dv = Tensor::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data().iter().map(|x| x * c).collect(),
                )
                .expect("same shape");
                let ds: f64 = g
                    .data()
                    .iter()
                    .zip(self.nodes[v.0].value.data())
                    .map(|(gv, xv)| gv * xv)
                    .sum();
                self.add_grad(v, &dv);
                self.add_grad(s, &Tensor::scalar(ds));
            }
            Op::DivScalar { v, s } => {
                let (v, s) = (*v, *s);
                let c = self.nodes[s.0].value.item();
                let dv = Tensor::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data().iter().map(|x| x / c).collect(),
                )
                .expect("same shape");
                let ds: f64 = g
                    .data()
                    .iter()
                    .zip(self.nodes[v.0].value.data())
                    .map(|(gv, xv)| -gv * xv / (c * c))
                    .sum();
                self.add_grad(v, &dv);
                self.add_grad(s, &Tensor::scalar(ds));
            }
        }
    }
}
