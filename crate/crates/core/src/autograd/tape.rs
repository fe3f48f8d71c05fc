use crate::error::{Error, Result};
use crate::tensor::{self, Tensor2D};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    Relu(Var),
    Abs(Var),
    Cdist(Var, Var),
    Shift(Var, f64),
    Inhibit(Var, Var),
    SignedInhibit(Var, Var),
    Softmax(Var),
    LayerNorm(Var),
    SegmentMean(Var, usize),
    RowSlice(Var, usize),
    VStack(Vec<Var>),
    Mse(Var, Var),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor2D,
    grad: Tensor2D,
}

/// Reverse-mode recorder over [`Tensor2D`] values.
///
/// Each op evaluates eagerly and appends a node; [`Tape::backward`] walks the
/// nodes in reverse. At ReLU and `|x|` kinks the subgradient 0 is used, and
/// [`Tape::kink_margin`] reports how close the forward pass came to one.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    kink_margin: f64,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn step(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn min_abs(xs: impl Iterator<Item = f64>) -> f64 {
    xs.fold(f64::INFINITY, |m, x| m.min(x.abs()))
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), kink_margin: f64::INFINITY }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor2D {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> &Tensor2D {
        &self.nodes[v.0].grad
    }

    /// Smallest distance of any ReLU / `|x|` argument to its kink so far.
    pub fn kink_margin(&self) -> f64 {
        self.kink_margin
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad.data_mut().fill(0.0);
        }
    }

    fn push(&mut self, op: Op, value: Tensor2D) -> Var {
        let (r, c) = value.shape();
        self.nodes.push(Node { op, value, grad: Tensor2D::zeros(r, c) });
        Var(self.nodes.len() - 1)
    }

    fn note_kinks(&mut self, margin: f64) {
        self.kink_margin = self.kink_margin.min(margin);
    }

    pub fn leaf(&mut self, value: Tensor2D) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::add(self.value(a), self.value(b))?;
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::sub(self.value(a), self.value(b))?;
        Ok(self.push(Op::Sub(a, b), out))
    }

    /// Adds the `1 x cols` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::add_row(self.value(a), self.value(b))?;
        Ok(self.push(Op::AddRow(a, b), out))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = tensor::scale(self.value(a), c);
        self.push(Op::Scale(a, c), out)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(Op::Transpose(a), out)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let (out, margin) = (tensor::relu(x), min_abs(x.data().iter().copied()));
        self.note_kinks(margin);
        self.push(Op::Relu(a), out)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let (out, margin) = (tensor::abs(x), min_abs(x.data().iter().copied()));
        self.note_kinks(margin);
        self.push(Op::Abs(a), out)
    }

    pub fn cdist_manhattan(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let out = tensor::cdist_manhattan(x, y)?;
        let mut margin = f64::INFINITY;
        for i in 0..x.rows() {
            for j in 0..y.rows() {
                margin = margin.min(min_abs(x.row(i).iter().zip(y.row(j)).map(|(p, q)| p - q)));
            }
        }
        self.note_kinks(margin);
        Ok(self.push(Op::Cdist(a, b), out))
    }

    /// `relu(z - alpha)`.
    pub fn shift_scores(&mut self, z: Var, alpha: f64) -> Result<Var> {
        let x = self.value(z);
        let out = crate::attention::shift_scores(x, alpha)?;
        let margin = min_abs(x.data().iter().map(|v| v - alpha));
        self.note_kinks(margin);
        Ok(self.push(Op::Shift(z, alpha), out))
    }

    /// `H[i][k] = sum_j relu(V[j][k] - Z[i][j])`.
    pub fn inhibit(&mut self, v: Var, z: Var) -> Result<Var> {
        let (vv, zz) = (self.value(v), self.value(z));
        let out = crate::attention::inhibit_fused(vv, zz)?;
        let mut margin = f64::INFINITY;
        for i in 0..zz.rows() {
            for j in 0..vv.rows() {
                margin = margin.min(min_abs(vv.row(j).iter().map(|x| x - zz[(i, j)])));
            }
        }
        self.note_kinks(margin);
        Ok(self.push(Op::Inhibit(v, z), out))
    }

    /// `H[i][k] = sum_j relu(V+[j][k] - Z[i][j]) + min(0, V-[j][k] + Z[i][j])`.
    pub fn signed_inhibit(&mut self, v: Var, z: Var) -> Result<Var> {
        let (vv, zz) = (self.value(v), self.value(z));
        let out = crate::attention::signed_inhibit_fused(vv, zz)?;
        let mut margin = min_abs(vv.data().iter().copied());
        for i in 0..zz.rows() {
            for j in 0..vv.rows() {
                let zij = zz[(i, j)];
                for &x in vv.row(j) {
                    margin = margin.min((x.max(0.0) - zij).abs()).min((x.min(0.0) + zij).abs());
                }
            }
        }
        self.note_kinks(margin);
        Ok(self.push(Op::SignedInhibit(v, z), out))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = tensor::softmax_rows(self.value(a));
        self.push(Op::Softmax(a), out)
    }

    pub fn layer_norm(&mut self, a: Var) -> Var {
        let out = crate::attention::layer_norm(self.value(a));
        self.push(Op::LayerNorm(a), out)
    }

    /// Column means over consecutive blocks of `seg` rows: `(rows, c) -> (rows / seg, c)`.
    pub fn segment_mean(&mut self, a: Var, seg: usize) -> Result<Var> {
        let x = self.value(a);
        if seg == 0 || !x.rows().is_multiple_of(seg) {
            return Err(Error::invalid(format!("{} rows do not split into blocks of {seg}", x.rows())));
        }
        let mut out = Tensor2D::zeros(x.rows() / seg, x.cols());
        for i in 0..x.rows() {
            for (o, &v) in out.row_mut(i / seg).iter_mut().zip(x.row(i)) {
                *o += v / seg as f64;
            }
        }
        Ok(self.push(Op::SegmentMean(a, seg), out))
    }

    /// Mean over all rows, shape `(1, cols)`.
    pub fn mean_pool(&mut self, a: Var) -> Result<Var> {
        let rows = self.value(a).rows();
        self.segment_mean(a, rows)
    }

    pub fn row_slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if start + len > x.rows() {
            return Err(Error::invalid(format!("rows {start}..{} out of {}", start + len, x.rows())));
        }
        let c = x.cols();
        let out = Tensor2D::from_vec(len, c, x.data()[start * c..(start + len) * c].to_vec())?;
        Ok(self.push(Op::RowSlice(a, start), out))
    }

    pub fn vstack(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts.first().map_or(0, |&p| self.value(p).cols());
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let x = self.value(p);
            if x.cols() != cols {
                return Err(Error::shape("vstack", (rows, cols), x.shape()));
            }
            rows += x.rows();
            data.extend_from_slice(x.data());
        }
        let out = Tensor2D::from_vec(rows, cols, data)?;
        Ok(self.push(Op::VStack(parts.to_vec()), out))
    }

    /// Mean squared error, shape `(1, 1)`.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let diff = tensor::sub(self.value(pred), self.value(target))?;
        let n = diff.data().len().max(1) as f64;
        let loss = diff.data().iter().map(|d| d * d).sum::<f64>() / n;
        Ok(self.push(Op::Mse(pred, target), Tensor2D::filled(1, 1, loss)))
    }

    /// `relu(X W1^T + b1) W2 + b2`.
    pub fn ffn(&mut self, x: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Result<Var> {
        let w1t = self.transpose(w1);
        let pre = self.matmul(x, w1t)?;
        let pre = self.add_row(pre, b1)?;
        let hidden = self.relu(pre);
        let out = self.matmul(hidden, w2)?;
        self.add_row(out, b2)
    }

    /// Back-propagates from a `1 x 1` output with seed 1.
    pub fn backward(&mut self, out: Var) -> Result<()> {
        let shape = self.value(out).shape();
        if shape != (1, 1) {
            return Err(Error::shape("backward", shape, (1, 1)));
        }
        self.backward_with(out, Tensor2D::filled(1, 1, 1.0))
    }

    /// Back-propagates `seed = d(objective)/d(out)`. Gradients accumulate.
    pub fn backward_with(&mut self, out: Var, seed: Tensor2D) -> Result<()> {
        if seed.shape() != self.value(out).shape() {
            return Err(Error::shape("backward", self.value(out).shape(), seed.shape()));
        }
        for (g, s) in self.nodes[out.0].grad.data_mut().iter_mut().zip(seed.data()) {
            *g += s;
        }
        for id in (0..=out.0).rev() {
            if matches!(self.nodes[id].op, Op::Leaf) {
                continue;
            }
            let g = self.nodes[id].grad.clone();
            if g.data().iter().all(|&x| x == 0.0) {
                continue;
            }
            let op = self.nodes[id].op.clone();
            self.backprop(id, &op, &g)?;
        }
        Ok(())
    }

    fn acc(&mut self, v: Var, delta: &Tensor2D) {
        for (g, d) in self.nodes[v.0].grad.data_mut().iter_mut().zip(delta.data()) {
            *g += d;
        }
    }

    fn backprop(&mut self, id: usize, op: &Op, g: &Tensor2D) -> Result<()> {
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = tensor::matmul(g, &self.value(b).transpose())?;
                let db = tensor::matmul(&self.value(a).transpose(), g)?;
                self.acc(a, &da);
                self.acc(b, &db);
            }
            Op::Add(a, b) => {
                self.acc(a, g);
                self.acc(b, g);
            }
            Op::Sub(a, b) => {
                self.acc(a, g);
                self.acc(b, &tensor::scale(g, -1.0));
            }
            Op::AddRow(a, b) => {
                self.acc(a, g);
                self.acc(b, &tensor::colsum(g));
            }
            Op::Scale(a, c) => self.acc(a, &tensor::scale(g, c)),
            Op::Transpose(a) => self.acc(a, &g.transpose()),
            Op::Relu(a) => {
                let d = self.value(a).zip_map(g, "relu", |x, gi| step(x) * gi)?;
                self.acc(a, &d);
            }
            Op::Abs(a) => {
                let d = self.value(a).zip_map(g, "abs", |x, gi| sign(x) * gi)?;
                self.acc(a, &d);
            }
            Op::Shift(a, alpha) => {
                let d = self.value(a).zip_map(g, "shift_scores", |x, gi| step(x - alpha) * gi)?;
                self.acc(a, &d);
            }
            Op::Cdist(a, b) => {
                let (x, y) = (self.value(a), self.value(b));
                let mut da = Tensor2D::zeros(x.rows(), x.cols());
                let mut db = Tensor2D::zeros(y.rows(), y.cols());
                for i in 0..x.rows() {
                    for j in 0..y.rows() {
                        let gij = g[(i, j)];
                        for k in 0..x.cols() {
                            let s = sign(x[(i, k)] - y[(j, k)]) * gij;
                            da[(i, k)] += s;
                            db[(j, k)] -= s;
                        }
                    }
                }
                self.acc(a, &da);
                self.acc(b, &db);
            }
            Op::Inhibit(v, z) => {
                let (vv, zz) = (self.value(v), self.value(z));
                let mut dv = Tensor2D::zeros(vv.rows(), vv.cols());
                let mut dz = Tensor2D::zeros(zz.rows(), zz.cols());
                for i in 0..zz.rows() {
                    for j in 0..vv.rows() {
                        let zij = zz[(i, j)];
                        let mut acc = 0.0;
                        for k in 0..vv.cols() {
                            if vv[(j, k)] > zij {
                                dv[(j, k)] += g[(i, k)];
                                acc += g[(i, k)];
                            }
                        }
                        dz[(i, j)] -= acc;
                    }
                }
                self.acc(v, &dv);
                self.acc(z, &dz);
            }
            Op::SignedInhibit(v, z) => {
                let (vv, zz) = (self.value(v), self.value(z));
                let mut dv = Tensor2D::zeros(vv.rows(), vv.cols());
                let mut dz = Tensor2D::zeros(zz.rows(), zz.cols());
                for i in 0..zz.rows() {
                    for j in 0..vv.rows() {
                        let zij = zz[(i, j)];
                        for k in 0..vv.cols() {
                            let (x, gik) = (vv[(j, k)], g[(i, k)]);
                            let (pos, neg) = (x.max(0.0), x.min(0.0));
                            // relu(V+ - Z) and min(0, V- + Z)
                            let a = step(pos - zij);
                            let b = step(-(neg + zij));
                            dv[(j, k)] += gik * (a * step(x) + b * step(-x));
                            dz[(i, j)] += gik * (b - a);
                        }
                    }
                }
                self.acc(v, &dv);
                self.acc(z, &dz);
            }
            Op::Softmax(a) => {
                let y = &self.nodes[id].value;
                let mut d = Tensor2D::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let dot: f64 = y.row(i).iter().zip(g.row(i)).map(|(p, q)| p * q).sum();
                    for (k, o) in d.row_mut(i).iter_mut().enumerate() {
                        *o = y[(i, k)] * (g[(i, k)] - dot);
                    }
                }
                self.acc(a, &d);
            }
            Op::LayerNorm(a) => {
                let (x, y) = (self.value(a), &self.nodes[id].value);
                let n = x.cols() as f64;
                let mut d = Tensor2D::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    let row = x.row(i);
                    let mean = row.iter().sum::<f64>() / n;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    let inv = 1.0 / (var + crate::attention::LAYER_NORM_EPS).sqrt();
                    let gsum: f64 = g.row(i).iter().sum();
                    let gy: f64 = g.row(i).iter().zip(y.row(i)).map(|(p, q)| p * q).sum();
                    for (k, o) in d.row_mut(i).iter_mut().enumerate() {
                        *o = inv / n * (n * g[(i, k)] - gsum - y[(i, k)] * gy);
                    }
                }
                self.acc(a, &d);
            }
            Op::SegmentMean(a, seg) => {
                let (r, c) = self.value(a).shape();
                let mut d = Tensor2D::zeros(r, c);
                for i in 0..r {
                    for (o, &gi) in d.row_mut(i).iter_mut().zip(g.row(i / seg)) {
                        *o = gi / seg as f64;
                    }
                }
                self.acc(a, &d);
            }
            Op::RowSlice(a, start) => {
                let c = g.cols();
                let grad = &mut self.nodes[a.0].grad;
                for (o, &gi) in grad.data_mut()[start * c..].iter_mut().zip(g.data()) {
                    *o += gi;
                }
            }
            Op::VStack(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].grad.data().len();
                    let chunk = &g.data()[offset..offset + len];
                    for (o, &gi) in self.nodes[p.0].grad.data_mut().iter_mut().zip(chunk) {
                        *o += gi;
                    }
                    offset += len;
                }
            }
            Op::Mse(p, t) => {
                let diff = tensor::sub(self.value(p), self.value(t))?;
                let n = diff.data().len().max(1) as f64;
                let d = tensor::scale(&diff, 2.0 * g[(0, 0)] / n);
                self.acc(p, &d);
                self.acc(t, &tensor::scale(&d, -1.0));
            }
        }
        Ok(())
    }
}
