use super::{dot, Tensor, NORM_EPS};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryOp {
    Sigmoid,
    Tanh,
    LeakyRelu(f64),
    Exp,
    Log,
    Neg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Unary(UnaryOp, Var),
    Binary(BinaryOp, Var, Var),
    MatMul(Var, Var),
    MatVec(Var, Var),
    MatTVec(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    Lerp(Var, Var, Var),
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    Sum(Vec<Var>),
    Row(Var, usize),
    L2Normalize(Var),
    NormalizeRows(Var),
    Dot(Var, Var),
    SoftmaxScaled(Var, f64),
    CrossEntropy(Var, f64, usize),
    Pick(Var, usize),
    SumAll(Var),
}

enum Value<'p> {
    Owned(Tensor),
    Borrowed(&'p Tensor),
}

struct Node<'p> {
    value: Value<'p>,
    op: Op,
}

/// Append-only record of a forward computation.
///
/// Nodes are only ever pushed after their inputs, so insertion order is a
/// topological order and the backward sweep is a single reverse pass.
/// Leaves created with [`Tape::param`] borrow their tensor instead of copying
/// it, which keeps large embedding tables off the per-example allocation path.
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the output with respect to `v`, `None` when `v` does not
    /// influence the output.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Dimension {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

/// `x + g (y - x)`, kept inside the segment `[x, y]` that rounding could
/// otherwise leave by an ulp. Equal endpoints come back unchanged.
fn blend(x: f64, y: f64, g: f64) -> f64 {
    (x + g * (y - x)).clamp(x.min(y), x.max(y))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that owns its value.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf that borrows its value for the lifetime of the tape.
    pub fn param(&mut self, value: &'p Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Borrowed(value),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }

    pub fn unary(&mut self, op: UnaryOp, x: Var) -> Result<Var> {
        let input = self.value(x);
        let data: Vec<f64> = match op {
            UnaryOp::Sigmoid => input.data().iter().map(|&v| sigmoid(v)).collect(),
            UnaryOp::Tanh => input.data().iter().map(|v| v.tanh()).collect(),
            UnaryOp::LeakyRelu(slope) => {
                if !(slope > 0.0 && slope < 1.0) {
                    return Err(Error::Domain {
                        op: "leaky_relu",
                        detail: format!("slope {slope} outside (0, 1)"),
                    });
                }
                input
                    .data()
                    .iter()
                    .map(|&v| if v > 0.0 { v } else { slope * v })
                    .collect()
            }
            UnaryOp::Exp => input.data().iter().map(|v| v.exp()).collect(),
            UnaryOp::Log => {
                if let Some(bad) = input.data().iter().find(|&&v| v <= 0.0) {
                    return Err(Error::Domain {
                        op: "log",
                        detail: format!("non-positive argument {bad}"),
                    });
                }
                input.data().iter().map(|v| v.ln()).collect()
            }
            UnaryOp::Neg => input.data().iter().map(|v| -v).collect(),
        };
        let out = Tensor::new(input.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Unary(op, x)))
    }

    pub fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("elementwise", ta, tb));
        }
        let f: fn(f64, f64) -> f64 = match op {
            BinaryOp::Add => |x, y| x + y,
            BinaryOp::Sub => |x, y| x - y,
            BinaryOp::Mul => |x, y| x * y,
        };
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Binary(op, a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Tanh, x)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        self.unary(UnaryOp::LeakyRelu(slope), x)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Exp, x)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Log, x)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Neg, x)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `W x` for `W: [m, k]` and `x: [k]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (tw, tx) = (self.value(w), self.value(x));
        if tw.shape().len() != 2 || tx.shape().len() != 1 || tw.shape()[1] != tx.len() {
            return Err(shape_err("matvec", tw, tx));
        }
        let out: Vec<f64> = (0..tw.rows()).map(|i| dot(tw.row(i), tx.data())).collect();
        Ok(self.push(Tensor::vector(out), Op::MatVec(w, x)))
    }

    /// `Wᵀ x` for `W: [n, d]` and `x: [n]`, i.e. the `x`-weighted sum of rows.
    pub fn matvec_t(&mut self, w: Var, x: Var) -> Result<Var> {
        let (tw, tx) = (self.value(w), self.value(x));
        if tw.shape().len() != 2 || tx.shape().len() != 1 || tw.rows() != tx.len() {
            return Err(shape_err("matvec_t", tw, tx));
        }
        let mut out = vec![0.0; tw.cols()];
        for (i, &c) in tx.data().iter().enumerate() {
            for (o, v) in out.iter_mut().zip(tw.row(i)) {
                *o += c * v;
            }
        }
        Ok(self.push(Tensor::vector(out), Op::MatTVec(w, x)))
    }

    /// `W x + b`.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var> {
        let wx = self.matvec(w, x)?;
        self.add(wx, b)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let t = self.value(x);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v * c).collect())?;
        Ok(self.push(out, Op::Scale(x, c)))
    }

    /// Multiplies `x` by the one-element tensor `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        let (tx, ts) = (self.value(x), self.value(s));
        if ts.len() != 1 {
            return Err(shape_err("scale_by", tx, ts));
        }
        let c = ts.item();
        let out = Tensor::new(tx.shape().to_vec(), tx.data().iter().map(|v| v * c).collect())?;
        Ok(self.push(out, Op::ScaleBy(x, s)))
    }

    /// `(1 - g) ⊙ a + g ⊙ b`, with `g` either the shape of `a` or a single
    /// element broadcast over all coordinates.
    pub fn lerp(&mut self, a: Var, b: Var, gate: Var) -> Result<Var> {
        let (ta, tb, tg) = (self.value(a), self.value(b), self.value(gate));
        if ta.shape() != tb.shape() {
            return Err(shape_err("lerp", ta, tb));
        }
        let data: Vec<f64> = if tg.shape() == ta.shape() {
            ta.data()
                .iter()
                .zip(tb.data())
                .zip(tg.data())
                .map(|((&x, &y), &g)| blend(x, y, g))
                .collect()
        } else if tg.len() == 1 {
            let g = tg.item();
            ta.data().iter().zip(tb.data()).map(|(&x, &y)| blend(x, y, g)).collect()
        } else {
            return Err(shape_err("lerp", ta, tg));
        };
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Lerp(a, b, gate)))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.shape().len() != 1 {
                return Err(Error::Dimension {
                    op: "concat",
                    left: t.shape().to_vec(),
                    right: vec![],
                });
            }
            data.extend_from_slice(t.data());
        }
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec())))
    }

    /// Stacks equal-length vectors into a `[n, d]` matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows.first().ok_or(Error::Degenerate {
            op: "stack",
            detail: "no rows".into(),
        })?;
        let d = self.value(*first).len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            let t = self.value(r);
            if t.shape() != [d] {
                return Err(shape_err("stack", self.value(*first), t));
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::matrix(rows.len(), d, data)?;
        Ok(self.push(out, Op::Stack(rows.to_vec())))
    }

    pub fn sum(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::Degenerate {
            op: "sum",
            detail: "no operands".into(),
        })?;
        let mut acc = self.value(*first).clone();
        for &p in &parts[1..] {
            let t = self.value(p);
            if t.shape() != acc.shape() {
                return Err(shape_err("sum", &acc, t));
            }
            for (a, v) in acc.data_mut().iter_mut().zip(t.data()) {
                *a += v;
            }
        }
        Ok(self.push(acc, Op::Sum(parts.to_vec())))
    }

    pub fn mean(&mut self, parts: &[Var]) -> Result<Var> {
        let s = self.sum(parts)?;
        self.scale(s, 1.0 / parts.len() as f64)
    }

    /// Row `i` of a matrix, as a vector.
    pub fn row(&mut self, table: Var, i: usize) -> Result<Var> {
        let t = self.value(table);
        if t.shape().len() != 2 || i >= t.rows() {
            return Err(Error::Dimension {
                op: "row",
                left: t.shape().to_vec(),
                right: vec![i],
            });
        }
        let out = Tensor::vector(t.row(i).to_vec());
        Ok(self.push(out, Op::Row(table, i)))
    }

    pub fn l2_normalize(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let n = t.norm();
        if n <= NORM_EPS {
            return Err(Error::Degenerate {
                op: "l2_normalize",
                detail: format!("norm {n:e}"),
            });
        }
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| v / n).collect())?;
        Ok(self.push(out, Op::L2Normalize(x)))
    }

    /// Normalizes every row of a matrix to unit L2 norm.
    pub fn normalize_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 2 {
            return Err(shape_err("normalize_rows", t, t));
        }
        let mut out = t.clone();
        for i in 0..t.rows() {
            let row = out.row_mut(i);
            let n = dot(row, row).sqrt();
            if n <= NORM_EPS {
                return Err(Error::Degenerate {
                    op: "normalize_rows",
                    detail: format!("row {i} has norm {n:e}"),
                });
            }
            row.iter_mut().for_each(|v| *v /= n);
        }
        Ok(self.push(out, Op::NormalizeRows(x)))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("dot", ta, tb));
        }
        let out = Tensor::scalar(dot(ta.data(), tb.data()));
        Ok(self.push(out, Op::Dot(a, b)))
    }

    pub fn softmax_scaled(&mut self, logits: Var, tau: f64) -> Result<Var> {
        let t = self.value(logits);
        if t.is_empty() || t.shape().len() != 1 {
            return Err(Error::Degenerate {
                op: "softmax_scaled",
                detail: format!("logits of shape {:?}", t.shape()),
            });
        }
        let max = t.data().iter().fold(f64::NEG_INFINITY, |m, &v| m.max(tau * v));
        let mut data: Vec<f64> = t.data().iter().map(|&v| (tau * v - max).exp()).collect();
        let z: f64 = data.iter().sum();
        data.iter_mut().for_each(|v| *v /= z);
        Ok(self.push(Tensor::vector(data), Op::SoftmaxScaled(logits, tau)))
    }

    /// `-log softmax(tau * logits)[target]`, evaluated as
    /// `log(1 + sum_{k != target} exp(tau (x_k - x_target)))` so that logits
    /// far below the target contribute without cancellation.
    pub fn scaled_cross_entropy(&mut self, logits: Var, tau: f64, target: usize) -> Result<Var> {
        let t = self.value(logits);
        if t.shape().len() != 1 || target >= t.len() {
            return Err(Error::Dimension {
                op: "scaled_cross_entropy",
                left: t.shape().to_vec(),
                right: vec![target],
            });
        }
        let x = t.data();
        let z = |k: usize| tau * (x[k] - x[target]);
        let top = (0..x.len()).map(z).fold(f64::NEG_INFINITY, f64::max);
        let loss = if top <= 700.0 {
            (0..x.len())
                .filter(|&k| k != target)
                .map(|k| z(k).exp())
                .sum::<f64>()
                .ln_1p()
        } else {
            top + (0..x.len()).map(|k| (z(k) - top).exp()).sum::<f64>().ln()
        };
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy(logits, tau, target)))
    }

    pub fn pick(&mut self, x: Var, i: usize) -> Result<Var> {
        let t = self.value(x);
        if i >= t.len() {
            return Err(Error::Dimension {
                op: "pick",
                left: t.shape().to_vec(),
                right: vec![i],
            });
        }
        let out = Tensor::scalar(t.data()[i]);
        Ok(self.push(out, Op::Pick(x, i)))
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(x).data().iter().sum());
        Ok(self.push(out, Op::SumAll(x)))
    }

    /// Reverse sweep from the one-element node `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(Error::Dimension {
                op: "backward",
                left: out.shape().to_vec(),
                right: vec![1],
            });
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(output.0 + 1);
        grads.resize_with(output.0 + 1, || None);
        grads[output.0] = Some(Tensor::new(out.shape().to_vec(), vec![1.0])?);

        for id in (0..=output.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[id];
        let y = self.value(Var(id));
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Unary(op, x) => {
                let xv = self.value(*x).data();
                let yv = y.data();
                let acc = slot(grads, self, *x);
                match op {
                    UnaryOp::Sigmoid => {
                        for i in 0..acc.len() {
                            acc[i] += gd[i] * yv[i] * (1.0 - yv[i]);
                        }
                    }
                    UnaryOp::Tanh => {
                        for i in 0..acc.len() {
                            acc[i] += gd[i] * (1.0 - yv[i] * yv[i]);
                        }
                    }
                    UnaryOp::LeakyRelu(slope) => {
                        for i in 0..acc.len() {
                            acc[i] += if xv[i] > 0.0 { gd[i] } else { slope * gd[i] };
                        }
                    }
                    UnaryOp::Exp => {
                        for i in 0..acc.len() {
                            acc[i] += gd[i] * yv[i];
                        }
                    }
                    UnaryOp::Log => {
                        for i in 0..acc.len() {
                            acc[i] += gd[i] / xv[i];
                        }
                    }
                    UnaryOp::Neg => {
                        for i in 0..acc.len() {
                            acc[i] -= gd[i];
                        }
                    }
                }
            }
            Op::Binary(op, a, b) => match op {
                BinaryOp::Add => {
                    add_into(slot(grads, self, *a), gd, 1.0);
                    add_into(slot(grads, self, *b), gd, 1.0);
                }
                BinaryOp::Sub => {
                    add_into(slot(grads, self, *a), gd, 1.0);
                    add_into(slot(grads, self, *b), gd, -1.0);
                }
                BinaryOp::Mul => {
                    let bv = self.value(*b).data();
                    let acc = slot(grads, self, *a);
                    for i in 0..acc.len() {
                        acc[i] += gd[i] * bv[i];
                    }
                    let av = self.value(*a).data();
                    let acc = slot(grads, self, *b);
                    for i in 0..acc.len() {
                        acc[i] += gd[i] * av[i];
                    }
                }
            },
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                // shapes were validated in the forward pass
                let ga = g.matmul(&tb.transpose().expect("2-d")).expect("matmul shapes");
                add_into(slot(grads, self, *a), ga.data(), 1.0);
                let gb = ta.transpose().expect("2-d").matmul(g).expect("matmul shapes");
                add_into(slot(grads, self, *b), gb.data(), 1.0);
            }
            Op::MatVec(w, x) => {
                let (tw, tx) = (self.value(*w), self.value(*x));
                let k = tx.len();
                {
                    let acc = slot(grads, self, *w);
                    for (i, &gi) in gd.iter().enumerate() {
                        if gi == 0.0 {
                            continue;
                        }
                        for (a, xv) in acc[i * k..(i + 1) * k].iter_mut().zip(tx.data()) {
                            *a += gi * xv;
                        }
                    }
                }
                let acc = slot(grads, self, *x);
                for (i, &gi) in gd.iter().enumerate() {
                    if gi == 0.0 {
                        continue;
                    }
                    for (a, wv) in acc.iter_mut().zip(tw.row(i)) {
                        *a += gi * wv;
                    }
                }
            }
            Op::MatTVec(w, x) => {
                let (tw, tx) = (self.value(*w), self.value(*x));
                let d = tw.cols();
                {
                    let acc = slot(grads, self, *w);
                    for (i, &c) in tx.data().iter().enumerate() {
                        for (a, gv) in acc[i * d..(i + 1) * d].iter_mut().zip(gd) {
                            *a += c * gv;
                        }
                    }
                }
                let acc = slot(grads, self, *x);
                for (i, a) in acc.iter_mut().enumerate() {
                    *a += dot(tw.row(i), gd);
                }
            }
            Op::Scale(x, c) => add_into(slot(grads, self, *x), gd, *c),
            Op::ScaleBy(x, s) => {
                let c = self.value(*s).item();
                add_into(slot(grads, self, *x), gd, c);
                let gs = dot(self.value(*x).data(), gd);
                slot(grads, self, *s)[0] += gs;
            }
            Op::Lerp(a, b, gate) => {
                let (av, bv, tg) = (self.value(*a).data(), self.value(*b).data(), self.value(*gate));
                let broadcast = tg.len() == 1 && av.len() != 1;
                let gate_at = |i: usize| if broadcast { tg.data()[0] } else { tg.data()[i] };
                {
                    let acc = slot(grads, self, *a);
                    for i in 0..acc.len() {
                        acc[i] += (1.0 - gate_at(i)) * gd[i];
                    }
                }
                {
                    let acc = slot(grads, self, *b);
                    for i in 0..acc.len() {
                        acc[i] += gate_at(i) * gd[i];
                    }
                }
                let acc = slot(grads, self, *gate);
                if broadcast {
                    acc[0] += (0..av.len()).map(|i| (bv[i] - av[i]) * gd[i]).sum::<f64>();
                } else {
                    for i in 0..acc.len() {
                        acc[i] += (bv[i] - av[i]) * gd[i];
                    }
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    add_into(slot(grads, self, p), &gd[offset..offset + n], 1.0);
                    offset += n;
                }
            }
            Op::Stack(rows) => {
                let d = y.cols();
                for (i, &r) in rows.iter().enumerate() {
                    add_into(slot(grads, self, r), &gd[i * d..(i + 1) * d], 1.0);
                }
            }
            Op::Sum(parts) => {
                for &p in parts {
                    add_into(slot(grads, self, p), gd, 1.0);
                }
            }
            Op::Row(table, i) => {
                let d = gd.len();
                let acc = slot(grads, self, *table);
                add_into(&mut acc[i * d..(i + 1) * d], gd, 1.0);
            }
            Op::L2Normalize(x) => {
                let n = self.value(*x).norm();
                let yv = y.data();
                let proj = dot(yv, gd);
                let acc = slot(grads, self, *x);
                for i in 0..acc.len() {
                    acc[i] += (gd[i] - yv[i] * proj) / n;
                }
            }
            Op::NormalizeRows(x) => {
                let tx = self.value(*x);
                let d = tx.cols();
                let norms: Vec<f64> = (0..tx.rows()).map(|i| dot(tx.row(i), tx.row(i)).sqrt()).collect();
                let acc = slot(grads, self, *x);
                for (i, n) in norms.iter().enumerate() {
                    let yr = y.row(i);
                    let gr = &gd[i * d..(i + 1) * d];
                    let proj = dot(yr, gr);
                    for j in 0..d {
                        acc[i * d + j] += (gr[j] - yr[j] * proj) / n;
                    }
                }
            }
            Op::Dot(a, b) => {
                let g0 = gd[0];
                let bv = self.value(*b).data();
                add_into(slot(grads, self, *a), bv, g0);
                let av = self.value(*a).data();
                add_into(slot(grads, self, *b), av, g0);
            }
            Op::SoftmaxScaled(x, tau) => {
                let yv = y.data();
                let proj = dot(yv, gd);
                let acc = slot(grads, self, *x);
                for i in 0..acc.len() {
                    acc[i] += tau * yv[i] * (gd[i] - proj);
                }
            }
            Op::CrossEntropy(x, tau, target) => {
                let xv = self.value(*x).data();
                let max = xv.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let e: Vec<f64> = xv.iter().map(|&v| (tau * (v - max)).exp()).collect();
                let z: f64 = e.iter().sum();
                let acc = slot(grads, self, *x);
                for (k, a) in acc.iter_mut().enumerate() {
                    let onehot = if k == *target { 1.0 } else { 0.0 };
                    *a += gd[0] * tau * (e[k] / z - onehot);
                }
            }
            Op::Pick(x, i) => {
                slot(grads, self, *x)[*i] += gd[0];
            }
            Op::SumAll(x) => {
                let g0 = gd[0];
                slot(grads, self, *x).iter_mut().for_each(|a| *a += g0);
            }
        }
    }
}

fn slot<'g>(grads: &'g mut [Option<Tensor>], tape: &Tape<'_>, v: Var) -> &'g mut [f64] {
    grads[v.0]
        .get_or_insert_with(|| Tensor::zeros(tape.value(v).shape()))
        .data_mut()
}

fn add_into(acc: &mut [f64], src: &[f64], c: f64) {
    for (a, s) in acc.iter_mut().zip(src) {
        *a += c * s;
    }
}
