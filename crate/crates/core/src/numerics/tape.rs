//! Reverse-mode automatic differentiation over a dynamic tape.
//!
//! Every operation appends a node holding its forward value and the indices
//! of its parents. Parents always precede children, so a single reverse
//! sweep from the root visits each node once.

use crate::error::{Error, Result};

use super::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Exp,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Exp => x.exp(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Exp => y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Exp => "exp",
            Activation::Relu => "relu",
        }
    }
}

/// Saturating logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Diagonal Gaussian living on a tape.
#[derive(Clone, Copy, Debug)]
pub struct GaussianVar {
    pub mean: Var,
    pub logvar: Var,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Affine {
        x: Var,
        w: Var,
        b: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    Scale(Var, f64),
    Act(Activation, Var),
    Concat(Vec<Var>),
    Slice {
        src: Var,
        start: usize,
    },
    Clamp {
        src: Var,
        lo: f64,
        hi: f64,
    },
    Reparam {
        mean: Var,
        logvar: Var,
        eps: Vec<f64>,
    },
    KlDiag {
        q: GaussianVar,
        p: GaussianVar,
    },
    SoftmaxCe {
        logits: Var,
        label: usize,
        probs: Vec<f64>,
    },
    HalfSqDist(Var, Var),
    Sum(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` does not influence the root.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `v` shaped like `like`; zeros when unreachable.
    pub fn wrt(&self, v: Var, like: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(like.shape());
        if let Some(g) = self.get(v) {
            out.data_mut().copy_from_slice(g);
        }
        out
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(
        &mut self,
        op_name: &'static str,
        value: Tensor,
        op: Op,
        needs_grad: bool,
    ) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Differentiable input (a parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-differentiable input (data).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn vector_len(&self, op: &'static str, v: Var) -> Result<usize> {
        let shape = self.shape(v);
        if shape.len() != 1 {
            return Err(Error::dim(op, shape, &[0]));
        }
        Ok(shape[0])
    }

    fn same_len(&self, op: &'static str, a: Var, b: Var) -> Result<usize> {
        let la = self.vector_len(op, a)?;
        let lb = self.vector_len(op, b)?;
        if la != lb {
            return Err(Error::dim(op, self.shape(a), self.shape(b)));
        }
        Ok(la)
    }

    /// `w · x + b` with `w` of shape `[out, in]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let ws = self.shape(w);
        if ws.len() != 2 {
            return Err(Error::dim("affine", ws, self.shape(x)));
        }
        let (rows, cols) = (ws[0], ws[1]);
        if self.shape(x) != [cols] {
            return Err(Error::dim("affine", ws, self.shape(x)));
        }
        if self.shape(b) != [rows] {
            return Err(Error::dim("affine", ws, self.shape(b)));
        }
        let xd = self.data(x);
        let wd = self.data(w);
        let mut out = self.data(b).to_vec();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &wd[i * cols..(i + 1) * cols];
            *o += row.iter().zip(xd).map(|(a, b)| a * b).sum::<f64>();
        }
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        self.push("affine", Tensor::vector(out), Op::Affine { x, w, b }, needs)
    }

    fn zip_with(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op_name, self.shape(a), self.shape(b)));
        }
        let out: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let needs = self.needs(a) || self.needs(b);
        let value = Tensor::new(self.shape(a).to_vec(), out)?;
        self.push(op_name, value, op, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let out = Tensor::new(
            v.shape().to_vec(),
            v.data().iter().map(|x| 1.0 - x).collect(),
        )?;
        let needs = self.needs(a);
        self.push("one_minus", out, Op::OneMinus(a), needs)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.value(a);
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|x| c * x).collect())?;
        let needs = self.needs(a);
        self.push("scale", out, Op::Scale(a, c), needs)
    }

    pub fn activate(&mut self, kind: Activation, x: Var) -> Result<Var> {
        let v = self.value(x);
        let data: Vec<f64> = v.data().iter().map(|&t| kind.apply(t)).collect();
        let out = Tensor::new(v.shape().to_vec(), data)
            .map_err(|_| Error::NonFinite { op: kind.name() })?;
        let needs = self.needs(x);
        self.push(kind.name(), out, Op::Act(kind, x), needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activate(Activation::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.activate(Activation::Tanh, x)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Empty("concat"));
        }
        let mut out = Vec::new();
        for &p in parts {
            let n = self.vector_len("concat", p)?;
            if n == 0 {
                return Err(Error::Empty("concat"));
            }
            out.extend_from_slice(self.data(p));
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(
            "concat",
            Tensor::vector(out),
            Op::Concat(parts.to_vec()),
            needs,
        )
    }

    pub fn slice(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.vector_len("slice", src)?;
        if start + len > n {
            return Err(Error::dim("slice", &[n], &[start, len]));
        }
        let out = self.data(src)[start..start + len].to_vec();
        let needs = self.needs(src);
        self.push(
            "slice",
            Tensor::vector(out),
            Op::Slice { src, start },
            needs,
        )
    }

    pub fn clamp(&mut self, src: Var, lo: f64, hi: f64) -> Result<Var> {
        let v = self.value(src);
        let out = Tensor::new(
            v.shape().to_vec(),
            v.data().iter().map(|x| x.clamp(lo, hi)).collect(),
        )?;
        let needs = self.needs(src);
        self.push("clamp", out, Op::Clamp { src, lo, hi }, needs)
    }

    /// `mean + exp(logvar / 2) ⊙ eps`; `eps` is treated as a constant.
    pub fn reparam(&mut self, g: GaussianVar, eps: &[f64]) -> Result<Var> {
        let n = self.same_len("reparam", g.mean, g.logvar)?;
        if eps.len() != n {
            return Err(Error::dim("reparam", &[n], &[eps.len()]));
        }
        let out: Vec<f64> = self
            .data(g.mean)
            .iter()
            .zip(self.data(g.logvar))
            .zip(eps)
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect();
        let needs = self.needs(g.mean) || self.needs(g.logvar);
        let op = Op::Reparam {
            mean: g.mean,
            logvar: g.logvar,
            eps: eps.to_vec(),
        };
        self.push("reparam", Tensor::vector(out), op, needs)
    }

    /// `KL(q ‖ p)` for diagonal Gaussians, summed over dimensions.
    pub fn kl_diag(&mut self, q: GaussianVar, p: GaussianVar) -> Result<Var> {
        let n = self.same_len("kl_diag", q.mean, q.logvar)?;
        self.same_len("kl_diag", p.mean, p.logvar)?;
        self.same_len("kl_diag", q.mean, p.mean)?;
        let (qm, qlv, pm, plv) = (
            self.data(q.mean),
            self.data(q.logvar),
            self.data(p.mean),
            self.data(p.logvar),
        );
        let mut kl = 0.0;
        for i in 0..n {
            let d = qm[i] - pm[i];
            kl += 0.5 * (plv[i] - qlv[i] + ((qlv[i]).exp() + d * d) / plv[i].exp() - 1.0);
        }
        let needs = self.needs(q.mean)
            || self.needs(q.logvar)
            || self.needs(p.mean)
            || self.needs(p.logvar);
        self.push("kl_diag", Tensor::scalar(kl), Op::KlDiag { q, p }, needs)
    }

    /// `-log softmax(logits)[label]`, stabilised by max subtraction.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let k = self.vector_len("softmax_cross_entropy", logits)?;
        if label >= k {
            return Err(Error::LabelOutOfRange {
                label,
                n_classes: k,
            });
        }
        let z = self.data(logits);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let loss = total.ln() - (z[label] - max);
        let probs = exps.iter().map(|e| e / total).collect();
        let needs = self.needs(logits);
        self.push(
            "softmax_cross_entropy",
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                label,
                probs,
            },
            needs,
        )
    }

    /// `0.5 · ‖a − b‖²`.
    pub fn half_sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_len("half_sq_dist", a, b)?;
        let s: f64 = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let needs = self.needs(a) || self.needs(b);
        self.push(
            "half_sq_dist",
            Tensor::scalar(0.5 * s),
            Op::HalfSqDist(a, b),
            needs,
        )
    }

    /// Left-to-right sum of scalar nodes.
    pub fn sum(&mut self, terms: &[Var]) -> Result<Var> {
        if terms.is_empty() {
            return Err(Error::Empty("sum"));
        }
        let mut acc = 0.0;
        for &t in terms {
            let v = self.value(t);
            if v.len() != 1 {
                return Err(Error::dim("sum", v.shape(), &[]));
            }
            acc += v.data()[0];
        }
        let needs = terms.iter().any(|&t| self.needs(t));
        self.push("sum", Tensor::scalar(acc), Op::Sum(terms.to_vec()), needs)
    }

    /// Propagates d(root)/d(node) back to every node that feeds `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = self.value(root);
        if rv.len() != 1 {
            return Err(Error::NonScalarRoot(rv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.needs_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.needs(v) {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(slot);
        };

        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let cols = self.shape(*x)[0];
                let xd = self.data(*x);
                let wd = self.data(*w);
                acc(*w, &mut |gw| {
                    for (i, gi) in g.iter().enumerate() {
                        if *gi == 0.0 {
                            continue;
                        }
                        let row = &mut gw[i * cols..(i + 1) * cols];
                        for (r, xv) in row.iter_mut().zip(xd) {
                            *r += gi * xv;
                        }
                    }
                });
                acc(*x, &mut |gx| {
                    for (i, gi) in g.iter().enumerate() {
                        let row = &wd[i * cols..(i + 1) * cols];
                        for (r, wv) in gx.iter_mut().zip(row) {
                            *r += gi * wv;
                        }
                    }
                });
                acc(*b, &mut |gb| add_into(gb, g));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| add_into(gb, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| add_into(ga, g));
                acc(*b, &mut |gb| {
                    for (r, gi) in gb.iter_mut().zip(g) {
                        *r -= gi;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                acc(*a, &mut |ga| {
                    for ((r, gi), bv) in ga.iter_mut().zip(g).zip(bd) {
                        *r += gi * bv;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((r, gi), av) in gb.iter_mut().zip(g).zip(ad) {
                        *r += gi * av;
                    }
                });
            }
            Op::OneMinus(a) => acc(*a, &mut |ga| {
                for (r, gi) in ga.iter_mut().zip(g) {
                    *r -= gi;
                }
            }),
            Op::Scale(a, c) => acc(*a, &mut |ga| {
                for (r, gi) in ga.iter_mut().zip(g) {
                    *r += c * gi;
                }
            }),
            Op::Act(kind, x) => {
                let (xd, yd) = (self.data(*x), node.value.data());
                acc(*x, &mut |gx| {
                    for i in 0..gx.len() {
                        gx[i] += g[i] * kind.derivative(xd[i], yd[i]);
                    }
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p.0].value.len();
                    acc(p, &mut |gp| add_into(gp, &g[offset..offset + n]));
                    offset += n;
                }
            }
            Op::Slice { src, start } => acc(*src, &mut |gs| {
                add_into(&mut gs[*start..*start + g.len()], g)
            }),
            Op::Clamp { src, lo, hi } => {
                let xd = self.data(*src);
                acc(*src, &mut |gs| {
                    for i in 0..gs.len() {
                        if xd[i] >= *lo && xd[i] <= *hi {
                            gs[i] += g[i];
                        }
                    }
                });
            }
            Op::Reparam { mean, logvar, eps } => {
                acc(*mean, &mut |gm| add_into(gm, g));
                let lv = self.data(*logvar);
                acc(*logvar, &mut |gl| {
                    for i in 0..gl.len() {
                        gl[i] += g[i] * 0.5 * (0.5 * lv[i]).exp() * eps[i];
                    }
                });
            }
            Op::KlDiag { q, p } => {
                let g0 = g[0];
                let (qm, qlv, pm, plv) = (
                    self.data(q.mean),
                    self.data(q.logvar),
                    self.data(p.mean),
                    self.data(p.logvar),
                );
                let n = qm.len();
                let inv_pv: Vec<f64> = plv.iter().map(|x| (-x).exp()).collect();
                acc(q.mean, &mut |gq| {
                    for i in 0..n {
                        gq[i] += g0 * (qm[i] - pm[i]) * inv_pv[i];
                    }
                });
                acc(p.mean, &mut |gp| {
                    for i in 0..n {
                        gp[i] -= g0 * (qm[i] - pm[i]) * inv_pv[i];
                    }
                });
                acc(q.logvar, &mut |gq| {
                    for i in 0..n {
                        gq[i] += g0 * 0.5 * (qlv[i].exp() * inv_pv[i] - 1.0);
                    }
                });
                acc(p.logvar, &mut |gp| {
                    for i in 0..n {
                        let d = qm[i] - pm[i];
                        gp[i] += g0 * 0.5 * (1.0 - (qlv[i].exp() + d * d) * inv_pv[i]);
                    }
                });
            }
            Op::SoftmaxCe {
                logits,
                label,
                probs,
            } => acc(*logits, &mut |gl| {
                for i in 0..gl.len() {
                    let target = if i == *label { 1.0 } else { 0.0 };
                    gl[i] += g[0] * (probs[i] - target);
                }
            }),
            Op::HalfSqDist(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[0] * (ad[i] - bd[i]);
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..gb.len() {
                        gb[i] -= g[0] * (ad[i] - bd[i]);
                    }
                });
            }
            Op::Sum(terms) => {
                for &t in terms {
                    acc(t, &mut |gt| gt[0] += g[0]);
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![3.0]));
        let y = tape.mul(x, x).unwrap();
        let s = tape.sum(&[y]).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &[6.0]);
    }

    #[test]
    fn unreachable_leaf_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let unused = tape.leaf(Tensor::vector(vec![5.0]));
        let l = tape.half_sq_dist(x, x).unwrap();
        let g = tape.backward(l).unwrap();
        assert!(g.get(unused).is_none());
        assert_eq!(g.wrt(unused, tape.value(unused)).data(), &[0.0]);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarRoot(_))));
    }

    #[test]
    fn affine_identity_and_scalar() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let w = tape.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = tape.constant(Tensor::vector(vec![0.0, 0.0]));
        let y = tape.affine(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0]);

        let x = tape.constant(Tensor::vector(vec![1.0]));
        let w = tape.constant(Tensor::matrix(1, 1, vec![2.0]).unwrap());
        let b = tape.constant(Tensor::vector(vec![3.0]));
        let y = tape.affine(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[5.0]);
    }

    #[test]
    fn affine_shape_mismatch_names_both_shapes() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let w = tape.constant(Tensor::zeros(&[2, 2]));
        let b = tape.constant(Tensor::zeros(&[2]));
        let err = tape.affine(x, w, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 2]") && msg.contains("[3]"), "{msg}");
    }

    #[test]
    fn activations_at_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0]));
        let s = tape.sigmoid(x).unwrap();
        let t = tape.tanh(x).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5]);
        assert_eq!(tape.value(t).data(), &[0.0]);
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exp_overflow_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1000.0]));
        assert!(matches!(
            tape.activate(Activation::Exp, x),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![1.0]));
        let b = tape.constant(Tensor::vector(vec![2.0, 3.0]));
        let c = tape.concat(&[a, b]).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0]);
        let a2 = tape.slice(c, 0, 1).unwrap();
        let b2 = tape.slice(c, 1, 2).unwrap();
        assert_eq!(tape.value(a2), tape.value(a));
        assert_eq!(tape.value(b2), tape.value(b));
    }

    #[test]
    fn concat_rejects_empty_parts() {
        let mut tape = Tape::new();
        let e = tape.constant(Tensor::vector(vec![]));
        let f = tape.constant(Tensor::vector(vec![5.0]));
        assert!(matches!(tape.concat(&[e, f]), Err(Error::Empty(_))));
        assert!(matches!(tape.concat(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn cross_entropy_cases() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::vector(vec![0.3; 5]));
        let l = tape.softmax_cross_entropy(z, 2).unwrap();
        assert!((tape.value(l).data()[0] - 5f64.ln()).abs() < 1e-12);

        let z = tape.constant(Tensor::vector(vec![30.0, -30.0]));
        let l = tape.softmax_cross_entropy(z, 0).unwrap();
        assert!(tape.value(l).data()[0] < 1e-20);

        assert!(matches!(
            tape.softmax_cross_entropy(z, 2),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn replay_is_bitwise_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let w = tape.leaf(Tensor::matrix(2, 3, vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]).unwrap());
            let b = tape.leaf(Tensor::vector(vec![0.01, -0.02]));
            let x = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
            let h = tape.affine(x, w, b).unwrap();
            let h = tape.tanh(h).unwrap();
            let l = tape.softmax_cross_entropy(h, 1).unwrap();
            let g = tape.backward(l).unwrap();
            (
                tape.value(l).data()[0].to_bits(),
                g.get(w)
                    .unwrap()
                    .iter()
                    .map(|x| x.to_bits())
                    .collect::<Vec<_>>(),
            )
        };
        assert_eq!(run(), run());
    }
}
