//! Reverse-mode tape.
//!
//! Every operation appends one node holding its output value; node order is
//! execution order. [`Graph::backward`] replays the nodes in reverse, visiting
//! each exactly once and accumulating gradients additively into its inputs.

use super::conv;
use super::scalar::Real;
use super::{Tensor, TensorError};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    /// Negative-side slope; the derivative at exactly zero is the slope.
    LeakyRelu(f64),
    Sigmoid,
    Softplus,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    x
                } else {
                    s * x
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Softplus => softplus(x),
        }
    }

    fn forward<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::LeakyRelu(s) => {
                if x > T::zero() {
                    x
                } else {
                    T::lit(s) * x
                }
            }
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Activation::Softplus => x.max(T::zero()) + (-x.abs()).exp().ln_1p(),
        }
    }

    /// Derivative given the input `x` and the output `y`.
    fn derivative<T: Real>(self, x: T, y: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu(s) => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::lit(s)
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Softplus => T::one() / (T::one() + (-x).exp()),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d { input: Var, weight: Var, bias: Var },
    Activation { x: Var, kind: Activation },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: f64 },
    Abs { x: Var },
    Square { x: Var },
    Sum { x: Var },
    Mean { x: Var },
    GlobalAvgPool { x: Var },
    MeanChannels { x: Var },
    ConcatChannels { a: Var, b: Var },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
}

/// The computation tape. One graph per forward/backward pass.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Broadcast layout of a binary elementwise op: output shape plus per-operand
/// strides, zero along broadcast axes.
struct Broadcast {
    shape: Vec<usize>,
    a_strides: Vec<usize>,
    b_strides: Vec<usize>,
}

fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

fn broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<Broadcast, TensorError> {
    let rank = a.len().max(b.len());
    let pad = |s: &[usize]| {
        let mut v = vec![1; rank - s.len()];
        v.extend_from_slice(s);
        v
    };
    let (pa, pb) = (pad(a), pad(b));
    let mut shape = Vec::with_capacity(rank);
    for (&da, &db) in pa.iter().zip(&pb) {
        shape.push(match (da, db) {
            _ if da == db => da,
            (1, d) | (d, 1) => d,
            _ => return Err(TensorError::ShapeMismatch { op, lhs: a.to_vec(), rhs: b.to_vec() }),
        });
    }
    let strides = |p: &[usize]| {
        contiguous_strides(p).into_iter().zip(p).map(|(s, &d)| if d == 1 { 0 } else { s }).collect()
    };
    Ok(Broadcast { a_strides: strides(&pa), b_strides: strides(&pb), shape })
}

impl Broadcast {
    fn len(&self) -> usize {
        self.shape.iter().product()
    }

    /// Calls `f(out_index, a_offset, b_offset)` over the output in row-major order.
    fn for_each(&self, mut f: impl FnMut(usize, usize, usize)) {
        let rank = self.shape.len();
        let mut idx = vec![0usize; rank];
        let (mut oa, mut ob) = (0usize, 0usize);
        for i in 0..self.len() {
            f(i, oa, ob);
            for d in (0..rank).rev() {
                idx[d] += 1;
                oa += self.a_strides[d];
                ob += self.b_strides[d];
                if idx[d] < self.shape[d] {
                    break;
                }
                oa -= self.a_strides[d] * self.shape[d];
                ob -= self.b_strides[d] * self.shape[d];
                idx[d] = 0;
            }
        }
    }
}

fn elementwise<T: Real>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>, TensorError> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::new(a.shape().to_vec(), data);
    }
    let bc = broadcast(op, a.shape(), b.shape())?;
    let mut out = vec![T::zero(); bc.len()];
    let (ad, bd) = (a.data(), b.data());
    bc.for_each(|i, oa, ob| out[i] = f(ad[oa], bd[ob]));
    Tensor::new(bc.shape, out)
}

/// Sums a full-shape gradient down to `target` shape, weighting each element by
/// `weight(offset into the other operand)` when given.
fn reduce_to<T: Real>(
    grad: &Tensor<T>,
    target: &[usize],
    other: &[usize],
    target_is_a: bool,
    weight: Option<&[T]>,
) -> Result<Tensor<T>, TensorError> {
    if grad.shape() == target && (weight.is_none() || other == target) {
        let data = match weight {
            None => grad.data().to_vec(),
            Some(w) => grad.data().iter().zip(w).map(|(&g, &w)| g * w).collect(),
        };
        return Tensor::new(target.to_vec(), data);
    }
    let bc = if target_is_a { broadcast("backward", target, other)? } else { broadcast("backward", other, target)? };
    let mut out = vec![T::zero(); target.iter().product()];
    let g = grad.data();
    bc.for_each(|i, oa, ob| {
        let (mine, theirs) = if target_is_a { (oa, ob) } else { (ob, oa) };
        out[mine] += match weight {
            None => g[i],
            Some(w) => g[i] * w[theirs],
        };
    });
    Tensor::new(target.to_vec(), out)
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Adds an input tensor. Gradients are tracked for it when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var, TensorError> {
        let out = conv::conv2d_forward(self.value(input), self.value(weight), self.value(bias))?;
        Ok(self.push(out, Op::Conv2d { input, weight, bias }, &[input, weight, bias]))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let out = self.value(x).map(|v| kind.forward(v));
        self.push(out, Op::Activation { x, kind }, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.activation(x, Activation::LeakyRelu(slope))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Softplus)
    }

    /// Broadcasting elementwise sum.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = elementwise("add", self.value(a), self.value(b), |x, y| x + y)?;
        Ok(self.push(out, Op::Add { a, b }, &[a, b]))
    }

    /// Broadcasting elementwise difference.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = elementwise("sub", self.value(a), self.value(b), |x, y| x - y)?;
        Ok(self.push(out, Op::Sub { a, b }, &[a, b]))
    }

    /// Broadcasting elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = elementwise("mul", self.value(a), self.value(b), |x, y| x * y)?;
        Ok(self.push(out, Op::Mul { a, b }, &[a, b]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let f = T::lit(factor);
        let out = self.value(x).map(|v| v * f);
        self.push(out, Op::Scale { x, factor }, &[x])
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.abs());
        self.push(out, Op::Abs { x }, &[x])
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * v);
        self.push(out, Op::Square { x }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum { x }, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = Tensor::scalar(t.sum() / T::lit(t.len() as f64));
        self.push(out, Op::Mean { x }, &[x])
    }

    /// `N x C x H x W -> N x C x 1 x 1`, averaging each channel plane.
    pub fn global_avg_pool_spatial(&mut self, x: Var) -> Result<Var, TensorError> {
        let t = self.value(x);
        let (n, c, h, w) = t.dims4()?;
        let inv = T::lit(1.0 / (h * w) as f64);
        let data = t.data().chunks(h * w).map(|p| p.iter().copied().sum::<T>() * inv).collect();
        let out = Tensor::new(vec![n, c, 1, 1], data)?;
        Ok(self.push(out, Op::GlobalAvgPool { x }, &[x]))
    }

    /// `N x C x H x W -> N x 1 x H x W`, averaging over channels per pixel.
    pub fn mean_over_channels(&mut self, x: Var) -> Result<Var, TensorError> {
        let t = self.value(x);
        let (n, c, h, w) = t.dims4()?;
        let hw = h * w;
        let inv = T::lit(1.0 / c as f64);
        let mut data = vec![T::zero(); n * hw];
        for (ni, dst) in data.chunks_mut(hw).enumerate() {
            for ci in 0..c {
                let src = &t.data()[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
                dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
            }
            dst.iter_mut().for_each(|d| *d *= inv);
        }
        let out = Tensor::new(vec![n, 1, h, w], data)?;
        Ok(self.push(out, Op::MeanChannels { x }, &[x]))
    }

    /// Channel-wise concatenation of two `N x C_i x H x W` tensors.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (n, ca, h, w) = ta.dims4()?;
        let (nb, cb, hb, wb) = tb.dims4()?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(TensorError::ShapeMismatch {
                op: "concat_channels",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (la, lb) = (ca * h * w, cb * h * w);
        let mut data = Vec::with_capacity(n * (la + lb));
        for ni in 0..n {
            data.extend_from_slice(&ta.data()[ni * la..(ni + 1) * la]);
            data.extend_from_slice(&tb.data()[ni * lb..(ni + 1) * lb]);
        }
        let out = Tensor::new(vec![n, ca + cb, h, w], data)?;
        Ok(self.push(out, Op::ConcatChannels { a, b }, &[a, b]))
    }

    /// Reverse pass from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, TensorError> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(TensorError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::full(lt.shape().to_vec(), T::one()));
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let mut contributions: Vec<(Var, Tensor<T>)> = Vec::with_capacity(3);
            let wants = |v: Var| self.nodes[v.0].requires_grad;
            match node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Conv2d { input, weight, bias } => {
                    let cg = conv::conv2d_backward(
                        self.value(input),
                        self.value(weight),
                        self.value(bias),
                        &g,
                        wants(input),
                    )?;
                    if let Some(dx) = cg.input {
                        contributions.push((input, dx));
                    }
                    if wants(weight) {
                        contributions.push((weight, cg.weight));
                    }
                    if wants(bias) {
                        contributions.push((bias, cg.bias));
                    }
                }
                Op::Activation { x, kind } => {
                    let xt = self.value(x);
                    let data = g
                        .data()
                        .iter()
                        .zip(xt.data().iter().zip(node.value.data()))
                        .map(|(&gi, (&xi, &yi))| gi * kind.derivative(xi, yi))
                        .collect();
                    contributions.push((x, Tensor::new(xt.shape().to_vec(), data)?));
                }
                Op::Add { a, b } | Op::Sub { a, b } => {
                    let (sa, sb) = (self.shape(a), self.shape(b));
                    if wants(a) {
                        contributions.push((a, reduce_to(&g, sa, sb, true, None)?));
                    }
                    if wants(b) {
                        let mut gb = reduce_to(&g, sb, sa, false, None)?;
                        if matches!(node.op, Op::Sub { .. }) {
                            gb.data_mut().iter_mut().for_each(|v| *v = -*v);
                        }
                        contributions.push((b, gb));
                    }
                }
                Op::Mul { a, b } => {
                    let (ta, tb) = (self.value(a), self.value(b));
                    if wants(a) {
                        contributions.push((a, reduce_to(&g, ta.shape(), tb.shape(), true, Some(tb.data()))?));
                    }
                    if wants(b) {
                        contributions.push((b, reduce_to(&g, tb.shape(), ta.shape(), false, Some(ta.data()))?));
                    }
                }
                Op::Scale { x, factor } => {
                    let f = T::lit(factor);
                    contributions.push((x, g.map(|v| v * f)));
                }
                Op::Abs { x } => {
                    let xt = self.value(x);
                    let data = g.data().iter().zip(xt.data()).map(|(&gi, &xi)| gi * sign(xi)).collect();
                    contributions.push((x, Tensor::new(xt.shape().to_vec(), data)?));
                }
                Op::Square { x } => {
                    let xt = self.value(x);
                    let two = T::lit(2.0);
                    let data = g.data().iter().zip(xt.data()).map(|(&gi, &xi)| two * xi * gi).collect();
                    contributions.push((x, Tensor::new(xt.shape().to_vec(), data)?));
                }
                Op::Sum { x } => {
                    contributions.push((x, Tensor::full(self.shape(x).to_vec(), g.data()[0])));
                }
                Op::Mean { x } => {
                    let n = T::lit(self.value(x).len() as f64);
                    contributions.push((x, Tensor::full(self.shape(x).to_vec(), g.data()[0] / n)));
                }
                Op::GlobalAvgPool { x } => {
                    let (_, _, h, w) = self.value(x).dims4()?;
                    let inv = T::lit(1.0 / (h * w) as f64);
                    let mut data = Vec::with_capacity(self.value(x).len());
                    for &gi in g.data() {
                        data.extend(std::iter::repeat_n(gi * inv, h * w));
                    }
                    contributions.push((x, Tensor::new(self.shape(x).to_vec(), data)?));
                }
                Op::MeanChannels { x } => {
                    let (n, c, h, w) = self.value(x).dims4()?;
                    let inv = T::lit(1.0 / c as f64);
                    let hw = h * w;
                    let mut data = Vec::with_capacity(n * c * hw);
                    for ni in 0..n {
                        let src = &g.data()[ni * hw..(ni + 1) * hw];
                        for _ in 0..c {
                            data.extend(src.iter().map(|&v| v * inv));
                        }
                    }
                    contributions.push((x, Tensor::new(self.shape(x).to_vec(), data)?));
                }
                Op::ConcatChannels { a, b } => {
                    let (n, ca, h, w) = self.value(a).dims4()?;
                    let cb = self.value(b).dims4()?.1;
                    let (la, lb) = (ca * h * w, cb * h * w);
                    let mut ga = Vec::with_capacity(n * la);
                    let mut gb = Vec::with_capacity(n * lb);
                    for chunk in g.data().chunks(la + lb) {
                        ga.extend_from_slice(&chunk[..la]);
                        gb.extend_from_slice(&chunk[la..]);
                    }
                    if wants(a) {
                        contributions.push((a, Tensor::new(self.shape(a).to_vec(), ga)?));
                    }
                    if wants(b) {
                        contributions.push((b, Tensor::new(self.shape(b).to_vec(), gb)?));
                    }
                }
            }
            for (v, c) in contributions {
                if !wants(v) {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.data_mut().iter_mut().zip(c.data()).for_each(|(a, &b)| *a += b),
                    slot @ None => *slot = Some(c),
                }
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }
}

fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Result of a reverse pass. Only leaf gradients are retained.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to `v`; zeros when `v` did not participate.
    pub fn get(&self, v: Var) -> Tensor<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.shapes[v.0].clone()),
        }
    }

    /// Whether any gradient flowed into `v`.
    pub fn reached(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }

    pub fn take(&mut self, v: Var) -> Tensor<T> {
        self.grads[v.0].take().unwrap_or_else(|| Tensor::zeros(self.shapes[v.0].clone()))
    }
}
