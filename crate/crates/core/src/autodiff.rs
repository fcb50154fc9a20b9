//! Reverse-mode differentiation over a per-pass computation graph.
//!
//! A [`Graph`] is built during one forward pass, differentiated once with
//! [`Graph::backward`] and then dropped. Nodes are appended in evaluation
//! order, so the node list is already a topological order and the backward
//! sweep walks it in reverse, visiting each node exactly once.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Lower clamp applied to the second argument of [`Graph::kl_div`].
pub const KL_CLAMP: f64 = 1e-12;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }

    /// Handle of the `i`-th node. Only meaningful for the graph it came from.
    pub fn from_index(i: usize) -> Self {
        Var(i)
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
        cols: Vec<f64>,
    },
    XCorr {
        search: Var,
        kernel: Var,
    },
    Relu(Var),
    Exp(Var),
    Log(Var),
    Sigmoid(Var),
    Softmax {
        input: Var,
        axis: usize,
        temperature: f64,
    },
    LogSoftmax {
        input: Var,
        axis: usize,
        temperature: f64,
    },
    Mean(Var),
    Sum(Var),
    Mse(Var, Var),
    KlDiv(Var, Var),
    SmoothL1 {
        input: Var,
        beta: f64,
    },
    Reshape(Var),
    Slice {
        input: Var,
        axis: usize,
        start: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Computation graph recording one forward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    differentiated: bool,
}

/// Splits a shape around `axis` into (outer, extent, inner) strides.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn conv_out(extent: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = extent + 2 * padding;
    (padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Adds an input tensor. Leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Copies the current value of `v` into a new constant node (stop-gradient).
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass with respect to `v`, if it was reached.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Clears gradients so that [`Graph::backward`] may run again.
    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.differentiated = false;
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, sa, sb));
        }
        Ok(())
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, record: Op) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), op, f)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, record, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| x * k);
        let rg = self.rg(&[a]);
        self.push(value, Op::Scale(a, k), rg)
    }

    /// Product of two rank-2 tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::shape("matmul", ta.shape(), tb.shape()));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        matmul_into(ta.data(), tb.data(), &mut out, m, k, n);
        let value = Tensor::new(&[m, n], out)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// 2-D convolution of a `[C, H, W]` input with `[O, C, k, k]` weights and
    /// an optional `[O]` bias. Zero padding on all four sides.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let (ti, tw) = (self.value(input), self.value(weight));
        let bad = || Error::shape("conv2d", ti.shape(), tw.shape());
        if ti.rank() != 3 || tw.rank() != 4 || tw.shape()[1] != ti.shape()[0] || tw.shape()[2] != tw.shape()[3] {
            return Err(bad());
        }
        if stride == 0 {
            return Err(Error::domain("conv2d", "stride must be positive"));
        }
        let (c, h, w) = (ti.shape()[0], ti.shape()[1], ti.shape()[2]);
        let (o, k) = (tw.shape()[0], tw.shape()[2]);
        let (ho, wo) = match (conv_out(h, k, stride, padding), conv_out(w, k, stride, padding)) {
            (Some(ho), Some(wo)) => (ho, wo),
            _ => return Err(bad()),
        };
        if let Some(b) = bias {
            let tb = self.value(b);
            if tb.shape() != [o] {
                return Err(Error::shape("conv2d bias", tb.shape(), &[o]));
            }
        }
        let geom = ConvGeom { c, h, w, k, stride, padding, ho, wo };
        let cols = geom.im2col(ti.data());
        let rows = c * k * k;
        let pix = ho * wo;
        let mut out = vec![0.0; o * pix];
        matmul_into(tw.data(), &cols, &mut out, o, rows, pix);
        if let Some(b) = bias {
            let tb = self.value(b).data();
            for (oc, chunk) in out.chunks_mut(pix).enumerate() {
                chunk.iter_mut().for_each(|v| *v += tb[oc]);
            }
        }
        let value = Tensor::new(&[o, ho, wo], out)?;
        let mut deps = vec![input, weight];
        deps.extend(bias);
        let rg = self.rg(&deps);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
                cols,
            },
            rg,
        ))
    }

    /// Depthwise cross-correlation: each channel of `search` `[C, Hs, Ws]` is
    /// correlated (valid mode) with the matching channel of `kernel` `[C, Hk, Wk]`.
    pub fn xcorr_depthwise(&mut self, search: Var, kernel: Var) -> Result<Var> {
        let (ts, tk) = (self.value(search), self.value(kernel));
        if ts.rank() != 3
            || tk.rank() != 3
            || ts.shape()[0] != tk.shape()[0]
            || tk.shape()[1] > ts.shape()[1]
            || tk.shape()[2] > ts.shape()[2]
        {
            return Err(Error::shape("xcorr_depthwise", ts.shape(), tk.shape()));
        }
        let (c, hs, ws) = (ts.shape()[0], ts.shape()[1], ts.shape()[2]);
        let (hk, wk) = (tk.shape()[1], tk.shape()[2]);
        let (ho, wo) = (hs - hk + 1, ws - wk + 1);
        let (s, kd) = (ts.data(), tk.data());
        let mut out = vec![0.0; c * ho * wo];
        for ch in 0..c {
            let sc = &s[ch * hs * ws..(ch + 1) * hs * ws];
            let kc = &kd[ch * hk * wk..(ch + 1) * hk * wk];
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = 0.0;
                    for u in 0..hk {
                        let srow = &sc[(i + u) * ws + j..(i + u) * ws + j + wk];
                        let krow = &kc[u * wk..(u + 1) * wk];
                        acc += srow.iter().zip(krow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    out[(ch * ho + i) * wo + j] = acc;
                }
            }
        }
        let value = Tensor::new(&[c, ho, wo], out)?;
        let rg = self.rg(&[search, kernel]);
        Ok(self.push(value, Op::XCorr { search, kernel }, rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, record: Op) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(&[a]);
        self.push(value, record, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    /// Natural log; every input value must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| x <= 0.0 || x.is_nan()) {
            return Err(Error::domain("log", format!("non-positive input {bad}")));
        }
        Ok(self.unary(a, f64::ln, Op::Log(a)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    /// Tempered softmax `softmax(x / temperature)` along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize, temperature: f64) -> Result<Var> {
        let value = softmax_tensor(self.value(a), axis, temperature, false)?;
        let rg = self.rg(&[a]);
        Ok(self.push(
            value,
            Op::Softmax {
                input: a,
                axis,
                temperature,
            },
            rg,
        ))
    }

    /// `log(softmax(x / temperature))` along `axis`, evaluated stably.
    pub fn log_softmax(&mut self, a: Var, axis: usize, temperature: f64) -> Result<Var> {
        let value = softmax_tensor(self.value(a), axis, temperature, true)?;
        let rg = self.rg(&[a]);
        Ok(self.push(
            value,
            Op::LogSoftmax {
                input: a,
                axis,
                temperature,
            },
            rg,
        ))
    }

    /// Mean of all elements, as a one-element tensor.
    pub fn mean(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).mean());
        let rg = self.rg(&[a]);
        self.push(value, Op::Mean(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(value, Op::Sum(a), rg)
    }

    /// Mean squared difference over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let n = ta.numel() as f64;
        let total: f64 = ta.data().iter().zip(tb.data()).map(|(x, y)| (x - y) * (x - y)).sum();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::scalar(total / n), Op::Mse(a, b), rg))
    }

    /// `sum p * (ln p - ln max(q, KL_CLAMP))` over all elements; `0 ln 0 = 0`.
    pub fn kl_div(&mut self, p: Var, q: Var) -> Result<Var> {
        self.same_shape("kl_div", p, q)?;
        let (tp, tq) = (self.value(p), self.value(q));
        if let Some(bad) = tp.data().iter().chain(tq.data()).find(|&&x| x < 0.0 || x.is_nan()) {
            return Err(Error::domain("kl_div", format!("negative probability {bad}")));
        }
        let total: f64 = tp
            .data()
            .iter()
            .zip(tq.data())
            .map(|(&pi, &qi)| if pi > 0.0 { pi * (pi.ln() - qi.max(KL_CLAMP).ln()) } else { 0.0 })
            .sum();
        let rg = self.rg(&[p, q]);
        Ok(self.push(Tensor::scalar(total), Op::KlDiv(p, q), rg))
    }

    /// Elementwise Huber-style smooth L1 with transition point `beta`.
    pub fn smooth_l1(&mut self, a: Var, beta: f64) -> Result<Var> {
        if beta <= 0.0 {
            return Err(Error::domain("smooth_l1", format!("beta must be positive, got {beta}")));
        }
        Ok(self.unary(
            a,
            move |d| {
                if d.abs() < beta {
                    0.5 * d * d / beta
                } else {
                    d.abs() - 0.5 * beta
                }
            },
            Op::SmoothL1 { input: a, beta },
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if shape.iter().product::<usize>() != t.numel() {
            return Err(Error::shape("reshape", t.shape(), shape));
        }
        let value = t.reshape(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Elements `start..start + len` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if axis >= t.rank() || len == 0 || start + len > t.shape()[axis] {
            return Err(Error::domain(
                "slice",
                format!("range {start}..{} on axis {axis} of shape {:?}", start + len, t.shape()),
            ));
        }
        let (outer, extent, inner) = axis_split(t.shape(), axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * extent * inner;
            out.extend_from_slice(&t.data()[base + start * inner..base + (start + len) * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        let value = Tensor::new(&shape, out)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Slice { input: a, axis, start }, rg))
    }

    /// Propagates d(loss)/d(node) to every node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.differentiated {
            return Err(Error::Backward("graph already differentiated; call zero_grad first".into()));
        }
        let lv = &self.nodes[loss.0].value;
        if !lv.is_scalar() {
            return Err(Error::Backward(format!("loss must be scalar, got shape {:?}", lv.shape())));
        }
        self.differentiated = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = self.grads[id].take() else { continue };
            self.propagate(id, &g);
            self.grads[id] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn accumulate_with(&mut self, v: Var, f: impl FnOnce(&Self) -> Tensor) {
        if self.nodes[v.0].requires_grad {
            let g = f(self);
            self.accumulate(v, g);
        }
    }

    fn propagate(&mut self, id: usize, g: &Tensor) {
        let node = &self.nodes[id];
        if !node.requires_grad {
            return;
        }
        match node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                self.accumulate_with(a, |s| hadamard(g, s.value(b)));
                self.accumulate_with(b, |s| hadamard(g, s.value(a)));
            }
            Op::Scale(a, k) => self.accumulate(a, g.map(|x| x * k)),
            Op::MatMul(a, b) => {
                let (m, k) = (self.value(a).shape()[0], self.value(a).shape()[1]);
                let n = self.value(b).shape()[1];
                self.accumulate_with(a, |s| {
                    let mut out = vec![0.0; m * k];
                    matmul_a_bt(g.data(), s.value(b).data(), &mut out, m, n, k);
                    Tensor::new(&[m, k], out).expect("matmul grad shape")
                });
                self.accumulate_with(b, |s| {
                    let mut out = vec![0.0; k * n];
                    matmul_at_b(s.value(a).data(), g.data(), &mut out, m, k, n);
                    Tensor::new(&[k, n], out).expect("matmul grad shape")
                });
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
                ..
            } => self.conv2d_backward(id, input, weight, bias, stride, padding, g),
            Op::XCorr { search, kernel } => self.xcorr_backward(search, kernel, g),
            Op::Relu(a) => {
                self.accumulate_with(a, |s| {
                    s.value(a).zip_map(g, "relu", |x, gi| if x > 0.0 { gi } else { 0.0 }).expect("relu")
                });
            }
            Op::Exp(a) => {
                let y = hadamard(g, &self.nodes[id].value);
                self.accumulate(a, y);
            }
            Op::Log(a) => {
                self.accumulate_with(a, |s| s.value(a).zip_map(g, "log", |x, gi| gi / x).expect("log"));
            }
            Op::Sigmoid(a) => {
                let d = self.nodes[id].value.zip_map(g, "sigmoid", |y, gi| gi * y * (1.0 - y)).expect("sigmoid");
                self.accumulate(a, d);
            }
            Op::Softmax {
                input,
                axis,
                temperature,
            } => {
                let y = &self.nodes[id].value;
                let d = softmax_backward(y, g, axis, temperature, false);
                self.accumulate(input, d);
            }
            Op::LogSoftmax {
                input,
                axis,
                temperature,
            } => {
                let y = &self.nodes[id].value;
                let d = softmax_backward(y, g, axis, temperature, true);
                self.accumulate(input, d);
            }
            Op::Mean(a) => {
                let t = self.value(a);
                let gi = g.data()[0] / t.numel() as f64;
                let d = Tensor::full(t.shape(), gi);
                self.accumulate(a, d);
            }
            Op::Sum(a) => {
                let d = Tensor::full(self.value(a).shape(), g.data()[0]);
                self.accumulate(a, d);
            }
            Op::Mse(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let k = 2.0 * g.data()[0] / ta.numel() as f64;
                let da = ta.zip_map(tb, "mse", |x, y| k * (x - y)).expect("mse");
                let db = da.map(|x| -x);
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            Op::KlDiv(p, q) => {
                let gs = g.data()[0];
                self.accumulate_with(p, |s| {
                    s.value(p)
                        .zip_map(s.value(q), "kl_div", |pi, qi| {
                            gs * (pi.max(KL_CLAMP).ln() - qi.max(KL_CLAMP).ln() + 1.0)
                        })
                        .expect("kl")
                });
                self.accumulate_with(q, |s| {
                    s.value(p)
                        .zip_map(s.value(q), "kl_div", |pi, qi| if qi > KL_CLAMP { -gs * pi / qi } else { 0.0 })
                        .expect("kl")
                });
            }
            Op::SmoothL1 { input, beta } => {
                self.accumulate_with(input, |s| {
                    s.value(input)
                        .zip_map(g, "smooth_l1", |d, gi| {
                            if d.abs() < beta {
                                gi * d / beta
                            } else {
                                gi * d.signum()
                            }
                        })
                        .expect("smooth_l1")
                });
            }
            Op::Reshape(a) => {
                let d = g.reshape(self.value(a).shape()).expect("reshape grad");
                self.accumulate(a, d);
            }
            Op::Slice { input, axis, start } => {
                let shape = self.value(input).shape().to_vec();
                let (outer, extent, inner) = axis_split(&shape, axis);
                let len = g.shape()[axis];
                let mut d = Tensor::zeros(&shape);
                let dd = d.data_mut();
                for o in 0..outer {
                    let dst = o * extent * inner + start * inner;
                    let src = o * len * inner;
                    dd[dst..dst + len * inner].copy_from_slice(&g.data()[src..src + len * inner]);
                }
                self.accumulate(input, d);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv2d_backward(
        &mut self,
        id: usize,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
        g: &Tensor,
    ) {
        let (o, c, k) = {
            let s = self.value(weight).shape();
            (s[0], s[1], s[2])
        };
        let (h, w) = {
            let s = self.value(input).shape();
            (s[1], s[2])
        };
        let (ho, wo) = (g.shape()[1], g.shape()[2]);
        let pix = ho * wo;
        let rows = c * k * k;
        let gd = g.data();

        if let Some(b) = bias {
            self.accumulate_with(b, |_| Tensor::from_fn(&[o], |oc| gd[oc * pix..(oc + 1) * pix].iter().sum()));
        }
        if self.nodes[weight.0].requires_grad {
            let Op::Conv2d { cols, .. } = &self.nodes[id].op else {
                unreachable!()
            };
            let mut dw = vec![0.0; o * rows];
            matmul_a_bt(gd, cols, &mut dw, o, pix, rows);
            let dw = Tensor::new(&[o, c, k, k], dw).expect("conv weight grad");
            self.accumulate(weight, dw);
        }
        if self.nodes[input.0].requires_grad {
            let mut dcols = vec![0.0; rows * pix];
            matmul_at_b(self.value(weight).data(), gd, &mut dcols, o, rows, pix);
            let geom = ConvGeom { c, h, w, k, stride, padding, ho, wo };
            let dx = Tensor::new(&[c, h, w], geom.col2im(&dcols)).expect("conv input grad");
            self.accumulate(input, dx);
        }
    }

    fn xcorr_backward(&mut self, search: Var, kernel: Var, g: &Tensor) {
        let (c, hs, ws) = {
            let s = self.value(search).shape();
            (s[0], s[1], s[2])
        };
        let (hk, wk) = {
            let s = self.value(kernel).shape();
            (s[1], s[2])
        };
        let (ho, wo) = (g.shape()[1], g.shape()[2]);
        let gd = g.data();
        self.accumulate_with(search, |s| {
            let kd = s.value(kernel).data();
            let mut ds = vec![0.0; c * hs * ws];
            for ch in 0..c {
                for i in 0..ho {
                    for j in 0..wo {
                        let gv = gd[(ch * ho + i) * wo + j];
                        for u in 0..hk {
                            let dst = &mut ds[(ch * hs + i + u) * ws + j..(ch * hs + i + u) * ws + j + wk];
                            let krow = &kd[(ch * hk + u) * wk..(ch * hk + u + 1) * wk];
                            dst.iter_mut().zip(krow).for_each(|(d, kv)| *d += gv * kv);
                        }
                    }
                }
            }
            Tensor::new(&[c, hs, ws], ds).expect("xcorr search grad")
        });
        self.accumulate_with(kernel, |s| {
            let sd = s.value(search).data();
            let mut dk = vec![0.0; c * hk * wk];
            for ch in 0..c {
                for i in 0..ho {
                    for j in 0..wo {
                        let gv = gd[(ch * ho + i) * wo + j];
                        for u in 0..hk {
                            let src = &sd[(ch * hs + i + u) * ws + j..(ch * hs + i + u) * ws + j + wk];
                            let dst = &mut dk[(ch * hk + u) * wk..(ch * hk + u + 1) * wk];
                            dst.iter_mut().zip(src).for_each(|(d, sv)| *d += gv * sv);
                        }
                    }
                }
            }
            Tensor::new(&[c, hk, wk], dk).expect("xcorr kernel grad")
        });
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    a.zip_map(b, "mul", |x, y| x * y).expect("hadamard shapes")
}

/// Tempered (log-)softmax of a plain tensor along `axis`, with max subtraction.
pub fn softmax_tensor(t: &Tensor, axis: usize, temperature: f64, log: bool) -> Result<Tensor> {
    if temperature <= 0.0 || temperature.is_nan() {
        return Err(Error::domain("softmax", format!("temperature must be positive, got {temperature}")));
    }
    if axis >= t.rank() {
        return Err(Error::domain("softmax", format!("axis {axis} out of range for shape {:?}", t.shape())));
    }
    let (outer, n, inner) = axis_split(t.shape(), axis);
    let x = t.data();
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| o * n * inner + k * inner + i;
            let max = (0..n).map(|k| x[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for k in 0..n {
                let e = ((x[at(k)] - max) / temperature).exp();
                out[at(k)] = e;
                z += e;
            }
            let log_z = z.ln();
            for k in 0..n {
                let idx = at(k);
                out[idx] = if log {
                    (x[idx] - max) / temperature - log_z
                } else {
                    out[idx] / z
                };
            }
        }
    }
    Tensor::new(t.shape(), out)
}

fn softmax_backward(y: &Tensor, g: &Tensor, axis: usize, temperature: f64, log: bool) -> Tensor {
    let (outer, n, inner) = axis_split(y.shape(), axis);
    let (yd, gd) = (y.data(), g.data());
    let mut out = vec![0.0; yd.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| o * n * inner + k * inner + i;
            if log {
                let gsum: f64 = (0..n).map(|k| gd[at(k)]).sum();
                for k in 0..n {
                    let idx = at(k);
                    out[idx] = (gd[idx] - yd[idx].exp() * gsum) / temperature;
                }
            } else {
                let dot: f64 = (0..n).map(|k| gd[at(k)] * yd[at(k)]).sum();
                for k in 0..n {
                    let idx = at(k);
                    out[idx] = yd[idx] * (gd[idx] - dot) / temperature;
                }
            }
        }
    }
    Tensor::new(y.shape(), out).expect("softmax grad shape")
}

/// `out[m×n] += a[m×k] · b[k×n]`.
fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            orow.iter_mut().zip(brow).for_each(|(o, bv)| *o += av * bv);
        }
    }
}

/// Dot product with eight independent partial sums, which the compiler can vectorize.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (xa, xb) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// `out[m×n] += a[m×k] · b[n×k]ᵀ`.
fn matmul_a_bt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] += dot(arow, brow);
        }
    }
}

/// `out[k×n] += a[m×k]ᵀ · b[m×n]`.
fn matmul_at_b(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            orow.iter_mut().zip(brow).for_each(|(o, bv)| *o += av * bv);
        }
    }
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    /// Calls `f(col_row, out_pixel, input_offset)` for every in-bounds tap.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (s, p) = (self.stride as isize, self.padding as isize);
        for ch in 0..self.c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (ch * self.k + ky) * self.k + kx;
                    for oy in 0..self.ho {
                        let iy = oy as isize * s + ky as isize - p;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        for ox in 0..self.wo {
                            let ix = ox as isize * s + kx as isize - p;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            f(row, oy * self.wo + ox, (ch * self.h + iy as usize) * self.w + ix as usize);
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let pix = self.ho * self.wo;
        let mut cols = vec![0.0; self.c * self.k * self.k * pix];
        self.for_each_tap(|row, p, src| cols[row * pix + p] = x[src]);
        cols
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let pix = self.ho * self.wo;
        let mut x = vec![0.0; self.c * self.h * self.w];
        self.for_each_tap(|row, p, dst| x[dst] += cols[row * pix + p]);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_examples() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(&[2.0, 2.0]));
        let y = g.softmax(x, 0, 4.0).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);

        let x = g.constant(Tensor::vector(&[1.0, 0.0]));
        let y = g.softmax(x, 0, 1.0).unwrap();
        let expected = [1.0 / (1.0 + (-1.0f64).exp()), 1.0 / (1.0 + 1.0f64.exp())];
        assert!(close(g.value(y).data()[0], expected[0], 1e-15));
        assert!(close(g.value(y).data()[0], 0.73106, 1e-5));
        assert!(close(g.value(y).data()[1], 0.26894, 1e-5));
    }

    #[test]
    fn softmax_rejects_bad_temperature_and_axis() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(&[1.0, 2.0]));
        assert!(matches!(g.softmax(x, 0, 0.0), Err(Error::Domain { .. })));
        assert!(matches!(g.softmax(x, 0, -1.0), Err(Error::Domain { .. })));
        assert!(g.softmax(x, 1, 1.0).is_err());
    }

    #[test]
    fn kl_examples() {
        let mut g = Graph::new();
        let p = g.constant(Tensor::vector(&[0.5, 0.5]));
        let q = g.constant(Tensor::vector(&[0.5, 0.5]));
        let kl = g.kl_div(p, q).unwrap();
        assert_eq!(g.value(kl).item().unwrap(), 0.0);

        let p = g.constant(Tensor::vector(&[1.0 - 1e-12, 1e-12]));
        let kl = g.kl_div(p, q).unwrap();
        // closed form: sum p ln(p / q)
        let expected = (1.0 - 1e-12) * ((1.0 - 1e-12f64) / 0.5).ln() + 1e-12 * (1e-12f64 / 0.5).ln();
        assert!(close(g.value(kl).item().unwrap(), expected, 1e-12));
        assert!(close(expected, 2f64.ln(), 1e-10));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[3, 2]));
        let err = g.add(a, b).unwrap_err().to_string();
        assert!(err.contains("add") && err.contains("[2, 3]") && err.contains("[3, 2]"), "{err}");
        assert!(g.matmul(a, a).is_err());
        assert!(g.mse(a, b).is_err());
    }

    #[test]
    fn mse_gradient_by_hand() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(&[1.0, 2.0]));
        let y = g.constant(Tensor::vector(&[0.0, 2.0]));
        let loss = g.mse(x, y).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 0.0]);
        assert!(g.grad(y).is_none());
    }

    #[test]
    fn relu_gate_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(&[-1.0, 3.0]));
        let r = g.relu(x);
        let loss = g.sum(r);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn backward_requires_scalar_and_runs_once() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(&[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::Backward(_))));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert!(matches!(g.backward(s), Err(Error::Backward(_))));
        g.zero_grad();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn detached_nodes_block_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(&[1.0, 2.0]));
        let d = g.detach(x);
        let m = g.mul(x, d).unwrap();
        let s = g.sum(m);
        g.backward(s).unwrap();
        // d/dx of x * stop(x) is stop(x)
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn conv_output_shapes() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[3, 64, 64]));
        let w = g.constant(Tensor::zeros(&[16, 3, 3, 3]));
        let y = g.conv2d(x, w, None, 2, 1).unwrap();
        assert_eq!(g.value(y).shape(), &[16, 32, 32]);
        let w2 = g.constant(Tensor::zeros(&[16, 4, 3, 3]));
        assert!(g.conv2d(x, w2, None, 2, 1).is_err());
    }

    #[test]
    fn conv_matches_direct_loops() {
        let x = Tensor::from_fn(&[2, 5, 6], |i| ((i * 37) % 11) as f64 - 5.0);
        let w = Tensor::from_fn(&[3, 2, 3, 3], |i| ((i * 13) % 7) as f64 - 3.0);
        let b = Tensor::vector(&[0.5, -1.0, 2.0]);
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.constant(x.clone()), g.constant(w.clone()), g.constant(b.clone()));
        let y = g.conv2d(xv, wv, Some(bv), 2, 1).unwrap();
        let y = g.value(y).clone();
        assert_eq!(y.shape(), &[3, 3, 3]);
        for o in 0..3 {
            for oy in 0..3 {
                for ox in 0..3 {
                    let mut acc = b.data()[o];
                    for c in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * 2 + ky) as isize - 1;
                                let ix = (ox * 2 + kx) as isize - 1;
                                if (0..5).contains(&iy) && (0..6).contains(&ix) {
                                    acc += x.at(&[c, iy as usize, ix as usize]) * w.at(&[o, c, ky, kx]);
                                }
                            }
                        }
                    }
                    assert_eq!(y.at(&[o, oy, ox]), acc);
                }
            }
        }
    }

    #[test]
    fn slice_and_reshape() {
        let mut g = Graph::new();
        let x = g.param(Tensor::from_fn(&[2, 3, 2], |i| i as f64));
        let s = g.slice(x, 1, 1, 2).unwrap();
        assert_eq!(g.value(s).data(), &[2.0, 3.0, 4.0, 5.0, 8.0, 9.0, 10.0, 11.0]);
        let r = g.reshape(s, &[8]).unwrap();
        let loss = g.sum(r);
        g.backward(loss).unwrap();
        assert_eq!(
            g.grad(x).unwrap().data(),
            &[0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]
        );
        assert!(g.slice(x, 1, 2, 2).is_err());
    }

    #[test]
    fn log_domain() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(&[1.0, 0.0]));
        assert!(g.log(x).is_err());
    }
}
