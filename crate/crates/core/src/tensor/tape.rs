use std::collections::{BTreeMap, HashMap};

use super::kernels::{col2im, gemm_nn, gemm_nt, gemm_tn, im2col, ConvGeom};
use super::rng::counter_uniform;
use super::{numel, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// The differentiable operation set.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// `[m,k] · [k,n]`
    MatMul,
    Add,
    /// `[..., n] + [n]` broadcast over leading dimensions.
    AddBias,
    Sub,
    Mul,
    Scale(f64),
    AddScalar(f64),
    Sigmoid,
    Tanh,
    Relu,
    Softplus,
    /// `(x + eps)^(-1/2)`
    Rsqrt { eps: f64 },
    Concat { axis: usize },
    /// Inputs `x [B,C,H,W]`, `w [O,C,k,k]`, `b [O]`.
    Conv2d { stride: usize, pad: usize },
    /// Non-overlapping `k×k` average pooling over `[B,C,H,W]`.
    AvgPool2d { kernel: usize },
    /// `[B,C,H,W] -> [B,C]`
    GlobalAvgPool,
    /// Inverted dropout; the mask is a pure function of `(seed, element index)`.
    Dropout { keep: f64, seed: u64, training: bool },
    Mean,
    Sum,
    Reshape(Vec<usize>),
    Transpose,
    /// Euclidean norm over the last axis.
    RowNorm,
    /// Shared left multiply: `m [P,N]` applied to every `x [B,N,F]` slice (or `x [N,F]`).
    LeftBmm,
    /// Selects rows along axis 0 (repeats allowed).
    GatherRows(Vec<usize>),
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Add => "add",
            Primitive::AddBias => "add_bias",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Scale(_) => "scale",
            Primitive::AddScalar(_) => "add_scalar",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Tanh => "tanh",
            Primitive::Relu => "relu",
            Primitive::Softplus => "softplus",
            Primitive::Rsqrt { .. } => "rsqrt",
            Primitive::Concat { .. } => "concat",
            Primitive::Conv2d { .. } => "conv2d",
            Primitive::AvgPool2d { .. } => "avg_pool2d",
            Primitive::GlobalAvgPool => "global_avg_pool",
            Primitive::Dropout { .. } => "dropout",
            Primitive::Mean => "mean",
            Primitive::Sum => "sum",
            Primitive::Reshape(_) => "reshape",
            Primitive::Transpose => "transpose",
            Primitive::RowNorm => "row_norm",
            Primitive::LeftBmm => "left_bmm",
            Primitive::GatherRows(_) => "gather_rows",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Primitive::MatMul
            | Primitive::Add
            | Primitive::AddBias
            | Primitive::Sub
            | Primitive::Mul
            | Primitive::LeftBmm => 2,
            Primitive::Conv2d { .. } => 3,
            Primitive::Concat { .. } => usize::MAX,
            _ => 1,
        }
    }
}

struct Node<S> {
    shape: Vec<usize>,
    value: Vec<S>,
    prim: Option<Primitive>,
    inputs: Vec<Var>,
    requires_grad: bool,
}

/// Linear record of a forward pass. Consumed by [`Tape::backward`].
pub struct Tape<S: Real> {
    nodes: Vec<Node<S>>,
    params: HashMap<String, Var>,
}

impl<S: Real> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn sigmoid<S: Real>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn softplus<S: Real>(x: S) -> S {
    x.max(S::zero()) + (-x.abs()).exp().ln_1p()
}

fn shape_err(prim: &Primitive, shapes: &[&[usize]]) -> Error {
    Error::dim(prim.name(), format!("incompatible shapes {shapes:?}"))
}

impl<S: Real> Tape<S> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor.
    pub fn leaf(&mut self, t: Tensor<S>, requires_grad: bool) -> Result<Var> {
        if !t.is_finite() {
            return Err(Error::Numeric {
                op: "leaf",
                detail: "non-finite input value".into(),
            });
        }
        let shape = t.shape().to_vec();
        self.nodes.push(Node {
            shape,
            value: t.into_data(),
            prim: None,
            inputs: Vec::new(),
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, t: Tensor<S>) -> Result<Var> {
        self.leaf(t, false)
    }

    /// Binds a named parameter. Repeated lookups return the same [`Var`];
    /// frozen parameters become constants.
    pub fn param(&mut self, store: &ParamStore<S>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let t = store
            .get(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter `{name}`")))?;
        let v = self.leaf(Tensor::new(t.shape(), t.data().to_vec())?, !store.is_frozen(name))?;
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &[S] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor<S> {
        let n = &self.nodes[v.0];
        Tensor::new(&n.shape, n.value.clone()).expect("tape nodes hold valid tensors")
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Evaluates `prim` on `inputs` and records the result.
    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var> {
        let arity = prim.arity();
        if arity != usize::MAX && inputs.len() != arity {
            return Err(Error::Contract(format!(
                "{} takes {arity} inputs, got {}",
                prim.name(),
                inputs.len()
            )));
        }
        if inputs.is_empty() {
            return Err(Error::Contract(format!("{} needs inputs", prim.name())));
        }
        let (shape, value) = {
            let ins: Vec<&Node<S>> = inputs.iter().map(|v| &self.nodes[v.0]).collect();
            forward(&prim, &ins)?
        };
        if let Some(bad) = value.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric {
                op: prim.name(),
                detail: format!("non-finite output at element {bad} (shape {shape:?})"),
            });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            shape,
            value,
            prim: Some(prim),
            inputs: inputs.to_vec(),
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::MatMul, &[a, b])
    }
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Add, &[a, b])
    }
    pub fn add_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::AddBias, &[a, b])
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Mul, &[a, b])
    }
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(Primitive::Scale(c), &[a])
    }
    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(Primitive::AddScalar(c), &[a])
    }
    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Sigmoid, &[a])
    }
    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Tanh, &[a])
    }
    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Relu, &[a])
    }
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Softplus, &[a])
    }
    pub fn rsqrt(&mut self, a: Var, eps: f64) -> Result<Var> {
        self.apply(Primitive::Rsqrt { eps }, &[a])
    }
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        self.apply(Primitive::Concat { axis }, parts)
    }
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        self.apply(Primitive::Conv2d { stride, pad }, &[x, w, b])
    }
    pub fn avg_pool2d(&mut self, x: Var, kernel: usize) -> Result<Var> {
        self.apply(Primitive::AvgPool2d { kernel }, &[x])
    }
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::GlobalAvgPool, &[x])
    }
    pub fn dropout(&mut self, x: Var, keep: f64, seed: u64, training: bool) -> Result<Var> {
        self.apply(Primitive::Dropout { keep, seed, training }, &[x])
    }
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Mean, &[x])
    }
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Sum, &[x])
    }
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.apply(Primitive::Reshape(shape.to_vec()), &[x])
    }
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Transpose, &[x])
    }
    pub fn row_norm(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::RowNorm, &[x])
    }
    pub fn left_bmm(&mut self, m: Var, x: Var) -> Result<Var> {
        self.apply(Primitive::LeftBmm, &[m, x])
    }
    pub fn gather_rows(&mut self, x: Var, rows: Vec<usize>) -> Result<Var> {
        self.apply(Primitive::GatherRows(rows), &[x])
    }

    /// `x · W + b` for `x [m,k]`, `W [k,n]`, `b [n]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    /// Reverse sweep from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<S>> {
        if self.nodes.is_empty() {
            return Err(Error::Contract("backward on an empty tape".into()));
        }
        let root = &self.nodes[loss.0];
        if numel(&root.shape) != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.shape
            )));
        }
        let mut grads: Vec<Option<Vec<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![S::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if let Some(prim) = &node.prim {
                let ins: Vec<&Node<S>> = node.inputs.iter().map(|v| &self.nodes[v.0]).collect();
                let contributions = vjp(prim, &ins, node, &g);
                for (input, contrib) in node.inputs.iter().zip(contributions) {
                    let Some(c) = contrib else { continue };
                    match &mut grads[input.0] {
                        Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, &b)| *a = *a + b),
                        slot @ None => *slot = Some(c),
                    }
                }
            }
            grads[idx] = Some(g);
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|x| !x.is_finite()) {
                    let op = self.nodes[i].prim.as_ref().map_or("leaf", |p| p.name());
                    return Err(Error::Numeric {
                        op,
                        detail: "non-finite gradient".into(),
                    });
                }
            }
        }
        let shapes = self.nodes.iter().map(|n| n.shape.clone()).collect();
        let leaf_grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| if n.prim.is_none() && n.requires_grad { g } else { None })
            .collect();
        Ok(Gradients {
            grads: leaf_grads,
            shapes,
            params: self.params.into_iter().collect(),
        })
    }

    /// Backward, then writes parameter gradients into `store`.
    pub fn backward_into(self, loss: Var, store: &mut ParamStore<S>) -> Result<()> {
        let g = self.backward(loss)?;
        store.apply_gradients(&g)
    }
}

/// Gradients of a loss with respect to every gradient-requiring leaf.
pub struct Gradients<S> {
    grads: Vec<Option<Vec<S>>>,
    shapes: Vec<Vec<usize>>,
    params: BTreeMap<String, Var>,
}

impl<S: Real> Gradients<S> {
    /// Gradient for a leaf; zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Vec<S> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| vec![S::zero(); numel(&self.shapes[v.0])])
    }

    pub fn param(&self, name: &str) -> Option<Vec<S>> {
        self.params.get(name).map(|&v| self.wrt(v))
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }
}

fn same_shape(prim: &Primitive, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(shape_err(prim, &[a, b]));
    }
    Ok(())
}

fn conv_geom(prim: &Primitive, x: &[usize], w: &[usize], b: &[usize], stride: usize, pad: usize) -> Result<ConvGeom> {
    if x.len() != 4 || w.len() != 4 || b.len() != 1 || w[1] != x[1] || w[2] != w[3] || b[0] != w[0] || stride == 0 {
        return Err(shape_err(prim, &[x, w, b]));
    }
    let (h, wd, k) = (x[2], x[3], w[2]);
    if h + 2 * pad < k || wd + 2 * pad < k {
        return Err(shape_err(prim, &[x, w, b]));
    }
    Ok(ConvGeom {
        channels: x[1],
        height: h,
        width: wd,
        kernel: k,
        stride,
        pad,
        out_h: (h + 2 * pad - k) / stride + 1,
        out_w: (wd + 2 * pad - k) / stride + 1,
    })
}

fn forward<S: Real>(prim: &Primitive, ins: &[&Node<S>]) -> Result<(Vec<usize>, Vec<S>)> {
    let x = ins[0];
    let map = |f: &dyn Fn(S) -> S| (x.shape.clone(), x.value.iter().map(|&v| f(v)).collect());
    Ok(match prim {
        Primitive::MatMul => {
            let (a, b) = (&ins[0].shape, &ins[1].shape);
            if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
                return Err(shape_err(prim, &[a, b]));
            }
            let (m, k, n) = (a[0], a[1], b[1]);
            let mut out = vec![S::zero(); m * n];
            gemm_nn(m, k, n, &ins[0].value, &ins[1].value, &mut out);
            (vec![m, n], out)
        }
        Primitive::Add | Primitive::Sub | Primitive::Mul => {
            same_shape(prim, &ins[0].shape, &ins[1].shape)?;
            let f = |a: S, b: S| match prim {
                Primitive::Add => a + b,
                Primitive::Sub => a - b,
                _ => a * b,
            };
            let out = ins[0].value.iter().zip(&ins[1].value).map(|(&a, &b)| f(a, b)).collect();
            (ins[0].shape.clone(), out)
        }
        Primitive::AddBias => {
            let (a, b) = (&ins[0].shape, &ins[1].shape);
            if b.len() != 1 || a.last() != Some(&b[0]) {
                return Err(shape_err(prim, &[a, b]));
            }
            let n = b[0];
            let bias = &ins[1].value;
            let out = ins[0].value.iter().enumerate().map(|(i, &v)| v + bias[i % n]).collect();
            (a.clone(), out)
        }
        Primitive::Scale(c) => {
            let c = S::of(*c);
            map(&|v| v * c)
        }
        Primitive::AddScalar(c) => {
            let c = S::of(*c);
            map(&|v| v + c)
        }
        Primitive::Sigmoid => map(&sigmoid),
        Primitive::Tanh => map(&|v| v.tanh()),
        Primitive::Relu => map(&|v| v.max(S::zero())),
        Primitive::Softplus => map(&softplus),
        Primitive::Rsqrt { eps } => {
            let e = S::of(*eps);
            if let Some(bad) = x.value.iter().position(|&v| v + e <= S::zero()) {
                return Err(Error::Numeric {
                    op: "rsqrt",
                    detail: format!("non-positive argument at element {bad}"),
                });
            }
            map(&|v| (v + e).sqrt().recip())
        }
        Primitive::Concat { axis } => {
            let axis = *axis;
            let rank = x.shape.len();
            if axis >= rank {
                return Err(shape_err(prim, &ins.iter().map(|n| n.shape.as_slice()).collect::<Vec<_>>()));
            }
            for n in ins {
                let ok = n.shape.len() == rank
                    && n.shape.iter().zip(&x.shape).enumerate().all(|(d, (a, b))| d == axis || a == b);
                if !ok {
                    return Err(shape_err(prim, &ins.iter().map(|n| n.shape.as_slice()).collect::<Vec<_>>()));
                }
            }
            let outer: usize = x.shape[..axis].iter().product();
            let inner: usize = x.shape[axis + 1..].iter().product();
            let total_axis: usize = ins.iter().map(|n| n.shape[axis]).sum();
            let mut out = Vec::with_capacity(outer * total_axis * inner);
            for o in 0..outer {
                for n in ins {
                    let chunk = n.shape[axis] * inner;
                    out.extend_from_slice(&n.value[o * chunk..(o + 1) * chunk]);
                }
            }
            let mut shape = x.shape.clone();
            shape[axis] = total_axis;
            (shape, out)
        }
        Primitive::Conv2d { stride, pad } => {
            let g = conv_geom(prim, &ins[0].shape, &ins[1].shape, &ins[2].shape, *stride, *pad)?;
            let batch = ins[0].shape[0];
            let outc = ins[1].shape[0];
            let (rows, cols_n) = (g.col_rows(), g.col_cols());
            let img = g.channels * g.height * g.width;
            let mut cols = vec![S::zero(); rows * cols_n];
            let mut out = vec![S::zero(); batch * outc * cols_n];
            for b in 0..batch {
                im2col(&g, &ins[0].value[b * img..(b + 1) * img], &mut cols);
                let dst = &mut out[b * outc * cols_n..(b + 1) * outc * cols_n];
                for o in 0..outc {
                    let bias = ins[2].value[o];
                    dst[o * cols_n..(o + 1) * cols_n].iter_mut().for_each(|v| *v = bias);
                }
                gemm_nn(outc, rows, cols_n, &ins[1].value, &cols, dst);
            }
            (vec![batch, outc, g.out_h, g.out_w], out)
        }
        Primitive::AvgPool2d { kernel } => {
            let s = &x.shape;
            let k = *kernel;
            if s.len() != 4 || k == 0 || s[2] % k != 0 || s[3] % k != 0 {
                return Err(shape_err(prim, &[s]));
            }
            let (bc, h, w) = (s[0] * s[1], s[2], s[3]);
            let (oh, ow) = (h / k, w / k);
            let inv = S::of(1.0 / (k * k) as f64);
            let mut out = vec![S::zero(); bc * oh * ow];
            for p in 0..bc {
                for y in 0..h {
                    for xx in 0..w {
                        let o = (p * oh + y / k) * ow + xx / k;
                        out[o] = out[o] + x.value[(p * h + y) * w + xx] * inv;
                    }
                }
            }
            (vec![s[0], s[1], oh, ow], out)
        }
        Primitive::GlobalAvgPool => {
            let s = &x.shape;
            if s.len() != 4 {
                return Err(shape_err(prim, &[s]));
            }
            let hw = s[2] * s[3];
            let inv = S::of(1.0 / hw as f64);
            let out = x.value.chunks(hw).map(|c| c.iter().copied().sum::<S>() * inv).collect();
            (vec![s[0], s[1]], out)
        }
        Primitive::Dropout { keep, seed, training } => {
            if !(*keep > 0.0 && *keep <= 1.0) {
                return Err(Error::Contract(format!("dropout keep-probability {keep} outside (0,1]")));
            }
            if !*training || *keep == 1.0 {
                map(&|v| v)
            } else {
                let inv = S::of(1.0 / keep);
                let out = x
                    .value
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| if counter_uniform(*seed, i as u64) < *keep { v * inv } else { S::zero() })
                    .collect();
                (x.shape.clone(), out)
            }
        }
        Primitive::Mean => {
            let n = S::of(x.value.len() as f64);
            (vec![1], vec![x.value.iter().copied().sum::<S>() / n])
        }
        Primitive::Sum => (vec![1], vec![x.value.iter().copied().sum::<S>()]),
        Primitive::Reshape(shape) => {
            if numel(shape) != x.value.len() || shape.iter().any(|&d| d == 0) {
                return Err(shape_err(prim, &[&x.shape, shape]));
            }
            (shape.clone(), x.value.clone())
        }
        Primitive::Transpose => {
            let s = &x.shape;
            if s.len() != 2 {
                return Err(shape_err(prim, &[s]));
            }
            let (m, n) = (s[0], s[1]);
            let mut out = vec![S::zero(); m * n];
            for i in 0..m {
                for j in 0..n {
                    out[j * m + i] = x.value[i * n + j];
                }
            }
            (vec![n, m], out)
        }
        Primitive::RowNorm => {
            let s = &x.shape;
            let k = *s.last().unwrap();
            let out = x.value.chunks(k).map(|r| r.iter().map(|&v| v * v).sum::<S>().sqrt()).collect();
            let shape = if s.len() > 1 { s[..s.len() - 1].to_vec() } else { vec![1] };
            (shape, out)
        }
        Primitive::LeftBmm => {
            let (m, xs) = (&ins[0].shape, &ins[1].shape);
            let (batch, n, f) = match xs.len() {
                2 => (1, xs[0], xs[1]),
                3 => (xs[0], xs[1], xs[2]),
                _ => return Err(shape_err(prim, &[m, xs])),
            };
            if m.len() != 2 || m[1] != n {
                return Err(shape_err(prim, &[m, xs]));
            }
            let p = m[0];
            let mut out = vec![S::zero(); batch * p * f];
            for b in 0..batch {
                gemm_nn(p, n, f, &ins[0].value, &ins[1].value[b * n * f..(b + 1) * n * f], &mut out[b * p * f..(b + 1) * p * f]);
            }
            let shape = if xs.len() == 2 { vec![p, f] } else { vec![batch, p, f] };
            (shape, out)
        }
        Primitive::GatherRows(rows) => {
            let s = &x.shape;
            let r = s[0];
            let inner: usize = s[1..].iter().product();
            if rows.is_empty() || rows.iter().any(|&i| i >= r) {
                return Err(Error::dim("gather_rows", format!("row indices out of range for shape {s:?}")));
            }
            let mut out = Vec::with_capacity(rows.len() * inner);
            for &i in rows {
                out.extend_from_slice(&x.value[i * inner..(i + 1) * inner]);
            }
            let mut shape = s.clone();
            shape[0] = rows.len();
            (shape, out)
        }
    })
}

/// Vector-Jacobian products for each input of `node`. Entries are `None`
/// for inputs that do not require gradients.
fn vjp<S: Real>(prim: &Primitive, ins: &[&Node<S>], node: &Node<S>, g: &[S]) -> Vec<Option<Vec<S>>> {
    let need: Vec<bool> = ins.iter().map(|n| n.requires_grad).collect();
    let x = ins[0];
    let y = &node.value;
    let unary = |f: &dyn Fn(usize) -> S| -> Vec<Option<Vec<S>>> {
        if !need[0] {
            return vec![None];
        }
        vec![Some((0..g.len()).map(|i| g[i] * f(i)).collect())]
    };
    match prim {
        Primitive::MatMul => {
            let (m, k, n) = (x.shape[0], x.shape[1], ins[1].shape[1]);
            let ga = need[0].then(|| {
                let mut ga = vec![S::zero(); m * k];
                gemm_nt(m, n, k, g, &ins[1].value, &mut ga);
                ga
            });
            let gb = need[1].then(|| {
                let mut gb = vec![S::zero(); k * n];
                gemm_tn(m, k, n, &x.value, g, &mut gb);
                gb
            });
            vec![ga, gb]
        }
        Primitive::Add => vec![need[0].then(|| g.to_vec()), need[1].then(|| g.to_vec())],
        Primitive::Sub => vec![need[0].then(|| g.to_vec()), need[1].then(|| g.iter().map(|&v| -v).collect())],
        Primitive::Mul => vec![
            need[0].then(|| g.iter().zip(&ins[1].value).map(|(&a, &b)| a * b).collect()),
            need[1].then(|| g.iter().zip(&x.value).map(|(&a, &b)| a * b).collect()),
        ],
        Primitive::AddBias => {
            let n = ins[1].shape[0];
            let gb = need[1].then(|| {
                let mut gb = vec![S::zero(); n];
                for (i, &v) in g.iter().enumerate() {
                    gb[i % n] = gb[i % n] + v;
                }
                gb
            });
            vec![need[0].then(|| g.to_vec()), gb]
        }
        Primitive::Scale(c) => {
            let c = S::of(*c);
            unary(&|_| c)
        }
        Primitive::AddScalar(_) => unary(&|_| S::one()),
        Primitive::Sigmoid => unary(&|i| y[i] * (S::one() - y[i])),
        Primitive::Tanh => unary(&|i| S::one() - y[i] * y[i]),
        Primitive::Relu => unary(&|i| if x.value[i] > S::zero() { S::one() } else { S::zero() }),
        Primitive::Softplus => unary(&|i| sigmoid(x.value[i])),
        Primitive::Rsqrt { .. } => unary(&|i| S::of(-0.5) * y[i] * y[i] * y[i]),
        Primitive::Concat { axis } => {
            let axis = *axis;
            let outer: usize = x.shape[..axis].iter().product();
            let inner: usize = x.shape[axis + 1..].iter().product();
            let total = node.shape[axis] * inner;
            let mut offset = 0;
            ins.iter()
                .enumerate()
                .map(|(idx, n)| {
                    let chunk = n.shape[axis] * inner;
                    let start = offset;
                    offset += chunk;
                    need[idx].then(|| {
                        let mut gi = Vec::with_capacity(n.value.len());
                        for o in 0..outer {
                            gi.extend_from_slice(&g[o * total + start..o * total + start + chunk]);
                        }
                        gi
                    })
                })
                .collect()
        }
        Primitive::Conv2d { stride, pad } => {
            let geo = conv_geom(prim, &x.shape, &ins[1].shape, &ins[2].shape, *stride, *pad)
                .expect("validated in forward");
            let batch = x.shape[0];
            let outc = ins[1].shape[0];
            let (rows, cols_n) = (geo.col_rows(), geo.col_cols());
            let img = geo.channels * geo.height * geo.width;
            let mut gx = need[0].then(|| vec![S::zero(); x.value.len()]);
            let mut gw = need[1].then(|| vec![S::zero(); ins[1].value.len()]);
            let mut gb = need[2].then(|| vec![S::zero(); outc]);
            let mut cols = vec![S::zero(); rows * cols_n];
            let mut gcols = vec![S::zero(); rows * cols_n];
            for b in 0..batch {
                let gout = &g[b * outc * cols_n..(b + 1) * outc * cols_n];
                if let Some(gb) = gb.as_mut() {
                    for o in 0..outc {
                        gb[o] = gb[o] + gout[o * cols_n..(o + 1) * cols_n].iter().copied().sum::<S>();
                    }
                }
                if let Some(gw) = gw.as_mut() {
                    im2col(&geo, &x.value[b * img..(b + 1) * img], &mut cols);
                    gemm_nt(outc, cols_n, rows, gout, &cols, gw);
                }
                if let Some(gx) = gx.as_mut() {
                    gcols.iter_mut().for_each(|v| *v = S::zero());
                    gemm_tn(outc, rows, cols_n, &ins[1].value, gout, &mut gcols);
                    col2im(&geo, &gcols, &mut gx[b * img..(b + 1) * img]);
                }
            }
            vec![gx, gw, gb]
        }
        Primitive::AvgPool2d { kernel } => {
            if !need[0] {
                return vec![None];
            }
            let k = *kernel;
            let (h, w) = (x.shape[2], x.shape[3]);
            let (oh, ow) = (h / k, w / k);
            let inv = S::of(1.0 / (k * k) as f64);
            let gx = (0..x.value.len())
                .map(|i| {
                    let p = i / (h * w);
                    let (yy, xx) = ((i / w) % h, i % w);
                    g[(p * oh + yy / k) * ow + xx / k] * inv
                })
                .collect();
            vec![Some(gx)]
        }
        Primitive::GlobalAvgPool => {
            if !need[0] {
                return vec![None];
            }
            let hw = x.shape[2] * x.shape[3];
            let inv = S::of(1.0 / hw as f64);
            vec![Some((0..x.value.len()).map(|i| g[i / hw] * inv).collect())]
        }
        Primitive::Dropout { keep, seed, training } => {
            if !*training || *keep == 1.0 {
                return vec![need[0].then(|| g.to_vec())];
            }
            let inv = S::of(1.0 / keep);
            vec![need[0].then(|| {
                g.iter()
                    .enumerate()
                    .map(|(i, &v)| if counter_uniform(*seed, i as u64) < *keep { v * inv } else { S::zero() })
                    .collect()
            })]
        }
        Primitive::Mean => {
            let n = S::of(x.value.len() as f64);
            vec![need[0].then(|| vec![g[0] / n; x.value.len()])]
        }
        Primitive::Sum => vec![need[0].then(|| vec![g[0]; x.value.len()])],
        Primitive::Reshape(_) => vec![need[0].then(|| g.to_vec())],
        Primitive::Transpose => {
            let (m, n) = (x.shape[0], x.shape[1]);
            vec![need[0].then(|| {
                let mut out = vec![S::zero(); m * n];
                for i in 0..m {
                    for j in 0..n {
                        out[i * n + j] = g[j * m + i];
                    }
                }
                out
            })]
        }
        Primitive::RowNorm => {
            if !need[0] {
                return vec![None];
            }
            let k = *x.shape.last().unwrap();
            let gx = (0..x.value.len())
                .map(|i| {
                    let r = i / k;
                    // zero subgradient at the origin
                    if y[r] > S::zero() {
                        g[r] * x.value[i] / y[r]
                    } else {
                        S::zero()
                    }
                })
                .collect();
            vec![Some(gx)]
        }
        Primitive::LeftBmm => {
            let m = ins[0];
            let xs = &ins[1].shape;
            let (batch, n, f) = if xs.len() == 2 { (1, xs[0], xs[1]) } else { (xs[0], xs[1], xs[2]) };
            let p = m.shape[0];
            let gm = need[0].then(|| {
                let mut gm = vec![S::zero(); p * n];
                for b in 0..batch {
                    gemm_nt(p, f, n, &g[b * p * f..(b + 1) * p * f], &ins[1].value[b * n * f..(b + 1) * n * f], &mut gm);
                }
                gm
            });
            let gx = need[1].then(|| {
                let mut gx = vec![S::zero(); batch * n * f];
                for b in 0..batch {
                    gemm_tn(p, n, f, &m.value, &g[b * p * f..(b + 1) * p * f], &mut gx[b * n * f..(b + 1) * n * f]);
                }
                gx
            });
            vec![gm, gx]
        }
        Primitive::GatherRows(rows) => {
            let inner: usize = x.shape[1..].iter().product();
            vec![need[0].then(|| {
                let mut gx = vec![S::zero(); x.value.len()];
                for (o, &i) in rows.iter().enumerate() {
                    for j in 0..inner {
                        gx[i * inner + j] = gx[i * inner + j] + g[o * inner + j];
                    }
                }
                gx
            })]
        }
    }
}
