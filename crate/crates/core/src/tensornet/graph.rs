//! Eager reverse-mode tape. Values are computed as nodes are created;
//! `backward` walks the tape once in reverse.

use std::borrow::Cow;
use std::collections::HashMap;

use super::conv::{conv1d_backward, conv1d_forward, ConvSpec};
use super::{GradBuffer, ParamId, ParamStore, Scalar, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    Conv1d { x: NodeId, w: NodeId, b: Option<NodeId>, spec: ConvSpec },
    Dense { x: NodeId, w: NodeId, b: Option<NodeId> },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    MulScalarNode(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Abs(NodeId),
    Square(NodeId),
    Sqrt(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    Sum(NodeId),
    MeanOverTime(NodeId),
    Reshape(NodeId),
    Concat(Vec<NodeId>),
    BceWithLogits { logit: NodeId, label: f64 },
}

struct Node<'p, T: Scalar> {
    shape: Vec<usize>,
    value: Cow<'p, [T]>,
    op: Op,
    requires_grad: bool,
}

pub struct Graph<'p, T: Scalar> {
    nodes: Vec<Node<'p, T>>,
    /// Parameter leaves keyed by (store uid, parameter).
    param_nodes: HashMap<(u64, ParamId), NodeId>,
}

/// Gradients of a scalar root with respect to every node that needs one.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn wrt(&self, node: NodeId) -> Option<&[T]> {
        self.grads.get(node.0).and_then(|g| g.as_deref())
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<'p, T: Scalar> Default for Graph<'p, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), param_nodes: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[T] {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn scalar(&self, id: NodeId) -> T {
        self.nodes[id.0].value[0]
    }

    fn push(&mut self, shape: Vec<usize>, value: Cow<'p, [T]>, op: Op, requires_grad: bool) -> NodeId {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node { shape, value, op, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn leaf(&mut self, shape: &[usize], values: Vec<T>, requires_grad: bool) -> Result<NodeId, TensorError> {
        if numel(shape) != values.len() {
            return Err(TensorError::ShapeMismatch {
                op: "input",
                expected: shape.to_vec(),
                found: vec![values.len()],
            });
        }
        Ok(self.push(shape.to_vec(), Cow::Owned(values), Op::Leaf, requires_grad))
    }

    /// Constant input; no gradient is computed for it.
    pub fn input(&mut self, shape: &[usize], values: Vec<T>) -> Result<NodeId, TensorError> {
        self.leaf(shape, values, false)
    }

    /// Input whose gradient is tracked.
    pub fn variable(&mut self, shape: &[usize], values: Vec<T>) -> Result<NodeId, TensorError> {
        self.leaf(shape, values, true)
    }

    /// Leaf reading a stored parameter without copying it; repeated calls
    /// return the same node. One graph may read from several stores.
    pub fn param(&mut self, store: &'p ParamStore<T>, id: ParamId) -> NodeId {
        let key = (store.uid(), id);
        if let Some(&node) = self.param_nodes.get(&key) {
            return node;
        }
        let p = store.get(id);
        let node = self.push(p.shape().to_vec(), Cow::Borrowed(p.values()), Op::Param, true);
        self.param_nodes.insert(key, node);
        node
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].requires_grad)
    }

    fn unary(&mut self, a: NodeId, op: Op, f: impl Fn(T) -> T) -> NodeId {
        let value: Vec<T> = self.value(a).iter().map(|&v| f(v)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a]);
        self.push(shape, Cow::Owned(value), op, rg)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        op: Op,
        f: impl Fn(T, T) -> T,
    ) -> Result<NodeId, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op: name,
                expected: self.shape(a).to_vec(),
                found: self.shape(b).to_vec(),
            });
        }
        let value: Vec<T> = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, Cow::Owned(value), op, rg))
    }

    /// Cross-correlation of `x (C_in, L)` with `w (C_out, C_in, K)`.
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>, spec: ConvSpec) -> Result<NodeId, TensorError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 3 || ws[1] != xs[0] {
            return Err(TensorError::ShapeMismatch { op: "conv1d", expected: ws, found: xs });
        }
        let (c_in, len, c_out, k) = (xs[0], xs[1], ws[0], ws[2]);
        if len == 0 || k == 0 || spec.stride == 0 || spec.dilation == 0 {
            return Err(TensorError::InvalidArgument {
                op: "conv1d",
                reason: format!("length {len}, kernel {k}, stride {}, dilation {}", spec.stride, spec.dilation),
            });
        }
        if let Some(b) = b {
            if self.shape(b) != [c_out] {
                return Err(TensorError::ShapeMismatch {
                    op: "conv1d bias",
                    expected: vec![c_out],
                    found: self.shape(b).to_vec(),
                });
            }
        }
        let out = conv1d_forward(self.value(x), c_in, len, self.value(w), c_out, k, b.map(|b| self.value(b)), &spec);
        let l_out = spec.output_len(len, k);
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.rg(&deps);
        Ok(self.push(vec![c_out, l_out], Cow::Owned(out), Op::Conv1d { x, w, b, spec }, rg))
    }

    /// `w (M, N) * x (N) + b (M)`.
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId, TensorError> {
        let ws = self.shape(w).to_vec();
        if ws.len() != 2 || self.shape(x) != [ws[1]] {
            return Err(TensorError::ShapeMismatch { op: "dense", expected: ws, found: self.shape(x).to_vec() });
        }
        let (m, n) = (ws[0], ws[1]);
        if let Some(b) = b {
            if self.shape(b) != [m] {
                return Err(TensorError::ShapeMismatch {
                    op: "dense bias",
                    expected: vec![m],
                    found: self.shape(b).to_vec(),
                });
            }
        }
        let mut out = match b {
            Some(b) => self.value(b).to_vec(),
            None => vec![T::zero(); m],
        };
        T::gemm(m, n, 1, self.value(w), (n, 1), self.value(x), (1, 1), T::one(), &mut out);
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.rg(&deps);
        Ok(self.push(vec![m], Cow::Owned(out), Op::Dense { x, w, b }, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.binary("div", a, b, Op::Div(a, b), |x, y| x / y)
    }

    /// Multiplies every element of `a` by the single element of `s`.
    pub fn mul_scalar_node(&mut self, a: NodeId, s: NodeId) -> Result<NodeId, TensorError> {
        if numel(self.shape(s)) != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "mul_scalar_node",
                expected: vec![1],
                found: self.shape(s).to_vec(),
            });
        }
        let sv = self.scalar(s);
        let value: Vec<T> = self.value(a).iter().map(|&v| v * sv).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, s]);
        Ok(self.push(shape, Cow::Owned(value), Op::MulScalarNode(a, s), rg))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let f = T::from_f64(factor);
        self.unary(a, Op::Scale(a, factor), |v| v * f)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let c_t = T::from_f64(c);
        self.unary(a, Op::AddScalar(a), |v| v + c_t)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Abs(a), |v| v.abs())
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Square(a), |v| v * v)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Sqrt(a), |v| v.sqrt())
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Relu(a), |v| v.max(T::zero()))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Softplus(a), softplus)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: T = self.value(a).iter().copied().sum();
        let rg = self.rg(&[a]);
        self.push(vec![1], Cow::Owned(vec![s]), Op::Sum(a), rg)
    }

    /// `(C, L) -> (C)` average over the time axis.
    pub fn mean_over_time(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 || s[1] == 0 {
            return Err(TensorError::ShapeMismatch { op: "mean_over_time", expected: vec![0, 0], found: s });
        }
        let inv = T::from_f64(1.0 / s[1] as f64);
        let value: Vec<T> = self.value(a).chunks_exact(s[1]).map(|r| r.iter().copied().sum::<T>() * inv).collect();
        let rg = self.rg(&[a]);
        Ok(self.push(vec![s[0]], Cow::Owned(value), Op::MeanOverTime(a), rg))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId, TensorError> {
        if numel(shape) != numel(self.shape(a)) {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                expected: shape.to_vec(),
                found: self.shape(a).to_vec(),
            });
        }
        let value = self.value(a).to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(shape.to_vec(), Cow::Owned(value), Op::Reshape(a), rg))
    }

    pub fn flatten(&mut self, a: NodeId) -> NodeId {
        let n = numel(self.shape(a));
        self.reshape(a, &[n]).expect("same element count")
    }

    /// Concatenates 1-D nodes.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        let mut value = Vec::new();
        for &p in parts {
            if self.shape(p).len() != 1 {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    expected: vec![0],
                    found: self.shape(p).to_vec(),
                });
            }
            value.extend_from_slice(self.value(p));
        }
        let rg = self.rg(parts);
        Ok(self.push(vec![value.len()], Cow::Owned(value), Op::Concat(parts.to_vec()), rg))
    }

    /// Numerically stable binary cross-entropy on a single logit.
    pub fn bce_with_logits(&mut self, logit: NodeId, label: f64) -> Result<NodeId, TensorError> {
        if numel(self.shape(logit)) != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "bce_with_logits",
                expected: vec![1],
                found: self.shape(logit).to_vec(),
            });
        }
        let z = self.scalar(logit);
        let loss = softplus(z) - T::from_f64(label) * z;
        let rg = self.rg(&[logit]);
        Ok(self.push(vec![1], Cow::Owned(vec![loss]), Op::BceWithLogits { logit, label }, rg))
    }

    /// Dot product of two equal-length vectors.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let p = self.mul(a, b)?;
        Ok(self.sum(p))
    }

    pub fn euclidean_distance(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let d = self.sub(a, b)?;
        let sq = self.square(d);
        let s = self.sum(sq);
        Ok(self.sqrt(s))
    }

    pub fn cosine_similarity(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let ab = self.dot(a, b)?;
        let aa = self.dot(a, a)?;
        let bb = self.dot(b, b)?;
        let na = self.sqrt(aa);
        let nb = self.sqrt(bb);
        let denom = self.mul(na, nb)?;
        self.div(ab, denom)
    }

    /// Reverse pass from a single-element root.
    pub fn backward(&self, root: NodeId) -> Result<Gradients<T>, TensorError> {
        let root_shape = self.shape(root);
        if numel(root_shape) != 1 {
            return Err(TensorError::NonScalarRoot(root_shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![T::one()]);
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let keep = matches!(node.op, Op::Leaf | Op::Param);
            let g = match if keep { grads[i].clone() } else { grads[i].take() } {
                Some(g) => g,
                None => continue,
            };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], id: NodeId, contrib: impl FnOnce() -> Vec<T>) {
        if !self.needs(id) {
            return;
        }
        let c = contrib();
        match &mut grads[id.0] {
            Some(existing) => existing.iter_mut().zip(&c).for_each(|(e, &v)| *e += v),
            slot => *slot = Some(c),
        }
    }

    fn elementwise(&self, grads: &mut [Option<Vec<T>>], a: NodeId, g: &[T], f: impl Fn(usize, T) -> T) {
        self.accumulate(grads, a, || g.iter().enumerate().map(|(i, &gi)| f(i, gi)).collect());
    }

    fn propagate(&self, node: &Node<'p, T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let zero = T::zero();
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Conv1d { x, w, b, spec } => {
                let (xs, ws) = (self.shape(*x), self.shape(*w));
                let cg = conv1d_backward(
                    self.value(*x),
                    xs[0],
                    xs[1],
                    self.value(*w),
                    ws[0],
                    ws[2],
                    spec,
                    g,
                    self.needs(*x),
                );
                if let Some(gx) = cg.input {
                    self.accumulate(grads, *x, || gx);
                }
                self.accumulate(grads, *w, || cg.weight);
                if let Some(b) = b {
                    self.accumulate(grads, *b, || cg.bias);
                }
            }
            Op::Dense { x, w, b } => {
                let (m, n) = (self.shape(*w)[0], self.shape(*w)[1]);
                let (xv, wv) = (self.value(*x), self.value(*w));
                self.accumulate(grads, *w, || {
                    let mut gw = vec![zero; m * n];
                    for (row, &gm) in gw.chunks_exact_mut(n).zip(g) {
                        row.iter_mut().zip(xv).for_each(|(r, &xi)| *r = gm * xi);
                    }
                    gw
                });
                self.accumulate(grads, *x, || {
                    let mut gx = vec![zero; n];
                    T::gemm(1, m, n, g, (m, 1), wv, (n, 1), zero, &mut gx);
                    gx
                });
                if let Some(b) = b {
                    self.accumulate(grads, *b, || g.to_vec());
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, || g.to_vec());
                self.accumulate(grads, *b, || g.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, || g.to_vec());
                self.accumulate(grads, *b, || g.iter().map(|&v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.elementwise(grads, *a, g, |i, gi| gi * bv[i]);
                self.elementwise(grads, *b, g, |i, gi| gi * av[i]);
            }
            Op::Div(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.elementwise(grads, *a, g, |i, gi| gi / bv[i]);
                self.elementwise(grads, *b, g, |i, gi| -gi * av[i] / (bv[i] * bv[i]));
            }
            Op::MulScalarNode(a, s) => {
                let (av, sv) = (self.value(*a), self.scalar(*s));
                self.elementwise(grads, *a, g, |_, gi| gi * sv);
                self.accumulate(grads, *s, || vec![g.iter().zip(av).map(|(&gi, &ai)| gi * ai).sum()]);
            }
            Op::Scale(a, f) => {
                let f = T::from_f64(*f);
                self.elementwise(grads, *a, g, |_, gi| gi * f);
            }
            Op::AddScalar(a) | Op::Reshape(a) => self.accumulate(grads, *a, || g.to_vec()),
            Op::Abs(a) => {
                let av = self.value(*a);
                self.elementwise(grads, *a, g, |i, gi| {
                    if av[i] > zero {
                        gi
                    } else if av[i] < zero {
                        -gi
                    } else {
                        zero
                    }
                });
            }
            Op::Square(a) => {
                let av = self.value(*a);
                let two = T::from_f64(2.0);
                self.elementwise(grads, *a, g, |i, gi| gi * two * av[i]);
            }
            Op::Sqrt(a) => {
                // Subgradient 0 at the origin instead of infinity.
                let half = T::from_f64(0.5);
                self.elementwise(grads, *a, g, |i, gi| if y[i] > zero { gi * half / y[i] } else { zero });
            }
            Op::Relu(a) => {
                let av = self.value(*a);
                self.elementwise(grads, *a, g, |i, gi| if av[i] > zero { gi } else { zero });
            }
            Op::Sigmoid(a) => {
                self.elementwise(grads, *a, g, |i, gi| gi * y[i] * (T::one() - y[i]));
            }
            Op::Softplus(a) => {
                let av = self.value(*a);
                self.elementwise(grads, *a, g, |i, gi| gi * sigmoid(av[i]));
            }
            Op::Sum(a) => {
                let n = numel(self.shape(*a));
                self.accumulate(grads, *a, || vec![g[0]; n]);
            }
            Op::MeanOverTime(a) => {
                let len = self.shape(*a)[1];
                let inv = T::from_f64(1.0 / len as f64);
                self.accumulate(grads, *a, || g.iter().flat_map(|&gc| std::iter::repeat_n(gc * inv, len)).collect());
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = numel(self.shape(p));
                    self.accumulate(grads, p, || g[offset..offset + n].to_vec());
                    offset += n;
                }
            }
            Op::BceWithLogits { logit, label } => {
                let z = self.scalar(*logit);
                let label = T::from_f64(*label);
                self.accumulate(grads, *logit, || vec![g[0] * (sigmoid(z) - label)]);
            }
        }
    }

    /// Collects gradients for `store` in store order (zeros for parameters
    /// the graph never read).
    pub fn param_grads(&self, grads: &Gradients<T>, store: &ParamStore<T>) -> GradBuffer<T> {
        let vecs = store
            .ids()
            .map(|id| {
                self.param_nodes
                    .get(&(store.uid(), id))
                    .and_then(|&n| grads.wrt(n))
                    .map_or_else(|| vec![T::zero(); store.get(id).values().len()], |g| g.to_vec())
            })
            .collect();
        GradBuffer::from_vecs(vecs)
    }

    /// True when this graph holds at least one parameter leaf of `store`.
    pub fn uses_store(&self, store: &ParamStore<T>) -> bool {
        self.param_nodes.keys().any(|&(uid, _)| uid == store.uid())
    }
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softplus<T: Scalar>(v: T) -> T {
    v.max(T::zero()) + (-v.abs()).exp().ln_1p()
}
