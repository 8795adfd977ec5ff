use std::collections::BTreeMap;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadMode {
    Zeros,
    /// Wrap around the width axis (periodic index structure).
    Circular,
}

/// Stride and padding of a 1D cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv1dSpec {
    pub stride: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub mode: PadMode,
}

impl Conv1dSpec {
    /// Stride-1 convolution whose output width equals the input width.
    pub fn same(kernel: usize, mode: PadMode) -> Self {
        let total = kernel.saturating_sub(1);
        Conv1dSpec {
            stride: 1,
            pad_left: total / 2,
            pad_right: total - total / 2,
            mode,
        }
    }

    pub fn output_width(&self, width: usize, kernel: usize) -> Result<usize> {
        if self.stride == 0 {
            return Err(Error::invalid("conv1d stride must be positive"));
        }
        if width == 0 {
            return Err(Error::invalid("conv1d input width is zero"));
        }
        let padded = width + self.pad_left + self.pad_right;
        if padded < kernel {
            return Err(Error::invalid(format!(
                "padded width {padded} is smaller than kernel {kernel}"
            )));
        }
        Ok((padded - kernel) / self.stride + 1)
    }

    /// Source position of every slot of the padded row; `None` is a padding zero.
    fn padded_sources(&self, width: usize, kernel: usize) -> Result<(usize, Vec<Option<usize>>)> {
        let out = self.output_width(width, kernel)?;
        let padded = width + self.pad_left + self.pad_right;
        let idx = (0..padded)
            .map(|q| {
                let p = q as isize - self.pad_left as isize;
                match self.mode {
                    PadMode::Zeros => (p >= 0 && p < width as isize).then_some(p as usize),
                    PadMode::Circular => Some(p.rem_euclid(width as isize) as usize),
                }
            })
            .collect();
        Ok((out, idx))
    }
}

#[derive(Clone, Debug)]
pub enum Op {
    Input(String),
    Param(usize),
    Const(Tensor),
    /// `[B, n] × [n, m] → [B, m]`
    MatMul(NodeId, NodeId),
    /// Adds a bias of `row_len` entries to every batch row.
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Multiply by a single-entry tensor.
    ScaleBy(NodeId, NodeId),
    Powi(NodeId, i32),
    Sin(NodeId),
    Cos(NodeId),
    Elu(NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    /// Concatenation of `[B, n_i]` blocks along the second axis.
    Concat(Vec<NodeId>),
    /// Keeps the batch extent, replaces the rest.
    Reshape(NodeId, Vec<usize>),
    /// `x: [B, C_in, W]`, `w: [C_out, C_in, K]`, optional bias `[C_out]`.
    Conv1d {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        spec: Conv1dSpec,
    },
    /// `[B, n] ⊗ [k] → [B, n·k]`, entry `(b, i·k + c) = a[b, i]·v[c]`.
    Outer(NodeId, NodeId),
    Sum(NodeId),
    Mean(NodeId),
    /// Sum of all entries divided by the leading (batch) extent.
    BatchMean(NodeId),
}

impl Op {
    fn operands(&self) -> Vec<NodeId> {
        use Op::*;
        match self {
            Input(_) | Param(_) | Const(_) => vec![],
            MatMul(a, b) | AddBias(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | ScaleBy(a, b)
            | Outer(a, b) => vec![*a, *b],
            Scale(a, _) | Powi(a, _) | Sin(a) | Cos(a) | Elu(a) | Relu(a) | Tanh(a)
            | Reshape(a, _) | Sum(a) | Mean(a) | BatchMean(a) => vec![*a],
            Concat(xs) => xs.clone(),
            Conv1d { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b.iter().copied());
                v
            }
        }
    }
}

/// A static differentiable computation graph with its own parameter store.
///
/// Nodes only reference earlier nodes, so the node order is a topological
/// order and the graph is acyclic by construction.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Op>,
    params: ParamStore,
    param_nodes: Vec<NodeId>,
    named: BTreeMap<String, NodeId>,
}

/// Node values produced by [`Graph::forward`].
#[derive(Clone, Debug)]
pub struct Evaluation {
    values: Vec<Option<Tensor>>,
    output: NodeId,
}

impl Evaluation {
    pub fn output(&self) -> &Tensor {
        self.values[self.output.0]
            .as_ref()
            .expect("output is always evaluated")
    }

    pub fn output_id(&self) -> NodeId {
        self.output
    }

    /// Value of an evaluated non-parameter node.
    pub fn value(&self, id: NodeId) -> Option<&Tensor> {
        self.values.get(id.0).and_then(Option::as_ref)
    }

    pub fn into_output(mut self) -> Tensor {
        self.values[self.output.0].take().expect("output evaluated")
    }
}

/// Gradients of a scalar (or seeded) node.
#[derive(Clone, Debug)]
pub struct Gradients {
    /// Aligned with the graph's parameter store; zero for unreached parameters.
    pub params: Vec<Tensor>,
    /// Gradients w.r.t. bound inputs that lie on a path to the node.
    pub inputs: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn input(&self, name: &str) -> Option<&Tensor> {
        self.inputs.get(name)
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            a.add_assign(b);
        }
        for (k, v) in &other.inputs {
            match self.inputs.get_mut(k) {
                Some(t) if t.shape() == v.shape() => t.add_assign(v),
                _ => {
                    self.inputs.insert(k.clone(), v.clone());
                }
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.params
            .iter()
            .map(|t| t.data().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

fn rank2(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(Error::shape(format!(
            "{what} expects a rank-2 tensor, got {:?}",
            t.shape()
        )));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = a.data().iter().map(|&v| f(v)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shape preserved")
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("shape preserved")
}

fn elu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        v.exp_m1()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op) -> NodeId {
        debug_assert!(op.operands().iter().all(|o| o.0 < self.nodes.len()));
        self.nodes.push(op);
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, name: &str) -> NodeId {
        self.push(Op::Input(name.to_string()))
    }

    pub fn param(&mut self, name: &str, value: Tensor) -> Result<NodeId> {
        let idx = self.params.insert(name, value)?;
        let id = self.push(Op::Param(idx));
        self.param_nodes.push(id);
        Ok(id)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Const(value))
    }

    pub fn matmul(&mut self, a: NodeId, w: NodeId) -> NodeId {
        self.push(Op::MatMul(a, w))
    }

    pub fn add_bias(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::AddBias(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.push(Op::Scale(a, c))
    }

    pub fn scale_by(&mut self, a: NodeId, s: NodeId) -> NodeId {
        self.push(Op::ScaleBy(a, s))
    }

    pub fn powi(&mut self, a: NodeId, n: i32) -> NodeId {
        self.push(Op::Powi(a, n))
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sin(a))
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Cos(a))
    }

    pub fn elu(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Elu(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Relu(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Tanh(a))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        self.push(Op::Concat(parts.to_vec()))
    }

    pub fn reshape(&mut self, a: NodeId, tail: &[usize]) -> NodeId {
        self.push(Op::Reshape(a, tail.to_vec()))
    }

    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>, spec: Conv1dSpec) -> NodeId {
        self.push(Op::Conv1d { x, w, b, spec })
    }

    pub fn outer(&mut self, a: NodeId, v: NodeId) -> NodeId {
        self.push(Op::Outer(a, v))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Mean(a))
    }

    /// Affine layer `a·W + b` with freshly registered parameters.
    pub fn linear(&mut self, a: NodeId, prefix: &str, weight: Tensor, bias: Tensor) -> Result<NodeId> {
        let w = self.param(&format!("{prefix}.weight"), weight)?;
        let b = self.param(&format!("{prefix}.bias"), bias)?;
        let h = self.matmul(a, w);
        Ok(self.add_bias(h, b))
    }

    /// Mean over the batch of the squared Euclidean row distance.
    pub fn mse(&mut self, prediction: NodeId, target: NodeId) -> NodeId {
        let r = self.sub(prediction, target);
        let sq = self.powi(r, 2);
        self.batch_mean(sq)
    }

    pub fn batch_mean(&mut self, a: NodeId) -> NodeId {
        self.push(Op::BatchMean(a))
    }

    pub fn set_name(&mut self, name: &str, id: NodeId) {
        self.named.insert(name.to_string(), id);
    }

    pub fn named(&self, name: &str) -> Option<NodeId> {
        self.named.get(name).copied()
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn param_node(&self, name: &str) -> Option<NodeId> {
        self.params.id(name).map(|i| self.param_nodes[i])
    }

    /// Names of all input placeholders, in creation order.
    pub fn input_names(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter_map(|op| match op {
                Op::Input(n) => Some(n.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Nodes that `output` depends on.
    pub fn ancestors(&self, output: NodeId) -> Vec<bool> {
        let mut needed = vec![false; output.0 + 1];
        needed[output.0] = true;
        for i in (0..=output.0).rev() {
            if needed[i] {
                for o in self.nodes[i].operands() {
                    needed[o.0] = true;
                }
            }
        }
        needed
    }

    fn value<'a>(&'a self, values: &'a [Option<Tensor>], id: NodeId) -> &'a Tensor {
        match &self.nodes[id.0] {
            Op::Param(i) => self.params.tensor(*i),
            Op::Const(t) => t,
            _ => values[id.0].as_ref().expect("operand evaluated before use"),
        }
    }

    /// Evaluate `output` with the given input bindings.
    pub fn forward(&self, inputs: &[(&str, &Tensor)], output: NodeId) -> Result<Evaluation> {
        if output.0 >= self.nodes.len() {
            return Err(Error::invalid("output node does not belong to this graph"));
        }
        let needed = self.ancestors(output);
        let mut values: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        for i in 0..=output.0 {
            if !needed[i] {
                continue;
            }
            let op = &self.nodes[i];
            let v = match op {
                Op::Input(name) => {
                    let t = inputs
                        .iter()
                        .find(|(n, _)| *n == name.as_str())
                        .map(|(_, t)| *t)
                        .ok_or_else(|| Error::UnboundInput(name.clone()))?;
                    Some(t.clone())
                }
                Op::Param(_) | Op::Const(_) => None,
                _ => Some(self.eval_op(op, &values)?),
            };
            values[i] = v;
        }
        Ok(Evaluation { values, output })
    }

    fn eval_op(&self, op: &Op, values: &[Option<Tensor>]) -> Result<Tensor> {
        let v = |id: &NodeId| self.value(values, *id);
        Ok(match op {
            Op::Input(_) | Op::Param(_) | Op::Const(_) => unreachable!(),
            Op::MatMul(a, w) => {
                let (a, w) = (v(a), v(w));
                let (rows, n) = rank2(a, "matmul lhs")?;
                let (n2, m) = rank2(w, "matmul rhs")?;
                if n != n2 {
                    return Err(Error::shape(format!(
                        "matmul {:?} × {:?}",
                        a.shape(),
                        w.shape()
                    )));
                }
                let mut out = vec![0.0; rows * m];
                let (ad, wd) = (a.data(), w.data());
                for r in 0..rows {
                    let orow = &mut out[r * m..(r + 1) * m];
                    for (i, &av) in ad[r * n..(r + 1) * n].iter().enumerate() {
                        if av == 0.0 {
                            continue;
                        }
                        let wrow = &wd[i * m..(i + 1) * m];
                        for (o, &wv) in orow.iter_mut().zip(wrow) {
                            *o += av * wv;
                        }
                    }
                }
                Tensor::new(vec![rows, m], out)?
            }
            Op::AddBias(a, b) => {
                let (a, b) = (v(a), v(b));
                let len = a.row_len();
                if b.numel() != len {
                    return Err(Error::shape(format!(
                        "bias of {} entries for rows of {}",
                        b.numel(),
                        len
                    )));
                }
                let mut out = a.clone();
                for row in out.data_mut().chunks_mut(len.max(1)) {
                    for (o, &bv) in row.iter_mut().zip(b.data()) {
                        *o += bv;
                    }
                }
                out
            }
            Op::Add(a, b) => {
                same_shape(v(a), v(b), "add")?;
                zip(v(a), v(b), |x, y| x + y)
            }
            Op::Sub(a, b) => {
                same_shape(v(a), v(b), "sub")?;
                zip(v(a), v(b), |x, y| x - y)
            }
            Op::Mul(a, b) => {
                same_shape(v(a), v(b), "mul")?;
                zip(v(a), v(b), |x, y| x * y)
            }
            Op::Scale(a, c) => map(v(a), |x| x * c),
            Op::ScaleBy(a, s) => {
                let s = v(s).item()?;
                map(v(a), |x| x * s)
            }
            Op::Powi(a, n) => map(v(a), |x| x.powi(*n)),
            Op::Sin(a) => map(v(a), f64::sin),
            Op::Cos(a) => map(v(a), f64::cos),
            Op::Elu(a) => map(v(a), elu),
            Op::Relu(a) => map(v(a), |x| x.max(0.0)),
            Op::Tanh(a) => map(v(a), f64::tanh),
            Op::Concat(parts) => {
                let mut rows = None;
                let mut widths = Vec::with_capacity(parts.len());
                for p in parts {
                    let (r, c) = rank2(v(p), "concat")?;
                    if *rows.get_or_insert(r) != r {
                        return Err(Error::shape("concat blocks with different batch sizes"));
                    }
                    widths.push(c);
                }
                let rows = rows.unwrap_or(0);
                let total: usize = widths.iter().sum();
                let mut out = Vec::with_capacity(rows * total);
                for r in 0..rows {
                    for (p, &c) in parts.iter().zip(&widths) {
                        out.extend_from_slice(&v(p).data()[r * c..(r + 1) * c]);
                    }
                }
                Tensor::new(vec![rows, total], out)?
            }
            Op::Reshape(a, tail) => {
                let a = v(a);
                let mut shape = vec![a.batch()];
                shape.extend_from_slice(tail);
                a.clone().reshape(shape)?
            }
            Op::Conv1d { x, w, b, spec } => {
                conv1d_forward(v(x), v(w), b.as_ref().map(&v), spec)?
            }
            Op::Outer(a, k) => {
                let a = v(a);
                let (rows, n) = rank2(a, "outer")?;
                let kv = v(k).data();
                let kn = kv.len();
                let mut out = Vec::with_capacity(rows * n * kn);
                for &av in a.data() {
                    out.extend(kv.iter().map(|&c| av * c));
                }
                Tensor::new(vec![rows, n * kn], out)?
            }
            Op::Sum(a) => Tensor::scalar(v(a).data().iter().sum()),
            Op::Mean(a) => {
                let a = v(a);
                Tensor::scalar(a.data().iter().sum::<f64>() / a.numel().max(1) as f64)
            }
            Op::BatchMean(a) => {
                let a = v(a);
                Tensor::scalar(a.data().iter().sum::<f64>() / a.batch().max(1) as f64)
            }
        })
    }

    /// Reverse-mode gradients of the scalar node `loss`.
    pub fn backward(&self, eval: &Evaluation, loss: NodeId) -> Result<Gradients> {
        let value = eval
            .value(loss)
            .ok_or_else(|| Error::invalid("loss node was not evaluated"))?;
        if value.numel() != 1 {
            return Err(Error::shape(format!(
                "loss must be scalar, got shape {:?}",
                value.shape()
            )));
        }
        self.backward_seeded(eval, loss, Tensor::new(value.shape().to_vec(), vec![1.0])?)
    }

    /// Vector–Jacobian product of node `node` with cotangent `seed`.
    pub fn backward_seeded(&self, eval: &Evaluation, node: NodeId, seed: Tensor) -> Result<Gradients> {
        let value = eval
            .value(node)
            .ok_or_else(|| Error::invalid("node was not evaluated"))?;
        if value.shape() != seed.shape() {
            return Err(Error::shape(format!(
                "seed {:?} for node of shape {:?}",
                seed.shape(),
                value.shape()
            )));
        }
        let values = &eval.values;
        let mut grads: Vec<Option<Tensor>> = vec![None; node.0 + 1];
        grads[node.0] = Some(seed);
        let mut param_grads: Vec<Tensor> = self
            .params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        let mut input_grads = BTreeMap::new();

        for i in (0..=node.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let v = |id: &NodeId| self.value(values, *id);
            match &self.nodes[i] {
                Op::Input(name) => {
                    input_grads
                        .entry(name.clone())
                        .and_modify(|t: &mut Tensor| t.add_assign(&g))
                        .or_insert(g);
                }
                Op::Param(idx) => param_grads[*idx].add_assign(&g),
                Op::Const(_) => {}
                Op::MatMul(a, w) => {
                    let (at, wt) = (v(a), v(w));
                    let (rows, n) = (at.shape()[0], at.shape()[1]);
                    let m = wt.shape()[1];
                    let (ad, wd, gd) = (at.data(), wt.data(), g.data());
                    let mut da = vec![0.0; rows * n];
                    let mut dw = vec![0.0; n * m];
                    for r in 0..rows {
                        let grow = &gd[r * m..(r + 1) * m];
                        let arow = &ad[r * n..(r + 1) * n];
                        let darow = &mut da[r * n..(r + 1) * n];
                        for i in 0..n {
                            let wrow = &wd[i * m..(i + 1) * m];
                            let mut s = 0.0;
                            for (gv, wv) in grow.iter().zip(wrow) {
                                s += gv * wv;
                            }
                            darow[i] = s;
                            let av = arow[i];
                            if av != 0.0 {
                                let dwrow = &mut dw[i * m..(i + 1) * m];
                                for (d, gv) in dwrow.iter_mut().zip(grow) {
                                    *d += av * gv;
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::new(vec![rows, n], da)?);
                    accumulate(&mut grads, *w, Tensor::new(vec![n, m], dw)?);
                }
                Op::AddBias(a, b) => {
                    let bt = v(b);
                    let len = bt.numel();
                    let mut db = vec![0.0; len];
                    for row in g.data().chunks(len.max(1)) {
                        for (d, gv) in db.iter_mut().zip(row) {
                            *d += gv;
                        }
                    }
                    accumulate(&mut grads, *b, Tensor::new(bt.shape().to_vec(), db)?);
                    accumulate(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, map(&g, |x| -x));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    accumulate(&mut grads, *a, zip(&g, v(b), |x, y| x * y));
                    accumulate(&mut grads, *b, zip(&g, v(a), |x, y| x * y));
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, map(&g, |x| x * c)),
                Op::ScaleBy(a, s) => {
                    let st = v(s);
                    let sv = st.item()?;
                    let ds: f64 = g.data().iter().zip(v(a).data()).map(|(x, y)| x * y).sum();
                    accumulate(&mut grads, *s, Tensor::new(st.shape().to_vec(), vec![ds])?);
                    accumulate(&mut grads, *a, map(&g, |x| x * sv));
                }
                Op::Powi(a, n) => {
                    let n = *n;
                    let d = zip(&g, v(a), |x, y| x * n as f64 * y.powi(n - 1));
                    accumulate(&mut grads, *a, d);
                }
                Op::Sin(a) => accumulate(&mut grads, *a, zip(&g, v(a), |x, y| x * y.cos())),
                Op::Cos(a) => accumulate(&mut grads, *a, zip(&g, v(a), |x, y| -x * y.sin())),
                Op::Elu(a) => accumulate(
                    &mut grads,
                    *a,
                    zip(&g, v(a), |x, y| if y > 0.0 { x } else { x * y.exp() }),
                ),
                Op::Relu(a) => accumulate(
                    &mut grads,
                    *a,
                    zip(&g, v(a), |x, y| if y > 0.0 { x } else { 0.0 }),
                ),
                Op::Tanh(a) => {
                    let out = values[i].as_ref().expect("evaluated");
                    accumulate(&mut grads, *a, zip(&g, out, |x, t| x * (1.0 - t * t)));
                }
                Op::Concat(parts) => {
                    let rows = g.shape()[0];
                    let total = g.shape()[1];
                    let mut offset = 0;
                    for p in parts {
                        let c = v(p).shape()[1];
                        let mut d = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            d.extend_from_slice(&g.data()[r * total + offset..r * total + offset + c]);
                        }
                        accumulate(&mut grads, *p, Tensor::new(vec![rows, c], d)?);
                        offset += c;
                    }
                }
                Op::Reshape(a, _) => {
                    let shape = v(a).shape().to_vec();
                    accumulate(&mut grads, *a, g.reshape(shape)?);
                }
                Op::Conv1d { x, w, b, spec } => {
                    let (dx, dw, db) =
                        conv1d_backward(v(x), v(w), b.is_some(), spec, &g)?;
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                    if let (Some(b), Some(db)) = (b, db) {
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Outer(a, k) => {
                    let (at, kt) = (v(a), v(k));
                    let kv = kt.data();
                    let kn = kv.len();
                    let mut da = vec![0.0; at.numel()];
                    let mut dk = vec![0.0; kn];
                    for (idx, (&av, gchunk)) in
                        at.data().iter().zip(g.data().chunks(kn.max(1))).enumerate()
                    {
                        let mut s = 0.0;
                        for c in 0..kn {
                            s += gchunk[c] * kv[c];
                            dk[c] += gchunk[c] * av;
                        }
                        da[idx] = s;
                    }
                    accumulate(&mut grads, *a, Tensor::new(at.shape().to_vec(), da)?);
                    accumulate(&mut grads, *k, Tensor::new(kt.shape().to_vec(), dk)?);
                }
                Op::Sum(a) => {
                    let gv = g.item()?;
                    accumulate(&mut grads, *a, Tensor::filled(v(a).shape(), gv));
                }
                Op::Mean(a) => {
                    let gv = g.item()?;
                    let at = v(a);
                    let n = at.numel().max(1) as f64;
                    accumulate(&mut grads, *a, Tensor::filled(at.shape(), gv / n));
                }
                Op::BatchMean(a) => {
                    let gv = g.item()?;
                    let at = v(a);
                    let n = at.batch().max(1) as f64;
                    accumulate(&mut grads, *a, Tensor::filled(at.shape(), gv / n));
                }
            }
        }
        Ok(Gradients {
            params: param_grads,
            inputs: input_grads,
        })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(t) => t.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn conv_dims(x: &Tensor, w: &Tensor) -> Result<(usize, usize, usize, usize, usize)> {
    if x.rank() != 3 || w.rank() != 3 {
        return Err(Error::shape(format!(
            "conv1d expects x [B, C, W] and w [O, C, K], got {:?} and {:?}",
            x.shape(),
            w.shape()
        )));
    }
    let (b, c, width) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (o, c2, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    if c != c2 {
        return Err(Error::shape(format!(
            "conv1d input has {c} channels, kernel expects {c2}"
        )));
    }
    Ok((b, c, width, o, k))
}

/// Cross-correlation: `out[b, o, t] = bias[o] + Σ_c Σ_k w[o, c, k]·x̃[b, c, t·s + k − pad_left]`.
pub fn conv1d_forward(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, spec: &Conv1dSpec) -> Result<Tensor> {
    let (batch, cin, width, cout, k) = conv_dims(x, w)?;
    if let Some(b) = bias {
        if b.numel() != cout {
            return Err(Error::shape("conv1d bias length differs from output channels"));
        }
    }
    let (wo, src) = spec.padded_sources(width, k)?;
    let stride = spec.stride;
    let (xd, wd) = (x.data(), w.data());
    let mut out = vec![0.0; batch * cout * wo];
    let mut xpad = vec![0.0; cin * src.len()];
    let pw = src.len();
    for bi in 0..batch {
        for c in 0..cin {
            let xrow = &xd[(bi * cin + c) * width..(bi * cin + c + 1) * width];
            for (slot, s) in xpad[c * pw..(c + 1) * pw].iter_mut().zip(&src) {
                *slot = s.map_or(0.0, |p| xrow[p]);
            }
        }
        for o in 0..cout {
            let b0 = bias.map(|b| b.data()[o]).unwrap_or(0.0);
            let orow = &mut out[(bi * cout + o) * wo..(bi * cout + o + 1) * wo];
            orow.iter_mut().for_each(|v| *v = b0);
            for c in 0..cin {
                let prow = &xpad[c * pw..(c + 1) * pw];
                let wrow = &wd[(o * cin + c) * k..(o * cin + c + 1) * k];
                for (t, ov) in orow.iter_mut().enumerate() {
                    let win = &prow[t * stride..t * stride + k];
                    *ov += win.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }
    Tensor::new(vec![batch, cout, wo], out)
}

type ConvGrads = (Tensor, Tensor, Option<Tensor>);

fn conv1d_backward(x: &Tensor, w: &Tensor, has_bias: bool, spec: &Conv1dSpec, g: &Tensor) -> Result<ConvGrads> {
    let (batch, cin, width, cout, k) = conv_dims(x, w)?;
    let (wo, src) = spec.padded_sources(width, k)?;
    let stride = spec.stride;
    let pw = src.len();
    let (xd, wd, gd) = (x.data(), w.data(), g.data());
    let mut dx = vec![0.0; xd.len()];
    let mut dw = vec![0.0; wd.len()];
    let mut db = vec![0.0; cout];
    let mut xpad = vec![0.0; cin * pw];
    let mut dpad = vec![0.0; cin * pw];
    for bi in 0..batch {
        for c in 0..cin {
            let xrow = &xd[(bi * cin + c) * width..(bi * cin + c + 1) * width];
            for (slot, s) in xpad[c * pw..(c + 1) * pw].iter_mut().zip(&src) {
                *slot = s.map_or(0.0, |p| xrow[p]);
            }
        }
        dpad.iter_mut().for_each(|v| *v = 0.0);
        for o in 0..cout {
            let grow = &gd[(bi * cout + o) * wo..(bi * cout + o + 1) * wo];
            db[o] += grow.iter().sum::<f64>();
            for c in 0..cin {
                let prow = &xpad[c * pw..(c + 1) * pw];
                let drow = &mut dpad[c * pw..(c + 1) * pw];
                let woff = (o * cin + c) * k;
                let wrow = &wd[woff..woff + k];
                let dwrow = &mut dw[woff..woff + k];
                for (t, &gv) in grow.iter().enumerate() {
                    let lo = t * stride;
                    for ((dwv, &xv), (dv, &wv)) in dwrow
                        .iter_mut()
                        .zip(&prow[lo..lo + k])
                        .zip(drow[lo..lo + k].iter_mut().zip(wrow))
                    {
                        *dwv += gv * xv;
                        *dv += gv * wv;
                    }
                }
            }
        }
        for c in 0..cin {
            let dxrow = &mut dx[(bi * cin + c) * width..(bi * cin + c + 1) * width];
            for (dv, s) in dpad[c * pw..(c + 1) * pw].iter().zip(&src) {
                if let Some(p) = s {
                    dxrow[*p] += dv;
                }
            }
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), dx)?,
        Tensor::new(w.shape().to_vec(), dw)?,
        if has_bias {
            Some(Tensor::new(vec![cout], db)?)
        } else {
            None
        },
    ))
}
