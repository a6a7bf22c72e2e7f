//! Child-Sum Tree-LSTM over a [`DeepTree`] with a softmax classifier on the
//! root hidden state.
//!
//! Per node `k` with input `x` and children `r`:
//!
//! ```text
//! ĥ     = elementwise max over children of h_r        (zero for a leaf)
//! f_r   = σ(W_f x + U_f h_r + b_f)                    one forget gate per child
//! i     = σ(W_i x + U_i ĥ + b_i)
//! o     = σ(W_o x + U_o ĥ + b_o)
//! u     = tanh(W_u x + U_u ĥ + b_u)
//! c     = i∘u + Σ_r f_r∘c_r
//! h     = o∘tanh(c)
//! ```
//!
//! With attention pooling, ĥ is instead the elementwise max over
//! `α_r h_r` where `α = softmax_r(xᵀ W_att h_r)`. Forget gates and the cell
//! sum keep using the raw child states.
//!
//! Inputs are 0/1 bag-of-words vectors given by their active indices, so
//! `W x` is a sum of columns of `W`.

use std::collections::BTreeMap;

use rand::Rng as _;
use thiserror::Error;

use crate::graph::{Graph, GraphError, VertexId};
use crate::kernel::{self, cross_entropy_with_logits, glorot_init, sigmoid_scalar, softmax, KernelError, Matrix};
use crate::rng::Rng;
use crate::treegen::DeepTree;

pub const DEFAULT_HIDDEN_DIM: usize = 200;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("label {label} out of range for {num_classes} classes")]
    BadLabel { label: usize, num_classes: usize },
    #[error("trace does not match parameters: {0}")]
    TraceMismatch(String),
}

/// Gate order used by every per-gate array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Forget = 0,
    Input = 1,
    Output = 2,
    Update = 3,
}

pub const GATES: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Output, Gate::Update];

impl Gate {
    pub fn name(self) -> &'static str {
        match self {
            Gate::Forget => "f",
            Gate::Input => "i",
            Gate::Output => "o",
            Gate::Update => "u",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Input weights per gate, stored transposed as `input × hidden`: row
    /// `j` is what input word `j` adds to the gate pre-activation.
    pub w_x: [Matrix; 4],
    /// Recurrent weights per gate, `hidden × hidden`.
    pub u_h: [Matrix; 4],
    pub bias: [Vec<f64>; 4],
    /// Classifier, `classes × hidden`.
    pub w_s: Matrix,
    pub b_s: Vec<f64>,
    /// Attention bilinear form, `input × hidden`.
    pub w_att: Option<Matrix>,
}

impl ModelParams {
    /// Glorot-uniform weights and zero biases.
    pub fn init(input_dim: usize, hidden_dim: usize, num_classes: usize, attention: bool, rng: &mut Rng) -> Self {
        let w_x = GATES.map(|_| glorot_init(hidden_dim, input_dim, rng).transpose());
        let u_h = GATES.map(|_| glorot_init(hidden_dim, hidden_dim, rng));
        let w_s = glorot_init(num_classes, hidden_dim, rng);
        let w_att = attention.then(|| glorot_init(input_dim, hidden_dim, rng));
        Self {
            w_x,
            u_h,
            bias: GATES.map(|_| vec![0.0; hidden_dim]),
            w_s,
            b_s: vec![0.0; num_classes],
            w_att,
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, num_classes: usize, attention: bool) -> Self {
        Self {
            w_x: GATES.map(|_| Matrix::zeros(input_dim, hidden_dim)),
            u_h: GATES.map(|_| Matrix::zeros(hidden_dim, hidden_dim)),
            bias: GATES.map(|_| vec![0.0; hidden_dim]),
            w_s: Matrix::zeros(num_classes, hidden_dim),
            b_s: vec![0.0; num_classes],
            w_att: attention.then(|| Matrix::zeros(input_dim, hidden_dim)),
        }
    }

    /// Every entry drawn uniformly from `[-scale, scale]`, biases included.
    pub fn random_uniform(
        input_dim: usize,
        hidden_dim: usize,
        num_classes: usize,
        attention: bool,
        scale: f64,
        rng: &mut Rng,
    ) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim, num_classes, attention);
        for t in p.tensors_mut() {
            for v in t.1.iter_mut() {
                *v = rng.gen_range(-scale..=scale);
            }
        }
        p
    }

    pub fn hidden_dim(&self) -> usize {
        self.u_h[0].rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_x[0].rows()
    }

    pub fn num_classes(&self) -> usize {
        self.w_s.rows()
    }

    pub fn has_attention(&self) -> bool {
        self.w_att.is_some()
    }

    /// Checks that all shapes agree with each other.
    pub fn validate(&self) -> Result<(), ModelError> {
        let (h, d, k) = (self.hidden_dim(), self.input_dim(), self.num_classes());
        let bad = |what: String| Err(ModelError::Shape(what));
        for g in GATES {
            let gi = g as usize;
            if (self.w_x[gi].rows(), self.w_x[gi].cols()) != (d, h) {
                return bad(format!("W_{} is not stored as {d}x{h}", g.name()));
            }
            if (self.u_h[gi].rows(), self.u_h[gi].cols()) != (h, h) {
                return bad(format!("U_{} is not {h}x{h}", g.name()));
            }
            if self.bias[gi].len() != h {
                return bad(format!("b_{} has length {}", g.name(), self.bias[gi].len()));
            }
        }
        if self.w_s.cols() != h || self.b_s.len() != k {
            return bad("classifier shape".into());
        }
        if let Some(att) = &self.w_att {
            if (att.rows(), att.cols()) != (d, h) {
                return bad(format!("W_att is not {d}x{h}"));
            }
        }
        Ok(())
    }

    /// Named views of every tensor in canonical order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for g in GATES {
            let gi = g as usize;
            out.push((format!("W_{}", g.name()), self.w_x[gi].data()));
            out.push((format!("U_{}", g.name()), self.u_h[gi].data()));
            out.push((format!("b_{}", g.name()), &self.bias[gi][..]));
        }
        out.push(("W_s".into(), self.w_s.data()));
        out.push(("b_s".into(), &self.b_s[..]));
        if let Some(att) = &self.w_att {
            out.push(("W_att".into(), att.data()));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        let Self {
            w_x,
            u_h,
            bias,
            w_s,
            b_s,
            w_att,
        } = self;
        for ((g, w), (u, b)) in GATES.iter().zip(w_x.iter_mut()).zip(u_h.iter_mut().zip(bias.iter_mut())) {
            out.push((format!("W_{}", g.name()), w.data_mut()));
            out.push((format!("U_{}", g.name()), u.data_mut()));
            out.push((format!("b_{}", g.name()), &mut b[..]));
        }
        out.push(("W_s".into(), w_s.data_mut()));
        out.push(("b_s".into(), &mut b_s[..]));
        if let Some(att) = w_att {
            out.push(("W_att".into(), att.data_mut()));
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    /// Same shapes as `self`, values taken from `flat` (canonical order).
    pub fn with_flat(&self, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), self.num_params());
        let mut out = self.clone();
        let mut offset = 0;
        for (_, t) in out.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        out
    }
}

/// Column-sparse gradient of a weight matrix whose columns are touched only
/// at active input positions. Stored column id -> column values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseColumns {
    pub columns: BTreeMap<u32, Vec<f64>>,
}

impl SparseColumns {
    fn add(&mut self, col: u32, delta: &[f64]) {
        let entry = self.columns.entry(col).or_insert_with(|| vec![0.0; delta.len()]);
        kernel::axpy(1.0, delta, entry);
    }

    fn norm_sq(&self) -> f64 {
        self.columns.values().flatten().map(|v| v * v).sum()
    }

    fn scale(&mut self, s: f64) {
        self.columns.values_mut().flatten().for_each(|v| *v *= s);
    }
}

/// Gradient of the loss with the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Per gate; key = input column of `W_g`, value = that column (length hidden).
    pub w_x: [SparseColumns; 4],
    pub u_h: [Matrix; 4],
    pub bias: [Vec<f64>; 4],
    pub w_s: Matrix,
    pub b_s: Vec<f64>,
    /// Key = input row of `W_att`, value = that row (length hidden).
    pub w_att: Option<SparseColumns>,
}

impl Gradients {
    pub fn zeros_like(p: &ModelParams) -> Self {
        let h = p.hidden_dim();
        Self {
            w_x: Default::default(),
            u_h: GATES.map(|_| Matrix::zeros(h, h)),
            bias: GATES.map(|_| vec![0.0; h]),
            w_s: Matrix::zeros(p.num_classes(), h),
            b_s: vec![0.0; p.num_classes()],
            w_att: p.w_att.as_ref().map(|_| SparseColumns::default()),
        }
    }

    pub fn global_norm(&self) -> f64 {
        let dense = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        let mut total = self.w_x.iter().map(SparseColumns::norm_sq).sum::<f64>();
        total += self.u_h.iter().map(|m| dense(m.data())).sum::<f64>();
        total += self.bias.iter().map(|b| dense(b)).sum::<f64>();
        total += dense(self.w_s.data()) + dense(&self.b_s);
        total += self.w_att.as_ref().map_or(0.0, SparseColumns::norm_sq);
        total.sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.w_x.iter_mut().for_each(|g| g.scale(s));
        self.u_h.iter_mut().for_each(|m| m.data_mut().iter_mut().for_each(|v| *v *= s));
        self.bias.iter_mut().flatten().for_each(|v| *v *= s);
        self.w_s.data_mut().iter_mut().for_each(|v| *v *= s);
        self.b_s.iter_mut().for_each(|v| *v *= s);
        if let Some(att) = &mut self.w_att {
            att.scale(s);
        }
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }

    /// `params -= lr * self`
    pub fn apply_sgd(&self, params: &mut ModelParams, lr: f64) {
        for gi in 0..4 {
            for (&j, col) in &self.w_x[gi].columns {
                kernel::axpy(-lr, col, params.w_x[gi].row_mut(j as usize));
            }
            kernel::axpy(-lr, self.u_h[gi].data(), params.u_h[gi].data_mut());
            kernel::axpy(-lr, &self.bias[gi], &mut params.bias[gi]);
        }
        kernel::axpy(-lr, self.w_s.data(), params.w_s.data_mut());
        kernel::axpy(-lr, &self.b_s, &mut params.b_s);
        if let (Some(grad), Some(att)) = (&self.w_att, &mut params.w_att) {
            for (&j, row) in &grad.columns {
                kernel::axpy(-lr, row, att.row_mut(j as usize));
            }
        }
    }

    /// Dense gradient in the canonical order of [`ModelParams::flatten`].
    pub fn to_flat(&self, params: &ModelParams) -> Vec<f64> {
        let (h, d) = (params.hidden_dim(), params.input_dim());
        let mut out = Vec::with_capacity(params.num_params());
        for gi in 0..4 {
            let mut w = vec![0.0; d * h];
            for (&j, col) in &self.w_x[gi].columns {
                w[j as usize * h..(j as usize + 1) * h].copy_from_slice(col);
            }
            out.extend(w);
            out.extend_from_slice(self.u_h[gi].data());
            out.extend_from_slice(&self.bias[gi]);
        }
        out.extend_from_slice(self.w_s.data());
        out.extend_from_slice(&self.b_s);
        if let Some(att) = &self.w_att {
            let mut w = vec![0.0; d * h];
            for (&j, row) in &att.columns {
                w[j as usize * h..(j as usize + 1) * h].copy_from_slice(row);
            }
            out.extend(w);
        }
        out
    }
}

/// Child hidden-state pooling rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Max,
    /// Softmax attention weights `α_r ∝ exp(xᵀ W_att h_r)` scale each child
    /// before the max.
    AttentionMax,
}

/// Everything one cell evaluation needs for its backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTrace {
    pub vertex: VertexId,
    pub children: Vec<usize>,
    /// Active input positions (the 0/1 input vector).
    pub x: Vec<u32>,
    pub pooled: Vec<f64>,
    /// For each hidden dimension, the position (within `children`) that won
    /// the max; empty for leaves.
    pub argmax: Vec<usize>,
    /// `W_attᵀ x`, present with attention pooling on internal nodes.
    pub query: Option<Vec<f64>>,
    pub attention: Option<Vec<f64>>,
    /// One forget gate per child, in `children` order.
    pub forget: Vec<Vec<f64>>,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    pub update: Vec<f64>,
    pub cell: Vec<f64>,
    pub cell_tanh: Vec<f64>,
    pub hidden: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Indexed by tree node index.
    pub nodes: Vec<NodeTrace>,
    /// Evaluation order, children first; root last.
    pub order: Vec<usize>,
    pub pooling: Pooling,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardTrace {
    pub fn root(&self) -> &NodeTrace {
        &self.nodes[0]
    }

    pub fn loss(&self, label: usize) -> Result<f64, ModelError> {
        Ok(cross_entropy_with_logits(&self.logits, label)
            .map_err(|_| ModelError::BadLabel {
                label,
                num_classes: self.logits.len(),
            })?
            .0)
    }

    pub fn predict(&self) -> usize {
        argmax_lowest(&self.probs)
    }
}

/// Dense 0/1 expansion of a vertex's features.
pub fn node_input(g: &Graph, v: VertexId) -> Result<Vec<f64>, ModelError> {
    Ok(g.features(v)?.to_dense())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate().skip(1) {
        if p > v[best] {
            best = i;
        }
    }
    best
}

fn gate_input(params: &ModelParams, gate: Gate, x: &[u32]) -> Vec<f64> {
    let gi = gate as usize;
    let mut a = params.bias[gi].clone();
    for &j in x {
        kernel::axpy(1.0, params.w_x[gi].row(j as usize), &mut a);
    }
    a
}

/// One Tree-LSTM cell: `children` are the `(h, c)` pairs of the child nodes.
pub fn forward_node(
    params: &ModelParams,
    x: &[u32],
    children: &[(&[f64], &[f64])],
    pooling: Pooling,
) -> Result<NodeTrace, ModelError> {
    let h_dim = params.hidden_dim();
    if let Some(&j) = x.iter().find(|&&j| j as usize >= params.input_dim()) {
        return Err(ModelError::Shape(format!(
            "input index {j} >= input_dim {}",
            params.input_dim()
        )));
    }
    if children.iter().any(|(h, c)| h.len() != h_dim || c.len() != h_dim) {
        return Err(ModelError::Shape(format!("child state length != hidden_dim {h_dim}")));
    }

    let mut pooled = vec![0.0; h_dim];
    let mut argmax = Vec::new();
    let mut query = None;
    let mut attention = None;
    if !children.is_empty() {
        let weights = match pooling {
            Pooling::Max => None,
            Pooling::AttentionMax => {
                let att = params
                    .w_att
                    .as_ref()
                    .ok_or_else(|| ModelError::Shape("attention pooling without W_att".into()))?;
                let mut q = vec![0.0; h_dim];
                for &j in x {
                    kernel::axpy(1.0, att.row(j as usize), &mut q);
                }
                let scores: Vec<f64> = children.iter().map(|(h, _)| kernel::dot(&q, h)).collect();
                query = Some(q);
                Some(softmax(&scores))
            }
        };
        argmax = vec![0; h_dim];
        for d in 0..h_dim {
            let scaled = |r: usize| weights.as_ref().map_or(1.0, |w| w[r]) * children[r].0[d];
            let mut best = 0;
            for r in 1..children.len() {
                if scaled(r) > scaled(best) {
                    best = r;
                }
            }
            argmax[d] = best;
            pooled[d] = scaled(best);
        }
        attention = weights;
    }

    let activate = |gate: Gate, h: &[f64], f: fn(f64) -> f64| {
        let mut a = gate_input(params, gate, x);
        if !children.is_empty() {
            params.u_h[gate as usize].matvec_acc(h, &mut a);
        }
        a.into_iter().map(f).collect::<Vec<f64>>()
    };
    let input = activate(Gate::Input, &pooled, sigmoid_scalar);
    let output = activate(Gate::Output, &pooled, sigmoid_scalar);
    let update = activate(Gate::Update, &pooled, f64::tanh);

    let forget_base = gate_input(params, Gate::Forget, x);
    let mut cell: Vec<f64> = input.iter().zip(&update).map(|(i, u)| i * u).collect();
    let mut forget = Vec::with_capacity(children.len());
    for (h_r, c_r) in children {
        let mut a = forget_base.clone();
        params.u_h[Gate::Forget as usize].matvec_acc(h_r, &mut a);
        let f: Vec<f64> = a.into_iter().map(sigmoid_scalar).collect();
        for ((c, f), cr) in cell.iter_mut().zip(&f).zip(c_r.iter()) {
            *c += f * cr;
        }
        forget.push(f);
    }
    if cell.iter().any(|c| !c.is_finite()) {
        return Err(KernelError::NonFinite("cell state".into()).into());
    }
    let cell_tanh: Vec<f64> = cell.iter().map(|c| c.tanh()).collect();
    let hidden = output.iter().zip(&cell_tanh).map(|(o, t)| o * t).collect();

    Ok(NodeTrace {
        vertex: 0,
        children: Vec::new(),
        x: x.to_vec(),
        pooled,
        argmax,
        query,
        attention,
        forget,
        input,
        output,
        update,
        cell,
        cell_tanh,
        hidden,
    })
}

/// Runs the cell bottom-up over `tree` and applies the classifier at the root.
pub fn forward_tree(params: &ModelParams, tree: &DeepTree, g: &Graph, attention: bool) -> Result<ForwardTrace, ModelError> {
    if g.vocab_dim() != params.input_dim() {
        return Err(ModelError::Shape(format!(
            "vocab_dim {} != input_dim {}",
            g.vocab_dim(),
            params.input_dim()
        )));
    }
    let pooling = if attention { Pooling::AttentionMax } else { Pooling::Max };
    let order = tree.post_order();
    let mut slots: Vec<Option<NodeTrace>> = vec![None; tree.nodes.len()];
    for &k in &order {
        let node = &tree.nodes[k];
        let child_states: Vec<(&[f64], &[f64])> = node
            .children
            .iter()
            .map(|&c| {
                let t = slots[c].as_ref().expect("post-order visits children first");
                (&t.hidden[..], &t.cell[..])
            })
            .collect();
        let x = g.features(node.vertex)?.indices();
        let mut trace = forward_node(params, x, &child_states, pooling)?;
        trace.vertex = node.vertex;
        trace.children = node.children.clone();
        slots[k] = Some(trace);
    }
    let nodes: Vec<NodeTrace> = slots.into_iter().map(|t| t.expect("all nodes visited")).collect();

    let mut logits = params.b_s.clone();
    params.w_s.matvec_acc(&nodes[0].hidden, &mut logits);
    let probs = softmax(&logits);
    Ok(ForwardTrace {
        nodes,
        order,
        pooling,
        logits,
        probs,
    })
}

/// Cross-entropy `-log p[label]`.
pub fn loss(p: &[f64], label: usize) -> Result<f64, ModelError> {
    match p.get(label) {
        Some(&pl) => Ok(-pl.ln()),
        None => Err(ModelError::BadLabel {
            label,
            num_classes: p.len(),
        }),
    }
}

/// Mean cross-entropy over a batch of `(probabilities, label)` pairs.
pub fn mean_loss<'a>(batch: impl IntoIterator<Item = (&'a [f64], usize)>) -> Result<f64, ModelError> {
    let (mut total, mut n) = (0.0, 0usize);
    for (p, label) in batch {
        total += loss(p, label)?;
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

fn check_trace(params: &ModelParams, trace: &ForwardTrace) -> Result<(), ModelError> {
    let h = params.hidden_dim();
    let mismatch = |m: String| Err(ModelError::TraceMismatch(m));
    if trace.logits.len() != params.num_classes() {
        return mismatch(format!("{} logits, {} classes", trace.logits.len(), params.num_classes()));
    }
    if trace.nodes.iter().any(|n| n.hidden.len() != h) {
        return mismatch(format!("hidden_dim {h}"));
    }
    if trace.pooling == Pooling::AttentionMax && params.w_att.is_none() {
        return mismatch("attention trace but no W_att".into());
    }
    if trace.nodes.iter().flat_map(|n| &n.x).any(|&j| j as usize >= params.input_dim()) {
        return mismatch(format!("input_dim {}", params.input_dim()));
    }
    Ok(())
}

/// Loss and exact gradients for one tree, by reverse-mode differentiation
/// from the root down.
pub fn backward_tree(params: &ModelParams, trace: &ForwardTrace, label: usize) -> Result<(f64, Gradients), ModelError> {
    check_trace(params, trace)?;
    let (loss, dlogits) = cross_entropy_with_logits(&trace.logits, label).map_err(|_| ModelError::BadLabel {
        label,
        num_classes: params.num_classes(),
    })?;
    let h_dim = params.hidden_dim();
    let mut grads = Gradients::zeros_like(params);
    grads.w_s.add_outer(&dlogits, &trace.root().hidden);
    kernel::axpy(1.0, &dlogits, &mut grads.b_s);

    let n = trace.nodes.len();
    let mut dh = vec![vec![0.0; h_dim]; n];
    let mut dc = vec![vec![0.0; h_dim]; n];
    params.w_s.matvec_t_acc(&dlogits, &mut dh[0]);

    for &k in trace.order.iter().rev() {
        let node = &trace.nodes[k];
        let dh_k = std::mem::take(&mut dh[k]);
        let mut dc_k = std::mem::take(&mut dc[k]);

        let mut d_out = vec![0.0; h_dim];
        for d in 0..h_dim {
            d_out[d] = dh_k[d] * node.cell_tanh[d] * node.output[d] * (1.0 - node.output[d]);
            dc_k[d] += dh_k[d] * node.output[d] * (1.0 - node.cell_tanh[d] * node.cell_tanh[d]);
        }
        let mut d_in = vec![0.0; h_dim];
        let mut d_upd = vec![0.0; h_dim];
        for d in 0..h_dim {
            let (i, u) = (node.input[d], node.update[d]);
            d_in[d] = dc_k[d] * u * i * (1.0 - i);
            d_upd[d] = dc_k[d] * i * (1.0 - u * u);
        }

        let mut d_forget_sum = vec![0.0; h_dim];
        for (r, &child) in node.children.iter().enumerate() {
            let f = &node.forget[r];
            let child_trace = &trace.nodes[child];
            let mut d_f = vec![0.0; h_dim];
            for d in 0..h_dim {
                d_f[d] = dc_k[d] * child_trace.cell[d] * f[d] * (1.0 - f[d]);
                dc[child][d] += dc_k[d] * f[d];
            }
            grads.u_h[Gate::Forget as usize].add_outer(&d_f, &child_trace.hidden);
            params.u_h[Gate::Forget as usize].matvec_t_acc(&d_f, &mut dh[child]);
            kernel::axpy(1.0, &d_f, &mut d_forget_sum);
        }

        for (gate, delta) in [
            (Gate::Forget, &d_forget_sum),
            (Gate::Input, &d_in),
            (Gate::Output, &d_out),
            (Gate::Update, &d_upd),
        ] {
            let gi = gate as usize;
            kernel::axpy(1.0, delta, &mut grads.bias[gi]);
            for &j in &node.x {
                grads.w_x[gi].add(j, delta);
            }
            if gate != Gate::Forget && !node.children.is_empty() {
                grads.u_h[gi].add_outer(delta, &node.pooled);
            }
        }

        if node.children.is_empty() {
            continue;
        }
        let mut d_pooled = vec![0.0; h_dim];
        params.u_h[Gate::Input as usize].matvec_t_acc(&d_in, &mut d_pooled);
        params.u_h[Gate::Output as usize].matvec_t_acc(&d_out, &mut d_pooled);
        params.u_h[Gate::Update as usize].matvec_t_acc(&d_upd, &mut d_pooled);

        match (&node.attention, &node.query) {
            (Some(alpha), Some(query)) => {
                let mut d_alpha = vec![0.0; node.children.len()];
                for d in 0..h_dim {
                    let r = node.argmax[d];
                    let child = node.children[r];
                    d_alpha[r] += d_pooled[d] * trace.nodes[child].hidden[d];
                    dh[child][d] += d_pooled[d] * alpha[r];
                }
                let d_scores = kernel::softmax_backward(alpha, &d_alpha);
                let mut d_query = vec![0.0; h_dim];
                for (r, &child) in node.children.iter().enumerate() {
                    kernel::axpy(d_scores[r], query, &mut dh[child]);
                    kernel::axpy(d_scores[r], &trace.nodes[child].hidden, &mut d_query);
                }
                let att = grads
                    .w_att
                    .as_mut()
                    .ok_or_else(|| ModelError::TraceMismatch("attention trace but no W_att".into()))?;
                for &j in &node.x {
                    att.add(j, &d_query);
                }
            }
            _ => {
                for d in 0..h_dim {
                    dh[node.children[node.argmax[d]]][d] += d_pooled[d];
                }
            }
        }
    }
    Ok((loss, grads))
}

/// Most probable class at the root; ties go to the lowest class index.
pub fn predict(params: &ModelParams, tree: &DeepTree, g: &Graph, attention: bool) -> Result<usize, ModelError> {
    Ok(forward_tree(params, tree, g, attention)?.predict())
}
