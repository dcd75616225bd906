//! Reverse-mode gradient tape over vector-valued nodes.
//!
//! The forward pass records one node per primitive (parameter reads,
//! affine maps, relu, means, dots, weighted sums, and the softmax
//! cross-entropy against the full vertex table). `backward` replays the
//! trace in reverse, accumulating exact gradients into a flat buffer
//! aligned with [`super::ModelParams`]. All reductions run in recorded
//! order, so gradients are bit-deterministic.

use thiserror::Error;

use super::{Gradients, ModelParams, ParamBlock};

#[derive(Debug, Error)]
pub enum TapeError {
    #[error("backward needs a recorded loss")]
    NoLoss,
    #[error("tape already consumed; record a fresh trace before calling backward again")]
    Consumed,
}

/// Index of a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

pub(crate) enum Op {
    /// Copy of a parameter block (embedding rows only).
    Leaf(ParamBlock),
    /// `W x + b` with `W`, `b` parameter blocks.
    Affine { w: ParamBlock, b: ParamBlock, x: NodeId },
    Add(NodeId, NodeId),
    Relu(NodeId),
    Mean(Vec<NodeId>),
    /// Scalar node: dot product of two vector nodes.
    Dot(NodeId, NodeId),
    /// Concatenate scalar nodes into one vector.
    Pack(Vec<NodeId>),
    /// Softmax over a (small) vector node.
    Softmax(NodeId),
    /// `Σ_m s[m] · vec_m` with `s` a vector node of matching length.
    WeightedSum { weights: NodeId, vecs: Vec<NodeId> },
    /// Scalar node: −log softmax(E·q)[answer] over the whole vertex
    /// table. Caches the probabilities for the backward pass.
    SoftmaxNll { q: NodeId, answer: usize },
    /// Scalar node: mean of scalar nodes.
    MeanScalars(Vec<NodeId>),
}

pub(crate) struct Node {
    pub op: Op,
    pub value: Vec<f64>,
    /// Cached softmax probabilities for `SoftmaxNll`.
    pub probs: Option<Vec<f64>>,
}

/// Recorded computation trace; produces ∂loss/∂θ for every parameter
/// touched.
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    loss: Option<NodeId>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), loss: None, consumed: false }
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    /// Number of recorded primitive operations.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[0]
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> NodeId {
        self.nodes.push(Node { op, value, probs: None });
        NodeId(self.nodes.len() - 1)
    }

    pub(crate) fn leaf(&mut self, params: &ModelParams, block: ParamBlock) -> NodeId {
        let value = params.block(block).to_vec();
        self.push(Op::Leaf(block), value)
    }

    pub(crate) fn affine(
        &mut self,
        params: &ModelParams,
        w: ParamBlock,
        b: ParamBlock,
        x: NodeId,
    ) -> NodeId {
        let d_out = params.layout().block_len(b);
        let xv = &self.nodes[x.0].value;
        let d_in = xv.len();
        let wm = params.block(w);
        let bv = params.block(b);
        let mut y = vec![0.0; d_out];
        for i in 0..d_out {
            let mut acc = bv[i];
            let row = &wm[i * d_in..(i + 1) * d_in];
            for j in 0..d_in {
                acc += row[j] * xv[j];
            }
            y[i] = acc;
        }
        self.push(Op::Affine { w, b, x }, y)
    }

    pub(crate) fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value: Vec<f64> = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x + y)
            .collect();
        self.push(Op::Add(a, b), value)
    }

    pub(crate) fn relu(&mut self, x: NodeId) -> NodeId {
        let value: Vec<f64> = self.nodes[x.0].value.iter().map(|&v| v.max(0.0)).collect();
        self.push(Op::Relu(x), value)
    }

    pub(crate) fn mean(&mut self, xs: Vec<NodeId>) -> NodeId {
        let d = self.nodes[xs[0].0].value.len();
        let mut value = vec![0.0; d];
        for &x in &xs {
            for (acc, v) in value.iter_mut().zip(&self.nodes[x.0].value) {
                *acc += v;
            }
        }
        let k = xs.len() as f64;
        for v in &mut value {
            *v /= k;
        }
        self.push(Op::Mean(xs), value)
    }

    pub(crate) fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value: f64 = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .sum();
        self.push(Op::Dot(a, b), vec![value])
    }

    pub(crate) fn pack(&mut self, xs: Vec<NodeId>) -> NodeId {
        let value: Vec<f64> = xs.iter().map(|&x| self.nodes[x.0].value[0]).collect();
        self.push(Op::Pack(xs), value)
    }

    pub(crate) fn softmax(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x.0].value;
        let max = xv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = xv.iter().map(|&v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let value: Vec<f64> = exps.iter().map(|&e| e / z).collect();
        self.push(Op::Softmax(x), value)
    }

    pub(crate) fn weighted_sum(&mut self, weights: NodeId, vecs: Vec<NodeId>) -> NodeId {
        let d = self.nodes[vecs[0].0].value.len();
        let w = self.nodes[weights.0].value.clone();
        let mut value = vec![0.0; d];
        for (m, &vm) in vecs.iter().enumerate() {
            let s = w[m];
            for (acc, v) in value.iter_mut().zip(&self.nodes[vm.0].value) {
                *acc += s * v;
            }
        }
        self.push(Op::WeightedSum { weights, vecs }, value)
    }

    /// −log p(answer) with p = softmax over dot(q, E[v]) for every
    /// vertex, evaluated in log space so poisoned inputs surface as
    /// non-finite loss instead of a clamped value.
    pub(crate) fn softmax_nll(
        &mut self,
        params: &ModelParams,
        q: NodeId,
        answer: usize,
    ) -> NodeId {
        let qv = &self.nodes[q.0].value;
        let scores = params.scores(qv);
        let max = scores.iter().fold(f64::NEG_INFINITY, |a, &b| if b > a { b } else { a });
        let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|&e| e / z).collect();
        let loss = (max - scores[answer]) + z.ln();
        let id = self.push(Op::SoftmaxNll { q, answer }, vec![loss]);
        self.nodes[id.0].probs = Some(probs);
        id
    }

    pub(crate) fn mean_scalars(&mut self, xs: Vec<NodeId>) -> NodeId {
        let value = xs.iter().map(|&x| self.nodes[x.0].value[0]).sum::<f64>() / xs.len() as f64;
        self.push(Op::MeanScalars(xs), vec![value])
    }

    /// Mark `loss` as the scalar to differentiate.
    pub fn set_loss(&mut self, loss: NodeId) {
        self.loss = Some(loss);
    }

    /// Reverse sweep from the recorded loss. `params` must be the same,
    /// unmutated parameters the forward pass read. Consumes the trace:
    /// a second call without re-recording errors.
    pub fn backward(&mut self, params: &ModelParams) -> Result<Gradients, TapeError> {
        if self.consumed {
            return Err(TapeError::Consumed);
        }
        let loss = self.loss.ok_or(TapeError::NoLoss)?;
        self.consumed = true;

        let mut grads = Gradients::zeros(params.layout().clone());
        let mut adjoint: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        adjoint[loss.0][0] = 1.0;

        for i in (0..self.nodes.len()).rev() {
            let go = std::mem::take(&mut adjoint[i]);
            if go.iter().all(|&g| g == 0.0) {
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf(block) => {
                    let dst = grads.block_mut(*block);
                    for (d, g) in dst.iter_mut().zip(&go) {
                        *d += g;
                    }
                }
                Op::Affine { w, b, x } => {
                    let xv = self.nodes[x.0].value.clone();
                    let d_in = xv.len();
                    let wm = params.block(*w).to_vec();
                    {
                        let gw = grads.block_mut(*w);
                        for (irow, gi) in go.iter().enumerate() {
                            if *gi == 0.0 {
                                continue;
                            }
                            let row = &mut gw[irow * d_in..(irow + 1) * d_in];
                            for j in 0..d_in {
                                row[j] += gi * xv[j];
                            }
                        }
                    }
                    {
                        let gb = grads.block_mut(*b);
                        for (gbi, gi) in gb.iter_mut().zip(&go) {
                            *gbi += gi;
                        }
                    }
                    let gx = &mut adjoint[x.0];
                    for (irow, gi) in go.iter().enumerate() {
                        if *gi == 0.0 {
                            continue;
                        }
                        let row = &wm[irow * d_in..(irow + 1) * d_in];
                        for j in 0..d_in {
                            gx[j] += gi * row[j];
                        }
                    }
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    for (g, gi) in adjoint[a.0].iter_mut().zip(&go) {
                        *g += gi;
                    }
                    for (g, gi) in adjoint[b.0].iter_mut().zip(&go) {
                        *g += gi;
                    }
                }
                Op::Relu(x) => {
                    let x = *x;
                    let xv = &self.nodes[x.0].value;
                    for (j, gi) in go.iter().enumerate() {
                        if xv[j] > 0.0 {
                            adjoint[x.0][j] += gi;
                        }
                    }
                }
                Op::Mean(xs) => {
                    let k = xs.len() as f64;
                    for &x in xs.clone().iter() {
                        for (g, gi) in adjoint[x.0].iter_mut().zip(&go) {
                            *g += gi / k;
                        }
                    }
                }
                Op::Dot(a, b) => {
                    let (a, b) = (*a, *b);
                    let g = go[0];
                    let bv = self.nodes[b.0].value.clone();
                    for (ga, bj) in adjoint[a.0].iter_mut().zip(&bv) {
                        *ga += g * bj;
                    }
                    let av = self.nodes[a.0].value.clone();
                    for (gb, aj) in adjoint[b.0].iter_mut().zip(&av) {
                        *gb += g * aj;
                    }
                }
                Op::Pack(xs) => {
                    for (m, &x) in xs.clone().iter().enumerate() {
                        adjoint[x.0][0] += go[m];
                    }
                }
                Op::Softmax(x) => {
                    let x = *x;
                    let y = &self.nodes[i].value;
                    // gx = (diag(y) − y yᵀ) go
                    let dot: f64 = y.iter().zip(&go).map(|(yi, gi)| yi * gi).sum();
                    let contribution: Vec<f64> =
                        y.iter().zip(&go).map(|(yi, gi)| yi * (gi - dot)).collect();
                    for (g, c) in adjoint[x.0].iter_mut().zip(&contribution) {
                        *g += c;
                    }
                }
                Op::WeightedSum { weights, vecs } => {
                    let weights = *weights;
                    let vecs = vecs.clone();
                    let w = self.nodes[weights.0].value.clone();
                    for (m, &vm) in vecs.iter().enumerate() {
                        let vv = self.nodes[vm.0].value.clone();
                        let gs: f64 = go.iter().zip(&vv).map(|(gi, vj)| gi * vj).sum();
                        adjoint[weights.0][m] += gs;
                        for (g, gi) in adjoint[vm.0].iter_mut().zip(&go) {
                            *g += w[m] * gi;
                        }
                    }
                }
                Op::SoftmaxNll { q, answer } => {
                    let (q, answer) = (*q, *answer);
                    let g = go[0];
                    let probs = self.nodes[i].probs.as_ref().unwrap().clone();
                    let qv = self.nodes[q.0].value.clone();
                    let d = qv.len();
                    // dq += g Σ_v (p_v − δ_v) E[v];  dE[v] += g (p_v − δ_v) q
                    let gq = params.nll_backward(&probs, answer, &qv, g, &mut grads);
                    for (gqj, delta) in adjoint[q.0].iter_mut().zip(&gq) {
                        *gqj += delta;
                    }
                    debug_assert_eq!(gq.len(), d);
                }
                Op::MeanScalars(xs) => {
                    let k = xs.len() as f64;
                    for &x in xs.clone().iter() {
                        adjoint[x.0][0] += go[0] / k;
                    }
                }
            }
        }
        Ok(grads)
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}
