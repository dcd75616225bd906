//! Query encoding: projection and intersection operators over the
//! computational graph, with a key-value memory read after every operator
//! output.
//!
//! Memory read, for M informational atomics: relevance s_m = ⟨q, c_h⟩
//! against each head embedding, aggregate v = Σ_m s_m (c_r + c_t) over the
//! relation and tail embeddings, and the residual update
//! q ← q + FFN(v). With zero atomics the read is a no-op, so the encoder
//! collapses exactly to the backbone.

use crate::kg::VertexId;
use crate::query::{GroundedNode, InfoAtomic};

use super::tape::{NodeId, Tape};
use super::{ModelParams, ParamBlock};

/// Ablation switches shared by training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[repr(u8)]
pub enum Ablation {
    #[default]
    None = 0,
    /// Add the raw aggregate to the query state, skipping the FFN.
    NoFfn = 1,
    /// Replace each informational atomic with a random graph edge when
    /// building the memory bank.
    RandomConstraints = 2,
    /// Empty memory bank everywhere: the plain backbone.
    NoMemory = 3,
}

impl Ablation {
    pub fn from_tag(tag: u8) -> Self {
        match tag {
            1 => Ablation::NoFfn,
            2 => Ablation::RandomConstraints,
            3 => Ablation::NoMemory,
            _ => Ablation::None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoFfn => "no_ffn",
            Ablation::RandomConstraints => "random_constraints",
            Ablation::NoMemory => "no_memory",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Ablation::None),
            "no_ffn" => Some(Ablation::NoFfn),
            "random_constraints" => Some(Ablation::RandomConstraints),
            "no_memory" => Some(Ablation::NoMemory),
            _ => None,
        }
    }
}

/// Encoder configuration beyond the parameters themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EncodeOptions {
    pub ablation: Ablation,
    /// Softmax the relevance scores over the memory entries instead of
    /// using them raw. Off by default.
    pub normalize_scores: bool,
    /// Apply the memory read to anchor embeddings too, not only operator
    /// outputs. Off by default.
    pub memory_on_anchors: bool,
}

/// The d-dimensional evolving query embedding, as a tape node.
#[derive(Debug, Clone, Copy)]
pub struct QueryState {
    pub node: NodeId,
}

impl QueryState {
    pub fn vector<'t>(&self, tape: &'t Tape) -> &'t [f64] {
        tape.value(self.node)
    }
}

/// Informational atomics exposed to the encoder. Keys and values resolve
/// through the shared embedding tables at read time, so gradients flow
/// back into them.
#[derive(Debug, Clone, Default)]
pub struct MemoryBank {
    pub entries: Vec<InfoAtomic>,
}

impl MemoryBank {
    pub fn new(entries: Vec<InfoAtomic>) -> Self {
        MemoryBank { entries }
    }

    pub fn empty() -> Self {
        MemoryBank { entries: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Concrete values observed during one memory read.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryReadout {
    /// Raw relevance scores, one per atomic (before optional softmax).
    pub scores: Vec<f64>,
    /// Aggregate value vector v.
    pub aggregate: Vec<f64>,
    /// What was added to the query state.
    pub delta: Vec<f64>,
}

impl MemoryReadout {
    fn zero(d: usize) -> Self {
        MemoryReadout { scores: Vec::new(), aggregate: vec![0.0; d], delta: vec![0.0; d] }
    }
}

/// Relational projection: q′ = W_rel · q + b_rel + e_rel.
pub fn project(
    q: QueryState,
    rel: crate::kg::RelationType,
    params: &ModelParams,
    tape: &mut Tape,
) -> QueryState {
    let r = rel.index() as u8;
    let affine = tape.affine(params, ParamBlock::ProjW(r), ParamBlock::ProjB(r), q.node);
    let e_rel = tape.leaf(params, ParamBlock::RelEmbed(r));
    QueryState { node: tape.add(affine, e_rel) }
}

/// DeepSets intersection: q′ = W_out · meanₖ(relu(W_in·qₖ + b_in)) + b_out.
/// Exactly permutation-invariant up to the fixed summation order.
pub fn intersect(
    states: &[QueryState],
    params: &ModelParams,
    tape: &mut Tape,
) -> Result<QueryState, super::ModelError> {
    if states.len() < 2 {
        return Err(super::ModelError::Malformed);
    }
    let hidden: Vec<NodeId> = states
        .iter()
        .map(|s| {
            let pre = tape.affine(params, ParamBlock::InterPreW, ParamBlock::InterPreB, s.node);
            tape.relu(pre)
        })
        .collect();
    let pooled = tape.mean(hidden);
    let node = tape.affine(params, ParamBlock::InterPostW, ParamBlock::InterPostB, pooled);
    Ok(QueryState { node })
}

/// Key-value memory read. Returns the (possibly unchanged) query state and
/// the observed readout. With an empty bank the state passes through
/// untouched.
pub fn memory_read(
    q: QueryState,
    bank: &MemoryBank,
    params: &ModelParams,
    tape: &mut Tape,
    opts: &EncodeOptions,
) -> (QueryState, MemoryReadout) {
    if bank.is_empty() || opts.ablation == Ablation::NoMemory {
        return (q, MemoryReadout::zero(params.dim()));
    }
    let mut raw_scores = Vec::with_capacity(bank.len());
    let mut score_nodes = Vec::with_capacity(bank.len());
    let mut value_nodes = Vec::with_capacity(bank.len());
    for atomic in &bank.entries {
        let key = tape.leaf(params, ParamBlock::VertexEmbed(atomic.head.0));
        let s = tape.dot(q.node, key);
        raw_scores.push(tape.scalar(s));
        score_nodes.push(s);
        let c_r = tape.leaf(params, ParamBlock::RelEmbed(atomic.rel.index() as u8));
        let c_t = tape.leaf(params, ParamBlock::VertexEmbed(atomic.tail.0));
        value_nodes.push(tape.add(c_r, c_t));
    }
    let packed = tape.pack(score_nodes);
    let weights = if opts.normalize_scores {
        tape.softmax(packed)
    } else {
        packed
    };
    let aggregate = tape.weighted_sum(weights, value_nodes);

    let delta = if opts.ablation == Ablation::NoFfn {
        aggregate
    } else {
        let hidden = tape.affine(params, ParamBlock::FfnW1, ParamBlock::FfnB1, aggregate);
        let hidden = tape.relu(hidden);
        tape.affine(params, ParamBlock::FfnW2, ParamBlock::FfnB2, hidden)
    };
    let out = tape.add(q.node, delta);
    let readout = MemoryReadout {
        scores: raw_scores,
        aggregate: tape.value(aggregate).to_vec(),
        delta: tape.value(delta).to_vec(),
    };
    (QueryState { node: out }, readout)
}

/// Encode a grounded query: post-order traversal with a memory read after
/// every projection and intersection output (and after anchors when
/// `memory_on_anchors` is set).
pub fn encode(
    query: &GroundedNode,
    bank: &MemoryBank,
    params: &ModelParams,
    tape: &mut Tape,
    opts: &EncodeOptions,
) -> Result<QueryState, super::ModelError> {
    match query {
        GroundedNode::Anchor(v) => {
            let node = tape.leaf(params, ParamBlock::VertexEmbed(v.0));
            let state = QueryState { node };
            if opts.memory_on_anchors {
                Ok(memory_read(state, bank, params, tape, opts).0)
            } else {
                Ok(state)
            }
        }
        GroundedNode::Proj(rel, child) => {
            let sub = encode(child, bank, params, tape, opts)?;
            let state = project(sub, *rel, params, tape);
            Ok(memory_read(state, bank, params, tape, opts).0)
        }
        GroundedNode::Inter(children) => {
            let subs: Result<Vec<QueryState>, _> = children
                .iter()
                .map(|c| encode(c, bank, params, tape, opts))
                .collect();
            let state = intersect(&subs?, params, tape)?;
            Ok(memory_read(state, bank, params, tape, opts).0)
        }
    }
}

/// dot(q, E[v]) for every vertex.
pub fn score_all(q: &[f64], params: &ModelParams) -> Vec<f64> {
    params.scores(q)
}

/// Numerically stable softmax (subtract max).
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / z).collect()
}

/// Mean negative log-probability over positive pairs under the full
/// softmax. Marks the result as the tape's loss and returns its node.
pub fn loss(
    pairs: &[(QueryState, VertexId)],
    params: &ModelParams,
    tape: &mut Tape,
) -> Result<NodeId, super::ModelError> {
    if pairs.is_empty() {
        return Err(super::ModelError::Malformed);
    }
    let nlls: Vec<NodeId> = pairs
        .iter()
        .map(|(q, answer)| tape.softmax_nll(params, q.node, answer.0 as usize))
        .collect();
    let total = tape.mean_scalars(nlls);
    tape.set_loss(total);
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{KnowledgeGraph, RelationType};
    use crate::query::GroundedNode as N;

    fn small_params() -> ModelParams {
        ModelParams::init(6, 4, 42)
    }

    #[test]
    fn identity_projection_passes_through() {
        let mut params = small_params();
        let d = params.dim();
        let r = RelationType::Reason.index() as u8;
        // W = I, b = 0, e_rel = 0.
        let w = params.block_mut(ParamBlock::ProjW(r));
        w.fill(0.0);
        for i in 0..d {
            w[i * d + i] = 1.0;
        }
        params.block_mut(ParamBlock::ProjB(r)).fill(0.0);
        params.block_mut(ParamBlock::RelEmbed(r)).fill(0.0);

        let mut tape = Tape::new();
        let q = QueryState { node: tape.leaf(&params, ParamBlock::VertexEmbed(2)) };
        let before = q.vector(&tape).to_vec();
        let out = project(q, RelationType::Reason, &params, &mut tape);
        assert_eq!(out.vector(&tape), before.as_slice());
    }

    #[test]
    fn zero_state_projects_to_relation_embedding() {
        let mut params = small_params();
        let r = RelationType::Result.index() as u8;
        params.block_mut(ParamBlock::ProjB(r)).fill(0.0);
        params.block_mut(ParamBlock::VertexEmbed(1)).fill(0.0);
        let mut tape = Tape::new();
        let q = QueryState { node: tape.leaf(&params, ParamBlock::VertexEmbed(1)) };
        let out = project(q, RelationType::Result, &params, &mut tape);
        assert_eq!(out.vector(&tape), params.block(ParamBlock::RelEmbed(r)));
    }

    #[test]
    fn intersect_of_identical_nonnegative_states_is_identity_under_identity_maps() {
        let mut params = small_params();
        let d = params.dim();
        for (w, b) in [
            (ParamBlock::InterPreW, ParamBlock::InterPreB),
            (ParamBlock::InterPostW, ParamBlock::InterPostB),
        ] {
            let wm = params.block_mut(w);
            wm.fill(0.0);
            for i in 0..d {
                wm[i * d + i] = 1.0;
            }
            params.block_mut(b).fill(0.0);
        }
        let embed = params.block_mut(ParamBlock::VertexEmbed(0));
        for (i, v) in embed.iter_mut().enumerate() {
            *v = 0.25 * (i as f64 + 1.0); // entrywise nonnegative
        }
        let mut tape = Tape::new();
        let q = QueryState { node: tape.leaf(&params, ParamBlock::VertexEmbed(0)) };
        let out = intersect(&[q, q], &params, &mut tape).unwrap();
        let expected = params.block(ParamBlock::VertexEmbed(0));
        for (a, b) in out.vector(&tape).iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn intersect_is_permutation_invariant() {
        let params = small_params();
        let mut tape = Tape::new();
        let qs: Vec<QueryState> = (0..3)
            .map(|v| QueryState { node: tape.leaf(&params, ParamBlock::VertexEmbed(v)) })
            .collect();
        let abc = intersect(&[qs[0], qs[1], qs[2]], &params, &mut tape).unwrap();
        let cab = intersect(&[qs[2], qs[0], qs[1]], &params, &mut tape).unwrap();
        let bca = intersect(&[qs[1], qs[2], qs[0]], &params, &mut tape).unwrap();
        let a = abc.vector(&tape);
        for other in [cab.vector(&tape), bca.vector(&tape)] {
            for (x, y) in a.iter().zip(other) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn intersect_rejects_single_input() {
        let params = small_params();
        let mut tape = Tape::new();
        let q = QueryState { node: tape.leaf(&params, ParamBlock::VertexEmbed(0)) };
        assert!(intersect(&[q], &params, &mut tape).is_err());
    }

    #[test]
    fn empty_bank_is_a_bypass() {
        let params = small_params();
        let mut tape = Tape::new();
        let q = QueryState { node: tape.leaf(&params, ParamBlock::VertexEmbed(3)) };
        let before = q.vector(&tape).to_vec();
        let (out, readout) = memory_read(
            q,
            &MemoryBank::empty(),
            &params,
            &mut tape,
            &EncodeOptions::default(),
        );
        assert_eq!(out.vector(&tape), before.as_slice());
        assert!(readout.scores.is_empty());
        assert!(readout.delta.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn memory_arithmetic_matches_the_equations() {
        // d=2, q=(1,0), one atomic with c_h=(2,0), c_r+c_t=(0,3):
        // s₁ = 2, v = (0,6).
        let mut params = ModelParams::init(4, 2, 0);
        params.block_mut(ParamBlock::VertexEmbed(0)).copy_from_slice(&[1.0, 0.0]);
        params.block_mut(ParamBlock::VertexEmbed(1)).copy_from_slice(&[2.0, 0.0]);
        params.block_mut(ParamBlock::VertexEmbed(2)).copy_from_slice(&[0.0, 1.0]);
        let rel = RelationType::Conjunction;
        params
            .block_mut(ParamBlock::RelEmbed(rel.index() as u8))
            .copy_from_slice(&[0.0, 2.0]);
        let bank = MemoryBank::new(vec![InfoAtomic {
            head: crate::kg::VertexId(1),
            rel,
            tail: crate::kg::VertexId(2),
        }]);
        let mut tape = Tape::new();
        let q = QueryState { node: tape.leaf(&params, ParamBlock::VertexEmbed(0)) };
        let (_, readout) =
            memory_read(q, &bank, &params, &mut tape, &EncodeOptions::default());
        assert_eq!(readout.scores, vec![2.0]);
        assert_eq!(readout.aggregate, vec![0.0, 6.0]);
        // Zero-initialized FFN output map: delta is zero at init.
        assert_eq!(readout.delta, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_init_ffn_makes_memory_a_no_op_at_start() {
        let kg = KnowledgeGraph::parse_tsv(
            include_str!("../../../../fixtures/figure_example.tsv"),
        )
        .unwrap();
        let params = ModelParams::init(kg.vertex_count(), 8, 5);
        let q = N::parse(
            "(p,Reason,(i,(p,Succession,(e,PersonX complains)),(p,Succession,(e,PersonX leaves))))",
            &kg,
        )
        .unwrap();
        let food = kg.vertex_by_text("Food is bad").unwrap();
        let soy = kg.vertex_by_text("PersonY adds soy sauce").unwrap();
        let bank = MemoryBank::new(vec![InfoAtomic {
            head: food,
            rel: RelationType::Precedence,
            tail: soy,
        }]);
        let opts = EncodeOptions::default();

        let mut tape_mem = Tape::new();
        let with_memory = encode(&q, &bank, &params, &mut tape_mem, &opts).unwrap();
        let mut tape_plain = Tape::new();
        let without = encode(&q, &MemoryBank::empty(), &params, &mut tape_plain, &opts).unwrap();
        assert_eq!(
            with_memory.vector(&tape_mem),
            without.vector(&tape_plain),
            "zero-initialized FFN output map must keep the backbone untouched"
        );

        // Deterministic: two encodes agree bit for bit.
        let mut tape_again = Tape::new();
        let again = encode(&q, &bank, &params, &mut tape_again, &opts).unwrap();
        assert_eq!(with_memory.vector(&tape_mem), again.vector(&tape_again));
    }

    #[test]
    fn anchor_encoding_is_the_embedding_row() {
        let kg = KnowledgeGraph::parse_tsv("a\tReason\tb\n").unwrap();
        let params = ModelParams::init(kg.vertex_count(), 4, 9);
        let a = kg.vertex_by_text("a").unwrap();
        let mut tape = Tape::new();
        let state = encode(
            &N::Anchor(a),
            &MemoryBank::empty(),
            &params,
            &mut tape,
            &EncodeOptions::default(),
        )
        .unwrap();
        assert_eq!(state.vector(&tape), params.block(ParamBlock::VertexEmbed(a.0)));
    }

    #[test]
    fn two_vertex_equal_scores_loss_is_ln2() {
        let mut params = ModelParams::init(2, 3, 0);
        params.block_mut(ParamBlock::VertexEmbed(0)).copy_from_slice(&[1.0, 0.0, 0.0]);
        params.block_mut(ParamBlock::VertexEmbed(1)).copy_from_slice(&[1.0, 0.0, 0.0]);
        let mut tape = Tape::new();
        let q = QueryState { node: tape.leaf(&params, ParamBlock::VertexEmbed(0)) };
        let l = loss(&[(q, crate::kg::VertexId(0))], &params, &mut tape).unwrap();
        assert!((tape.scalar(l) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_separation_drives_loss_to_zero() {
        let mut params = ModelParams::init(2, 2, 0);
        params.block_mut(ParamBlock::VertexEmbed(0)).copy_from_slice(&[100.0, 0.0]);
        params.block_mut(ParamBlock::VertexEmbed(1)).copy_from_slice(&[-100.0, 0.0]);
        let mut tape = Tape::new();
        let q = QueryState { node: tape.leaf(&params, ParamBlock::VertexEmbed(0)) };
        let l = loss(&[(q, crate::kg::VertexId(0))], &params, &mut tape).unwrap();
        assert!(tape.scalar(l) < 1e-8);
    }

    #[test]
    fn softmax_is_stable_and_normalized() {
        let p = softmax(&[1000.0, 0.0]);
        assert!(p[0] > 0.999_999);
        assert!(p.iter().all(|&x| x.is_finite()));

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let scores: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>() * 20.0 - 10.0).collect();
        let p = softmax(&scores);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));

        let even = softmax(&[3.0, 3.0]);
        assert!((even[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn encoding_cost_is_linear_in_query_size_and_memory() {
        // Operation-count property: growing the projection chain by one
        // adds a constant number of tape nodes, and growing the memory by
        // one atomic adds a constant number per read.
        let kg = KnowledgeGraph::parse_tsv("a\tReason\tb\nb\tReason\tc\nc\tReason\td\nd\tReason\te\n")
            .unwrap();
        let params = ModelParams::init(kg.vertex_count(), 4, 1);
        let opts = EncodeOptions::default();
        let a = kg.vertex_by_text("a").unwrap();

        let chain_cost = |depth: usize, bank: &MemoryBank| -> usize {
            let mut q = N::Anchor(a);
            for _ in 0..depth {
                q = N::Proj(RelationType::Reason, Box::new(q));
            }
            let mut tape = Tape::new();
            encode(&q, bank, &params, &mut tape, &opts).unwrap();
            tape.len()
        };

        let empty = MemoryBank::empty();
        let d1 = chain_cost(2, &empty) - chain_cost(1, &empty);
        let d2 = chain_cost(3, &empty) - chain_cost(2, &empty);
        let d3 = chain_cost(4, &empty) - chain_cost(3, &empty);
        assert_eq!(d1, d2);
        assert_eq!(d2, d3);

        let bank_of = |m: usize| {
            MemoryBank::new(
                (0..m)
                    .map(|i| InfoAtomic {
                        head: crate::kg::VertexId(i as u32),
                        rel: RelationType::Conjunction,
                        tail: crate::kg::VertexId((i + 1) as u32),
                    })
                    .collect(),
            )
        };
        let m1 = chain_cost(2, &bank_of(1));
        let m2 = chain_cost(2, &bank_of(2));
        let m3 = chain_cost(2, &bank_of(3));
        assert_eq!(m2 - m1, m3 - m2);
    }

    #[test]
    fn backward_twice_without_rerecording_errors() {
        let params = ModelParams::init(3, 2, 1);
        let mut tape = Tape::new();
        let q = QueryState { node: tape.leaf(&params, ParamBlock::VertexEmbed(0)) };
        loss(&[(q, crate::kg::VertexId(1))], &params, &mut tape).unwrap();
        assert!(tape.backward(&params).is_ok());
        assert!(matches!(tape.backward(&params), Err(super::super::TapeError::Consumed)));
    }

    #[test]
    fn backward_without_loss_errors() {
        let params = ModelParams::init(3, 2, 1);
        let mut tape = Tape::new();
        let _ = tape.leaf(&params, ParamBlock::VertexEmbed(0));
        assert!(matches!(tape.backward(&params), Err(super::super::TapeError::NoLoss)));
    }

    #[test]
    fn untouched_vertex_rows_get_zero_gradient() {
        let params = ModelParams::init(5, 3, 2);
        let mut tape = Tape::new();
        let q = QueryState { node: tape.leaf(&params, ParamBlock::VertexEmbed(0)) };
        loss(&[(q, crate::kg::VertexId(1))], &params, &mut tape).unwrap();
        let grads = tape.backward(&params).unwrap();
        // Every vertex participates in the softmax denominator, so vertex
        // rows are all touched; but projection weights for an unused
        // relation must be exactly zero.
        let r = RelationType::Exception.index() as u8;
        assert!(grads.block(ParamBlock::ProjW(r)).iter().all(|&g| g == 0.0));
        assert!(grads.block(ParamBlock::FfnW1).iter().all(|&g| g == 0.0));
    }
}
