//! Benchmark dataset generation: sample grounded queries from a graph
//! split, attach informational atomics off the reasoning chain, prove
//! every candidate answer, and keep only queries whose constraints bite.
//!
//! Sampling walks the computational graph top-down from a random vertex:
//! a projection picks a uniformly random incoming edge (the edge fixes
//! the relation), an intersection recurses on the same vertex, an anchor
//! terminates. The starting vertex is an answer of the sampled query by
//! construction.
//!
//! Every generation target owns an RNG stream derived from
//! `(seed, split, type, target index)`, so output is byte-identical for a
//! given seed regardless of worker count.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::constraint::{check_answer, CheckConfig, VerdictStatus};
use crate::exec::{answer_set, chain_vertices, enumerate_groundings, IndexedQuery};
use crate::kg::{GraphSplit, KnowledgeGraph, VertexId};
use crate::query::{
    ConstraintFamily, GroundedNode, InfoAtomic, QueryInstance, QueryTypeNode, SplitName,
};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("no predecessor edge available at vertex {0} (resample the start vertex)")]
    DeadEnd(VertexId),
    #[error("graph has no vertices to sample from")]
    EmptyGraph,
    #[error("config invalid: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Constraint(#[from] crate::constraint::ConstraintError),
    #[error(transparent)]
    Exec(#[from] crate::exec::ExecError),
}

/// The fifteen benchmark query shapes; the first six (at most two anchors)
/// form the training subset.
pub const DEFAULT_QUERY_TYPES: [&str; 15] = [
    "(p,(e))",
    "(p,(p,(e)))",
    "(p,(i,(p,(e)),(p,(e))))",
    "(i,(p,(e)),(p,(e)))",
    "(i,(p,(e)),(p,(p,(e))))",
    "(i,(p,(p,(e))),(p,(p,(e))))",
    "(p,(i,(i,(p,(e)),(p,(e))),(p,(e))))",
    "(i,(p,(e)),(p,(i,(p,(e)),(p,(e)))))",
    "(i,(i,(p,(e)),(p,(e))),(p,(e)))",
    "(i,(i,(p,(e)),(p,(p,(e)))),(p,(e)))",
    "(i,(i,(p,(p,(e))),(p,(p,(e)))),(p,(e)))",
    "(i,(p,(i,(p,(e)),(p,(e)))),(p,(p,(e))))",
    "(i,(i,(p,(e)),(p,(e))),(p,(p,(e))))",
    "(i,(i,(p,(e)),(p,(p,(e)))),(p,(p,(e))))",
    "(i,(i,(p,(p,(e))),(p,(p,(e)))),(p,(p,(e))))",
];

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    /// Query shapes per split; training shapes must be a subset of the
    /// validation/test shapes.
    pub train_types: Vec<QueryTypeNode>,
    pub eval_types: Vec<QueryTypeNode>,
    pub count_per_type: usize,
    /// Upper bound on informational atomics per query (1..=max sampled).
    pub max_info: usize,
    pub seed: u64,
    pub grounding_cap: usize,
    /// Anchor ceilings: train, valid, test.
    pub max_anchors: [usize; 3],
    /// Sampling attempts per retained-query target before giving up.
    pub retry_budget: usize,
}

impl SamplerConfig {
    pub fn with_default_types(count_per_type: usize, seed: u64) -> Self {
        let all: Vec<QueryTypeNode> = DEFAULT_QUERY_TYPES
            .iter()
            .map(|s| QueryTypeNode::parse(s).unwrap())
            .collect();
        let train: Vec<QueryTypeNode> = all
            .iter()
            .filter(|t| t.stats().0 <= 2)
            .cloned()
            .collect();
        SamplerConfig {
            train_types: train,
            eval_types: all,
            count_per_type,
            max_info: 3,
            seed,
            grounding_cap: crate::exec::DEFAULT_GROUNDING_CAP,
            max_anchors: [2, 3, 3],
            retry_budget: 100,
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.count_per_type == 0 {
            return Err(SamplerError::BadConfig("count_per_type must be positive".into()));
        }
        if self.max_info == 0 {
            return Err(SamplerError::BadConfig("max_info must be positive".into()));
        }
        let eval: BTreeSet<String> = self.eval_types.iter().map(|t| t.to_string()).collect();
        for t in &self.train_types {
            if !eval.contains(&t.to_string()) {
                return Err(SamplerError::BadConfig(format!(
                    "train type {t} missing from eval types"
                )));
            }
        }
        for (types, cap, name) in [
            (&self.train_types, self.max_anchors[0], "train"),
            (&self.eval_types, self.max_anchors[1], "valid/test"),
        ] {
            for t in types {
                let (anchors, _) = t.stats();
                if anchors > cap {
                    return Err(SamplerError::BadConfig(format!(
                        "{name} type {t} has {anchors} anchors, cap is {cap}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One recursive descent of the query shape ending at `v`: projections
/// sample an incoming edge, intersections fan out on the same vertex.
/// The returned query always has `v` in its answer set.
pub fn sample_query(
    g: &KnowledgeGraph,
    shape: &QueryTypeNode,
    v: VertexId,
    rng: &mut ChaCha8Rng,
) -> Result<GroundedNode, SamplerError> {
    match shape {
        QueryTypeNode::E => Ok(GroundedNode::Anchor(v)),
        QueryTypeNode::P(child) => {
            let incoming = g.incoming_edges(v);
            if incoming.is_empty() {
                return Err(SamplerError::DeadEnd(v));
            }
            let (u, rel) = incoming[rng.random_range(0..incoming.len())];
            let sub = sample_query(g, child, u, rng)?;
            Ok(GroundedNode::Proj(rel, Box::new(sub)))
        }
        QueryTypeNode::I(children) => {
            let subs: Result<Vec<GroundedNode>, SamplerError> = children
                .iter()
                .map(|c| sample_query(g, c, v, rng))
                .collect();
            Ok(GroundedNode::Inter(subs?))
        }
    }
}

/// Pick up to `k` distinct graph edges incident to the reasoning chain of
/// `seed_answer`, excluding edges already instantiated as computational
/// atomics under the seed grounding. Returns fewer when the pool is small.
pub fn attach_info_atomics(
    g: &KnowledgeGraph,
    query: &GroundedNode,
    seed_answer: VertexId,
    k: usize,
    cap: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<InfoAtomic>, SamplerError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    // The first grounding, in deterministic enumeration order, is the
    // seed's reasoning chain.
    let gs = enumerate_groundings(g, query, seed_answer, cap)?;
    let seed_grounding = gs
        .groundings
        .first()
        .ok_or(crate::exec::ExecError::EmptyGroundingSet)?;
    let single = crate::exec::GroundingSet {
        groundings: vec![seed_grounding.clone()],
        truncated: false,
    };
    let chain = chain_vertices(&single, query)?;

    let ix = IndexedQuery::of(query);
    let computational: BTreeSet<(VertexId, crate::kg::RelationType, VertexId)> =
        ix.instanced_atomics(seed_grounding)?.into_iter().collect();

    let mut pool: Vec<InfoAtomic> = g
        .edges()
        .iter()
        .filter(|e| chain.contains(&e.head) || chain.contains(&e.tail))
        .filter(|e| !computational.contains(&(e.head, e.rel, e.tail)))
        .map(|e| InfoAtomic { head: e.head, rel: e.rel, tail: e.tail })
        .collect();

    let take = k.min(pool.len());
    let mut picked = Vec::with_capacity(take);
    for _ in 0..take {
        let i = rng.random_range(0..pool.len());
        picked.push(pool.swap_remove(i));
    }
    Ok(picked)
}

/// Labeling outcome for one sampled query.
#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    Keep {
        answers: Vec<VertexId>,
        contradictory: Vec<VertexId>,
        family: ConstraintFamily,
    },
    Discard,
}

/// Prove every candidate answer. Discards queries with no contradictory
/// answer, with no surviving answer, with mixed contradiction families
/// (keeps the two benchmark categories disjoint), or with truncated
/// grounding enumeration anywhere.
pub fn label_query(
    kg: &KnowledgeGraph,
    query: &GroundedNode,
    info: &[InfoAtomic],
    check: &CheckConfig,
) -> Result<Label, SamplerError> {
    let candidates = answer_set(kg, query);
    let mut answers = Vec::new();
    let mut occ = Vec::new();
    let mut temp = Vec::new();
    for &a in &candidates {
        let verdict = check_answer(kg, query, info, a, check)?;
        if verdict.possibly_incomplete {
            return Ok(Label::Discard);
        }
        match verdict.status {
            VerdictStatus::Valid => answers.push(a),
            VerdictStatus::OccurrenceContradiction => occ.push(a),
            VerdictStatus::TemporalContradiction => temp.push(a),
        }
    }
    if answers.is_empty() || (occ.is_empty() && temp.is_empty()) {
        return Ok(Label::Discard);
    }
    let (family, contradictory) = match (occ.is_empty(), temp.is_empty()) {
        (false, true) => (ConstraintFamily::Occurrence, occ),
        (true, false) => (ConstraintFamily::Temporal, temp),
        _ => return Ok(Label::Discard), // mixed families
    };
    Ok(Label::Keep { answers, contradictory, family })
}

/// Per-type, per-family aggregates over retained queries.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub split: SplitName,
    pub query_type: String,
    pub family: ConstraintFamily,
    pub queries: usize,
    pub mean_answers: f64,
    pub mean_contradictory: f64,
}

#[derive(Debug, Clone, Default)]
pub struct DatasetStats {
    pub rows: Vec<StatsRow>,
}

impl DatasetStats {
    /// TSV with one row per (split, type, family).
    pub fn to_tsv(&self) -> String {
        let mut out =
            String::from("split\ttype\tfamily\tqueries\tmean_answers\tmean_contradictory\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\n",
                r.split.name(),
                r.query_type,
                r.family.name(),
                r.queries,
                r.mean_answers,
                r.mean_contradictory
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<QueryInstance>,
    pub valid: Vec<QueryInstance>,
    pub test: Vec<QueryInstance>,
    pub stats: DatasetStats,
    /// Targets that stayed unmet after the retry budget, as
    /// (split, type, missing-count).
    pub shortfalls: Vec<(SplitName, String, usize)>,
}

impl Dataset {
    pub fn records(&self, split: SplitName) -> &[QueryInstance] {
        match split {
            SplitName::Train => &self.train,
            SplitName::Valid => &self.valid,
            SplitName::Test => &self.test,
        }
    }
}

fn mix(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    // splitmix64 over the packed coordinates.
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9e3779b97f4a7c15))
        .wrapping_add(b.wrapping_mul(0xbf58476d1ce4e5b9))
        .wrapping_add(c.wrapping_mul(0x94d049bb133111eb));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Sample one retained record for a `(split, type, target)` coordinate,
/// or None when the retry budget runs out.
fn sample_target(
    g: &KnowledgeGraph,
    shape: &QueryTypeNode,
    split: SplitName,
    split_idx: u64,
    type_idx: u64,
    target_idx: u64,
    cfg: &SamplerConfig,
) -> Result<Option<QueryInstance>, SamplerError> {
    let n = g.vertex_count();
    if n == 0 {
        return Err(SamplerError::EmptyGraph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, split_idx, type_idx, target_idx));
    let check = CheckConfig {
        grounding_cap: cfg.grounding_cap,
        var_limit: crate::constraint::DEFAULT_VAR_LIMIT,
    };
    for _ in 0..cfg.retry_budget {
        let v = VertexId(rng.random_range(0..n as u32));
        let query = match sample_query(g, shape, v, &mut rng) {
            Ok(q) => q,
            Err(SamplerError::DeadEnd(_)) => continue,
            Err(e) => return Err(e),
        };
        debug_assert!(answer_set(g, &query).contains(&v));
        let k = rng.random_range(1..=cfg.max_info);
        let info = attach_info_atomics(g, &query, v, k, cfg.grounding_cap, &mut rng)?;
        if info.is_empty() {
            continue;
        }
        match label_query(g, &query, &info, &check)? {
            Label::Keep { answers, contradictory, family } => {
                return Ok(Some(QueryInstance {
                    query,
                    info_atomics: info,
                    answers,
                    contradictory_answers: contradictory,
                    family,
                    split,
                }));
            }
            Label::Discard => continue,
        }
    }
    Ok(None)
}

/// Generate the full benchmark: train queries labeled on the train graph,
/// valid on the valid graph, test on the test graph. Deterministic per
/// seed; `workers` only partitions the target space.
pub fn generate_dataset(
    split: &GraphSplit,
    cfg: &SamplerConfig,
    workers: usize,
) -> Result<Dataset, SamplerError> {
    cfg.validate()?;
    let plan: [(SplitName, &KnowledgeGraph, &[QueryTypeNode]); 3] = [
        (SplitName::Train, &split.train, &cfg.train_types),
        (SplitName::Valid, &split.valid, &cfg.eval_types),
        (SplitName::Test, &split.test, &cfg.eval_types),
    ];

    let mut out: [Vec<QueryInstance>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut shortfalls = Vec::new();

    for (split_idx, (split_name, graph, types)) in plan.into_iter().enumerate() {
        for (type_idx, shape) in types.iter().enumerate() {
            let results = run_targets(
                graph,
                shape,
                split_name,
                split_idx as u64,
                type_idx as u64,
                cfg,
                workers.max(1),
            )?;
            let mut missing = 0usize;
            for r in results {
                match r {
                    Some(record) => out[split_idx].push(record),
                    None => missing += 1,
                }
            }
            if missing > 0 {
                shortfalls.push((split_name, shape.to_string(), missing));
            }
        }
    }

    let [train, valid, test] = out;
    let stats = compute_stats(&train, &valid, &test);
    Ok(Dataset { train, valid, test, stats, shortfalls })
}

#[allow(clippy::too_many_arguments)]
fn run_targets(
    graph: &KnowledgeGraph,
    shape: &QueryTypeNode,
    split_name: SplitName,
    split_idx: u64,
    type_idx: u64,
    cfg: &SamplerConfig,
    workers: usize,
) -> Result<Vec<Option<QueryInstance>>, SamplerError> {
    let n = cfg.count_per_type;
    if workers <= 1 || n < 2 {
        return (0..n)
            .map(|i| sample_target(graph, shape, split_name, split_idx, type_idx, i as u64, cfg))
            .collect();
    }
    // Each worker fills a disjoint index range; per-index RNG streams make
    // the merge independent of scheduling.
    let mut slots: Vec<Option<QueryInstance>> = vec![None; n];
    let chunk = n.div_ceil(workers);
    let result: Result<(), SamplerError> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (w, piece) in slots.chunks_mut(chunk).enumerate() {
            let start = w * chunk;
            handles.push(scope.spawn(move || -> Result<(), SamplerError> {
                for (off, slot) in piece.iter_mut().enumerate() {
                    *slot = sample_target(
                        graph,
                        shape,
                        split_name,
                        split_idx,
                        type_idx,
                        (start + off) as u64,
                        cfg,
                    )?;
                }
                Ok(())
            }));
        }
        for h in handles {
            h.join().expect("sampler worker panicked")?;
        }
        Ok(())
    });
    result?;
    Ok(slots)
}

fn compute_stats(
    train: &[QueryInstance],
    valid: &[QueryInstance],
    test: &[QueryInstance],
) -> DatasetStats {
    let mut rows = Vec::new();
    for (split, records) in [
        (SplitName::Train, train),
        (SplitName::Valid, valid),
        (SplitName::Test, test),
    ] {
        let mut keys: Vec<(String, ConstraintFamily)> = Vec::new();
        for r in records {
            let key = (r.query.erase().to_string(), r.family);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.name().cmp(b.1.name())));
        for (type_str, family) in keys {
            let group: Vec<&QueryInstance> = records
                .iter()
                .filter(|r| r.family == family && r.query.erase().to_string() == type_str)
                .collect();
            let nq = group.len();
            let mean = |f: &dyn Fn(&QueryInstance) -> usize| {
                group.iter().map(|r| f(r) as f64).sum::<f64>() / nq as f64
            };
            rows.push(StatsRow {
                split,
                query_type: type_str,
                family,
                queries: nq,
                mean_answers: mean(&|r| r.answers.len()),
                mean_contradictory: mean(&|r| r.contradictory_answers.len()),
            });
        }
    }
    DatasetStats { rows }
}

/// Serialize records as JSONL, one record per line, in order.
pub fn to_jsonl(
    records: &[QueryInstance],
    kg: &KnowledgeGraph,
) -> Result<String, crate::query::QueryError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json(kg)?);
        out.push('\n');
    }
    Ok(out)
}
