//! Training loop, Adam optimizer, filtered ranking, and the evaluation
//! protocol.
//!
//! Training: one positive pair per non-contradictory train answer, Adam
//! over shuffled pairs, memory bank built from each query's informational
//! atomics (ablation-dependent). Evaluation: for a test query, targets are
//! the answers provable on the test graph but not on the validation graph
//! (swap one graph down for validation), ranked against every vertex with
//! other known-valid answers filtered out. Contradictory answers are never
//! filtered: ranking them low is the skill under test.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::constraint::{check_answer, CheckConfig, VerdictStatus};
use crate::exec::answer_set;
use crate::kg::{KnowledgeGraph, VertexId};
use crate::model::{
    encode, loss, score_all, Ablation, EncodeOptions, MemoryBank, ModelParams, Tape,
};
use crate::query::{ConstraintFamily, QueryInstance, QueryTypeNode};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training pairs (every record empty?)")]
    NoPairs,
    #[error("non-finite loss at epoch {epoch}, batch {batch}; record ids {records:?}")]
    NonFiniteLoss { epoch: usize, batch: usize, records: Vec<usize> },
    #[error("config invalid: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Tape(#[from] crate::model::TapeError),
    #[error(transparent)]
    Constraint(#[from] crate::constraint::ConstraintError),
}

pub const LR_GRID: [f64; 5] = [0.002, 0.001, 0.0005, 0.0002, 0.0001];
pub const BATCH_GRID: [usize; 3] = [128, 256, 512];

/// Adam constants and run shape. `paper` is the full-scale preset,
/// `desk` the laptop-sized one.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub d: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub options: EncodeOptions,
    /// When set, `validate` additionally pins lr/batch to the search grids.
    pub grid_mode: bool,
}

impl TrainConfig {
    pub fn paper(seed: u64) -> Self {
        TrainConfig {
            d: 300,
            lr: 0.001,
            batch_size: 256,
            epochs: 100,
            seed,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            options: EncodeOptions::default(),
            grid_mode: false,
        }
    }

    pub fn desk(seed: u64) -> Self {
        TrainConfig { d: 64, batch_size: 128, epochs: 50, ..Self::paper(seed) }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.d == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(TrainError::BadConfig("d, batch and epochs must be positive".into()));
        }
        if self.grid_mode {
            if !LR_GRID.contains(&self.lr) {
                return Err(TrainError::BadConfig(format!(
                    "grid mode: lr {} not in {:?}",
                    self.lr, LR_GRID
                )));
            }
            if !BATCH_GRID.contains(&self.batch_size) {
                return Err(TrainError::BadConfig(format!(
                    "grid mode: batch {} not in {:?}",
                    self.batch_size, BATCH_GRID
                )));
            }
        }
        Ok(())
    }
}

/// Plain Adam with bias correction over a flat parameter buffer.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, len: usize) -> Self {
        Adam { lr, beta1, beta2, eps, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9e3779b97f4a7c15))
        .wrapping_add(b.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Build the memory bank for one record under the configured ablation.
fn build_bank(
    record: &QueryInstance,
    ablation: Ablation,
    kg: &KnowledgeGraph,
    rng: &mut ChaCha8Rng,
) -> MemoryBank {
    match ablation {
        Ablation::NoMemory => MemoryBank::empty(),
        Ablation::RandomConstraints => {
            let edges = kg.edges();
            let entries = record
                .info_atomics
                .iter()
                .map(|_| {
                    let e = edges[rng.random_range(0..edges.len())];
                    crate::query::InfoAtomic { head: e.head, rel: e.rel, tail: e.tail }
                })
                .collect();
            MemoryBank::new(entries)
        }
        Ablation::None | Ablation::NoFfn => MemoryBank::new(record.info_atomics.clone()),
    }
}

#[derive(Debug)]
pub struct TrainOutput {
    pub params: ModelParams,
    /// Mean pair loss per epoch.
    pub loss_curve: Vec<f64>,
}

/// Adam over shuffled positive pairs, one pair per non-contradictory
/// train answer. Deterministic per seed.
pub fn train(
    records: &[QueryInstance],
    kg: &KnowledgeGraph,
    cfg: &TrainConfig,
) -> Result<TrainOutput, TrainError> {
    cfg.validate()?;
    let mut pairs: Vec<(usize, VertexId)> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        for &a in &r.answers {
            pairs.push((i, a));
        }
    }
    if pairs.is_empty() {
        return Err(TrainError::NoPairs);
    }

    let mut params = ModelParams::init(kg.vertex_count(), cfg.d, cfg.seed);
    let mut adam = Adam::new(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, params.flat_len());
    let mut loss_curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order = pairs.clone();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, epoch as u64, 1));
        order.shuffle(&mut shuffle_rng);
        let mut bank_rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, epoch as u64, 2));

        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut tape = Tape::new();
            let mut batch_pairs = Vec::with_capacity(batch.len());
            for &(ri, answer) in batch {
                let bank = build_bank(&records[ri], cfg.options.ablation, kg, &mut bank_rng);
                let state = encode(&records[ri].query, &bank, &params, &mut tape, &cfg.options)?;
                batch_pairs.push((state, answer));
            }
            let loss_node = loss(&batch_pairs, &params, &mut tape)?;
            let batch_loss = tape.scalar(loss_node);
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                    records: batch.iter().map(|&(ri, _)| ri).collect(),
                });
            }
            epoch_loss += batch_loss * batch.len() as f64;
            let grads = tape.backward(&params)?;
            adam.step(params.flat_mut(), grads.flat());
        }
        loss_curve.push(epoch_loss / pairs.len() as f64);
    }

    Ok(TrainOutput { params, loss_curve })
}

/// Filtered pessimistic rank of `target` among all vertices: other known
/// answers leave the candidate pool, ties count against the target.
pub fn rank_of(scores: &[f64], target: VertexId, known: &BTreeSet<VertexId>) -> usize {
    let st = scores[target.0 as usize];
    let mut rank = 1usize;
    for (u, &su) in scores.iter().enumerate() {
        let u = VertexId(u as u32);
        if u == target {
            continue;
        }
        if known.contains(&u) {
            continue;
        }
        if su >= st {
            rank += 1;
        }
    }
    rank
}

/// Fraction of ranks within the top k (within one query).
pub fn hits_at_k(ranks: &[usize], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
}

/// Mean reciprocal rank (within one query).
pub fn mrr(ranks: &[usize]) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricSummary {
    pub n: usize,
    pub hit1: f64,
    pub hit3: f64,
    pub mrr: f64,
}

impl MetricSummary {
    fn assert_invariants(&self) {
        for v in [self.hit1, self.hit3, self.mrr] {
            assert!((0.0..=1.0).contains(&v), "metric out of range: {v}");
        }
        assert!(self.hit1 <= self.hit3 + 1e-12, "Hit@1 must not exceed Hit@3");
        assert!(self.hit1 <= self.mrr + 1e-12, "Hit@1 must not exceed MRR");
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub family: ConstraintFamily,
    pub query_type: String,
    pub summary: MetricSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// One row per (family, expected type), in config order.
    pub per_type: Vec<EvalRow>,
    pub per_family: Vec<(ConstraintFamily, MetricSummary)>,
    pub overall: MetricSummary,
    /// Queries skipped for having no new answers to rank.
    pub skipped: usize,
}

impl EvalResult {
    /// Report TSV: one row per family/type plus macro rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("family\ttype\tn\thit1\thit3\tmrr\n");
        let line = |family: &str, ty: &str, s: &MetricSummary| {
            format!("{family}\t{ty}\t{}\t{:.4}\t{:.4}\t{:.4}\n", s.n, s.hit1, s.hit3, s.mrr)
        };
        for row in &self.per_type {
            out.push_str(&line(row.family.name(), &row.query_type, &row.summary));
        }
        for (family, s) in &self.per_family {
            out.push_str(&line(family.name(), "all", s));
        }
        out.push_str(&line("all", "all", &self.overall));
        out
    }
}

type QueryContribution = (ConstraintFamily, String, (f64, f64, f64));

/// Per-query metric triple over the target ranks.
fn query_metrics(ranks: &[usize]) -> (f64, f64, f64) {
    (hits_at_k(ranks, 1), hits_at_k(ranks, 3), mrr(ranks))
}

fn macro_mean(values: &[(f64, f64, f64)]) -> MetricSummary {
    let n = values.len();
    if n == 0 {
        return MetricSummary::default();
    }
    let sum = values.iter().fold((0.0, 0.0, 0.0), |acc, v| {
        (acc.0 + v.0, acc.1 + v.1, acc.2 + v.2)
    });
    let k = n as f64;
    MetricSummary { n, hit1: sum.0 / k, hit3: sum.1 / k, mrr: sum.2 / k }
}

/// Answers of the record's query provable on the smaller graph; targets
/// are the record's answers minus these.
fn smaller_graph_answers(
    record: &QueryInstance,
    smaller: &KnowledgeGraph,
    check: &CheckConfig,
) -> Result<BTreeSet<VertexId>, TrainError> {
    let mut out = BTreeSet::new();
    for &a in &answer_set(smaller, &record.query) {
        let verdict = check_answer(smaller, &record.query, &record.info_atomics, a, check)?;
        if verdict.status == VerdictStatus::Valid {
            out.insert(a);
        }
    }
    Ok(out)
}

/// Evaluate one split: per-family, per-type tables plus macro averages.
/// `smaller` is the next graph down (validation for test records, train
/// for validation records). Deterministic; `workers` partitions queries.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    records: &[QueryInstance],
    params: &ModelParams,
    opts: &EncodeOptions,
    smaller: &KnowledgeGraph,
    expected_types: &[QueryTypeNode],
    check: &CheckConfig,
    seed: u64,
    workers: usize,
) -> Result<EvalResult, TrainError> {
    // (family, type string, per-query metrics) per contributing record.
    let mut slots: Vec<Option<QueryContribution>> = vec![None; records.len()];

    let eval_one = |(ri, record): (usize, &QueryInstance)| -> Result<
        Option<QueryContribution>,
        TrainError,
    > {
        let old = smaller_graph_answers(record, smaller, check)?;
        let targets: Vec<VertexId> = record
            .answers
            .iter()
            .copied()
            .filter(|a| !old.contains(a))
            .collect();
        if targets.is_empty() {
            return Ok(None);
        }
        let known: BTreeSet<VertexId> = record.answers.iter().copied().collect();
        let mut bank_rng = ChaCha8Rng::seed_from_u64(mix(seed, ri as u64, 3));
        let bank = build_bank(record, opts.ablation, smaller, &mut bank_rng);
        let mut tape = Tape::new();
        let state = encode(&record.query, &bank, params, &mut tape, opts)?;
        let scores = score_all(state.vector(&tape), params);
        let ranks: Vec<usize> = targets
            .iter()
            .map(|&t| rank_of(&scores, t, &known))
            .collect();
        Ok(Some((
            record.family,
            record.query.erase().to_string(),
            query_metrics(&ranks),
        )))
    };

    if workers <= 1 {
        for (ri, record) in records.iter().enumerate() {
            slots[ri] = eval_one((ri, record))?;
        }
    } else {
        let chunk = records.len().div_ceil(workers).max(1);
        let eval_ref = &eval_one;
        let result: Result<(), TrainError> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for (w, piece) in slots.chunks_mut(chunk).enumerate() {
                let start = w * chunk;
                handles.push(scope.spawn(move || -> Result<(), TrainError> {
                    for (off, slot) in piece.iter_mut().enumerate() {
                        let ri = start + off;
                        *slot = eval_ref((ri, &records[ri]))?;
                    }
                    Ok(())
                }));
            }
            for h in handles {
                h.join().expect("eval worker panicked")?;
            }
            Ok(())
        });
        result?;
    }

    let contributions: Vec<&QueryContribution> = slots.iter().flatten().collect();
    let skipped = records.len() - contributions.len();

    let mut per_type = Vec::new();
    for family in [ConstraintFamily::Occurrence, ConstraintFamily::Temporal] {
        for ty in expected_types {
            let ty_str = ty.to_string();
            let group: Vec<(f64, f64, f64)> = contributions
                .iter()
                .filter(|(f, t, _)| *f == family && *t == ty_str)
                .map(|(_, _, m)| *m)
                .collect();
            per_type.push(EvalRow {
                family,
                query_type: ty_str,
                summary: macro_mean(&group),
            });
        }
    }
    let mut per_family = Vec::new();
    for family in [ConstraintFamily::Occurrence, ConstraintFamily::Temporal] {
        let group: Vec<(f64, f64, f64)> = contributions
            .iter()
            .filter(|(f, _, _)| *f == family)
            .map(|(_, _, m)| *m)
            .collect();
        per_family.push((family, macro_mean(&group)));
    }
    let overall = macro_mean(
        &contributions.iter().map(|(_, _, m)| *m).collect::<Vec<_>>(),
    );

    for row in &per_type {
        row.summary.assert_invariants();
    }
    for (_, s) in &per_family {
        s.assert_invariants();
    }
    overall.assert_invariants();

    Ok(EvalResult { per_type, per_family, overall, skipped })
}

/// Element-wise mean over per-seed results (same config across seeds).
pub fn mean_results(results: &[EvalResult]) -> EvalResult {
    assert!(!results.is_empty());
    let k = results.len() as f64;
    let mean_summary = |pick: &dyn Fn(&EvalResult) -> MetricSummary| {
        let mut acc = MetricSummary::default();
        for r in results {
            let s = pick(r);
            acc.n += s.n;
            acc.hit1 += s.hit1;
            acc.hit3 += s.hit3;
            acc.mrr += s.mrr;
        }
        MetricSummary {
            n: (acc.n as f64 / k).round() as usize,
            hit1: acc.hit1 / k,
            hit3: acc.hit3 / k,
            mrr: acc.mrr / k,
        }
    };
    let per_type = results[0]
        .per_type
        .iter()
        .enumerate()
        .map(|(i, row)| EvalRow {
            family: row.family,
            query_type: row.query_type.clone(),
            summary: mean_summary(&|r: &EvalResult| r.per_type[i].summary),
        })
        .collect();
    let per_family = results[0]
        .per_family
        .iter()
        .enumerate()
        .map(|(i, (f, _))| (*f, mean_summary(&|r: &EvalResult| r.per_family[i].1)))
        .collect();
    EvalResult {
        per_type,
        per_family,
        overall: mean_summary(&|r: &EvalResult| r.overall),
        skipped: results.iter().map(|r| r.skipped).sum::<usize>() / results.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn adam_matches_straight_line_reference_on_a_quadratic() {
        // Minimize f(x) = x² from x = 1; gradient 2x.
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
        let mut adam = Adam::new(lr, b1, b2, eps, 1);
        let mut x = [1.0f64];

        let mut x_ref = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=10 {
            let g = 2.0 * x[0];
            adam.step(&mut x, &[g]);

            let g_ref = 2.0 * x_ref;
            m = b1 * m + (1.0 - b1) * g_ref;
            v = b2 * v + (1.0 - b2) * g_ref * g_ref;
            let m_hat = m / (1.0 - b1.powi(t));
            let v_hat = v / (1.0 - b2.powi(t));
            x_ref -= lr * m_hat / (v_hat.sqrt() + eps);

            assert!((x[0] - x_ref).abs() < 1e-12, "step {t}: {} vs {}", x[0], x_ref);
        }
        assert!(x[0].abs() < 1.0);
    }

    #[test]
    fn rank_handles_filtering_and_ties() {
        let scores = vec![5.0, 3.0, 3.0, 1.0, 9.0];
        let known: BTreeSet<VertexId> = [VertexId(4), VertexId(1)].into_iter().collect();
        // Target 1 (score 3): vertex 4 (9.0) is filtered as another known
        // answer, vertex 0 (5.0) outranks, vertex 2 ties pessimistically.
        assert_eq!(rank_of(&scores, VertexId(1), &known), 3);
        // Strictly highest unfiltered score ranks first.
        assert_eq!(rank_of(&scores, VertexId(4), &BTreeSet::new()), 1);
        // A tie with one non-answer gives rank 2.
        let scores2 = vec![1.0, 1.0];
        assert_eq!(rank_of(&scores2, VertexId(0), &BTreeSet::new()), 2);
    }

    #[test]
    fn rank_invariant_under_adding_lower_scored_vertex() {
        let scores = vec![2.0, 5.0, 4.0];
        let known = BTreeSet::new();
        let base = rank_of(&scores, VertexId(2), &known);
        let mut extended = scores.clone();
        extended.push(3.9); // strictly below the target's 4.0
        assert_eq!(rank_of(&extended, VertexId(2), &known), base);
    }

    #[test]
    fn metric_fixture_ranks_one_and_three() {
        let ranks = [1usize, 3];
        assert_eq!(hits_at_k(&ranks, 3), 1.0);
        assert!((mrr(&ranks) - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(hits_at_k(&[1, 1, 1], 1), 1.0);
        assert_eq!(mrr(&[1, 1, 1]), 1.0);
    }

    #[test]
    fn eval_targets_are_answers_new_to_the_larger_graph() {
        use crate::query::GroundedNode as N;
        // Valid graph proves only b; the test graph adds the edge to c.
        let valid = KnowledgeGraph::parse_tsv("a\tReason\tb\nx\tResult\ty\nc\tResult\tz\n").unwrap();
        let test = KnowledgeGraph::parse_tsv(
            "a\tReason\tb\nx\tResult\ty\nc\tResult\tz\na\tReason\tc\n",
        )
        .unwrap();
        let a = test.vertex_by_text("a").unwrap();
        let b = test.vertex_by_text("b").unwrap();
        let c = test.vertex_by_text("c").unwrap();
        let record = QueryInstance {
            query: N::Proj(crate::kg::RelationType::Reason, Box::new(N::Anchor(a))),
            info_atomics: vec![],
            answers: vec![b, c],
            contradictory_answers: vec![],
            family: ConstraintFamily::Occurrence,
            split: crate::query::SplitName::Test,
        };
        // Score c strictly highest so a rank-1 overall metric can only
        // come from the target set being exactly {c}.
        let mut params = ModelParams::init(test.vertex_count(), 2, 1);
        for v in 0..test.vertex_count() as u32 {
            let row = params.block_mut(crate::model::ParamBlock::VertexEmbed(v));
            row.copy_from_slice(&[if VertexId(v) == c { 10.0 } else { -1.0 }, 0.0]);
        }
        // Identity projection so the query state is exactly the anchor row.
        params
            .block_mut(crate::model::ParamBlock::VertexEmbed(a.0))
            .copy_from_slice(&[1.0, 0.0]);
        let r = crate::kg::RelationType::Reason.index() as u8;
        let w = params.block_mut(crate::model::ParamBlock::ProjW(r));
        w.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        params.block_mut(crate::model::ParamBlock::ProjB(r)).fill(0.0);
        params.block_mut(crate::model::ParamBlock::RelEmbed(r)).fill(0.0);
        let types = vec![crate::query::QueryTypeNode::parse("(p,(e))").unwrap()];
        let result = evaluate(
            &[record],
            &params,
            &EncodeOptions::default(),
            &valid,
            &types,
            &CheckConfig::default(),
            0,
            1,
        )
        .unwrap();
        assert_eq!(result.skipped, 0);
        assert_eq!(result.overall.n, 1);
        // b (the already-known answer) is filtered from c's pool, and c
        // is the only target.
        assert_eq!(result.overall.hit1, 1.0);
        assert_eq!(result.overall.mrr, 1.0);
    }

    #[test]
    fn contradictory_answers_stay_in_the_candidate_pool() {
        // z is a contradictory answer scored above the target: ranking it
        // low is the skill under test, so it must cost the target a rank.
        let valid = KnowledgeGraph::parse_tsv("a\tReason\tb\nz\tResult\ty\n").unwrap();
        let test = KnowledgeGraph::parse_tsv(
            "a\tReason\tb\nz\tResult\ty\na\tReason\tc\n",
        )
        .unwrap();
        let a = test.vertex_by_text("a").unwrap();
        let b = test.vertex_by_text("b").unwrap();
        let c = test.vertex_by_text("c").unwrap();
        let z = test.vertex_by_text("z").unwrap();
        let record = QueryInstance {
            query: crate::query::GroundedNode::Proj(
                crate::kg::RelationType::Reason,
                Box::new(crate::query::GroundedNode::Anchor(a)),
            ),
            info_atomics: vec![],
            answers: vec![b, c],
            contradictory_answers: vec![z],
            family: ConstraintFamily::Occurrence,
            split: crate::query::SplitName::Test,
        };
        let mut params = ModelParams::init(test.vertex_count(), 2, 1);
        for v in 0..test.vertex_count() as u32 {
            let id = VertexId(v);
            let score = if id == z { 20.0 } else if id == c { 10.0 } else { -1.0 };
            params
                .block_mut(crate::model::ParamBlock::VertexEmbed(v))
                .copy_from_slice(&[score, 0.0]);
        }
        params
            .block_mut(crate::model::ParamBlock::VertexEmbed(a.0))
            .copy_from_slice(&[1.0, 0.0]);
        let r = crate::kg::RelationType::Reason.index() as u8;
        params
            .block_mut(crate::model::ParamBlock::ProjW(r))
            .copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        params.block_mut(crate::model::ParamBlock::ProjB(r)).fill(0.0);
        params.block_mut(crate::model::ParamBlock::RelEmbed(r)).fill(0.0);
        let types = vec![crate::query::QueryTypeNode::parse("(p,(e))").unwrap()];
        let result = evaluate(
            &[record],
            &params,
            &EncodeOptions::default(),
            &valid,
            &types,
            &CheckConfig::default(),
            0,
            1,
        )
        .unwrap();
        // Target c ranks second behind the unfiltered contradictory z.
        assert_eq!(result.overall.hit1, 0.0);
        assert!((result.overall.mrr - 0.5).abs() < 1e-12);
    }

    #[test]
    fn random_constraints_bank_draws_real_graph_edges() {
        let kg = KnowledgeGraph::synthetic(30, 120, 5);
        let record = QueryInstance {
            query: crate::query::GroundedNode::Anchor(VertexId(0)),
            info_atomics: vec![
                crate::query::InfoAtomic {
                    head: VertexId(1),
                    rel: crate::kg::RelationType::Reason,
                    tail: VertexId(2),
                },
                crate::query::InfoAtomic {
                    head: VertexId(3),
                    rel: crate::kg::RelationType::Contrast,
                    tail: VertexId(4),
                },
            ],
            answers: vec![VertexId(0)],
            contradictory_answers: vec![VertexId(1)],
            family: crate::query::ConstraintFamily::Occurrence,
            split: crate::query::SplitName::Train,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bank = build_bank(&record, Ablation::RandomConstraints, &kg, &mut rng);
        assert_eq!(bank.len(), record.info_atomics.len());
        for entry in &bank.entries {
            assert!(kg.has_edge(entry.head, entry.rel, entry.tail));
        }
        let empty = build_bank(&record, Ablation::NoMemory, &kg, &mut rng);
        assert!(empty.is_empty());
        let real = build_bank(&record, Ablation::None, &kg, &mut rng);
        assert_eq!(real.entries, record.info_atomics);
    }

    #[test]
    fn non_finite_loss_aborts_with_the_batch_ids() {
        let kg = KnowledgeGraph::parse_tsv("a\tReason\tb\n").unwrap();
        let record = QueryInstance {
            query: crate::query::GroundedNode::Proj(
                crate::kg::RelationType::Reason,
                Box::new(crate::query::GroundedNode::Anchor(VertexId(0))),
            ),
            info_atomics: vec![],
            answers: vec![VertexId(1)],
            contradictory_answers: vec![VertexId(0)],
            family: crate::query::ConstraintFamily::Occurrence,
            split: crate::query::SplitName::Train,
        };
        let mut cfg = TrainConfig::desk(0);
        cfg.d = 2;
        cfg.epochs = 1;
        // A non-finite learning rate poisons the first Adam step; the
        // second epoch's forward pass must then abort with diagnostics.
        cfg.lr = f64::NAN;
        cfg.epochs = 2;
        let err = train(&[record], &kg, &cfg).unwrap_err();
        match err {
            TrainError::NonFiniteLoss { records, .. } => assert_eq!(records, vec![0]),
            other => panic!("expected a non-finite loss abort, got {other}"),
        }
    }

    #[test]
    fn mean_results_averages_metrics_elementwise() {
        let row = |mrr: f64| EvalResult {
            per_type: vec![EvalRow {
                family: ConstraintFamily::Occurrence,
                query_type: "(p,(e))".into(),
                summary: MetricSummary { n: 10, hit1: mrr / 2.0, hit3: mrr, mrr },
            }],
            per_family: vec![(
                ConstraintFamily::Occurrence,
                MetricSummary { n: 10, hit1: mrr / 2.0, hit3: mrr, mrr },
            )],
            overall: MetricSummary { n: 10, hit1: mrr / 2.0, hit3: mrr, mrr },
            skipped: 2,
        };
        let mean = mean_results(&[row(0.2), row(0.4), row(0.6)]);
        assert!((mean.overall.mrr - 0.4).abs() < 1e-12);
        assert!((mean.per_type[0].summary.hit1 - 0.2).abs() < 1e-12);
        assert_eq!(mean.overall.n, 10);
    }

    #[test]
    fn grid_mode_pins_hyperparameters() {
        let mut cfg = TrainConfig::desk(0);
        cfg.grid_mode = true;
        cfg.lr = 0.001;
        cfg.batch_size = 128;
        assert!(cfg.validate().is_ok());
        cfg.lr = 0.003;
        assert!(cfg.validate().is_err());
        cfg.lr = 0.001;
        cfg.batch_size = 100;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn paper_preset_uses_three_hundred_dimensions() {
        assert_eq!(TrainConfig::paper(0).d, 300);
        assert_eq!(TrainConfig::desk(0).d, 64);
    }

    proptest! {
        #[test]
        fn metric_orderings_hold(ranks in proptest::collection::vec(1usize..200, 1..40)) {
            let h1 = hits_at_k(&ranks, 1);
            let h3 = hits_at_k(&ranks, 3);
            let m = mrr(&ranks);
            prop_assert!(h1 <= m + 1e-12);
            // Ranks within 3 contribute at most 1 to MRR, ranks past 3 at most 1/4.
            prop_assert!(m <= h3 + (1.0 - h3) / 4.0 + 1e-12);
            prop_assert!(h1 <= h3);
            prop_assert!((0.0..=1.0).contains(&h1));
            prop_assert!((0.0..=1.0).contains(&h3));
            prop_assert!((0.0..=1.0).contains(&m));
            // Hit@K grows to 1 as K covers the largest rank.
            let max = *ranks.iter().max().unwrap();
            prop_assert_eq!(hits_at_k(&ranks, max), 1.0);
        }
    }
}
