//! Implicit constraint derivation and native answer proving.
//!
//! Every discourse relation between two concrete eventualities induces an
//! occurrence formula over η-variables and possibly a temporal ordering
//! over τ-timestamps. An answer to a query stands if at least one of its
//! groundings yields a constraint set that is both occurrence-satisfiable
//! and temporally feasible.
//!
//! Two rows are worth flagging: `Condition` is implemented as
//! η(V1) → η(V2) even though its gloss ("If V2 occurs, V1") reads like the
//! converse, and `ChosenAlternative` as η(V1) ∧ ¬η(V2); both follow the
//! constraint table rather than the surrounding prose.

pub mod occurrence;
pub mod temporal;

use std::collections::BTreeSet;

use thiserror::Error;

pub use occurrence::{
    oracle_sat, sat_occurrence, solve_occurrence, Formula, SatError, SatModel, DEFAULT_VAR_LIMIT,
};
pub use temporal::{
    feasible_temporal, oracle_temporal, temporal_order, TemporalConstraint, TemporalError,
};

use crate::exec::{enumerate_groundings, Grounding, IndexedQuery};
use crate::kg::{KnowledgeGraph, RelationType, VertexId};
use crate::query::{GroundedNode, InfoAtomic};

#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error(transparent)]
    Sat(#[from] SatError),
    #[error(transparent)]
    Exec(#[from] crate::exec::ExecError),
}

/// The occurrence and temporal constraints collected from a set of
/// grounded atomics.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub occ: Vec<Formula>,
    pub temp: Vec<TemporalConstraint>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        ConstraintSet { occ: Vec::new(), temp: Vec::new() }
    }

    pub fn push_atomic(&mut self, head: VertexId, rel: RelationType, tail: VertexId) {
        let (occ, temp) = derive(head, rel, tail);
        self.occ.push(occ);
        self.temp.extend(temp);
    }

    /// Distinct η-variables across the occurrence conjunction.
    pub fn occurrence_vars(&self) -> BTreeSet<VertexId> {
        let mut out = BTreeSet::new();
        for f in &self.occ {
            out.extend(f.vars());
        }
        out
    }
}

impl Default for ConstraintSet {
    fn default() -> Self {
        Self::new()
    }
}

/// The implicit constraints of one grounded atomic `rel(head, tail)`.
///
/// Occurrence: most relations assert both arguments occur; `Reason`,
/// `Result` add the causal implication, `Condition` only the implication,
/// `Restatement` equivalence, `Alternative` disjunction,
/// `ChosenAlternative` denies the tail, and `Exception` denies the head
/// with the fallback implication. Temporal: the three temporal relations
/// order their arguments directly, and causation implies precedence for
/// `Reason`, `Result`, and `Condition`.
pub fn derive(
    head: VertexId,
    rel: RelationType,
    tail: VertexId,
) -> (Formula, Vec<TemporalConstraint>) {
    use Formula as F;
    let h = || F::var(head);
    let t = || F::var(tail);
    let both = || F::and(h(), t());
    match rel {
        RelationType::Precedence => (both(), vec![TemporalConstraint::before(head, tail)]),
        RelationType::Succession => (both(), vec![TemporalConstraint::after(head, tail)]),
        RelationType::Synchronous => (both(), vec![TemporalConstraint::same(head, tail)]),
        RelationType::Reason => (
            F::and(both(), F::implies(t(), h())),
            vec![TemporalConstraint::after(head, tail)],
        ),
        RelationType::Result => (
            F::and(both(), F::implies(h(), t())),
            vec![TemporalConstraint::before(head, tail)],
        ),
        RelationType::Condition => (
            F::implies(h(), t()),
            vec![TemporalConstraint::after(head, tail)],
        ),
        RelationType::Concession => (both(), vec![]),
        RelationType::Contrast => (both(), vec![]),
        RelationType::Conjunction => (both(), vec![]),
        RelationType::Instantiation => (both(), vec![]),
        RelationType::Restatement => (F::iff(h(), t()), vec![]),
        RelationType::Alternative => (F::or(h(), t()), vec![]),
        RelationType::ChosenAlternative => (F::and(h(), F::not(t())), vec![]),
        RelationType::Exception => (
            F::and(F::and(F::not(h()), t()), F::implies(F::not(t()), h())),
            vec![],
        ),
    }
}

/// Render the fourteen-row constraint table with `V1`/`V2` argument
/// names, one `relation<TAB>occurrence<TAB>temporal` line per relation
/// ("-" when a relation induces no temporal constraint). Pinned byte-exact
/// against the shipped golden file.
pub fn constraint_table() -> String {
    let v1 = VertexId(0);
    let v2 = VertexId(1);
    let name = |v: VertexId| if v == v1 { "V1".to_string() } else { "V2".to_string() };
    let mut out = String::new();
    for rel in RelationType::ALL {
        let (occ, temp) = derive(v1, rel, v2);
        let temp_str = if temp.is_empty() {
            "-".to_string()
        } else {
            temp.iter()
                .map(|c| c.display(name))
                .collect::<Vec<_>>()
                .join(", ")
        };
        out.push_str(&format!("{}\t{}\t{}\n", rel.name(), occ.display(name), temp_str));
    }
    out
}

/// Constraints of a query under one grounding: every computational atomic
/// instantiated by the assignment, then every informational atomic.
pub fn derive_for_grounding(
    query: &GroundedNode,
    info: &[InfoAtomic],
    grounding: &Grounding,
) -> Result<ConstraintSet, ConstraintError> {
    let ix = IndexedQuery::of(query);
    derive_for_grounding_ix(&ix, info, grounding)
}

fn derive_for_grounding_ix(
    ix: &IndexedQuery,
    info: &[InfoAtomic],
    grounding: &Grounding,
) -> Result<ConstraintSet, ConstraintError> {
    let mut set = ConstraintSet::new();
    for (head, rel, tail) in ix.instanced_atomics(grounding)? {
        set.push_atomic(head, rel, tail);
    }
    for a in info {
        set.push_atomic(a.head, a.rel, a.tail);
    }
    Ok(set)
}

/// Outcome of proving one candidate answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerdictStatus {
    Valid,
    OccurrenceContradiction,
    TemporalContradiction,
}

impl std::fmt::Display for VerdictStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VerdictStatus::Valid => "Valid",
            VerdictStatus::OccurrenceContradiction => "OccurrenceContradiction",
            VerdictStatus::TemporalContradiction => "TemporalContradiction",
        })
    }
}

/// Per-answer verdict. `witness` is a grounding whose constraints are
/// satisfiable in both families (present iff `Valid`);
/// `possibly_incomplete` marks that grounding enumeration was truncated,
/// so a contradiction verdict could be an artifact of the cap.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub witness: Option<Grounding>,
    pub possibly_incomplete: bool,
}

/// Tuning knobs for answer checking.
#[derive(Debug, Clone, Copy)]
pub struct CheckConfig {
    pub grounding_cap: usize,
    pub var_limit: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            grounding_cap: crate::exec::DEFAULT_GROUNDING_CAP,
            var_limit: DEFAULT_VAR_LIMIT,
        }
    }
}

/// Prove one candidate: Valid iff some grounding passes both the
/// occurrence and the temporal solver. Otherwise the verdict names the
/// family that failed on every grounding, occurrence taking precedence
/// when both (or neither single) family fails universally.
pub fn check_answer(
    kg: &KnowledgeGraph,
    query: &GroundedNode,
    info: &[InfoAtomic],
    answer: VertexId,
    cfg: &CheckConfig,
) -> Result<Verdict, ConstraintError> {
    let gs = enumerate_groundings(kg, query, answer, cfg.grounding_cap)?;
    let ix = IndexedQuery::of(query);
    let mut all_occ_fail = true;
    let mut all_temp_fail = true;
    for grounding in &gs.groundings {
        let set = derive_for_grounding_ix(&ix, info, grounding)?;
        let occ_ok = sat_occurrence(&set.occ, cfg.var_limit)?;
        let temp_ok = feasible_temporal(&set.temp);
        if occ_ok && temp_ok {
            return Ok(Verdict {
                status: VerdictStatus::Valid,
                witness: Some(grounding.clone()),
                possibly_incomplete: false,
            });
        }
        all_occ_fail &= !occ_ok;
        all_temp_fail &= !temp_ok;
    }
    let status = if all_occ_fail {
        VerdictStatus::OccurrenceContradiction
    } else if all_temp_fail {
        VerdictStatus::TemporalContradiction
    } else {
        // Mixed per-grounding failures; no single family fails everywhere.
        // Occurrence keeps precedence for deterministic bookkeeping.
        VerdictStatus::OccurrenceContradiction
    };
    Ok(Verdict {
        status,
        witness: None,
        possibly_incomplete: gs.truncated,
    })
}
