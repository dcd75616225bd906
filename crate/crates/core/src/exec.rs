//! Symbolic execution of grounded queries: answer sets, groundings of the
//! existential variables, and reasoning-chain vertices.
//!
//! Projection follows graph-edge direction (head to tail): for a set `A`,
//! the `r`-projection is every vertex some member of `A` reaches over an
//! `r`-edge. Intersection children all take the value of the intersection
//! node itself, so a query's variables are the intersection-merged value
//! slots of its internal nodes, labeled `V_1..V_k` by post-order with the
//! root labeled `V_?`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::kg::{KnowledgeGraph, RelationType, VertexId};
use crate::query::GroundedNode;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("vertex {0} is not an answer of the query")]
    NotAnAnswer(VertexId),
    #[error("empty grounding set")]
    EmptyGroundingSet,
    #[error("grounding does not cover variable {0}")]
    UncoveredVariable(VarLabel),
}

/// A query variable: one of the merged value slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarLabel {
    /// `V_1 .. V_k`, numbered by post-order of the slot's first node.
    Internal(u32),
    /// The answer variable `V_?`.
    Target,
}

impl fmt::Display for VarLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarLabel::Internal(i) => write!(f, "V_{}", i + 1),
            VarLabel::Target => write!(f, "V_?"),
        }
    }
}

/// Assignment of concrete eventualities to every query variable.
pub type Grounding = BTreeMap<VarLabel, VertexId>;

/// Groundings found for one answer, with a truncation marker when the
/// enumeration cap was hit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundingSet {
    pub groundings: Vec<Grounding>,
    pub truncated: bool,
}

/// Default cap on groundings enumerated per answer; bounds worst-case
/// joins on dense hubs. Truncation is surfaced, never silent.
pub const DEFAULT_GROUNDING_CAP: usize = 10_000;

/// One computational atomic instantiated by a grounding:
/// `rel(head, tail)` with both arguments concrete.
pub type InstancedAtomic = (VertexId, RelationType, VertexId);

enum IxKind {
    Anchor(VertexId),
    Proj(RelationType, usize),
    Inter(Vec<usize>),
}

/// Post-order indexed view of a grounded query plus its value-slot
/// structure. Built once, shared by enumeration and constraint derivation.
pub struct IndexedQuery {
    nodes: Vec<IxKind>,
    root: usize,
    slot_of: Vec<usize>,
    var_of_slot: BTreeMap<usize, VarLabel>,
    const_of_slot: BTreeMap<usize, VertexId>,
}

impl IndexedQuery {
    pub fn of(query: &GroundedNode) -> Self {
        fn walk(node: &GroundedNode, nodes: &mut Vec<IxKind>) -> usize {
            let kind = match node {
                GroundedNode::Anchor(v) => IxKind::Anchor(*v),
                GroundedNode::Proj(rel, child) => IxKind::Proj(*rel, walk(child, nodes)),
                GroundedNode::Inter(children) => {
                    IxKind::Inter(children.iter().map(|c| walk(c, nodes)).collect())
                }
            };
            nodes.push(kind);
            nodes.len() - 1
        }
        let mut nodes = Vec::new();
        let root = walk(query, &mut nodes);
        let n = nodes.len();

        // Union-find: an intersection shares its slot with every child;
        // the smaller post-order index stays representative.
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while parent[r] != r {
                r = parent[r];
            }
            let mut cur = x;
            while parent[cur] != r {
                let next = parent[cur];
                parent[cur] = r;
                cur = next;
            }
            r
        }
        for (i, kind) in nodes.iter().enumerate() {
            if let IxKind::Inter(children) = kind {
                for &c in children {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, c));
                    if a != b {
                        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                        parent[hi] = lo;
                    }
                }
            }
        }
        let slot_of: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();

        let mut const_of_slot = BTreeMap::new();
        for (i, kind) in nodes.iter().enumerate() {
            if let IxKind::Anchor(v) = kind {
                const_of_slot.entry(slot_of[i]).or_insert(*v);
            }
        }

        let root_slot = slot_of[root];
        let mut var_of_slot = BTreeMap::new();
        let mut next = 0u32;
        for slot in slot_of.iter().copied().collect::<BTreeSet<_>>() {
            if slot == root_slot {
                var_of_slot.insert(slot, VarLabel::Target);
            } else if !const_of_slot.contains_key(&slot) {
                var_of_slot.insert(slot, VarLabel::Internal(next));
                next += 1;
            }
        }

        IndexedQuery { nodes, root, slot_of, var_of_slot, const_of_slot }
    }

    pub fn variables(&self) -> impl Iterator<Item = VarLabel> + '_ {
        self.var_of_slot.values().copied()
    }

    /// The anchor pinning the target variable, when the root slot is
    /// constant (bare-anchor queries or anchors directly under the root
    /// intersection).
    pub fn target_constant(&self) -> Option<VertexId> {
        self.const_of_slot.get(&self.slot_of[self.root]).copied()
    }

    fn value_of(&self, idx: usize, grounding: &Grounding) -> Result<VertexId, ExecError> {
        if let IxKind::Anchor(v) = self.nodes[idx] {
            return Ok(v);
        }
        let slot = self.slot_of[idx];
        if let Some(&label) = self.var_of_slot.get(&slot) {
            return grounding
                .get(&label)
                .copied()
                .ok_or(ExecError::UncoveredVariable(label));
        }
        Ok(self.const_of_slot[&slot])
    }

    /// The computational atomics instantiated by `grounding`: one
    /// `rel(head, tail)` per projection node.
    pub fn instanced_atomics(
        &self,
        grounding: &Grounding,
    ) -> Result<Vec<InstancedAtomic>, ExecError> {
        let mut out = Vec::new();
        for (i, kind) in self.nodes.iter().enumerate() {
            if let IxKind::Proj(rel, child) = kind {
                let head = self.value_of(*child, grounding)?;
                let tail = self.value_of(i, grounding)?;
                out.push((head, *rel, tail));
            }
        }
        Ok(out)
    }
}

/// Evaluate the query bottom-up: anchors are singletons, projections walk
/// successors, intersections meet their children (smallest child first).
pub fn answer_set(g: &KnowledgeGraph, query: &GroundedNode) -> BTreeSet<VertexId> {
    match query {
        GroundedNode::Anchor(v) => std::iter::once(*v).collect(),
        GroundedNode::Proj(rel, child) => {
            let base = answer_set(g, child);
            let mut out = BTreeSet::new();
            for v in base {
                if let Ok(succ) = g.successors(v, *rel) {
                    out.extend(succ.iter().copied());
                }
            }
            out
        }
        GroundedNode::Inter(children) => {
            let mut sets: Vec<BTreeSet<VertexId>> =
                children.iter().map(|c| answer_set(g, c)).collect();
            sets.sort_by_key(|s| s.len());
            let mut iter = sets.into_iter();
            let first = iter.next().unwrap_or_default();
            iter.fold(first, |acc, s| acc.intersection(&s).copied().collect())
        }
    }
}

/// Record `value` in the slot of node `idx` (if that slot is a variable),
/// run `f`, then restore the previous binding.
fn with_slot(
    ix: &IndexedQuery,
    idx: usize,
    value: VertexId,
    current: &mut Grounding,
    f: &mut dyn FnMut(&mut Grounding) -> bool,
) -> bool {
    let slot = ix.slot_of[idx];
    if let Some(&label) = ix.var_of_slot.get(&slot) {
        let prev = current.insert(label, value);
        let ok = f(current);
        match prev {
            Some(p) => {
                current.insert(label, p);
            }
            None => {
                current.remove(&label);
            }
        }
        ok
    } else {
        f(current)
    }
}

/// Enumerate assignments of the subtree at `idx` taking `value`; calls
/// `emit` once per complete subtree assignment. Returns false when `emit`
/// asked to stop.
fn enum_assign(
    g: &KnowledgeGraph,
    ix: &IndexedQuery,
    idx: usize,
    value: VertexId,
    current: &mut Grounding,
    emit: &mut dyn FnMut(&mut Grounding) -> bool,
) -> bool {
    match &ix.nodes[idx] {
        IxKind::Anchor(v) => {
            if *v != value {
                return true;
            }
            with_slot(ix, idx, value, current, emit)
        }
        IxKind::Proj(rel, child) => {
            let preds: Vec<VertexId> = g
                .predecessors(value, *rel)
                .map_or_else(|_| Vec::new(), |p| p.to_vec());
            for u in preds {
                let cont = enum_assign(g, ix, *child, u, current, &mut |cur| {
                    with_slot(ix, idx, value, cur, emit)
                });
                if !cont {
                    return false;
                }
            }
            true
        }
        IxKind::Inter(children) => enum_inter(g, ix, children, 0, idx, value, current, emit),
    }
}

#[allow(clippy::too_many_arguments)]
fn enum_inter(
    g: &KnowledgeGraph,
    ix: &IndexedQuery,
    children: &[usize],
    k: usize,
    inter_idx: usize,
    value: VertexId,
    current: &mut Grounding,
    emit: &mut dyn FnMut(&mut Grounding) -> bool,
) -> bool {
    if k == children.len() {
        return with_slot(ix, inter_idx, value, current, emit);
    }
    enum_assign(g, ix, children[k], value, current, &mut |cur| {
        enum_inter(g, ix, children, k + 1, inter_idx, value, cur, emit)
    })
}

/// Enumerate up to `cap` variable assignments that place `answer` at the
/// target variable, each realized edge by edge in the graph.
pub fn enumerate_groundings(
    g: &KnowledgeGraph,
    query: &GroundedNode,
    answer: VertexId,
    cap: usize,
) -> Result<GroundingSet, ExecError> {
    if !answer_set(g, query).contains(&answer) {
        return Err(ExecError::NotAnAnswer(answer));
    }
    let ix = IndexedQuery::of(query);
    let mut out: Vec<Grounding> = Vec::new();
    let mut truncated = false;
    let mut current = Grounding::new();
    enum_assign(g, &ix, ix.root, answer, &mut current, &mut |cur| {
        if out.len() >= cap {
            truncated = true;
            return false;
        }
        out.push(cur.clone());
        true
    });
    Ok(GroundingSet { groundings: out, truncated })
}

/// Vertices on the reasoning chain: the query's anchors plus every vertex
/// assigned to a variable in any grounding of the set.
pub fn chain_vertices(
    gs: &GroundingSet,
    query: &GroundedNode,
) -> Result<BTreeSet<VertexId>, ExecError> {
    if gs.groundings.is_empty() {
        return Err(ExecError::EmptyGroundingSet);
    }
    let mut out: BTreeSet<VertexId> = query.anchors().into_iter().collect();
    for g in &gs.groundings {
        out.extend(g.values().copied());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::RelationType;
    use crate::query::GroundedNode as N;
    use proptest::prelude::*;

    fn fixture() -> KnowledgeGraph {
        KnowledgeGraph::parse_tsv(include_str!("../../../fixtures/figure_example.tsv")).unwrap()
    }

    fn fixture_query(kg: &KnowledgeGraph) -> GroundedNode {
        N::parse(
            "(p,Reason,(i,(p,Succession,(e,PersonX complains)),(p,Succession,(e,PersonX leaves))))",
            kg,
        )
        .unwrap()
    }

    #[test]
    fn fixture_answer_set_has_four_candidates() {
        let kg = fixture();
        let q = fixture_query(&kg);
        let answers: Vec<&str> = answer_set(&kg, &q).iter().map(|&v| kg.text(v)).collect();
        assert_eq!(
            answers,
            vec![
                "Staff is new",
                "PersonY adds ketchup",
                "PersonY adds soy sauce",
                "PersonY adds vinegar"
            ]
        );
    }

    #[test]
    fn disjoint_intersection_is_empty() {
        let kg = fixture();
        let complains = kg.vertex_by_text("PersonX complains").unwrap();
        let staff = kg.vertex_by_text("Staff is new").unwrap();
        let q = N::Inter(vec![N::Anchor(complains), N::Anchor(staff)]);
        assert!(answer_set(&kg, &q).is_empty());
    }

    #[test]
    fn projection_over_empty_child_is_empty() {
        let kg = fixture();
        let complains = kg.vertex_by_text("PersonX complains").unwrap();
        let staff = kg.vertex_by_text("Staff is new").unwrap();
        let empty = N::Inter(vec![N::Anchor(complains), N::Anchor(staff)]);
        let q = N::Proj(RelationType::Reason, Box::new(empty));
        assert!(answer_set(&kg, &q).is_empty());
    }

    #[test]
    fn ketchup_has_exactly_one_grounding() {
        let kg = fixture();
        let q = fixture_query(&kg);
        let ketchup = kg.vertex_by_text("PersonY adds ketchup").unwrap();
        let food = kg.vertex_by_text("Food is bad").unwrap();
        let gs = enumerate_groundings(&kg, &q, ketchup, DEFAULT_GROUNDING_CAP).unwrap();
        assert!(!gs.truncated);
        assert_eq!(gs.groundings.len(), 1);
        let g = &gs.groundings[0];
        assert_eq!(g.len(), 2);
        assert_eq!(g[&VarLabel::Internal(0)], food);
        assert_eq!(g[&VarLabel::Target], ketchup);
    }

    #[test]
    fn bare_anchor_query_grounds_trivially() {
        let kg = fixture();
        let food = kg.vertex_by_text("Food is bad").unwrap();
        let q = N::Anchor(food);
        let gs = enumerate_groundings(&kg, &q, food, 10).unwrap();
        assert_eq!(gs.groundings.len(), 1);
        assert_eq!(gs.groundings[0].len(), 1);
        assert_eq!(gs.groundings[0][&VarLabel::Target], food);
    }

    #[test]
    fn cap_truncates_and_flags() {
        // Two parallel 2-step paths from a to c.
        let kg = KnowledgeGraph::parse_tsv(
            "a\tReason\tb1\na\tReason\tb2\nb1\tResult\tc\nb2\tResult\tc\n",
        )
        .unwrap();
        let q = N::parse("(p,Result,(p,Reason,(e,a)))", &kg).unwrap();
        let c = kg.vertex_by_text("c").unwrap();
        let full = enumerate_groundings(&kg, &q, c, 10).unwrap();
        assert_eq!(full.groundings.len(), 2);
        assert!(!full.truncated);
        let capped = enumerate_groundings(&kg, &q, c, 1).unwrap();
        assert_eq!(capped.groundings.len(), 1);
        assert!(capped.truncated);
    }

    #[test]
    fn non_answer_is_an_error() {
        let kg = fixture();
        let q = fixture_query(&kg);
        let complains = kg.vertex_by_text("PersonX complains").unwrap();
        assert!(matches!(
            enumerate_groundings(&kg, &q, complains, 10),
            Err(ExecError::NotAnAnswer(_))
        ));
    }

    #[test]
    fn chain_vertices_of_ketchup() {
        let kg = fixture();
        let q = fixture_query(&kg);
        let ketchup = kg.vertex_by_text("PersonY adds ketchup").unwrap();
        let gs = enumerate_groundings(&kg, &q, ketchup, 100).unwrap();
        let chain: Vec<&str> = chain_vertices(&gs, &q)
            .unwrap()
            .iter()
            .map(|&v| kg.text(v))
            .collect();
        assert_eq!(
            chain,
            vec![
                "PersonX complains",
                "Food is bad",
                "PersonX leaves",
                "PersonY adds ketchup"
            ]
        );
    }

    #[test]
    fn chain_includes_anchor_and_answer_for_single_projection() {
        let kg = fixture();
        let q = N::parse("(p,Reason,(e,Food is bad))", &kg).unwrap();
        let soy = kg.vertex_by_text("PersonY adds soy sauce").unwrap();
        let gs = enumerate_groundings(&kg, &q, soy, 100).unwrap();
        let chain = chain_vertices(&gs, &q).unwrap();
        assert!(chain.contains(&kg.vertex_by_text("Food is bad").unwrap()));
        assert!(chain.contains(&soy));
        assert_eq!(chain.len(), 2);
    }

    #[test]
    fn empty_grounding_set_is_an_error() {
        let kg = fixture();
        let q = fixture_query(&kg);
        let gs = GroundingSet { groundings: vec![], truncated: false };
        assert!(chain_vertices(&gs, &q).is_err());
    }

    #[test]
    fn instanced_atomics_of_fixture_grounding() {
        let kg = fixture();
        let q = fixture_query(&kg);
        let ketchup = kg.vertex_by_text("PersonY adds ketchup").unwrap();
        let gs = enumerate_groundings(&kg, &q, ketchup, 100).unwrap();
        let ix = IndexedQuery::of(&q);
        let atomics = ix.instanced_atomics(&gs.groundings[0]).unwrap();
        let food = kg.vertex_by_text("Food is bad").unwrap();
        let complains = kg.vertex_by_text("PersonX complains").unwrap();
        let leaves = kg.vertex_by_text("PersonX leaves").unwrap();
        assert_eq!(atomics.len(), 3);
        assert!(atomics.contains(&(complains, RelationType::Succession, food)));
        assert!(atomics.contains(&(leaves, RelationType::Succession, food)));
        assert!(atomics.contains(&(food, RelationType::Reason, ketchup)));
    }

    #[test]
    fn uncovered_variable_is_an_error() {
        let kg = fixture();
        let q = fixture_query(&kg);
        let ix = IndexedQuery::of(&q);
        let empty = Grounding::new();
        assert!(matches!(
            ix.instanced_atomics(&empty),
            Err(ExecError::UncoveredVariable(_))
        ));
    }

    #[test]
    fn sampled_chain_query_walks_two_steps() {
        let kg = KnowledgeGraph::parse_tsv("a\tReason\tb\nb\tResult\tc\n").unwrap();
        let q = N::parse("(p,Result,(p,Reason,(e,a)))", &kg).unwrap();
        let c = kg.vertex_by_text("c").unwrap();
        let answers = answer_set(&kg, &q);
        assert_eq!(answers.into_iter().collect::<Vec<_>>(), vec![c]);
    }

    /// Brute-force evaluator: enumerate assignments over all variable
    /// slots and keep target values where every projection atomic is an
    /// edge. Independent of the recursive evaluator above.
    fn brute_force_answers(g: &KnowledgeGraph, q: &GroundedNode) -> BTreeSet<VertexId> {
        let ix = IndexedQuery::of(q);
        let vars: Vec<VarLabel> = ix.variables().collect();
        let n = g.vertex_count() as u32;
        let mut out = BTreeSet::new();
        let mut assignment = Grounding::new();
        fn rec(
            g: &KnowledgeGraph,
            ix: &IndexedQuery,
            vars: &[VarLabel],
            k: usize,
            n: u32,
            assignment: &mut Grounding,
            out: &mut BTreeSet<VertexId>,
        ) {
            if k == vars.len() {
                if let Some(c) = ix.target_constant() {
                    if assignment.get(&VarLabel::Target) != Some(&c) {
                        return;
                    }
                }
                let atomics = ix.instanced_atomics(assignment).unwrap();
                if atomics.iter().all(|&(h, r, t)| g.has_edge(h, r, t)) {
                    out.insert(assignment[&VarLabel::Target]);
                }
                return;
            }
            for v in 0..n {
                assignment.insert(vars[k], VertexId(v));
                rec(g, ix, vars, k + 1, n, assignment, out);
            }
            assignment.remove(&vars[k]);
        }
        rec(g, &ix, &vars, 0, n, &mut assignment, &mut out);
        out
    }

    fn sample_shapes(g: &KnowledgeGraph, seed: u64) -> Vec<GroundedNode> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = g.vertex_count() as u32;
        let anchor = |rng: &mut rand_chacha::ChaCha8Rng| N::Anchor(VertexId(rng.random_range(0..n)));
        let rel = |rng: &mut rand_chacha::ChaCha8Rng| {
            RelationType::ALL[rng.random_range(0..RelationType::COUNT)]
        };
        let a1 = anchor(&mut rng);
        let a2 = anchor(&mut rng);
        let a3 = anchor(&mut rng);
        vec![
            N::Proj(rel(&mut rng), Box::new(a1.clone())),
            N::Proj(
                rel(&mut rng),
                Box::new(N::Proj(rel(&mut rng), Box::new(a1.clone()))),
            ),
            N::Inter(vec![
                N::Proj(rel(&mut rng), Box::new(a1.clone())),
                N::Proj(rel(&mut rng), Box::new(a2.clone())),
            ]),
            N::Proj(
                rel(&mut rng),
                Box::new(N::Inter(vec![
                    N::Proj(rel(&mut rng), Box::new(a2.clone())),
                    N::Proj(rel(&mut rng), Box::new(a3.clone())),
                ])),
            ),
            N::Inter(vec![
                N::Proj(
                    rel(&mut rng),
                    Box::new(N::Proj(rel(&mut rng), Box::new(a2))),
                ),
                N::Proj(rel(&mut rng), Box::new(a3)),
            ]),
        ]
    }

    proptest! {
        #[test]
        fn matches_brute_force_on_small_graphs(seed in 0u64..150) {
            let g = KnowledgeGraph::synthetic(12, 70, seed);
            for q in sample_shapes(&g, seed) {
                let fast = answer_set(&g, &q);
                let slow = brute_force_answers(&g, &q);
                prop_assert_eq!(fast, slow);
            }
        }

        #[test]
        fn every_answer_has_a_grounding(seed in 0u64..100) {
            let g = KnowledgeGraph::synthetic(15, 80, seed);
            for q in sample_shapes(&g, seed) {
                for &a in answer_set(&g, &q).iter().take(5) {
                    let gs = enumerate_groundings(&g, &q, a, 1000).unwrap();
                    prop_assert!(!gs.groundings.is_empty());
                    // No duplicates.
                    let uniq: BTreeSet<_> = gs.groundings.iter().collect();
                    prop_assert_eq!(uniq.len(), gs.groundings.len());
                }
            }
        }

        #[test]
        fn enumeration_is_sound_and_complete(seed in 0u64..80) {
            // Brute force: every full assignment of the variable slots
            // whose instantiated atomics are all edges, with the target
            // pinned to the answer.
            let g = KnowledgeGraph::synthetic(10, 60, seed);
            for q in sample_shapes(&g, seed) {
                let ix = IndexedQuery::of(&q);
                let vars: Vec<VarLabel> = ix.variables().collect();
                for &a in answer_set(&g, &q).iter().take(3) {
                    let fast: BTreeSet<Grounding> = enumerate_groundings(&g, &q, a, 100_000)
                        .unwrap()
                        .groundings
                        .into_iter()
                        .collect();
                    let mut slow: BTreeSet<Grounding> = BTreeSet::new();
                    let n = g.vertex_count() as u32;
                    let mut assignment = Grounding::new();
                    fn rec(
                        g: &KnowledgeGraph,
                        ix: &IndexedQuery,
                        vars: &[VarLabel],
                        k: usize,
                        n: u32,
                        answer: VertexId,
                        assignment: &mut Grounding,
                        out: &mut BTreeSet<Grounding>,
                    ) {
                        if k == vars.len() {
                            if assignment.get(&VarLabel::Target) != Some(&answer) {
                                return;
                            }
                            if let Some(c) = ix.target_constant() {
                                if c != answer {
                                    return;
                                }
                            }
                            let atomics = ix.instanced_atomics(assignment).unwrap();
                            if atomics.iter().all(|&(h, r, t)| g.has_edge(h, r, t)) {
                                out.insert(assignment.clone());
                            }
                            return;
                        }
                        for v in 0..n {
                            assignment.insert(vars[k], VertexId(v));
                            rec(g, ix, vars, k + 1, n, answer, assignment, out);
                        }
                        assignment.remove(&vars[k]);
                    }
                    rec(&g, &ix, &vars, 0, n, a, &mut assignment, &mut slow);
                    prop_assert_eq!(&fast, &slow, "answer {} of {:?}", a, q.erase().to_string());
                }
            }
        }

        #[test]
        fn monotone_under_cumulative_splits(seed in 0u64..60) {
            let g = KnowledgeGraph::synthetic(20, 120, seed);
            if g.edge_count() >= 3 {
                let split = crate::kg::split_edges(&g, (0.8, 0.1, 0.1), seed).unwrap();
                for q in sample_shapes(&g, seed) {
                    let train = answer_set(&split.train, &q);
                    let test = answer_set(&split.test, &q);
                    prop_assert!(train.is_subset(&test));
                }
            }
        }
    }
}
