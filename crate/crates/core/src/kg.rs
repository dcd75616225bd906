//! Eventuality knowledge graph: load, validate, split, and index.
//!
//! Graphs are immutable after construction. Vertices are eventualities
//! ("PersonX complains"), edges carry one of the fourteen discourse
//! relation types. The on-disk format is a UTF-8 TSV with one
//! `head<TAB>relation<TAB>tail` edge per line; `#`-prefixed lines are
//! comments.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("io error reading {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected head<TAB>relation<TAB>tail")]
    MalformedLine { line: usize },
    #[error("line {line}: unknown relation {token}")]
    UnknownRelation { line: usize, token: String },
    #[error("vertex id {id} out of range (|V| = {n})")]
    VertexOutOfRange { id: u32, n: usize },
    #[error("cannot split a graph with {n} edges (need at least 3)")]
    TooFewEdges { n: usize },
    #[error("split ratios must be positive and sum to 1 (got {0}, {1}, {2})")]
    BadRatios(f64, f64, f64),
}

/// Dense handle into a graph's vertex table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub u32);

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An eventuality vertex: events, activities, and states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Eventuality {
    pub id: VertexId,
    pub text: String,
}

/// The fourteen PDTB-derived discourse relation types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelationType {
    Precedence,
    Succession,
    Synchronous,
    Reason,
    Result,
    Condition,
    Concession,
    Contrast,
    Conjunction,
    Instantiation,
    Restatement,
    Alternative,
    ChosenAlternative,
    Exception,
}

impl RelationType {
    pub const ALL: [RelationType; 14] = [
        RelationType::Precedence,
        RelationType::Succession,
        RelationType::Synchronous,
        RelationType::Reason,
        RelationType::Result,
        RelationType::Condition,
        RelationType::Concession,
        RelationType::Contrast,
        RelationType::Conjunction,
        RelationType::Instantiation,
        RelationType::Restatement,
        RelationType::Alternative,
        RelationType::ChosenAlternative,
        RelationType::Exception,
    ];

    pub const COUNT: usize = 14;

    pub fn name(self) -> &'static str {
        match self {
            RelationType::Precedence => "Precedence",
            RelationType::Succession => "Succession",
            RelationType::Synchronous => "Synchronous",
            RelationType::Reason => "Reason",
            RelationType::Result => "Result",
            RelationType::Condition => "Condition",
            RelationType::Concession => "Concession",
            RelationType::Contrast => "Contrast",
            RelationType::Conjunction => "Conjunction",
            RelationType::Instantiation => "Instantiation",
            RelationType::Restatement => "Restatement",
            RelationType::Alternative => "Alternative",
            RelationType::ChosenAlternative => "ChosenAlternative",
            RelationType::Exception => "Exception",
        }
    }

    /// Index into `ALL`; stable, used for embedding tables.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&r| r == self).unwrap()
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|r| r.name() == s)
            .ok_or(())
    }
}

/// A directed edge `rel(head, tail)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub head: VertexId,
    pub rel: RelationType,
    pub tail: VertexId,
}

/// Immutable vertex/edge store with forward and backward adjacency.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    vertices: Vec<Eventuality>,
    edges: Vec<Edge>,
    fwd: HashMap<(VertexId, RelationType), Vec<VertexId>>,
    bwd: HashMap<(VertexId, RelationType), Vec<VertexId>>,
    /// All incoming edges per vertex, in edge order. Drives query sampling.
    incoming: Vec<Vec<(VertexId, RelationType)>>,
    text_index: HashMap<String, VertexId>,
    self_loops: usize,
}

/// Collapse whitespace runs and trim, so vertex identity is stable under
/// formatting noise in the input file.
pub fn normalize_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl KnowledgeGraph {
    /// Build a graph from `(head text, relation, tail text)` triples.
    /// Vertex ids are assigned by first occurrence; duplicate edges are
    /// dropped; self-loops are kept and counted.
    pub fn from_triples<I>(triples: I) -> Self
    where
        I: IntoIterator<Item = (String, RelationType, String)>,
    {
        let mut vertices: Vec<Eventuality> = Vec::new();
        let mut text_index: HashMap<String, VertexId> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut seen = std::collections::HashSet::new();

        let intern = |text: String,
                          vertices: &mut Vec<Eventuality>,
                          text_index: &mut HashMap<String, VertexId>| {
            let text = normalize_text(&text);
            if let Some(&id) = text_index.get(&text) {
                return id;
            }
            let id = VertexId(vertices.len() as u32);
            text_index.insert(text.clone(), id);
            vertices.push(Eventuality { id, text });
            id
        };

        for (head, rel, tail) in triples {
            let h = intern(head, &mut vertices, &mut text_index);
            let t = intern(tail, &mut vertices, &mut text_index);
            let edge = Edge { head: h, rel, tail: t };
            if seen.insert(edge) {
                edges.push(edge);
            }
        }

        Self::assemble(vertices, text_index, edges)
    }

    /// Build a graph sharing an existing vertex table over a subset of edges.
    fn from_parts(vertices: Vec<Eventuality>, edges: Vec<Edge>) -> Self {
        let text_index = vertices
            .iter()
            .map(|v| (v.text.clone(), v.id))
            .collect();
        Self::assemble(vertices, text_index, edges)
    }

    fn assemble(
        vertices: Vec<Eventuality>,
        text_index: HashMap<String, VertexId>,
        edges: Vec<Edge>,
    ) -> Self {
        let mut fwd: HashMap<(VertexId, RelationType), Vec<VertexId>> = HashMap::new();
        let mut bwd: HashMap<(VertexId, RelationType), Vec<VertexId>> = HashMap::new();
        let mut incoming: Vec<Vec<(VertexId, RelationType)>> = vec![Vec::new(); vertices.len()];
        let mut self_loops = 0;

        for e in &edges {
            fwd.entry((e.head, e.rel)).or_default().push(e.tail);
            bwd.entry((e.tail, e.rel)).or_default().push(e.head);
            incoming[e.tail.0 as usize].push((e.head, e.rel));
            if e.head == e.tail {
                self_loops += 1;
            }
        }
        for list in fwd.values_mut().chain(bwd.values_mut()) {
            list.sort_unstable();
            list.dedup();
        }

        KnowledgeGraph {
            vertices,
            edges,
            fwd,
            bwd,
            incoming,
            text_index,
            self_loops,
        }
    }

    /// Load a graph from a TSV edge-list file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, KgError> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|source| KgError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_tsv(&content)
    }

    /// Parse the TSV edge-list format from a string.
    pub fn parse_tsv(content: &str) -> Result<Self, KgError> {
        let mut triples = Vec::new();
        for (i, raw) in content.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = raw.split('\t');
            let (head, rel, tail) = match (parts.next(), parts.next(), parts.next(), parts.next())
            {
                (Some(h), Some(r), Some(t), None)
                    if !h.trim().is_empty() && !t.trim().is_empty() =>
                {
                    (h, r, t)
                }
                _ => return Err(KgError::MalformedLine { line: line_no }),
            };
            let rel: RelationType =
                rel.trim()
                    .parse()
                    .map_err(|()| KgError::UnknownRelation {
                        line: line_no,
                        token: rel.trim().to_string(),
                    })?;
            triples.push((head.to_string(), rel, tail.to_string()));
        }
        Ok(Self::from_triples(triples))
    }

    /// Serialize back to the TSV edge-list format (normalized text,
    /// first-occurrence edge order).
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            out.push_str(self.text(e.head));
            out.push('\t');
            out.push_str(e.rel.name());
            out.push('\t');
            out.push_str(self.text(e.tail));
            out.push('\n');
        }
        out
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[Eventuality] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn self_loop_count(&self) -> usize {
        self.self_loops
    }

    pub fn text(&self, v: VertexId) -> &str {
        &self.vertices[v.0 as usize].text
    }

    /// Look up a vertex by (whitespace-normalized) text.
    pub fn vertex_by_text(&self, text: &str) -> Option<VertexId> {
        self.text_index.get(&normalize_text(text)).copied()
    }

    fn check_vertex(&self, v: VertexId) -> Result<(), KgError> {
        if (v.0 as usize) < self.vertices.len() {
            Ok(())
        } else {
            Err(KgError::VertexOutOfRange {
                id: v.0,
                n: self.vertices.len(),
            })
        }
    }

    /// Sorted, duplicate-free tails of `rel`-edges out of `v`.
    pub fn successors(&self, v: VertexId, rel: RelationType) -> Result<&[VertexId], KgError> {
        self.check_vertex(v)?;
        Ok(self.fwd.get(&(v, rel)).map_or(&[], |s| s.as_slice()))
    }

    /// Sorted, duplicate-free heads of `rel`-edges into `v`.
    pub fn predecessors(&self, v: VertexId, rel: RelationType) -> Result<&[VertexId], KgError> {
        self.check_vertex(v)?;
        Ok(self.bwd.get(&(v, rel)).map_or(&[], |s| s.as_slice()))
    }

    /// All incoming edges of `v` as `(head, rel)` pairs, in edge order.
    pub fn incoming_edges(&self, v: VertexId) -> &[(VertexId, RelationType)] {
        &self.incoming[v.0 as usize]
    }

    /// Whether `rel(head, tail)` is an edge.
    pub fn has_edge(&self, head: VertexId, rel: RelationType, tail: VertexId) -> bool {
        self.fwd
            .get(&(head, rel))
            .is_some_and(|tails| tails.binary_search(&tail).is_ok())
    }

    /// Deterministic random graph for benchmarks and tests: `n` vertices,
    /// up to `m` unique edges over all fourteen relation types, no
    /// self-loops.
    pub fn synthetic(n: usize, m: usize, seed: u64) -> Self {
        assert!(n >= 2, "need at least two vertices");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut triples = Vec::with_capacity(m);
        let mut seen = std::collections::HashSet::new();
        let mut attempts = 0usize;
        while triples.len() < m && attempts < m * 20 {
            attempts += 1;
            let h = rng.random_range(0..n);
            let t = rng.random_range(0..n);
            if h == t {
                continue;
            }
            let rel = RelationType::ALL[rng.random_range(0..RelationType::COUNT)];
            if seen.insert((h, rel, t)) {
                triples.push((format!("e{h}"), rel, format!("e{t}")));
            }
        }
        // Touch every vertex so the table is dense regardless of edges.
        let mut vertices = Vec::with_capacity(n);
        let mut text_index = HashMap::new();
        for i in 0..n {
            let id = VertexId(i as u32);
            let text = format!("e{i}");
            text_index.insert(text.clone(), id);
            vertices.push(Eventuality { id, text });
        }
        let edges = triples
            .iter()
            .map(|(h, rel, t)| Edge {
                head: *text_index.get(h.as_str()).unwrap(),
                rel: *rel,
                tail: *text_index.get(t.as_str()).unwrap(),
            })
            .collect();
        Self::assemble(vertices, text_index, edges)
    }
}

/// Cumulative train/valid/test graphs over a shared vertex set:
/// `train.edges ⊆ valid.edges ⊆ test.edges`.
#[derive(Debug, Clone)]
pub struct GraphSplit {
    pub train: KnowledgeGraph,
    pub valid: KnowledgeGraph,
    pub test: KnowledgeGraph,
}

/// Shuffle edges with a seeded RNG and partition by ratio
/// (largest-remainder rounding), then build cumulative graphs.
pub fn split_edges(
    g: &KnowledgeGraph,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<GraphSplit, KgError> {
    let (r1, r2, r3) = ratios;
    if !(r1 > 0.0 && r2 > 0.0 && r3 > 0.0) || (r1 + r2 + r3 - 1.0).abs() > 1e-9 {
        return Err(KgError::BadRatios(r1, r2, r3));
    }
    let n = g.edge_count();
    if n < 3 {
        return Err(KgError::TooFewEdges { n });
    }

    let counts = largest_remainder(n, &[r1, r2, r3]);

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut bucket = vec![2u8; n];
    for &i in order.iter().take(counts[0]) {
        bucket[i] = 0;
    }
    for &i in order[counts[0]..counts[0] + counts[1]].iter() {
        bucket[i] = 1;
    }

    // Edge order within each graph stays the input order.
    let select = |max_bucket: u8| -> Vec<Edge> {
        g.edges
            .iter()
            .enumerate()
            .filter(|(i, _)| bucket[*i] <= max_bucket)
            .map(|(_, e)| *e)
            .collect()
    };

    Ok(GraphSplit {
        train: KnowledgeGraph::from_parts(g.vertices.clone(), select(0)),
        valid: KnowledgeGraph::from_parts(g.vertices.clone(), select(1)),
        test: KnowledgeGraph::from_parts(g.vertices.clone(), select(2)),
    })
}

/// Apportion `n` items by `ratios`: floor each share, then hand leftover
/// units to the largest fractional remainders (ties to the earlier bucket).
pub fn largest_remainder(n: usize, ratios: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut rema: Vec<(usize, f64)> = exact
        .iter()
        .enumerate()
        .map(|(i, x)| (i, x - x.floor()))
        .collect();
    rema.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..(n - assigned) {
        counts[rema[k % rema.len()].0] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FIXTURE: &str = include_str!("../../../fixtures/figure_example.tsv");

    #[test]
    fn relation_parse_is_total_over_the_fourteen_names() {
        for r in RelationType::ALL {
            assert_eq!(r.name().parse::<RelationType>(), Ok(r));
        }
        assert!("FooRel".parse::<RelationType>().is_err());
        assert!("precedence".parse::<RelationType>().is_err());
    }

    #[test]
    fn loads_figure_fixture() {
        let g = KnowledgeGraph::parse_tsv(FIXTURE).unwrap();
        // Derived by counting the shipped fixture: 8 eventualities, 10 edges
        // (8 computational plus the 2 constraint edges of the worked example).
        assert_eq!(g.vertex_count(), 8);
        assert_eq!(g.edge_count(), 10);
        assert_eq!(g.self_loop_count(), 0);
    }

    #[test]
    fn empty_file_gives_empty_graph() {
        let g = KnowledgeGraph::parse_tsv("").unwrap();
        assert_eq!(g.vertex_count(), 0);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn unknown_relation_is_rejected_by_name() {
        let err = KnowledgeGraph::parse_tsv("a\tFooRel\tb\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unknown relation FooRel"), "{msg}");
        assert!(msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = KnowledgeGraph::parse_tsv("a\tReason\tb\nbroken line\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let g = KnowledgeGraph::parse_tsv("# header\n\na\tReason\tb\n").unwrap();
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn ids_assigned_by_first_occurrence_and_text_normalized() {
        let g = KnowledgeGraph::parse_tsv("x  y\tReason\tz\nx y\tResult\tz\n").unwrap();
        assert_eq!(g.vertex_count(), 2);
        assert_eq!(g.vertex_by_text("x   y"), Some(VertexId(0)));
        assert_eq!(g.text(VertexId(0)), "x y");
    }

    #[test]
    fn duplicate_edges_dropped_self_loops_counted() {
        let g = KnowledgeGraph::parse_tsv("a\tReason\tb\na\tReason\tb\na\tReason\ta\n").unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.self_loop_count(), 1);
    }

    #[test]
    fn fixture_successors_and_predecessors() {
        let g = KnowledgeGraph::parse_tsv(FIXTURE).unwrap();
        let food = g.vertex_by_text("Food is bad").unwrap();
        let succ: Vec<&str> = g
            .successors(food, RelationType::Reason)
            .unwrap()
            .iter()
            .map(|&v| g.text(v))
            .collect();
        assert_eq!(
            succ,
            vec![
                "PersonY adds ketchup",
                "PersonY adds soy sauce",
                "PersonY adds vinegar"
            ]
        );

        let soy = g.vertex_by_text("PersonY adds soy sauce").unwrap();
        let preds: Vec<&str> = g
            .predecessors(soy, RelationType::Reason)
            .unwrap()
            .iter()
            .map(|&v| g.text(v))
            .collect();
        assert_eq!(preds, vec!["Food is bad"]);

        // No outgoing Reason edges from an anchor vertex.
        let complains = g.vertex_by_text("PersonX complains").unwrap();
        assert!(g.successors(complains, RelationType::Reason).unwrap().is_empty());
    }

    #[test]
    fn out_of_range_vertex_is_an_error() {
        let g = KnowledgeGraph::parse_tsv("a\tReason\tb\n").unwrap();
        assert!(g.successors(VertexId(99), RelationType::Reason).is_err());
        assert!(g.predecessors(VertexId(99), RelationType::Reason).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let g = KnowledgeGraph::parse_tsv(FIXTURE).unwrap();
        let again = KnowledgeGraph::parse_tsv(&g.to_tsv()).unwrap();
        assert_eq!(g.to_tsv(), again.to_tsv());
        assert_eq!(g.vertex_count(), again.vertex_count());
    }

    #[test]
    fn split_ten_edges_eight_one_one() {
        let mut lines = String::new();
        for i in 0..10 {
            lines.push_str(&format!("a{i}\tReason\tb{i}\n"));
        }
        let g = KnowledgeGraph::parse_tsv(&lines).unwrap();
        let split = split_edges(&g, (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!(split.train.edge_count(), 8);
        assert_eq!(split.valid.edge_count(), 9);
        assert_eq!(split.test.edge_count(), 10);
    }

    #[test]
    fn split_is_deterministic_and_cumulative() {
        let g = KnowledgeGraph::synthetic(50, 200, 7);
        let a = split_edges(&g, (0.8, 0.1, 0.1), 42).unwrap();
        let b = split_edges(&g, (0.8, 0.1, 0.1), 42).unwrap();
        assert_eq!(a.train.to_tsv(), b.train.to_tsv());
        assert_eq!(a.valid.to_tsv(), b.valid.to_tsv());

        let valid_set: std::collections::HashSet<_> = a.valid.edges().iter().collect();
        let test_set: std::collections::HashSet<_> = a.test.edges().iter().collect();
        for e in a.train.edges() {
            assert!(valid_set.contains(e));
            assert!(test_set.contains(e));
        }
        for e in a.valid.edges() {
            assert!(test_set.contains(e));
        }
        // Vertex set identical across the three graphs.
        assert_eq!(a.train.vertex_count(), g.vertex_count());
        assert_eq!(a.valid.vertex_count(), g.vertex_count());
        assert_eq!(a.test.vertex_count(), g.vertex_count());
    }

    #[test]
    fn split_rejects_bad_inputs() {
        let g = KnowledgeGraph::parse_tsv("a\tReason\tb\nb\tReason\tc\n").unwrap();
        assert!(matches!(
            split_edges(&g, (0.8, 0.1, 0.1), 0),
            Err(KgError::TooFewEdges { n: 2 })
        ));
        let g3 = KnowledgeGraph::synthetic(10, 20, 0);
        assert!(split_edges(&g3, (0.8, 0.1, 0.2), 0).is_err());
        assert!(split_edges(&g3, (1.2, -0.1, -0.1), 0).is_err());
    }

    #[test]
    fn largest_remainder_apportionment() {
        assert_eq!(largest_remainder(10, &[0.8, 0.1, 0.1]), vec![8, 1, 1]);
        assert_eq!(
            largest_remainder(141_252, &[0.8, 0.1, 0.1]),
            vec![113_002, 14_125, 14_125]
        );
        assert_eq!(largest_remainder(5, &[0.5, 0.5]), vec![3, 2]);
    }

    proptest! {
        #[test]
        fn index_symmetry(seed in 0u64..500) {
            let g = KnowledgeGraph::synthetic(20, 60, seed);
            for e in g.edges() {
                prop_assert!(g.successors(e.head, e.rel).unwrap().contains(&e.tail));
                prop_assert!(g.predecessors(e.tail, e.rel).unwrap().contains(&e.head));
            }
            // Index completeness: forward index holds exactly |E| edges.
            let total: usize = g.fwd.values().map(|v| v.len()).sum();
            prop_assert_eq!(total, g.edge_count());
            // Results sorted ascending.
            for list in g.fwd.values() {
                prop_assert!(list.windows(2).all(|w| w[0] < w[1]));
            }
        }

        #[test]
        fn split_counts_match_rule(n_edges in 3usize..400, seed in 0u64..100) {
            let g = KnowledgeGraph::synthetic(40, n_edges, seed);
            let n = g.edge_count();
            if n >= 3 {
                let split = split_edges(&g, (0.8, 0.1, 0.1), seed).unwrap();
                let counts = largest_remainder(n, &[0.8, 0.1, 0.1]);
                prop_assert_eq!(split.train.edge_count(), counts[0]);
                prop_assert_eq!(split.valid.edge_count(), counts[0] + counts[1]);
                prop_assert_eq!(split.test.edge_count(), n);
            }
        }
    }
}
