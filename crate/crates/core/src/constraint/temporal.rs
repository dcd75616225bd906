//! Temporal-order feasibility: do real-valued timestamps exist satisfying
//! a set of strict `Before` and `Same` constraints?
//!
//! `Same` classes are merged with union-find; the set is feasible iff no
//! `Before` joins a class to itself and the strict digraph over classes is
//! acyclic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::kg::VertexId;

#[derive(Debug, Error)]
pub enum TemporalError {
    #[error("oracle limited to {limit} events, constraint set has {n}")]
    OracleLimit { n: usize, limit: usize },
}

/// An ordering constraint over event timestamps. "After" is normalized to
/// `Before` with swapped arguments at construction; `Same` keeps the
/// smaller id first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemporalConstraint {
    /// τ(a) strictly precedes τ(b).
    Before(VertexId, VertexId),
    /// τ(a) equals τ(b).
    Same(VertexId, VertexId),
}

impl TemporalConstraint {
    pub fn before(a: VertexId, b: VertexId) -> Self {
        TemporalConstraint::Before(a, b)
    }

    pub fn after(a: VertexId, b: VertexId) -> Self {
        TemporalConstraint::Before(b, a)
    }

    pub fn same(a: VertexId, b: VertexId) -> Self {
        if a <= b {
            TemporalConstraint::Same(a, b)
        } else {
            TemporalConstraint::Same(b, a)
        }
    }

    pub fn events(&self) -> [VertexId; 2] {
        match *self {
            TemporalConstraint::Before(a, b) | TemporalConstraint::Same(a, b) => [a, b],
        }
    }

    /// Render with a vertex-name resolver.
    pub fn display<F>(&self, name: F) -> String
    where
        F: Fn(VertexId) -> String,
    {
        match *self {
            TemporalConstraint::Before(a, b) => format!("τ({}) ≺ τ({})", name(a), name(b)),
            TemporalConstraint::Same(a, b) => format!("τ({}) = τ({})", name(a), name(b)),
        }
    }
}

impl fmt::Display for TemporalConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display(|v| v.to_string()))
    }
}

struct UnionFind {
    parent: BTreeMap<VertexId, VertexId>,
}

impl UnionFind {
    fn new() -> Self {
        UnionFind { parent: BTreeMap::new() }
    }

    fn find(&mut self, x: VertexId) -> VertexId {
        let p = *self.parent.get(&x).unwrap_or(&x);
        if p == x {
            return x;
        }
        let root = self.find(p);
        self.parent.insert(x, root);
        root
    }

    fn union(&mut self, a: VertexId, b: VertexId) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent.insert(hi, lo);
        }
    }
}

/// Feasibility check plus, when feasible, one witnessing order of the
/// `Same`-classes (classes listed earliest first; each class is the sorted
/// set of its events).
pub fn temporal_order(
    constraints: &[TemporalConstraint],
) -> Option<Vec<Vec<VertexId>>> {
    let mut uf = UnionFind::new();
    for c in constraints {
        if let TemporalConstraint::Same(a, b) = *c {
            uf.union(a, b);
        }
    }

    // Strict edges between class representatives.
    let mut edges: BTreeSet<(VertexId, VertexId)> = BTreeSet::new();
    let mut events: BTreeSet<VertexId> = BTreeSet::new();
    for c in constraints {
        let [a, b] = c.events();
        events.insert(a);
        events.insert(b);
        if let TemporalConstraint::Before(x, y) = *c {
            let (rx, ry) = (uf.find(x), uf.find(y));
            if rx == ry {
                return None; // strict order inside a Same-class
            }
            edges.insert((rx, ry));
        }
    }

    // Kahn's algorithm over the class digraph; feasible iff acyclic.
    let reps: BTreeSet<VertexId> = events.iter().map(|&e| uf.find(e)).collect();
    let mut indegree: BTreeMap<VertexId, usize> = reps.iter().map(|&r| (r, 0)).collect();
    let mut adj: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
    for &(a, b) in &edges {
        *indegree.get_mut(&b).unwrap() += 1;
        adj.entry(a).or_default().push(b);
    }
    let mut ready: Vec<VertexId> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&r, _)| r)
        .collect();
    let mut order = Vec::new();
    while let Some(r) = ready.pop() {
        order.push(r);
        if let Some(next) = adj.get(&r) {
            for &b in next {
                let d = indegree.get_mut(&b).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(b);
                }
            }
        }
    }
    if order.len() != reps.len() {
        return None; // cycle
    }

    let mut members: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
    for &e in &events {
        members.entry(uf.find(e)).or_default().push(e);
    }
    Some(order.into_iter().map(|r| members.remove(&r).unwrap()).collect())
}

/// True iff real timestamps exist satisfying every constraint.
pub fn feasible_temporal(constraints: &[TemporalConstraint]) -> bool {
    temporal_order(constraints).is_some()
}

/// Exhaustive oracle: enumerate every rank assignment of the events
/// (each induces a weak ordering) and test the constraints directly.
/// Limited to 6 events.
pub fn oracle_temporal(constraints: &[TemporalConstraint]) -> Result<bool, TemporalError> {
    let events: BTreeSet<VertexId> = constraints
        .iter()
        .flat_map(|c| c.events())
        .collect();
    let n = events.len();
    if n > 6 {
        return Err(TemporalError::OracleLimit { n, limit: 6 });
    }
    if n == 0 {
        return Ok(true);
    }
    let events: Vec<VertexId> = events.into_iter().collect();
    let mut ranks = vec![0usize; n];
    loop {
        let rank_of = |v: VertexId| {
            let i = events.iter().position(|&e| e == v).unwrap();
            ranks[i]
        };
        let ok = constraints.iter().all(|c| match *c {
            TemporalConstraint::Before(a, b) => rank_of(a) < rank_of(b),
            TemporalConstraint::Same(a, b) => rank_of(a) == rank_of(b),
        });
        if ok {
            return Ok(true);
        }
        // Next rank vector in base n.
        let mut i = 0;
        loop {
            if i == n {
                return Ok(false);
            }
            ranks[i] += 1;
            if ranks[i] < n {
                break;
            }
            ranks[i] = 0;
            i += 1;
        }
    }
}
