//! Propositional occurrence formulas over η-variables and a small DPLL
//! satisfiability decider.
//!
//! Formulas are converted to CNF by a structural (Tseitin-style)
//! transformation, so auxiliary variables appear in clauses but never
//! count against the user-facing variable limit.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::kg::VertexId;

#[derive(Debug, Error)]
pub enum SatError {
    #[error("occurrence formula uses {n} variables, above the limit of {limit}")]
    VariableLimit { n: usize, limit: usize },
    #[error("oracle limited to {limit} variables, formula has {n}")]
    OracleLimit { n: usize, limit: usize },
}

/// Default ceiling on distinct η-variables per satisfiability call.
pub const DEFAULT_VAR_LIMIT: usize = 64;

/// Occurrence formula: `Var(v)` denotes η(v), "eventuality v occurs".
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    Var(VertexId),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn var(v: VertexId) -> Self {
        Formula::Var(v)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: Formula, b: Formula) -> Self {
        Formula::Iff(Box::new(a), Box::new(b))
    }

    /// Distinct η-variables, sorted.
    pub fn vars(&self) -> BTreeSet<VertexId> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<VertexId>) {
        match self {
            Formula::True => {}
            Formula::Var(v) => {
                out.insert(*v);
            }
            Formula::Not(a) => a.collect_vars(out),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Evaluate under a total assignment; unmapped variables read false.
    pub fn eval(&self, assignment: &BTreeMap<VertexId, bool>) -> bool {
        match self {
            Formula::True => true,
            Formula::Var(v) => *assignment.get(v).unwrap_or(&false),
            Formula::Not(a) => !a.eval(assignment),
            Formula::And(a, b) => a.eval(assignment) && b.eval(assignment),
            Formula::Or(a, b) => a.eval(assignment) || b.eval(assignment),
            Formula::Implies(a, b) => !a.eval(assignment) || b.eval(assignment),
            Formula::Iff(a, b) => a.eval(assignment) == b.eval(assignment),
        }
    }

    /// Render with a vertex-name resolver; ∧-chains print flat, other
    /// connectives parenthesize when nested.
    pub fn display<'a, F>(&'a self, name: F) -> FormulaDisplay<'a, F>
    where
        F: Fn(VertexId) -> String,
    {
        FormulaDisplay { formula: self, name }
    }
}

pub struct FormulaDisplay<'a, F> {
    formula: &'a Formula,
    name: F,
}

impl<F: Fn(VertexId) -> String> fmt::Display for FormulaDisplay<'_, F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_formula(self.formula, &self.name, f, Ctx::Top)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Ctx {
    Top,
    AndChild,
    OrChild,
    Operand, // under ¬, → or ↔
}

fn write_formula<F: Fn(VertexId) -> String>(
    formula: &Formula,
    name: &F,
    f: &mut fmt::Formatter<'_>,
    ctx: Ctx,
) -> fmt::Result {
    // ∧-chains and ∨-chains print flat; →/↔ parenthesize except at top
    // level; atoms never need parens.
    let parens = match formula {
        Formula::True | Formula::Var(_) | Formula::Not(_) => false,
        Formula::And(_, _) => !matches!(ctx, Ctx::Top | Ctx::AndChild),
        Formula::Or(_, _) => !matches!(ctx, Ctx::Top | Ctx::OrChild),
        Formula::Implies(_, _) | Formula::Iff(_, _) => ctx != Ctx::Top,
    };
    if parens {
        write!(f, "(")?;
    }
    match formula {
        Formula::True => write!(f, "true")?,
        Formula::Var(v) => write!(f, "η({})", name(*v))?,
        Formula::Not(a) => {
            write!(f, "¬")?;
            write_formula(a, name, f, Ctx::Operand)?;
        }
        Formula::And(a, b) => {
            write_formula(a, name, f, Ctx::AndChild)?;
            write!(f, " ∧ ")?;
            write_formula(b, name, f, Ctx::AndChild)?;
        }
        Formula::Or(a, b) => {
            write_formula(a, name, f, Ctx::OrChild)?;
            write!(f, " ∨ ")?;
            write_formula(b, name, f, Ctx::OrChild)?;
        }
        Formula::Implies(a, b) => {
            write_formula(a, name, f, Ctx::Operand)?;
            write!(f, " → ")?;
            write_formula(b, name, f, Ctx::Operand)?;
        }
        Formula::Iff(a, b) => {
            write_formula(a, name, f, Ctx::Operand)?;
            write!(f, " ↔ ")?;
            write_formula(b, name, f, Ctx::Operand)?;
        }
    }
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

/// A satisfying assignment over the η-variables.
pub type SatModel = BTreeMap<VertexId, bool>;

/// Decide satisfiability of a conjunction of formulas and return a model
/// when satisfiable. Errors (rather than answering wrongly) when the
/// conjunction uses more than `var_limit` distinct variables.
pub fn solve_occurrence(
    formulas: &[Formula],
    var_limit: usize,
) -> Result<Option<SatModel>, SatError> {
    let mut vars = BTreeSet::new();
    for f in formulas {
        f.collect_vars(&mut vars);
    }
    if vars.len() > var_limit {
        return Err(SatError::VariableLimit { n: vars.len(), limit: var_limit });
    }
    let var_list: Vec<VertexId> = vars.iter().copied().collect();
    let index: BTreeMap<VertexId, i32> = var_list
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i as i32 + 1))
        .collect();

    let mut cnf = Cnf::new(var_list.len());
    for f in formulas {
        let lit = cnf.encode(f, &index);
        cnf.clauses.push(vec![lit]);
    }

    Ok(dpll(cnf.n_vars, &cnf.clauses).map(|assignment| {
        var_list
            .iter()
            .map(|&v| (v, assignment[(index[&v] - 1) as usize]))
            .collect()
    }))
}

/// True iff some boolean assignment satisfies the conjunction.
pub fn sat_occurrence(formulas: &[Formula], var_limit: usize) -> Result<bool, SatError> {
    Ok(solve_occurrence(formulas, var_limit)?.is_some())
}

struct Cnf {
    n_vars: usize,
    clauses: Vec<Vec<i32>>,
}

impl Cnf {
    fn new(n_user_vars: usize) -> Self {
        Cnf { n_vars: n_user_vars, clauses: Vec::new() }
    }

    fn fresh(&mut self) -> i32 {
        self.n_vars += 1;
        self.n_vars as i32
    }

    /// Structural CNF: returns a literal equisatisfiably representing `f`.
    fn encode(&mut self, f: &Formula, index: &BTreeMap<VertexId, i32>) -> i32 {
        match f {
            Formula::True => {
                let x = self.fresh();
                self.clauses.push(vec![x]);
                x
            }
            Formula::Var(v) => index[v],
            Formula::Not(a) => -self.encode(a, index),
            Formula::And(a, b) => {
                let (la, lb) = (self.encode(a, index), self.encode(b, index));
                let x = self.fresh();
                // x <-> la & lb
                self.clauses.push(vec![-x, la]);
                self.clauses.push(vec![-x, lb]);
                self.clauses.push(vec![x, -la, -lb]);
                x
            }
            Formula::Or(a, b) => {
                let (la, lb) = (self.encode(a, index), self.encode(b, index));
                let x = self.fresh();
                // x <-> la | lb
                self.clauses.push(vec![-x, la, lb]);
                self.clauses.push(vec![x, -la]);
                self.clauses.push(vec![x, -lb]);
                x
            }
            Formula::Implies(a, b) => {
                let (la, lb) = (self.encode(a, index), self.encode(b, index));
                let x = self.fresh();
                // x <-> (-la | lb)
                self.clauses.push(vec![-x, -la, lb]);
                self.clauses.push(vec![x, la]);
                self.clauses.push(vec![x, -lb]);
                x
            }
            Formula::Iff(a, b) => {
                let (la, lb) = (self.encode(a, index), self.encode(b, index));
                let x = self.fresh();
                // x <-> (la <-> lb)
                self.clauses.push(vec![-x, -la, lb]);
                self.clauses.push(vec![-x, la, -lb]);
                self.clauses.push(vec![x, la, lb]);
                self.clauses.push(vec![x, -la, -lb]);
                x
            }
        }
    }
}

/// Unit-propagating DPLL over clause lists. Returns an assignment for
/// variables 1..=n_vars when satisfiable.
fn dpll(n_vars: usize, clauses: &[Vec<i32>]) -> Option<Vec<bool>> {
    // assignment[v]: None unassigned, Some(polarity).
    let mut assignment: Vec<Option<bool>> = vec![None; n_vars + 1];

    fn lit_value(assignment: &[Option<bool>], lit: i32) -> Option<bool> {
        assignment[lit.unsigned_abs() as usize].map(|b| if lit > 0 { b } else { !b })
    }

    fn propagate(assignment: &mut [Option<bool>], clauses: &[Vec<i32>]) -> Option<Vec<usize>> {
        // Returns the trail of assigned variables, or None on conflict.
        let mut trail = Vec::new();
        loop {
            let mut changed = false;
            for clause in clauses {
                let mut unassigned = None;
                let mut n_unassigned = 0;
                let mut satisfied = false;
                for &lit in clause {
                    match lit_value(assignment, lit) {
                        Some(true) => {
                            satisfied = true;
                            break;
                        }
                        Some(false) => {}
                        None => {
                            n_unassigned += 1;
                            unassigned = Some(lit);
                        }
                    }
                }
                if satisfied {
                    continue;
                }
                match n_unassigned {
                    0 => {
                        for &v in &trail {
                            assignment[v] = None;
                        }
                        return None;
                    }
                    1 => {
                        let lit = unassigned.unwrap();
                        let var = lit.unsigned_abs() as usize;
                        assignment[var] = Some(lit > 0);
                        trail.push(var);
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                return Some(trail);
            }
        }
    }

    fn search(assignment: &mut Vec<Option<bool>>, clauses: &[Vec<i32>], n_vars: usize) -> bool {
        let trail = match propagate(assignment, clauses) {
            Some(t) => t,
            None => return false,
        };
        let next = (1..=n_vars).find(|&v| assignment[v].is_none());
        let var = match next {
            Some(v) => v,
            None => return true,
        };
        for polarity in [true, false] {
            assignment[var] = Some(polarity);
            if search(assignment, clauses, n_vars) {
                return true;
            }
            assignment[var] = None;
        }
        for &v in &trail {
            assignment[v] = None;
        }
        false
    }

    if search(&mut assignment, clauses, n_vars) {
        Some(
            (1..=n_vars)
                .map(|v| assignment[v].unwrap_or(false))
                .collect(),
        )
    } else {
        None
    }
}

/// Exhaustive truth-table oracle, limited to 20 variables. The independent
/// check for the DPLL path.
pub fn oracle_sat(formulas: &[Formula], var_limit: usize) -> Result<bool, SatError> {
    let mut vars = BTreeSet::new();
    for f in formulas {
        f.collect_vars(&mut vars);
    }
    let limit = var_limit.min(20);
    if vars.len() > limit {
        return Err(SatError::OracleLimit { n: vars.len(), limit });
    }
    let var_list: Vec<VertexId> = vars.into_iter().collect();
    for bits in 0u32..(1 << var_list.len()) {
        let assignment: BTreeMap<VertexId, bool> = var_list
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, bits >> i & 1 == 1))
            .collect();
        if formulas.iter().all(|f| f.eval(&assignment)) {
            return Ok(true);
        }
    }
    Ok(false)
}
