//! Query types and grounded queries in the Lisp-like grammar.
//!
//! Type grammar (abstract shape):
//!
//! ```text
//! node := "(e)" | "(p," node ")" | "(i," node ("," node)+ ")"
//! ```
//!
//! Grounded grammar (our extension; the type syntax never shows grounded
//! forms): anchors carry vertex text and projections carry a relation name,
//! `(e,<text>)` and `(p,<Relation>,<node>)`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{KnowledgeGraph, RelationType, VertexId};

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("record field {0}: {1}")]
    Field(&'static str, String),
    #[error("unknown vertex text {0:?}")]
    UnknownVertex(String),
    #[error("unknown relation {0:?}")]
    UnknownRelation(String),
    #[error("vertex text {0:?} contains parentheses and cannot be serialized")]
    UnserializableText(String),
    #[error("invalid record json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Abstract query shape: anchor placeholder, projection, or intersection.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QueryTypeNode {
    E,
    P(Box<QueryTypeNode>),
    I(Vec<QueryTypeNode>),
}

impl QueryTypeNode {
    pub fn parse(s: &str) -> Result<Self, QueryError> {
        let bytes = s.as_bytes();
        let mut pos = 0usize;
        let node = parse_type(bytes, &mut pos)?;
        skip_ws(bytes, &mut pos);
        if pos != bytes.len() {
            return Err(QueryError::Parse {
                offset: pos,
                msg: "trailing input after query".into(),
            });
        }
        Ok(node)
    }

    /// `(num_anchors, depth)`: anchor-leaf count and the maximum number of
    /// projections on any root-to-leaf path.
    pub fn stats(&self) -> (usize, usize) {
        match self {
            QueryTypeNode::E => (1, 0),
            QueryTypeNode::P(child) => {
                let (a, d) = child.stats();
                (a, d + 1)
            }
            QueryTypeNode::I(children) => {
                let mut anchors = 0;
                let mut depth = 0;
                for c in children {
                    let (a, d) = c.stats();
                    anchors += a;
                    depth = depth.max(d);
                }
                (anchors, depth)
            }
        }
    }
}

impl fmt::Display for QueryTypeNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryTypeNode::E => write!(f, "(e)"),
            QueryTypeNode::P(child) => write!(f, "(p,{child})"),
            QueryTypeNode::I(children) => {
                write!(f, "(i")?;
                for c in children {
                    write!(f, ",{c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// A grounded computational graph: anchors are concrete eventualities and
/// projections carry their relation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GroundedNode {
    Anchor(VertexId),
    Proj(RelationType, Box<GroundedNode>),
    Inter(Vec<GroundedNode>),
}

impl GroundedNode {
    /// Erase to the abstract query shape.
    pub fn erase(&self) -> QueryTypeNode {
        match self {
            GroundedNode::Anchor(_) => QueryTypeNode::E,
            GroundedNode::Proj(_, child) => QueryTypeNode::P(Box::new(child.erase())),
            GroundedNode::Inter(children) => {
                QueryTypeNode::I(children.iter().map(|c| c.erase()).collect())
            }
        }
    }

    pub fn anchors(&self) -> Vec<VertexId> {
        let mut out = Vec::new();
        self.collect_anchors(&mut out);
        out
    }

    fn collect_anchors(&self, out: &mut Vec<VertexId>) {
        match self {
            GroundedNode::Anchor(v) => out.push(*v),
            GroundedNode::Proj(_, child) => child.collect_anchors(out),
            GroundedNode::Inter(children) => {
                for c in children {
                    c.collect_anchors(out);
                }
            }
        }
    }

    pub fn parse(s: &str, kg: &KnowledgeGraph) -> Result<Self, QueryError> {
        let bytes = s.as_bytes();
        let mut pos = 0usize;
        let node = parse_grounded(bytes, &mut pos, kg)?;
        skip_ws(bytes, &mut pos);
        if pos != bytes.len() {
            return Err(QueryError::Parse {
                offset: pos,
                msg: "trailing input after query".into(),
            });
        }
        Ok(node)
    }

    pub fn serialize(&self, kg: &KnowledgeGraph) -> Result<String, QueryError> {
        let mut out = String::new();
        self.write(kg, &mut out)?;
        Ok(out)
    }

    fn write(&self, kg: &KnowledgeGraph, out: &mut String) -> Result<(), QueryError> {
        match self {
            GroundedNode::Anchor(v) => {
                let text = kg.text(*v);
                if text.contains('(') || text.contains(')') {
                    return Err(QueryError::UnserializableText(text.to_string()));
                }
                out.push_str("(e,");
                out.push_str(text);
                out.push(')');
            }
            GroundedNode::Proj(rel, child) => {
                out.push_str("(p,");
                out.push_str(rel.name());
                out.push(',');
                child.write(kg, out)?;
                out.push(')');
            }
            GroundedNode::Inter(children) => {
                out.push_str("(i");
                for c in children {
                    out.push(',');
                    c.write(kg, out)?;
                }
                out.push(')');
            }
        }
        Ok(())
    }
}

/// A variable-free query term: contributes implicit constraints only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InfoAtomic {
    pub head: VertexId,
    pub rel: RelationType,
    pub tail: VertexId,
}

/// Which constraint family contradicted a benchmark query's filtered answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintFamily {
    Occurrence,
    Temporal,
}

impl ConstraintFamily {
    pub fn name(self) -> &'static str {
        match self {
            ConstraintFamily::Occurrence => "occurrence",
            ConstraintFamily::Temporal => "temporal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl SplitName {
    pub fn name(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Valid => "valid",
            SplitName::Test => "test",
        }
    }
}

/// One benchmark record: a grounded query, its informational atomics, and
/// the proved answer bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryInstance {
    pub query: GroundedNode,
    pub info_atomics: Vec<InfoAtomic>,
    pub answers: Vec<VertexId>,
    pub contradictory_answers: Vec<VertexId>,
    pub family: ConstraintFamily,
    pub split: SplitName,
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    #[serde(rename = "type")]
    query_type: String,
    query: String,
    info_atomics: Vec<[String; 3]>,
    answers: Vec<String>,
    contradictory_answers: Vec<String>,
    family: String,
    split: String,
}

impl QueryInstance {
    /// One JSON object (one JSONL line, no trailing newline). Vertices are
    /// written as text so records survive graph reloads.
    pub fn to_json(&self, kg: &KnowledgeGraph) -> Result<String, QueryError> {
        let texts = |ids: &[VertexId]| ids.iter().map(|&v| kg.text(v).to_string()).collect();
        let record = RecordJson {
            query_type: self.query.erase().to_string(),
            query: self.query.serialize(kg)?,
            info_atomics: self
                .info_atomics
                .iter()
                .map(|a| {
                    [
                        kg.text(a.head).to_string(),
                        a.rel.name().to_string(),
                        kg.text(a.tail).to_string(),
                    ]
                })
                .collect(),
            answers: texts(&self.answers),
            contradictory_answers: texts(&self.contradictory_answers),
            family: self.family.name().to_string(),
            split: self.split.name().to_string(),
        };
        Ok(serde_json::to_string(&record)?)
    }

    pub fn from_json(line: &str, kg: &KnowledgeGraph) -> Result<Self, QueryError> {
        let record: RecordJson = serde_json::from_str(line)?;
        let lookup = |text: &str| {
            kg.vertex_by_text(text)
                .ok_or_else(|| QueryError::UnknownVertex(text.to_string()))
        };
        let query = GroundedNode::parse(&record.query, kg)?;
        if query.erase().to_string() != record.query_type {
            return Err(QueryError::Field(
                "type",
                format!(
                    "does not match query shape {}",
                    query.erase()
                ),
            ));
        }
        let family = match record.family.as_str() {
            "occurrence" => ConstraintFamily::Occurrence,
            "temporal" => ConstraintFamily::Temporal,
            other => return Err(QueryError::Field("family", format!("unknown value {other:?}"))),
        };
        let split = match record.split.as_str() {
            "train" => SplitName::Train,
            "valid" => SplitName::Valid,
            "test" => SplitName::Test,
            other => return Err(QueryError::Field("split", format!("unknown value {other:?}"))),
        };
        let mut info_atomics = Vec::with_capacity(record.info_atomics.len());
        for [h, r, t] in &record.info_atomics {
            let rel: RelationType = r
                .parse()
                .map_err(|()| QueryError::UnknownRelation(r.clone()))?;
            info_atomics.push(InfoAtomic {
                head: lookup(h)?,
                rel,
                tail: lookup(t)?,
            });
        }
        let ids = |texts: &[String]| -> Result<Vec<VertexId>, QueryError> {
            texts.iter().map(|t| lookup(t)).collect()
        };
        Ok(QueryInstance {
            query,
            info_atomics,
            answers: ids(&record.answers)?,
            contradictory_answers: ids(&record.contradictory_answers)?,
            family,
            split,
        })
    }
}

/// Nesting bound for both grammars; benchmark queries stay below ten.
const MAX_NESTING: usize = 128;

fn skip_ws(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
}

fn expect(bytes: &[u8], pos: &mut usize, ch: u8) -> Result<(), QueryError> {
    skip_ws(bytes, pos);
    if *pos < bytes.len() && bytes[*pos] == ch {
        *pos += 1;
        Ok(())
    } else {
        Err(QueryError::Parse {
            offset: *pos,
            msg: format!("expected {:?}", ch as char),
        })
    }
}

fn peek(bytes: &[u8], pos: usize) -> Option<u8> {
    bytes.get(pos).copied()
}

fn parse_type(bytes: &[u8], pos: &mut usize) -> Result<QueryTypeNode, QueryError> {
    parse_type_at(bytes, pos, 0)
}

fn parse_type_at(
    bytes: &[u8],
    pos: &mut usize,
    depth: usize,
) -> Result<QueryTypeNode, QueryError> {
    if depth > MAX_NESTING {
        return Err(QueryError::Parse {
            offset: *pos,
            msg: format!("nesting deeper than {MAX_NESTING}"),
        });
    }
    expect(bytes, pos, b'(')?;
    skip_ws(bytes, pos);
    let head = peek(bytes, *pos);
    match head {
        Some(b'e') => {
            *pos += 1;
            expect(bytes, pos, b')')?;
            Ok(QueryTypeNode::E)
        }
        Some(b'p') => {
            *pos += 1;
            expect(bytes, pos, b',')?;
            let child = parse_type_at(bytes, pos, depth + 1)?;
            expect(bytes, pos, b')')?;
            Ok(QueryTypeNode::P(Box::new(child)))
        }
        Some(b'i') => {
            *pos += 1;
            let mut children = Vec::new();
            loop {
                skip_ws(bytes, pos);
                match peek(bytes, *pos) {
                    Some(b',') => {
                        *pos += 1;
                        children.push(parse_type_at(bytes, pos, depth + 1)?);
                    }
                    Some(b')') => {
                        *pos += 1;
                        break;
                    }
                    _ => {
                        return Err(QueryError::Parse {
                            offset: *pos,
                            msg: "expected ',' or ')'".into(),
                        })
                    }
                }
            }
            if children.len() < 2 {
                return Err(QueryError::Parse {
                    offset: *pos,
                    msg: format!("intersection arity {} < 2", children.len()),
                });
            }
            Ok(QueryTypeNode::I(children))
        }
        _ => Err(QueryError::Parse {
            offset: *pos,
            msg: "expected head token e, p, or i".into(),
        }),
    }
}

fn parse_grounded(
    bytes: &[u8],
    pos: &mut usize,
    kg: &KnowledgeGraph,
) -> Result<GroundedNode, QueryError> {
    parse_grounded_at(bytes, pos, kg, 0)
}

fn parse_grounded_at(
    bytes: &[u8],
    pos: &mut usize,
    kg: &KnowledgeGraph,
    depth: usize,
) -> Result<GroundedNode, QueryError> {
    if depth > MAX_NESTING {
        return Err(QueryError::Parse {
            offset: *pos,
            msg: format!("nesting deeper than {MAX_NESTING}"),
        });
    }
    expect(bytes, pos, b'(')?;
    skip_ws(bytes, pos);
    match peek(bytes, *pos) {
        Some(b'e') => {
            *pos += 1;
            expect(bytes, pos, b',')?;
            // Anchor text runs to the matching ')'; texts with parens are
            // rejected at serialization time.
            let start = *pos;
            while *pos < bytes.len() && bytes[*pos] != b')' && bytes[*pos] != b'(' {
                *pos += 1;
            }
            if peek(bytes, *pos) != Some(b')') {
                return Err(QueryError::Parse {
                    offset: *pos,
                    msg: "unterminated anchor".into(),
                });
            }
            let text = std::str::from_utf8(&bytes[start..*pos]).map_err(|_| QueryError::Parse {
                offset: start,
                msg: "anchor text is not utf-8".into(),
            })?;
            *pos += 1;
            let v = kg
                .vertex_by_text(text)
                .ok_or_else(|| QueryError::UnknownVertex(text.trim().to_string()))?;
            Ok(GroundedNode::Anchor(v))
        }
        Some(b'p') => {
            *pos += 1;
            expect(bytes, pos, b',')?;
            skip_ws(bytes, pos);
            let start = *pos;
            while *pos < bytes.len() && bytes[*pos] != b',' {
                *pos += 1;
            }
            let name = std::str::from_utf8(&bytes[start..*pos])
                .unwrap_or("")
                .trim()
                .to_string();
            let rel: RelationType = name
                .parse()
                .map_err(|()| QueryError::UnknownRelation(name.clone()))?;
            expect(bytes, pos, b',')?;
            let child = parse_grounded_at(bytes, pos, kg, depth + 1)?;
            expect(bytes, pos, b')')?;
            Ok(GroundedNode::Proj(rel, Box::new(child)))
        }
        Some(b'i') => {
            *pos += 1;
            let mut children = Vec::new();
            loop {
                skip_ws(bytes, pos);
                match peek(bytes, *pos) {
                    Some(b',') => {
                        *pos += 1;
                        children.push(parse_grounded_at(bytes, pos, kg, depth + 1)?);
                    }
                    Some(b')') => {
                        *pos += 1;
                        break;
                    }
                    _ => {
                        return Err(QueryError::Parse {
                            offset: *pos,
                            msg: "expected ',' or ')'".into(),
                        })
                    }
                }
            }
            if children.len() < 2 {
                return Err(QueryError::Parse {
                    offset: *pos,
                    msg: format!("intersection arity {} < 2", children.len()),
                });
            }
            Ok(GroundedNode::Inter(children))
        }
        _ => Err(QueryError::Parse {
            offset: *pos,
            msg: "expected head token e, p, or i".into(),
        }),
    }
}
