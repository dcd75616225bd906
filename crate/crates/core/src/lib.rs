//! Complex eventuality query answering over eventuality knowledge graphs.
//!
//! The pipeline: load a discourse-relation edge list ([`kg`]), pose
//! conjunctive queries as computational graphs ([`query`]), execute them
//! symbolically ([`exec`]), prove candidate answers against the implicit
//! occurrence and temporal constraints of the query's atomics
//! ([`constraint`]), sample benchmark datasets ([`sampler`]), and train
//! and evaluate a memory-enhanced neural query encoder ([`model`],
//! [`train`]).

pub mod constraint;
pub mod exec;
pub mod kg;
pub mod model;
pub mod query;
pub mod sampler;
pub mod train;

pub use constraint::{check_answer, CheckConfig, Verdict, VerdictStatus};
pub use exec::{answer_set, chain_vertices, enumerate_groundings};
pub use kg::{split_edges, GraphSplit, KnowledgeGraph, RelationType, VertexId};
pub use query::{GroundedNode, InfoAtomic, QueryInstance, QueryTypeNode};
