//! Frame-semantic parsing as incremental graph construction.
//!
//! A sentence's spans are typed as predicate pieces, roles or nothing;
//! predicate pieces are linked into (possibly discontinuous) predicates,
//! predicates are assigned frames, and roles are attached to predicates.

pub mod comparison;
pub mod corpus;
pub mod decoder;
pub mod edge_builder;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod node_builder;
pub mod semicrf;
pub mod training;

pub use error::{Error, Result};
