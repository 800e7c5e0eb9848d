//! Taxonomy refinement with hyperbolic (Poincaré) and Euclidean word embeddings.
//!
//! A noisy IS-A taxonomy is repaired in stages: edges whose parent ranks
//! poorly in the embedding are removed and their subtrees re-hung, orphan
//! terms are attached to their closest taxonomy term, remaining compound
//! orphans go under a term they contain, and cycles are broken last.

pub mod eval;
pub mod euclid;
pub mod hyperbolic;
pub mod pipeline;
pub mod ranking;
pub mod refine;
pub mod relations;
pub mod taxcore;

pub use taxcore::{Edge, Taxonomy, Term};
