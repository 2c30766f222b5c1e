//! Compact relational storage and query evaluation over succinct quadtrees.
//!
//! Relations with integer attributes are stored as point sets on a
//! `2^h x ... x 2^h` grid, one dimension per attribute, and encoded as
//! level-wise bit groups of the quadtree that subdivides that grid
//! ([`quadtree::CompactQuadtree`]). Multiway joins are evaluated by lifting
//! each relation to the full attribute space with a constant-size child
//! mapping ([`qdag::Qdag`]) and intersecting the virtual trees
//! ([`join::multijoin`]). Arbitrary join/union/complement formulas are
//! evaluated lazily ([`lqdag`]), materializing only the parts of the output
//! tree that the formula cannot prune.

pub mod bits;
pub mod catalog;
pub mod error;
pub mod grid;
pub mod join;
pub mod lqdag;
pub mod qdag;
pub mod quadtree;
pub mod query;

pub use error::Error;
