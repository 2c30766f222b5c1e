//! Engine-independent reference machinery for testing the tree-based query
//! evaluator: a brute-force set evaluator over explicit universes, the exact
//! worst-case output bound of a join (fractional edge cover, solved over
//! rationals), and deterministic instance generation.
//!
//! Nothing here touches the quadtree code paths; results are grounded purely
//! in set arithmetic.

pub mod agm;
pub mod bruteforce;
pub mod gen;

pub use agm::{agm_bound, AgmBound};
pub use bruteforce::{eval_bruteforce, OracleRel, MAX_UNIVERSE};
pub use gen::{gen_instance, Profile, SplitMix64};
