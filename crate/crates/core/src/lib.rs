//! Greedy β-expansions with deleted digit sets.
//!
//! The crate computes, with exact arithmetic in a real quadratic field
//! ℚ(√d), everything attached to the greedy transformation
//! `T x = βx − a_j` on a three-digit set `{0, a₁, a₂}`:
//!
//! * digit expansions, orbits and exact cycle detection ([`system`]),
//! * the tree of fundamental intervals, fullness classification and the
//!   κ(n) counting bounds ([`intervals`]),
//! * the stacked-rectangle natural-extension space, its measure and the
//!   exactness constants ([`tower`]),
//! * the invariant density as an exact piecewise-constant function, the
//!   transfer operator and Monte-Carlo validation ([`density`]).
//!
//! Scalars are exact elements `p + q√d` ([`exactnum::QuadExt`]) or, for
//! non-quadratic β, high-precision rational approximations tagged with the
//! float backend. Exact mode turns invariance checks into literal `0 == 0`
//! identities instead of small-residual comparisons.

pub mod density;
pub mod error;
pub mod exactnum;
pub mod intervals;
pub mod system;
pub mod tower;

pub use error::{Error, Result};
pub use exactnum::{Backend, QuadExt, Scalar};
pub use system::{DigitSet, GreedySystem, OrbitRecord, SupportCase, Word};
