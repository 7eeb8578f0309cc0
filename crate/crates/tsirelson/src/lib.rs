//! Exact computation in mixed Tsirelson spaces T[(F_n, θ_n)].
//!
//! The crate provides the regular-family combinatorics of the A and
//! Schreier ladders, an exact rational norm for finitely supported vectors,
//! verified special convex combinations, periodic rapidly-increasing-
//! sequence (RIS) tree constructions with their norming-functional
//! certificates, and the diagonal-style operator assembled from those
//! certificates together with checkers for its boundedness and
//! non-compactness estimates.
//!
//! Everything is deterministic and side-effect free; all operations may be
//! called concurrently on shared inputs. The only non-rational weight
//! sequence (the Schlumprecht weight) is handled through certified rational
//! enclosures, never floating point.

pub mod averages;
pub mod core_tree;
pub mod families;
pub mod norm;
pub mod operator;
pub mod ratio;
pub mod report;
pub mod ris;
pub mod space;
pub mod suites;
pub mod theta;
pub mod tree;
pub mod vector;

pub use families::{FamilyKind, FiniteSet, Ladder};
pub use ratio::Q;
pub use space::SpaceSpec;
pub use theta::{Round, ThetaSequence};
pub use tree::NormingTree;
pub use vector::FiniteVector;
