//! Block-delay simulation and analysis for random linear network coding
//! versus hop-by-hop ARQ routing over packet erasure networks.
//!
//! Unicasting a block of n packets over a network of per-slot erasure links
//! takes `n/C + D(n)` slots in expectation, where `C` is the min-cut capacity
//! and the sub-linear delay function `D(n)` separates strategies: coding
//! keeps `D(n)` bounded whenever each path has a unique worst link, while a
//! fixed-allocation routing scheme pays an extra `Theta(sqrt(n))`. The crate
//! provides:
//!
//! - [`topology`]: network descriptions, validation, min-cut capacity;
//! - [`engine`]: reproducible erasure traces and three simulators (queue-rank
//!   coding, time-expanded max-flow coding, hop-by-hop ARQ routing);
//! - [`analytics`]: exact delay computations, the parallel-links recursion
//!   and its characteristic roots, harmonic identities;
//! - [`negbinmax`]: the expected maximum of two negative binomials, closed
//!   form and recursion, and the routing overhead it implies;
//! - [`transform`]: max-flow path decomposition and the correlated
//!   parallel-path rebuild that upper-bounds coding delay on general graphs;
//! - [`concentration`]: Azuma-Hoeffding deviation bounds and their empirical
//!   verification.

pub mod analytics;
pub mod concentration;
pub mod engine;
mod error;
mod flow;
pub mod negbinmax;
pub mod rational;
pub mod rng;
pub mod topology;
pub mod transform;

pub use error::{Error, Result};
