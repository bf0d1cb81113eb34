//! Exact solver for two-stage stochastic programs whose second-stage
//! component capacities follow distributions that depend on first-stage
//! allocations.
//!
//! The crate is organised bottom-up:
//!
//! * [`lp`]: bounded revised simplex with warm starts and row/column growth.
//! * [`bnb`]: best-bound branch-and-bound with an incumbent callback that can
//!   reject candidates by appending rows (lazy constraints).
//! * [`linearize`]: McCormick products and multilinear chains.
//! * [`instance`]: problem data, state probabilities and the recourse model.
//! * [`partition_tree`] and [`bounds`]: partition of the capacity support
//!   and the Jensen-type bounds evaluated on it.
//! * [`sra`]: the successive refinement algorithm driving [`bnb`].
//! * [`msp`]: the multilinear deterministic-equivalent benchmark.
//! * [`snip`]: grid interdiction networks and max-flow evaluators.
//! * [`oracle`]: brute-force enumeration used as ground truth.

pub mod bnb;
pub mod bounds;
mod error;
pub mod instance;
pub mod linearize;
pub mod lp;
pub mod msp;
pub mod oracle;
pub mod partition_tree;
pub mod report;
pub mod snip;
pub mod sra;

pub use error::{Error, Result};

pub use instance::{AllocationVector, Instance, Recourse, StateProbabilityTable};
pub use lp::{LinearProgram, LpSolution, LpStatus, Relation};
pub use partition_tree::PartitionTree;
pub use snip::GridNetwork;


