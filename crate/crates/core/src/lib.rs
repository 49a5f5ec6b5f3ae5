//! Cluster description with disjoint tag descriptors.
//!
//! Objects are partitioned into `k` clusters and each object carries a set of
//! tags. A solution assigns every cluster a descriptor (a set of tags) such that
//! descriptors are pairwise disjoint and each cluster has at least `M_l` of its
//! objects covered by its descriptor. The objective is the number of tags used
//! plus `P` times the tag modularity of the assignment, which penalizes
//! globally frequent tags.
//!
//! The crate compiles a [`model::ProblemSpec`] into a QUBO ([`qubo`]), minimizes
//! it with a parallel-trial annealer ([`solver`]), and certifies small
//! instances against exact enumeration ([`oracle`]).

pub mod cli;
pub mod error;
pub mod instance;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod qubo;
pub mod solver;

pub use error::{Error, Result};
pub use instance::{Instance, InstanceFormat, Loaded};
pub use model::{DescriptorSolution, ProblemSpec};
pub use qubo::{Penalties, QuboModel};
pub use solver::{SolveResult, SolverConfig};

/// Absolute tolerance used when comparing real-valued objectives.
pub const EPS: f64 = 1e-9;
