//! Streaming top-k eigendecomposition as a game between eigenvectors.
//!
//! Each of `k` players owns one unit vector and ascends its own utility,
//! penalized by alignment with the players before it. The crate provides the
//! per-player update rules, a data-parallel solver over minibatches, a
//! bottom-k mode for graph Laplacians driven by edge streams, evaluation
//! metrics, k-means clustering and a dense Jacobi oracle.

pub mod data_io;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod solver;
pub mod updates;

pub use error::{Error, Result};
pub use graph::{run_graph, EdgeList, GraphRun, LambdaStarMode, LambdaTracker};
pub use linalg::{jacobi_eigh, Mat, SymEig};
pub use solver::{run, Schedule, SolverConfig, Source};
pub use updates::{Constraint, EigenState, UpdateRule};
