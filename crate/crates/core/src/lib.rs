//! Graph-structured, content-based recommendation for multi-label annotated
//! items.

pub mod error;
pub mod experiment;
pub mod fusion;
pub mod graph;
pub mod ingest;
pub mod losses;
pub mod models;
pub mod numerics;
pub mod planted;
pub mod real;
pub mod recommend;
pub mod train;
pub mod users;

pub use error::{GemiError, Result};
pub use real::Real;

/// Double-precision dense matrix, the default for training and evaluation.
pub type Matrix = numerics::DenseMatrix<f64>;
/// Double-precision symmetric adjacency.
pub type Adjacency = numerics::SparseAdjacency<f64>;
