//! Training-free weight compression.
//!
//! Each weight matrix `W` (input dim `d1` x output dim `d2`) is factorized in a
//! calibration-whitened space into a dense dictionary times a column-sparse
//! coefficient matrix, stored as `U = L^-1 D` and `V = C_sparse`. A global
//! kept-parameter budget is then spread across layers by an exact
//! multi-choice knapsack solver with per-layer error caps.
//!
//! Pipeline: [`whitening`] -> [`factorizer`] -> [`sparsifier`] -> [`refit`],
//! driven per candidate by [`profiler`]; [`allocator`] picks one option per
//! layer; [`runtime`] executes the factorized layers; [`store`] owns every
//! file format.

pub mod allocator;
pub mod cli;
pub mod error;
pub mod factorizer;
pub mod par;
pub mod profiler;
pub mod refit;
pub mod runtime;
pub mod sparse;
pub mod sparsifier;
pub mod store;
pub mod synth;
pub mod whitening;

pub use error::{Error, Result};

/// Dense matrix type used for all internal computation.
pub type Mat = nalgebra::DMatrix<f64>;
