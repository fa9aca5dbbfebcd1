//! Score-based diffusion for dimension-2 combinatorial complexes.
//!
//! A complex is held as three tensors `(X, A, F)`: node features, a
//! symmetric adjacency, and a rank-2 incidence over all candidate cells.
//! Each tensor is noised by its own SDE; three partial score networks are
//! trained with denoising score matching and drive a coupled reverse-time
//! solver that produces new complexes.

pub mod complex;
pub mod config;
pub mod data_io;
pub mod error;
pub mod lifting;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod run;
pub mod sde;
pub mod training;

pub use error::{CcsdError, Result};
