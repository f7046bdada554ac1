//! Numerical laboratory for the multidimensional Parisi functional of the
//! vector-spin Sherrington-Kirkpatrick model.

pub mod error;
pub mod eval;
pub mod gaussian;
pub mod matrix;
pub mod optim;
pub mod order;
pub mod pde;
pub mod quadrature;
pub mod rpc;
pub mod saddle;
pub mod scalar;
pub mod seeds;
pub mod sk;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type SymMat64 = matrix::SymMatrix<f64>;
pub type SymMat32 = matrix::SymMatrix<f32>;
pub type PsdMat64 = matrix::PsdMatrix<f64>;
pub type PsdMat32 = matrix::PsdMatrix<f32>;
pub type Chain64 = order::MonotoneChain<f64>;
pub type Chain32 = order::MonotoneChain<f32>;
pub type Path64 = order::DiscretePath<f64>;
pub type Path32 = order::DiscretePath<f32>;
pub type Partition64 = order::UnitPartition<f64>;
pub type Partition32 = order::UnitPartition<f32>;
