pub mod bench;
pub mod data;
pub mod dense;
pub mod error;
pub mod graph;
pub mod models;
pub mod nn;
pub mod selftest;

pub use dense::DenseMatrix;
pub use error::{Error, Result};
