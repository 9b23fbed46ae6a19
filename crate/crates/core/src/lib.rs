pub mod container;
pub mod dataset;
pub mod ease;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod recommend;
pub mod rng;
pub mod solver;
pub mod synthetic;

pub use error::{Error, Result};
