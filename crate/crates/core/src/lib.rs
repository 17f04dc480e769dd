pub mod error;
pub mod io;
pub mod inference;
pub mod lasso;
pub mod linalg;
pub mod metrics;
pub mod nodewise;
pub mod rng;
pub mod sdar;
pub mod simgen;
pub mod simulation;

pub use error::{Error, Result};
pub use linalg::{IndexSet, Matrix};
