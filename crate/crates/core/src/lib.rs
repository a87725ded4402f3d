pub mod analysis;
pub mod dynamics;
pub mod echo;
pub mod error;
pub mod lattice;
pub mod lyapunov;
pub mod runner;

pub use error::{Error, Result};
