pub mod artifacts;
pub mod convergence;
pub mod error;
pub mod experiment;
pub mod fbm;
pub mod occupation;
pub mod path_gen;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod stats;
pub mod svg;
pub mod theory_checks;

pub use error::{Error, Result};
