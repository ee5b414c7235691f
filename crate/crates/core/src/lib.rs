pub mod current;
pub mod cutoff;
pub mod error;
pub mod lattice;
pub mod luttinger;
pub mod modelfile;
pub mod quadrature;
pub mod models;
pub mod response;
pub mod rg;
pub mod spectrum;

pub use error::{Error, Result};
