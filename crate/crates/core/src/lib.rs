pub mod coupling;
pub mod error;
pub mod harness;
pub mod measure;
pub mod mixing;
pub mod mollify;
pub mod physdep;
pub mod processes;
pub mod quadrature;
pub mod rng;
pub mod transport;

pub use error::{Error, Result};
