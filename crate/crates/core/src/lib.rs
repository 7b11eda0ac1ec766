pub mod error;
pub mod fields;
pub mod geometry;
pub mod jet;
pub mod misiolek;
pub mod quadrature;
pub mod stability;
pub mod witness;

pub use error::{Error, Result};
