pub mod elliptic;
pub mod error;
pub mod evolution;
pub mod index;
pub mod operators;
pub mod roots;
pub mod spectral;
pub mod stability;
pub mod waves;

pub use error::{CnoidalError, Result};
