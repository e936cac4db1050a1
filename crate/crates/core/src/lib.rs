pub mod config;
pub mod error;
pub mod extremal;
pub mod generator;
pub mod inference;
pub mod mc;
pub mod model;
pub mod numeric;
pub mod quadrature;
pub mod radial_fit;
pub mod rng;
pub mod sampler;
pub mod stdf;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
