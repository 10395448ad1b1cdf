pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod measures;
pub mod meanfield;
pub mod rates;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
