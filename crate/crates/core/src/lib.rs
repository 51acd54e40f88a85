pub mod dd;
pub mod error;
pub mod fading;
pub mod metrics;
pub mod oracle;
pub mod product;
pub mod quad;
pub mod real;
pub mod specfun;
pub mod validate;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
