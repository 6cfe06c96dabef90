pub mod deterministic;
pub mod error;
pub mod expm;
pub mod ld_matrices;
pub mod numeric;
pub mod optimizer;
pub mod oracles;
pub mod params;
pub mod scenario;
pub mod sweep;
pub mod validation;
pub mod variance_rate;

pub use error::{Error, Result};
