pub mod analytic;
pub mod config;
pub mod error;
pub mod estimate;
pub mod fit;
pub mod fock;
pub mod harness;
pub mod params;
pub mod record;
pub mod sim;

pub use error::{Error, Result};
pub use params::SourceParams;
