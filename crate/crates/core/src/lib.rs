pub mod archive;
pub mod env;
pub mod error;
pub mod factors;
pub mod init;
pub mod metrics;
pub mod physics;
pub mod rules;

pub use error::{Error, Result};
