//! Fact-checking probes for diagnosing whether claim veracity models reason
//! over evidence or exploit signal carried by the evidence alone.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod neural;
pub mod probes;
pub mod seed;

pub use error::{Error, Result};
