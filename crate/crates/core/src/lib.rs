//! Near-field pose estimation of multi-antenna terminals seen by one extremely large array.

pub mod alignment;
pub mod aoa;
pub mod apple;
pub mod baseline;
pub mod channel;
pub mod circular;
pub mod error;
pub mod geometry;
pub mod laplace;
pub mod mcrb;
pub mod metrics;
pub mod partition;
pub mod scene;

pub use error::{Error, Result};
