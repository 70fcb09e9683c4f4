pub mod data;
pub mod elimination;
pub mod gating;
pub mod gbdt;
pub mod error;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod s2;
pub mod stats;
pub mod synthetic;
pub mod threshold;

pub use error::{Error, Result};
