pub mod augment;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod learning;
pub mod metrics;
pub mod scene;
pub mod seed;
pub mod track;

pub use error::{Error, ErrorKind, Result};
