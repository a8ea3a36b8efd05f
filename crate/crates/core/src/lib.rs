pub mod cv;
pub mod dataset;
pub mod error;
pub mod explain;
pub mod forest;
pub mod impute;
pub mod l1;
pub mod metrics;
pub mod pipeline;
pub mod plot;
pub mod rng;
pub mod synth;
pub mod targets;

pub use error::{Error, Result};
