pub mod audio;
pub mod error;

pub use error::{Error, Result};
pub mod features;
pub mod anchors;
pub mod taxonomy;
pub mod valabel;
pub mod model;
pub mod training;
pub mod metrics;
pub mod seeds;
pub mod manifest;
pub mod fsutil;
pub mod synth;
pub mod pipeline;
