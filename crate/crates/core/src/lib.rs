pub mod classical;
pub mod data;
pub mod detector;
pub mod error;
pub mod flows;
pub mod generative;
pub mod io;
pub mod metrics;
pub mod model_io;
pub mod neighbors;
pub mod nn;
pub mod ocsvm;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
