//! Dense networks, reverse-mode gradients, Adam and early-stopped training.

mod adam;
mod mlp;
mod tape;
mod train;

pub use adam::Adam;
pub use mlp::{Activation, Dense, Mlp, Model};
pub use tape::{Gradients, Mat, Tape, Var};
pub use train::{train, History, Objective, TrainOptions, TrainReport, TrainStatus};
