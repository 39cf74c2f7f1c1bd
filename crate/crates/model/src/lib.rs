//! Relative-attention transformer over code tokens, trained to predict
//! method names from their bodies.

pub mod checkpoint;
pub mod config;
pub mod encoding;
pub mod model;
pub mod optim;
pub mod tape;
pub mod train;

pub use config::{ConfigError, ModelConfig, TrainConfig};
pub use model::{Mode, Model, ModelError, StepOutput};
