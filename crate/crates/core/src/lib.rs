pub mod cells;
pub mod config;
pub mod data;
pub mod elbo;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod synthetic;
pub mod train;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use model::{Dialogue, Model, ModelConfig, Turn};
