pub mod cli;
pub mod curvature;
pub mod dynamics;
pub mod error;
pub mod kahler;
pub mod metrics;
pub mod spectral;

pub use error::{KahlerError, Result};
