//! Teacher/student depth completion for transparent objects.

pub mod blocks;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod numerics;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
