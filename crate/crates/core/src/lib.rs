pub mod agent;
pub mod buffer;
pub mod dynamics;
pub mod envs;
pub mod error;
pub mod harness;
pub mod planner;
pub mod skip;
pub mod trajectory;
pub mod types;

pub use error::{Error, Result};
