pub mod amenable;
pub mod cli;
pub mod construction;
pub mod diagnostics;
pub mod error;
pub mod group;
pub mod measure;
pub mod walk;

pub use error::{Error, Result};
