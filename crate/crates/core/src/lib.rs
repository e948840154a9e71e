//! Humor detection for scientific paper titles.

pub mod classify;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod lexicons;
pub mod linear;
pub mod lm;
pub mod summary;

pub use error::{Error, Result};
