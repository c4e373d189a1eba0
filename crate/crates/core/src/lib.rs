pub mod autodiff;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod generator;
pub mod gradcheck;
pub mod graph;
pub mod harness;
pub mod lexicon;
pub mod metrics;
pub mod nn;

pub use error::{AtagError, Result};
