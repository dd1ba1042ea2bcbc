pub mod annotator;
pub mod argtype_detector;
pub mod artifact;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod generator;
pub mod nn;
pub mod rng;
pub mod scoring;
pub mod synthetic;
pub mod taxonomy;
pub mod text;
pub mod value_detector;

pub use error::{Error, Result};
