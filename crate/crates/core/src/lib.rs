#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod dataset;
pub mod dmdc;
pub mod error;
pub mod exec;
pub mod hankel;
pub mod metrics;
pub mod model_file;
pub mod numerics;
pub mod stats;
pub mod sweep;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
