//! Nonlinear beta regression with second-order bias-corrected estimators.

pub mod bias;
pub mod bootstrap;
pub mod error;
pub mod fit;
pub mod formula;
pub mod harness;
pub mod io;
pub mod likelihood;
pub mod links;
pub mod muphi;
pub mod special_fn;

pub use error::{Error, Result};
