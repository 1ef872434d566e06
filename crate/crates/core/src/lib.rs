// Parameter checks are written `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autoencoder;
mod binio;
pub mod bundle;
pub mod config;
pub mod discretization;
pub mod error;
pub mod fom;
pub mod hybrid;
pub mod linalg;
pub mod online;
pub mod partition;
pub mod pipeline;
pub mod pod;
pub mod problem;
pub mod snapshot;
pub mod svg;

pub use error::{Result, RomError};
