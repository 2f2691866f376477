//! Reference-free image quality prediction.
//!
//! A small fully convolutional network learns to predict the JPEG quality
//! factor of image patches it has degraded itself, and is then reused to rank
//! other degradations, score image collections, and act as a frozen
//! perceptual loss.

pub mod corpus;
pub mod data;
pub mod degrade;
pub mod error;
pub mod eval;
pub mod jpeg;
pub mod model;
pub mod nn;
pub mod raster;
pub mod restore;
pub mod rng;
pub mod stats;
pub mod tensor;

pub use error::{CheckpointError, Error, Result};
pub use tensor::{Shape, Tensor};
