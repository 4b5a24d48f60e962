//! Per-point semantic classification of colored 3D point clouds.
//!
//! This crate holds the pure algorithmic half of the classifier: an exact
//! kd-tree, the multi-scale voxel pyramid, covariance eigen-features, HSV
//! color features, and the Random Forest / Gradient Boosted Trees ensembles
//! trained on them. It is `no_std` (with `alloc`); enabling the `parallel`
//! feature pulls in `std` and rayon and parallelizes the hot loops without
//! changing any result.
//!
//! File formats, orchestration and the command line live in the companion
//! `terraclass` crate.
#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod class;
pub mod cloud;
pub mod color;
pub mod eigen;
pub mod ensemble;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod geom;
pub mod pyramid;
pub mod spatial;

mod par;

pub use class::Class;
pub use cloud::{Point, PointCloud};
pub use error::{Error, Result};
pub use features::{FeatureMatrix, FeatureSet};
