//! Segmentation pipeline for multi-view radar heatmaps.
//!
//! The crate turns raw radar point clouds into five 2D power heatmaps
//! (elevation-azimuth, elevation-range, elevation-doppler, range-azimuth,
//! doppler-azimuth), compiles them into a windowed dataset with per-pixel
//! person masks, and trains a small multi-view CNN to segment people in the
//! elevation-azimuth plane.
//!
//! With the default `parallel` feature, batch work (projection, dataset
//! compilation, evaluation) runs on rayon; disabling the feature gives a
//! dependency-free sequential fallback with identical results.

pub mod augment;
pub mod config;
pub mod dataset;
pub mod error;
pub mod grid;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod pointcloud;
pub mod projection;
pub mod train;

pub use error::{Error, Result};
