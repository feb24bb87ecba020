//! Superpixel and supervoxel pooling for dense 2D/3D feature images.
//!
//! The crate provides:
//!
//! * [`tensor`] — the dense data model (feature images, label maps, pooled
//!   arrays) and the SPXT tensor file format;
//! * [`superpixels`] — SLIC clustering and regular block partitioning with
//!   connectivity enforcement;
//! * [`pooling`] — the pooling layer itself: serial and data-parallel
//!   forward kernels, cached-state backward, and unpooling;
//! * [`netgraph`] — the V1/V2/V3 head topologies around the layer, with
//!   exact gradients and a toy gradient-descent trainer;
//! * [`metrics`] — Dice, IoU and superpixel oracle performance.
//!
//! All public operations are pure functions over immutable inputs and are
//! safe to call from multiple threads.

pub mod error;
pub mod metrics;
pub mod netgraph;
pub mod pooling;
pub mod superpixels;
pub mod tensor;

pub use error::{Error, Result};
