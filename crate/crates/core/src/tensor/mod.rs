//! Dense data model shared by every kernel: feature images, label maps and
//! pooled per-superpixel arrays.
//!
//! Feature data is stored channel-major (`C` planes of `P` pixels each) with
//! the last spatial axis fastest. Labels are 32-bit signed integers,
//! contiguous and 0-based. All types are immutable after construction and
//! safe to share across threads.

mod io;

pub use io::{
    read_class_grid, read_feature_image, read_label_map, read_pooled, read_spxt,
    write_feature_image, write_label_map, write_pooled, write_spxt, TensorData, SPXT_MAGIC,
    SPXT_VERSION,
};

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Spatial dimensions of a 2D (`[H, W]`) or 3D (`[D, H, W]`) grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridShape {
    dims: Vec<usize>,
}

impl GridShape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.len() > 3 {
            return Err(Error::Dimension(format!(
                "grid must have 2 or 3 axes, got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Dimension(format!(
                "every grid axis must be >= 1, got {dims:?}"
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Total pixel count `P`.
    pub fn pixel_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Flat index of integer coordinates (last axis fastest).
    pub fn flat_index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.dims.len());
        let mut idx = 0;
        for (c, d) in coords.iter().zip(&self.dims) {
            debug_assert!(c < d);
            idx = idx * d + c;
        }
        idx
    }

    /// Integer coordinates of a flat index.
    pub fn coords(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for a in (0..self.dims.len()).rev() {
            out[a] = index % self.dims[a];
            index /= self.dims[a];
        }
        out
    }
}

/// Dense real-valued feature volume: `C` channels over `P` grid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    shape: GridShape,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureImage {
    /// Builds a feature image, rejecting length mismatches and non-finite
    /// values (max/avg reductions are undefined over NaN).
    pub fn new(shape: GridShape, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Dimension("channel count must be >= 1".into()));
        }
        let expected = channels
            .checked_mul(shape.pixel_count())
            .ok_or_else(|| Error::Dimension("C*P overflows".into()))?;
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "feature data has {} values, expected C*P = {}*{} = {}",
                data.len(),
                channels,
                shape.pixel_count(),
                expected
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter(
                "feature data contains non-finite values".into(),
            ));
        }
        Ok(Self {
            shape,
            channels,
            data,
        })
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.shape.pixel_count()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// One channel as a contiguous pixel slice.
    pub fn channel(&self, c: usize) -> &[f32] {
        let p = self.pixel_count();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn value(&self, c: usize, pixel: usize) -> f32 {
        self.data[c * self.pixel_count() + pixel]
    }
}

/// Per-pixel superpixel assignment with contiguous 0-based labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    shape: GridShape,
    num_labels: usize,
    labels: Vec<i32>,
}

impl LabelMap {
    /// Builds a label map, checking that every label lies in `[0, K)` and
    /// that every label occurs at least once.
    pub fn new(shape: GridShape, num_labels: usize, labels: Vec<i32>) -> Result<Self> {
        if num_labels == 0 {
            return Err(Error::Dimension("label count must be >= 1".into()));
        }
        if labels.len() != shape.pixel_count() {
            return Err(Error::Dimension(format!(
                "label array has {} entries, expected P = {}",
                labels.len(),
                shape.pixel_count()
            )));
        }
        let mut seen = vec![false; num_labels];
        for &l in &labels {
            if l < 0 || l as usize >= num_labels {
                return Err(Error::Parameter(format!(
                    "label {l} outside [0, {num_labels})"
                )));
            }
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Inconsistency(format!(
                "label {missing} has no pixels"
            )));
        }
        Ok(Self {
            shape,
            num_labels,
            labels,
        })
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn pixel_count(&self) -> usize {
        self.shape.pixel_count()
    }

    /// Label of a pixel as an index.
    pub fn label_at(&self, pixel: usize) -> usize {
        self.labels[pixel] as usize
    }
}

/// `C x K` array of per-superpixel reduced features.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledFeatures {
    channels: usize,
    num_labels: usize,
    data: Vec<f32>,
}

impl PooledFeatures {
    pub fn new(channels: usize, num_labels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * num_labels {
            return Err(Error::Dimension(format!(
                "pooled data has {} values, expected C*K = {}*{} = {}",
                data.len(),
                channels,
                num_labels,
                channels * num_labels
            )));
        }
        Ok(Self {
            channels,
            num_labels,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn value(&self, c: usize, k: usize) -> f32 {
        self.data[c * self.num_labels + k]
    }
}

/// Reduction applied per superpixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Avg,
}

/// State cached by the forward pass and replayed by the backward pass:
/// the maximizing pixel per (channel, superpixel) for max pooling, or the
/// per-superpixel pixel count for average pooling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PoolCache {
    /// `C x K` pixel indices; entry `[c*K + k]` is the smallest pixel index
    /// attaining the maximum of channel `c` over superpixel `k`.
    Max {
        argmax: Vec<usize>,
        num_labels: usize,
    },
    /// Pixel count per superpixel.
    Avg { counts: Vec<u32> },
}

impl PoolCache {
    pub fn mode(&self) -> PoolMode {
        match self {
            PoolCache::Max { .. } => PoolMode::Max,
            PoolCache::Avg { .. } => PoolMode::Avg,
        }
    }
}

/// Renumbers arbitrary non-negative labels to a dense 0-based range,
/// preserving the partition. New ids are assigned by order of first
/// appearance in scan order.
pub fn relabel_contiguous(raw_labels: &[i32], shape: GridShape) -> Result<LabelMap> {
    if raw_labels.len() != shape.pixel_count() {
        return Err(Error::Dimension(format!(
            "raw label array has {} entries, expected P = {}",
            raw_labels.len(),
            shape.pixel_count()
        )));
    }
    let mut remap: HashMap<i32, i32> = HashMap::new();
    let mut next = 0i32;
    let mut labels = Vec::with_capacity(raw_labels.len());
    for &raw in raw_labels {
        if raw < 0 {
            return Err(Error::Parameter(format!("raw label {raw} is negative")));
        }
        let id = *remap.entry(raw).or_insert_with(|| {
            let id = next;
            next += 1;
            id
        });
        labels.push(id);
    }
    LabelMap::new(shape, next as usize, labels)
}
