//! The superpixel pooling layer: per-superpixel max/average reduction of a
//! feature image, with cached state for the backward pass, plus the inverse
//! broadcast (unpooling).
//!
//! `P[c,k] = reduce { I[c,i] : S[i] = k }` with `reduce` either max or
//! average. Max pooling caches the maximizing pixel `i*` per (channel,
//! superpixel); its gradient routes `dP[c,k]` entirely to `i*`. Average
//! pooling caches the pixel counts `N(k)`; its gradient spreads `dP[c,k] /
//! N(k)` over the superpixel.
//!
//! Two kernels produce identical results: a serial reference scan and a
//! data-parallel kernel (`pool_forward_parallel`) that assigns workers to
//! grid cells and accumulates through shared atomics.

mod parallel;

pub use parallel::pool_forward_parallel;

use crate::error::{Error, Result};
use crate::tensor::{FeatureImage, LabelMap, PoolCache, PoolMode, PooledFeatures};

fn check_shapes(img: &FeatureImage, seg: &LabelMap) -> Result<()> {
    if img.shape() != seg.shape() {
        return Err(Error::Dimension(format!(
            "image shape {:?} does not match segmentation shape {:?}",
            img.shape().dims(),
            seg.shape().dims()
        )));
    }
    Ok(())
}

/// Packs a value and its pixel index into one u64 whose integer order is
/// (value, then smaller index wins). Larger key = larger value, ties
/// resolve toward the smaller index; -0.0 is canonicalized so float-equal
/// values always tie. One max over keys therefore yields both the max and
/// its spec tie-break argmax in a single reduction.
#[inline]
pub(crate) fn max_key(value: f32, index: u32) -> u64 {
    let v = if value == 0.0 { 0.0f32 } else { value };
    let bits = v.to_bits();
    // Monotone map from finite f32 to u32 order.
    let ord = if bits & 0x8000_0000 != 0 {
        !bits
    } else {
        bits | 0x8000_0000
    };
    ((ord as u64) << 32) | (u32::MAX - index) as u64
}

#[inline]
pub(crate) fn max_key_index(key: u64) -> usize {
    (u32::MAX - key as u32) as usize
}

pub(crate) fn check_max_pixel_limit(pixels: usize) -> Result<()> {
    if pixels > u32::MAX as usize {
        return Err(Error::Dimension(format!(
            "max pooling supports at most {} pixels, got {pixels}",
            u32::MAX
        )));
    }
    Ok(())
}

/// Serial reference kernel. Max-mode ties break toward the smallest pixel
/// index; average sums are accumulated in double precision.
pub fn pool_forward(
    img: &FeatureImage,
    seg: &LabelMap,
    mode: PoolMode,
) -> Result<(PooledFeatures, PoolCache)> {
    check_shapes(img, seg)?;
    let channels = img.channels();
    let pixels = img.pixel_count();
    let num_labels = seg.num_labels();

    match mode {
        PoolMode::Max => {
            check_max_pixel_limit(pixels)?;
            // Every label occurs at least once, so every key slot is
            // written (any finite value's key exceeds the zero init).
            let mut keys = vec![0u64; channels * num_labels];
            for c in 0..channels {
                let plane = img.channel(c);
                let row = &mut keys[c * num_labels..(c + 1) * num_labels];
                for ((i, &v), &label) in plane.iter().enumerate().zip(seg.labels()) {
                    let slot = &mut row[label as usize];
                    let key = max_key(v, i as u32);
                    if key > *slot {
                        *slot = key;
                    }
                }
            }
            let argmax: Vec<usize> = keys.iter().map(|&k| max_key_index(k)).collect();
            let values: Vec<f32> = argmax
                .iter()
                .enumerate()
                .map(|(slot, &i)| img.channel(slot / num_labels)[i])
                .collect();
            Ok((
                PooledFeatures::new(channels, num_labels, values)?,
                PoolCache::Max { argmax, num_labels },
            ))
        }
        PoolMode::Avg => {
            let mut counts = vec![0u32; num_labels];
            for &label in seg.labels() {
                counts[label as usize] += 1;
            }
            let mut sums = vec![0.0f64; channels * num_labels];
            for c in 0..channels {
                let plane = img.channel(c);
                let row = &mut sums[c * num_labels..(c + 1) * num_labels];
                for (&v, &label) in plane.iter().zip(seg.labels()) {
                    row[label as usize] += v as f64;
                }
            }
            let values: Vec<f32> = sums
                .iter()
                .enumerate()
                .map(|(slot, &s)| (s / counts[slot % num_labels] as f64) as f32)
                .collect();
            Ok((
                PooledFeatures::new(channels, num_labels, values)?,
                PoolCache::Avg { counts },
            ))
        }
    }
}

fn check_cache(cache: &PoolCache, seg: &LabelMap, channels: usize) -> Result<()> {
    let num_labels = seg.num_labels();
    match cache {
        PoolCache::Max {
            argmax,
            num_labels: cache_labels,
        } => {
            if *cache_labels != num_labels || argmax.len() != channels * num_labels {
                return Err(Error::Inconsistency(format!(
                    "max cache holds {} entries for K={cache_labels}, expected C*K = {}*{num_labels}",
                    argmax.len(),
                    channels
                )));
            }
            for (slot, &i) in argmax.iter().enumerate() {
                let k = slot % num_labels;
                if i >= seg.pixel_count() || seg.label_at(i) != k {
                    return Err(Error::Inconsistency(format!(
                        "cached argmax pixel {i} does not belong to superpixel {k}"
                    )));
                }
            }
        }
        PoolCache::Avg { counts } => {
            if counts.len() != num_labels {
                return Err(Error::Inconsistency(format!(
                    "avg cache holds {} counts, expected K = {num_labels}",
                    counts.len()
                )));
            }
            if counts.contains(&0) {
                return Err(Error::Inconsistency("avg cache has a zero count".into()));
            }
            let total: u64 = counts.iter().map(|&n| n as u64).sum();
            if total != seg.pixel_count() as u64 {
                return Err(Error::Inconsistency(format!(
                    "avg cache counts sum to {total}, expected P = {}",
                    seg.pixel_count()
                )));
            }
        }
    }
    Ok(())
}

/// Backward pass through the pooling layer. `grad_out` is the upstream
/// gradient with respect to the pooled array (`C x K`); the result is the
/// gradient with respect to the input image (`C x P`).
pub fn pool_backward(
    grad_out: &PooledFeatures,
    cache: &PoolCache,
    seg: &LabelMap,
) -> Result<FeatureImage> {
    if grad_out.num_labels() != seg.num_labels() {
        return Err(Error::Dimension(format!(
            "gradient has {} labels, segmentation has {}",
            grad_out.num_labels(),
            seg.num_labels()
        )));
    }
    let channels = grad_out.channels();
    let pixels = seg.pixel_count();
    let num_labels = seg.num_labels();
    check_cache(cache, seg, channels)?;

    let mut grad_in = vec![0.0f32; channels * pixels];
    match cache {
        PoolCache::Max { argmax, .. } => {
            for c in 0..channels {
                for k in 0..num_labels {
                    let i = argmax[c * num_labels + k];
                    grad_in[c * pixels + i] += grad_out.value(c, k);
                }
            }
        }
        PoolCache::Avg { counts } => {
            for c in 0..channels {
                let row = &mut grad_in[c * pixels..(c + 1) * pixels];
                for (i, slot) in row.iter_mut().enumerate() {
                    let k = seg.label_at(i);
                    *slot = grad_out.value(c, k) / counts[k] as f32;
                }
            }
        }
    }
    FeatureImage::new(seg.shape().clone(), channels, grad_in)
}

/// Broadcasts per-superpixel values back to the pixels: `out[c,i] =
/// pooled[c, S[i]]`.
pub fn unpool_broadcast(pooled: &PooledFeatures, seg: &LabelMap) -> Result<FeatureImage> {
    if pooled.num_labels() != seg.num_labels() {
        return Err(Error::Dimension(format!(
            "pooled array has {} labels, segmentation has {}",
            pooled.num_labels(),
            seg.num_labels()
        )));
    }
    let channels = pooled.channels();
    let pixels = seg.pixel_count();
    let mut data = vec![0.0f32; channels * pixels];
    for c in 0..channels {
        let row = &mut data[c * pixels..(c + 1) * pixels];
        for (i, slot) in row.iter_mut().enumerate() {
            *slot = pooled.value(c, seg.label_at(i));
        }
    }
    FeatureImage::new(seg.shape().clone(), channels, data)
}

/// Transpose of the broadcast: per-superpixel sums of incoming per-pixel
/// gradients.
pub fn unpool_backward(grad_pixels: &FeatureImage, seg: &LabelMap) -> Result<PooledFeatures> {
    check_shapes(grad_pixels, seg)?;
    let channels = grad_pixels.channels();
    let num_labels = seg.num_labels();
    let mut sums = vec![0.0f64; channels * num_labels];
    for c in 0..channels {
        let plane = grad_pixels.channel(c);
        let row = c * num_labels;
        for (i, &v) in plane.iter().enumerate() {
            sums[row + seg.label_at(i)] += v as f64;
        }
    }
    PooledFeatures::new(
        channels,
        num_labels,
        sums.iter().map(|&s| s as f32).collect(),
    )
}
