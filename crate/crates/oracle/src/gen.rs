//! Deterministic instance generators for randomized checks.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spxpool::netgraph::TrainSample;
use spxpool::superpixels::block_segment;
use spxpool::tensor::{FeatureImage, GridShape, LabelMap};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random 2D or 3D grid with at most `max_pixels` pixels.
pub fn random_grid_shape(rng: &mut ChaCha8Rng, max_pixels: usize, allow_3d: bool) -> GridShape {
    let d = if allow_3d && rng.random_bool(0.5) {
        3
    } else {
        2
    };
    loop {
        let dims: Vec<usize> = (0..d)
            .map(|_| {
                rng.random_range(1..=(max_pixels as f64).powf(1.0 / d as f64).ceil() as usize + 1)
            })
            .collect();
        let p: usize = dims.iter().product();
        if p >= 1 && p <= max_pixels {
            return GridShape::new(&dims).unwrap();
        }
    }
}

/// Features whose values are pairwise distinct within each channel with a
/// minimum gap of 0.01, so max reductions have unambiguous argmaxes and
/// finite differences with step 1e-3 cannot cross a tie.
pub fn distinct_lattice_features(
    rng: &mut ChaCha8Rng,
    shape: &GridShape,
    channels: usize,
) -> FeatureImage {
    let pixels = shape.pixel_count();
    let mut data = Vec::with_capacity(channels * pixels);
    for _ in 0..channels {
        let mut taken = HashSet::new();
        while taken.len() < pixels {
            taken.insert(rng.random_range(0..(pixels as i64 * 50)));
        }
        let mut values: Vec<i64> = taken.into_iter().collect();
        values.sort_unstable();
        // Deterministic shuffle into pixel order.
        for i in (1..values.len()).rev() {
            values.swap(i, rng.random_range(0..=i));
        }
        data.extend(values.into_iter().map(|v| v as f32 * 0.01));
    }
    FeatureImage::new(shape.clone(), channels, data).unwrap()
}

/// Uniform features in [-1, 1).
pub fn uniform_features(rng: &mut ChaCha8Rng, shape: &GridShape, channels: usize) -> FeatureImage {
    let n = channels * shape.pixel_count();
    let data = (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    FeatureImage::new(shape.clone(), channels, data).unwrap()
}

/// A label map with exactly `k` labels, all present: `k` pixels are pinned
/// to distinct labels and the rest drawn uniformly.
pub fn random_label_map(rng: &mut ChaCha8Rng, shape: &GridShape, k: usize) -> LabelMap {
    let pixels = shape.pixel_count();
    assert!(k >= 1 && k <= pixels);
    let mut labels: Vec<i32> = (0..pixels).map(|_| rng.random_range(0..k as i32)).collect();
    // Partial Fisher-Yates: k distinct positions.
    let mut positions: Vec<usize> = (0..pixels).collect();
    for j in 0..k {
        let pick = rng.random_range(j..pixels);
        positions.swap(j, pick);
        labels[positions[j]] = j as i32;
    }
    LabelMap::new(shape.clone(), k, labels).unwrap()
}

/// Standard normal via Box-Muller.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Toy segmentation problem: ground truth is `classes` vertical strips,
/// superpixels are aligned with the strips, and each pixel's feature vector
/// is a class prototype (`2 * onehot`) plus Gaussian noise.
pub fn toy_dataset(
    seed: u64,
    height: usize,
    width: usize,
    classes: usize,
    noise: f64,
    samples: usize,
) -> Vec<TrainSample> {
    let mut rng = rng(seed);
    let shape = GridShape::new(&[height, width]).unwrap();
    let pixels = shape.pixel_count();
    (0..samples)
        .map(|_| {
            let targets: Vec<i32> = (0..pixels)
                .map(|i| ((i % width) * classes / width) as i32)
                .collect();
            let seg = LabelMap::new(shape.clone(), classes, targets.clone()).unwrap();
            let mut data = vec![0.0f32; classes * pixels];
            for i in 0..pixels {
                let class = targets[i] as usize;
                for c in 0..classes {
                    let prototype = if c == class { 2.0 } else { 0.0 };
                    data[c * pixels + i] = (prototype + noise * normal(&mut rng)) as f32;
                }
            }
            TrainSample {
                features: FeatureImage::new(shape.clone(), classes, data).unwrap(),
                seg,
                targets,
            }
        })
        .collect()
}

/// The pixel-only counterpart of a sample: same features and targets, but
/// every pixel is its own superpixel so pooling is the identity.
pub fn identity_seg_sample(sample: &TrainSample) -> TrainSample {
    let shape = sample.features.shape();
    TrainSample {
        features: sample.features.clone(),
        seg: block_segment(shape, shape.pixel_count()).unwrap(),
        targets: sample.targets.clone(),
    }
}
