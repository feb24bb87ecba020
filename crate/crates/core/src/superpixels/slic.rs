//! SLIC clustering: k-means-like iteration in joint spatial+feature space
//! with grid seeding, gradient-based seed perturbation, windowed
//! assignment and connectivity enforcement.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::superpixels::enforce_connectivity;
use crate::tensor::{relabel_contiguous, FeatureImage, GridShape, LabelMap};

/// Pixels are assigned in parallel over chunks of this many pixels; each
/// chunk also produces one partial sum per center for the update step.
const ASSIGN_CHUNK: usize = 4096;

#[derive(Debug, Clone)]
pub struct SlicParams {
    /// Requested superpixel count; the result has at most twice as many.
    pub k_target: usize,
    /// Spatial-vs-feature weight `m`; larger is more compact.
    pub compactness: f64,
    /// Fixed iteration count for the assign/update loop.
    pub iterations: usize,
    /// Fraction of the nominal region volume `S^d` below which a connected
    /// region is absorbed into a neighbor.
    pub min_region_factor: f64,
}

impl SlicParams {
    pub fn new(k_target: usize) -> Self {
        Self {
            k_target,
            compactness: 10.0,
            iterations: 10,
            min_region_factor: 0.25,
        }
    }

    pub fn with_compactness(mut self, m: f64) -> Self {
        self.compactness = m;
        self
    }

    pub fn with_iterations(mut self, iters: usize) -> Self {
        self.iterations = iters;
        self
    }

    fn validate(&self, pixels: usize) -> Result<()> {
        if self.k_target == 0 || self.k_target > pixels {
            return Err(Error::Parameter(format!(
                "k_target {} outside [1, P={pixels}]",
                self.k_target
            )));
        }
        let m_valid = self.compactness.is_finite() && self.compactness >= 0.0;
        if !m_valid {
            return Err(Error::Parameter(
                "compactness must be finite and >= 0".into(),
            ));
        }
        if self.iterations == 0 {
            return Err(Error::Parameter("iterations must be >= 1".into()));
        }
        if !(self.min_region_factor > 0.0 && self.min_region_factor <= 1.0) {
            return Err(Error::Parameter(
                "min_region_factor must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// One cluster: continuous spatial position plus a feature vector.
#[derive(Debug, Clone)]
pub struct ClusterCenter {
    pub spatial: Vec<f64>,
    pub feature: Vec<f64>,
}

/// Segments `img` into roughly `k_target` face-connected superpixels.
pub fn slic_segment(img: &FeatureImage, params: &SlicParams) -> Result<LabelMap> {
    let shape = img.shape().clone();
    let pixels = shape.pixel_count();
    params.validate(pixels)?;

    let d = shape.ndim();
    let s_grid = (pixels as f64 / params.k_target as f64).powf(1.0 / d as f64);
    let splits = seed_split_counts(&shape, params.k_target, s_grid);
    let mut centers = seed_centers(img, &splits);

    let mut labels = vec![0u32; pixels];
    for _ in 0..params.iterations {
        assign_pixels(img, &centers, s_grid, params.compactness, &mut labels);
        update_centers(img, &labels, &mut centers);
    }

    let raw: Vec<i32> = labels.iter().map(|&l| l as i32).collect();
    let assigned = relabel_contiguous(&raw, shape)?;
    let nominal_region = pixels as f64 / params.k_target as f64;
    let min_region = (params.min_region_factor * nominal_region).floor().max(1.0) as usize;
    Ok(enforce_connectivity(&assigned, min_region))
}

/// Chooses per-axis seed counts whose product lies in `[k_target, 2*k_target]`.
///
/// Starts from `round(dims[a] / s_grid)` and then grows the axis with the
/// largest per-cell extent (or shrinks the axis with the smallest) until the
/// product is in range. Ties prefer the last (fastest-varying) axis.
fn seed_split_counts(shape: &GridShape, k_target: usize, s_grid: f64) -> Vec<usize> {
    let dims = shape.dims();
    let mut splits: Vec<usize> = dims
        .iter()
        .map(|&dim| ((dim as f64 / s_grid).round() as usize).clamp(1, dim))
        .collect();

    loop {
        let product: usize = splits.iter().product();
        if product < k_target {
            let grow = (0..dims.len())
                .filter(|&a| splits[a] < dims[a])
                .max_by(|&a, &b| {
                    let ea = dims[a] as f64 / splits[a] as f64;
                    let eb = dims[b] as f64 / splits[b] as f64;
                    ea.partial_cmp(&eb).unwrap().then(a.cmp(&b))
                });
            match grow {
                Some(a) => splits[a] += 1,
                None => break, // product == P >= k_target, unreachable
            }
        } else if product > 2 * k_target {
            let shrink = (0..dims.len()).filter(|&a| splits[a] > 1).min_by(|&a, &b| {
                let ea = dims[a] as f64 / splits[a] as f64;
                let eb = dims[b] as f64 / splits[b] as f64;
                ea.partial_cmp(&eb).unwrap().then(b.cmp(&a))
            });
            match shrink {
                Some(a) => splits[a] -= 1,
                None => break,
            }
        } else {
            break;
        }
    }
    splits
}

/// Places one seed at the center of each grid cell, perturbed to the
/// lowest-gradient pixel within its 3^d neighborhood.
fn seed_centers(img: &FeatureImage, splits: &[usize]) -> Vec<ClusterCenter> {
    let shape = img.shape();
    let dims = shape.dims();
    let d = dims.len();
    let total: usize = splits.iter().product();

    let mut centers = Vec::with_capacity(total);
    let mut cell = vec![0usize; d];
    for _ in 0..total {
        let mut coords = vec![0usize; d];
        for a in 0..d {
            let pos = (cell[a] as f64 + 0.5) * dims[a] as f64 / splits[a] as f64;
            coords[a] = (pos.floor() as usize).min(dims[a] - 1);
        }
        let seed = perturb_to_low_gradient(img, &coords);
        let pixel = shape.flat_index(&seed);
        centers.push(ClusterCenter {
            spatial: seed.iter().map(|&c| c as f64).collect(),
            feature: (0..img.channels())
                .map(|c| img.value(c, pixel) as f64)
                .collect(),
        });
        // Advance the cell counter, last axis fastest.
        for a in (0..d).rev() {
            cell[a] += 1;
            if cell[a] < splits[a] {
                break;
            }
            cell[a] = 0;
        }
    }
    centers
}

/// Squared feature difference of face neighbors, summed over channels and
/// axes. Coordinates are clamped at the border.
fn gradient_at(img: &FeatureImage, coords: &[usize]) -> f64 {
    let shape = img.shape();
    let dims = shape.dims();
    let mut g = 0.0;
    for a in 0..dims.len() {
        let mut plus = coords.to_vec();
        plus[a] = (coords[a] + 1).min(dims[a] - 1);
        let mut minus = coords.to_vec();
        minus[a] = coords[a].saturating_sub(1);
        let (ip, im) = (shape.flat_index(&plus), shape.flat_index(&minus));
        for c in 0..img.channels() {
            let diff = img.value(c, ip) as f64 - img.value(c, im) as f64;
            g += diff * diff;
        }
    }
    g
}

fn perturb_to_low_gradient(img: &FeatureImage, coords: &[usize]) -> Vec<usize> {
    let dims = img.shape().dims();
    let d = dims.len();
    let mut best = coords.to_vec();
    let mut best_g = gradient_at(img, coords);

    let mut offsets = vec![-1isize; d];
    loop {
        let mut candidate = Vec::with_capacity(d);
        let mut in_bounds = true;
        for a in 0..d {
            let c = coords[a] as isize + offsets[a];
            if c < 0 || c as usize >= dims[a] {
                in_bounds = false;
                break;
            }
            candidate.push(c as usize);
        }
        if in_bounds && candidate != coords {
            let g = gradient_at(img, &candidate);
            if g < best_g {
                best_g = g;
                best = candidate;
            }
        }
        // Advance offsets over the 3^d neighborhood.
        let mut a = d;
        loop {
            if a == 0 {
                return best;
            }
            a -= 1;
            offsets[a] += 1;
            if offsets[a] <= 1 {
                break;
            }
            offsets[a] = -1;
        }
    }
}

/// Spatial bucketing of centers with cell edge `s_grid`, so each pixel only
/// examines centers within its 2*s_grid window.
struct CenterBuckets {
    grid: Vec<Vec<u32>>,
    counts: Vec<usize>,
    edge: f64,
}

impl CenterBuckets {
    fn build(centers: &[ClusterCenter], dims: &[usize], edge: f64) -> Self {
        let counts: Vec<usize> = dims
            .iter()
            .map(|&dim| (dim as f64 / edge).ceil().max(1.0) as usize)
            .collect();
        let total: usize = counts.iter().product();
        let mut grid = vec![Vec::new(); total];
        for (idx, center) in centers.iter().enumerate() {
            let mut b = 0usize;
            for (a, &n) in counts.iter().enumerate() {
                let cell = ((center.spatial[a] / edge).floor() as usize).min(n - 1);
                b = b * n + cell;
            }
            grid[b].push(idx as u32);
        }
        Self { grid, counts, edge }
    }

    /// Calls `visit` for every center in buckets within 2 cells of `coords`.
    fn for_candidates(&self, coords: &[usize], mut visit: impl FnMut(u32)) {
        let d = self.counts.len();
        let mut cell = vec![0isize; d];
        for a in 0..d {
            cell[a] =
                ((coords[a] as f64 / self.edge).floor() as isize).min(self.counts[a] as isize - 1);
        }
        let mut offsets = vec![-2isize; d];
        loop {
            let mut b = 0usize;
            let mut in_bounds = true;
            for a in 0..d {
                let c = cell[a] + offsets[a];
                if c < 0 || c as usize >= self.counts[a] {
                    in_bounds = false;
                    break;
                }
                b = b * self.counts[a] + c as usize;
            }
            if in_bounds {
                for &idx in &self.grid[b] {
                    visit(idx);
                }
            }
            let mut a = d;
            loop {
                if a == 0 {
                    return;
                }
                a -= 1;
                offsets[a] += 1;
                if offsets[a] <= 2 {
                    break;
                }
                offsets[a] = -2;
            }
        }
    }
}

/// Distance of a pixel to a center: `d_feat^2 + (d_spatial / s_grid)^2 * m^2`
/// (the square of the SLIC distance; the square root is monotone and never
/// needed for comparisons).
fn distance_sq(
    img: &FeatureImage,
    pixel: usize,
    coords: &[usize],
    center: &ClusterCenter,
    s_grid: f64,
    m: f64,
) -> f64 {
    let mut feat = 0.0;
    for c in 0..img.channels() {
        let diff = img.value(c, pixel) as f64 - center.feature[c];
        feat += diff * diff;
    }
    let mut sp = 0.0;
    for (a, &x) in coords.iter().enumerate() {
        let diff = x as f64 - center.spatial[a];
        sp += diff * diff;
    }
    feat + sp / (s_grid * s_grid) * m * m
}

fn assign_pixels(
    img: &FeatureImage,
    centers: &[ClusterCenter],
    s_grid: f64,
    m: f64,
    labels: &mut [u32],
) {
    let shape = img.shape();
    let dims = shape.dims();
    let buckets = CenterBuckets::build(centers, dims, s_grid);
    let window = 2.0 * s_grid;

    labels
        .par_chunks_mut(ASSIGN_CHUNK)
        .enumerate()
        .for_each(|(chunk, out)| {
            let base = chunk * ASSIGN_CHUNK;
            for (off, slot) in out.iter_mut().enumerate() {
                let pixel = base + off;
                let coords = shape.coords(pixel);
                let mut best = u32::MAX;
                let mut best_d = f64::INFINITY;
                let consider = |idx: u32, best: &mut u32, best_d: &mut f64| {
                    let center = &centers[idx as usize];
                    let d = distance_sq(img, pixel, &coords, center, s_grid, m);
                    if d < *best_d || (d == *best_d && idx < *best) {
                        *best_d = d;
                        *best = idx;
                    }
                };
                buckets.for_candidates(&coords, |idx| {
                    let center = &centers[idx as usize];
                    let inside = coords
                        .iter()
                        .enumerate()
                        .all(|(a, &x)| (x as f64 - center.spatial[a]).abs() <= window);
                    if inside {
                        consider(idx, &mut best, &mut best_d);
                    }
                });
                if best == u32::MAX {
                    // No center within the window; fall back to a full scan.
                    for idx in 0..centers.len() as u32 {
                        consider(idx, &mut best, &mut best_d);
                    }
                }
                *slot = best;
            }
        });
}

/// Moves each center to the mean position/feature of its assigned pixels.
/// Per-chunk partial sums are reduced in chunk order so the result does not
/// depend on scheduling. Centers with no pixels stay in place.
fn update_centers(img: &FeatureImage, labels: &[u32], centers: &mut [ClusterCenter]) {
    let shape = img.shape();
    let d = shape.ndim();
    let channels = img.channels();
    let stride = d + channels + 1; // spatial sums, feature sums, count

    let partials: Vec<Vec<f64>> = labels
        .par_chunks(ASSIGN_CHUNK)
        .enumerate()
        .map(|(chunk, part)| {
            let base = chunk * ASSIGN_CHUNK;
            let mut acc = vec![0.0f64; centers.len() * stride];
            for (off, &label) in part.iter().enumerate() {
                let pixel = base + off;
                let coords = shape.coords(pixel);
                let row = label as usize * stride;
                for a in 0..d {
                    acc[row + a] += coords[a] as f64;
                }
                for c in 0..channels {
                    acc[row + d + c] += img.value(c, pixel) as f64;
                }
                acc[row + d + channels] += 1.0;
            }
            acc
        })
        .collect();

    let mut totals = vec![0.0f64; centers.len() * stride];
    for part in partials {
        for (t, v) in totals.iter_mut().zip(part) {
            *t += v;
        }
    }

    for (k, center) in centers.iter_mut().enumerate() {
        let row = k * stride;
        let count = totals[row + d + channels];
        if count == 0.0 {
            continue;
        }
        for a in 0..d {
            center.spatial[a] = totals[row + a] / count;
        }
        for c in 0..channels {
            center.feature[c] = totals[row + d + c] / count;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_image(dims: &[usize], channels: usize, value: f32) -> FeatureImage {
        let shape = GridShape::new(dims).unwrap();
        let n = channels * shape.pixel_count();
        FeatureImage::new(shape, channels, vec![value; n]).unwrap()
    }

    #[test]
    fn single_cluster_covers_everything() {
        let img = constant_image(&[5, 7], 2, 3.0);
        let map = slic_segment(&img, &SlicParams::new(1)).unwrap();
        assert_eq!(map.num_labels(), 1);
        assert!(map.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn constant_image_yields_grid_blocks() {
        let img = constant_image(&[64, 64], 1, 0.5);
        let params = SlicParams::new(16).with_compactness(10.0);
        let map = slic_segment(&img, &params).unwrap();
        assert_eq!(map.num_labels(), 16);
        // Each region's bounding box must be within 1 pixel of the exact
        // 16x16 grid cell.
        let mut bbox = vec![(usize::MAX, 0usize, usize::MAX, 0usize); 16];
        for i in 0..map.pixel_count() {
            let (y, x) = (i / 64, i % 64);
            let b = &mut bbox[map.label_at(i)];
            b.0 = b.0.min(y);
            b.1 = b.1.max(y);
            b.2 = b.2.min(x);
            b.3 = b.3.max(x);
        }
        let mut cells: Vec<(usize, usize, usize, usize)> = Vec::new();
        for by in 0..4 {
            for bx in 0..4 {
                cells.push((by * 16, by * 16 + 15, bx * 16, bx * 16 + 15));
            }
        }
        for b in &bbox {
            let ok = cells.iter().any(|c| {
                b.0.abs_diff(c.0) <= 1
                    && b.1.abs_diff(c.1) <= 1
                    && b.2.abs_diff(c.2) <= 1
                    && b.3.abs_diff(c.3) <= 1
            });
            assert!(ok, "bounding box {b:?} not within 1 pixel of any grid cell");
        }
    }

    #[test]
    fn constant_image_labels_do_not_depend_on_value() {
        let a = slic_segment(&constant_image(&[20, 20], 1, 0.0), &SlicParams::new(4)).unwrap();
        let b = slic_segment(&constant_image(&[20, 20], 1, 7.5), &SlicParams::new(4)).unwrap();
        assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn two_half_image_boundary_at_column_50() {
        let shape = GridShape::new(&[100, 100]).unwrap();
        let data: Vec<f32> = (0..10000)
            .map(|i| if i % 100 < 50 { 0.0 } else { 1.0 })
            .collect();
        let img = FeatureImage::new(shape, 1, data).unwrap();
        let params = SlicParams::new(2).with_compactness(0.1);
        let map = slic_segment(&img, &params).unwrap();
        assert_eq!(map.num_labels(), 2);
        for i in 0..10000 {
            let expected = if i % 100 < 50 {
                map.label_at(0)
            } else {
                map.label_at(50)
            };
            assert_eq!(map.label_at(i), expected, "pixel {i}");
        }
    }

    #[test]
    fn k_larger_than_p_is_rejected() {
        let img = constant_image(&[2, 2], 1, 0.0);
        assert!(slic_segment(&img, &SlicParams::new(5)).is_err());
    }

    #[test]
    fn label_count_within_double_target() {
        let img = constant_image(&[30, 30], 1, 0.0);
        for k in [1, 2, 3, 5, 9, 30, 100] {
            let map = slic_segment(&img, &SlicParams::new(k)).unwrap();
            assert!(
                map.num_labels() <= 2 * k,
                "k_target={k} produced {}",
                map.num_labels()
            );
        }
    }

    #[test]
    fn three_dimensional_segmentation() {
        let img = constant_image(&[8, 8, 8], 1, 1.0);
        let map = slic_segment(&img, &SlicParams::new(8)).unwrap();
        assert_eq!(map.num_labels(), 8);
    }
}
