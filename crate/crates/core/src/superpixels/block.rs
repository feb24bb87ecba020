//! Axis-aligned block partitioning: superpixels of infinite compactness.

use crate::error::{Error, Result};
use crate::tensor::{GridShape, LabelMap};

/// Partitions the grid into near-cubic axis-aligned boxes.
///
/// The split count along axis `a` is `round(dims[a] / edge)` clamped to
/// `[1, dims[a]]`, where `edge = (P / k_target)^(1/d)`. Remainder pixels go
/// to the last block along each axis. The actual label count is the product
/// of the split counts.
pub fn block_segment(shape: &GridShape, k_target: usize) -> Result<LabelMap> {
    let pixels = shape.pixel_count();
    if k_target == 0 || k_target > pixels {
        return Err(Error::Parameter(format!(
            "k_target {k_target} outside [1, P={pixels}]"
        )));
    }
    let d = shape.ndim();
    let edge = (pixels as f64 / k_target as f64).powf(1.0 / d as f64);
    let splits: Vec<usize> = shape
        .dims()
        .iter()
        .map(|&dim| ((dim as f64 / edge).round() as usize).clamp(1, dim))
        .collect();
    let num_labels: usize = splits.iter().product();

    let bases: Vec<usize> = shape
        .dims()
        .iter()
        .zip(&splits)
        .map(|(&dim, &s)| dim / s)
        .collect();

    let mut labels = vec![0i32; pixels];
    for (i, label) in labels.iter_mut().enumerate() {
        let coords = shape.coords(i);
        let mut block = 0usize;
        for a in 0..d {
            let b = (coords[a] / bases[a]).min(splits[a] - 1);
            block = block * splits[a] + b;
        }
        *label = block as i32;
    }
    LabelMap::new(shape.clone(), num_labels, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(dims: &[usize]) -> GridShape {
        GridShape::new(dims).unwrap()
    }

    #[test]
    fn exact_division_four_blocks() {
        let map = block_segment(&shape(&[4, 4]), 4).unwrap();
        assert_eq!(map.num_labels(), 4);
        #[rustfmt::skip]
        let expected = vec![
            0, 0, 1, 1,
            0, 0, 1, 1,
            2, 2, 3, 3,
            2, 2, 3, 3,
        ];
        assert_eq!(map.labels(), &expected[..]);
    }

    #[test]
    fn identity_partition_when_k_equals_p() {
        let map = block_segment(&shape(&[4, 4]), 16).unwrap();
        assert_eq!(map.num_labels(), 16);
        let expected: Vec<i32> = (0..16).collect();
        assert_eq!(map.labels(), &expected[..]);
    }

    #[test]
    fn rectangular_grid_split_counts() {
        // edge = (24/6)^(1/2) = 2, split counts (3, 2): six 2x2 blocks.
        let map = block_segment(&shape(&[6, 4]), 6).unwrap();
        assert_eq!(map.num_labels(), 6);
        for (i, &l) in map.labels().iter().enumerate() {
            let (y, x) = (i / 4, i % 4);
            assert_eq!(l as usize, (y / 2) * 2 + x / 2);
        }
    }

    #[test]
    fn remainder_goes_to_last_block() {
        // edge = (25/4)^(1/2) = 2.5, split counts (2, 2), base 2: the last
        // block along each axis absorbs the odd row/column.
        let map = block_segment(&shape(&[5, 5]), 4).unwrap();
        assert_eq!(map.num_labels(), 4);
        for (i, &l) in map.labels().iter().enumerate() {
            let (y, x) = (i / 5, i % 5);
            let expected = ((y / 2).min(1) * 2 + (x / 2).min(1)) as i32;
            assert_eq!(l, expected, "pixel ({y},{x})");
        }
    }

    #[test]
    fn three_dimensional_blocks() {
        let map = block_segment(&shape(&[4, 4, 4]), 8).unwrap();
        assert_eq!(map.num_labels(), 8);
        // Each octant is a 2x2x2 cube.
        assert_eq!(map.label_at(0), 0);
        assert_eq!(map.label_at(63), 7);
    }

    #[test]
    fn k_out_of_range() {
        assert!(block_segment(&shape(&[2, 2]), 0).is_err());
        assert!(block_segment(&shape(&[2, 2]), 5).is_err());
    }
}
