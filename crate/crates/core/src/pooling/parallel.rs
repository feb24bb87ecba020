//! Data-parallel pooling kernel.
//!
//! The grid is partitioned into axis-aligned cells of edge `cell_edge`;
//! one worker scans each (channel, cell) pair and folds its pixels into a
//! shared `C x K` output through atomic read-modify-write updates
//! (atomic max, or add plus count increment). Channels never share output
//! entries, so they form independent worker groups.
//!
//! Max mode reduces the same packed (value, index) keys as the serial
//! kernel, so values and argmax cache come out bit-identical regardless of
//! scheduling. Average mode accumulates in f64; only the summation order
//! differs from the serial kernel.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pooling::{check_max_pixel_limit, max_key, max_key_index};
use crate::tensor::{FeatureImage, GridShape, LabelMap, PoolCache, PoolMode, PooledFeatures};

/// A box of the grid partition: per-axis half-open ranges.
struct Cell {
    ranges: Vec<(usize, usize)>,
}

fn split_cells(shape: &GridShape, cell_edge: usize) -> Vec<Cell> {
    let axis_ranges: Vec<Vec<(usize, usize)>> = shape
        .dims()
        .iter()
        .map(|&dim| {
            (0..dim.div_ceil(cell_edge))
                .map(|i| (i * cell_edge, ((i + 1) * cell_edge).min(dim)))
                .collect()
        })
        .collect();
    let mut cells = Vec::new();
    let mut idx = vec![0usize; axis_ranges.len()];
    loop {
        cells.push(Cell {
            ranges: idx
                .iter()
                .zip(&axis_ranges)
                .map(|(&i, ranges)| ranges[i])
                .collect(),
        });
        let mut a = idx.len();
        loop {
            if a == 0 {
                return cells;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < axis_ranges[a].len() {
                break;
            }
            idx[a] = 0;
        }
    }
}

impl Cell {
    /// Visits every flat pixel index in the cell in scan order.
    fn for_each_pixel(&self, dims: &[usize], mut f: impl FnMut(usize)) {
        match *self.ranges.as_slice() {
            [(y0, y1), (x0, x1)] => {
                let w = dims[1];
                for y in y0..y1 {
                    let base = y * w;
                    for x in x0..x1 {
                        f(base + x);
                    }
                }
            }
            [(z0, z1), (y0, y1), (x0, x1)] => {
                let (h, w) = (dims[1], dims[2]);
                for z in z0..z1 {
                    for y in y0..y1 {
                        let base = (z * h + y) * w;
                        for x in x0..x1 {
                            f(base + x);
                        }
                    }
                }
            }
            _ => unreachable!("grids have 2 or 3 axes"),
        }
    }
}

fn atomic_add_f64(slot: &AtomicU64, value: f64) {
    let mut current = slot.load(Ordering::Relaxed);
    loop {
        let next = (f64::from_bits(current) + value).to_bits();
        match slot.compare_exchange_weak(current, next, Ordering::Relaxed, Ordering::Relaxed) {
            Ok(_) => return,
            Err(seen) => current = seen,
        }
    }
}

/// Parallel variant of [`crate::pooling::pool_forward`] with an identical
/// contract: max mode is bit-identical (values and cache), average mode
/// differs only by f64 summation order.
pub fn pool_forward_parallel(
    img: &FeatureImage,
    seg: &LabelMap,
    mode: PoolMode,
    cell_edge: usize,
) -> Result<(PooledFeatures, PoolCache)> {
    if img.shape() != seg.shape() {
        return Err(Error::Dimension(format!(
            "image shape {:?} does not match segmentation shape {:?}",
            img.shape().dims(),
            seg.shape().dims()
        )));
    }
    if cell_edge == 0 {
        return Err(Error::Parameter("cell_edge must be >= 1".into()));
    }
    let channels = img.channels();
    let num_labels = seg.num_labels();
    let dims = img.shape().dims().to_vec();
    let cells = split_cells(img.shape(), cell_edge);

    match mode {
        PoolMode::Max => {
            check_max_pixel_limit(img.pixel_count())?;
            let keys: Vec<AtomicU64> = (0..channels * num_labels)
                .map(|_| AtomicU64::new(0))
                .collect();
            par_channel_cells(channels, &cells, |c, cell| {
                let plane = img.channel(c);
                let row = &keys[c * num_labels..(c + 1) * num_labels];
                cell.for_each_pixel(&dims, |i| {
                    row[seg.label_at(i)].fetch_max(max_key(plane[i], i as u32), Ordering::Relaxed);
                });
            });

            let argmax: Vec<usize> = keys
                .into_iter()
                .map(|k| max_key_index(k.into_inner()))
                .collect();
            let out: Vec<f32> = argmax
                .iter()
                .enumerate()
                .map(|(slot, &i)| img.channel(slot / num_labels)[i])
                .collect();
            Ok((
                PooledFeatures::new(channels, num_labels, out)?,
                PoolCache::Max { argmax, num_labels },
            ))
        }
        PoolMode::Avg => {
            let counts: Vec<AtomicU32> = (0..num_labels).map(|_| AtomicU32::new(0)).collect();
            cells.par_iter().for_each(|cell| {
                cell.for_each_pixel(&dims, |i| {
                    counts[seg.label_at(i)].fetch_add(1, Ordering::Relaxed);
                });
            });
            let sums: Vec<AtomicU64> = (0..channels * num_labels)
                .map(|_| AtomicU64::new(0.0f64.to_bits()))
                .collect();
            par_channel_cells(channels, &cells, |c, cell| {
                let plane = img.channel(c);
                let row = &sums[c * num_labels..(c + 1) * num_labels];
                cell.for_each_pixel(&dims, |i| {
                    atomic_add_f64(&row[seg.label_at(i)], plane[i] as f64);
                });
            });

            let counts: Vec<u32> = counts.into_iter().map(AtomicU32::into_inner).collect();
            let values: Vec<f32> = sums
                .into_iter()
                .enumerate()
                .map(|(slot, s)| {
                    (f64::from_bits(s.into_inner()) / counts[slot % num_labels] as f64) as f32
                })
                .collect();
            Ok((
                PooledFeatures::new(channels, num_labels, values)?,
                PoolCache::Avg { counts },
            ))
        }
    }
}

/// Runs `work(channel, cell)` over the full channel x cell product.
fn par_channel_cells(channels: usize, cells: &[Cell], work: impl Fn(usize, &Cell) + Sync) {
    (0..channels * cells.len())
        .into_par_iter()
        .for_each(|job| work(job / cells.len(), &cells[job % cells.len()]));
}
