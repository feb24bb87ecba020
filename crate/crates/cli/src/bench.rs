//! Benchmark harness: sweeps the pooling kernels over image sizes and
//! superpixel counts, reporting median and min wall-clock per point as CSV.

use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spxpool::error::{Error, Result};
use spxpool::pooling::{pool_forward, pool_forward_parallel};
use spxpool::superpixels::block_segment;
use spxpool::tensor::{FeatureImage, GridShape, LabelMap, PoolMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Serial,
    Parallel,
}

impl Kernel {
    pub fn name(self) -> &'static str {
        match self {
            Kernel::Serial => "serial",
            Kernel::Parallel => "parallel",
        }
    }
}

/// Which kernels a sweep exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelSpec {
    Serial,
    Parallel,
    Both,
}

impl KernelSpec {
    fn kernels(self) -> &'static [Kernel] {
        match self {
            KernelSpec::Serial => &[Kernel::Serial],
            KernelSpec::Parallel => &[Kernel::Parallel],
            KernelSpec::Both => &[Kernel::Serial, Kernel::Parallel],
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Pixel counts to sweep.
    pub sizes: Vec<usize>,
    /// Superpixel counts to sweep.
    pub ks: Vec<usize>,
    pub channels: usize,
    /// Timed runs per sweep point, after one warm-up; at least 3.
    pub repeats: usize,
    pub mode: PoolMode,
    pub kernel: KernelSpec,
    pub seed: u64,
    pub cell_edge: usize,
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub pixels: usize,
    pub k: usize,
    pub kernel: Kernel,
    pub mode: PoolMode,
    pub median_s: f64,
    pub min_s: f64,
}

fn validate(cfg: &BenchConfig) -> Result<()> {
    if cfg.repeats < 3 {
        return Err(Error::Parameter(format!(
            "repeats must be >= 3, got {}",
            cfg.repeats
        )));
    }
    if cfg.sizes.is_empty() || cfg.ks.is_empty() {
        return Err(Error::Parameter("empty sweep".into()));
    }
    if cfg.sizes.iter().chain(&cfg.ks).any(|&v| v == 0) || cfg.channels == 0 {
        return Err(Error::Parameter("sweep values must be >= 1".into()));
    }
    if cfg.cell_edge == 0 {
        return Err(Error::Parameter("cell_edge must be >= 1".into()));
    }
    Ok(())
}

/// Near-square 2D grid with exactly `pixels` pixels: the largest divisor
/// not above the square root becomes the height.
fn grid_for(pixels: usize) -> GridShape {
    let mut h = (pixels as f64).sqrt() as usize;
    while h > 1 && !pixels.is_multiple_of(h) {
        h -= 1;
    }
    GridShape::new(&[h.max(1), pixels / h.max(1)]).expect("h*w = pixels >= 1")
}

fn resource_err(pixels: usize, k: usize, what: &str) -> Error {
    Error::Resource {
        pixels,
        labels: k,
        msg: format!("allocation of {what} failed"),
    }
}

fn random_image(
    shape: &GridShape,
    channels: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<FeatureImage> {
    let n = channels * shape.pixel_count();
    let mut data: Vec<f32> = Vec::new();
    data.try_reserve_exact(n)
        .map_err(|_| resource_err(shape.pixel_count(), k, "feature image"))?;
    data.extend((0..n).map(|_| rng.random_range(0.0f32..1.0)));
    FeatureImage::new(shape.clone(), channels, data)
}

fn time_runs(
    img: &FeatureImage,
    seg: &LabelMap,
    mode: PoolMode,
    kernel: Kernel,
    cell_edge: usize,
    repeats: usize,
) -> Result<(f64, f64)> {
    let run = || -> Result<()> {
        match kernel {
            Kernel::Serial => pool_forward(img, seg, mode)?,
            Kernel::Parallel => pool_forward_parallel(img, seg, mode, cell_edge)?,
        };
        Ok(())
    };
    run()?; // warm-up
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        run()?;
        samples.push(start.elapsed().as_secs_f64());
    }
    samples.sort_by(f64::total_cmp);
    Ok((samples[samples.len() / 2], samples[0]))
}

/// Runs the sweep serially (one point at a time, so timings do not
/// contaminate each other) and returns one row per (P, K, kernel).
pub fn bench_run(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    validate(cfg)?;
    let mut rows = Vec::new();
    for &pixels in &cfg.sizes {
        for &k in &cfg.ks {
            if k > pixels {
                return Err(Error::Parameter(format!(
                    "K={k} exceeds P={pixels} in the sweep"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(
                cfg.seed ^ (pixels as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ k as u64,
            );
            let shape = grid_for(pixels);
            let img = random_image(&shape, cfg.channels, k, &mut rng)?;
            let seg = block_segment(&shape, k)?;
            for &kernel in cfg.kernel.kernels() {
                let (median_s, min_s) =
                    time_runs(&img, &seg, cfg.mode, kernel, cfg.cell_edge, cfg.repeats)?;
                rows.push(BenchRow {
                    pixels,
                    k: seg.num_labels(),
                    kernel,
                    mode: cfg.mode,
                    median_s,
                    min_s,
                });
            }
        }
    }
    Ok(rows)
}

pub fn mode_name(mode: PoolMode) -> &'static str {
    match mode {
        PoolMode::Max => "max",
        PoolMode::Avg => "avg",
    }
}

/// CSV with the fixed column set `P,K,kernel,mode,median_s,min_s`.
pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("P,K,kernel,mode,median_s,min_s\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.9},{:.9}\n",
            row.pixels,
            row.k,
            row.kernel.name(),
            mode_name(row.mode),
            row.median_s,
            row.min_s
        ));
    }
    out
}
