//! `spx`: command-line front end for segmentation, pooling, evaluation,
//! gradient checking, toy training and the benchmark harness.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error. Diagnostics
//! go to stderr; data goes to files or stdout.

pub mod bench;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use spxpool::error::{Error, Result};
use spxpool::metrics::{dice, iou, oracle_labels, ClassScores};
use spxpool::netgraph::{train_toy, SegHead, TopologyKind};
use spxpool::pooling::{pool_forward, pool_forward_parallel, unpool_broadcast};
use spxpool::superpixels::{block_segment, slic_segment, SlicParams};
use spxpool::tensor::{
    read_class_grid, read_feature_image, read_label_map, read_pooled, read_spxt, write_label_map,
    write_pooled, write_spxt, PoolCache, PoolMode, TensorData,
};
use spxpool_oracle::gradcheck;

#[derive(Parser)]
#[command(
    name = "spx",
    version,
    about = "Superpixel/supervoxel pooling toolkit",
    max_term_width = 100
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Slic,
    Block,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Max,
    Avg,
}

impl From<ModeArg> for PoolMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Max => PoolMode::Max,
            ModeArg::Avg => PoolMode::Avg,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TopologyArg {
    V1,
    V2,
    V3,
}

impl From<TopologyArg> for TopologyKind {
    fn from(t: TopologyArg) -> Self {
        match t {
            TopologyArg::V1 => TopologyKind::V1,
            TopologyArg::V2 => TopologyKind::V2,
            TopologyArg::V3 => TopologyKind::V3,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Dice,
    Iou,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Serial,
    Parallel,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Segment an image (SPXT f32, PGM or PPM) into superpixels.
    Segment {
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Requested superpixel count.
        #[arg(long)]
        k: usize,
        /// SLIC compactness m (ignored for block).
        #[arg(long, default_value_t = 10.0)]
        compactness: f64,
        /// SLIC iteration count (ignored for block).
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pool a feature image over a segmentation.
    Pool {
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Use the data-parallel kernel.
        #[arg(long, conflicts_with = "serial")]
        parallel: bool,
        /// Use the serial reference kernel (default).
        #[arg(long)]
        serial: bool,
        /// Cell edge for the parallel kernel.
        #[arg(long, default_value_t = 32)]
        cell_edge: usize,
        #[arg(long)]
        img: PathBuf,
        #[arg(long)]
        seg: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the backward cache (argmax indices or counts).
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Broadcast pooled per-superpixel values back to pixels.
    Unpool {
        #[arg(long)]
        pooled: PathBuf,
        #[arg(long)]
        seg: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check head gradients against finite differences of a double-precision
    /// reference; prints the max deviation.
    Gradcheck {
        #[arg(long, value_enum)]
        topology: TopologyArg,
        #[arg(long, value_enum, default_value = "max")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        instances: usize,
    },
    /// Train a head on a built-in synthetic dataset; prints the trace as CSV.
    Toytrain {
        #[arg(long, value_enum)]
        topology: TopologyArg,
        #[arg(long, value_enum, default_value = "max")]
        mode: ModeArg,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 1.0)]
        lr: f32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare a predicted class map against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        classes: usize,
        #[arg(long, value_enum, default_value = "dice")]
        metric: MetricArg,
    },
    /// Best achievable constant-per-superpixel labeling against ground truth.
    Oracle {
        #[arg(long)]
        seg: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        classes: usize,
    },
    /// Sweep the pooling kernels over P and K; writes CSV.
    Bench {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Comma-separated pixel counts.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        /// Comma-separated superpixel counts.
        #[arg(long, value_delimiter = ',', required = true)]
        ks: Vec<usize>,
        #[arg(long, value_enum, default_value = "serial")]
        kernel: KernelArg,
        #[arg(long, value_enum, default_value = "max")]
        mode: ModeArg,
        #[arg(long, default_value_t = 1)]
        channels: usize,
        #[arg(long, default_value_t = 32)]
        cell_edge: usize,
    },
    /// Print dtype, dims and value range of an SPXT file.
    Info { file: PathBuf },
}

/// Parses `argv` and runs the selected subcommand, mapping outcomes to the
/// documented exit codes.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            if matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) {
                print!("{err}");
                return 0;
            }
            eprint!("{err}");
            return 1;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            2
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Segment {
            method,
            k,
            compactness,
            iters,
            input,
            out,
        } => {
            let img = read_feature_image(&input)?;
            let map = match method {
                MethodArg::Block => block_segment(img.shape(), k)?,
                MethodArg::Slic => {
                    let params = SlicParams::new(k)
                        .with_compactness(compactness)
                        .with_iterations(iters);
                    slic_segment(&img, &params)?
                }
            };
            write_label_map(&map, &out)?;
            eprintln!("{} superpixels -> {}", map.num_labels(), out.display());
            Ok(())
        }
        Command::Pool {
            mode,
            parallel,
            serial: _,
            cell_edge,
            img,
            seg,
            out,
            cache,
        } => {
            let image = read_feature_image(&img)?;
            let map = read_label_map(&seg)?;
            let (pooled, pool_cache) = if parallel {
                pool_forward_parallel(&image, &map, mode.into(), cell_edge)?
            } else {
                pool_forward(&image, &map, mode.into())?
            };
            write_pooled(&pooled, &out)?;
            if let Some(path) = cache {
                write_cache(&pool_cache, pooled.channels(), &path)?;
            }
            Ok(())
        }
        Command::Unpool { pooled, seg, out } => {
            let pooled = read_pooled(&pooled)?;
            let map = read_label_map(&seg)?;
            let img = unpool_broadcast(&pooled, &map)?;
            spxpool::tensor::write_feature_image(&img, &out)?;
            Ok(())
        }
        Command::Gradcheck {
            topology,
            mode,
            seed,
            instances,
        } => {
            let mut worst = 0.0f64;
            for i in 0..instances {
                let inst = gradcheck::head_instance(
                    seed.wrapping_add(i as u64),
                    topology.into(),
                    mode.into(),
                );
                let report = gradcheck::head_gradcheck(&inst);
                worst = worst.max(report.max_deviation);
            }
            println!("{worst:.6e}");
            Ok(())
        }
        Command::Toytrain {
            topology,
            mode,
            steps,
            lr,
            seed,
        } => {
            let dataset = spxpool_oracle::gen::toy_dataset(seed, 12, 12, 3, 1.2, 2);
            let head = SegHead::seeded(topology.into(), 3, 3, mode.into(), seed);
            let (_, trace) = train_toy(head, &dataset, steps, lr)?;
            print!("{}", trace_to_csv(&trace));
            Ok(())
        }
        Command::Eval {
            pred,
            truth,
            classes,
            metric,
        } => {
            let (pred_shape, pred_labels) = read_class_grid(&pred)?;
            let (truth_shape, truth_labels) = read_class_grid(&truth)?;
            if pred_shape != truth_shape {
                return Err(Error::Dimension(format!(
                    "prediction grid {:?} does not match truth grid {:?}",
                    pred_shape.dims(),
                    truth_shape.dims()
                )));
            }
            let (name, scores) = match metric {
                MetricArg::Dice => ("dice", dice(&pred_labels, &truth_labels, classes)?),
                MetricArg::Iou => ("iou", iou(&pred_labels, &truth_labels, classes)?),
            };
            print!("{}", scores_to_csv(name, &scores));
            Ok(())
        }
        Command::Oracle {
            seg,
            truth,
            classes,
        } => {
            let map = read_label_map(&seg)?;
            let (truth_shape, truth_labels) = read_class_grid(&truth)?;
            if truth_shape != *map.shape() {
                return Err(Error::Dimension(format!(
                    "segmentation grid {:?} does not match truth grid {:?}",
                    map.shape().dims(),
                    truth_shape.dims()
                )));
            }
            let labels = oracle_labels(&map, &truth_labels)?;
            let scores = dice(&labels, &truth_labels, classes)?;
            print!("{}", scores_to_csv("oracle_dice", &scores));
            Ok(())
        }
        Command::Bench {
            out,
            seed,
            repeats,
            sizes,
            ks,
            kernel,
            mode,
            channels,
            cell_edge,
        } => {
            let cfg = bench::BenchConfig {
                sizes,
                ks,
                channels,
                repeats,
                mode: mode.into(),
                kernel: match kernel {
                    KernelArg::Serial => bench::KernelSpec::Serial,
                    KernelArg::Parallel => bench::KernelSpec::Parallel,
                    KernelArg::Both => bench::KernelSpec::Both,
                },
                seed,
                cell_edge,
            };
            let rows = bench::bench_run(&cfg)?;
            std::fs::write(&out, bench::rows_to_csv(&rows))?;
            eprintln!("{} sweep points -> {}", rows.len(), out.display());
            Ok(())
        }
        Command::Info { file } => {
            let tensor = read_spxt(&file)?;
            println!("{}", info_line(&tensor));
            Ok(())
        }
    }
}

fn write_cache(cache: &PoolCache, channels: usize, path: &std::path::Path) -> Result<()> {
    let tensor = match cache {
        PoolCache::Max { argmax, num_labels } => {
            let data: Vec<i32> = argmax
                .iter()
                .map(|&i| {
                    i32::try_from(i)
                        .map_err(|_| Error::Dimension(format!("argmax index {i} exceeds i32")))
                })
                .collect::<Result<_>>()?;
            TensorData::I32 {
                dims: vec![channels, *num_labels],
                data,
            }
        }
        PoolCache::Avg { counts } => TensorData::I32 {
            dims: vec![counts.len()],
            data: counts.iter().map(|&n| n as i32).collect(),
        },
    };
    write_spxt(path, &tensor)
}

fn trace_to_csv(trace: &spxpool::netgraph::TrainTrace) -> String {
    let mut out = String::from("step,loss,accuracy\n");
    for (step, s) in trace.steps.iter().enumerate() {
        out.push_str(&format!("{},{:.6},{:.6}\n", step, s.loss, s.accuracy));
    }
    out
}

/// CSV rows `class,<metric>` per class (nan when a class is absent from
/// both inputs) followed by a `mean` row.
fn scores_to_csv(metric: &str, scores: &ClassScores) -> String {
    let mut out = format!("class,{metric}\n");
    for (class, value) in scores.per_class.iter().enumerate() {
        match value {
            Some(v) => out.push_str(&format!("{class},{v:.6}\n")),
            None => out.push_str(&format!("{class},nan\n")),
        }
    }
    out.push_str(&format!("mean,{:.6}\n", scores.mean));
    out
}

fn info_line(tensor: &TensorData) -> String {
    let dims = tensor
        .dims()
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("x");
    match tensor {
        TensorData::F32 { data, .. } => {
            let (min, max) = data
                .iter()
                .fold((f32::INFINITY, f32::NEG_INFINITY), |acc, &v| {
                    (acc.0.min(v), acc.1.max(v))
                });
            format!("dtype=f32 dims={dims} min={min} max={max}")
        }
        TensorData::I32 { data, .. } => {
            let min = data.iter().min().copied().unwrap_or(0);
            let max = data.iter().max().copied().unwrap_or(0);
            format!("dtype=i32 dims={dims} min={min} max={max}")
        }
    }
}
