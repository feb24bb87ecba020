//! End-to-end checks of the `spx` binary: exit codes, output schemas and
//! the segment -> pool -> unpool -> eval pipeline.

use std::path::Path;
use std::process::{Command, Output};

use spxpool::tensor::{read_feature_image, write_feature_image, FeatureImage, GridShape};

fn spx(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spx"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn spx")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_ramp_image(path: &Path, h: usize, w: usize, channels: usize) {
    let shape = GridShape::new(&[h, w]).unwrap();
    let data: Vec<f32> = (0..channels * h * w)
        .map(|i| (i % 97) as f32 * 0.25)
        .collect();
    let img = FeatureImage::new(shape, channels, data).unwrap();
    write_feature_image(&img, path).unwrap();
}

#[test]
fn pipeline_segment_pool_unpool_eval() {
    let dir = tempfile::tempdir().unwrap();
    write_ramp_image(&dir.path().join("img.spxt"), 8, 8, 2);

    let seg = spx(
        &[
            "segment", "--method", "block", "--k", "4", "--in", "img.spxt", "--out", "seg.spxt",
        ],
        dir.path(),
    );
    assert!(seg.status.success(), "{seg:?}");

    let pool = spx(
        &[
            "pool",
            "--mode",
            "max",
            "--serial",
            "--img",
            "img.spxt",
            "--seg",
            "seg.spxt",
            "--out",
            "pooled.spxt",
            "--cache",
            "cache.spxt",
        ],
        dir.path(),
    );
    assert!(pool.status.success(), "{pool:?}");

    let unpool = spx(
        &[
            "unpool",
            "--pooled",
            "pooled.spxt",
            "--seg",
            "seg.spxt",
            "--out",
            "up.spxt",
        ],
        dir.path(),
    );
    assert!(unpool.status.success(), "{unpool:?}");

    let eval = spx(
        &[
            "eval",
            "--pred",
            "seg.spxt",
            "--truth",
            "seg.spxt",
            "--classes",
            "4",
        ],
        dir.path(),
    );
    assert!(eval.status.success(), "{eval:?}");
    let csv = stdout(&eval);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "class,dice");
    assert_eq!(lines.len(), 6);
    assert_eq!(*lines.last().unwrap(), "mean,1.000000");

    // The unpooled image is a valid feature image with the input's shape.
    let up = read_feature_image(&dir.path().join("up.spxt")).unwrap();
    assert_eq!(up.shape().dims(), &[8, 8]);
    assert_eq!(up.channels(), 2);
}

#[test]
fn mismatched_shapes_exit_2_and_name_both_shapes() {
    let dir = tempfile::tempdir().unwrap();
    write_ramp_image(&dir.path().join("img.spxt"), 8, 8, 1);
    write_ramp_image(&dir.path().join("other.spxt"), 4, 4, 1);
    let seg = spx(
        &[
            "segment",
            "--method",
            "block",
            "--k",
            "4",
            "--in",
            "other.spxt",
            "--out",
            "seg.spxt",
        ],
        dir.path(),
    );
    assert!(seg.status.success());

    let pool = spx(
        &[
            "pool",
            "--mode",
            "max",
            "--serial",
            "--img",
            "img.spxt",
            "--seg",
            "seg.spxt",
            "--out",
            "pooled.spxt",
        ],
        dir.path(),
    );
    assert_eq!(pool.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&pool.stderr);
    assert!(
        stderr.contains("[8, 8]") && stderr.contains("[4, 4]"),
        "{stderr}"
    );
}

#[test]
fn unknown_subcommand_exits_1_with_help() {
    let dir = tempfile::tempdir().unwrap();
    let out = spx(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "{stderr}");
}

#[test]
fn help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let out = spx(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("segment"));
}

#[test]
fn info_prints_dtype_dims_and_range() {
    let dir = tempfile::tempdir().unwrap();
    write_ramp_image(&dir.path().join("img.spxt"), 4, 6, 3);
    let out = spx(&["info", "img.spxt"], dir.path());
    assert!(out.status.success());
    let line = stdout(&out);
    assert!(line.contains("dtype=f32"), "{line}");
    assert!(line.contains("dims=3x4x6"), "{line}");
    assert!(line.contains("min=0"), "{line}");
}

#[test]
fn missing_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = spx(&["info", "nope.spxt"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_prints_small_deviation() {
    let dir = tempfile::tempdir().unwrap();
    for topology in ["v1", "v2", "v3"] {
        let out = spx(
            &[
                "gradcheck",
                "--topology",
                topology,
                "--mode",
                "avg",
                "--seed",
                "3",
                "--instances",
                "2",
            ],
            dir.path(),
        );
        assert!(out.status.success());
        let value: f64 = stdout(&out).trim().parse().unwrap();
        assert!(value < 1e-4, "{topology}: {value}");
    }
}

#[test]
fn toytrain_emits_trace_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = spx(
        &[
            "toytrain",
            "--topology",
            "v3",
            "--mode",
            "avg",
            "--steps",
            "3",
            "--lr",
            "0.5",
            "--seed",
            "2",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let csv = stdout(&out);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,loss,accuracy");
    assert_eq!(lines.len(), 4);
    for line in &lines[1..] {
        assert_eq!(line.split(',').count(), 3);
    }
}

#[test]
fn bench_writes_documented_csv_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = spx(
        &[
            "bench",
            "--out",
            "bench.csv",
            "--sizes",
            "64,128",
            "--ks",
            "4",
            "--repeats",
            "3",
            "--kernel",
            "serial",
            "--mode",
            "avg",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "P,K,kernel,mode,median_s,min_s");
    assert_eq!(lines.len(), 3, "{csv}");
    for line in &lines[1..] {
        assert_eq!(line.split(',').count(), 6);
        assert!(line.contains(",serial,avg,"));
    }
}

#[test]
fn volumetric_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let shape = GridShape::new(&[6, 6, 6]).unwrap();
    let data: Vec<f32> = (0..2 * 216)
        .map(|i| ((i * 17 + 3) % 53) as f32 * 0.1)
        .collect();
    let img = FeatureImage::new(shape, 2, data).unwrap();
    write_feature_image(&img, &dir.path().join("vol.spxt")).unwrap();

    let seg = spx(
        &[
            "segment", "--method", "slic", "--k", "8", "--in", "vol.spxt", "--out", "seg.spxt",
        ],
        dir.path(),
    );
    assert!(seg.status.success(), "{seg:?}");
    let info = spx(&["info", "seg.spxt"], dir.path());
    assert!(stdout(&info).contains("dims=6x6x6"), "{info:?}");

    let pool = spx(
        &[
            "pool",
            "--mode",
            "avg",
            "--parallel",
            "--cell-edge",
            "4",
            "--img",
            "vol.spxt",
            "--seg",
            "seg.spxt",
            "--out",
            "pooled.spxt",
        ],
        dir.path(),
    );
    assert!(pool.status.success(), "{pool:?}");

    let unpool = spx(
        &[
            "unpool",
            "--pooled",
            "pooled.spxt",
            "--seg",
            "seg.spxt",
            "--out",
            "up.spxt",
        ],
        dir.path(),
    );
    assert!(unpool.status.success(), "{unpool:?}");
    let up = read_feature_image(&dir.path().join("up.spxt")).unwrap();
    assert_eq!(up.shape().dims(), &[6, 6, 6]);
    assert_eq!(up.channels(), 2);
}

#[test]
fn pgm_input_feeds_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let mut pgm = b"P5\n6 4\n255\n".to_vec();
    pgm.extend((0u8..24).map(|i| i * 10));
    std::fs::write(dir.path().join("img.pgm"), pgm).unwrap();
    let out = spx(
        &[
            "segment",
            "--method",
            "slic",
            "--k",
            "4",
            "--compactness",
            "5.0",
            "--in",
            "img.pgm",
            "--out",
            "seg.spxt",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let info = spx(&["info", "seg.spxt"], dir.path());
    assert!(stdout(&info).contains("dtype=i32 dims=4x6"));
}
