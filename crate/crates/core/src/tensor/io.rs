//! SPXT tensor files and PNM image ingestion.
//!
//! SPXT layout, all integers little-endian:
//!
//! ```text
//! magic   4 bytes  "SPXT"
//! version u32      1
//! dtype   u32      1 = f32, 2 = i32
//! ndim    u32
//! dims    u32 * ndim
//! data    raw little-endian values, last axis fastest
//! ```
//!
//! Feature images store the channel axis as the first dim. 2D images may
//! also be ingested from binary PGM (one channel) or PPM (three channels);
//! sample values are scaled to `[0, 1]` by the file's maxval.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{FeatureImage, GridShape, LabelMap, PooledFeatures};

pub const SPXT_MAGIC: &[u8; 4] = b"SPXT";
pub const SPXT_VERSION: u32 = 1;

const DTYPE_F32: u32 = 1;
const DTYPE_I32: u32 = 2;

/// Raw contents of an SPXT file, before any type-level interpretation.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32 { dims: Vec<usize>, data: Vec<f32> },
    I32 { dims: Vec<usize>, data: Vec<i32> },
}

impl TensorData {
    pub fn dims(&self) -> &[usize] {
        match self {
            TensorData::F32 { dims, .. } | TensorData::I32 { dims, .. } => dims,
        }
    }

    pub fn dtype_name(&self) -> &'static str {
        match self {
            TensorData::F32 { .. } => "f32",
            TensorData::I32 { .. } => "i32",
        }
    }
}

pub fn write_spxt(path: &Path, tensor: &TensorData) -> Result<()> {
    let (dtype, dims, payload_len) = match tensor {
        TensorData::F32 { dims, data } => (DTYPE_F32, dims, data.len() * 4),
        TensorData::I32 { dims, data } => (DTYPE_I32, dims, data.len() * 4),
    };
    let mut bytes = Vec::with_capacity(16 + dims.len() * 4 + payload_len);
    bytes.extend_from_slice(SPXT_MAGIC);
    bytes.extend_from_slice(&SPXT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&dtype.to_le_bytes());
    bytes.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims.iter() {
        let d = u32::try_from(d)
            .map_err(|_| Error::Dimension(format!("dim {d} does not fit in u32")))?;
        bytes.extend_from_slice(&d.to_le_bytes());
    }
    match tensor {
        TensorData::F32 { data, .. } => {
            for v in data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        TensorData::I32 { data, .. } => {
            for v in data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_spxt(path: &Path) -> Result<TensorData> {
    let bytes = fs::read(path)?;
    parse_spxt(&bytes)
}

fn parse_spxt(bytes: &[u8]) -> Result<TensorData> {
    let take_u32 = |offset: usize| -> Result<u32> {
        let end = offset + 4;
        if end > bytes.len() {
            return Err(Error::Format("truncated header".into()));
        }
        Ok(u32::from_le_bytes(bytes[offset..end].try_into().unwrap()))
    };

    if bytes.len() < 4 || &bytes[..4] != SPXT_MAGIC {
        return Err(Error::Format("bad magic, expected \"SPXT\"".into()));
    }
    let version = take_u32(4)?;
    if version != SPXT_VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}, expected {SPXT_VERSION}"
        )));
    }
    let dtype = take_u32(8)?;
    if dtype != DTYPE_F32 && dtype != DTYPE_I32 {
        return Err(Error::Format(format!("unknown dtype code {dtype}")));
    }
    let ndim = take_u32(12)? as usize;
    let mut dims = Vec::with_capacity(ndim);
    for a in 0..ndim {
        dims.push(take_u32(16 + 4 * a)? as usize);
    }
    let count: usize = dims.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d)
            .ok_or_else(|| Error::Dimension("dims product overflows".into()))
    })?;
    let data_start = 16 + 4 * ndim;
    let data = &bytes[data_start..];
    if data.len() < count * 4 {
        return Err(Error::Format(format!(
            "truncated data: {} bytes, dims {:?} need {}",
            data.len(),
            dims,
            count * 4
        )));
    }
    if data.len() > count * 4 {
        return Err(Error::Format(format!(
            "trailing bytes: {} past the {} the dims imply",
            data.len() - count * 4,
            count * 4
        )));
    }
    Ok(match dtype {
        DTYPE_F32 => TensorData::F32 {
            dims,
            data: data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        },
        _ => TensorData::I32 {
            dims,
            data: data
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        },
    })
}

pub fn write_feature_image(img: &FeatureImage, path: &Path) -> Result<()> {
    let mut dims = vec![img.channels()];
    dims.extend_from_slice(img.shape().dims());
    write_spxt(
        path,
        &TensorData::F32 {
            dims,
            data: img.data().to_vec(),
        },
    )
}

/// Reads a feature image from an SPXT f32 file (first dim = channels) or
/// from a binary PGM/PPM image.
pub fn read_feature_image(path: &Path) -> Result<FeatureImage> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        return parse_pnm(&bytes);
    }
    match parse_spxt(&bytes)? {
        TensorData::F32 { dims, data } => {
            if dims.len() < 3 || dims.len() > 4 {
                return Err(Error::Dimension(format!(
                    "feature image needs 3 or 4 dims (channel + grid), got {dims:?}"
                )));
            }
            let shape = GridShape::new(&dims[1..])?;
            FeatureImage::new(shape, dims[0], data)
        }
        TensorData::I32 { .. } => Err(Error::Dtype(
            "expected f32 feature data, file holds i32".into(),
        )),
    }
}

pub fn write_label_map(map: &LabelMap, path: &Path) -> Result<()> {
    write_spxt(
        path,
        &TensorData::I32 {
            dims: map.shape().dims().to_vec(),
            data: map.labels().to_vec(),
        },
    )
}

/// Reads a label map, enforcing the contiguous 0-based invariant.
pub fn read_label_map(path: &Path) -> Result<LabelMap> {
    let (shape, labels) = read_class_grid(path)?;
    let num_labels = labels.iter().copied().max().unwrap_or(-1) + 1;
    if num_labels <= 0 {
        return Err(Error::Inconsistency("label file is all-negative".into()));
    }
    LabelMap::new(shape, num_labels as usize, labels)
}

/// Reads an i32 grid (class or label values) without the full label-map
/// invariants; classes may be absent.
pub fn read_class_grid(path: &Path) -> Result<(GridShape, Vec<i32>)> {
    match read_spxt(path)? {
        TensorData::I32 { dims, data } => {
            let shape = GridShape::new(&dims)?;
            Ok((shape, data))
        }
        TensorData::F32 { .. } => Err(Error::Dtype(
            "expected i32 label data, file holds f32".into(),
        )),
    }
}

pub fn write_pooled(pooled: &PooledFeatures, path: &Path) -> Result<()> {
    write_spxt(
        path,
        &TensorData::F32 {
            dims: vec![pooled.channels(), pooled.num_labels()],
            data: pooled.data().to_vec(),
        },
    )
}

pub fn read_pooled(path: &Path) -> Result<PooledFeatures> {
    match read_spxt(path)? {
        TensorData::F32 { dims, data } => {
            if dims.len() != 2 {
                return Err(Error::Dimension(format!(
                    "pooled array needs dims [C, K], got {dims:?}"
                )));
            }
            PooledFeatures::new(dims[0], dims[1], data)
        }
        TensorData::I32 { .. } => Err(Error::Dtype(
            "expected f32 pooled data, file holds i32".into(),
        )),
    }
}

fn parse_pnm(bytes: &[u8]) -> Result<FeatureImage> {
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => unreachable!(),
    };
    let mut pos = 2;
    let mut next_token = || -> Result<usize> {
        // Skip whitespace and '#' comments.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("malformed PNM header".into()));
        }
        std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::Format("malformed PNM header".into()))
    };

    let width = next_token()?;
    let height = next_token()?;
    let maxval = next_token()?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!(
            "unsupported PNM maxval {maxval} (1..=255)"
        )));
    }
    // Single whitespace byte separates the header from raster data.
    pos += 1;
    let expected = width * height * channels;
    let raster = bytes
        .get(pos..pos + expected)
        .ok_or_else(|| Error::Format(format!("truncated PNM raster, expected {expected} bytes")))?;

    let shape = GridShape::new(&[height, width])?;
    let pixels = width * height;
    let scale = 1.0 / maxval as f32;
    // PNM rasters are interleaved; split into channel-major planes.
    let mut data = vec![0.0f32; channels * pixels];
    for i in 0..pixels {
        for c in 0..channels {
            data[c * pixels + i] = raster[i * channels + c] as f32 * scale;
        }
    }
    FeatureImage::new(shape, channels, data)
}
