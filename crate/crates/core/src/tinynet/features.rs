//! Backbone stand-in: seeded feature grids and a raw feature-file format.
//!
//! A feature file is an ASCII header line `C H W\n` followed by `C*H*W`
//! little-endian `f32` values in channel-major order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const BACKBONE_STRIDE: usize = 32;
pub const BACKBONE_CHANNELS: usize = 2048;

/// `C x H x W` feature map with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    data: Array3<f64>,
}

impl FeatureGrid {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        let (c, h, w) = data.dim();
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::shape(format!("feature grid {c}x{h}x{w} has an empty axis")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("feature grid contains non-finite entries".into()));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn positions(&self) -> usize {
        self.height() * self.width()
    }
}

/// Grid side for an input side, which must be a positive multiple of the
/// backbone stride.
pub fn grid_side(input: usize) -> Result<usize> {
    if input == 0 || !input.is_multiple_of(BACKBONE_STRIDE) {
        return Err(Error::domain(format!(
            "input dimension {input} is not a positive multiple of {BACKBONE_STRIDE}"
        )));
    }
    Ok(input / BACKBONE_STRIDE)
}

/// Standard-normal grid of `channels x h0/32 x w0/32`.
pub fn synth_features_with_channels(h0: usize, w0: usize, channels: usize, seed: u64) -> Result<FeatureGrid> {
    let (h, w) = (grid_side(h0)?, grid_side(w0)?);
    if channels == 0 {
        return Err(Error::domain("feature grid needs at least one channel"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = Array3::from_shape_simple_fn((channels, h, w), || rng.sample(StandardNormal));
    FeatureGrid::new(data)
}

/// Standard-normal grid with the backbone's 2048 channels.
pub fn synth_features(h0: usize, w0: usize, seed: u64) -> Result<FeatureGrid> {
    synth_features_with_channels(h0, w0, BACKBONE_CHANNELS, seed)
}

pub fn write_features(grid: &FeatureGrid, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{} {} {}", grid.channels(), grid.height(), grid.width())?;
    let mut payload = Vec::with_capacity(grid.data.len() * 4);
    for &v in grid.data.iter() {
        payload.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.write_all(&payload)
}

pub fn read_features(input: impl Read) -> Result<FeatureGrid> {
    let mut reader = BufReader::new(input);
    let mut header = String::new();
    reader
        .read_line(&mut header)
        .map_err(|e| Error::Schema(format!("feature header: {e}")))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Schema(format!("feature header {:?} is not `C H W`", header.trim_end())))?;
    let [c, h, w] = dims[..] else {
        return Err(Error::Schema(format!(
            "feature header {:?} is not `C H W`",
            header.trim_end()
        )));
    };
    let expected = c
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Schema("feature header dimensions overflow".into()))?;
    let mut payload = Vec::new();
    reader
        .read_to_end(&mut payload)
        .map_err(|e| Error::Schema(format!("feature payload: {e}")))?;
    if payload.len() != expected {
        return Err(Error::Schema(format!(
            "feature payload has {} bytes, header {c}x{h}x{w} needs {expected}",
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let data = Array3::from_shape_vec((c, h, w), values).map_err(|e| Error::Schema(e.to_string()))?;
    FeatureGrid::new(data).map_err(|e| Error::Schema(e.to_string()))
}

pub fn read_feature_file(path: &Path) -> Result<FeatureGrid> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_features(file)
}

pub fn write_feature_file(grid: &FeatureGrid, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    write_features(grid, &mut file).map_err(io_err)?;
    file.flush().map_err(io_err)
}
