//! Per-frame feature matrices, the KFF1 container, and a seeded synthetic generator.
//!
//! KFF1 layout, little-endian, no padding:
//!
//! | field        | type                |
//! |--------------|---------------------|
//! | magic        | `b"KFF1"`           |
//! | version      | u32 = 1             |
//! | rows N       | u64                 |
//! | dim D        | u64                 |
//! | name length  | u32                 |
//! | video name   | UTF-8 bytes         |
//! | payload      | N·D f32, row-major  |
//!
//! Values are held as `f64` in memory and narrowed to `f32` on save.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{FrameId, FrameLabel};
use crate::error::{Error, Result};
use crate::rng::PortableRng;

pub const KFF_MAGIC: &[u8; 4] = b"KFF1";
pub const KFF_VERSION: u32 = 1;
const HEADER_FIXED: usize = 4 + 4 + 8 + 8 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    video: String,
    dim: usize,
    data: Vec<f64>,
    frame_ids: Vec<FrameId>,
}

impl FeatureMatrix {
    pub fn new(
        video: impl Into<String>,
        dim: usize,
        data: Vec<f64>,
        frame_ids: Vec<FrameId>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("feature dim must be positive".into()));
        }
        if data.len() != dim * frame_ids.len() {
            return Err(Error::LengthMismatch {
                expected: dim * frame_ids.len(),
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite value at row {} column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            video: video.into(),
            dim,
            data,
            frame_ids,
        })
    }

    /// Builds a matrix whose frame ids are `<video>/000000..` in row order.
    pub fn from_rows(video: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let video = video.into();
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let ids = (0..rows.len() as u32)
            .map(|i| FrameId::new(video.clone(), i))
            .collect();
        Self::new(video, dim, rows.concat(), ids)
    }

    /// Stacks matrices of equal dim, keeping every frame id.
    pub fn concat(video: impl Into<String>, parts: &[FeatureMatrix]) -> Result<Self> {
        let dim = parts
            .first()
            .map(|m| m.dim)
            .ok_or(Error::Empty("feature matrix list"))?;
        let mut data = Vec::new();
        let mut ids = Vec::new();
        for part in parts {
            if part.dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: part.dim,
                });
            }
            data.extend_from_slice(&part.data);
            ids.extend(part.frame_ids.iter().cloned());
        }
        Self::new(video, dim, data, ids)
    }

    pub fn video(&self) -> &str {
        &self.video
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.frame_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn frame_ids(&self) -> &[FrameId] {
        &self.frame_ids
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Keeps rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n_rows() {
                return Err(Error::Invalid(format!("row {i} out of range")));
            }
            data.extend_from_slice(self.row(i));
            ids.push(self.frame_ids[i].clone());
        }
        Self::new(self.video.clone(), self.dim, data, ids)
    }

    /// Rounds every value to the nearest `f32`, matching what a KFF1 round trip yields.
    pub fn to_storage_precision(&self) -> Result<Self> {
        let data = self.data.iter().map(|&v| f64::from(v as f32)).collect();
        Self::new(self.video.clone(), self.dim, data, self.frame_ids.clone())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        if self.is_empty() {
            return Err(Error::Format("KFF1 requires at least one row".into()));
        }
        let name = self.video.as_bytes();
        let mut out = Vec::with_capacity(HEADER_FIXED + name.len() + 4 * self.data.len());
        out.extend_from_slice(KFF_MAGIC);
        out.extend_from_slice(&KFF_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_rows() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        for &v in &self.data {
            let narrow = v as f32;
            if !narrow.is_finite() {
                return Err(Error::Format(format!("value {v} does not fit in f32")));
            }
            out.extend_from_slice(&narrow.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != KFF_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != KFF_VERSION {
            return Err(Error::Format(format!(
                "version mismatch: found {version}, expected {KFF_VERSION}"
            )));
        }
        let n = cur.u64()?;
        let d = cur.u64()?;
        if n == 0 || d == 0 {
            return Err(Error::Format(format!(
                "header declares N={n}, D={d}; both must be positive"
            )));
        }
        let name_len = cur.u32()? as usize;
        let video = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| Error::Format("video name is not UTF-8".into()))?
            .to_string();
        let count = n
            .checked_mul(d)
            .and_then(|c| usize::try_from(c).ok())
            .filter(|c| c.checked_mul(4).is_some())
            .ok_or_else(|| Error::Format("truncated payload".into()))?;
        let payload = cur.take(count * 4)?;
        if cur.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                bytes.len() - cur.pos
            )));
        }
        let mut data = Vec::with_capacity(count);
        for (i, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::Format(format!(
                    "non-finite value at payload index {i}"
                )));
            }
            data.push(f64::from(v));
        }
        let ids = (0..n as u32)
            .map(|i| FrameId::new(video.clone(), i))
            .collect();
        Self::new(video, d as usize, data, ids)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                if self.pos >= HEADER_FIXED {
                    Error::Format("truncated payload".into())
                } else {
                    Error::Format("truncated header".into())
                }
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureMatrix::decode(&bytes)
}

pub fn save_features(matrix: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = matrix.encode()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Two isotropic Gaussian classes for desk-scale experiments.
///
/// Class means sit at `±separation/2` along the all-ones unit direction, so
/// `‖μ₁ − μ₀‖ = separation` and the decision boundary passes through the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub video: String,
    pub n_key: usize,
    pub n_ordinary: usize,
    pub dim: usize,
    pub separation: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            video: "synthetic".into(),
            n_key: 50,
            n_ordinary: 50,
            dim: 16,
            separation: 8.0,
            noise_scale: 1.0,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_key + self.n_ordinary == 0 {
            return Err(Error::Invalid(
                "synthetic spec needs at least one frame".into(),
            ));
        }
        if self.dim == 0 {
            return Err(Error::Invalid("synthetic dim must be positive".into()));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(Error::Invalid(
                "separation must be finite and nonnegative".into(),
            ));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale > 0.0) {
            return Err(Error::Invalid(
                "noise_scale must be finite and positive".into(),
            ));
        }
        Ok(())
    }
}

/// Generates rows in shuffled class order. Values are rounded to `f32`
/// precision so the matrix survives a KFF1 round trip unchanged.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(FeatureMatrix, Vec<FrameLabel>)> {
    spec.validate()?;
    let mut rng = PortableRng::new(spec.seed);
    let n = spec.n_key + spec.n_ordinary;
    let mut labels: Vec<FrameLabel> = std::iter::repeat_n(FrameLabel::Key, spec.n_key)
        .chain(std::iter::repeat_n(FrameLabel::Ordinary, spec.n_ordinary))
        .collect();
    rng.shuffle(&mut labels);

    let offset = 0.5 * spec.separation / (spec.dim as f64).sqrt();
    let mut rows = Vec::with_capacity(n);
    for label in &labels {
        let mean = if label.is_key() { offset } else { -offset };
        let row = (0..spec.dim)
            .map(|_| f64::from((mean + spec.noise_scale * rng.standard_normal()) as f32))
            .collect();
        rows.push(row);
    }
    Ok((FeatureMatrix::from_rows(spec.video.clone(), &rows)?, labels))
}
