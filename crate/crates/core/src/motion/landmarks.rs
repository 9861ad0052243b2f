//! Landmark sequences and their on-disk format.
//!
//! A landmark file is little-endian binary:
//!
//! | offset | type        | field                                   |
//! |--------|-------------|-----------------------------------------|
//! | 0      | `[u8; 4]`   | magic `LMK1`                            |
//! | 4      | `u32`       | frame count `T`                         |
//! | 8      | `f32`       | frames per second                       |
//! | 12     | `f32 x 3`   | normalization translation `(tx, ty, tz)`|
//! | 24     | `f32`       | normalization scale                     |
//! | 28     | `f32 x T*204` | points, frame-major, `(x, y, z)` per point |
//!
//! Stored points are already normalized; raw head-space coordinates are
//! `point * scale + translation`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const NUM_LANDMARKS: usize = 68;
/// Values per frame.
pub const FRAME_DIM: usize = NUM_LANDMARKS * 3;
/// Coordinate range accepted for normalized landmarks.
pub const COORD_LIMIT: f32 = 1.5;

const MAGIC: &[u8; 4] = b"LMK1";
const HEADER_LEN: usize = 28;

/// Similarity transform that maps raw head-space coordinates into the
/// normalized box: `normalized = (raw - translation) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub translation: [f32; 3],
    pub scale: f32,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            translation: [0.0; 3],
            scale: 1.0,
        }
    }
}

impl Normalization {
    /// Centers on the mean point and scales the largest absolute x/y extent
    /// to 1.
    pub fn fit(raw: &[f32]) -> Result<Self> {
        if raw.is_empty() || !raw.len().is_multiple_of(3) {
            return Err(Error::invalid("landmark buffer is not a list of 3-D points"));
        }
        let n = (raw.len() / 3) as f64;
        let mut t = [0f64; 3];
        for p in raw.chunks_exact(3) {
            for k in 0..3 {
                t[k] += p[k] as f64;
            }
        }
        let t = t.map(|v| (v / n) as f32);
        let extent = raw
            .chunks_exact(3)
            .flat_map(|p| [(p[0] - t[0]).abs(), (p[1] - t[1]).abs()])
            .fold(0f32, f32::max);
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::invalid("landmarks have zero or non-finite extent"));
        }
        Ok(Self {
            translation: t,
            scale: extent,
        })
    }

    pub fn apply(&self, raw: &[f32]) -> Vec<f32> {
        raw.chunks_exact(3)
            .flat_map(|p| (0..3).map(move |k| (p[k] - self.translation[k]) / self.scale))
            .collect()
    }
}

/// `T x 68 x 3` normalized landmark trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSequence {
    points: Vec<f32>,
    n_frames: usize,
    pub fps: f32,
    pub normalization: Normalization,
}

impl LandmarkSequence {
    pub fn new(points: Vec<f32>, fps: f32, normalization: Normalization) -> Result<Self> {
        if points.is_empty() || !points.len().is_multiple_of(FRAME_DIM) {
            return Err(Error::invalid(format!(
                "landmark buffer of {} values is not a whole number of {NUM_LANDMARKS}-point frames",
                points.len()
            )));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::invalid("landmark fps must be positive"));
        }
        if let Some(i) = points.iter().position(|v| !v.is_finite() || v.abs() > COORD_LIMIT) {
            return Err(Error::invalid(format!(
                "landmark value {} at index {i} is outside [-{COORD_LIMIT}, {COORD_LIMIT}]",
                points[i]
            )));
        }
        let n_frames = points.len() / FRAME_DIM;
        Ok(Self {
            points,
            n_frames,
            fps,
            normalization,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn points(&self) -> &[f32] {
        &self.points
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.points[t * FRAME_DIM..(t + 1) * FRAME_DIM]
    }

    /// Mean absolute difference over all coordinates.
    pub fn mae(&self, other: &Self) -> Result<f64> {
        if self.n_frames != other.n_frames {
            return Err(Error::invalid(format!(
                "landmark sequences have {} and {} frames",
                self.n_frames, other.n_frames
            )));
        }
        let sum: f64 = self
            .points
            .iter()
            .zip(&other.points)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum();
        Ok(sum / self.points.len() as f64)
    }

    /// Per-point temporal mean, `68 x 3`.
    pub fn mean_frame(&self) -> Vec<f32> {
        let mut acc = vec![0f64; FRAME_DIM];
        for frame in self.points.chunks_exact(FRAME_DIM) {
            for (a, &v) in acc.iter_mut().zip(frame) {
                *a += v as f64;
            }
        }
        acc.iter().map(|&a| (a / self.n_frames as f64) as f32).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.points.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n_frames as u32).to_le_bytes());
        out.extend_from_slice(&self.fps.to_le_bytes());
        for v in self.normalization.translation {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.normalization.scale.to_le_bytes());
        for v in &self.points {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::invalid("not a landmark file"));
        }
        let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let n = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let expected = HEADER_LEN + n * FRAME_DIM * 4;
        if bytes.len() != expected {
            return Err(Error::invalid(format!(
                "landmark file holds {} bytes, header implies {expected}",
                bytes.len()
            )));
        }
        let normalization = Normalization {
            translation: [f(12), f(16), f(20)],
            scale: f(24),
        };
        let points = (0..n * FRAME_DIM).map(|i| f(HEADER_LEN + 4 * i)).collect();
        Self::new(points, f(8), normalization)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
