//! Schematic rendering: landmark frames drawn as points and edges on a solid
//! background, muxed with the synthesized audio into an AVI file.

mod avi;
mod raster;

pub use avi::{avi_bytes, write_avi};
pub use raster::{
    dump_frames, landmark_edges, rasterize_landmarks, resample_indices, to_pixel, ImageFrame, BACKGROUND, CENTER_COLOR,
    EDGE_COLOR, POINT_COLOR,
};

use std::path::Path;

use crate::audio::Waveform;
use crate::config::CanvasConfig;
use crate::error::{Error, Result};
use crate::motion::LandmarkSequence;

/// Video frames for `lms` resampled to `cfg.fps` over `duration_secs`.
/// Returns the frames and the total number of clamped coordinates.
pub fn render_landmarks(
    lms: &LandmarkSequence,
    cfg: &CanvasConfig,
    duration_secs: f64,
) -> Result<(Vec<ImageFrame>, usize)> {
    let idx = resample_indices(lms.n_frames(), lms.fps as f64, cfg.fps as f64, duration_secs);
    let mut frames = Vec::with_capacity(idx.len());
    let mut clamped = 0;
    for i in idx {
        let (img, c) = rasterize_landmarks(lms.frame(i), cfg)?;
        clamped += c;
        frames.push(img);
    }
    if clamped > 0 {
        log::warn!("{clamped} landmark coordinates clamped while rendering");
    }
    Ok((frames, clamped))
}

/// Writes frames and audio to `out_path` after checking that the two
/// durations agree within one video frame.
pub fn compose_video(frames: &[ImageFrame], audio: &Waveform, cfg: &CanvasConfig, out_path: &Path) -> Result<()> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::invalid("no video frames"));
    }
    audio.validate()?;
    let video = frames.len() as f64 / cfg.fps as f64;
    let audio_secs = audio.duration_secs();
    let tolerance = 1.0 / cfg.fps as f64;
    if (video - audio_secs).abs() > tolerance + 1e-9 {
        return Err(Error::DurationMismatch {
            video,
            audio: audio_secs,
            tolerance,
        });
    }
    write_avi(out_path, frames, audio, cfg.fps)
}
