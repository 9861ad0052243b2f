//! Deterministic signal-processing front end.
//!
//! Framing convention shared by every frame-rate feature in the crate: the
//! waveform is zero-padded by `n_fft / 2` samples on both sides and frame `t`
//! covers padded samples `t * hop .. t * hop + n_fft`, so a waveform of `n`
//! samples yields `floor(n / hop) + 1` frames. Frame `t` is centered on
//! original sample `t * hop`.

mod align;
mod griffin_lim;
mod mel;
mod pitch;
mod stft;
mod wav;

pub use align::{align_frames_to_phonemes, FrameToPhonemeMap};
pub use griffin_lim::{griffin_lim, GRIFFIN_LIM_SEED};
pub use mel::{compute_mel, mel_center_frequencies, mel_filterbank, slice_prosody_bands};
pub use pitch::{extract_pitch, PITCH_MAX_HZ, PITCH_MIN_HZ};
pub(crate) use wav::pcm16;
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

/// Number of low-frequency mel bins fed to the prosody encoder.
pub const PROSODY_BANDS: usize = 20;

/// Number of frames produced for a waveform of `num_samples` samples.
pub fn num_frames(num_samples: usize, hop_length: usize) -> usize {
    num_samples / hop_length + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
        (sum / self.samples.len() as f64).sqrt()
    }

    /// Checks the waveform preconditions shared by every front-end operation.
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::invalid("empty waveform"));
        }
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = self.samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(())
    }
}

/// `T x n_mels` natural-log mel magnitudes, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    values: Vec<f32>,
    n_frames: usize,
    n_mels: usize,
    pub hop_length: usize,
    pub sample_rate: u32,
}

impl MelSpectrogram {
    pub fn new(values: Vec<f32>, n_frames: usize, n_mels: usize, hop_length: usize, sample_rate: u32) -> Result<Self> {
        if n_frames == 0 {
            return Err(Error::invalid("mel spectrogram needs at least one frame"));
        }
        if n_mels < PROSODY_BANDS {
            return Err(Error::invalid(format!(
                "mel spectrogram needs at least {PROSODY_BANDS} bins, got {n_mels}"
            )));
        }
        if values.len() != n_frames * n_mels {
            return Err(Error::invalid(format!(
                "mel buffer has {} values, expected {n_frames} x {n_mels}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mel spectrogram has non-finite entries"));
        }
        Ok(Self {
            values,
            n_frames,
            n_mels,
            hop_length,
            sample_rate,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.values[t * self.n_mels..(t + 1) * self.n_mels]
    }

    pub fn get(&self, t: usize, k: usize) -> f32 {
        self.values[t * self.n_mels + k]
    }

    /// Frames `start..start + len` as a new spectrogram.
    pub fn crop(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.n_frames {
            return Err(Error::invalid(format!(
                "crop {start}..{} out of range for {} frames",
                start + len,
                self.n_frames
            )));
        }
        let values = self.values[start * self.n_mels..(start + len) * self.n_mels].to_vec();
        Self::new(values, len, self.n_mels, self.hop_length, self.sample_rate)
    }

    pub fn duration_secs(&self) -> f64 {
        (self.n_frames * self.hop_length) as f64 / self.sample_rate as f64
    }
}

/// The lowest [`PROSODY_BANDS`] mel bins of every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ProsodyBands {
    values: Vec<f32>,
    n_frames: usize,
    pub hop_length: usize,
    pub sample_rate: u32,
}

impl ProsodyBands {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.values[t * PROSODY_BANDS..(t + 1) * PROSODY_BANDS]
    }
}

/// Per-frame fundamental frequency; 0 Hz marks unvoiced frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchContour {
    pub f0: Vec<f32>,
    pub voiced: Vec<bool>,
}

impl PitchContour {
    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.voiced.is_empty() {
            return 0.0;
        }
        self.voiced.iter().filter(|&&v| v).count() as f64 / self.voiced.len() as f64
    }

    /// Median f0 over voiced frames, if any.
    pub fn median_voiced_f0(&self) -> Option<f32> {
        let mut v: Vec<f32> = self
            .f0
            .iter()
            .zip(&self.voiced)
            .filter(|(_, &on)| on)
            .map(|(&f, _)| f)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(|a, b| a.total_cmp(b));
        Some(v[v.len() / 2])
    }
}
