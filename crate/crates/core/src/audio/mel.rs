use super::stft::Stft;
use super::{num_frames, MelSpectrogram, ProsodyBands, Waveform, PROSODY_BANDS};
use crate::config::FeatureConfig;
use crate::error::{Error, Result};

pub(crate) fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub(crate) fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Center frequency in Hz of every mel filter (HTK mel scale, filters evenly
/// spaced in mel between `fmin` and `fmax`).
pub fn mel_center_frequencies(cfg: &FeatureConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.fmin);
    let hi = hz_to_mel(cfg.fmax);
    let step = (hi - lo) / (cfg.n_mels + 1) as f64;
    (1..=cfg.n_mels).map(|i| mel_to_hz(lo + step * i as f64)).collect()
}

/// Triangular unit-peak filters, `n_mels x (n_fft/2 + 1)` row-major.
pub fn mel_filterbank(cfg: &FeatureConfig) -> Vec<f64> {
    let n_bins = cfg.n_fft / 2 + 1;
    let lo = hz_to_mel(cfg.fmin);
    let hi = hz_to_mel(cfg.fmax);
    let step = (hi - lo) / (cfg.n_mels + 1) as f64;
    let edges: Vec<f64> = (0..cfg.n_mels + 2).map(|i| mel_to_hz(lo + step * i as f64)).collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.n_fft as f64;
    let mut fb = vec![0.0; cfg.n_mels * n_bins];
    for m in 0..cfg.n_mels {
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let up = (f - l) / (c - l);
            let down = (r - f) / (r - c);
            fb[m * n_bins + k] = up.min(down).max(0.0);
        }
    }
    fb
}

/// Log-mel spectrogram of `wave`. Magnitudes below `exp(log_floor)` map to
/// exactly `log_floor`.
pub fn compute_mel(wave: &Waveform, cfg: &FeatureConfig) -> Result<MelSpectrogram> {
    wave.validate()?;
    cfg.validate()?;
    if wave.sample_rate != cfg.sample_rate {
        return Err(Error::invalid(format!(
            "waveform is {} Hz but features expect {} Hz",
            wave.sample_rate, cfg.sample_rate
        )));
    }
    let samples: Vec<f64> = wave.samples.iter().map(|&s| s as f64).collect();
    let n_frames = num_frames(samples.len(), cfg.hop_length);
    let stft = Stft::new(cfg.n_fft, cfg.hop_length);
    let spectra = stft.forward(&samples, n_frames);
    let magnitudes: Vec<Vec<f64>> = spectra.iter().map(|s| s.iter().map(|c| c.norm()).collect()).collect();
    Ok(mel_from_magnitudes(&magnitudes, cfg))
}

pub(crate) fn mel_from_magnitudes(magnitudes: &[Vec<f64>], cfg: &FeatureConfig) -> MelSpectrogram {
    let fb = mel_filterbank(cfg);
    let n_bins = cfg.n_fft / 2 + 1;
    let floor_lin = cfg.log_floor.exp();
    let floor = cfg.log_floor as f32;
    let mut values = Vec::with_capacity(magnitudes.len() * cfg.n_mels);
    for mag in magnitudes {
        for m in 0..cfg.n_mels {
            let row = &fb[m * n_bins..(m + 1) * n_bins];
            let e: f64 = row.iter().zip(mag).map(|(w, x)| w * x).sum();
            values.push(if e > floor_lin { e.ln() as f32 } else { floor });
        }
    }
    MelSpectrogram::new(values, magnitudes.len(), cfg.n_mels, cfg.hop_length, cfg.sample_rate)
        .expect("mel from magnitudes is well formed")
}

/// The lowest-frequency [`PROSODY_BANDS`] bins of every frame, copied exactly.
pub fn slice_prosody_bands(mel: &MelSpectrogram) -> Result<ProsodyBands> {
    if mel.n_mels() < PROSODY_BANDS {
        return Err(Error::invalid(format!(
            "need at least {PROSODY_BANDS} mel bins, got {}",
            mel.n_mels()
        )));
    }
    let mut values = Vec::with_capacity(mel.n_frames() * PROSODY_BANDS);
    for t in 0..mel.n_frames() {
        values.extend_from_slice(&mel.row(t)[..PROSODY_BANDS]);
    }
    Ok(ProsodyBands {
        values,
        n_frames: mel.n_frames(),
        hop_length: mel.hop_length,
        sample_rate: mel.sample_rate,
    })
}
