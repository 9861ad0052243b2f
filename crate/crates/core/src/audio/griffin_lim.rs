use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use super::mel::mel_filterbank;
use super::stft::Stft;
use super::{MelSpectrogram, Waveform};
use crate::config::FeatureConfig;
use crate::error::{Error, Result};

/// Phase-initialization seed used when callers have no seed of their own.
pub const GRIFFIN_LIM_SEED: u64 = 0x5eed;

/// Reconstructs a waveform of `T * hop_length` samples from a log-mel
/// spectrogram.
///
/// Mel magnitudes are mapped back to linear STFT magnitudes with the
/// non-negative-clamped pseudo-inverse of the filterbank; bins at the log
/// floor are treated as silent. Phases start uniformly random from `seed` and
/// are refined for `iters` Griffin-Lim projections. The result is clipped to
/// [-1, 1].
pub fn griffin_lim(mel: &MelSpectrogram, cfg: &FeatureConfig, iters: usize, seed: u64) -> Result<Waveform> {
    if iters == 0 {
        return Err(Error::invalid("griffin-lim needs at least one iteration"));
    }
    cfg.validate()?;
    if mel.n_mels() != cfg.n_mels || mel.hop_length != cfg.hop_length {
        return Err(Error::invalid(format!(
            "mel geometry ({} bins, hop {}) does not match features ({} bins, hop {})",
            mel.n_mels(),
            mel.hop_length,
            cfg.n_mels,
            cfg.hop_length
        )));
    }
    let n_bins = cfg.n_fft / 2 + 1;
    let fb = DMatrix::from_row_slice(cfg.n_mels, n_bins, &mel_filterbank(cfg));
    let pinv = fb
        .pseudo_inverse(1e-6)
        .map_err(|e| Error::invalid(format!("filterbank pseudo-inverse failed: {e}")))?;

    let floor = cfg.log_floor as f32;
    let t_frames = mel.n_frames();
    let mut target = Vec::with_capacity(t_frames);
    for t in 0..t_frames {
        let m = nalgebra::DVector::from_iterator(
            cfg.n_mels,
            mel.row(t)
                .iter()
                .map(|&v| if v <= floor { 0.0 } else { (v as f64).exp() }),
        );
        let lin = &pinv * m;
        target.push(lin.iter().map(|&x| x.max(0.0)).collect::<Vec<f64>>());
    }

    let length = t_frames * cfg.hop_length;
    let stft = Stft::new(cfg.n_fft, cfg.hop_length);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spectra: Vec<Vec<Complex64>> = target
        .iter()
        .map(|mag| {
            mag.iter()
                .map(|&a| Complex64::from_polar(a, rng.random_range(0.0..std::f64::consts::TAU)))
                .collect()
        })
        .collect();
    let mut signal = stft.inverse(&spectra, length);
    for _ in 1..iters {
        let rebuilt = stft.forward(&signal, t_frames);
        for ((spec, mag), est) in spectra.iter_mut().zip(&target).zip(&rebuilt) {
            for ((s, &a), e) in spec.iter_mut().zip(mag).zip(est) {
                let n = e.norm();
                *s = if n > 1e-12 { e * (a / n) } else { Complex64::new(a, 0.0) };
            }
        }
        signal = stft.inverse(&spectra, length);
    }
    Ok(Waveform::new(
        signal.iter().map(|&x| x.clamp(-1.0, 1.0) as f32).collect(),
        cfg.sample_rate,
    ))
}
