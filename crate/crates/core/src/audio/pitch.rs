use super::stft::Stft;
use super::{num_frames, PitchContour, Waveform};
use crate::config::FeatureConfig;
use crate::error::{Error, Result};

pub const PITCH_MIN_HZ: f64 = 60.0;
pub const PITCH_MAX_HZ: f64 = 500.0;

/// Frames quieter than this RMS are unvoiced regardless of periodicity.
const SILENCE_RMS: f64 = 1e-4;

/// Frame-wise normalized-autocorrelation pitch tracker.
///
/// For each analysis frame the normalized cross-correlation between the frame
/// and its lagged copy is scanned over lags covering [`PITCH_MIN_HZ`,
/// `PITCH_MAX_HZ`]. The frame is voiced when the best peak reaches
/// `cfg.pitch_voicing_threshold`. To avoid octave errors the shortest lag
/// whose score is within 10% of the best is chosen and refined by parabolic
/// interpolation.
pub fn extract_pitch(wave: &Waveform, cfg: &FeatureConfig) -> Result<PitchContour> {
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
    let sr = cfg.sample_rate as f64;
    let min_lag = (sr / PITCH_MAX_HZ).floor().max(2.0) as usize;
    let max_lag = ((sr / PITCH_MIN_HZ).ceil() as usize).min(cfg.n_fft / 2);

    let mut frame = vec![0.0; cfg.n_fft];
    let mut f0 = Vec::with_capacity(n_frames);
    let mut voiced = Vec::with_capacity(n_frames);
    let mut scores = vec![0.0; max_lag + 2];
    for t in 0..n_frames {
        stft.frame(&samples, t, &mut frame);
        let mean = frame.iter().sum::<f64>() / frame.len() as f64;
        frame.iter_mut().for_each(|x| *x -= mean);
        let energy: f64 = frame.iter().map(|x| x * x).sum();
        if (energy / frame.len() as f64).sqrt() < SILENCE_RMS || min_lag >= max_lag {
            f0.push(0.0);
            voiced.push(false);
            continue;
        }
        for (lag, s) in scores.iter_mut().enumerate().take(max_lag + 2).skip(min_lag - 1) {
            *s = ncc(&frame, lag);
        }
        let best = (min_lag..=max_lag).map(|l| scores[l]).fold(f64::NEG_INFINITY, f64::max);
        if best < cfg.pitch_voicing_threshold {
            f0.push(0.0);
            voiced.push(false);
            continue;
        }
        let lag = (min_lag..=max_lag)
            .find(|&l| scores[l] >= 0.9 * best && scores[l] >= scores[l - 1] && scores[l] >= scores[l + 1])
            .unwrap_or_else(|| {
                (min_lag..=max_lag)
                    .max_by(|&a, &b| scores[a].total_cmp(&scores[b]))
                    .expect("non-empty lag range")
            });
        let (a, b, c) = (scores[lag - 1], scores[lag], scores[lag + 1]);
        let denom = a - 2.0 * b + c;
        let shift = if denom.abs() > 1e-12 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        f0.push((sr / (lag as f64 + shift)) as f32);
        voiced.push(true);
    }
    Ok(PitchContour { f0, voiced })
}

fn ncc(x: &[f64], lag: usize) -> f64 {
    let n = x.len() - lag;
    let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (a, b) = (x[i], x[i + lag]);
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    let d = (xx * yy).sqrt();
    if d > 0.0 {
        xy / d
    } else {
        0.0
    }
}
