use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Short-time Fourier transform under the crate framing convention
/// (centered frames, zero padding, periodic Hann window).
pub(crate) struct Stft {
    n_fft: usize,
    hop: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(n_fft: usize, hop: usize) -> Self {
        let mut planner = FftPlanner::new();
        let window = (0..n_fft)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n_fft as f64).cos())
            .collect();
        Self {
            n_fft,
            hop,
            window,
            fft: planner.plan_fft_forward(n_fft),
            ifft: planner.plan_fft_inverse(n_fft),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Raw (unwindowed) samples of frame `t`, zero outside the signal.
    pub fn frame(&self, samples: &[f64], t: usize, out: &mut [f64]) {
        let half = self.n_fft / 2;
        let start = (t * self.hop) as isize - half as isize;
        for (i, o) in out.iter_mut().enumerate() {
            let idx = start + i as isize;
            *o = if idx >= 0 && (idx as usize) < samples.len() {
                samples[idx as usize]
            } else {
                0.0
            };
        }
    }

    /// One-sided spectra of the first `n_frames` frames.
    pub fn forward(&self, samples: &[f64], n_frames: usize) -> Vec<Vec<Complex64>> {
        let mut raw = vec![0.0; self.n_fft];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        let mut out = Vec::with_capacity(n_frames);
        for t in 0..n_frames {
            self.frame(samples, t, &mut raw);
            for ((b, &r), &w) in buf.iter_mut().zip(&raw).zip(&self.window) {
                *b = Complex64::new(r * w, 0.0);
            }
            self.fft.process(&mut buf);
            out.push(buf[..self.n_bins()].to_vec());
        }
        out
    }

    /// Weighted overlap-add inverse producing `length` samples.
    pub fn inverse(&self, spectra: &[Vec<Complex64>], length: usize) -> Vec<f64> {
        let half = self.n_fft / 2;
        let padded_len = (spectra.len().saturating_sub(1)) * self.hop + self.n_fft;
        let mut acc = vec![0.0; padded_len.max(length + self.n_fft)];
        let mut norm = vec![0.0; acc.len()];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        for (t, spec) in spectra.iter().enumerate() {
            buf[..spec.len()].copy_from_slice(spec);
            for k in 1..self.n_fft - self.n_bins() + 1 {
                buf[self.n_fft - k] = spec[k].conj();
            }
            buf[0].im = 0.0;
            buf[half].im = 0.0;
            self.ifft.process(&mut buf);
            let off = t * self.hop;
            for i in 0..self.n_fft {
                let w = self.window[i];
                acc[off + i] += buf[i].re / self.n_fft as f64 * w;
                norm[off + i] += w * w;
            }
        }
        (0..length)
            .map(|n| {
                let p = n + half;
                if p < acc.len() && norm[p] > 1e-8 {
                    acc[p] / norm[p]
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_forward_is_identity_in_the_interior() {
        let stft = Stft::new(64, 16);
        let x: Vec<f64> = (0..400).map(|i| ((i * 7919) % 97) as f64 / 97.0 - 0.5).collect();
        let n_frames = x.len() / 16 + 1;
        let spec = stft.forward(&x, n_frames);
        let y = stft.inverse(&spec, x.len());
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}
