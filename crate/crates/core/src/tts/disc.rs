use candle_core::{DType, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::normalize_mel;
use crate::config::TtsModelConfig;
use crate::error::{Error, Result};
use crate::nn::{Conv1d, ParamStore};

/// Window-based convolutional critic over fixed-length mel crops. Each crop
/// gets one scalar score (the time-average of the last layer).
pub struct Discriminator {
    store: ParamStore,
    convs: Vec<Conv1d>,
    pub window: usize,
}

impl Discriminator {
    pub fn new(cfg: &TtsModelConfig, n_mels: usize, seed: u64, dtype: DType) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new(dtype);
        let c = cfg.disc_channels;
        let convs = vec![
            Conv1d::new(&mut store, &mut rng, "disc.conv0", n_mels, c, 5)?,
            Conv1d::new(&mut store, &mut rng, "disc.conv1", c, c, 5)?,
            Conv1d::new(&mut store, &mut rng, "disc.conv2", c, 1, 3)?,
        ];
        Ok(Self {
            store,
            convs,
            window: cfg.disc_window.max(1),
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    /// Score of one `(W, n_mels)` log-mel crop.
    pub fn score(&self, crop: &Tensor) -> Result<Tensor> {
        let mut h = normalize_mel(crop)?;
        let last = self.convs.len() - 1;
        for (i, conv) in self.convs.iter().enumerate() {
            h = conv.forward(&h)?;
            if i < last {
                h = h.silu()?;
            }
        }
        Ok(h.mean_all()?)
    }

    /// Scores of the crops of `mel` starting at `starts`, as a 1-D tensor.
    pub fn score_crops(&self, mel: &Tensor, starts: &[usize]) -> Result<Tensor> {
        let t = mel.dims2()?.0;
        let w = self.window.min(t);
        let scores = starts
            .iter()
            .map(|&s| self.score(&mel.narrow(0, s.min(t - w), w)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Tensor::stack(&scores, 0)?)
    }
}

/// LSGAN objectives on score tensors:
/// `d = mean((real - 1)^2) / 2 + mean(fake^2) / 2`, `g = mean((fake - 1)^2)`.
pub fn lsgan_losses_tensor(d_real: &Tensor, d_fake: &Tensor) -> Result<(Tensor, Tensor)> {
    let d_loss = (((d_real - 1.0)?.sqr()?.mean_all()? * 0.5)? + (d_fake.sqr()?.mean_all()? * 0.5)?)?;
    let g_loss = (d_fake - 1.0)?.sqr()?.mean_all()?;
    Ok((d_loss, g_loss))
}

/// Scalar form of [`lsgan_losses_tensor`]; returns `(d_loss, g_loss)`.
pub fn lsgan_losses(d_real: &[f64], d_fake: &[f64]) -> Result<(f64, f64)> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::invalid("discriminator outputs are empty"));
    }
    if d_real.iter().chain(d_fake).any(|x| !x.is_finite()) {
        return Err(Error::invalid("discriminator outputs must be finite"));
    }
    let mean = |xs: &[f64], f: &dyn Fn(f64) -> f64| xs.iter().map(|&x| f(x)).sum::<f64>() / xs.len() as f64;
    let d_loss = 0.5 * mean(d_real, &|x| (x - 1.0).powi(2)) + 0.5 * mean(d_fake, &|x| x * x);
    let g_loss = mean(d_fake, &|x| (x - 1.0).powi(2));
    Ok((d_loss, g_loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::scalar;
    use candle_core::Device;

    #[test]
    fn targets_met_give_zero_loss() {
        let (d, _) = lsgan_losses(&[1.0, 1.0], &[0.0]).unwrap();
        assert_eq!(d, 0.0);
        let (_, g) = lsgan_losses(&[0.3], &[1.0, 1.0]).unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn half_half() {
        let (d, g) = lsgan_losses(&[0.5], &[0.5]).unwrap();
        assert!((d - 0.25).abs() < 1e-15);
        assert!((g - 0.25).abs() < 1e-15);
    }

    #[test]
    fn tensor_and_scalar_forms_agree() {
        let r = [0.2, 0.9, -0.4];
        let f = [0.1, 1.3];
        let (d, g) = lsgan_losses(&r, &f).unwrap();
        let rt = Tensor::new(&r, &Device::Cpu).unwrap();
        let ft = Tensor::new(&f, &Device::Cpu).unwrap();
        let (dt, gt) = lsgan_losses_tensor(&rt, &ft).unwrap();
        assert!((scalar(&dt).unwrap() - d).abs() < 1e-12);
        assert!((scalar(&gt).unwrap() - g).abs() < 1e-12);
        assert!(d >= 0.0 && g >= 0.0);
    }

    #[test]
    fn crops_clamp_to_short_inputs() {
        let cfg = TtsModelConfig {
            disc_channels: 4,
            disc_window: 8,
            ..Default::default()
        };
        let disc = Discriminator::new(&cfg, 20, 0, DType::F32).unwrap();
        let mel = Tensor::zeros((5, 20), DType::F32, &Device::Cpu).unwrap();
        let s = disc.score_crops(&mel, &[0, 3]).unwrap();
        assert_eq!(s.dims(), &[2]);
    }
}
