use candle_core::Tensor;

use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};
use crate::nn::scalar;

/// Generator-side terms of the stage-1 objective.
///
/// `adv_g_loss` is the weighted adversarial contribution actually added to
/// the total (zero before the discriminator warm-up ends); `adv_d_loss` is the
/// discriminator's own LSGAN loss for the same step, reported for monitoring.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct Stage1LossReport {
    pub recon_l2: f64,
    pub vq_loss: f64,
    pub adv_g_loss: f64,
    pub adv_d_loss: f64,
    pub total: f64,
}

impl Stage1LossReport {
    pub fn is_finite(&self) -> bool {
        [
            self.recon_l2,
            self.vq_loss,
            self.adv_g_loss,
            self.adv_d_loss,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// VQ-VAE loss pieces: `||sg(z) - q||^2` (codebook) and `||z - sg(q)||^2`
/// (commitment), both as mean squared errors.
#[derive(Debug, Clone)]
pub struct VqTerms {
    pub codebook: Tensor,
    pub commitment: Tensor,
}

impl VqTerms {
    pub fn new(pre_quant: &Tensor, quantized: &Tensor) -> Result<Self> {
        let codebook = (pre_quant.detach() - quantized)?.sqr()?.mean_all()?;
        let commitment = (pre_quant - quantized.detach())?.sqr()?.mean_all()?;
        Ok(Self { codebook, commitment })
    }

    /// `codebook + beta * commitment`.
    pub fn loss(&self, beta: f64) -> Result<Tensor> {
        Ok((&self.codebook + (&self.commitment * beta)?)?)
    }
}

/// Differentiable stage-1 objective: mean squared mel error plus the VQ
/// loss plus the (already weighted) adversarial generator term.
pub fn stage1_loss_tensor(
    target: &Tensor,
    predicted: &Tensor,
    vq: &VqTerms,
    beta: f64,
    adv_g: Option<&Tensor>,
) -> Result<(Tensor, Stage1LossReport)> {
    if target.dims() != predicted.dims() {
        return Err(Error::invalid(format!(
            "target shape {:?} differs from prediction {:?}",
            target.dims(),
            predicted.dims()
        )));
    }
    let recon = (predicted - target)?.sqr()?.mean_all()?;
    let vq_loss = vq.loss(beta)?;
    let mut total = (&recon + &vq_loss)?;
    let mut adv = 0.0;
    if let Some(g) = adv_g {
        total = (total + g)?;
        adv = scalar(g)?;
    }
    let report = Stage1LossReport {
        recon_l2: scalar(&recon)?,
        vq_loss: scalar(&vq_loss)?,
        adv_g_loss: adv,
        adv_d_loss: 0.0,
        total: scalar(&total)?,
    };
    Ok((total, report))
}

/// Stage-1 loss on materialized spectrograms. `codebook_term` and
/// `commitment_term` are the two VQ mean squared errors.
pub fn stage1_loss(
    target: &MelSpectrogram,
    predicted: &MelSpectrogram,
    codebook_term: f64,
    commitment_term: f64,
    beta: f64,
    adv_g_loss: f64,
) -> Result<Stage1LossReport> {
    if target.n_frames() != predicted.n_frames() || target.n_mels() != predicted.n_mels() {
        return Err(Error::invalid(format!(
            "target is {}x{}, prediction is {}x{}",
            target.n_frames(),
            target.n_mels(),
            predicted.n_frames(),
            predicted.n_mels()
        )));
    }
    let n = target.values().len() as f64;
    let recon_l2 = target
        .values()
        .iter()
        .zip(predicted.values())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum::<f64>()
        / n;
    let vq_loss = codebook_term + beta * commitment_term;
    Ok(Stage1LossReport {
        recon_l2,
        vq_loss,
        adv_g_loss,
        adv_d_loss: 0.0,
        total: recon_l2 + vq_loss + adv_g_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mel(values: Vec<f32>, t: usize, m: usize) -> MelSpectrogram {
        MelSpectrogram::new(values, t, m, 200, 16_000).unwrap()
    }

    #[test]
    fn perfect_reconstruction_is_zero() {
        let y = mel(vec![0.5; 40], 2, 20);
        let r = stage1_loss(&y, &y, 0.0, 0.0, 0.25, 0.0).unwrap();
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn unit_offset_gives_unit_loss() {
        let y = mel(vec![0.5; 40], 2, 20);
        let yh = mel(vec![1.5; 40], 2, 20);
        let r = stage1_loss(&y, &yh, 0.0, 0.0, 0.25, 0.0).unwrap();
        assert_eq!(r.recon_l2, 1.0);
    }

    #[test]
    fn recon_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (t, m) = (13, 24);
        let a: Vec<f32> = (0..t * m).map(|_| rng.random_range(-5.0..5.0)).collect();
        let b: Vec<f32> = (0..t * m).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut acc = 0.0f64;
        for i in 0..t {
            for j in 0..m {
                let d = a[i * m + j] as f64 - b[i * m + j] as f64;
                acc += d * d;
            }
        }
        let expected = acc / (t * m) as f64;
        let r = stage1_loss(&mel(a, t, m), &mel(b, t, m), 0.3, 0.4, 0.25, 0.2).unwrap();
        assert!((r.recon_l2 - expected).abs() < 1e-12);
        assert!((r.vq_loss - (0.3 + 0.25 * 0.4)).abs() < 1e-12);
        assert!((r.total - (r.recon_l2 + r.vq_loss + r.adv_g_loss)).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let y = mel(vec![0.0; 40], 2, 20);
        let yh = mel(vec![0.0; 60], 3, 20);
        assert!(stage1_loss(&y, &yh, 0.0, 0.0, 0.25, 0.0).is_err());
    }
}
