use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::landmarks::{LandmarkSequence, Normalization, FRAME_DIM};
use crate::audio::{compute_mel, extract_pitch, MelSpectrogram, PitchContour, Waveform};
use crate::config::{FeatureConfig, MotionModelConfig};
use crate::error::{Error, Result};
use crate::nn::{Conv1d, ConvStack, Init, Linear, ParamStore};
use crate::tts::MEL_OFFSET;

/// Reference pitch for log-f0 normalization.
const F0_REF_HZ: f64 = 150.0;

/// Frame-rate audio representation consumed by the motion VAE.
#[derive(Debug, Clone)]
pub struct AudioFeatureSequence {
    /// `(T, d_feat)` learned content features.
    pub content: Tensor,
    pub pitch: PitchContour,
}

impl AudioFeatureSequence {
    pub fn len(&self) -> usize {
        self.pitch.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pitch.is_empty()
    }

    /// `(T, d_feat + 2)`: content, normalized log-f0 (0 when unvoiced) and
    /// the voiced flag.
    pub fn conditioning(&self) -> Result<Tensor> {
        let t = self.len();
        if self.content.dims2()?.0 != t {
            return Err(Error::invalid(format!(
                "{} content frames for {t} pitch frames",
                self.content.dims2()?.0
            )));
        }
        let mut p = Vec::with_capacity(2 * t);
        for (&f0, &v) in self.pitch.f0.iter().zip(&self.pitch.voiced) {
            if v && f0 > 0.0 {
                p.push(((f0 as f64 / F0_REF_HZ).ln() / 0.5) as f32);
                p.push(1.0);
            } else {
                p.push(0.0);
                p.push(0.0);
            }
        }
        let p = Tensor::from_vec(p, (t, 2), &Device::Cpu)?.to_dtype(self.content.dtype())?;
        Ok(Tensor::cat(&[&self.content, &p], 1)?)
    }
}

/// Posterior and reconstruction from one training pass.
pub struct VaeForward {
    pub recon: Tensor,
    pub mu: Tensor,
    pub logvar: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentMode {
    /// `z = 0`, the prior mean.
    Mean,
    /// `z ~ N(0, I)` from the given seed.
    Sample(u64),
}

struct ContentEncoder {
    input: Linear,
    stack: ConvStack,
    output: Linear,
}

struct Vae {
    cond_in: Linear,
    cond_stack: ConvStack,
    enc_hidden: Linear,
    enc_mu: Linear,
    enc_logvar: Linear,
    dec_in: Linear,
    dec_stack: ConvStack,
    dec_out: Linear,
}

struct Postnet {
    conv: Conv1d,
    out: Linear,
}

/// Content encoder, conditional VAE and identity postnet.
pub struct MotionModel {
    cfg: MotionModelConfig,
    n_mels: usize,
    store: ParamStore,
    postnet_store: ParamStore,
    content: ContentEncoder,
    vae: Vae,
    postnet: Postnet,
    /// Landmark normalization of the identity this model was trained on.
    pub normalization: Normalization,
}

impl MotionModel {
    pub fn new(cfg: &MotionModelConfig, n_mels: usize, seed: u64, dtype: DType) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new(dtype);
        let (h, k) = (cfg.hidden, cfg.kernel_size);
        let content = ContentEncoder {
            input: Linear::new(&mut s, &mut rng, "content.input", n_mels, h)?,
            stack: ConvStack::new(&mut s, &mut rng, "content.stack", h, k, cfg.layers)?,
            output: Linear::new(&mut s, &mut rng, "content.output", h, cfg.d_feat)?,
        };
        let vae = Vae {
            cond_in: Linear::new(&mut s, &mut rng, "vae.cond_in", cfg.d_feat + 2, h)?,
            cond_stack: ConvStack::new(&mut s, &mut rng, "vae.cond_stack", h, k, cfg.layers)?,
            enc_hidden: Linear::new(&mut s, &mut rng, "vae.enc_hidden", FRAME_DIM + h, h)?,
            enc_mu: Linear::new(&mut s, &mut rng, "vae.enc_mu", h, cfg.latent)?,
            enc_logvar: Linear::with_init(&mut s, &mut rng, "vae.enc_logvar", h, cfg.latent, Init::Zeros)?,
            dec_in: Linear::new(&mut s, &mut rng, "vae.dec_in", cfg.latent + h, h)?,
            dec_stack: ConvStack::new(&mut s, &mut rng, "vae.dec_stack", h, k, cfg.layers)?,
            dec_out: Linear::new(&mut s, &mut rng, "vae.dec_out", h, FRAME_DIM)?,
        };
        let mut ps = ParamStore::new(dtype);
        let postnet = Postnet {
            conv: Conv1d::new(&mut ps, &mut rng, "postnet.conv", FRAME_DIM, cfg.postnet_hidden, k)?,
            out: Linear::with_init(
                &mut ps,
                &mut rng,
                "postnet.out",
                cfg.postnet_hidden,
                FRAME_DIM,
                Init::Zeros,
            )?,
        };
        Ok(Self {
            cfg: cfg.clone(),
            n_mels,
            store: s,
            postnet_store: ps,
            content,
            vae,
            postnet,
            normalization: Normalization::default(),
        })
    }

    pub fn config(&self) -> &MotionModelConfig {
        &self.cfg
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    /// Content encoder and VAE parameters.
    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn postnet_params(&self) -> &ParamStore {
        &self.postnet_store
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    /// `(T, d_feat)` content features from a log-mel.
    pub fn content_features(&self, mel: &MelSpectrogram) -> Result<Tensor> {
        if mel.n_mels() != self.n_mels {
            return Err(Error::invalid(format!(
                "mel has {} bins, motion model expects {}",
                mel.n_mels(),
                self.n_mels
            )));
        }
        let x =
            Tensor::from_slice(mel.values(), (mel.n_frames(), mel.n_mels()), &Device::Cpu)?.to_dtype(self.dtype())?;
        let x = ((x - MEL_OFFSET)? / 4.0)?;
        let h = self.content.stack.forward(&self.content.input.forward(&x)?)?;
        self.content.output.forward(&h)
    }

    pub fn features_from(&self, mel: &MelSpectrogram, pitch: &PitchContour) -> Result<AudioFeatureSequence> {
        if pitch.len() != mel.n_frames() {
            return Err(Error::invalid(format!(
                "{} pitch frames for {} mel frames",
                pitch.len(),
                mel.n_frames()
            )));
        }
        Ok(AudioFeatureSequence {
            content: self.content_features(mel)?,
            pitch: pitch.clone(),
        })
    }

    pub fn encode_audio_features(&self, wave: &Waveform, features: &FeatureConfig) -> Result<AudioFeatureSequence> {
        let mel = compute_mel(wave, features)?;
        let pitch = extract_pitch(wave, features)?;
        self.features_from(&mel, &pitch)
    }

    fn condition(&self, feats: &AudioFeatureSequence) -> Result<Tensor> {
        let c = self.vae.cond_in.forward(&feats.conditioning()?)?;
        self.vae.cond_stack.forward(&c)
    }

    fn decode(&self, z: &Tensor, cond: &Tensor) -> Result<Tensor> {
        let h = self.vae.dec_in.forward(&Tensor::cat(&[z, cond], 1)?)?;
        let h = self.vae.dec_stack.forward(&h)?;
        self.vae.dec_out.forward(&h)
    }

    /// Training pass: posterior from target landmarks, reparameterized
    /// sample with the given noise, reconstruction.
    pub fn forward_train(&self, feats: &AudioFeatureSequence, target: &Tensor, noise: &Tensor) -> Result<VaeForward> {
        let cond = self.condition(feats)?;
        let e = self
            .vae
            .enc_hidden
            .forward(&Tensor::cat(&[target, &cond], 1)?)?
            .silu()?;
        let mu = self.vae.enc_mu.forward(&e)?;
        let logvar = self.vae.enc_logvar.forward(&e)?;
        let z = (&mu + ((&logvar * 0.5)?.exp()? * noise)?)?;
        let recon = self.decode(&z, &cond)?;
        Ok(VaeForward { recon, mu, logvar })
    }

    /// `(T, 204)` VAE output without the postnet.
    pub fn vae_tensor(&self, feats: &AudioFeatureSequence, mode: LatentMode) -> Result<Tensor> {
        let t = feats.len();
        if t == 0 {
            return Err(Error::invalid("empty audio feature sequence"));
        }
        let z = match mode {
            LatentMode::Mean => Tensor::zeros((t, self.cfg.latent), self.dtype(), &Device::Cpu)?,
            LatentMode::Sample(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let v: Vec<f32> = (0..t * self.cfg.latent)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect();
                Tensor::from_vec(v, (t, self.cfg.latent), &Device::Cpu)?.to_dtype(self.dtype())?
            }
        };
        self.decode(&z, &self.condition(feats)?)
    }

    pub fn postnet_tensor(&self, x: &Tensor) -> Result<Tensor> {
        let delta = self.postnet.out.forward(&self.postnet.conv.forward(x)?.silu()?)?;
        Ok((x + delta)?)
    }

    pub fn vae_audio_to_motion(
        &self,
        feats: &AudioFeatureSequence,
        mode: LatentMode,
        fps: f32,
    ) -> Result<LandmarkSequence> {
        self.to_landmarks(&self.vae_tensor(feats, mode)?, fps)
    }

    pub fn postnet_refine(&self, lms: &LandmarkSequence) -> Result<LandmarkSequence> {
        let x = landmarks_tensor(lms, self.dtype())?;
        self.to_landmarks(&self.postnet_tensor(&x)?, lms.fps)
    }

    /// VAE (mean mode unless a seed is given) followed by the postnet.
    pub fn audio_to_motion(
        &self,
        feats: &AudioFeatureSequence,
        mode: LatentMode,
        fps: f32,
    ) -> Result<LandmarkSequence> {
        let y = self.postnet_tensor(&self.vae_tensor(feats, mode)?)?;
        self.to_landmarks(&y, fps)
    }

    fn to_landmarks(&self, y: &Tensor, fps: f32) -> Result<LandmarkSequence> {
        let mut v = y.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("motion model produced non-finite landmarks"));
        }
        for x in v.iter_mut() {
            *x = x.clamp(-super::COORD_LIMIT, super::COORD_LIMIT);
        }
        LandmarkSequence::new(v, fps, self.normalization)
    }
}

pub fn landmarks_tensor(lms: &LandmarkSequence, dtype: DType) -> Result<Tensor> {
    Ok(Tensor::from_slice(lms.points(), (lms.n_frames(), FRAME_DIM), &Device::Cpu)?.to_dtype(dtype)?)
}

/// VAE objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct VaeLossReport {
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
}

/// `recon = mean((x - y)^2)`, `kl = mean over frames of
/// sum_d 0.5 * (mu^2 + exp(logvar) - 1 - logvar)`, `total = recon + lambda * kl`.
pub fn vae_loss_tensor(
    recon: &Tensor,
    target: &Tensor,
    mu: &Tensor,
    logvar: &Tensor,
    lambda_kl: f64,
) -> Result<(Tensor, Tensor, Tensor)> {
    if recon.dims() != target.dims() || mu.dims() != logvar.dims() {
        return Err(Error::invalid(format!(
            "shape mismatch: recon {:?} target {:?} mu {:?} logvar {:?}",
            recon.dims(),
            target.dims(),
            mu.dims(),
            logvar.dims()
        )));
    }
    let r = (recon - target)?.sqr()?.mean_all()?;
    let frames = mu.dims()[0].max(1) as f64;
    let kl = ((((mu.sqr()? + logvar.exp()?)? - 1.0)? - logvar)?.sum_all()? * (0.5 / frames))?;
    let total = (&r + (&kl * lambda_kl)?)?;
    Ok((total, r, kl))
}

pub fn vae_loss(
    recon: &LandmarkSequence,
    target: &LandmarkSequence,
    mu: &[Vec<f64>],
    logvar: &[Vec<f64>],
    lambda_kl: f64,
) -> Result<VaeLossReport> {
    if recon.n_frames() != target.n_frames() {
        return Err(Error::invalid("landmark sequences differ in length"));
    }
    if mu.len() != logvar.len() || mu.iter().zip(logvar).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::invalid("mu and logvar differ in shape"));
    }
    let n = recon.points().len() as f64;
    let r = recon
        .points()
        .iter()
        .zip(target.points())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum::<f64>()
        / n;
    let frames = mu.len().max(1) as f64;
    let kl = mu
        .iter()
        .zip(logvar)
        .flat_map(|(m, l)| m.iter().zip(l))
        .map(|(&m, &l)| 0.5 * (m * m + l.exp() - 1.0 - l))
        .sum::<f64>()
        / frames;
    Ok(VaeLossReport {
        recon: r,
        kl,
        total: r + lambda_kl * kl,
    })
}
