use std::path::Path;

use candle_core::{DType, Device, Tensor};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::landmarks::{LandmarkSequence, Normalization};
use super::model::{landmarks_tensor, vae_loss_tensor, LatentMode, MotionModel, VaeLossReport};
use crate::audio::{compute_mel, extract_pitch, MelSpectrogram, PitchContour, Waveform};
use crate::config::{hash_json, FeatureConfig, MotionConfig};
use crate::error::{Error, Result};
use crate::nn::{scalar, step_rng, Adam, Checkpoint, ModelKind};

const MAX_GRAD_NORM: f64 = 5.0;

/// One identity clip: audio features and the landmarks they should drive.
#[derive(Debug, Clone)]
pub struct MotionExample {
    pub mel: MelSpectrogram,
    pub pitch: PitchContour,
    pub landmarks: LandmarkSequence,
}

impl MotionExample {
    pub fn from_wave(wave: &Waveform, landmarks: LandmarkSequence, features: &FeatureConfig) -> Result<Self> {
        let mel = compute_mel(wave, features)?;
        let pitch = extract_pitch(wave, features)?;
        if landmarks.n_frames() != mel.n_frames() {
            return Err(Error::invalid(format!(
                "{} landmark frames for {} audio frames",
                landmarks.n_frames(),
                mel.n_frames()
            )));
        }
        Ok(Self { mel, pitch, landmarks })
    }
}

/// Which parameters the current step trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionPhase {
    Vae,
    Postnet,
    Done,
}

/// Trains the VAE (with the content encoder) first, then the postnet on the
/// frozen VAE's mean-mode output.
pub struct MotionTrainer {
    pub model: MotionModel,
    opt_vae: Adam,
    opt_post: Adam,
    cfg: MotionConfig,
    features: FeatureConfig,
    step: usize,
}

impl MotionTrainer {
    pub fn new(cfg: &MotionConfig, features: &FeatureConfig, dtype: DType) -> Result<Self> {
        Ok(Self {
            model: MotionModel::new(&cfg.model, features.n_mels, cfg.train.seed, dtype)?,
            opt_vae: Adam::new(cfg.train.lr).with_clip(MAX_GRAD_NORM),
            opt_post: Adam::new(cfg.train.lr).with_clip(MAX_GRAD_NORM),
            cfg: cfg.clone(),
            features: features.clone(),
            step: 0,
        })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn phase(&self) -> MotionPhase {
        let t = &self.cfg.train;
        if self.step < t.vae_steps {
            MotionPhase::Vae
        } else if self.step < t.vae_steps + t.postnet_steps {
            MotionPhase::Postnet
        } else {
            MotionPhase::Done
        }
    }

    /// KL weight after linear warm-up.
    pub fn kl_weight(&self) -> f64 {
        let t = &self.cfg.train;
        if t.kl_warmup_steps == 0 {
            t.lambda_kl
        } else {
            t.lambda_kl * (self.step as f64 / t.kl_warmup_steps as f64).min(1.0)
        }
    }

    pub fn set_normalization(&mut self, n: Normalization) {
        self.model.normalization = n;
    }

    pub fn train_step(&mut self, examples: &[MotionExample]) -> Result<VaeLossReport> {
        if examples.is_empty() {
            return Err(Error::invalid("no motion clips"));
        }
        let seed = self.cfg.train.seed;
        let mut rng = step_rng(seed, self.step as u64, 0);
        let ex = &examples[rng.random_range(0..examples.len())];
        let dt = self.model.dtype();
        let target = landmarks_tensor(&ex.landmarks, dt)?;
        let feats = self.model.features_from(&ex.mel, &ex.pitch)?;
        let report = match self.phase() {
            MotionPhase::Vae => {
                let (t, d) = (ex.mel.n_frames(), self.model.config().latent);
                let noise: Vec<f32> = (0..t * d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let noise = Tensor::from_vec(noise, (t, d), &Device::Cpu)?.to_dtype(dt)?;
                let fwd = self.model.forward_train(&feats, &target, &noise)?;
                let (total, r, kl) = vae_loss_tensor(&fwd.recon, &target, &fwd.mu, &fwd.logvar, self.kl_weight())?;
                let report = VaeLossReport {
                    recon: scalar(&r)?,
                    kl: scalar(&kl)?,
                    total: scalar(&total)?,
                };
                self.check(&report)?;
                let grads = total.backward()?;
                self.opt_vae.step(self.model.params(), &grads)?;
                report
            }
            MotionPhase::Postnet => {
                let base = self.model.vae_tensor(&feats, LatentMode::Mean)?.detach();
                let y = self.model.postnet_tensor(&base)?;
                let loss = (y - &target)?.sqr()?.mean_all()?;
                let report = VaeLossReport {
                    recon: scalar(&loss)?,
                    kl: 0.0,
                    total: scalar(&loss)?,
                };
                self.check(&report)?;
                let grads = loss.backward()?;
                self.opt_post.step(self.model.postnet_params(), &grads)?;
                report
            }
            MotionPhase::Done => return Err(Error::invalid("motion training already finished")),
        };
        self.step += 1;
        Ok(report)
    }

    fn check(&self, r: &VaeLossReport) -> Result<()> {
        if r.total.is_finite() {
            Ok(())
        } else {
            Err(Error::Divergence {
                step: self.step,
                what: "motion loss",
            })
        }
    }

    pub fn train(
        &mut self,
        examples: &[MotionExample],
        mut on_step: impl FnMut(usize, MotionPhase, &VaeLossReport) -> Result<()>,
    ) -> Result<()> {
        while self.phase() != MotionPhase::Done {
            let phase = self.phase();
            let r = self.train_step(examples)?;
            on_step(self.step, phase, &r)?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let json = serde_json::to_string(&self.cfg).map_err(|e| Error::Config(e.to_string()))?;
        let mut ck = Checkpoint::new(
            ModelKind::Motion,
            hash_json(&self.cfg.model),
            self.features.hash(),
            json,
        );
        ck.step = self.step;
        ck.insert_all(self.model.params().snapshot("model."));
        ck.insert_all(self.model.postnet_params().snapshot("postnet."));
        ck.insert_all(self.opt_vae.state_tensors("opt.vae."));
        ck.insert_all(self.opt_post.state_tensors("opt.post."));
        ck.meta
            .insert("adam_vae_step".into(), self.opt_vae.step_count().to_string());
        ck.meta
            .insert("adam_post_step".into(), self.opt_post.step_count().to_string());
        ck.meta.insert("n_mels".into(), self.model.n_mels().to_string());
        let n = self.model.normalization;
        ck.meta.insert(
            "normalization".into(),
            format!(
                "{} {} {} {}",
                n.translation[0], n.translation[1], n.translation[2], n.scale
            ),
        );
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint()?.save(path)
    }
}

fn parse_normalization(s: &str) -> Result<Normalization> {
    let v: Vec<f32> = s
        .split_whitespace()
        .map(|x| x.parse().map_err(|_| Error::Checkpoint("bad normalization".into())))
        .collect::<Result<_>>()?;
    if v.len() != 4 {
        return Err(Error::Checkpoint("bad normalization".into()));
    }
    Ok(Normalization {
        translation: [v[0], v[1], v[2]],
        scale: v[3],
    })
}

/// Loads an identity (motion) checkpoint for inference.
pub fn load_motion_checkpoint(
    path: &Path,
    features: Option<&FeatureConfig>,
    force: bool,
    dtype: DType,
) -> Result<MotionModel> {
    let hash = features.map(|f| f.hash());
    let ck = Checkpoint::load_expecting(path, ModelKind::Motion, hash.as_deref(), force)?;
    let cfg: MotionConfig = ck.config()?;
    let n_mels = ck
        .meta_value("n_mels")?
        .parse()
        .map_err(|_| Error::Checkpoint("bad n_mels".into()))?;
    let mut model = MotionModel::new(&cfg.model, n_mels, cfg.train.seed, dtype)?;
    model.params().restore(&ck.tensors, "model.")?;
    model.postnet_params().restore(&ck.tensors, "postnet.")?;
    model.normalization = parse_normalization(ck.meta_value("normalization")?)?;
    Ok(model)
}
