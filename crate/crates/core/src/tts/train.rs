use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Tensor};
use rand::Rng;

use super::disc::{lsgan_losses_tensor, Discriminator};
use super::loss::{stage1_loss_tensor, Stage1LossReport, VqTerms};
use super::model::TtsModel;
use super::PhonemeSequence;
use crate::audio::{slice_prosody_bands, FrameToPhonemeMap, MelSpectrogram, ProsodyBands};
use crate::config::{hash_json, FeatureConfig, TtsConfig};
use crate::error::{Error, Result};
use crate::nn::{scalar, step_rng, to_vec2, Adam, Checkpoint, ModelKind};

const STREAM_BATCH: u64 = 0;
const STREAM_CROP: u64 = 1;
const STREAM_RESET: u64 = 2;
const MAX_GRAD_NORM: f64 = 5.0;
/// Seed offset between the generator and discriminator initializations.
const DISC_SEED_OFFSET: u64 = 0x0d15c;

/// One training utterance with everything the stage-1 forward needs.
#[derive(Debug, Clone)]
pub struct TtsExample {
    pub speaker: String,
    pub phonemes: PhonemeSequence,
    pub mel: MelSpectrogram,
    pub bands: ProsodyBands,
    pub align: FrameToPhonemeMap,
    /// Timbre reference: a different utterance of the same speaker when one
    /// exists, otherwise the first half of this one.
    pub ref_mel: MelSpectrogram,
}

/// Builds examples and assigns timbre references. References cycle through
/// each speaker's utterances in input order.
pub fn prepare_examples(
    items: Vec<(String, PhonemeSequence, MelSpectrogram, FrameToPhonemeMap)>,
) -> Result<Vec<TtsExample>> {
    let mut by_speaker: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        by_speaker.entry(item.0.clone()).or_default().push(i);
    }
    let mut refs = vec![None; items.len()];
    for idx in by_speaker.values() {
        if idx.len() > 1 {
            for (j, &i) in idx.iter().enumerate() {
                refs[i] = Some(idx[(j + 1) % idx.len()]);
            }
        }
    }
    let mels: Vec<MelSpectrogram> = items.iter().map(|it| it.2.clone()).collect();
    items
        .into_iter()
        .zip(refs)
        .map(|((speaker, phonemes, mel, align), r)| {
            if align.num_frames() != mel.n_frames() || align.num_phonemes() != phonemes.len() {
                return Err(Error::invalid(format!(
                    "alignment {}x{} does not fit {} frames and {} phonemes",
                    align.num_frames(),
                    align.num_phonemes(),
                    mel.n_frames(),
                    phonemes.len()
                )));
            }
            let ref_mel = match r {
                Some(j) => mels[j].clone(),
                None => mel.crop(0, (mel.n_frames() / 2).max(1))?,
            };
            Ok(TtsExample {
                bands: slice_prosody_bands(&mel)?,
                speaker,
                phonemes,
                mel,
                align,
                ref_mel,
            })
        })
        .collect()
}

/// Stage-1 trainer: generator, discriminator, both optimizers and the EMA
/// codebook. Every random draw of step `s` comes from `step_rng(seed, s, _)`,
/// so resuming from a checkpoint reproduces an uninterrupted run.
pub struct Stage1Trainer {
    pub model: TtsModel,
    pub disc: Discriminator,
    opt_g: Adam,
    opt_d: Adam,
    cfg: TtsConfig,
    features: FeatureConfig,
    step: usize,
}

impl Stage1Trainer {
    pub fn new(cfg: &TtsConfig, features: &FeatureConfig, dtype: DType) -> Result<Self> {
        features.validate()?;
        let seed = cfg.train.seed;
        let model = TtsModel::new(&cfg.model, cfg.train.codebook_size, features.n_mels, seed, dtype)?;
        let disc = Discriminator::new(&cfg.model, features.n_mels, seed ^ DISC_SEED_OFFSET, dtype)?;
        Ok(Self {
            model,
            disc,
            opt_g: Adam::new(cfg.train.lr).with_clip(MAX_GRAD_NORM),
            opt_d: Adam::new(cfg.train.lr).with_clip(MAX_GRAD_NORM),
            cfg: cfg.clone(),
            features: features.clone(),
            step: 0,
        })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn config(&self) -> &TtsConfig {
        &self.cfg
    }

    /// Extends or shortens the run, e.g. after resuming.
    pub fn set_max_steps(&mut self, max_steps: usize) {
        self.cfg.train.max_steps = max_steps;
    }

    fn adversarial(&self) -> bool {
        self.cfg.train.lambda_adv > 0.0 && self.step >= self.cfg.train.adv_warmup_steps
    }

    /// One optimization step on a batch drawn from `examples`.
    pub fn train_step(&mut self, examples: &[TtsExample]) -> Result<Stage1LossReport> {
        if examples.is_empty() {
            return Err(Error::invalid("no training examples"));
        }
        let tc = &self.cfg.train;
        let seed = tc.seed;
        let s = self.step as u64;
        let mut rng = step_rng(seed, s, STREAM_BATCH);
        let batch: Vec<&TtsExample> = (0..tc.batch_size.max(1))
            .map(|_| &examples[rng.random_range(0..examples.len())])
            .collect();
        let mut crop_rng = step_rng(seed, s, STREAM_CROP);
        let adversarial = self.adversarial();
        let window = self.disc.window;
        let dt = self.model.dtype();

        let mut total: Option<Tensor> = None;
        let mut report = Stage1LossReport::default();
        let mut pre_rows = Vec::new();
        let mut codes = Vec::new();
        let mut d_pairs = Vec::new();
        for ex in &batch {
            let fwd = match self
                .model
                .forward_stage1(&ex.phonemes, &ex.ref_mel, &ex.bands, &ex.align)
            {
                Ok(f) => f,
                Err(e) => {
                    let blown = self
                        .model
                        .prosody_pre_quant(&ex.bands, &ex.align)
                        .and_then(|z| to_vec2(&z))
                        .is_ok_and(|rows| rows.iter().flatten().any(|v| !v.is_finite()));
                    return Err(if blown {
                        Error::Divergence {
                            step: self.step,
                            what: "prosody encoder output",
                        }
                    } else {
                        e
                    });
                }
            };
            let target = crate::tts::model::matrix(ex.mel.values(), ex.mel.n_frames(), ex.mel.n_mels(), dt)?;
            let vq = VqTerms::new(&fwd.pre_quant, &fwd.quantized)?;
            let t = ex.mel.n_frames();
            let starts: Vec<usize> = (0..2)
                .map(|_| crop_rng.random_range(0..=t.saturating_sub(window)))
                .collect();
            let adv = if adversarial {
                let fake = if tc.adv_to_timbre {
                    fwd.mel.clone()
                } else {
                    let q = super::straight_through(&fwd.pre_quant, &fwd.quantized)?;
                    self.model
                        .decode_tensor(&fwd.content, &fwd.timbre.detach(), &q, &ex.align)?
                };
                let scores = self.disc.score_crops(&fake, &starts)?;
                let g = (scores - 1.0)?.sqr()?.mean_all()?;
                Some((g * tc.lambda_adv)?)
            } else {
                None
            };
            let (loss, r) = stage1_loss_tensor(&target, &fwd.mel, &vq, tc.beta_commit, adv.as_ref())?;
            total = Some(match total {
                Some(acc) => (acc + loss)?,
                None => loss,
            });
            report.recon_l2 += r.recon_l2;
            report.vq_loss += r.vq_loss;
            report.adv_g_loss += r.adv_g_loss;
            report.total += r.total;
            for row in to_vec2(&fwd.pre_quant)? {
                pre_rows.push(row.into_iter().map(|x| x as f32).collect::<Vec<f32>>());
            }
            codes.extend_from_slice(&fwd.codes);
            if adversarial {
                d_pairs.push((target, fwd.mel.detach(), starts));
            }
        }
        let n = batch.len() as f64;
        report.recon_l2 /= n;
        report.vq_loss /= n;
        report.adv_g_loss /= n;
        report.total /= n;
        if !report.is_finite() {
            return Err(Error::Divergence {
                step: self.step,
                what: "stage-1 loss",
            });
        }
        let total = (total.expect("non-empty batch") / n)?;
        let grads = total.backward()?;
        self.opt_g.step(self.model.params(), &grads)?;

        if adversarial {
            let mut d_total: Option<Tensor> = None;
            for (real, fake, starts) in &d_pairs {
                let dr = self.disc.score_crops(real, starts)?;
                let df = self.disc.score_crops(fake, starts)?;
                let (d, _) = lsgan_losses_tensor(&dr, &df)?;
                d_total = Some(match d_total {
                    Some(acc) => (acc + d)?,
                    None => d,
                });
            }
            let d_total = (d_total.expect("non-empty batch") / n)?;
            report.adv_d_loss = scalar(&d_total)?;
            if !report.adv_d_loss.is_finite() {
                return Err(Error::Divergence {
                    step: self.step,
                    what: "discriminator loss",
                });
            }
            let grads = d_total.backward()?;
            self.opt_d.step(self.disc.params(), &grads)?;
        }

        let mut reset_rng = step_rng(seed, s, STREAM_RESET);
        self.model
            .codebook
            .ema_update(&pre_rows, &codes, tc.ema_decay, tc.reset_patience, &mut reset_rng)?;
        self.step += 1;
        Ok(report)
    }

    /// Runs until `max_steps`, calling `on_step` after every step.
    pub fn train(
        &mut self,
        examples: &[TtsExample],
        mut on_step: impl FnMut(usize, &Stage1LossReport, &Self) -> Result<()>,
    ) -> Result<Stage1LossReport> {
        let mut last = Stage1LossReport::default();
        while self.step < self.cfg.train.max_steps {
            last = self.train_step(examples)?;
            on_step(self.step, &last, self)?;
        }
        Ok(last)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let config_json = serde_json::to_string(&self.cfg).map_err(|e| Error::Config(e.to_string()))?;
        let mut ck = Checkpoint::new(
            ModelKind::Tts,
            hash_json(&self.cfg.model),
            self.features.hash(),
            config_json,
        );
        ck.step = self.step;
        ck.insert_all(self.model.params().snapshot("model."));
        ck.insert_all(self.disc.params().snapshot("disc."));
        ck.insert_all(self.opt_g.state_tensors("opt.g."));
        ck.insert_all(self.opt_d.state_tensors("opt.d."));
        ck.insert_all(self.model.codebook.to_tensors("codebook.")?.into_iter().collect());
        ck.meta
            .insert("adam_g_step".into(), self.opt_g.step_count().to_string());
        ck.meta
            .insert("adam_d_step".into(), self.opt_d.step_count().to_string());
        ck.meta.insert(
            "features".into(),
            serde_json::to_string(&self.features).map_err(|e| Error::Config(e.to_string()))?,
        );
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint()?.save(path)
    }

    /// Rebuilds a trainer from a checkpoint written by [`Self::save`].
    pub fn resume(ck: &Checkpoint, dtype: DType) -> Result<Self> {
        let cfg: TtsConfig = ck.config()?;
        let features = checkpoint_features(ck)?;
        let mut tr = Self::new(&cfg, &features, dtype)?;
        tr.model.params().restore(&ck.tensors, "model.")?;
        tr.disc.params().restore(&ck.tensors, "disc.")?;
        tr.model.codebook = super::Codebook::from_tensors(|k| Ok(ck.tensor(k)?.clone()), "codebook.")?;
        let parse = |k: &str| -> Result<u64> {
            ck.meta_value(k)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad {k}")))
        };
        let conv = |p: &str| -> Result<std::collections::HashMap<String, Tensor>> {
            ck.tensors
                .iter()
                .filter(|(k, _)| k.starts_with(p))
                .map(|(k, t)| Ok((k.clone(), t.to_dtype(dtype)?)))
                .collect()
        };
        tr.opt_g.restore(&conv("opt.g.")?, "opt.g.", parse("adam_g_step")?);
        tr.opt_d.restore(&conv("opt.d.")?, "opt.d.", parse("adam_d_step")?);
        tr.step = ck.step;
        Ok(tr)
    }
}

fn checkpoint_features(ck: &Checkpoint) -> Result<FeatureConfig> {
    serde_json::from_str(ck.meta_value("features")?).map_err(|e| Error::Checkpoint(format!("bad feature config: {e}")))
}

/// Loads a TTS checkpoint for inference. With `features` given, a checkpoint
/// trained under a different front end is refused unless `force` is set.
pub fn load_tts_checkpoint(
    path: &Path,
    features: Option<&FeatureConfig>,
    force: bool,
    dtype: DType,
) -> Result<(TtsModel, FeatureConfig)> {
    let hash = features.map(|f| f.hash());
    let ck = Checkpoint::load_expecting(path, ModelKind::Tts, hash.as_deref(), force)?;
    let cfg: TtsConfig = ck.config()?;
    let feats = checkpoint_features(&ck)?;
    let mut model = TtsModel::new(&cfg.model, cfg.train.codebook_size, feats.n_mels, cfg.train.seed, dtype)?;
    model.params().restore(&ck.tensors, "model.")?;
    model.codebook = super::Codebook::from_tensors(|k| Ok(ck.tensor(k)?.clone()), "codebook.")?;
    Ok((model, feats))
}
