use std::path::Path;

use candle_core::DType;
use serde::Serialize;

use super::corpus::{load_items, motion_examples, tts_examples};
use super::manifest::load_corpus;
use super::metrics::{codebook_perplexity, eval_speaker_similarity};
use super::probe::{disentanglement_probe, ProbeReport};
use crate::config::PipelineConfig;
use crate::error::{Error, Result, StageExt};
use crate::motion::{MotionTrainer, Normalization, VaeLossReport};
use crate::nn::{Checkpoint, ModelKind};
use crate::pllm::{prepare_pllm_examples, PllmTrainer};
use crate::tts::{load_tts_checkpoint, Stage1LossReport, Stage1Trainer};

const DTYPE: DType = DType::F32;

/// Stage-1 TTS training from a manifest. With `resume`, training continues
/// from that checkpoint up to `cfg.tts.train.max_steps`.
pub fn train_tts(
    manifest: &Path,
    cfg: &PipelineConfig,
    out: &Path,
    resume: Option<&Path>,
    force: bool,
) -> Result<Stage1LossReport> {
    let m = load_corpus(manifest).stage("corpus")?;
    let items = load_items(&m, &cfg.features, cfg.tts.train.strict).stage("corpus")?;
    let examples = tts_examples(&items).stage("corpus")?;
    let mut trainer = match resume {
        Some(p) => {
            let hash = cfg.features.hash();
            let ck = Checkpoint::load_expecting(p, ModelKind::Tts, Some(&hash), force).stage("resume")?;
            let mut t = Stage1Trainer::resume(&ck, DTYPE).stage("resume")?;
            t.set_max_steps(cfg.tts.train.max_steps);
            t
        }
        None => Stage1Trainer::new(&cfg.tts, &cfg.features, DTYPE).stage("init")?,
    };
    log::info!(
        "train-tts: {} utterances, {} parameters, steps {}..{}",
        examples.len(),
        trainer.model.params().num_scalars(),
        trainer.step(),
        cfg.tts.train.max_steps
    );
    let tc = cfg.tts.train.clone();
    let report = trainer
        .train(&examples, |step, r, t| {
            if tc.log_every > 0 && step % tc.log_every == 0 {
                log::info!(
                    "step {step}: total {:.4} recon {:.4} vq {:.4} adv_g {:.4} adv_d {:.4}",
                    r.total,
                    r.recon_l2,
                    r.vq_loss,
                    r.adv_g_loss,
                    r.adv_d_loss
                );
            }
            if tc.checkpoint_every > 0 && step % tc.checkpoint_every == 0 {
                t.save(out)?;
            }
            Ok(())
        })
        .stage("train")?;
    trainer.save(out).stage("save")?;
    Ok(report)
}

/// Teacher-forced P-LLM training on codes from a frozen TTS checkpoint.
pub fn train_pllm(
    manifest: &Path,
    tts_checkpoint: &Path,
    cfg: &PipelineConfig,
    out: &Path,
    force: bool,
) -> Result<f64> {
    let (tts, _) = load_tts_checkpoint(tts_checkpoint, Some(&cfg.features), force, DTYPE).stage("load-tts")?;
    let m = load_corpus(manifest).stage("corpus")?;
    let items = load_items(&m, &cfg.features, cfg.tts.train.strict).stage("corpus")?;
    let examples = prepare_pllm_examples(&tts, &tts_examples(&items)?).stage("corpus")?;
    let mut trainer = PllmTrainer::new(
        &cfg.pllm,
        tts.codebook.size(),
        tts.config().d_model,
        &cfg.features.hash(),
        DTYPE,
    )
    .stage("init")?;
    let every = cfg.pllm.train.log_every;
    let loss = trainer
        .train(&examples, |step, loss| {
            if every > 0 && step % every == 0 {
                log::info!("step {step}: cross-entropy {loss:.4}");
            }
            Ok(())
        })
        .stage("train")?;
    trainer.save(out).stage("save")?;
    Ok(loss)
}

/// Motion VAE and postnet training on one speaker's landmark clips.
pub fn train_motion(manifest: &Path, speaker: &str, cfg: &PipelineConfig, out: &Path) -> Result<VaeLossReport> {
    let m = load_corpus(manifest).stage("corpus")?;
    let items = load_items(&m, &cfg.features, cfg.tts.train.strict).stage("corpus")?;
    let examples = motion_examples(&items, speaker, &cfg.features).stage("corpus")?;
    let mut trainer = MotionTrainer::new(&cfg.motion, &cfg.features, DTYPE).stage("init")?;
    if let Some(lms) = items
        .iter()
        .find_map(|it| it.landmarks.as_ref().filter(|_| it.record.speaker_id == speaker))
    {
        trainer.set_normalization(lms.normalization);
    } else {
        trainer.set_normalization(Normalization::default());
    }
    let every = cfg.motion.train.log_every;
    let mut last = VaeLossReport::default();
    trainer
        .train(&examples, |step, phase, r| {
            if every > 0 && step % every == 0 {
                log::info!(
                    "step {step} ({phase:?}): total {:.5} recon {:.5} kl {:.4}",
                    r.total,
                    r.recon,
                    r.kl
                );
            }
            last = *r;
            Ok(())
        })
        .stage("train")?;
    trainer.save(out).stage("save")?;
    Ok(last)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub utterances: usize,
    pub codebook_perplexity: f64,
    /// Mean cosine similarity of timbre vectors over same-speaker pairs.
    pub same_speaker_similarity: Option<f64>,
    /// Mean cosine similarity over cross-speaker pairs.
    pub cross_speaker_similarity: Option<f64>,
}

/// Codebook usage and timbre similarity statistics over a corpus.
pub fn eval_corpus(manifest: &Path, tts_checkpoint: &Path, cfg: &PipelineConfig, force: bool) -> Result<EvalReport> {
    let (tts, _) = load_tts_checkpoint(tts_checkpoint, Some(&cfg.features), force, DTYPE).stage("load-tts")?;
    let m = load_corpus(manifest).stage("corpus")?;
    let items = load_items(&m, &cfg.features, cfg.tts.train.strict).stage("corpus")?;
    let examples = tts_examples(&items)?;
    let mut codes = Vec::new();
    let mut timbres = Vec::new();
    for ex in &examples {
        codes.extend_from_slice(tts.encode_prosody(&ex.bands, &ex.align)?.0.codes());
        timbres.push((ex.speaker.as_str(), tts.encode_timbre(&ex.mel)?));
    }
    let (mut same, mut cross) = (Vec::new(), Vec::new());
    for i in 0..timbres.len() {
        for j in i + 1..timbres.len() {
            let s = eval_speaker_similarity(&timbres[i].1, &timbres[j].1)?;
            if timbres[i].0 == timbres[j].0 {
                same.push(s);
            } else {
                cross.push(s);
            }
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(EvalReport {
        utterances: examples.len(),
        codebook_perplexity: codebook_perplexity(&codes)?,
        same_speaker_similarity: mean(&same),
        cross_speaker_similarity: mean(&cross),
    })
}

pub fn probe_corpus(
    manifest: &Path,
    tts_checkpoint: &Path,
    cfg: &PipelineConfig,
    seed: u64,
    force: bool,
) -> Result<ProbeReport> {
    let (tts, _) = load_tts_checkpoint(tts_checkpoint, Some(&cfg.features), force, DTYPE).stage("load-tts")?;
    let m = load_corpus(manifest).stage("corpus")?;
    if m.speakers().len() < 2 {
        return Err(Error::invalid("probe needs a corpus with at least two speakers"));
    }
    let items = load_items(&m, &cfg.features, cfg.tts.train.strict).stage("corpus")?;
    disentanglement_probe(&tts_examples(&items)?, &tts, seed).stage("probe")
}
