use std::path::{Path, PathBuf};

use candle_core::DType;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::audio::{
    align_frames_to_phonemes, compute_mel, griffin_lim, pcm16, read_wav, slice_prosody_bands, FrameToPhonemeMap,
    Waveform,
};
use crate::config::PipelineConfig;
use crate::error::{Error, Result, StageExt};
use crate::motion::{load_motion_checkpoint, LandmarkSequence, LatentMode};
use crate::pllm::{load_pllm_checkpoint, PllmInput};
use crate::render::{compose_video, dump_frames, render_landmarks};
use crate::tts::{load_tts_checkpoint, PhonemeSequence};

/// Everything one `synth` run needs. The reference utterance is both the
/// prosody prompt and the timbre source, so its phonemes and durations are
/// required too.
#[derive(Debug, Clone)]
pub struct SynthesisRequest {
    pub phoneme_ids: Vec<u32>,
    pub durations: Vec<usize>,
    pub reference_audio: PathBuf,
    pub reference_phoneme_ids: Vec<u32>,
    pub reference_durations: Vec<usize>,
    pub tts_checkpoint: PathBuf,
    pub pllm_checkpoint: PathBuf,
    /// Motion model (VAE and identity postnet) of the avatar.
    pub identity_checkpoint: PathBuf,
    pub output_path: PathBuf,
    pub seed: u64,
    pub dump_frames: Option<PathBuf>,
    /// Load checkpoints even if their feature hash differs from the config.
    pub force: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthesisOutput {
    pub video_path: PathBuf,
    pub mel_frames: usize,
    pub audio_samples: usize,
    pub audio_seconds: f64,
    pub video_frames: usize,
    pub video_seconds: f64,
    pub prosody_codes: Vec<u32>,
    /// SHA-256 of the 16-bit PCM audio track.
    pub audio_hash: String,
    pub frame_hashes: Vec<String>,
    #[serde(skip)]
    pub audio: Waveform,
    #[serde(skip)]
    pub landmarks: LandmarkSequence,
}

fn parse_phonemes(ids: &[u32], durations: &[usize], what: &str) -> Result<(PhonemeSequence, FrameToPhonemeMap)> {
    if ids.len() != durations.len() {
        return Err(Error::invalid(format!(
            "{what}: {} durations for {} phonemes",
            durations.len(),
            ids.len()
        )));
    }
    Ok((
        PhonemeSequence::new(ids.to_vec())?,
        FrameToPhonemeMap::from_durations(durations)?,
    ))
}

/// Text + reference audio to a talking-head AVI. Errors carry the failing
/// stage; a partially written video is removed.
pub fn synthesize(req: &SynthesisRequest, cfg: &PipelineConfig) -> Result<SynthesisOutput> {
    let result = run(req, cfg);
    if result.is_err() {
        for p in [req.output_path.clone(), req.output_path.with_extension("avi.tmp")] {
            if p.exists() {
                let _ = std::fs::remove_file(&p);
            }
        }
    }
    result
}

fn run(req: &SynthesisRequest, cfg: &PipelineConfig) -> Result<SynthesisOutput> {
    cfg.validate().stage("config")?;
    let f = &cfg.features;
    let dt = DType::F32;
    let (tts, tts_features) = load_tts_checkpoint(&req.tts_checkpoint, Some(f), req.force, dt).stage("load-tts")?;
    if tts_features != *f && !req.force {
        return Err(Error::invalid("tts checkpoint feature config differs").in_stage("load-tts"));
    }
    let pllm = load_pllm_checkpoint(&req.pllm_checkpoint, Some(f), req.force, dt).stage("load-pllm")?;
    let motion = load_motion_checkpoint(&req.identity_checkpoint, Some(f), req.force, dt).stage("load-motion")?;
    if pllm.codebook_size() != tts.codebook.size() || pllm.d_content() != tts.config().d_model {
        return Err(Error::invalid(format!(
            "prosody LM expects K={} and content width {}, TTS has K={} and width {}",
            pllm.codebook_size(),
            pllm.d_content(),
            tts.codebook.size(),
            tts.config().d_model
        ))
        .in_stage("load-pllm"));
    }

    let (ref_ph, _) =
        parse_phonemes(&req.reference_phoneme_ids, &req.reference_durations, "reference").stage("reference")?;
    let (tgt_ph, tgt_align) = parse_phonemes(&req.phoneme_ids, &req.durations, "target").stage("text")?;
    let (prompt_codes, prompt_content, timbre) = (|| {
        let wave = read_wav(&req.reference_audio)?;
        let mel = compute_mel(&wave, f)?;
        let align = align_frames_to_phonemes(mel.n_frames(), &req.reference_durations, f.align_tolerance)?;
        let bands = slice_prosody_bands(&mel)?;
        let (codes, _) = tts.encode_prosody(&bands, &align)?;
        Ok((codes, tts.encode_text(&ref_ph)?, tts.encode_timbre(&mel)?))
    })()
    .stage("reference")?;
    let content = tts.encode_text(&tgt_ph).stage("text")?;

    let input = PllmInput::new(prompt_codes, prompt_content, content.clone()).stage("prosody")?;
    let codes = pllm
        .predict(&input, tgt_ph.len(), &cfg.sampling, req.seed)
        .stage("prosody")?;

    let mel = tts
        .decode_mel(&content, &timbre, &codes, &tgt_align, f.hop_length, f.sample_rate)
        .stage("decode")?;
    let audio = griffin_lim(&mel, f, cfg.synth.griffin_lim_iters, req.seed).stage("vocoder")?;

    let fps = f.sample_rate as f32 / f.hop_length as f32;
    let landmarks = (|| {
        let feats = motion.encode_audio_features(&audio, f)?;
        motion.audio_to_motion(&feats, LatentMode::Mean, fps)
    })()
    .stage("motion")?;

    let (frames, _) = render_landmarks(&landmarks, &cfg.canvas, audio.duration_secs()).stage("render")?;
    if let Some(dir) = &req.dump_frames {
        dump_frames(&frames, dir).stage("render")?;
    }
    if let Some(dir) = req.output_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::io(dir, e))
            .stage("mux")?;
    }
    compose_video(&frames, &audio, &cfg.canvas, &req.output_path).stage("mux")?;

    let pcm: Vec<u8> = audio.samples.iter().flat_map(|&s| pcm16(s).to_le_bytes()).collect();
    Ok(SynthesisOutput {
        video_path: req.output_path.clone(),
        mel_frames: mel.n_frames(),
        audio_samples: audio.len(),
        audio_seconds: audio.duration_secs(),
        video_frames: frames.len(),
        video_seconds: frames.len() as f64 / cfg.canvas.fps as f64,
        prosody_codes: codes.codes().to_vec(),
        audio_hash: Sha256::digest(&pcm).iter().map(|b| format!("{b:02x}")).collect(),
        frame_hashes: frames.iter().map(|fr| fr.hash()).collect(),
        audio,
        landmarks,
    })
}

/// `n` phonemes of `frames` frames each.
pub fn uniform_durations(n: usize, frames: usize) -> Vec<usize> {
    vec![frames; n]
}

pub fn default_output(out_dir: &Path) -> PathBuf {
    out_dir.join("avatar.avi")
}
