//! Layered configuration: built-in defaults, then an optional TOML file, then
//! CLI overrides applied by the caller.
//!
//! Every section uses `#[serde(default)]`, so a config file only needs the keys
//! it changes. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Signal-processing front end settings, shared by every model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Natural-log floor applied to mel magnitudes.
    pub log_floor: f64,
    /// Minimum normalized autocorrelation peak for a frame to count as voiced.
    pub pitch_voicing_threshold: f64,
    /// Frames of duration/frame-count slack absorbed by the last phoneme.
    pub align_tolerance: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            n_fft: 1024,
            hop_length: 200,
            n_mels: 80,
            fmin: 0.0,
            fmax: 8_000.0,
            log_floor: (1e-5f64).ln(),
            pitch_voicing_threshold: 0.45,
            align_tolerance: 2,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if self.n_fft < 16 || !self.n_fft.is_multiple_of(2) {
            return Err(Error::Config(format!("n_fft {} must be even and >= 16", self.n_fft)));
        }
        if self.hop_length == 0 || self.hop_length > self.n_fft {
            return Err(Error::Config(format!(
                "hop_length {} must be in 1..=n_fft",
                self.hop_length
            )));
        }
        if self.n_mels < crate::audio::PROSODY_BANDS {
            return Err(Error::Config(format!(
                "n_mels {} must be at least {}",
                self.n_mels,
                crate::audio::PROSODY_BANDS
            )));
        }
        if !(self.fmin >= 0.0 && self.fmax > self.fmin && self.fmax <= self.sample_rate as f64 / 2.0) {
            return Err(Error::Config(format!(
                "need 0 <= fmin < fmax <= sample_rate/2, got fmin={} fmax={}",
                self.fmin, self.fmax
            )));
        }
        if !self.log_floor.is_finite() {
            return Err(Error::Config("log_floor must be finite".into()));
        }
        Ok(())
    }

    /// Seconds per mel frame.
    pub fn frame_period(&self) -> f64 {
        self.hop_length as f64 / self.sample_rate as f64
    }

    /// Stable hash identifying this front end; checkpoints trained under
    /// different feature settings refuse to mix.
    pub fn hash(&self) -> String {
        hash_json(self)
    }
}

/// Architecture of the disentangled TTS model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtsModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub d_timbre: usize,
    pub d_code: usize,
    pub kernel_size: usize,
    pub text_layers: usize,
    pub timbre_layers: usize,
    pub prosody_layers: usize,
    pub decoder_layers: usize,
    pub disc_channels: usize,
    pub disc_window: usize,
}

impl Default for TtsModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 64,
            d_model: 192,
            d_timbre: 192,
            d_code: 192,
            kernel_size: 5,
            text_layers: 2,
            timbre_layers: 2,
            prosody_layers: 2,
            decoder_layers: 3,
            disc_channels: 64,
            disc_window: 32,
        }
    }
}

/// Stage-1 (reconstruction + VQ + adversarial) training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adv_warmup_steps: usize,
    pub lambda_adv: f64,
    pub beta_commit: f64,
    pub codebook_size: usize,
    /// Steps an entry may go unused before it is reset to a batch vector.
    pub reset_patience: usize,
    pub ema_decay: f64,
    pub seed: u64,
    /// Abort on a bad corpus item instead of skipping it.
    pub strict: bool,
    /// Let the adversarial loss reach the timbre encoder.
    pub adv_to_timbre: bool,
    pub log_every: usize,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_steps: 2000,
            batch_size: 4,
            lr: 2e-3,
            adv_warmup_steps: 500,
            lambda_adv: 0.05,
            beta_commit: 0.25,
            codebook_size: 64,
            reset_patience: 50,
            ema_decay: 0.95,
            seed: 0,
            strict: false,
            adv_to_timbre: true,
            log_every: 100,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtsConfig {
    pub model: TtsModelConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PllmModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub width: usize,
    /// Longest packed sequence (prompt + separator + target) the position
    /// table covers.
    pub max_positions: usize,
}

impl Default for PllmModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 4,
            n_heads: 4,
            width: 256,
            max_positions: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PllmTrainConfig {
    pub max_steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for PllmTrainConfig {
    fn default() -> Self {
        Self {
            max_steps: 400,
            batch_size: 4,
            lr: 1e-3,
            seed: 0,
            log_every: 50,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PllmConfig {
    pub model: PllmModelConfig,
    pub train: PllmTrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// 0 selects greedy decoding.
    pub temperature: f64,
    /// 0 disables top-k truncation.
    pub top_k: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            temperature: 0.8,
            top_k: 8,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn greedy() -> Self {
        Self {
            temperature: 0.0,
            top_k: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionModelConfig {
    /// Width of the learned content features standing in for HuBERT.
    pub d_feat: usize,
    pub hidden: usize,
    pub latent: usize,
    pub kernel_size: usize,
    pub layers: usize,
    pub postnet_hidden: usize,
}

impl Default for MotionModelConfig {
    fn default() -> Self {
        Self {
            d_feat: 64,
            hidden: 128,
            latent: 16,
            kernel_size: 5,
            layers: 2,
            postnet_hidden: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionTrainConfig {
    pub vae_steps: usize,
    pub postnet_steps: usize,
    pub lr: f64,
    pub lambda_kl: f64,
    /// KL weight ramps linearly from 0 to `lambda_kl` over this many steps.
    pub kl_warmup_steps: usize,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for MotionTrainConfig {
    fn default() -> Self {
        Self {
            vae_steps: 600,
            postnet_steps: 300,
            lr: 2e-3,
            lambda_kl: 1e-2,
            kl_warmup_steps: 200,
            seed: 0,
            log_every: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    pub model: MotionModelConfig,
    pub train: MotionTrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CanvasConfig {
    pub width: usize,
    pub height: usize,
    pub fps: u32,
    pub point_radius: usize,
    pub draw_edges: bool,
}

impl Default for CanvasConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            fps: 25,
            point_radius: 2,
            draw_edges: true,
        }
    }
}

impl CanvasConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fps == 0 {
            return Err(Error::Config("canvas fps must be positive".into()));
        }
        if self.width < 64 || self.height < 64 {
            return Err(Error::Config(format!(
                "canvas must be at least 64x64, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub griffin_lim_iters: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { griffin_lim_iters: 32 }
    }
}

/// Everything the CLI reads from `--config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub features: FeatureConfig,
    pub tts: TtsConfig,
    pub pllm: PllmConfig,
    pub motion: MotionConfig,
    pub sampling: SamplingConfig,
    pub canvas: CanvasConfig,
    pub synth: SynthConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.canvas.validate()?;
        if self.tts.train.codebook_size < 2 {
            return Err(Error::Config("codebook_size must be at least 2".into()));
        }
        if !self.pllm.model.width.is_multiple_of(self.pllm.model.n_heads.max(1)) {
            return Err(Error::Config("pllm width must be divisible by n_heads".into()));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Hex SHA-256 prefix of a value's JSON encoding.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
