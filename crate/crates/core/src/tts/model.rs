use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::vq::{straight_through, Codebook};
use super::{ContentRepr, PhonemeSequence, ProsodyCodeSequence, TimbreVector};
use crate::audio::{FrameToPhonemeMap, MelSpectrogram, ProsodyBands, PROSODY_BANDS};
use crate::config::TtsModelConfig;
use crate::error::{Error, Result};
use crate::nn::{ConvStack, Embedding, Init, LayerNorm, Linear, ParamStore};

/// Fixed affine map between log-mel values and the network's working range.
pub const MEL_OFFSET: f64 = -4.0;
pub const MEL_SCALE: f64 = 4.0;

pub(crate) fn normalize_mel(x: &Tensor) -> Result<Tensor> {
    Ok(((x - MEL_OFFSET)? / MEL_SCALE)?)
}

/// Row-major `(rows, cols)` tensor from f32 data in the given dtype.
pub(crate) fn matrix(data: &[f32], rows: usize, cols: usize, dtype: DType) -> Result<Tensor> {
    Ok(Tensor::from_slice(data, (rows, cols), &Device::Cpu)?.to_dtype(dtype)?)
}

/// `(T, L)` one-hot matrix copying each phoneme row across its frames.
pub fn expansion_matrix(align: &FrameToPhonemeMap, dtype: DType) -> Result<Tensor> {
    let (t, l) = (align.num_frames(), align.num_phonemes());
    let mut m = vec![0f32; t * l];
    for (frame, &ph) in align.assignment().iter().enumerate() {
        m[frame * l + ph] = 1.0;
    }
    matrix(&m, t, l, dtype)
}

/// `(L, T)` matrix averaging the frames of each phoneme span. Rows of
/// zero-duration phonemes are all zero.
pub fn averaging_matrix(align: &FrameToPhonemeMap, dtype: DType) -> Result<Tensor> {
    let (t, l) = (align.num_frames(), align.num_phonemes());
    let mut m = vec![0f32; l * t];
    for (ph, span) in align.spans().enumerate() {
        let w = 1.0 / span.len().max(1) as f32;
        for frame in span {
            m[ph * t + frame] = w;
        }
    }
    matrix(&m, l, t, dtype)
}

/// `(T, 2)` relative position of each frame inside its phoneme,
/// `[(i + 0.5) / d, 1 - (i + 0.5) / d]`.
pub fn position_features(align: &FrameToPhonemeMap, dtype: DType) -> Result<Tensor> {
    let mut m = Vec::with_capacity(align.num_frames() * 2);
    for span in align.spans() {
        let d = span.len() as f32;
        for i in 0..span.len() {
            let p = (i as f32 + 0.5) / d;
            m.push(p);
            m.push(1.0 - p);
        }
    }
    matrix(&m, align.num_frames(), 2, dtype)
}

/// Mean over the time axis of frame-wise timbre encoder outputs.
pub fn pool_timbre(frames: &Tensor) -> Result<Tensor> {
    if frames.dims2()?.0 == 0 {
        return Err(Error::invalid("cannot pool zero frames"));
    }
    Ok(frames.mean(0)?)
}

struct TextEncoder {
    embed: Embedding,
    stack: ConvStack,
}

struct TimbreEncoder {
    input: Linear,
    stack: ConvStack,
    output: Linear,
}

struct ProsodyEncoder {
    input: Linear,
    stack: ConvStack,
    output: Linear,
}

struct MelDecoder {
    code_proj: Linear,
    timbre_proj: Linear,
    pos_proj: Linear,
    stack: ConvStack,
    norm: LayerNorm,
    output: Linear,
}

/// Intermediate tensors of one differentiable forward pass.
pub struct Stage1Forward {
    pub content: Tensor,
    pub timbre: Tensor,
    /// `(L, d_code)` phoneme-level prosody vectors before quantization.
    pub pre_quant: Tensor,
    /// `(L, d_code)` selected codebook rows, detached.
    pub quantized: Tensor,
    pub codes: Vec<u32>,
    /// `(T, n_mels)` reconstructed log-mel.
    pub mel: Tensor,
}

/// Text, timbre and prosody encoders, codebook and mel decoder.
pub struct TtsModel {
    cfg: TtsModelConfig,
    n_mels: usize,
    store: ParamStore,
    text: TextEncoder,
    timbre: TimbreEncoder,
    prosody: ProsodyEncoder,
    decoder: MelDecoder,
    pub codebook: Codebook,
}

impl TtsModel {
    pub fn new(cfg: &TtsModelConfig, codebook_size: usize, n_mels: usize, seed: u64, dtype: DType) -> Result<Self> {
        if codebook_size < 2 {
            return Err(Error::invalid("codebook needs at least 2 entries"));
        }
        if n_mels < PROSODY_BANDS {
            return Err(Error::invalid(format!("need at least {PROSODY_BANDS} mel bins")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new(dtype);
        let (d, k) = (cfg.d_model, cfg.kernel_size);
        let text = TextEncoder {
            embed: Embedding::new(&mut s, &mut rng, "text.embed", cfg.vocab_size, d)?,
            stack: ConvStack::new(&mut s, &mut rng, "text.stack", d, k, cfg.text_layers)?,
        };
        let timbre = TimbreEncoder {
            input: Linear::new(&mut s, &mut rng, "timbre.input", n_mels, d)?,
            stack: ConvStack::new(&mut s, &mut rng, "timbre.stack", d, k, cfg.timbre_layers)?,
            output: Linear::new(&mut s, &mut rng, "timbre.output", d, cfg.d_timbre)?,
        };
        let prosody = ProsodyEncoder {
            input: Linear::new(&mut s, &mut rng, "prosody.input", PROSODY_BANDS, d)?,
            stack: ConvStack::new(&mut s, &mut rng, "prosody.stack", d, k, cfg.prosody_layers)?,
            output: Linear::new(&mut s, &mut rng, "prosody.output", d, cfg.d_code)?,
        };
        let decoder = MelDecoder {
            code_proj: Linear::new(&mut s, &mut rng, "decoder.code_proj", cfg.d_code, d)?,
            timbre_proj: Linear::new(&mut s, &mut rng, "decoder.timbre_proj", cfg.d_timbre, d)?,
            pos_proj: Linear::new(&mut s, &mut rng, "decoder.pos_proj", 2, d)?,
            stack: ConvStack::new(&mut s, &mut rng, "decoder.stack", d, k, cfg.decoder_layers)?,
            norm: LayerNorm::new(&mut s, &mut rng, "decoder.norm", d)?,
            output: Linear::with_init(&mut s, &mut rng, "decoder.output", d, n_mels, Init::FanIn(d))?,
        };
        let codebook = Codebook::random(codebook_size, cfg.d_code, &mut rng)?;
        Ok(Self {
            cfg: cfg.clone(),
            n_mels,
            store: s,
            text,
            timbre,
            prosody,
            decoder,
            codebook,
        })
    }

    pub fn config(&self) -> &TtsModelConfig {
        &self.cfg
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn validate_phonemes(&self, ph: &PhonemeSequence) -> Result<()> {
        if let Some(&bad) = ph.ids().iter().find(|&&id| id as usize >= self.cfg.vocab_size) {
            return Err(Error::invalid(format!(
                "phoneme id {bad} outside vocabulary of {}",
                self.cfg.vocab_size
            )));
        }
        Ok(())
    }

    /// `(L, d_model)` content representation.
    pub fn content_tensor(&self, ph: &PhonemeSequence) -> Result<Tensor> {
        self.validate_phonemes(ph)?;
        let x = self.text.embed.forward(ph.ids())?;
        self.text.stack.forward(&x)
    }

    pub fn encode_text(&self, ph: &PhonemeSequence) -> Result<ContentRepr> {
        Ok(ContentRepr(self.content_tensor(ph)?))
    }

    fn mel_input(&self, mel: &MelSpectrogram) -> Result<Tensor> {
        if mel.n_mels() != self.n_mels {
            return Err(Error::invalid(format!(
                "mel has {} bins, model expects {}",
                mel.n_mels(),
                self.n_mels
            )));
        }
        normalize_mel(&matrix(mel.values(), mel.n_frames(), mel.n_mels(), self.dtype())?)
    }

    /// `(T, d_timbre)` frame-wise timbre encoder outputs, before pooling.
    pub fn timbre_frames(&self, ref_mel: &MelSpectrogram) -> Result<Tensor> {
        let x = self.mel_input(ref_mel)?;
        let h = self.timbre.stack.forward(&self.timbre.input.forward(&x)?)?;
        self.timbre.output.forward(&h)
    }

    pub fn timbre_tensor(&self, ref_mel: &MelSpectrogram) -> Result<Tensor> {
        pool_timbre(&self.timbre_frames(ref_mel)?)
    }

    pub fn encode_timbre(&self, ref_mel: &MelSpectrogram) -> Result<TimbreVector> {
        Ok(TimbreVector(self.timbre_tensor(ref_mel)?))
    }

    /// `(L, d_code)` phoneme-rate prosody vectors: frame-rate encoder outputs
    /// averaged within each phoneme span.
    pub fn prosody_pre_quant(&self, bands: &ProsodyBands, align: &FrameToPhonemeMap) -> Result<Tensor> {
        if bands.n_frames() != align.num_frames() {
            return Err(Error::invalid(format!(
                "prosody bands have {} frames, alignment covers {}",
                bands.n_frames(),
                align.num_frames()
            )));
        }
        let x = normalize_mel(&matrix(bands.values(), bands.n_frames(), PROSODY_BANDS, self.dtype())?)?;
        let h = self.prosody.stack.forward(&self.prosody.input.forward(&x)?)?;
        let frames = self.prosody.output.forward(&h)?;
        Ok(averaging_matrix(align, self.dtype())?.matmul(&frames)?)
    }

    /// Phoneme-rate prosody codes and their pre-quantization vectors.
    pub fn encode_prosody(
        &self,
        bands: &ProsodyBands,
        align: &FrameToPhonemeMap,
    ) -> Result<(ProsodyCodeSequence, Tensor)> {
        let z = self.prosody_pre_quant(bands, align)?;
        let (codes, _) = self.codebook.quantize_rows(&z)?;
        Ok((ProsodyCodeSequence::new(codes, self.codebook.size())?, z))
    }

    /// Differentiable decoder: phoneme-rate content and prosody are expanded
    /// to frame rate by repetition, the timbre vector is broadcast-added to
    /// every frame.
    pub fn decode_tensor(
        &self,
        content: &Tensor,
        timbre: &Tensor,
        prosody: &Tensor,
        align: &FrameToPhonemeMap,
    ) -> Result<Tensor> {
        let l = content.dims2()?.0;
        if prosody.dims2()?.0 != l || align.num_phonemes() != l {
            return Err(Error::invalid(format!(
                "content has {l} phonemes, prosody {} and alignment {}",
                prosody.dims2()?.0,
                align.num_phonemes()
            )));
        }
        let dt = self.dtype();
        let ph = (content + self.decoder.code_proj.forward(prosody)?)?;
        let h = expansion_matrix(align, dt)?.matmul(&ph)?;
        let h = (h + self.decoder.pos_proj.forward(&position_features(align, dt)?)?)?;
        let tim = self.decoder.timbre_proj.forward(&timbre.unsqueeze(0)?)?;
        let h = h.broadcast_add(&tim)?;
        let h = self.decoder.norm.forward(&self.decoder.stack.forward(&h)?)?;
        let y = self.decoder.output.forward(&h)?;
        Ok(((y * MEL_SCALE)? + MEL_OFFSET)?)
    }

    /// Eval-mode synthesis from codes.
    pub fn decode_mel(
        &self,
        content: &ContentRepr,
        timbre: &TimbreVector,
        codes: &ProsodyCodeSequence,
        align: &FrameToPhonemeMap,
        hop_length: usize,
        sample_rate: u32,
    ) -> Result<MelSpectrogram> {
        if codes.len() != content.len() {
            return Err(Error::invalid(format!(
                "{} prosody codes for {} phonemes",
                codes.len(),
                content.len()
            )));
        }
        if timbre.dim() != self.cfg.d_timbre {
            return Err(Error::invalid(format!(
                "timbre vector has dimension {}, model expects {}",
                timbre.dim(),
                self.cfg.d_timbre
            )));
        }
        let q = self.codebook.lookup(codes.codes(), self.dtype())?;
        let y = self.decode_tensor(&content.0, &timbre.0, &q, align)?;
        let (t, m) = y.dims2()?;
        let values = y.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
        MelSpectrogram::new(values, t, m, hop_length, sample_rate)
    }

    /// Full training-mode pass with straight-through quantization.
    pub fn forward_stage1(
        &self,
        phonemes: &PhonemeSequence,
        ref_mel: &MelSpectrogram,
        bands: &ProsodyBands,
        align: &FrameToPhonemeMap,
    ) -> Result<Stage1Forward> {
        let content = self.content_tensor(phonemes)?;
        let timbre = self.timbre_tensor(ref_mel)?;
        let pre_quant = self.prosody_pre_quant(bands, align)?;
        let (codes, quantized) = self.codebook.quantize_rows(&pre_quant)?;
        let q_st = straight_through(&pre_quant, &quantized)?;
        let mel = self.decode_tensor(&content, &timbre, &q_st, align)?;
        Ok(Stage1Forward {
            content,
            timbre,
            pre_quant,
            quantized,
            codes,
            mel,
        })
    }
}
