use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{argmax, PllmInput, PllmLogits};
use crate::config::{PllmModelConfig, SamplingConfig};
use crate::error::{Error, Result};
use crate::nn::{log_softmax_last, softmax_last, to_vec2, Embedding, LayerNorm, Linear, ParamStore};
use crate::tts::ProsodyCodeSequence;

const SEG_PROMPT_CONTENT: u32 = 0;
const SEG_PROMPT_CODES: u32 = 1;
const SEG_SEP: u32 = 2;
const SEG_TARGET_CONTENT: u32 = 3;
const SEG_TARGET_CODES: u32 = 4;
const N_SEGMENTS: usize = 5;

struct Block {
    ln1: LayerNorm,
    qkv: Linear,
    proj: Linear,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

pub struct PllmModel {
    cfg: PllmModelConfig,
    codebook_size: usize,
    d_content: usize,
    store: ParamStore,
    adapter: Linear,
    codes: Embedding,
    segments: Embedding,
    positions: Embedding,
    blocks: Vec<Block>,
    ln_f: LayerNorm,
    head: Linear,
}

impl PllmModel {
    pub fn new(cfg: &PllmModelConfig, codebook_size: usize, d_content: usize, seed: u64, dtype: DType) -> Result<Self> {
        if cfg.n_heads == 0 || !cfg.width.is_multiple_of(cfg.n_heads) {
            return Err(Error::invalid("pllm width must be a positive multiple of n_heads"));
        }
        if codebook_size < 2 {
            return Err(Error::invalid("codebook needs at least 2 entries"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new(dtype);
        let w = cfg.width;
        let adapter = Linear::new(&mut s, &mut rng, "adapter", d_content, w)?;
        let codes = Embedding::new(&mut s, &mut rng, "codes", codebook_size, w)?;
        let segments = Embedding::new(&mut s, &mut rng, "segments", N_SEGMENTS, w)?;
        let positions = Embedding::new(&mut s, &mut rng, "positions", cfg.max_positions, w)?;
        let blocks = (0..cfg.n_layers)
            .map(|i| {
                let p = format!("block{i}");
                Ok(Block {
                    ln1: LayerNorm::new(&mut s, &mut rng, &format!("{p}.ln1"), w)?,
                    qkv: Linear::new(&mut s, &mut rng, &format!("{p}.qkv"), w, 3 * w)?,
                    proj: Linear::new(&mut s, &mut rng, &format!("{p}.proj"), w, w)?,
                    ln2: LayerNorm::new(&mut s, &mut rng, &format!("{p}.ln2"), w)?,
                    ff1: Linear::new(&mut s, &mut rng, &format!("{p}.ff1"), w, 4 * w)?,
                    ff2: Linear::new(&mut s, &mut rng, &format!("{p}.ff2"), 4 * w, w)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ln_f = LayerNorm::new(&mut s, &mut rng, "ln_f", w)?;
        let head = Linear::new(&mut s, &mut rng, "head", w, codebook_size)?;
        Ok(Self {
            cfg: cfg.clone(),
            codebook_size,
            d_content,
            store: s,
            adapter,
            codes,
            segments,
            positions,
            blocks,
            ln_f,
            head,
        })
    }

    pub fn config(&self) -> &PllmModelConfig {
        &self.cfg
    }

    pub fn codebook_size(&self) -> usize {
        self.codebook_size
    }

    pub fn d_content(&self) -> usize {
        self.d_content
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    fn check_codes(&self, codes: &[u32]) -> Result<()> {
        if let Some(&c) = codes.iter().find(|&&c| c as usize >= self.codebook_size) {
            return Err(Error::invalid(format!(
                "code {c} outside codebook of {}",
                self.codebook_size
            )));
        }
        Ok(())
    }

    fn segment(&self, seg: u32, rows: Tensor) -> Result<Tensor> {
        let n = rows.dims2()?.0;
        if n > self.cfg.max_positions {
            return Err(Error::invalid(format!(
                "segment of {n} tokens exceeds max_positions {}",
                self.cfg.max_positions
            )));
        }
        let idx: Vec<u32> = (0..n as u32).collect();
        let pos = self.positions.forward(&idx)?;
        let seg = self.segments.forward(&vec![seg; n])?;
        Ok(((rows + pos)? + seg)?)
    }

    fn content(&self, c: &Tensor) -> Result<Tensor> {
        if c.dims2()?.1 != self.d_content {
            return Err(Error::invalid(format!(
                "content width {} differs from the model's {}",
                c.dims2()?.1,
                self.d_content
            )));
        }
        self.adapter.forward(&c.to_dtype(self.dtype())?)
    }

    fn causal_mask(&self, n: usize) -> Result<Tensor> {
        let m: Vec<f32> = (0..n * n)
            .map(|i| if i % n > i / n { f32::NEG_INFINITY } else { 0.0 })
            .collect();
        Ok(Tensor::from_vec(m, (n, n), &Device::Cpu)?.to_dtype(self.dtype())?)
    }

    fn attention(&self, b: &Block, x: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let (n, w) = x.dims2()?;
        let h = self.cfg.n_heads;
        let dh = w / h;
        let qkv = b.qkv.forward(x)?;
        let split = |i: usize| -> Result<Tensor> {
            Ok(qkv
                .narrow(1, i * w, w)?
                .reshape((n, h, dh))?
                .transpose(0, 1)?
                .contiguous()?)
        };
        let (q, k, v) = (split(0)?, split(1)?, split(2)?);
        let scores = (q.matmul(&k.transpose(1, 2)?.contiguous()?)? / (dh as f64).sqrt())?;
        let p = softmax_last(&scores.broadcast_add(mask)?)?;
        let o = p.matmul(&v)?.transpose(0, 1)?.contiguous()?.reshape((n, w))?;
        b.proj.forward(&o)
    }

    /// `(len(prefix) + 1, K)` logits: row `i` predicts target code `i`.
    pub fn logits_tensor(&self, input: &PllmInput, prefix: &[u32]) -> Result<Tensor> {
        if prefix.len() > input.target_len() {
            return Err(Error::invalid(format!(
                "target prefix of {} codes exceeds target length {}",
                prefix.len(),
                input.target_len()
            )));
        }
        self.check_codes(input.prompt_codes.codes())?;
        self.check_codes(prefix)?;
        let lp = input.prompt_content.len();
        let lt = input.target_len();
        let mut parts = Vec::with_capacity(5);
        if lp > 0 {
            parts.push(self.segment(SEG_PROMPT_CONTENT, self.content(&input.prompt_content.0)?)?);
            parts.push(self.segment(SEG_PROMPT_CODES, self.codes.forward(input.prompt_codes.codes())?)?);
        }
        let zero = Tensor::zeros((1, self.cfg.width), self.dtype(), &Device::Cpu)?;
        parts.push(self.segment(SEG_SEP, zero)?);
        parts.push(self.segment(SEG_TARGET_CONTENT, self.content(&input.target_content.0)?)?);
        if !prefix.is_empty() {
            parts.push(self.segment(SEG_TARGET_CODES, self.codes.forward(prefix)?)?);
        }
        let mut x = Tensor::cat(&parts, 0)?;
        let n = x.dims2()?.0;
        let mask = self.causal_mask(n)?;
        for b in &self.blocks {
            x = (&x + self.attention(b, &b.ln1.forward(&x)?, &mask)?)?;
            let ff = b.ff2.forward(&b.ff1.forward(&b.ln2.forward(&x)?)?.silu()?)?;
            x = (x + ff)?;
        }
        let start = 2 * lp + lt;
        let rows = x.narrow(0, start, prefix.len() + 1)?;
        self.head.forward(&self.ln_f.forward(&rows)?)
    }

    pub fn forward(&self, input: &PllmInput, prefix: &ProsodyCodeSequence) -> Result<PllmLogits> {
        Ok(PllmLogits(self.logits_tensor(input, prefix.codes())?))
    }

    /// Autoregressive decoding of `target_length` codes.
    pub fn predict(
        &self,
        input: &PllmInput,
        target_length: usize,
        sampling: &SamplingConfig,
        seed: u64,
    ) -> Result<ProsodyCodeSequence> {
        if target_length == 0 {
            return Err(Error::invalid("target length must be at least 1"));
        }
        if target_length > input.target_len() {
            return Err(Error::invalid(format!(
                "target length {target_length} exceeds target content length {}",
                input.target_len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut codes = Vec::with_capacity(target_length);
        for _ in 0..target_length {
            let logits = self.logits_tensor(input, &codes)?;
            let rows = to_vec2(&logits.narrow(0, codes.len(), 1)?)?;
            codes.push(sample(&rows[0], sampling, &mut rng) as u32);
        }
        ProsodyCodeSequence::new(codes, self.codebook_size)
    }
}

/// Draws one index from `logits`. Temperature 0 or `top_k == 1` is greedy.
fn sample(logits: &[f64], cfg: &SamplingConfig, rng: &mut ChaCha8Rng) -> usize {
    if cfg.temperature <= 0.0 || cfg.top_k == 1 {
        return argmax(logits);
    }
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    if cfg.top_k > 0 {
        order.truncate(cfg.top_k);
    }
    let top = logits[order[0]];
    let weights: Vec<f64> = order
        .iter()
        .map(|&i| ((logits[i] - top) / cfg.temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (&i, &w) in order.iter().zip(&weights) {
        if u < w {
            return i;
        }
        u -= w;
    }
    *order.last().expect("non-empty")
}

/// Mean negative log-likelihood of `targets` under row-wise softmax of
/// `(N, K)` logits.
pub fn cross_entropy(logits: &Tensor, targets: &[u32]) -> Result<Tensor> {
    let (n, k) = logits.dims2()?;
    if n != targets.len() || n == 0 {
        return Err(Error::invalid(format!("{n} logit rows for {} targets", targets.len())));
    }
    let mut onehot = vec![0f32; n * k];
    for (i, &t) in targets.iter().enumerate() {
        if t as usize >= k {
            return Err(Error::invalid(format!("target {t} outside {k} classes")));
        }
        onehot[i * k + t as usize] = 1.0;
    }
    let onehot = Tensor::from_vec(onehot, (n, k), &Device::Cpu)?.to_dtype(logits.dtype())?;
    let nll = (log_softmax_last(logits)? * onehot)?.sum_all()?.neg()?;
    Ok((nll / n as f64)?)
}
