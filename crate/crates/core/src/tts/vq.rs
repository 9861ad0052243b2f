//! Vector-quantization bottleneck with an EMA-updated codebook.

use candle_core::{DType, Device, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::to_vec2;

/// `K x d` code vectors plus the EMA statistics that train them.
///
/// Entries are not gradient-trained. After every training step the running
/// per-entry assignment counts (`usage`) and assigned-vector sums are decayed
/// toward the batch statistics, and each entry is set to the ratio of the two
/// (with Laplace smoothing of the counts). An entry left unassigned for
/// `reset_patience` consecutive updates is re-seeded with a random vector from
/// the current batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    dim: usize,
    entries: Vec<f32>,
    usage: Vec<f64>,
    ema_sum: Vec<f64>,
    idle: Vec<usize>,
}

/// Laplace smoothing applied to EMA counts.
const USAGE_EPS: f64 = 1e-5;

impl Codebook {
    pub fn new(entries: Vec<f32>, dim: usize) -> Result<Self> {
        if dim == 0 || !entries.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "codebook buffer of {} values is not a multiple of dim {dim}",
                entries.len()
            )));
        }
        let k = entries.len() / dim;
        if k < 2 {
            return Err(Error::invalid("codebook needs at least 2 entries"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("codebook entries must be finite"));
        }
        Ok(Self {
            dim,
            ema_sum: entries.iter().map(|&v| v as f64).collect(),
            usage: vec![1.0; k],
            idle: vec![0; k],
            entries,
        })
    }

    pub fn random(k: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        use rand_distr::{Distribution, Normal};
        let normal = Normal::new(0.0f32, 1.0).expect("valid normal");
        Self::new((0..k * dim).map(|_| normal.sample(rng)).collect(), dim)
    }

    pub fn size(&self) -> usize {
        self.entries.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize) -> &[f32] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    pub fn entries(&self) -> &[f32] {
        &self.entries
    }

    pub fn usage(&self) -> &[f64] {
        &self.usage
    }

    pub fn entries_tensor(&self, dtype: DType) -> Result<Tensor> {
        Ok(Tensor::from_slice(&self.entries, (self.size(), self.dim), &Device::Cpu)?.to_dtype(dtype)?)
    }

    /// Nearest entry by squared Euclidean distance; ties go to the lowest
    /// index.
    pub fn quantize(&self, v: &[f32]) -> Result<(usize, &[f32])> {
        if v.len() != self.dim {
            return Err(Error::invalid(format!(
                "vector has dimension {}, codebook expects {}",
                v.len(),
                self.dim
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("cannot quantize a non-finite vector"));
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for i in 0..self.size() {
            let d: f64 = self
                .entry(i)
                .iter()
                .zip(v)
                .map(|(&e, &x)| {
                    let diff = x as f64 - e as f64;
                    diff * diff
                })
                .sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        Ok((best, self.entry(best)))
    }

    /// Quantizes every row of an `(N, d)` tensor. Returns the codes and the
    /// `(N, d)` quantized rows in the input dtype, detached from any graph.
    pub fn quantize_rows(&self, z: &Tensor) -> Result<(Vec<u32>, Tensor)> {
        let rows = to_vec2(z)?;
        let mut codes = Vec::with_capacity(rows.len());
        let mut out = Vec::with_capacity(rows.len() * self.dim);
        for row in rows {
            let row: Vec<f32> = row.iter().map(|&x| x as f32).collect();
            let (i, e) = self.quantize(&row)?;
            codes.push(i as u32);
            out.extend_from_slice(e);
        }
        let q = Tensor::from_vec(out, (codes.len(), self.dim), &Device::Cpu)?.to_dtype(z.dtype())?;
        Ok((codes, q))
    }

    /// Rows of the codebook selected by `codes`, as an `(N, d)` tensor.
    pub fn lookup(&self, codes: &[u32], dtype: DType) -> Result<Tensor> {
        let mut out = Vec::with_capacity(codes.len() * self.dim);
        for &c in codes {
            let c = c as usize;
            if c >= self.size() {
                return Err(Error::invalid(format!(
                    "code {c} out of range for codebook of {}",
                    self.size()
                )));
            }
            out.extend_from_slice(self.entry(c));
        }
        Ok(Tensor::from_vec(out, (codes.len(), self.dim), &Device::Cpu)?.to_dtype(dtype)?)
    }

    /// One EMA update from a batch of pre-quantization vectors and their
    /// assigned codes, followed by dead-entry resets.
    #[allow(clippy::needless_range_loop)]
    pub fn ema_update(
        &mut self,
        vectors: &[Vec<f32>],
        codes: &[u32],
        decay: f64,
        reset_patience: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        if vectors.len() != codes.len() {
            return Err(Error::invalid("vector and code counts differ"));
        }
        if vectors.is_empty() {
            return Ok(());
        }
        let k = self.size();
        let d = self.dim;
        let mut counts = vec![0.0f64; k];
        let mut sums = vec![0.0f64; k * d];
        for (v, &c) in vectors.iter().zip(codes) {
            let c = c as usize;
            counts[c] += 1.0;
            for (s, &x) in sums[c * d..(c + 1) * d].iter_mut().zip(v) {
                *s += x as f64;
            }
        }
        for i in 0..k {
            self.usage[i] = decay * self.usage[i] + (1.0 - decay) * counts[i];
        }
        for (e, s) in self.ema_sum.iter_mut().zip(&sums) {
            *e = decay * *e + (1.0 - decay) * s;
        }
        let total: f64 = self.usage.iter().sum();
        for i in 0..k {
            let smoothed = (self.usage[i] + USAGE_EPS) / (total + k as f64 * USAGE_EPS) * total;
            for j in 0..d {
                self.entries[i * d + j] = (self.ema_sum[i * d + j] / smoothed) as f32;
            }
            self.idle[i] = if counts[i] > 0.0 { 0 } else { self.idle[i] + 1 };
        }
        if reset_patience > 0 {
            for i in 0..k {
                if self.idle[i] >= reset_patience {
                    let src = &vectors[rng.random_range(0..vectors.len())];
                    self.entries[i * d..(i + 1) * d].copy_from_slice(src);
                    self.usage[i] = 1.0;
                    for j in 0..d {
                        self.ema_sum[i * d + j] = src[j] as f64;
                    }
                    self.idle[i] = 0;
                }
            }
        }
        Ok(())
    }

    pub(crate) fn to_tensors(&self, prefix: &str) -> Result<Vec<(String, Tensor)>> {
        let k = self.size();
        let dev = Device::Cpu;
        Ok(vec![
            (
                format!("{prefix}entries"),
                Tensor::from_slice(&self.entries, (k, self.dim), &dev)?,
            ),
            (format!("{prefix}usage"), Tensor::from_slice(&self.usage, k, &dev)?),
            (
                format!("{prefix}ema_sum"),
                Tensor::from_slice(&self.ema_sum, (k, self.dim), &dev)?,
            ),
            (
                format!("{prefix}idle"),
                Tensor::from_vec(self.idle.iter().map(|&i| i as u32).collect::<Vec<_>>(), k, &dev)?,
            ),
        ])
    }

    pub(crate) fn from_tensors(get: impl Fn(&str) -> Result<Tensor>, prefix: &str) -> Result<Self> {
        let entries = get(&format!("{prefix}entries"))?;
        let (k, dim) = entries.dims2()?;
        let mut cb = Self::new(entries.flatten_all()?.to_vec1::<f32>()?, dim)?;
        cb.usage = get(&format!("{prefix}usage"))?.to_vec1::<f64>()?;
        cb.ema_sum = get(&format!("{prefix}ema_sum"))?.flatten_all()?.to_vec1::<f64>()?;
        cb.idle = get(&format!("{prefix}idle"))?
            .to_vec1::<u32>()?
            .into_iter()
            .map(|i| i as usize)
            .collect();
        if cb.usage.len() != k || cb.ema_sum.len() != k * dim || cb.idle.len() != k {
            return Err(Error::Checkpoint("codebook statistics have inconsistent shapes".into()));
        }
        Ok(cb)
    }
}

/// `z + stopgrad(q - z)`: forwards the quantized values, passes gradients to
/// `z` unchanged.
pub fn straight_through(z: &Tensor, q: &Tensor) -> Result<Tensor> {
    Ok((z + (q - z)?.detach())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn book() -> Codebook {
        Codebook::new(
            vec![
                0.0, 0.0, //
                1.0, 0.0, //
                0.0, 1.0, //
                1.0, 1.0, //
                2.0, 0.0,
            ],
            2,
        )
        .unwrap()
    }

    #[test]
    fn entry_is_a_fixed_point() {
        let cb = book();
        let (i, q) = cb.quantize(&[1.0, 1.0]).unwrap();
        assert_eq!(i, 3);
        assert_eq!(q, &[1.0, 1.0]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        // (1, 0) is at squared distance 1 from both entry 0 and entry 4.
        let cb = Codebook::new(vec![0.0, 0.0, 5.0, 5.0, 3.0, 3.0, 9.0, 9.0, 2.0, 0.0], 2).unwrap();
        assert_eq!(cb.quantize(&[1.0, 0.0]).unwrap().0, 0);
    }

    #[test]
    fn rejects_non_finite_and_wrong_dim() {
        let cb = book();
        assert!(cb.quantize(&[f32::NAN, 0.0]).is_err());
        assert!(cb.quantize(&[0.0]).is_err());
        assert!(Codebook::new(vec![0.0, 1.0], 2).is_err());
    }

    #[test]
    fn ema_moves_used_entries_toward_assignments() {
        let mut cb = book();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = vec![vec![0.5f32, 0.5]];
        let before = cb.entry(0).to_vec();
        cb.ema_update(&v, &[0], 0.5, 0, &mut rng).unwrap();
        assert!(cb.entry(0)[0] > before[0]);
    }

    #[test]
    fn idle_entries_are_reset_to_batch_vectors() {
        let mut cb = book();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = vec![vec![7.0f32, -3.0]];
        for _ in 0..3 {
            cb.ema_update(&v, &[0], 0.9, 3, &mut rng).unwrap();
        }
        for i in 1..5 {
            assert_eq!(cb.entry(i), &[7.0, -3.0]);
        }
    }

    #[test]
    fn tensors_round_trip() {
        let mut cb = book();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        cb.ema_update(&[vec![0.3, 0.2]], &[1], 0.9, 2, &mut rng).unwrap();
        let map: std::collections::HashMap<String, Tensor> = cb.to_tensors("cb.").unwrap().into_iter().collect();
        let back = Codebook::from_tensors(|k| Ok(map[k].clone()), "cb.").unwrap();
        assert_eq!(cb, back);
    }
}
