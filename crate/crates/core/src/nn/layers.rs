use candle_core::Tensor;
use rand_chacha::ChaCha8Rng;

use super::ops::{conv_time_major, layer_norm};
use super::params::{Init, ParamStore};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Option<Tensor>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, d_in: usize, d_out: usize) -> Result<Self> {
        Self::with_init(store, rng, name, d_in, d_out, Init::FanIn(d_in))
    }

    pub fn with_init(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
        init: Init,
    ) -> Result<Self> {
        let weight = store.create(rng, &format!("{name}.weight"), &[d_out, d_in], init)?;
        let bias = store.create(rng, &format!("{name}.bias"), &[d_out], Init::Zeros)?;
        Ok(Self {
            weight,
            bias: Some(bias),
        })
    }

    pub fn no_bias(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Result<Self> {
        let weight = store.create(rng, &format!("{name}.weight"), &[d_out, d_in], Init::FanIn(d_in))?;
        Ok(Self { weight, bias: None })
    }

    /// `(N, d_in) -> (N, d_out)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.matmul(&self.weight.t()?)?;
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(b)?,
            None => y,
        })
    }
}

/// Same-length 1-D convolution over a time-major `(T, C)` matrix. The edges
/// are padded by repeating the first and last frames, so a constant input
/// gives a constant output.
#[derive(Debug, Clone)]
pub struct Conv1d {
    weight: Tensor,
    bias: Tensor,
    padding: usize,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
    ) -> Result<Self> {
        Self::with_init(store, rng, name, c_in, c_out, kernel, Init::FanIn(c_in * kernel))
    }

    pub fn with_init(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        init: Init,
    ) -> Result<Self> {
        assert!(kernel % 2 == 1, "same padding needs an odd kernel");
        let weight = store.create(rng, &format!("{name}.weight"), &[c_out, c_in, kernel], init)?;
        let bias = store.create(rng, &format!("{name}.bias"), &[c_out], Init::Zeros)?;
        Ok(Self {
            weight,
            bias,
            padding: kernel / 2,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv_time_major(x, |xc| {
            let xc = xc.pad_with_same(2, self.padding, self.padding)?;
            let y = xc.conv1d(&self.weight, 0, 1, 1, 1)?;
            Ok(y.broadcast_add(&self.bias.reshape((1, (), 1))?)?)
        })
    }
}

#[derive(Debug, Clone)]
pub struct Embedding {
    table: Tensor,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, n: usize, dim: usize) -> Result<Self> {
        let table = store.create(rng, &format!("{name}.weight"), &[n, dim], Init::Normal(0.5))?;
        Ok(Self { table })
    }

    pub fn len(&self) -> usize {
        self.table.dims()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, ids: &[u32]) -> Result<Tensor> {
        let idx = Tensor::new(ids, self.table.device())?;
        Ok(self.table.index_select(&idx, 0)?)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    gamma: Tensor,
    beta: Tensor,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, dim: usize) -> Result<Self> {
        let gamma = store.create(rng, &format!("{name}.gamma"), &[dim], Init::Ones)?;
        let beta = store.create(rng, &format!("{name}.beta"), &[dim], Init::Zeros)?;
        Ok(Self { gamma, beta })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(layer_norm(x, 1e-5)?
            .broadcast_mul(&self.gamma)?
            .broadcast_add(&self.beta)?)
    }
}

/// Residual stack of `x + silu(conv(norm(x)))` blocks at constant width.
#[derive(Debug, Clone)]
pub struct ConvStack {
    blocks: Vec<(LayerNorm, Conv1d)>,
}

impl ConvStack {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        channels: usize,
        kernel: usize,
        layers: usize,
    ) -> Result<Self> {
        let blocks = (0..layers)
            .map(|i| {
                Ok((
                    LayerNorm::new(store, rng, &format!("{name}.{i}.norm"), channels)?,
                    Conv1d::new(store, rng, &format!("{name}.{i}.conv"), channels, channels, kernel)?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Self { blocks })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (norm, conv) in &self.blocks {
            h = (&h + conv.forward(&norm.forward(&h)?)?.silu()?)?;
        }
        Ok(h)
    }
}
