use candle_core::{DType, Tensor, D};

use crate::error::Result;

/// Softmax over the last dimension. Entries equal to `-inf` get exactly zero
/// weight.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    let sum = e.sum_keepdim(D::Minus1)?;
    Ok(e.broadcast_div(&sum)?)
}

pub fn log_softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

/// Normalizes the last dimension to zero mean and unit variance.
pub fn layer_norm(x: &Tensor, eps: f64) -> Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    Ok(centered.broadcast_div(&(var + eps)?.sqrt()?)?)
}

/// Applies a channels-first op to a `(T, C)` matrix and returns `(T, C')`.
pub fn conv_time_major(x: &Tensor, f: impl FnOnce(&Tensor) -> Result<Tensor>) -> Result<Tensor> {
    let xc = x.t()?.contiguous()?.unsqueeze(0)?;
    let y = f(&xc)?;
    Ok(y.squeeze(0)?.t()?.contiguous()?)
}

pub fn scalar(x: &Tensor) -> Result<f64> {
    Ok(x.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

pub fn to_vec1(x: &Tensor) -> Result<Vec<f64>> {
    Ok(x.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?)
}

pub fn to_vec2(x: &Tensor) -> Result<Vec<Vec<f64>>> {
    Ok(x.to_dtype(DType::F64)?.to_vec2::<f64>()?)
}

/// L2 norm of all gradients in `grads` belonging to `store`.
pub fn global_grad_norm(store: &super::ParamStore, grads: &candle_core::backprop::GradStore) -> Result<f64> {
    let mut total = 0.0;
    for (_, var) in store.vars() {
        if let Some(g) = grads.get(var) {
            total += scalar(&g.sqr()?.sum_all()?)?;
        }
    }
    Ok(total.sqrt())
}
