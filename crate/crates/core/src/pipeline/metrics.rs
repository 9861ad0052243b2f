use crate::error::{Error, Result};
use crate::tts::TimbreVector;

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "vectors have dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("zero-norm vector"));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine similarity of two timbre vectors.
pub fn eval_speaker_similarity(a: &TimbreVector, b: &TimbreVector) -> Result<f64> {
    cosine_similarity(&a.values()?, &b.values()?)
}

/// `exp(H)` of the empirical code distribution, `H = -sum p ln p`.
pub fn codebook_perplexity(codes: &[u32]) -> Result<f64> {
    if codes.is_empty() {
        return Err(Error::invalid("no codes"));
    }
    let mut counts = std::collections::BTreeMap::new();
    for &c in codes {
        *counts.entry(c).or_insert(0usize) += 1;
    }
    let n = codes.len() as f64;
    let h: f64 = counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    Ok(h.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    #[allow(clippy::approx_constant)]
    fn cosine_cases() {
        assert!((cosine_similarity(&[0.3, -2.0], &[0.3, -2.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - 0.70711).abs() < 1e-5);
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn perplexity_cases() {
        assert_eq!(codebook_perplexity(&[4, 4, 4]).unwrap(), 1.0);
        let uniform: Vec<u32> = (0..64).collect();
        assert!((codebook_perplexity(&uniform).unwrap() - 64.0).abs() < 1e-9);
        assert!(codebook_perplexity(&[]).is_err());
    }
}
