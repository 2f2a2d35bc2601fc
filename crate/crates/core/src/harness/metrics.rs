use crate::constellation::SymbolSequence;
use crate::error::{Error, Result};

/// Per-symbol mean squared distance `(1/n) sum |a_k - b_k|^2`; 0 for empty input.
pub fn mse(a: &SymbolSequence, b: &SymbolSequence) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm_sqr()).sum();
    Ok(total / a.len() as f64)
}

/// Fraction of positions where the symbol indices differ; 0 for empty input.
pub fn ser(sent: &[usize], recovered: &[usize]) -> Result<f64> {
    if sent.len() != recovered.len() {
        return Err(Error::LengthMismatch { left: sent.len(), right: recovered.len() });
    }
    if sent.is_empty() {
        return Ok(0.0);
    }
    let wrong = sent.iter().zip(recovered).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / sent.len() as f64)
}
