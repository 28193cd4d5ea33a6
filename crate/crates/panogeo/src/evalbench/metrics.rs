use panogeo_core::model::{CandidateSet, GeoPoint};

use crate::error::{Error, Result};

/// Default hit radius in meters.
pub const DEFAULT_RADIUS: f64 = 25.0;

/// Fraction of queries whose first `n` candidates include one within
/// `radius` meters (inclusive) of the truth.
pub fn recall_at_n(result_sets: &[CandidateSet], truths: &[GeoPoint], n: usize, radius: f64) -> Result<f64> {
    if result_sets.len() != truths.len() {
        return Err(Error::LengthMismatch(result_sets.len(), truths.len()));
    }
    if n == 0 {
        return Err(Error::InvalidConfig("recall needs n >= 1".into()));
    }
    if result_sets.is_empty() {
        return Err(panogeo_core::Error::EmptyInput("recall queries").into());
    }
    let hits = result_sets
        .iter()
        .zip(truths)
        .filter(|(set, truth)| set.entries.iter().take(n).any(|c| c.location.distance(truth) <= radius))
        .count();
    Ok(hits as f64 / result_sets.len() as f64)
}

/// Euclidean distance in meters.
pub fn positioning_error(estimate: GeoPoint, truth: GeoPoint) -> Result<f64> {
    if !estimate.is_finite() || !truth.is_finite() {
        return Err(panogeo_core::Error::NonFiniteValue("positioning error input").into());
    }
    Ok(estimate.distance(&truth))
}

/// Lower median: element `(len - 1) / 2` of the sorted values.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(panogeo_core::Error::EmptyInput("median").into());
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[(sorted.len() - 1) / 2])
}
