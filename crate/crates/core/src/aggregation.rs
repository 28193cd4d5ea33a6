//! Memory-vector construction and cosine matching.
//!
//! Every member is L2-normalized on entry. The sum vector adds the
//! normalized members; the pseudo-inverse vector is the minimum-norm `m`
//! with `X m = 1`, computed as `Xᵀ (X Xᵀ)⁻¹ 1` through the small Gram system.
//! Aggregates are stored un-normalized; [`cosine_similarity`] normalizes.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{AggregationKind, FeatureVector, MemoryVector};

/// Aggregation kind plus the ridge regularization used when the Gram
/// matrix of a pseudo-inverse aggregate is numerically singular.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregationMode {
    pub kind: AggregationKind,
    pub ridge_epsilon: f64,
}

impl AggregationMode {
    pub const DEFAULT_RIDGE_EPSILON: f64 = 1e-9;

    pub const fn sum() -> Self {
        AggregationMode {
            kind: AggregationKind::Sum,
            ridge_epsilon: Self::DEFAULT_RIDGE_EPSILON,
        }
    }

    pub const fn pinv() -> Self {
        AggregationMode {
            kind: AggregationKind::PInv,
            ridge_epsilon: Self::DEFAULT_RIDGE_EPSILON,
        }
    }

    pub const fn of_kind(kind: AggregationKind) -> Self {
        AggregationMode {
            kind,
            ridge_epsilon: Self::DEFAULT_RIDGE_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge_epsilon > 0.0 && self.ridge_epsilon.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "ridge_epsilon must be positive, got {}",
                self.ridge_epsilon
            )));
        }
        Ok(())
    }
}

impl Default for AggregationMode {
    fn default() -> Self {
        Self::pinv()
    }
}

fn normalized_rows<'a, I>(members: I, what: &'static str) -> Result<Vec<Vec<f64>>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for values in members {
        if let Some(first) = rows.first() {
            if first.len() != values.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    found: values.len(),
                });
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(what));
        }
        let n = linalg::norm(values);
        if n == 0.0 {
            return Err(Error::ZeroVector(what));
        }
        rows.push(values.iter().map(|v| v / n).collect());
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    Ok(rows)
}

fn sum_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut out = alloc::vec![0.0; rows[0].len()];
    for row in rows {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

fn pinv_rows(rows: &[Vec<f64>], ridge_epsilon: f64) -> Result<(Vec<f64>, bool)> {
    let n = rows.len();
    let d = rows[0].len();
    if n > d {
        return Err(Error::TooManyMembers { members: n, dim: d });
    }
    let g = linalg::gram(rows);
    let ones = alloc::vec![1.0; n];
    let (w, regularized) = linalg::solve_gram(&g, n, &ones, ridge_epsilon);
    let mut m = alloc::vec![0.0; d];
    for (row, wi) in rows.iter().zip(&w) {
        for (mk, xk) in m.iter_mut().zip(row) {
            *mk += wi * xk;
        }
    }
    Ok((m, regularized))
}

fn aggregate_rows(rows: &[Vec<f64>], mode: &AggregationMode, member_count: usize) -> Result<MemoryVector> {
    let (values, regularized) = match mode.kind {
        AggregationKind::Sum => (sum_rows(rows), false),
        AggregationKind::PInv => {
            mode.validate()?;
            pinv_rows(rows, mode.ridge_epsilon)?
        }
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("aggregate"));
    }
    // e.g. a sum of opposite members
    if values.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroVector("aggregate"));
    }
    Ok(MemoryVector {
        values,
        kind: mode.kind,
        member_count,
        regularized,
    })
}

/// Sum of the L2-normalized members.
pub fn sum_vector(members: &[FeatureVector]) -> Result<MemoryVector> {
    let rows = normalized_rows(members.iter().map(|m| m.values.as_slice()), "sum_vector")?;
    aggregate_rows(&rows, &AggregationMode::sum(), members.len())
}

/// Pseudo-inverse memory vector: `m` with `x̂_i · m = 1` for every
/// normalized member `x̂_i`.
///
/// At most `dim` members are accepted.
pub fn pinv_vector(members: &[FeatureVector], mode: &AggregationMode) -> Result<MemoryVector> {
    let rows = normalized_rows(members.iter().map(|m| m.values.as_slice()), "pinv_vector")?;
    let pinv = AggregationMode {
        kind: AggregationKind::PInv,
        ..*mode
    };
    aggregate_rows(&rows, &pinv, members.len())
}

/// Aggregates feature vectors with the requested construction.
pub fn aggregate_features(members: &[FeatureVector], mode: &AggregationMode) -> Result<MemoryVector> {
    match mode.kind {
        AggregationKind::Sum => sum_vector(members),
        AggregationKind::PInv => pinv_vector(members, mode),
    }
}

/// Memory vector of a whole panorama from its four cardinal views.
pub fn aggregate_panorama(views: &[FeatureVector], mode: &AggregationMode) -> Result<MemoryVector> {
    if views.len() != 4 {
        return Err(Error::WrongViewCount(views.len()));
    }
    aggregate_features(views, mode)
}

/// Aggregates memory vectors (e.g. all panoramas of one geographic cluster)
/// into one. Members must share a dimension and a construction.
pub fn aggregate_memories(members: &[MemoryVector], mode: &AggregationMode) -> Result<MemoryVector> {
    let first = members.first().ok_or(Error::EmptyInput("aggregate_memories"))?;
    if members.iter().any(|m| m.kind != first.kind) {
        return Err(Error::MixedModes);
    }
    let rows = normalized_rows(members.iter().map(|m| m.values.as_slice()), "aggregate_memories")?;
    let count = members.iter().map(|m| m.member_count).sum();
    aggregate_rows(&rows, mode, count)
}

/// Cosine similarity given both norms.
///
/// The index caches norms and goes through this function so that flat and
/// hierarchical scoring produce bit-identical values.
#[inline]
pub fn cosine_with_norms(a: &[f64], norm_a: f64, b: &[f64], norm_b: f64) -> f64 {
    let c = linalg::dot(a, b) / (norm_a * norm_b);
    c.clamp(-1.0, 1.0)
}

/// Euclidean norm.
pub fn l2_norm(a: &[f64]) -> f64 {
    linalg::norm(a)
}

/// `a·b / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let na = linalg::norm(a);
    let nb = linalg::norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector("cosine_similarity"));
    }
    Ok(cosine_with_norms(a, na, b, nb))
}
