//! Shared vocabulary: planar coordinates, descriptors, memory vectors,
//! panorama records and ranked candidate sets.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// A point in a planar national grid, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
}

impl GeoPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        GeoPoint { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Squared Euclidean distance. Used wherever only comparisons matter.
    pub fn distance_squared(&self, other: &GeoPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &GeoPoint) -> f64 {
        libm::sqrt(self.distance_squared(other))
    }

    pub fn translate(&self, dx: f64, dy: f64) -> GeoPoint {
        GeoPoint::new(self.x + dx, self.y + dy)
    }
}

/// Cardinal direction of one planar view cut from a spherical panorama.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    N,
    E,
    S,
    W,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::N, Direction::E, Direction::S, Direction::W];

    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::N => "N",
            Direction::E => "E",
            Direction::S => "S",
            Direction::W => "W",
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" | "n" => Ok(Direction::N),
            "E" | "e" => Ok(Direction::E),
            "S" | "s" => Ok(Direction::S),
            "W" | "w" => Ok(Direction::W),
            _ => Err(Error::InvalidConfig(alloc::format!("unknown view direction {s:?}"))),
        }
    }
}

/// Which of the two memory-vector constructions produced a vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AggregationKind {
    Sum,
    #[default]
    PInv,
}

impl AggregationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AggregationKind::Sum => "sum",
            AggregationKind::PInv => "pinv",
        }
    }
}

impl fmt::Display for AggregationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(AggregationKind::Sum),
            "pinv" | "p-inv" => Ok(AggregationKind::PInv),
            _ => Err(Error::InvalidConfig(alloc::format!("unknown aggregation mode {s:?}"))),
        }
    }
}

/// Global descriptor of one planar view.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    /// Builds a descriptor, rejecting empty, non-finite or zero vectors.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let v = FeatureVector { values };
        v.validate()?;
        Ok(v)
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_values(&self.values, "feature vector")
    }
}

/// Aggregate of one or more descriptors; the unit of search.
///
/// Values are stored un-normalized. `regularized` marks pseudo-inverse
/// aggregates whose Gram system needed the ridge fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryVector {
    pub values: Vec<f64>,
    pub kind: AggregationKind,
    pub member_count: usize,
    pub regularized: bool,
}

impl MemoryVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_values(&self.values, "memory vector")?;
        if self.member_count == 0 {
            return Err(Error::EmptyInput("memory vector member count"));
        }
        Ok(())
    }

    /// Rounds every component to the nearest `f32`, the precision used by
    /// all persisted formats.
    pub fn quantized(&self) -> MemoryVector {
        MemoryVector {
            values: self.values.iter().map(|&v| f64::from(v as f32)).collect(),
            ..self.clone()
        }
    }
}

fn check_values(values: &[f64], what: &'static str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue(what));
    }
    if values.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroVector(what));
    }
    Ok(())
}

/// The four cardinal views of one panorama, stored in N, E, S, W order.
#[derive(Debug, Clone, PartialEq)]
pub struct Views(pub [FeatureVector; 4]);

impl Views {
    /// Assembles views keyed by direction. Each direction must appear once.
    pub fn from_pairs(id: &str, pairs: Vec<(Direction, FeatureVector)>) -> Result<Self> {
        let mut slots: [Option<FeatureVector>; 4] = [None, None, None, None];
        for (dir, fv) in pairs {
            let slot = &mut slots[dir.index()];
            if slot.is_some() {
                return Err(Error::DuplicateView(String::from(id)));
            }
            *slot = Some(fv);
        }
        let [n, e, s, w] = slots;
        match (n, e, s, w) {
            (Some(n), Some(e), Some(s), Some(w)) => Ok(Views([n, e, s, w])),
            _ => Err(Error::DuplicateView(String::from(id))),
        }
    }

    pub fn get(&self, dir: Direction) -> &FeatureVector {
        &self.0[dir.index()]
    }

    pub fn as_slice(&self) -> &[FeatureVector] {
        &self.0
    }
}

/// One georeferenced panorama and its memory vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PanoRecord {
    pub id: String,
    pub location: GeoPoint,
    pub memory: MemoryVector,
    pub views: Option<Views>,
}

/// Checks every record invariant.
pub fn validate_record(record: &PanoRecord) -> Result<()> {
    if !record.location.is_finite() {
        return Err(Error::NonFiniteValue("record location"));
    }
    record.memory.validate()?;
    if let Some(views) = &record.views {
        let dim = record.memory.dim();
        for view in views.as_slice() {
            if view.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: view.dim(),
                });
            }
            view.validate()?;
        }
    }
    Ok(())
}

/// Validates a whole dataset: each record, unique ids and a single
/// dataset-wide dimension. Returns that dimension.
pub fn validate_dataset(records: &[PanoRecord]) -> Result<usize> {
    let first = records.first().ok_or(Error::EmptyInput("dataset"))?;
    let dim = first.memory.dim();
    let mut ids: Vec<&str> = Vec::with_capacity(records.len());
    for r in records {
        validate_record(r)?;
        if r.memory.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.memory.dim(),
            });
        }
        ids.push(&r.id);
    }
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateId(String::from(w[0])));
    }
    Ok(dim)
}

/// One retrieved panorama.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub pano_id: String,
    pub location: GeoPoint,
    pub query_similarity: f64,
    pub memory: MemoryVector,
}

/// Ranking order: similarity descending, then id ascending.
pub fn rank_order(a_sim: f64, a_id: &str, b_sim: f64, b_id: &str) -> Ordering {
    b_sim.total_cmp(&a_sim).then_with(|| a_id.cmp(b_id))
}

/// Ranked matches for one query.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateSet {
    pub entries: Vec<Candidate>,
}

impl CandidateSet {
    /// Sorts entries into ranking order. Duplicate ids are rejected.
    pub fn from_unsorted(mut entries: Vec<Candidate>) -> Result<Self> {
        entries.sort_by(|a, b| rank_order(a.query_similarity, &a.pano_id, b.query_similarity, &b.pano_id));
        let set = CandidateSet { entries };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The first `n` entries as a new set.
    pub fn truncated(&self, n: usize) -> CandidateSet {
        CandidateSet {
            entries: self.entries.iter().take(n).cloned().collect(),
        }
    }

    /// Checks ordering, id uniqueness and similarity range.
    pub fn validate(&self) -> Result<()> {
        for c in &self.entries {
            if !c.query_similarity.is_finite() || !(-1.0..=1.0).contains(&c.query_similarity) {
                return Err(Error::NonFiniteValue("candidate similarity"));
            }
        }
        for w in self.entries.windows(2) {
            let ord = rank_order(
                w[0].query_similarity,
                &w[0].pano_id,
                w[1].query_similarity,
                &w[1].pano_id,
            );
            if ord != Ordering::Less {
                return Err(Error::InvalidConfig(alloc::format!(
                    "candidate {} out of order",
                    w[1].pano_id
                )));
            }
        }
        let mut ids: Vec<&str> = self.entries.iter().map(|c| c.pano_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateId(String::from(w[0])));
        }
        Ok(())
    }
}
