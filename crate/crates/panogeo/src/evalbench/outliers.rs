//! Candidate sets with planted far-away false positives.

use panogeo_core::geoposition::{estimate_position, filter_by_mean, rerank};
use panogeo_core::model::{Candidate, CandidateSet, GeoPoint, PanoRecord};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::{median, positioning_error};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSet {
    pub candidates: CandidateSet,
    pub truth: GeoPoint,
    /// Id of the planted outlier, if any.
    pub outlier: Option<String>,
}

/// Replaces the weakest candidate of a `fraction` of the sets with a
/// database panorama at least `min_distance` meters from every original
/// candidate. The outlier is given the best similarity of its set, so it
/// pulls the unfiltered estimate as hard as possible.
pub fn plant_outliers(
    sets: &[CandidateSet],
    truths: &[GeoPoint],
    database: &[PanoRecord],
    fraction: f64,
    min_distance: f64,
    seed: u64,
) -> Result<Vec<PlantedSet>> {
    if sets.len() != truths.len() {
        return Err(Error::LengthMismatch(sets.len(), truths.len()));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidConfig("outlier fraction must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted_count = (fraction * sets.len() as f64).round() as usize;
    let mut chosen = vec![false; sets.len()];
    for i in sample(&mut rng, sets.len(), planted_count) {
        chosen[i] = true;
    }

    let mut out = Vec::with_capacity(sets.len());
    for ((set, truth), plant) in sets.iter().zip(truths).zip(chosen) {
        if !plant || set.len() < 2 {
            out.push(PlantedSet {
                candidates: set.clone(),
                truth: *truth,
                outlier: None,
            });
            continue;
        }
        let far = |p: &PanoRecord| {
            set.entries
                .iter()
                .all(|c| c.location.distance(&p.location) >= min_distance)
        };
        let pool: Vec<&PanoRecord> = database.iter().filter(|p| far(p)).collect();
        if pool.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "no database panorama lies {min_distance} m from every candidate"
            )));
        }
        let pick = pool[rng.random_range(0..pool.len())];
        let mut entries = set.entries[..set.len() - 1].to_vec();
        entries.push(Candidate {
            pano_id: pick.id.clone(),
            location: pick.location,
            query_similarity: set.entries[0].query_similarity,
            memory: pick.memory.clone(),
        });
        out.push(PlantedSet {
            candidates: CandidateSet::from_unsorted(entries)?,
            truth: *truth,
            outlier: Some(pick.id.clone()),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierReport {
    pub median_error_baseline: f64,
    pub median_error_reranked: f64,
    pub planted: usize,
    /// Planted outliers removed by the re-ranking filter.
    pub rejected: usize,
}

/// Median positioning error with and without re-ranking, plus how many
/// planted outliers the filter removed.
pub fn evaluate_planted(sets: &[PlantedSet]) -> Result<OutlierReport> {
    let mut baseline = Vec::with_capacity(sets.len());
    let mut reranked = Vec::with_capacity(sets.len());
    let mut planted = 0;
    let mut rejected = 0;
    for s in sets {
        baseline.push(positioning_error(
            estimate_position(&s.candidates, false)?.position,
            s.truth,
        )?);
        reranked.push(positioning_error(
            estimate_position(&s.candidates, true)?.position,
            s.truth,
        )?);
        if let Some(id) = &s.outlier {
            planted += 1;
            let ranked = filter_by_mean(rerank(&s.candidates)?)?;
            let kept = ranked.iter().any(|r| &r.pano_id == id && r.kept);
            if !kept {
                rejected += 1;
            }
        }
    }
    Ok(OutlierReport {
        median_error_baseline: median(&baseline)?,
        median_error_reranked: median(&reranked)?,
        planted,
        rejected,
    })
}
