//! Position estimation from a ranked candidate set.
//!
//! Each candidate gets a rank score: the sum over every other candidate of
//! their cross-similarity divided by their planar distance,
//!
//! ```text
//! r_i = Σ_{j≠i} max(cos(m_i, m_j), 0) / max(‖c_i − c_j‖, 1 m)
//! ```
//!
//! Candidates scoring below the mean are rejected and the estimate is the
//! center of gravity of the survivors, weighted by their original query
//! similarity. A candidate that resembles the query but neither resembles
//! nor lies near the other matches therefore drops out.

use alloc::string::String;
use alloc::vec::Vec;

use crate::aggregation::{cosine_with_norms, l2_norm};
use crate::error::{Error, Result};
use crate::model::{CandidateSet, GeoPoint};

/// Floor on pair distances, in meters. Coincident candidates would
/// otherwise divide by zero.
pub const MIN_PAIR_DISTANCE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidate {
    pub pano_id: String,
    pub location: GeoPoint,
    pub query_similarity: f64,
    /// Accumulated similarity per meter to the other candidates.
    pub rank_score: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoEstimate {
    pub position: GeoPoint,
    pub contributors: Vec<String>,
    pub total_mass: f64,
}

/// Rank scores from locations and a row-major `n × n` pairwise similarity
/// matrix. Terms are accumulated in index order.
pub fn rank_scores(locations: &[GeoPoint], similarity: &[f64]) -> Vec<f64> {
    let order: Vec<usize> = (0..locations.len()).collect();
    rank_scores_ordered(locations, similarity, &order)
}

fn rank_scores_ordered(locations: &[GeoPoint], similarity: &[f64], order: &[usize]) -> Vec<f64> {
    let n = locations.len();
    assert_eq!(similarity.len(), n * n, "similarity matrix must be n x n");
    (0..n)
        .map(|i| {
            order
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| {
                    let s = similarity[i * n + j].max(0.0);
                    let d = locations[i].distance(&locations[j]).max(MIN_PAIR_DISTANCE);
                    s / d
                })
                .sum()
        })
        .collect()
}

/// Scores every candidate against the others. Output keeps input order,
/// with every candidate marked kept.
pub fn rerank(candidates: &CandidateSet) -> Result<Vec<RankedCandidate>> {
    let entries = &candidates.entries;
    let n = entries.len();
    if n < 2 {
        return Err(Error::TooFewCandidates(n));
    }
    let dim = entries[0].memory.dim();
    let mut norms = Vec::with_capacity(n);
    for c in entries {
        if c.memory.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: c.memory.dim(),
            });
        }
        let norm = l2_norm(&c.memory.values);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::ZeroVector("candidate memory"));
        }
        norms.push(norm);
    }

    let mut sim = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let s = cosine_with_norms(&entries[i].memory.values, norms[i], &entries[j].memory.values, norms[j]);
            sim[i * n + j] = s;
            sim[j * n + i] = s;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| entries[a].pano_id.cmp(&entries[b].pano_id));
    let locations: Vec<GeoPoint> = entries.iter().map(|c| c.location).collect();
    let scores = rank_scores_ordered(&locations, &sim, &order);

    Ok(entries
        .iter()
        .zip(scores)
        .map(|(c, r)| RankedCandidate {
            pano_id: c.pano_id.clone(),
            location: c.location,
            query_similarity: c.query_similarity,
            rank_score: r,
            kept: true,
        })
        .collect())
}

/// Marks candidates whose rank score is below the mean as rejected.
///
/// The threshold never exceeds the largest score, so at least one
/// candidate survives even when rounding pushes the mean above equal
/// scores.
pub fn filter_by_mean(mut ranked: Vec<RankedCandidate>) -> Result<Vec<RankedCandidate>> {
    if ranked.is_empty() {
        return Err(Error::EmptyInput("filter_by_mean"));
    }
    let n = ranked.len() as f64;
    let mean = ranked.iter().map(|r| r.rank_score).sum::<f64>() / n;
    let max = ranked.iter().map(|r| r.rank_score).fold(f64::NEG_INFINITY, f64::max);
    let threshold = mean.min(max);
    for r in &mut ranked {
        r.kept = r.rank_score >= threshold;
    }
    Ok(ranked)
}

/// Similarity-weighted mean of the given candidates' locations.
pub fn center_of_gravity(kept: &[RankedCandidate]) -> Result<GeoEstimate> {
    if kept.is_empty() {
        return Err(Error::EmptyInput("center_of_gravity"));
    }
    if let Some(bad) = kept
        .iter()
        .find(|c| c.query_similarity.is_nan() || c.query_similarity <= 0.0)
    {
        return Err(Error::NonPositiveMass(bad.pano_id.clone()));
    }
    let (mut sx, mut sy, mut mass) = (0.0, 0.0, 0.0);
    for c in kept {
        sx += c.query_similarity * c.location.x;
        sy += c.query_similarity * c.location.y;
        mass += c.query_similarity;
    }
    Ok(GeoEstimate {
        position: GeoPoint::new(sx / mass, sy / mass),
        contributors: kept.iter().map(|c| c.pano_id.clone()).collect(),
        total_mass: mass,
    })
}

/// Estimates the query position. Without re-ranking this is the
/// similarity-weighted center of all candidates; with it, one
/// rerank/filter pass precedes the weighting. Single-candidate sets skip
/// re-ranking.
pub fn estimate_position(candidates: &CandidateSet, use_rerank: bool) -> Result<GeoEstimate> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("estimate_position"));
    }
    if use_rerank && candidates.len() >= 2 {
        let ranked = filter_by_mean(rerank(candidates)?)?;
        let survivors: Vec<RankedCandidate> = ranked.into_iter().filter(|r| r.kept).collect();
        center_of_gravity(&survivors)
    } else {
        let all: Vec<RankedCandidate> = candidates
            .entries
            .iter()
            .map(|c| RankedCandidate {
                pano_id: c.pano_id.clone(),
                location: c.location,
                query_similarity: c.query_similarity,
                rank_score: 0.0,
                kept: true,
            })
            .collect();
        center_of_gravity(&all)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AggregationKind, Candidate, MemoryVector};
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;

    fn mem(values: Vec<f64>) -> MemoryVector {
        MemoryVector {
            values,
            kind: AggregationKind::PInv,
            member_count: 4,
            regularized: false,
        }
    }

    /// Rows of the Cholesky factor of a Gram matrix: vectors whose pairwise
    /// inner products reproduce it.
    fn vectors_with_gram(g: &[f64], n: usize) -> Vec<Vec<f64>> {
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = g[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
                l[i * n + j] = if i == j { s.sqrt() } else { s / l[j * n + j] };
            }
        }
        (0..n).map(|i| l[i * n..(i + 1) * n].to_vec()).collect()
    }

    fn abc_set() -> CandidateSet {
        let g = [1.0, 0.9, 0.2, 0.9, 1.0, 0.2, 0.2, 0.2, 1.0];
        let v = vectors_with_gram(&g, 3);
        let mk = |id: &str, x: f64, s: f64, m: &Vec<f64>| Candidate {
            pano_id: id.into(),
            location: GeoPoint::new(x, 0.0),
            query_similarity: s,
            memory: mem(m.clone()),
        };
        CandidateSet::from_unsorted(vec![
            mk("A", 0.0, 0.9, &v[0]),
            mk("B", 10.0, 0.8, &v[1]),
            mk("C", 200.0, 0.85, &v[2]),
        ])
        .unwrap()
    }

    fn ranked(id: &str, x: f64, y: f64, s: f64, r: f64) -> RankedCandidate {
        RankedCandidate {
            pano_id: id.into(),
            location: GeoPoint::new(x, y),
            query_similarity: s,
            rank_score: r,
            kept: true,
        }
    }

    #[test]
    fn worked_example_from_matrix() {
        let locs = [
            GeoPoint::new(0.0, 0.0),
            GeoPoint::new(10.0, 0.0),
            GeoPoint::new(200.0, 0.0),
        ];
        let sim = [1.0, 0.9, 0.2, 0.9, 1.0, 0.2, 0.2, 0.2, 1.0];
        let r = rank_scores(&locs, &sim);
        assert!((r[0] - (0.9 / 10.0 + 0.2 / 200.0)).abs() < 1e-15);
        assert!((r[0] - 0.091).abs() < 1e-12);
        assert!((r[1] - 0.0910526315789).abs() < 1e-12);
        assert!((r[2] - 0.0020526315789).abs() < 1e-12);
    }

    #[test]
    fn worked_example_end_to_end() {
        let set = abc_set();
        let ranks = rerank(&set).unwrap();
        let by_id = |id: &str| ranks.iter().find(|r| r.pano_id == id).unwrap().rank_score;
        assert!((by_id("A") - 0.091).abs() < 1e-9);
        assert!((by_id("B") - (0.9 / 10.0 + 0.2 / 190.0)).abs() < 1e-9);
        assert!((by_id("C") - (0.2 / 200.0 + 0.2 / 190.0)).abs() < 1e-9);

        let filtered = filter_by_mean(ranks).unwrap();
        let kept: Vec<&str> = filtered.iter().filter(|r| r.kept).map(|r| r.pano_id.as_str()).collect();
        assert_eq!(kept, ["A", "B"]);

        let est = estimate_position(&set, true).unwrap();
        assert!((est.position.x - 8.0 / 1.7).abs() < 1e-9 && est.position.y == 0.0);
        assert_eq!(est.contributors, ["A", "B"]);
        let base = estimate_position(&set, false).unwrap();
        assert!((base.position.x - 178.0 / 2.55).abs() < 1e-9);
        assert!((base.total_mass - 2.55).abs() < 1e-12);
    }

    #[test]
    fn two_candidates_are_symmetric() {
        let set = CandidateSet::from_unsorted(vec![
            Candidate {
                pano_id: "a".into(),
                location: GeoPoint::new(1.0, 2.0),
                query_similarity: 0.7,
                memory: mem(vec![1.0, 0.3, -0.2]),
            },
            Candidate {
                pano_id: "b".into(),
                location: GeoPoint::new(-4.0, 9.5),
                query_similarity: 0.6,
                memory: mem(vec![0.1, 0.9, 0.4]),
            },
        ])
        .unwrap();
        let r = rerank(&set).unwrap();
        assert_eq!(r[0].rank_score, r[1].rank_score);
    }

    #[test]
    fn coincident_candidates_use_distance_floor() {
        let locs = [GeoPoint::new(3.0, 3.0), GeoPoint::new(3.0, 3.0)];
        assert_eq!(rank_scores(&locs, &[1.0, 1.0, 1.0, 1.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn negative_similarity_clamped() {
        let locs = [GeoPoint::new(0.0, 0.0), GeoPoint::new(5.0, 0.0)];
        assert_eq!(rank_scores(&locs, &[1.0, -0.5, -0.5, 1.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn filter_examples() {
        // 0.1 * 3 / 3 rounds above 0.1
        let eq = vec![
            ranked("a", 0.0, 0.0, 1.0, 0.1),
            ranked("b", 0.0, 0.0, 1.0, 0.1),
            ranked("c", 0.0, 0.0, 1.0, 0.1),
        ];
        assert!(filter_by_mean(eq).unwrap().iter().all(|r| r.kept));

        let abc = vec![
            ranked("A", 0.0, 0.0, 0.9, 0.091),
            ranked("B", 10.0, 0.0, 0.8, 0.0910526),
            ranked("C", 200.0, 0.0, 0.85, 0.0020526),
        ];
        let mean: f64 = (0.091 + 0.0910526 + 0.0020526) / 3.0;
        assert!((mean - 0.0613684).abs() < 1e-7);
        let kept: Vec<bool> = filter_by_mean(abc).unwrap().iter().map(|r| r.kept).collect();
        assert_eq!(kept, [true, true, false]);

        assert!(filter_by_mean(vec![ranked("x", 0.0, 0.0, 1.0, 5.0)]).unwrap()[0].kept);
        assert_eq!(filter_by_mean(vec![]).unwrap_err().name(), "EmptyInput");
    }

    #[test]
    fn gravity_examples() {
        let e = center_of_gravity(&[ranked("a", 4.0, 2.0, 0.7, 0.0)]).unwrap();
        assert_eq!(e.position, GeoPoint::new(4.0, 2.0));
        let e = center_of_gravity(&[ranked("A", 0.0, 0.0, 0.9, 0.0), ranked("B", 10.0, 0.0, 0.8, 0.0)]).unwrap();
        assert!((e.position.x - 4.70588235294).abs() < 1e-10);
        let square = [
            ranked("a", 0.0, 0.0, 0.5, 0.0),
            ranked("b", 8.0, 0.0, 0.5, 0.0),
            ranked("c", 8.0, 8.0, 0.5, 0.0),
            ranked("d", 0.0, 8.0, 0.5, 0.0),
        ];
        assert_eq!(center_of_gravity(&square).unwrap().position, GeoPoint::new(4.0, 4.0));
        assert_eq!(center_of_gravity(&[]).unwrap_err().name(), "EmptyInput");
        assert_eq!(
            center_of_gravity(&[ranked("z", 0.0, 0.0, 0.0, 0.0)]).unwrap_err(),
            Error::NonPositiveMass("z".into())
        );
    }

    #[test]
    fn estimate_edge_cases() {
        let single = abc_set().truncated(1);
        for rerank in [false, true] {
            assert_eq!(
                estimate_position(&single, rerank).unwrap().position,
                GeoPoint::new(0.0, 0.0)
            );
        }
        assert_eq!(
            estimate_position(&CandidateSet::default(), true).unwrap_err().name(),
            "EmptyInput"
        );
        assert_eq!(rerank(&single).unwrap_err(), Error::TooFewCandidates(1));
    }

    fn in_hull(p: GeoPoint, pts: &[GeoPoint]) -> bool {
        let mut pts: Vec<(f64, f64)> = pts.iter().map(|q| (q.x, q.y)).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        let scale = pts
            .iter()
            .fold(1.0f64, |m: f64, q: &(f64, f64)| m.max(q.0.abs()).max(q.1.abs()));
        let tol = 1e-9 * scale * scale;
        if pts.len() == 1 {
            return (p.x - pts[0].0).abs() <= 1e-9 * scale && (p.y - pts[0].1).abs() <= 1e-9 * scale;
        }
        let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
        let mut hull: Vec<(f64, f64)> = Vec::new();
        for pass in 0..2 {
            let start = hull.len();
            let iter: Vec<(f64, f64)> = if pass == 0 {
                pts.clone()
            } else {
                pts.iter().rev().copied().collect()
            };
            for q in iter {
                while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                    hull.pop();
                }
                hull.push(q);
            }
            hull.pop();
        }
        let q = (p.x, p.y);
        if hull.len() < 3 {
            // degenerate: collinear set, check segment membership
            let (a, b) = (pts[0], pts[pts.len() - 1]);
            let within = q.0 >= a.0.min(b.0) - 1e-9 * scale && q.0 <= a.0.max(b.0) + 1e-9 * scale;
            return within && cross(a, b, q).abs() <= tol * 10.0;
        }
        (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], q) >= -tol)
    }

    fn arb_set() -> impl Strategy<Value = CandidateSet> {
        proptest::collection::vec(
            (
                (-1000.0f64..1000.0, -1000.0f64..1000.0),
                0.05f64..1.0,
                proptest::collection::vec(-1.0f64..1.0, 6),
            ),
            1..9,
        )
        .prop_filter("non-zero memories", |v| {
            v.iter().all(|(_, _, m)| m.iter().any(|x| x.abs() > 1e-3))
        })
        .prop_map(|v| {
            let entries = v
                .into_iter()
                .enumerate()
                .map(|(i, ((x, y), s, m))| Candidate {
                    pano_id: format!("c{i}"),
                    location: GeoPoint::new(x, y),
                    query_similarity: s,
                    memory: mem(m),
                })
                .collect();
            CandidateSet::from_unsorted(entries).unwrap()
        })
    }

    proptest! {
        #[test]
        fn survivors_never_empty_and_estimate_in_hull(set in arb_set(), rerank_on in any::<bool>()) {
            let est = estimate_position(&set, rerank_on).unwrap();
            prop_assert!(!est.contributors.is_empty());
            let locs: Vec<GeoPoint> = set.entries.iter().filter(|c| est.contributors.contains(&c.pano_id)).map(|c| c.location).collect();
            prop_assert!(in_hull(est.position, &locs), "{:?} outside {:?}", est.position, locs);
        }

        #[test]
        fn translation_equivariance(set in arb_set(), dx in -1e4f64..1e4, dy in -1e4f64..1e4, rerank_on in any::<bool>()) {
            let a = estimate_position(&set, rerank_on).unwrap();
            let mut moved = set.clone();
            for c in &mut moved.entries {
                c.location = c.location.translate(dx, dy);
            }
            let b = estimate_position(&moved, rerank_on).unwrap();
            prop_assert_eq!(&a.contributors, &b.contributors);
            prop_assert!((b.position.x - (a.position.x + dx)).abs() < 1e-6);
            prop_assert!((b.position.y - (a.position.y + dy)).abs() < 1e-6);
        }

        /// k mutually similar, mutually near candidates with equal mass plus
        /// one far, dissimilar candidate with at least the same mass.
        #[test]
        fn planted_outlier_rejected(
            k in 3usize..=8,
            center in (-500.0f64..500.0, -500.0f64..500.0),
            radius in 0.2f64..20.0,
            offsets in proptest::collection::vec((0.0f64..1.0, 0.0f64..core::f64::consts::TAU), 8),
            intra in proptest::collection::vec(0.5f64..1.0, 36),
            cross_frac in proptest::collection::vec(0.0f64..=1.0, 8),
            far_factor in 10.0f64..100.0,
            far_angle in 0.0f64..core::f64::consts::TAU,
            group_mass in 0.2f64..1.0,
            outlier_boost in 1.0f64..3.0,
        ) {
            let mut locs: Vec<GeoPoint> = offsets[..k]
                .iter()
                .map(|&(r, a)| GeoPoint::new(center.0 + radius * r * libm::cos(a), center.1 + radius * r * libm::sin(a)))
                .collect();
            let mut spread: f64 = 0.0;
            for i in 0..k {
                for j in 0..k {
                    spread = spread.max(locs[i].distance(&locs[j]));
                }
            }
            let g = crate::geocluster::centroid(&locs).unwrap();
            // far from every group member, not only from the centroid
            let far = (far_factor * spread.max(1e-3)) + spread;
            let outlier = GeoPoint::new(g.x + far * libm::cos(far_angle), g.y + far * libm::sin(far_angle));
            locs.push(outlier);

            let n = k + 1;
            let mut sim = vec![1.0; n * n];
            let mut t = 0;
            let mut min_intra: f64 = 1.0;
            for i in 0..k {
                for j in 0..i {
                    sim[i * n + j] = intra[t];
                    sim[j * n + i] = intra[t];
                    min_intra = min_intra.min(intra[t]);
                    t += 1;
                }
            }
            for i in 0..k {
                let c = cross_frac[i] * min_intra / 2.0;
                sim[i * n + k] = c;
                sim[k * n + i] = c;
            }
            let scores = rank_scores(&locs, &sim);
            let cands: Vec<RankedCandidate> = (0..n)
                .map(|i| {
                    let mass = if i == k { group_mass * outlier_boost } else { group_mass };
                    ranked(&format!("p{i}"), locs[i].x, locs[i].y, mass.min(1.0), scores[i])
                })
                .collect();
            let filtered = filter_by_mean(cands.clone()).unwrap();
            prop_assert!(!filtered[k].kept);
            let survivors: Vec<RankedCandidate> = filtered.into_iter().filter(|c| c.kept).collect();
            let reranked = center_of_gravity(&survivors).unwrap().position.distance(&g);
            let baseline = center_of_gravity(&cands).unwrap().position.distance(&g);
            prop_assert!(reranked <= baseline, "reranked {reranked} > baseline {baseline}");
        }
    }
}
