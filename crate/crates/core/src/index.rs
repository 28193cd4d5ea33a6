//! Searchable database over a clustering hierarchy.
//!
//! Granularity 0 is an exhaustive cosine scan. At granularity `g > 0` the
//! query is scored against every level-`g` cluster, the best `beam_width`
//! clusters are kept, their children are scored and pruned the same way,
//! and so on down to the panoramas, where the best `top_k` are returned.
//! Pruning is global per level: the children of all kept parents compete
//! for the same `beam_width` slots.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::aggregation::{cosine_with_norms, l2_norm, AggregationMode};
use crate::error::{Error, Result};
use crate::geocluster::{build_hierarchy, Hierarchy};
use crate::model::{Candidate, CandidateSet, GeoPoint, MemoryVector, PanoRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    pub top_k: usize,
    /// Clusters kept per level during descent.
    pub beam_width: usize,
    /// Level the descent starts from; 0 scans every panorama.
    pub granularity: usize,
}

impl SearchConfig {
    pub const DEFAULT_BEAM_WIDTH: usize = 5;

    pub fn new(top_k: usize, granularity: usize) -> Self {
        SearchConfig {
            top_k,
            beam_width: Self::DEFAULT_BEAM_WIDTH,
            granularity,
        }
    }

    pub fn with_beam(mut self, beam_width: usize) -> Self {
        self.beam_width = beam_width;
        self
    }
}

/// Work done by one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchStats {
    /// Cosine similarities computed.
    pub similarity_evaluations: u64,
    /// Clusters expanded plus panoramas scored.
    pub nodes_visited: u64,
}

/// Immutable search structure. Stored vectors, coordinates and parameters are
/// rounded to `f32` precision at build time, so a persisted index reloads exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    hierarchy: Hierarchy,
    pano_norms: Vec<f64>,
    level_norms: Vec<Vec<f64>>,
    by_id: BTreeMap<String, usize>,
    dim: usize,
}

fn quantize_point(p: GeoPoint) -> GeoPoint {
    GeoPoint::new(p.x as f32 as f64, p.y as f32 as f64)
}

/// Builds an index from validated panoramas.
pub fn build_index(
    panos: Vec<PanoRecord>,
    cluster_size: usize,
    granularity: usize,
    mode: AggregationMode,
) -> Result<Index> {
    Index::build(panos, cluster_size, granularity, mode)
}

impl Index {
    pub fn build(
        panos: Vec<PanoRecord>,
        cluster_size: usize,
        granularity: usize,
        mode: AggregationMode,
    ) -> Result<Index> {
        let panos = panos
            .into_iter()
            .map(|p| PanoRecord {
                location: quantize_point(p.location),
                memory: p.memory.quantized(),
                views: None,
                ..p
            })
            .collect();
        let mut hierarchy = build_hierarchy(panos, cluster_size, granularity, mode)?;
        for node in hierarchy.levels.iter_mut().flatten() {
            node.memory = node.memory.quantized();
            node.cluster.centroid = quantize_point(node.cluster.centroid);
        }
        hierarchy.mode.ridge_epsilon = f64::from(hierarchy.mode.ridge_epsilon as f32);
        Index::from_hierarchy(hierarchy)
    }

    /// Wraps an existing hierarchy after checking its structure. Memory
    /// vectors are used as given.
    pub fn from_hierarchy(hierarchy: Hierarchy) -> Result<Index> {
        let dim = crate::model::validate_dataset(&hierarchy.panos)?;
        if hierarchy.panos.windows(2).any(|w| w[0].id >= w[1].id) {
            return Err(Error::InvalidConfig(String::from("panoramas not sorted by id")));
        }
        let mut below = hierarchy.panos.len();
        let mut below_sizes: Vec<usize> = alloc::vec![1; below];
        for (l, level) in hierarchy.levels.iter().enumerate() {
            let mut parent_count = alloc::vec![0usize; below];
            let mut sizes = Vec::with_capacity(level.len());
            for node in level {
                node.memory.validate()?;
                if node.memory.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: node.memory.dim(),
                    });
                }
                let c = &node.cluster;
                if c.member_indices.is_empty() || c.member_indices.len() > hierarchy.cluster_size {
                    return Err(Error::InvalidConfig(format!("cluster {} violates the size cap", c.id)));
                }
                let mut size = 0;
                for &m in &c.member_indices {
                    if m >= below {
                        return Err(Error::InvalidConfig(format!(
                            "cluster {} references missing member",
                            c.id
                        )));
                    }
                    parent_count[m] += 1;
                    size += below_sizes[m];
                }
                if size != c.size {
                    return Err(Error::InvalidConfig(format!("cluster {} leaf count mismatch", c.id)));
                }
                sizes.push(size);
            }
            if parent_count.iter().any(|&p| p != 1) {
                return Err(Error::InvalidConfig(format!("level {} is not a partition", l + 1)));
            }
            below = level.len();
            below_sizes = sizes;
        }

        let pano_norms = hierarchy.panos.iter().map(|p| l2_norm(&p.memory.values)).collect();
        let level_norms = hierarchy
            .levels
            .iter()
            .map(|level| level.iter().map(|n| l2_norm(&n.memory.values)).collect())
            .collect();
        let by_id = hierarchy
            .panos
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.clone(), i))
            .collect();
        Ok(Index {
            hierarchy,
            pano_norms,
            level_norms,
            by_id,
            dim,
        })
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.hierarchy.panos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hierarchy.panos.is_empty()
    }

    pub fn granularity(&self) -> usize {
        self.hierarchy.granularity()
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.hierarchy.level_sizes()
    }

    pub fn records(&self) -> &[PanoRecord] {
        &self.hierarchy.panos
    }

    pub fn get(&self, id: &str) -> Option<&PanoRecord> {
        self.by_id.get(id).map(|&i| &self.hierarchy.panos[i])
    }

    fn check_query(&self, query: &MemoryVector) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        if query.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("query"));
        }
        let norm = l2_norm(&query.values);
        if norm == 0.0 {
            return Err(Error::ZeroVector("query"));
        }
        Ok(norm)
    }

    /// Exact top-k over every panorama.
    pub fn full_scan(&self, query: &MemoryVector, top_k: usize) -> Result<(CandidateSet, SearchStats)> {
        let qn = self.check_query(query)?;
        if top_k == 0 {
            return Err(Error::InvalidConfig(String::from("top_k must be at least 1")));
        }
        let mut stats = SearchStats::default();
        let all: Vec<usize> = (0..self.len()).collect();
        Ok((self.rank_panos(&query.values, qn, &all, top_k, &mut stats), stats))
    }

    /// Top-k by beam descent from `config.granularity`.
    pub fn search(&self, query: &MemoryVector, config: &SearchConfig) -> Result<(CandidateSet, SearchStats)> {
        let qn = self.check_query(query)?;
        if config.top_k == 0 || config.beam_width == 0 {
            return Err(Error::InvalidConfig(String::from(
                "top_k and beam_width must be at least 1",
            )));
        }
        if config.granularity > self.granularity() {
            return Err(Error::InvalidConfig(format!(
                "granularity {} exceeds index granularity {}",
                config.granularity,
                self.granularity()
            )));
        }
        let mut stats = SearchStats::default();
        let q = &query.values;
        let mut frontier: Vec<usize> = (0..self.level_size(config.granularity)).collect();
        for level in (1..=config.granularity).rev() {
            let nodes = &self.hierarchy.levels[level - 1];
            let norms = &self.level_norms[level - 1];
            let mut scored: Vec<(f64, usize)> = frontier
                .iter()
                .map(|&i| (cosine_with_norms(q, qn, &nodes[i].memory.values, norms[i]), i))
                .collect();
            stats.similarity_evaluations += scored.len() as u64;
            top_by_score(&mut scored, config.beam_width);
            stats.nodes_visited += scored.len() as u64;
            frontier = scored
                .iter()
                .flat_map(|&(_, i)| nodes[i].cluster.member_indices.iter().copied())
                .collect();
            frontier.sort_unstable();
        }
        Ok((self.rank_panos(q, qn, &frontier, config.top_k, &mut stats), stats))
    }

    fn level_size(&self, level: usize) -> usize {
        if level == 0 {
            self.len()
        } else {
            self.hierarchy.levels[level - 1].len()
        }
    }

    fn rank_panos(&self, q: &[f64], qn: f64, subset: &[usize], top_k: usize, stats: &mut SearchStats) -> CandidateSet {
        let panos = &self.hierarchy.panos;
        let mut scored: Vec<(f64, usize)> = subset
            .iter()
            .map(|&i| (cosine_with_norms(q, qn, &panos[i].memory.values, self.pano_norms[i]), i))
            .collect();
        stats.similarity_evaluations += scored.len() as u64;
        stats.nodes_visited += scored.len() as u64;
        top_by_score(&mut scored, top_k);
        CandidateSet {
            entries: scored
                .into_iter()
                .map(|(s, i)| Candidate {
                    pano_id: panos[i].id.clone(),
                    location: panos[i].location,
                    query_similarity: s,
                    memory: panos[i].memory.clone(),
                })
                .collect(),
        }
    }
}

/// Score descending, then position ascending. Positions follow id order,
/// so this is the id tie-break at every level.
fn by_score(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Keeps the best `k` entries, sorted.
fn top_by_score(scored: &mut Vec<(f64, usize)>, k: usize) {
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, by_score);
        scored.truncate(k);
    }
    scored.sort_unstable_by(by_score);
}
