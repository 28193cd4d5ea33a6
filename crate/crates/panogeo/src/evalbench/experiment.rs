use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use panogeo_core::aggregation::{aggregate_features, aggregate_panorama, AggregationMode};
use panogeo_core::geoposition::estimate_position;
use panogeo_core::index::{Index, SearchConfig, SearchStats};
use panogeo_core::model::{AggregationKind, CandidateSet, Direction, GeoPoint, MemoryVector, PanoRecord, Views};

use super::metrics::{median, positioning_error, recall_at_n, DEFAULT_RADIUS};
use super::synth::SynthQuery;
use crate::error::{Error, Result};

/// Recall cut-offs always reported.
pub const RECALL_NS: [usize; 5] = [1, 5, 10, 15, 20];

/// One index configuration: cluster size, granularity, beam and aggregation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexConfig {
    pub cluster_size: usize,
    pub granularity: usize,
    pub beam_width: usize,
    pub mode: AggregationMode,
}

impl IndexConfig {
    pub fn new(cluster_size: usize, granularity: usize, beam_width: usize) -> Self {
        IndexConfig {
            cluster_size,
            granularity,
            beam_width,
            mode: AggregationMode::pinv(),
        }
    }
}

impl fmt::Display for IndexConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}",
            self.cluster_size,
            self.granularity,
            self.beam_width,
            self.mode.kind.as_str()
        )
    }
}

/// Parses `N:M:beam` or `N:M:beam:mode`.
impl FromStr for IndexConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("index config {s:?} is not N:M:beam[:mode]"));
        let parts: Vec<&str> = s.split(':').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(bad());
        }
        let num = |p: &str| p.trim().parse::<usize>().map_err(|_| bad());
        let mode = match parts.get(3) {
            Some(m) => AggregationMode::of_kind(m.trim().parse::<AggregationKind>()?),
            None => AggregationMode::pinv(),
        };
        Ok(IndexConfig {
            cluster_size: num(parts[0])?,
            granularity: num(parts[1])?,
            beam_width: num(parts[2])?,
            mode,
        })
    }
}

/// How a query panorama is turned into a search vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryMode {
    /// All four views aggregated.
    Pan2Pan,
    /// A single planar view.
    Im2Pan(Direction),
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryMode::Pan2Pan => f.write_str("pan2pan"),
            QueryMode::Im2Pan(d) => write!(f, "im2pan-{}", d.as_str()),
        }
    }
}

/// A query panorama with known position.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalQuery {
    pub id: String,
    pub truth: GeoPoint,
    pub views: Views,
}

impl From<SynthQuery> for EvalQuery {
    fn from(q: SynthQuery) -> Self {
        EvalQuery {
            id: q.id,
            truth: q.truth,
            views: q.views,
        }
    }
}

/// Search vector for a query under `mode`.
pub fn query_memory(views: &Views, query_mode: QueryMode, mode: &AggregationMode) -> Result<MemoryVector> {
    Ok(match query_mode {
        QueryMode::Pan2Pan => aggregate_panorama(views.as_slice(), mode)?,
        QueryMode::Im2Pan(d) => aggregate_features(std::slice::from_ref(views.get(d)), mode)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    /// Candidate counts used for position estimation.
    pub top_ks: Vec<usize>,
    pub radius: f64,
    pub query_mode: QueryMode,
    /// Also report the median error after re-ranking.
    pub rerank: bool,
    /// Worker threads; 0 picks the available parallelism.
    pub threads: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            top_ks: vec![5],
            radius: DEFAULT_RADIUS,
            query_mode: QueryMode::Pan2Pan,
            rerank: true,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub config: IndexConfig,
    pub top_k: usize,
    pub query_mode: QueryMode,
    pub query_count: usize,
    pub recall_at: BTreeMap<usize, f64>,
    pub median_error_baseline: f64,
    pub median_error_reranked: Option<f64>,
    pub mean_similarity_evaluations: f64,
    pub mean_nodes_visited: f64,
    /// Mean search time per query.
    pub wall_time: Duration,
}

impl EvalReport {
    /// The report with its timing zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> EvalReport {
        EvalReport {
            wall_time: Duration::ZERO,
            ..self.clone()
        }
    }
}

/// Answers of one index configuration for every query.
#[derive(Debug, Clone)]
pub struct QueryRun {
    pub results: Vec<CandidateSet>,
    pub stats: Vec<SearchStats>,
    pub elapsed: Vec<Duration>,
}

/// Position estimate from the first `k` candidates. Only candidates with
/// positive similarity carry mass; if there are none, the best candidate's
/// location is returned.
pub fn estimate_from_candidates(set: &CandidateSet, k: usize, use_rerank: bool) -> Result<GeoPoint> {
    let positive = set
        .entries
        .iter()
        .take(k)
        .take_while(|c| c.query_similarity > 0.0)
        .count();
    if positive == 0 {
        return set
            .entries
            .first()
            .map(|c| c.location)
            .ok_or_else(|| panogeo_core::Error::EmptyInput("candidates").into());
    }
    Ok(estimate_position(&set.truncated(positive), use_rerank)?.position)
}

/// Database records with memory vectors in the construction `mode` asks
/// for, re-aggregated from views where needed.
pub fn prepare_database(database: &[PanoRecord], mode: &AggregationMode) -> Result<Vec<PanoRecord>> {
    database
        .iter()
        .map(|r| {
            if r.memory.kind == mode.kind {
                return Ok(r.clone());
            }
            let views = r.views.as_ref().ok_or(panogeo_core::Error::MixedModes)?;
            Ok(PanoRecord {
                memory: aggregate_panorama(views.as_slice(), mode)?,
                ..r.clone()
            })
        })
        .collect()
}

/// Runs every query against `index`, possibly on several threads. Output
/// order follows `queries`.
pub fn run_queries(
    index: &Index,
    queries: &[EvalQuery],
    search: &SearchConfig,
    query_mode: QueryMode,
    threads: usize,
) -> Result<QueryRun> {
    let mode = index.hierarchy().mode;
    let answer = |q: &EvalQuery| -> Result<(CandidateSet, SearchStats, Duration)> {
        let memory = query_memory(&q.views, query_mode, &mode)?;
        let start = Instant::now();
        let (set, stats) = index.search(&memory, search)?;
        Ok((set, stats, start.elapsed()))
    };
    let workers = match threads {
        0 => thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        t => t,
    }
    .clamp(1, queries.len().max(1));
    let chunk = queries.len().div_ceil(workers).max(1);
    let outcomes: Vec<Result<Vec<_>>> = thread::scope(|scope| {
        let handles: Vec<_> = queries
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(answer).collect::<Result<Vec<_>>>()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("query worker panicked"))
            .collect()
    });
    let mut run = QueryRun {
        results: Vec::with_capacity(queries.len()),
        stats: Vec::with_capacity(queries.len()),
        elapsed: Vec::with_capacity(queries.len()),
    };
    for part in outcomes {
        for (set, stats, elapsed) in part? {
            run.results.push(set);
            run.stats.push(stats);
            run.elapsed.push(elapsed);
        }
    }
    Ok(run)
}

/// Builds an index per configuration, answers every query and summarizes
/// recall, positioning error and search cost. One report is produced per
/// configuration and `top_k`.
pub fn run_experiment(
    database: &[PanoRecord],
    queries: &[EvalQuery],
    configs: &[IndexConfig],
    options: &ExperimentOptions,
) -> Result<Vec<EvalReport>> {
    if queries.is_empty() {
        return Err(panogeo_core::Error::EmptyInput("queries").into());
    }
    if options.top_ks.is_empty() || options.top_ks.contains(&0) {
        return Err(Error::InvalidConfig("top_k values must be positive".into()));
    }
    if !(options.radius.is_finite() && options.radius >= 0.0) {
        return Err(Error::InvalidConfig("radius must be non-negative".into()));
    }
    let retrieve = RECALL_NS
        .iter()
        .chain(&options.top_ks)
        .copied()
        .max()
        .expect("non-empty");
    let truths: Vec<GeoPoint> = queries.iter().map(|q| q.truth).collect();

    let mut reports = Vec::new();
    for config in configs {
        let records = prepare_database(database, &config.mode)?;
        let index = Index::build(records, config.cluster_size, config.granularity, config.mode)?;
        let search = SearchConfig::new(retrieve, config.granularity).with_beam(config.beam_width);
        let run = run_queries(&index, queries, &search, options.query_mode, options.threads)?;

        let mut recall_at = BTreeMap::new();
        for n in RECALL_NS {
            recall_at.insert(n, recall_at_n(&run.results, &truths, n, options.radius)?);
        }
        let count = queries.len() as f64;
        let mean_evals = run.stats.iter().map(|s| s.similarity_evaluations as f64).sum::<f64>() / count;
        let mean_nodes = run.stats.iter().map(|s| s.nodes_visited as f64).sum::<f64>() / count;
        let wall_time = run.elapsed.iter().sum::<Duration>() / queries.len() as u32;

        for &k in &options.top_ks {
            let errors = |rerank: bool| -> Result<Vec<f64>> {
                run.results
                    .iter()
                    .zip(&truths)
                    .map(|(set, truth)| positioning_error(estimate_from_candidates(set, k, rerank)?, *truth))
                    .collect()
            };
            let baseline = median(&errors(false)?)?;
            let reranked = if options.rerank {
                Some(median(&errors(true)?)?)
            } else {
                None
            };
            reports.push(EvalReport {
                config: *config,
                top_k: k,
                query_mode: options.query_mode,
                query_count: queries.len(),
                recall_at: recall_at.clone(),
                median_error_baseline: baseline,
                median_error_reranked: reranked,
                mean_similarity_evaluations: mean_evals,
                mean_nodes_visited: mean_nodes,
                wall_time,
            });
        }
    }
    Ok(reports)
}
