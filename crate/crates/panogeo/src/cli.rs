//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit status.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use panogeo_core::aggregation::AggregationMode;
use panogeo_core::geoposition::estimate_position;
use panogeo_core::index::{Index, SearchConfig};
use panogeo_core::model::{AggregationKind, Direction, MemoryVector, PanoRecord};

use crate::error::{Error, Result};
use crate::evalbench::experiment::{query_memory, QueryMode};
use crate::evalbench::{
    report, run_experiment, synth_dataset, EvalQuery, ExperimentOptions, IndexConfig, QueryPlacement, SynthConfig,
};
use crate::features::{read_features, sidecar_path, write_features};
use crate::index_file::{load_index, save_index};

#[derive(Debug, Parser)]
#[command(name = "panogeo", version, about = "Panorama retrieval and geopositioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic database and query set.
    Synth {
        #[command(flatten)]
        synth: SynthArgs,
        /// Output directory for database.{mvec,csv} and queries.{mvec,csv}.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Build an index file from descriptors.
    Build {
        #[arg(long)]
        features: PathBuf,
        /// Metadata sidecar; defaults to the feature path with a .csv extension.
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long, default_value = "pinv", value_parser = parse_kind)]
        mode: AggregationKind,
        #[arg(long, default_value_t = 4)]
        cluster_size: usize,
        #[arg(long, default_value_t = 1)]
        granularity: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrieve the best matching panoramas for each query.
    Query {
        #[command(flatten)]
        q: QueryArgs,
    },
    /// Estimate the position of each query.
    Estimate {
        #[command(flatten)]
        q: QueryArgs,
        /// Skip the re-ranking filter.
        #[arg(long)]
        no_rerank: bool,
    },
    /// Run a retrieval experiment and write a CSV report.
    Evaluate {
        /// Comma-separated N:M:beam[:mode] entries.
        #[arg(long, value_delimiter = ',', required = true)]
        index_configs: Vec<String>,
        #[arg(long, default_value_t = 25.0)]
        radius: f64,
        #[arg(long)]
        report: PathBuf,
        /// Candidate counts used for position estimates.
        #[arg(long, value_delimiter = ',', default_value = "5")]
        top_k: Vec<usize>,
        #[arg(long, value_parser = parse_direction)]
        im2pan_view: Option<Direction>,
        #[arg(long)]
        no_rerank: bool,
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Database descriptors; synthetic data is generated when absent.
        #[arg(long, requires = "query_features")]
        features: Option<PathBuf>,
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long, requires = "features")]
        query_features: Option<PathBuf>,
        #[arg(long)]
        query_meta: Option<PathBuf>,
        #[command(flatten)]
        synth: SynthArgs,
    },
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = SynthConfig::DEFAULT_SPACING)]
    spacing: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Anchor vectors in the feature field; defaults to one per four panoramas.
    #[arg(long)]
    anchors: Option<usize>,
    #[arg(long, default_value_t = SynthConfig::DEFAULT_NOISE_SIGMA)]
    view_noise: f64,
    #[arg(long, default_value_t = SynthConfig::DEFAULT_NOISE_SIGMA)]
    query_noise: f64,
    /// Number of queries; defaults to min(count, 200).
    #[arg(long)]
    queries: Option<usize>,
    /// Place queries up to one spacing away from database panoramas.
    #[arg(long)]
    offset_queries: bool,
    #[arg(long = "synth-mode", default_value = "pinv", value_parser = parse_kind)]
    synth_mode: AggregationKind,
}

impl SynthArgs {
    fn config(&self) -> SynthConfig {
        let mut c = SynthConfig::new(self.count, self.dim, self.seed);
        c.street_spacing = self.spacing;
        if let Some(a) = self.anchors {
            c.anchor_count = a;
        }
        c.view_noise_sigma = self.view_noise;
        c.query_noise_sigma = self.query_noise;
        if let Some(q) = self.queries {
            c.query_count = q;
        }
        if self.offset_queries {
            c.placement = QueryPlacement::Offset;
        }
        c
    }
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    query_features: PathBuf,
    /// Query sidecar; defaults to the feature path with a .csv extension.
    #[arg(long)]
    query_meta: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long, default_value_t = SearchConfig::DEFAULT_BEAM_WIDTH)]
    beam: usize,
    /// Starting level; defaults to the deepest level in the index.
    #[arg(long)]
    granularity: Option<usize>,
    #[arg(long, value_parser = parse_direction)]
    im2pan_view: Option<Direction>,
}

fn parse_kind(s: &str) -> std::result::Result<AggregationKind, String> {
    s.parse().map_err(|e: panogeo_core::Error| e.to_string())
}

fn parse_direction(s: &str) -> std::result::Result<Direction, String> {
    s.parse().map_err(|e: panogeo_core::Error| e.to_string())
}

/// Runs the CLI with `args` (including the program name). Normal output
/// goes to `out`, diagnostics to `err`. Returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let msg = e.to_string();
                    let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
                    let _ = writeln!(err, "error: UsageError: {first}");
                    1
                }
            };
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {}", e.name(), e);
            e.exit_code()
        }
    }
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::Synth { synth, out_dir } => cmd_synth(&synth, &out_dir, out),
        Command::Build {
            features,
            meta,
            mode,
            cluster_size,
            granularity,
            out: dest,
        } => {
            let mode = AggregationMode::of_kind(mode);
            let meta = meta.unwrap_or_else(|| sidecar_path(&features));
            let records = read_features(&features, &meta, &mode)?;
            let index = Index::build(records, cluster_size, granularity, mode)?;
            save_index(&index, &dest)?;
            let sizes: Vec<String> = index.level_sizes().iter().map(usize::to_string).collect();
            writeln!(
                out,
                "indexed {} panoramas, level sizes {}",
                index.len(),
                sizes.join("/")
            )?;
            Ok(())
        }
        Command::Query { q } => cmd_query(&q, out, err),
        Command::Estimate { q, no_rerank } => cmd_estimate(&q, !no_rerank, out),
        Command::Evaluate {
            index_configs,
            radius,
            report: dest,
            top_k,
            im2pan_view,
            no_rerank,
            threads,
            features,
            meta,
            query_features,
            query_meta,
            synth,
        } => {
            let configs = index_configs
                .iter()
                .map(|s| s.parse::<IndexConfig>())
                .collect::<Result<Vec<_>>>()?;
            let (database, queries) = match (features, query_features) {
                (Some(f), Some(qf)) => {
                    let mode = AggregationMode::pinv();
                    let meta = meta.unwrap_or_else(|| sidecar_path(&f));
                    let qmeta = query_meta.unwrap_or_else(|| sidecar_path(&qf));
                    let database = read_features(&f, &meta, &mode)?;
                    let queries = read_features(&qf, &qmeta, &mode)?
                        .into_iter()
                        .map(|r| {
                            let views = r.views.ok_or_else(|| Error::MissingView {
                                id: r.id.clone(),
                                view: "N".into(),
                            })?;
                            Ok(EvalQuery {
                                id: r.id,
                                truth: r.location,
                                views,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    (database, queries)
                }
                _ => {
                    let data = synth_dataset(&synth.config(), &AggregationMode::of_kind(synth.synth_mode))?;
                    (data.database, data.queries.into_iter().map(EvalQuery::from).collect())
                }
            };
            let options = ExperimentOptions {
                top_ks: top_k,
                radius,
                query_mode: im2pan_view.map_or(QueryMode::Pan2Pan, QueryMode::Im2Pan),
                rerank: !no_rerank,
                threads,
            };
            let reports = run_experiment(&database, &queries, &configs, &options)?;
            report::write_csv(BufWriter::new(File::create(&dest)?), &reports)?;
            write!(out, "{}", report::format_table(&reports))?;
            Ok(())
        }
    }
}

fn cmd_synth(args: &SynthArgs, out_dir: &Path, out: &mut dyn Write) -> Result<()> {
    let mode = AggregationMode::of_kind(args.synth_mode);
    let data = synth_dataset(&args.config(), &mode)?;
    fs::create_dir_all(out_dir)?;
    write_features(
        &data.database,
        &out_dir.join("database.mvec"),
        &out_dir.join("database.csv"),
    )?;
    let queries = data
        .queries
        .iter()
        .map(|q| {
            Ok(PanoRecord {
                id: q.id.clone(),
                location: q.truth,
                memory: query_memory(&q.views, QueryMode::Pan2Pan, &mode)?,
                views: Some(q.views.clone()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_features(&queries, &out_dir.join("queries.mvec"), &out_dir.join("queries.csv"))?;
    writeln!(
        out,
        "wrote {} panoramas and {} queries to {}",
        data.database.len(),
        queries.len(),
        out_dir.display()
    )?;
    Ok(())
}

struct LoadedQueries {
    index: Index,
    search: SearchConfig,
    queries: Vec<(String, MemoryVector)>,
}

fn load_queries(q: &QueryArgs) -> Result<LoadedQueries> {
    let index = load_index(&q.index)?;
    let mode = index.hierarchy().mode;
    let meta = q.query_meta.clone().unwrap_or_else(|| sidecar_path(&q.query_features));
    let records = read_features(&q.query_features, &meta, &mode)?;
    let queries = records
        .into_iter()
        .map(|r| {
            let memory = match (&r.views, q.im2pan_view) {
                (Some(views), Some(d)) => query_memory(views, QueryMode::Im2Pan(d), &mode)?,
                (None, Some(d)) => {
                    return Err(Error::MissingView {
                        id: r.id.clone(),
                        view: d.as_str().into(),
                    })
                }
                (_, None) => r.memory,
            };
            Ok((r.id, memory))
        })
        .collect::<Result<Vec<_>>>()?;
    let granularity = q.granularity.unwrap_or_else(|| index.granularity());
    let search = SearchConfig::new(q.top_k, granularity).with_beam(q.beam);
    Ok(LoadedQueries { index, search, queries })
}

fn cmd_query(q: &QueryArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let loaded = load_queries(q)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["query_id", "rank", "pano_id", "similarity", "x", "y"])?;
    for (id, memory) in &loaded.queries {
        let start = Instant::now();
        let (set, stats) = loaded.index.search(memory, &loaded.search)?;
        let elapsed = start.elapsed();
        for (rank, c) in set.entries.iter().enumerate() {
            w.write_record([
                id.as_str(),
                &(rank + 1).to_string(),
                &c.pano_id,
                &format!("{:.6}", c.query_similarity),
                &c.location.x.to_string(),
                &c.location.y.to_string(),
            ])?;
        }
        writeln!(
            err,
            "stats query={id} evaluations={} nodes_visited={} wall_ms={:.3}",
            stats.similarity_evaluations,
            stats.nodes_visited,
            elapsed.as_secs_f64() * 1e3
        )?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_estimate(q: &QueryArgs, use_rerank: bool, out: &mut dyn Write) -> Result<()> {
    let loaded = load_queries(q)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["query_id", "x", "y", "contributors"])?;
    for (id, memory) in &loaded.queries {
        let (set, _) = loaded.index.search(memory, &loaded.search)?;
        let estimate = estimate_position(&set, use_rerank)?;
        w.write_record([
            id.as_str(),
            &estimate.position.x.to_string(),
            &estimate.position.y.to_string(),
            &estimate.contributors.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}
