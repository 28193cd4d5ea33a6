//! Feature files and their metadata sidecars.
//!
//! A feature file holds a dense block of little-endian `f32` rows:
//!
//! ```text
//! "MVEC" | version u16 | count u32 | dim u32 | dtype u8 | count*dim f32
//! ```
//!
//! The sidecar is a CSV with header `id,x,y,view`, one row per vector in
//! the same order. `view` is one of `N`, `E`, `S`, `W` for cardinal views
//! or `PANO` for a precomputed panorama vector.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use panogeo_core::aggregation::{aggregate_panorama, AggregationMode};
use panogeo_core::model::{validate_record, Direction, FeatureVector, GeoPoint, MemoryVector, PanoRecord, Views};

use crate::error::{Error, Result};

pub const MVEC_MAGIC: &[u8; 4] = b"MVEC";
pub const MVEC_VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 1;

/// Dense row-major block of vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorBlock {
    pub dim: usize,
    pub rows: Vec<Vec<f32>>,
}

/// Writes rows in the binary feature format. Row lengths are checked
/// before anything is written.
pub fn encode_vectors<W: Write>(mut w: W, dim: usize, rows: &[Vec<f32>]) -> Result<()> {
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(panogeo_core::Error::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        }
        .into());
    }
    let count = u32::try_from(rows.len()).map_err(|_| Error::CountMismatch("too many rows".into()))?;
    let dim32 = u32::try_from(dim).map_err(|_| Error::CountMismatch("dimension too large".into()))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + rows.len() * dim * 4);
    buf.extend_from_slice(MVEC_MAGIC);
    buf.extend_from_slice(&MVEC_VERSION.to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    buf.extend_from_slice(&dim32.to_le_bytes());
    buf.push(DTYPE_F32);
    for row in rows {
        for v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// Reads a binary feature block.
pub fn decode_vectors<R: Read>(mut r: R) -> Result<VectorBlock> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 4 || &bytes[..4] != MVEC_MAGIC {
        return Err(Error::BadMagic { expected: "MVEC" });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::CountMismatch("truncated header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != MVEC_VERSION {
        return Err(Error::VersionMismatch {
            expected: MVEC_VERSION,
            found: version,
        });
    }
    let count = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let dim = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
    let dtype = bytes[14];
    if dtype != DTYPE_F32 {
        return Err(Error::UnsupportedDtype(dtype));
    }
    let payload = &bytes[HEADER_LEN..];
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::CountMismatch("header sizes overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::CountMismatch(format!(
            "header declares {count}x{dim} values, payload holds {} bytes",
            payload.len()
        )));
    }
    let rows = if dim == 0 {
        vec![Vec::new(); count]
    } else {
        payload
            .chunks_exact(dim * 4)
            .map(|row| {
                row.chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                    .collect()
            })
            .collect()
    };
    Ok(VectorBlock { dim, rows })
}

/// Which vector a metadata row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewTag {
    Cardinal(Direction),
    Pano,
}

impl ViewTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViewTag::Cardinal(d) => d.as_str(),
            ViewTag::Pano => "PANO",
        }
    }
}

impl FromStr for ViewTag {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        if s == "PANO" {
            return Ok(ViewTag::Pano);
        }
        Direction::from_str(s).map(ViewTag::Cardinal).map_err(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaRow {
    pub id: String,
    pub location: GeoPoint,
    pub view: ViewTag,
}

pub fn read_meta<R: Read>(r: R) -> Result<Vec<MetaRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "x", "y", "view"] {
        return Err(Error::MalformedRow {
            line: 1,
            reason: "expected header id,x,y,view".into(),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |reason: &str| Error::MalformedRow {
            line,
            reason: reason.into(),
        };
        let id = record.get(0).ok_or_else(|| bad("missing id"))?;
        if id.is_empty() {
            return Err(bad("empty id"));
        }
        let x: f64 = record.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad x"))?;
        let y: f64 = record.get(2).and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad y"))?;
        if !x.is_finite() || !y.is_finite() {
            return Err(bad("non-finite coordinate"));
        }
        let view = record
            .get(3)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("view must be N, E, S, W or PANO"))?;
        rows.push(MetaRow {
            id: id.to_string(),
            location: GeoPoint::new(x, y),
            view,
        });
    }
    Ok(rows)
}

pub fn write_meta<W: Write>(w: W, rows: &[MetaRow]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(["id", "x", "y", "view"])?;
    for row in rows {
        writer.write_record([
            row.id.as_str(),
            &row.location.x.to_string(),
            &row.location.y.to_string(),
            row.view.as_str(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Default sidecar location: the feature path with a `.csv` extension.
pub fn sidecar_path(features: &Path) -> PathBuf {
    features.with_extension("csv")
}

/// Pairs metadata with vectors and builds one record per panorama id, in
/// order of first appearance. Cardinal views are aggregated with `mode`;
/// a `PANO` row becomes the memory vector as is.
pub fn assemble_records(meta: &[MetaRow], block: &VectorBlock, mode: &AggregationMode) -> Result<Vec<PanoRecord>> {
    if meta.len() != block.rows.len() {
        return Err(Error::CountMismatch(format!(
            "{} metadata rows for {} vectors",
            meta.len(),
            block.rows.len()
        )));
    }
    struct Group<'a> {
        id: &'a str,
        location: GeoPoint,
        pano: Option<&'a [f32]>,
        views: [Option<&'a [f32]>; 4],
    }
    let mut order: Vec<Group> = Vec::new();
    let mut slot_of: HashMap<&str, usize> = HashMap::new();
    for (row, values) in meta.iter().zip(&block.rows) {
        let slot = *slot_of.entry(row.id.as_str()).or_insert_with(|| {
            order.push(Group {
                id: &row.id,
                location: row.location,
                pano: None,
                views: [None; 4],
            });
            order.len() - 1
        });
        let g = &mut order[slot];
        if g.location != row.location {
            return Err(Error::MalformedRow {
                line: 0,
                reason: format!("inconsistent coordinates for {}", row.id),
            });
        }
        let dup = || Error::DuplicateRow {
            id: row.id.clone(),
            view: row.view.as_str().into(),
        };
        match row.view {
            ViewTag::Pano => {
                if g.pano.is_some() || g.views.iter().any(Option::is_some) {
                    return Err(dup());
                }
                g.pano = Some(values);
            }
            ViewTag::Cardinal(d) => {
                if g.pano.is_some() || g.views[d.index()].is_some() {
                    return Err(dup());
                }
                g.views[d.index()] = Some(values);
            }
        }
    }

    let mut records = Vec::with_capacity(order.len());
    for g in order {
        let record = match g.pano {
            Some(values) => PanoRecord {
                id: g.id.to_string(),
                location: g.location,
                memory: MemoryVector {
                    values: values.iter().map(|&v| f64::from(v)).collect(),
                    kind: mode.kind,
                    member_count: 1,
                    regularized: false,
                },
                views: None,
            },
            None => {
                let mut pairs = Vec::with_capacity(4);
                for d in Direction::ALL {
                    let values = g.views[d.index()].ok_or_else(|| Error::MissingView {
                        id: g.id.to_string(),
                        view: d.as_str().into(),
                    })?;
                    pairs.push((d, FeatureVector::from_f32(values)?));
                }
                let views = Views::from_pairs(g.id, pairs)?;
                let memory = aggregate_panorama(views.as_slice(), mode)?;
                PanoRecord {
                    id: g.id.to_string(),
                    location: g.location,
                    memory,
                    views: Some(views),
                }
            }
        };
        validate_record(&record)?;
        records.push(record);
    }
    Ok(records)
}

/// Loads a feature file and its sidecar into panorama records.
pub fn read_features(features: &Path, meta: &Path, mode: &AggregationMode) -> Result<Vec<PanoRecord>> {
    let block = decode_vectors(BufReader::new(File::open(features)?))?;
    let rows = read_meta(BufReader::new(File::open(meta)?))?;
    assemble_records(&rows, &block, mode)
}

/// Flattens records into metadata rows and `f32` vectors. Records with
/// views contribute their four views; others a single `PANO` row.
pub fn flatten_records(records: &[PanoRecord]) -> Result<(Vec<MetaRow>, VectorBlock)> {
    let dim = records.first().map(|r| r.memory.dim()).unwrap_or(0);
    let mut meta = Vec::new();
    let mut rows = Vec::new();
    for r in records {
        validate_record(r)?;
        if r.memory.dim() != dim {
            return Err(panogeo_core::Error::DimensionMismatch {
                expected: dim,
                found: r.memory.dim(),
            }
            .into());
        }
        let mut push = |view: ViewTag, values: &[f64]| -> Result<()> {
            let narrowed: Vec<f32> = values.iter().map(|&v| v as f32).collect();
            FeatureVector::new(narrowed.iter().map(|&v| f64::from(v)).collect())?;
            meta.push(MetaRow {
                id: r.id.clone(),
                location: r.location,
                view,
            });
            rows.push(narrowed);
            Ok(())
        };
        match &r.views {
            Some(views) => {
                for d in Direction::ALL {
                    push(ViewTag::Cardinal(d), &views.get(d).values)?;
                }
            }
            None => push(ViewTag::Pano, &r.memory.values)?,
        }
    }
    Ok((meta, VectorBlock { dim, rows }))
}

/// Writes records as a feature file plus sidecar. Values are stored as
/// `f32`. Nothing is written if any record is invalid.
pub fn write_features(records: &[PanoRecord], features: &Path, meta: &Path) -> Result<()> {
    let (rows, block) = flatten_records(records)?;
    encode_vectors(BufWriter::new(File::create(features)?), block.dim, &block.rows)?;
    write_meta(BufWriter::new(File::create(meta)?), &rows)?;
    Ok(())
}
