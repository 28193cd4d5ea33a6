//! Persisted index format.
//!
//! ```text
//! "PLIX" | version u16 | body | crc64 u64
//! ```
//!
//! Integers and `f32` values are little-endian. The trailer is CRC-64/XZ
//! over every preceding byte. The body stores the build parameters, the
//! panoramas in id order and each cluster level with its member indices
//! and memory vector. Member ids are not stored; they are recovered from
//! the level below on load.

use std::fs;
use std::path::Path;

use crc::{Crc, CRC_64_XZ};
use panogeo_core::aggregation::AggregationMode;
use panogeo_core::geocluster::{Cluster, ClusterNode, Hierarchy};
use panogeo_core::index::Index;
use panogeo_core::model::{AggregationKind, GeoPoint, MemoryVector, PanoRecord};

use crate::error::{Error, Result};

pub const PLIX_MAGIC: &[u8; 4] = b"PLIX";
pub const PLIX_VERSION: u16 = 1;
const CHECKSUM: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);
const PREFIX_LEN: usize = 6;
const TRAILER_LEN: usize = 8;

/// Serializes an index to bytes.
pub fn encode_index(index: &Index) -> Vec<u8> {
    let h = index.hierarchy();
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(PLIX_MAGIC);
    w.u16(PLIX_VERSION);
    w.len(index.dim());
    w.len(h.cluster_size);
    w.len(h.granularity());
    w.kind(h.mode.kind);
    w.f32(h.mode.ridge_epsilon);
    w.len(h.panos.len());
    for p in &h.panos {
        w.str(&p.id);
        w.point(p.location);
        w.memory(&p.memory);
    }
    for level in &h.levels {
        w.len(level.len());
        for node in level {
            let c = &node.cluster;
            w.str(&c.id);
            w.point(c.centroid);
            w.len(c.size);
            w.len(c.member_indices.len());
            for &m in &c.member_indices {
                w.len(m);
            }
            w.memory(&node.memory);
        }
    }
    let crc = CHECKSUM.checksum(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    w.0
}

/// Parses an index. Magic and version are checked before the checksum, so
/// a file from another format version reports the version.
pub fn decode_index(bytes: &[u8]) -> Result<Index> {
    let magic_len = bytes.len().min(4);
    if bytes[..magic_len] != PLIX_MAGIC[..magic_len] {
        return Err(Error::BadMagic { expected: "PLIX" });
    }
    if bytes.len() >= PREFIX_LEN {
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != PLIX_VERSION {
            return Err(Error::FormatVersionMismatch {
                expected: PLIX_VERSION,
                found: version,
            });
        }
    }
    if bytes.len() < PREFIX_LEN + TRAILER_LEN {
        return Err(Error::ChecksumMismatch);
    }
    let (content, trailer) = bytes.split_at(bytes.len() - TRAILER_LEN);
    let stored = u64::from_le_bytes(trailer.try_into().expect("8 bytes"));
    if CHECKSUM.checksum(content) != stored {
        return Err(Error::ChecksumMismatch);
    }

    let mut r = Reader {
        buf: &content[PREFIX_LEN..],
        pos: 0,
    };
    let dim = r.len()?;
    let cluster_size = r.len()?;
    let granularity = r.len()?;
    let kind = r.kind()?;
    let ridge_epsilon = r.f32()?;
    let pano_count = r.len()?;
    let mut panos = Vec::with_capacity(pano_count.min(r.remaining()));
    for _ in 0..pano_count {
        let id = r.str()?;
        let location = r.point()?;
        let memory = r.memory(dim)?;
        panos.push(PanoRecord {
            id,
            location,
            memory,
            views: None,
        });
    }
    let mut levels: Vec<Vec<ClusterNode>> = Vec::with_capacity(granularity.min(64));
    for _ in 0..granularity {
        let count = r.len()?;
        let mut level = Vec::with_capacity(count.min(r.remaining()));
        for _ in 0..count {
            let id = r.str()?;
            let centroid = r.point()?;
            let size = r.len()?;
            let members = r.len()?;
            let mut member_indices = Vec::with_capacity(members.min(r.remaining()));
            for _ in 0..members {
                member_indices.push(r.len()?);
            }
            let member_ids = member_indices
                .iter()
                .map(|&m| match levels.last() {
                    None => panos.get(m).map(|p| p.id.clone()),
                    Some(prev) => prev.get(m).map(|n: &ClusterNode| n.cluster.id.clone()),
                })
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::MalformedIndex(format!("cluster {id} references a missing member")))?;
            let memory = r.memory(dim)?;
            level.push(ClusterNode {
                cluster: Cluster {
                    id,
                    member_ids,
                    member_indices,
                    centroid,
                    size,
                },
                memory,
            });
        }
        levels.push(level);
    }
    if r.remaining() != 0 {
        return Err(Error::MalformedIndex(format!("{} trailing bytes", r.remaining())));
    }

    let hierarchy = Hierarchy {
        panos,
        levels,
        cluster_size,
        mode: AggregationMode { kind, ridge_epsilon },
    };
    let index = Index::from_hierarchy(hierarchy).map_err(|e| Error::MalformedIndex(e.to_string()))?;
    if index.dim() != dim {
        return Err(Error::MalformedIndex("dimension does not match the records".into()));
    }
    Ok(index)
}

pub fn save_index(index: &Index, path: &Path) -> Result<()> {
    fs::write(path, encode_index(index))?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<Index> {
    decode_index(&fs::read(path)?)
}

struct Writer(Vec<u8>);

impl Writer {
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn len(&mut self, v: usize) {
        let v = u32::try_from(v).expect("index sizes fit in u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f32(&mut self, v: f64) {
        self.0.extend_from_slice(&(v as f32).to_le_bytes());
    }

    fn kind(&mut self, k: AggregationKind) {
        self.0.push(match k {
            AggregationKind::Sum => 0,
            AggregationKind::PInv => 1,
        });
    }

    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }

    fn point(&mut self, p: GeoPoint) {
        self.f32(p.x);
        self.f32(p.y);
    }

    fn memory(&mut self, m: &MemoryVector) {
        self.kind(m.kind);
        self.len(m.member_count);
        self.0.push(u8::from(m.regularized));
        for &v in &m.values {
            self.f32(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.remaining() < n {
            return Err(Error::MalformedIndex("unexpected end of body".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn len(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f32(&mut self) -> Result<f64> {
        let b = self.take(4)?;
        Ok(f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
    }

    fn kind(&mut self) -> Result<AggregationKind> {
        match self.u8()? {
            0 => Ok(AggregationKind::Sum),
            1 => Ok(AggregationKind::PInv),
            other => Err(Error::MalformedIndex(format!("unknown aggregation tag {other}"))),
        }
    }

    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::MalformedIndex("id is not utf-8".into()))
    }

    fn point(&mut self) -> Result<GeoPoint> {
        Ok(GeoPoint::new(self.f32()?, self.f32()?))
    }

    fn memory(&mut self, dim: usize) -> Result<MemoryVector> {
        let kind = self.kind()?;
        let member_count = self.len()?;
        let regularized = match self.u8()? {
            0 => false,
            1 => true,
            other => return Err(Error::MalformedIndex(format!("bad flag {other}"))),
        };
        if self.remaining() / 4 < dim {
            return Err(Error::MalformedIndex("unexpected end of body".into()));
        }
        let values = (0..dim).map(|_| self.f32()).collect::<Result<Vec<_>>>()?;
        Ok(MemoryVector {
            values,
            kind,
            member_count,
            regularized,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use panogeo_core::model::FeatureVector;

    fn small_index(granularity: usize) -> Index {
        let panos = (0..9)
            .map(|i| {
                let values: Vec<f64> = (0..6).map(|k| ((i * 7 + k * 3) % 11) as f64 + 0.1).collect();
                let fv = FeatureVector::new(values).unwrap();
                PanoRecord {
                    id: format!("p{i}"),
                    location: GeoPoint::new(155_000.0 + (i % 3) as f64 * 5.1, 463_000.0 + (i / 3) as f64 * 4.7),
                    memory: panogeo_core::aggregation::aggregate_features(&[fv], &AggregationMode::pinv()).unwrap(),
                    views: None,
                }
            })
            .collect();
        Index::build(panos, 3, granularity, AggregationMode::pinv()).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for g in 0..3 {
            let index = small_index(g);
            let back = decode_index(&encode_index(&index)).unwrap();
            assert_eq!(back, index);
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        assert_eq!(encode_index(&small_index(2)), encode_index(&small_index(2)));
    }

    #[test]
    fn every_single_byte_flip_is_detected() {
        let bytes = encode_index(&small_index(1));
        for i in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[i] ^= 0x01;
            let err = decode_index(&bad).unwrap_err();
            let expected = match i {
                0..=3 => "BadMagic",
                4 | 5 => "FormatVersionMismatch",
                _ => "ChecksumMismatch",
            };
            assert_eq!(err.name(), expected, "byte {i}");
        }
    }

    #[test]
    fn truncation_is_a_checksum_failure() {
        let bytes = encode_index(&small_index(1));
        for cut in [4, 6, 13, 14, bytes.len() / 2, bytes.len() - 1] {
            assert_eq!(
                decode_index(&bytes[..cut]).unwrap_err().name(),
                "ChecksumMismatch",
                "cut {cut}"
            );
        }
        assert_eq!(decode_index(&[]).unwrap_err().name(), "ChecksumMismatch");
    }

    #[test]
    fn version_is_reported_before_checksum() {
        let mut bytes = encode_index(&small_index(1));
        bytes[4] = 2;
        let err = decode_index(&bytes).unwrap_err();
        assert!(matches!(err, Error::FormatVersionMismatch { expected: 1, found: 2 }));
    }

    #[test]
    fn consistent_but_corrupt_body_is_rejected() {
        let index = small_index(1);
        let mut bytes = encode_index(&index);
        bytes.truncate(bytes.len() - TRAILER_LEN);
        // Duplicate the last byte of the body and re-sign it.
        bytes.push(*bytes.last().unwrap());
        let crc = CHECKSUM.checksum(&bytes);
        bytes.extend_from_slice(&crc.to_le_bytes());
        assert_eq!(decode_index(&bytes).unwrap_err().name(), "MalformedIndex");
    }
}
