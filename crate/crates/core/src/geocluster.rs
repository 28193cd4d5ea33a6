//! Geographic clustering of panoramas into bounded neighborhoods and the
//! multi-level hierarchy built from repeated clustering.
//!
//! Clustering is agglomerative with centroid linkage and a hard cap on the
//! number of direct members: starting from singletons, the closest pair of
//! clusters whose combined member count fits under the cap is merged until
//! no such pair remains. Distance ties go to the pair with the smallest
//! member ids, so results depend only on the ids and coordinates.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::aggregation::{aggregate_memories, AggregationMode};
use crate::error::{Error, Result};
use crate::model::{validate_dataset, GeoPoint, MemoryVector, PanoRecord};

/// One geographic neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: String,
    /// Ids of the direct members (panoramas at level 1, clusters above).
    pub member_ids: Vec<String>,
    /// Positions of the direct members in the level below, ascending.
    pub member_indices: Vec<usize>,
    pub centroid: GeoPoint,
    /// Number of panoramas beneath this cluster.
    pub size: usize,
}

/// Arithmetic mean of the points.
pub fn centroid(points: &[GeoPoint]) -> Result<GeoPoint> {
    if points.is_empty() {
        return Err(Error::EmptyInput("centroid"));
    }
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    let n = points.len() as f64;
    Ok(GeoPoint::new(sx / n, sy / n))
}

/// Clusters `(id, location)` items into groups of at most `max_size`.
///
/// Output clusters are ordered by their smallest member id and named
/// `c0`, `c1`, ... (zero-padded to a common width).
pub fn cluster_level(items: &[(String, GeoPoint)], max_size: usize) -> Result<Vec<Cluster>> {
    let mut sorted: Vec<(&str, GeoPoint, usize)> = items.iter().map(|(id, p)| (id.as_str(), *p, 1)).collect();
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateId(String::from(w[0].0)));
    }
    cluster_sorted(&sorted, max_size, "c")
}

/// Clusters items already sorted by id. The third tuple field is the number
/// of panoramas beneath each item.
fn cluster_sorted(items: &[(&str, GeoPoint, usize)], max_size: usize, prefix: &str) -> Result<Vec<Cluster>> {
    if items.is_empty() {
        return Err(Error::EmptyInput("cluster_level"));
    }
    if max_size < 2 {
        return Err(Error::InvalidConfig(format!(
            "cluster size must be at least 2, got {max_size}"
        )));
    }
    if items.iter().any(|(_, p, _)| !p.is_finite()) {
        return Err(Error::NonFiniteValue("cluster item location"));
    }
    let points: Vec<GeoPoint> = items.iter().map(|(_, p, _)| *p).collect();
    let groups = merge_groups(&points, max_size);
    let width = digits(groups.len().saturating_sub(1));
    groups
        .into_iter()
        .enumerate()
        .map(|(i, members)| {
            let pts: Vec<GeoPoint> = members.iter().map(|&m| points[m]).collect();
            Ok(Cluster {
                id: format!("{prefix}{i:0width$}"),
                member_ids: members.iter().map(|&m| String::from(items[m].0)).collect(),
                size: members.iter().map(|&m| items[m].2).sum(),
                centroid: centroid(&pts)?,
                member_indices: members,
            })
        })
        .collect()
}

fn digits(mut n: usize) -> usize {
    let mut d = 1;
    while n >= 10 {
        n /= 10;
        d += 1;
    }
    d
}

/// Candidate merge, ordered so that the smallest distance (then smallest
/// member-id pair) pops first from a max-heap.
#[derive(Debug, Clone, Copy)]
struct PairEntry {
    dist2: f64,
    lo: usize,
    hi: usize,
    owner: usize,
    version: u32,
}

impl PairEntry {
    fn key(&self) -> (f64, usize, usize) {
        (self.dist2, self.lo, self.hi)
    }
}

fn cmp_key(a: (f64, usize, usize), b: (f64, usize, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

impl PartialEq for PairEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for PairEntry {}

impl PartialOrd for PairEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PairEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_key(other.key(), self.key())
            .then(other.owner.cmp(&self.owner))
            .then(other.version.cmp(&self.version))
    }
}

/// Uniform bucket grid over a fixed bounding box. Small populations are
/// scanned linearly instead of ring by ring.
struct Grid {
    origin: GeoPoint,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
    population: usize,
    members: Vec<usize>,
    slot_pos: Vec<usize>,
}

const LINEAR_SCAN_LIMIT: usize = 48;
const ABSENT: usize = usize::MAX;

impl Grid {
    fn new(origin: GeoPoint, cell: f64, nx: usize, ny: usize, slots: usize) -> Self {
        Grid {
            origin,
            cell,
            nx,
            ny,
            cells: vec![Vec::new(); nx * ny],
            population: 0,
            members: Vec::new(),
            slot_pos: vec![ABSENT; slots],
        }
    }

    fn cell_of(&self, p: &GeoPoint) -> (usize, usize) {
        let cx = ((p.x - self.origin.x) / self.cell) as isize;
        let cy = ((p.y - self.origin.y) / self.cell) as isize;
        (
            cx.clamp(0, self.nx as isize - 1) as usize,
            cy.clamp(0, self.ny as isize - 1) as usize,
        )
    }

    fn insert(&mut self, slot: usize, p: &GeoPoint) {
        let (cx, cy) = self.cell_of(p);
        self.cells[cy * self.nx + cx].push(slot);
        self.slot_pos[slot] = self.members.len();
        self.members.push(slot);
        self.population += 1;
    }

    fn remove(&mut self, slot: usize, p: &GeoPoint) {
        let pos = self.slot_pos[slot];
        if pos == ABSENT {
            return;
        }
        let (cx, cy) = self.cell_of(p);
        let bucket = &mut self.cells[cy * self.nx + cx];
        if let Some(i) = bucket.iter().position(|&s| s == slot) {
            bucket.swap_remove(i);
        }
        self.members.swap_remove(pos);
        if pos < self.members.len() {
            let moved = self.members[pos];
            self.slot_pos[moved] = pos;
        }
        self.slot_pos[slot] = ABSENT;
        self.population -= 1;
    }

    /// Nearest slot to `q` other than `me`, by (distance², pair key).
    fn nearest(&self, me: usize, q: &GeoPoint, centroids: &[GeoPoint], best: &mut Option<(f64, usize, usize, usize)>) {
        let consider = |slot: usize, best: &mut Option<(f64, usize, usize, usize)>| {
            if slot == me {
                return;
            }
            let d2 = q.distance_squared(&centroids[slot]);
            let (lo, hi) = if me < slot { (me, slot) } else { (slot, me) };
            let better = match best {
                None => true,
                Some((bd, blo, bhi, _)) => cmp_key((d2, lo, hi), (*bd, *blo, *bhi)) == Ordering::Less,
            };
            if better {
                *best = Some((d2, lo, hi, slot));
            }
        };
        if self.population == 0 {
            return;
        }
        if self.population <= LINEAR_SCAN_LIMIT {
            self.members.iter().for_each(|&s| consider(s, best));
            return;
        }
        let (cx, cy) = self.cell_of(q);
        let max_ring = self.nx.max(self.ny);
        for r in 0..=max_ring {
            let x0 = cx as isize - r as isize;
            let x1 = cx as isize + r as isize;
            let y0 = cy as isize - r as isize;
            let y1 = cy as isize + r as isize;
            for y in y0..=y1 {
                if y < 0 || y >= self.ny as isize {
                    continue;
                }
                let on_edge_row = y == y0 || y == y1;
                let mut x = x0;
                while x <= x1 {
                    if x >= 0 && x < self.nx as isize {
                        for &s in &self.cells[y as usize * self.nx + x as usize] {
                            consider(s, best);
                        }
                    }
                    x += if on_edge_row || r == 0 { 1 } else { (x1 - x0).max(1) };
                }
            }
            // Everything not yet visited is at least this far from q.
            let bx0 = self.origin.x + x0 as f64 * self.cell;
            let bx1 = self.origin.x + (x1 + 1) as f64 * self.cell;
            let by0 = self.origin.y + y0 as f64 * self.cell;
            let by1 = self.origin.y + (y1 + 1) as f64 * self.cell;
            let reach = (q.x - bx0).min(bx1 - q.x).min(q.y - by0).min(by1 - q.y).max(0.0);
            if let Some((bd, ..)) = best {
                if *bd < reach * reach {
                    return;
                }
            }
        }
    }
}

/// Size-capped centroid-linkage agglomeration over points indexed by rank.
/// Returns groups of point indices, each ascending, ordered by first index.
pub(crate) fn merge_groups(points: &[GeoPoint], max_size: usize) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut centroids: Vec<GeoPoint> = points.to_vec();
    let mut alive = vec![true; n];
    let mut version = vec![0u32; n];
    let mut partner: Vec<Option<usize>> = vec![None; n];
    let mut pointed_by: Vec<Vec<usize>> = vec![Vec::new(); n];

    // Grid geometry from the bounding box; centroids never leave it.
    let (mut minx, mut miny, mut maxx, mut maxy) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        minx = minx.min(p.x);
        miny = miny.min(p.y);
        maxx = maxx.max(p.x);
        maxy = maxy.max(p.y);
    }
    let (w, h) = (maxx - minx, maxy - miny);
    let nf = n as f64;
    let mut cell = libm::sqrt(w * h / nf).max(w.max(h) / nf);
    if cell.is_nan() || cell <= 0.0 {
        cell = 1.0;
    }
    let mut nx = (w / cell) as usize + 1;
    let mut ny = (h / cell) as usize + 1;
    while nx * ny > 4 * n + 16 {
        cell *= 1.5;
        nx = (w / cell) as usize + 1;
        ny = (h / cell) as usize + 1;
    }
    let origin = GeoPoint::new(minx, miny);
    // grids[c - 1] holds open clusters with c members.
    let mut grids: Vec<Grid> = (1..max_size).map(|_| Grid::new(origin, cell, nx, ny, n)).collect();

    if n == 1 {
        return members;
    }
    for (i, c) in centroids.iter().enumerate() {
        grids[0].insert(i, c);
    }

    let nearest = |me: usize, members: &[Vec<usize>], centroids: &[GeoPoint], grids: &[Grid]| {
        let count = members[me].len();
        let mut best = None;
        for grid in grids.iter().take(max_size - count) {
            grid.nearest(me, &centroids[me], centroids, &mut best);
        }
        best
    };

    let mut heap = BinaryHeap::with_capacity(n);
    let refresh = |x: usize,
                   members: &[Vec<usize>],
                   centroids: &[GeoPoint],
                   grids: &[Grid],
                   version: &mut [u32],
                   partner: &mut [Option<usize>],
                   pointed_by: &mut [Vec<usize>],
                   heap: &mut BinaryHeap<PairEntry>| {
        version[x] += 1;
        partner[x] = None;
        if let Some((d2, lo, hi, y)) = nearest(x, members, centroids, grids) {
            partner[x] = Some(y);
            pointed_by[y].push(x);
            heap.push(PairEntry {
                dist2: d2,
                lo,
                hi,
                owner: x,
                version: version[x],
            });
        }
    };

    for i in 0..n {
        refresh(
            i,
            &members,
            &centroids,
            &grids,
            &mut version,
            &mut partner,
            &mut pointed_by,
            &mut heap,
        );
    }

    while let Some(e) = heap.pop() {
        if !alive[e.owner] || version[e.owner] != e.version {
            continue;
        }
        let (a, b) = (e.lo, e.hi);
        debug_assert!(alive[a] && alive[b]);
        debug_assert!(members[a].len() + members[b].len() <= max_size);

        let (ca, cb) = (centroids[a], centroids[b]);
        grids[members[a].len() - 1].remove(a, &ca);
        grids[members[b].len() - 1].remove(b, &cb);
        alive[b] = false;
        version[b] += 1;
        let moved = core::mem::take(&mut members[b]);
        members[a].extend(moved);
        members[a].sort_unstable();
        let pts: Vec<GeoPoint> = members[a].iter().map(|&m| points[m]).collect();
        centroids[a] = centroid(&pts).expect("merged cluster is non-empty");

        let count = members[a].len();
        if count < max_size {
            grids[count - 1].insert(a, &centroids[a]);
            refresh(
                a,
                &members,
                &centroids,
                &grids,
                &mut version,
                &mut partner,
                &mut pointed_by,
                &mut heap,
            );
        } else {
            version[a] += 1;
            partner[a] = None;
        }

        let mut stale: Vec<usize> = core::mem::take(&mut pointed_by[a]);
        stale.extend(core::mem::take(&mut pointed_by[b]));
        stale.sort_unstable();
        stale.dedup();
        for x in stale {
            if x == a || !alive[x] || !(partner[x] == Some(a) || partner[x] == Some(b)) {
                continue;
            }
            refresh(
                x,
                &members,
                &centroids,
                &grids,
                &mut version,
                &mut partner,
                &mut pointed_by,
                &mut heap,
            );
        }
    }

    (0..n)
        .filter(|&i| alive[i])
        .map(|i| core::mem::take(&mut members[i]))
        .collect()
}

/// A cluster together with the memory vector summarizing its members.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterNode {
    pub cluster: Cluster,
    pub memory: MemoryVector,
}

/// Panoramas (level 0) plus `granularity` stacked cluster levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    /// Level 0, sorted by id.
    pub panos: Vec<PanoRecord>,
    /// `levels[l - 1]` is level `l`.
    pub levels: Vec<Vec<ClusterNode>>,
    pub cluster_size: usize,
    pub mode: AggregationMode,
}

impl Hierarchy {
    pub fn granularity(&self) -> usize {
        self.levels.len()
    }

    /// Node count of each level, level 0 first.
    pub fn level_sizes(&self) -> Vec<usize> {
        core::iter::once(self.panos.len())
            .chain(self.levels.iter().map(Vec::len))
            .collect()
    }

    /// Panorama indices beneath node `index` of `level`.
    pub fn leaves(&self, level: usize, index: usize) -> Vec<usize> {
        if level == 0 {
            return vec![index];
        }
        let mut frontier = vec![index];
        for l in (1..=level).rev() {
            frontier = frontier
                .iter()
                .flat_map(|&i| self.levels[l - 1][i].cluster.member_indices.iter().copied())
                .collect();
        }
        frontier.sort_unstable();
        frontier
    }
}

/// Clusters panoramas `granularity` times, aggregating a memory vector for
/// every cluster from its direct members.
pub fn build_hierarchy(
    mut panos: Vec<PanoRecord>,
    cluster_size: usize,
    granularity: usize,
    mode: AggregationMode,
) -> Result<Hierarchy> {
    validate_dataset(&panos)?;
    mode.validate()?;
    if cluster_size < 2 {
        return Err(Error::InvalidConfig(format!(
            "cluster size must be at least 2, got {cluster_size}"
        )));
    }
    panos.sort_by(|a, b| a.id.cmp(&b.id));

    let mut levels: Vec<Vec<ClusterNode>> = Vec::with_capacity(granularity);
    for level in 1..=granularity {
        let (items, memories): (Vec<(&str, GeoPoint, usize)>, Vec<&MemoryVector>) = match levels.last() {
            None => panos
                .iter()
                .map(|p| ((p.id.as_str(), p.location, 1), &p.memory))
                .unzip(),
            Some(prev) => prev
                .iter()
                .map(|c| ((c.cluster.id.as_str(), c.cluster.centroid, c.cluster.size), &c.memory))
                .unzip(),
        };
        let clusters = cluster_sorted(&items, cluster_size, &format!("L{level}-"))?;
        let nodes = clusters
            .into_iter()
            .map(|cluster| {
                let members: Vec<MemoryVector> = cluster.member_indices.iter().map(|&i| memories[i].clone()).collect();
                let memory = aggregate_memories(&members, &mode)?;
                Ok(ClusterNode { cluster, memory })
            })
            .collect::<Result<Vec<_>>>()?;
        levels.push(nodes);
    }

    Ok(Hierarchy {
        panos,
        levels,
        cluster_size,
        mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AggregationKind;
    use alloc::string::ToString;
    use proptest::prelude::*;

    /// Brute-force reference: rescans every pair after each merge.
    fn naive_groups(points: &[GeoPoint], max_size: usize) -> Vec<Vec<usize>> {
        let mut groups: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
        loop {
            let cents: Vec<GeoPoint> = groups
                .iter()
                .map(|g| centroid(&g.iter().map(|&i| points[i]).collect::<Vec<_>>()).unwrap())
                .collect();
            let mut best: Option<(f64, usize, usize, usize, usize)> = None;
            for i in 0..groups.len() {
                for j in (i + 1)..groups.len() {
                    if groups[i].len() + groups[j].len() > max_size {
                        continue;
                    }
                    let d2 = cents[i].distance_squared(&cents[j]);
                    let (ki, kj) = (groups[i][0], groups[j][0]);
                    let (lo, hi) = if ki < kj { (ki, kj) } else { (kj, ki) };
                    let take = match best {
                        None => true,
                        Some((bd, blo, bhi, ..)) => cmp_key((d2, lo, hi), (bd, blo, bhi)) == Ordering::Less,
                    };
                    if take {
                        best = Some((d2, lo, hi, i, j));
                    }
                }
            }
            let Some((.., i, j)) = best else { break };
            let moved = groups.remove(j);
            groups[i].extend(moved);
            groups[i].sort_unstable();
        }
        groups.sort();
        groups
    }

    fn items(points: &[(f64, f64)]) -> Vec<(String, GeoPoint)> {
        points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| (format!("p{i:03}"), GeoPoint::new(x, y)))
            .collect()
    }

    fn grid_records(side: usize, pitch: f64) -> Vec<PanoRecord> {
        let dim = 16;
        (0..side * side)
            .map(|i| {
                let mut values = vec![0.1; dim];
                values[i % dim] += 1.0;
                values[(i * 7 + 3) % dim] -= 0.5;
                PanoRecord {
                    id: format!("p{i:02}"),
                    location: GeoPoint::new((i % side) as f64 * pitch, (i / side) as f64 * pitch),
                    memory: MemoryVector {
                        values,
                        kind: AggregationKind::PInv,
                        member_count: 4,
                        regularized: false,
                    },
                    views: None,
                }
            })
            .collect()
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(centroid(&[GeoPoint::new(2.0, 2.0)]).unwrap(), GeoPoint::new(2.0, 2.0));
        assert_eq!(
            centroid(&[GeoPoint::new(0.0, 0.0), GeoPoint::new(10.0, 0.0)]).unwrap(),
            GeoPoint::new(5.0, 0.0)
        );
        assert_eq!(
            centroid(&[
                GeoPoint::new(0.0, 0.0),
                GeoPoint::new(0.0, 6.0),
                GeoPoint::new(6.0, 0.0)
            ])
            .unwrap(),
            GeoPoint::new(2.0, 2.0)
        );
        assert_eq!(centroid(&[]).unwrap_err().name(), "EmptyInput");
    }

    #[test]
    fn single_item_is_singleton() {
        let c = cluster_level(&items(&[(3.0, 4.0)]), 4).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].centroid, GeoPoint::new(3.0, 4.0));
        assert_eq!(c[0].member_ids, ["p000"]);
    }

    #[test]
    fn two_pairs_on_a_line() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (100.0, 0.0), (101.0, 0.0)];
        let gp: Vec<GeoPoint> = pts.iter().map(|&(x, y)| GeoPoint::new(x, y)).collect();
        assert_eq!(naive_groups(&gp, 2), vec![vec![0, 1], vec![2, 3]]);
        let c = cluster_level(&items(&pts), 2).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].member_ids, ["p000", "p001"]);
        assert_eq!(c[0].centroid, GeoPoint::new(0.5, 0.0));
        assert_eq!(c[1].centroid, GeoPoint::new(100.5, 0.0));
    }

    #[test]
    fn collinear_triple() {
        let pts = [(0.0, 0.0), (5.0, 0.0), (100.0, 0.0)];
        let gp: Vec<GeoPoint> = pts.iter().map(|&(x, y)| GeoPoint::new(x, y)).collect();
        assert_eq!(naive_groups(&gp, 2), vec![vec![0, 1], vec![2]]);
        let c = cluster_level(&items(&pts), 2).unwrap();
        let groups: Vec<Vec<usize>> = c.iter().map(|c| c.member_indices.clone()).collect();
        assert_eq!(groups, vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn input_errors() {
        assert_eq!(cluster_level(&[], 4).unwrap_err().name(), "EmptyInput");
        let mut it = items(&[(0.0, 0.0), (1.0, 1.0)]);
        it[1].0 = it[0].0.clone();
        assert_eq!(cluster_level(&it, 4).unwrap_err().name(), "DuplicateId");
        assert_eq!(
            cluster_level(&items(&[(0.0, 0.0)]), 1).unwrap_err().name(),
            "InvalidConfig"
        );
    }

    #[test]
    fn grid_4x4_forms_2x2_blocks() {
        let pts: Vec<(f64, f64)> = (0..16).map(|i| ((i % 4) as f64 * 5.0, (i / 4) as f64 * 5.0)).collect();
        let gp: Vec<GeoPoint> = pts.iter().map(|&(x, y)| GeoPoint::new(x, y)).collect();
        let expected = vec![
            vec![0, 1, 4, 5],
            vec![2, 3, 6, 7],
            vec![8, 9, 12, 13],
            vec![10, 11, 14, 15],
        ];
        assert_eq!(naive_groups(&gp, 4), expected);
        assert_eq!(merge_groups(&gp, 4), expected);
    }

    #[test]
    fn hierarchy_on_grid() {
        let h = build_hierarchy(grid_records(4, 5.0), 4, 2, AggregationMode::pinv()).unwrap();
        assert_eq!(h.level_sizes(), vec![16, 4, 1]);
        assert_eq!(h.levels[1][0].cluster.size, 16);
        assert_eq!(h.levels[1][0].cluster.member_ids, ["L1-0", "L1-1", "L1-2", "L1-3"]);
        assert_eq!(h.levels[0][0].cluster.centroid, GeoPoint::new(2.5, 2.5));
        assert_eq!(h.levels[0][0].memory.member_count, 16);
        assert_eq!(h.leaves(2, 0), (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn granularity_zero_is_flat() {
        let recs = grid_records(3, 5.0);
        let h = build_hierarchy(recs.clone(), 4, 0, AggregationMode::pinv()).unwrap();
        assert!(h.levels.is_empty());
        assert_eq!(h.panos, recs);
    }

    #[test]
    fn hierarchy_input_order_irrelevant() {
        let recs = grid_records(5, 5.0);
        let mut rev = recs.clone();
        rev.reverse();
        let a = build_hierarchy(recs, 4, 2, AggregationMode::pinv()).unwrap();
        let b = build_hierarchy(rev, 4, 2, AggregationMode::pinv()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn large_grid_blocks_are_exact() {
        // 40x40 lattice, cap 4: every cluster is a 2x2 block.
        let side = 40;
        let gp: Vec<GeoPoint> = (0..side * side)
            .map(|i| GeoPoint::new((i % side) as f64 * 5.0, (i / side) as f64 * 5.0))
            .collect();
        let groups = merge_groups(&gp, 4);
        assert_eq!(groups.len(), side * side / 4);
        for g in &groups {
            assert_eq!(g.len(), 4);
            let (r, c) = (g[0] / side, g[0] % side);
            assert_eq!(g, &vec![g[0], g[0] + 1, g[0] + side, g[0] + side + 1]);
            assert!(r % 2 == 0 && c % 2 == 0);
        }
    }

    fn arb_points() -> impl Strategy<Value = Vec<GeoPoint>> {
        prop_oneof![
            // lattice points: lots of exact distance ties
            proptest::collection::vec((0i32..12, 0i32..12), 1..60).prop_map(|v| v
                .into_iter()
                .map(|(x, y)| GeoPoint::new(x as f64 * 5.0, y as f64 * 5.0))
                .collect()),
            proptest::collection::vec((-500.0f64..500.0, -500.0f64..500.0), 1..80)
                .prop_map(|v| v.into_iter().map(|(x, y)| GeoPoint::new(x, y)).collect()),
            proptest::collection::vec((0.0f64..2000.0, -1.0f64..1.0), 1..80)
                .prop_map(|v| v.into_iter().map(|(x, y)| GeoPoint::new(x, y)).collect()),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn fast_matches_brute_force(points in arb_points(), cap in 2usize..=9) {
            let mut fast = merge_groups(&points, cap);
            fast.sort();
            prop_assert_eq!(fast, naive_groups(&points, cap));
        }

        #[test]
        fn partition_cap_and_compression(points in arb_points(), cap in 2usize..=16) {
            let n = points.len();
            let it: Vec<(String, GeoPoint)> = points.iter().enumerate().map(|(i, p)| (i.to_string(), *p)).collect();
            let clusters = cluster_level(&it, cap).unwrap();
            let mut seen: Vec<String> = clusters.iter().flat_map(|c| c.member_ids.clone()).collect();
            seen.sort();
            let mut all: Vec<String> = it.iter().map(|(id, _)| id.clone()).collect();
            all.sort();
            prop_assert_eq!(seen, all);
            for c in &clusters {
                prop_assert!(!c.member_ids.is_empty() && c.member_ids.len() <= cap);
                let pts: Vec<GeoPoint> = c.member_indices.iter().map(|&i| {
                    let mut sorted = it.clone();
                    sorted.sort_by(|a, b| a.0.cmp(&b.0));
                    sorted[i].1
                }).collect();
                prop_assert_eq!(c.centroid, centroid(&pts).unwrap());
            }
            prop_assert!(clusters.len() >= n.div_ceil(cap));
            prop_assert!(clusters.len() <= n.div_ceil(2));
        }
    }
}
