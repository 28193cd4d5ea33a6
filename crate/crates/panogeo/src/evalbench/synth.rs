//! Seeded synthetic street-view database.
//!
//! Panoramas sit on a square grid. A smooth descriptor field is built by
//! Gaussian-kernel interpolation of random unit anchor vectors scattered
//! over the area, so descriptor similarity falls off with distance. Each
//! view is the local field value plus isotropic noise, normalized and
//! rounded to `f32`.

use panogeo_core::aggregation::{aggregate_panorama, AggregationMode};
use panogeo_core::model::{Direction, FeatureVector, GeoPoint, PanoRecord, Views};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Where queries are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryPlacement {
    /// Perturbed copies of database views at database locations.
    AtDatabase,
    /// Fresh views at a location offset by up to one street spacing.
    Offset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub pano_count: usize,
    pub dim: usize,
    /// Grid step in meters.
    pub street_spacing: f64,
    pub anchor_count: usize,
    /// Expected norm of the noise added to each unit-norm view.
    pub view_noise_sigma: f64,
    /// Expected norm of the extra noise added to query views.
    pub query_noise_sigma: f64,
    pub query_count: usize,
    pub placement: QueryPlacement,
    pub seed: u64,
}

impl SynthConfig {
    pub const DEFAULT_SPACING: f64 = 5.0;
    pub const DEFAULT_NOISE_SIGMA: f64 = 1.4;

    /// The standard benchmark: one anchor per four panoramas and enough
    /// noise that retrieval at the coarser levels starts to miss.
    pub fn new(pano_count: usize, dim: usize, seed: u64) -> Self {
        SynthConfig {
            pano_count,
            dim,
            street_spacing: Self::DEFAULT_SPACING,
            anchor_count: (pano_count / 4).max(1),
            view_noise_sigma: Self::DEFAULT_NOISE_SIGMA,
            query_noise_sigma: Self::DEFAULT_NOISE_SIGMA,
            query_count: pano_count.min(200),
            placement: QueryPlacement::AtDatabase,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.pano_count == 0 {
            return bad("pano_count must be at least 1".into());
        }
        if self.dim < 8 {
            return bad(format!("dim must be at least 8, got {}", self.dim));
        }
        if !(self.street_spacing.is_finite() && self.street_spacing > 0.0) {
            return bad("street spacing must be positive".into());
        }
        if self.anchor_count == 0 {
            return bad("anchor_count must be positive".into());
        }
        for (name, s) in [("view", self.view_noise_sigma), ("query", self.query_noise_sigma)] {
            if !(s.is_finite() && s >= 0.0) {
                return bad(format!("{name} noise sigma must be a finite non-negative number"));
            }
        }
        Ok(())
    }
}

/// One query with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthQuery {
    pub id: String,
    pub truth: GeoPoint,
    pub views: Views,
    /// Database panorama the query was derived from.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub database: Vec<PanoRecord>,
    pub queries: Vec<SynthQuery>,
}

pub fn pano_id(i: usize) -> String {
    format!("p{i:06}")
}

/// Generates a database and queries. Database memory vectors use `mode`.
pub fn synth_dataset(config: &SynthConfig, mode: &AggregationMode) -> Result<SynthDataset> {
    config.validate()?;
    mode.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.pano_count;
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let s = config.street_spacing;
    let locations: Vec<GeoPoint> = (0..n)
        .map(|i| GeoPoint::new((i % cols) as f64 * s, (i / cols) as f64 * s))
        .collect();

    let field = Field::new(
        &mut rng,
        config,
        (-s, -s),
        ((cols - 1) as f64 * s + s, (rows - 1) as f64 * s + s),
    );

    let mut database = Vec::with_capacity(n);
    for (i, &loc) in locations.iter().enumerate() {
        let base = field.at(loc);
        let views = make_views(&mut rng, &base, config.view_noise_sigma)?;
        let memory = aggregate_panorama(views.as_slice(), mode)?;
        database.push(PanoRecord {
            id: pano_id(i),
            location: loc,
            memory,
            views: Some(views),
        });
    }

    let mut queries = Vec::with_capacity(config.query_count);
    for q in 0..config.query_count {
        let src = rng.random_range(0..n);
        let source = &database[src];
        let (truth, views) = match config.placement {
            QueryPlacement::AtDatabase => {
                let db_views = source.views.as_ref().expect("synthetic records carry views");
                let views = perturb_views(&mut rng, db_views, config.query_noise_sigma)?;
                (source.location, views)
            }
            QueryPlacement::Offset => {
                let angle = rng.random::<f64>() * std::f64::consts::TAU;
                let radius = rng.random::<f64>() * s;
                let truth = source.location.translate(radius * angle.cos(), radius * angle.sin());
                let fresh = make_views(&mut rng, &field.at(truth), config.view_noise_sigma)?;
                (truth, perturb_views(&mut rng, &fresh, config.query_noise_sigma)?)
            }
        };
        queries.push(SynthQuery {
            id: format!("q{q:06}"),
            truth,
            views,
            source: source.id.clone(),
        });
    }
    Ok(SynthDataset { database, queries })
}

fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn to_f32_precision(v: Vec<f64>) -> Result<FeatureVector> {
    Ok(FeatureVector::new(
        v.into_iter().map(|x| f64::from(x as f32)).collect(),
    )?)
}

fn make_views(rng: &mut ChaCha8Rng, base: &[f64], sigma: f64) -> Result<Views> {
    let scale = sigma / (base.len() as f64).sqrt();
    let mut out = Vec::with_capacity(4);
    for d in Direction::ALL {
        let noise = gaussian_vector(rng, base.len(), scale);
        let v: Vec<f64> = base.iter().zip(&noise).map(|(b, e)| b + e).collect();
        out.push((d, to_f32_precision(normalized(v))?));
    }
    Ok(Views::from_pairs("synthetic", out)?)
}

/// Adds noise to each view without renormalizing, so zero noise
/// reproduces the input exactly.
fn perturb_views(rng: &mut ChaCha8Rng, views: &Views, sigma: f64) -> Result<Views> {
    let mut out = Vec::with_capacity(4);
    for d in Direction::ALL {
        let v = &views.get(d).values;
        let noise = gaussian_vector(rng, v.len(), sigma / (v.len() as f64).sqrt());
        let p: Vec<f64> = v.iter().zip(&noise).map(|(a, e)| a + e).collect();
        out.push((d, to_f32_precision(p)?));
    }
    Ok(Views::from_pairs("query", out)?)
}

/// Anchors bucketed on a coarse grid for local kernel evaluation.
struct Field {
    anchors: Vec<(GeoPoint, Vec<f64>)>,
    buckets: Vec<Vec<usize>>,
    origin: GeoPoint,
    cell: f64,
    nx: usize,
    ny: usize,
    bandwidth: f64,
    dim: usize,
}

impl Field {
    const CUTOFF: f64 = 4.0;

    fn new(rng: &mut ChaCha8Rng, config: &SynthConfig, lo: (f64, f64), hi: (f64, f64)) -> Field {
        let (w, h) = (hi.0 - lo.0, hi.1 - lo.1);
        let spread = (w * h / config.anchor_count as f64).sqrt();
        let bandwidth = 0.6 * spread;
        let anchors: Vec<(GeoPoint, Vec<f64>)> = (0..config.anchor_count)
            .map(|_| {
                let p = GeoPoint::new(lo.0 + rng.random::<f64>() * w, lo.1 + rng.random::<f64>() * h);
                (p, normalized(gaussian_vector(rng, config.dim, 1.0)))
            })
            .collect();
        let cell = Self::CUTOFF * bandwidth;
        let nx = ((w / cell).floor() as usize + 1).max(1);
        let ny = ((h / cell).floor() as usize + 1).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        let origin = GeoPoint::new(lo.0, lo.1);
        for (i, (p, _)) in anchors.iter().enumerate() {
            let (cx, cy) = Self::cell_of(origin, cell, nx, ny, *p);
            buckets[cy * nx + cx].push(i);
        }
        Field {
            anchors,
            buckets,
            origin,
            cell,
            nx,
            ny,
            bandwidth,
            dim: config.dim,
        }
    }

    fn cell_of(origin: GeoPoint, cell: f64, nx: usize, ny: usize, p: GeoPoint) -> (usize, usize) {
        let cx = ((p.x - origin.x) / cell).floor().clamp(0.0, (nx - 1) as f64) as usize;
        let cy = ((p.y - origin.y) / cell).floor().clamp(0.0, (ny - 1) as f64) as usize;
        (cx, cy)
    }

    /// Unit descriptor at `p`.
    fn at(&self, p: GeoPoint) -> Vec<f64> {
        let (cx, cy) = Self::cell_of(self.origin, self.cell, self.nx, self.ny, p);
        let two_b2 = 2.0 * self.bandwidth * self.bandwidth;
        let mut acc = vec![0.0; self.dim];
        let mut total = 0.0;
        for y in cy.saturating_sub(1)..=(cy + 1).min(self.ny - 1) {
            for x in cx.saturating_sub(1)..=(cx + 1).min(self.nx - 1) {
                for &a in &self.buckets[y * self.nx + x] {
                    let (q, u) = &self.anchors[a];
                    let w = (-p.distance_squared(q) / two_b2).exp();
                    total += w;
                    acc.iter_mut().zip(u).for_each(|(s, ui)| *s += w * ui);
                }
            }
        }
        if total < 1e-12 {
            let nearest = self
                .anchors
                .iter()
                .min_by(|a, b| p.distance_squared(&a.0).total_cmp(&p.distance_squared(&b.0)))
                .expect("at least one anchor");
            return nearest.1.clone();
        }
        normalized(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use panogeo_core::aggregation::cosine_similarity;

    #[test]
    fn single_pano_dataset() {
        let mut c = SynthConfig::new(1, 8, 3);
        c.query_count = 1;
        let d = synth_dataset(&c, &AggregationMode::pinv()).unwrap();
        assert_eq!(d.database.len(), 1);
        assert!(d.database[0].views.is_some());
        assert_eq!(d.queries[0].truth, d.database[0].location);
    }

    #[test]
    fn zero_noise_queries_copy_views() {
        let mut c = SynthConfig::new(50, 16, 11);
        c.view_noise_sigma = 0.0;
        c.query_noise_sigma = 0.0;
        c.query_count = 20;
        let d = synth_dataset(&c, &AggregationMode::pinv()).unwrap();
        for q in &d.queries {
            let src = d.database.iter().find(|p| p.id == q.source).unwrap();
            assert_eq!(Some(&q.views), src.views.as_ref());
            assert_eq!(q.truth, src.location);
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let mut c = SynthConfig::new(64, 12, 99);
        c.placement = QueryPlacement::Offset;
        let a = synth_dataset(&c, &AggregationMode::pinv()).unwrap();
        let b = synth_dataset(&c, &AggregationMode::pinv()).unwrap();
        assert_eq!(a, b);
        c.seed = 100;
        assert_ne!(a, synth_dataset(&c, &AggregationMode::pinv()).unwrap());
    }

    #[test]
    fn grid_layout_and_ids() {
        let c = SynthConfig::new(10, 8, 1);
        let d = synth_dataset(&c, &AggregationMode::sum()).unwrap();
        assert_eq!(d.database[0].location, GeoPoint::new(0.0, 0.0));
        assert_eq!(d.database[5].location, GeoPoint::new(5.0, 5.0));
        assert_eq!(d.database[9].id, "p000009");
    }

    #[test]
    fn offset_queries_stay_within_one_spacing() {
        let mut c = SynthConfig::new(100, 8, 5);
        c.placement = QueryPlacement::Offset;
        let d = synth_dataset(&c, &AggregationMode::pinv()).unwrap();
        for q in &d.queries {
            let src = d.database.iter().find(|p| p.id == q.source).unwrap();
            assert!(q.truth.distance(&src.location) <= c.street_spacing + 1e-9);
        }
    }

    #[test]
    fn similarity_decays_with_distance() {
        let mut c = SynthConfig::new(900, 32, 7);
        c.view_noise_sigma = 0.0;
        let d = synth_dataset(&c, &AggregationMode::pinv()).unwrap();
        let mean_cos = |step: usize| {
            let mut total = 0.0;
            let mut count = 0;
            for row in 0..30 {
                for col in 0..(30 - step) {
                    let a = &d.database[row * 30 + col].memory.values;
                    let b = &d.database[row * 30 + col + step].memory.values;
                    total += cosine_similarity(a, b).unwrap();
                    count += 1;
                }
            }
            total / count as f64
        };
        let near = mean_cos(1);
        let mid = mean_cos(4);
        let far = mean_cos(20);
        assert!(near > mid && mid > far, "{near} {mid} {far}");
        assert!(far.abs() < 0.2);
    }

    #[test]
    fn invalid_configs() {
        let base = SynthConfig::new(10, 8, 0);
        let mut c = base.clone();
        c.pano_count = 0;
        assert!(synth_dataset(&c, &AggregationMode::pinv()).is_err());
        let mut c = base.clone();
        c.dim = 7;
        assert!(synth_dataset(&c, &AggregationMode::pinv()).is_err());
        let mut c = base.clone();
        c.view_noise_sigma = -1.0;
        assert!(synth_dataset(&c, &AggregationMode::pinv()).is_err());
        let mut c = base;
        c.anchor_count = 0;
        assert_eq!(
            synth_dataset(&c, &AggregationMode::pinv()).unwrap_err().name(),
            "InvalidConfig"
        );
    }
}
