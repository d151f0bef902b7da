//! Discrete speech units: a k-means codebook over frame features and the
//! run-length codec applied to unit sequences.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iters: 100,
            tol: 1e-6,
            seed,
        }
    }
}

/// Trained codebook. `vectors` is row-major `k x dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroids {
    pub k: usize,
    pub dim: usize,
    pub vectors: Vec<f64>,
    pub seed: u64,
    pub inertia: f64,
}

impl Centroids {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Text form: a `k dim seed inertia` header line, then one row per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {} {}\n", self.k, self.dim, self.seed, self.inertia);
        for i in 0..self.k {
            let row: Vec<String> = self.row(i).iter().map(f64::to_string).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("centroid file: {m}"));
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("missing header"))?.split_whitespace().collect();
        if header.len() != 4 {
            return Err(bad("header must be `k dim seed inertia`"));
        }
        let k: usize = header[0].parse().map_err(|_| bad("bad k"))?;
        let dim: usize = header[1].parse().map_err(|_| bad("bad dim"))?;
        let seed: u64 = header[2].parse().map_err(|_| bad("bad seed"))?;
        let inertia: f64 = header[3].parse().map_err(|_| bad("bad inertia"))?;
        let mut vectors = Vec::with_capacity(k * dim);
        for (i, line) in lines.enumerate() {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad(&format!("row {i}: bad value {t:?}"))))
                .collect::<Result<_>>()?;
            if row.len() != dim {
                return Err(bad(&format!("row {i} has {} values, expected {dim}", row.len())));
            }
            vectors.extend(row);
        }
        if vectors.len() != k * dim {
            return Err(bad(&format!("expected {k} rows")));
        }
        Ok(Self {
            k,
            dim,
            vectors,
            seed,
            inertia,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid by squared distance, ties to the lowest id.
fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(point, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Parallel over points; the inertia sum is reduced sequentially so the
/// result does not depend on thread scheduling.
fn assign_all(points: &[f64], centroids: &[f64], dim: usize) -> (Vec<usize>, f64) {
    let pairs: Vec<(usize, f64)> = points
        .par_chunks_exact(dim)
        .map(|p| nearest(p, centroids, dim))
        .collect();
    let inertia = pairs.iter().map(|&(_, d)| d).sum();
    (pairs.into_iter().map(|(c, _)| c).collect(), inertia)
}

fn kmeans_pp_init(points: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(row(rng.gen_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), &centroids[..dim])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            acc += d;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let pick = pick.expect("distinct points remain while fewer than k centroids are chosen");
        let start = centroids.len();
        centroids.extend_from_slice(row(pick));
        let new = &centroids[start..];
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), new));
        }
    }
    centroids
}

fn distinct_rows(points: &[f64], dim: usize, at_least: usize) -> bool {
    let mut seen = HashSet::new();
    for row in points.chunks_exact(dim) {
        seen.insert(row.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        if seen.len() >= at_least {
            return true;
        }
    }
    false
}

/// Inertia after every assignment step of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    pub inertia: Vec<f64>,
}

/// k-means++ seeding followed by Lloyd iterations.
///
/// `points` is row-major with `dim` columns. Stops when the relative inertia
/// change drops below `tol` or after `max_iters` updates. A cluster that
/// empties is re-seeded with the point farthest from its own centroid.
pub fn kmeans_fit(points: &[f64], dim: usize, cfg: &KMeansConfig) -> Result<Centroids> {
    kmeans_fit_traced(points, dim, cfg).map(|(c, _)| c)
}

pub fn kmeans_fit_traced(points: &[f64], dim: usize, cfg: &KMeansConfig) -> Result<(Centroids, FitTrace)> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::InvalidArgument(format!(
            "{} values do not form rows of {dim}",
            points.len()
        )));
    }
    if cfg.k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite feature value".into()));
    }
    let n = points.len() / dim;
    if n < cfg.k {
        return Err(Error::TooFewPoints { n, k: cfg.k });
    }
    if !distinct_rows(points, dim, cfg.k) {
        return Err(Error::InvalidArgument(format!("fewer than k={} distinct points", cfg.k)));
    }
    let k = cfg.k;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = kmeans_pp_init(points, dim, k, &mut rng);
    let (mut assignment, mut inertia) = assign_all(points, &centroids, dim);
    let mut trace = vec![inertia];

    for _ in 0..cfg.max_iters {
        let mut counts = vec![0usize; k];
        for &c in &assignment {
            counts[c] += 1;
        }
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let victim = (0..n)
                .filter(|&i| counts[assignment[i]] > 1)
                .max_by(|&a, &b| {
                    let da = sq_dist(&points[a * dim..(a + 1) * dim], &centroids[assignment[a] * dim..][..dim]);
                    let db = sq_dist(&points[b * dim..(b + 1) * dim], &centroids[assignment[b] * dim..][..dim]);
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .expect("n >= k leaves a cluster with a spare point");
            counts[assignment[victim]] -= 1;
            assignment[victim] = empty;
            counts[empty] = 1;
        }

        let mut sums = vec![0.0; k * dim];
        for (i, &c) in assignment.iter().enumerate() {
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(&points[i * dim..(i + 1) * dim]) {
                *s += v;
            }
        }
        for c in 0..k {
            for v in &mut sums[c * dim..(c + 1) * dim] {
                *v /= counts[c] as f64;
            }
        }
        centroids = sums;

        let prev = inertia;
        (assignment, inertia) = assign_all(points, &centroids, dim);
        trace.push(inertia);
        if prev == 0.0 || (prev - inertia).abs() / prev < cfg.tol {
            break;
        }
    }

    Ok((
        Centroids {
            k,
            dim,
            vectors: centroids,
            seed: cfg.seed,
            inertia,
        },
        FitTrace { inertia: trace },
    ))
}

/// Cluster indices, one per feature frame.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitSequence {
    pub units: Vec<u32>,
}

impl UnitSequence {
    pub fn new(units: Vec<u32>) -> Self {
        Self { units }
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// Maps every frame to its nearest centroid.
pub fn assign_units(points: &[f64], centroids: &Centroids) -> Result<UnitSequence> {
    if points.len() % centroids.dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: centroids.dim,
            actual: points.len() % centroids.dim,
        });
    }
    let units = points
        .chunks_exact(centroids.dim)
        .map(|p| nearest(p, &centroids.vectors, centroids.dim).0 as u32)
        .collect();
    Ok(UnitSequence { units })
}

/// Sum of squared distances from each frame to its assigned centroid.
pub fn inertia_of(points: &[f64], centroids: &Centroids, units: &UnitSequence) -> f64 {
    points
        .chunks_exact(centroids.dim)
        .zip(&units.units)
        .map(|(p, &u)| sq_dist(p, centroids.row(u as usize)))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub unit: u32,
    pub count: usize,
}

impl fmt::Display for Run {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.count == 1 {
            write!(f, "{}", self.unit)
        } else {
            write!(f, "{}*{}", self.unit, self.count)
        }
    }
}

impl FromStr for Run {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad unit token {s:?}"));
        let (unit, count) = match s.split_once('*') {
            Some((u, c)) => (u, c.parse().map_err(|_| bad())?),
            None => (s, 1),
        };
        Ok(Run {
            unit: unit.parse().map_err(|_| bad())?,
            count,
        })
    }
}

/// Run-length form of a unit sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CondensedUnits {
    pub runs: Vec<Run>,
}

impl CondensedUnits {
    /// The reduced sequence with repetitions collapsed and counts discarded.
    pub fn ids(&self) -> Vec<u32> {
        self.runs.iter().map(|r| r.unit).collect()
    }

    pub fn total_len(&self) -> usize {
        self.runs.iter().map(|r| r.count).sum()
    }

    /// Space-separated tokens, `id*count` for runs longer than one.
    pub fn to_line(&self) -> String {
        self.runs.iter().map(Run::to_string).collect::<Vec<_>>().join(" ")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        Ok(Self {
            runs: line.split_whitespace().map(str::parse).collect::<Result<_>>()?,
        })
    }
}

pub fn condense(seq: &UnitSequence) -> CondensedUnits {
    let mut runs: Vec<Run> = Vec::new();
    for &u in &seq.units {
        match runs.last_mut() {
            Some(r) if r.unit == u => r.count += 1,
            _ => runs.push(Run { unit: u, count: 1 }),
        }
    }
    CondensedUnits { runs }
}

pub fn expand(runs: &CondensedUnits) -> Result<UnitSequence> {
    let mut units = Vec::with_capacity(runs.total_len());
    for r in &runs.runs {
        if r.count < 1 {
            return Err(Error::InvalidRunLength(r.count));
        }
        units.extend(std::iter::repeat(r.unit).take(r.count));
    }
    Ok(UnitSequence { units })
}
