//! Candidate center positions for the swap search.
//!
//! Optimal facility positions are centroids of the clients they serve, so
//! the centroids of all small client subsets form a complete candidate space
//! on tiny instances. Larger instances use sampled centroids or a grid.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::geometry::{centroid_of, Point, PointSet};

/// Upper limit on enumerated subsets or grid points.
pub const ENUMERATION_GUARD: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyTag {
    SubsetCentroids,
    SampledCentroids,
    Grid,
    Clients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub points: PointSet,
    pub strategy_tag: StrategyTag,
}

/// How to build the candidate set; parses from `subset:4`, `sampled:500x8`,
/// `grid:32` or `clients`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CandidateStrategy {
    Subset { max_subset: usize },
    Sampled { n_samples: usize, sample_size: usize },
    Grid { resolution: usize },
    Clients,
}

impl Default for CandidateStrategy {
    fn default() -> Self {
        CandidateStrategy::Subset { max_subset: 4 }
    }
}

impl fmt::Display for CandidateStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CandidateStrategy::Subset { max_subset } => write!(f, "subset:{max_subset}"),
            CandidateStrategy::Sampled {
                n_samples,
                sample_size,
            } => write!(f, "sampled:{n_samples}x{sample_size}"),
            CandidateStrategy::Grid { resolution } => write!(f, "grid:{resolution}"),
            CandidateStrategy::Clients => f.write_str("clients"),
        }
    }
}

impl FromStr for CandidateStrategy {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || GeoError::InvalidParameter(format!("unrecognized candidate strategy {s:?}"));
        let num = |v: &str| v.trim().parse::<usize>().map_err(|_| bad());
        let s = s.trim();
        if s == "clients" {
            return Ok(CandidateStrategy::Clients);
        }
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "subset" => Ok(CandidateStrategy::Subset {
                max_subset: num(arg)?,
            }),
            "grid" => Ok(CandidateStrategy::Grid {
                resolution: num(arg)?,
            }),
            "sampled" => {
                let (a, b) = arg.split_once('x').ok_or_else(bad)?;
                Ok(CandidateStrategy::Sampled {
                    n_samples: num(a)?,
                    sample_size: num(b)?,
                })
            }
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for CandidateStrategy {
    type Error = GeoError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CandidateStrategy> for String {
    fn from(s: CandidateStrategy) -> String {
        s.to_string()
    }
}

impl CandidateStrategy {
    pub fn build(&self, clients: &PointSet, seed: u64) -> Result<CandidateSet> {
        match *self {
            CandidateStrategy::Subset { max_subset } => subset_centroids(clients, max_subset),
            CandidateStrategy::Sampled {
                n_samples,
                sample_size,
            } => sampled_centroids(clients, n_samples, sample_size, seed),
            CandidateStrategy::Grid { resolution } => grid_candidates(clients, resolution),
            CandidateStrategy::Clients => Ok(CandidateSet {
                points: dedup(clients.points().iter().cloned(), clients.dim()),
                strategy_tag: StrategyTag::Clients,
            }),
        }
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| {
        let scale = x.abs().max(y.abs()).max(1.0);
        (x - y).abs() <= 1e-12 * scale
    })
}

/// Keeps the first of any near-identical points, in input order.
fn dedup(points: impl Iterator<Item = Point>, dim: usize) -> PointSet {
    // Kept points sorted by first coordinate, so near matches form a contiguous run.
    let mut sorted: Vec<(Vec<f64>, usize)> = Vec::new();
    let mut out: Vec<Point> = Vec::new();
    for p in points {
        let key = p.coords()[0];
        let lo = sorted.partition_point(|(c, _)| c[0] < key - 1e-12 * key.abs().max(1.0));
        let dup = sorted[lo..]
            .iter()
            .take_while(|(c, _)| c[0] <= key + 1e-12 * key.abs().max(1.0))
            .any(|(c, _)| close(c, p.coords()));
        if !dup {
            let at = sorted.partition_point(|(c, _)| c[0] < key);
            sorted.insert(at, (p.coords().to_vec(), out.len()));
            out.push(p);
        }
    }
    PointSet::with_points(dim, out).expect("same dimension")
}

/// Centroids of all nonempty subsets of size at most `max_subset`.
pub fn subset_centroids(clients: &PointSet, max_subset: usize) -> Result<CandidateSet> {
    if clients.is_empty() {
        return Err(GeoError::EmptyPointSet);
    }
    if max_subset == 0 {
        return Err(GeoError::InvalidParameter("max_subset must be >= 1".into()));
    }
    let n = clients.len();
    let m = max_subset.min(n);
    let total: u128 = (1..=m as u128).map(|k| binomial(n as u128, k)).sum();
    if total > ENUMERATION_GUARD {
        return Err(GeoError::GuardExceeded(format!(
            "{total} subsets of size <= {m} from {n} clients; use sampled centroids instead"
        )));
    }
    let dim = clients.dim();
    let mut found = Vec::with_capacity(total as usize);
    let mut combo: Vec<usize> = Vec::with_capacity(m);
    for size in 1..=m {
        combo.clear();
        combo.extend(0..size);
        loop {
            let c = centroid_of(combo.iter().map(|&i| clients.get(i).coords()), dim);
            found.push(Point::new(c).expect("centroid of finite points"));
            // Next combination in lexicographic order.
            let Some(pos) = (0..size).rev().find(|&i| combo[i] < n - size + i) else {
                break;
            };
            combo[pos] += 1;
            for i in pos + 1..size {
                combo[i] = combo[i - 1] + 1;
            }
        }
    }
    Ok(CandidateSet {
        points: dedup(found.into_iter(), dim),
        strategy_tag: StrategyTag::SubsetCentroids,
    })
}

/// All client points followed by the centroids of `n_samples` random subsets
/// of `sample_size` clients.
pub fn sampled_centroids(
    clients: &PointSet,
    n_samples: usize,
    sample_size: usize,
    seed: u64,
) -> Result<CandidateSet> {
    if clients.is_empty() {
        return Err(GeoError::EmptyPointSet);
    }
    if n_samples == 0 {
        return Err(GeoError::InvalidParameter("n_samples must be >= 1".into()));
    }
    if sample_size == 0 || sample_size > clients.len() {
        return Err(GeoError::InvalidParameter(format!(
            "sample_size must be in 1..={}, got {sample_size}",
            clients.len()
        )));
    }
    let dim = clients.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n_samples).map(|_| {
        let idx = index::sample(&mut rng, clients.len(), sample_size);
        let c = centroid_of(idx.iter().map(|i| clients.get(i).coords()), dim);
        Point::new(c).expect("centroid of finite points")
    });
    let all: Vec<Point> = clients.points().iter().cloned().chain(samples).collect();
    Ok(CandidateSet {
        points: dedup(all.into_iter(), dim),
        strategy_tag: StrategyTag::SampledCentroids,
    })
}

/// `resolution^d` grid points spanning the bounding box inflated by 1% per side.
pub fn grid_candidates(clients: &PointSet, resolution: usize) -> Result<CandidateSet> {
    let (lo, hi) = clients.bounding_box().ok_or(GeoError::EmptyPointSet)?;
    if resolution == 0 {
        return Err(GeoError::InvalidParameter("resolution must be >= 1".into()));
    }
    let dim = clients.dim();
    let count = (resolution as u128).checked_pow(dim as u32);
    if count.is_none_or(|c| c > ENUMERATION_GUARD) {
        return Err(GeoError::GuardExceeded(format!(
            "grid of {resolution}^{dim} points exceeds {ENUMERATION_GUARD}"
        )));
    }
    let axes: Vec<Vec<f64>> = lo
        .iter()
        .zip(&hi)
        .map(|(&a, &b)| {
            let pad = 0.01 * (b - a);
            let (a, b) = (a - pad, b + pad);
            if resolution == 1 {
                vec![0.5 * (a + b)]
            } else {
                (0..resolution)
                    .map(|i| a + (b - a) * i as f64 / (resolution - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let total = count.expect("checked") as usize;
    let mut pts = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        pts.push(Point::new(idx.iter().enumerate().map(|(j, &i)| axes[j][i]).collect())?);
        for j in (0..dim).rev() {
            idx[j] += 1;
            if idx[j] < resolution {
                break;
            }
            idx[j] = 0;
        }
    }
    Ok(CandidateSet {
        points: dedup(pts.into_iter(), dim),
        strategy_tag: StrategyTag::Grid,
    })
}
