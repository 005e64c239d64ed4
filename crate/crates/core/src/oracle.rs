//! Exact solvers for tiny instances by enumerating set partitions.
//!
//! For a fixed partition of the clients the best center of each block is its
//! centroid, so minimizing over partitions gives the exact optimum.

use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::geometry::{centroid_of, sq_dist_slices, Point, PointSet};

pub const MAX_ORACLE_POINTS: usize = 12;

pub const BELL: [u64; 13] = [
    1, 1, 2, 5, 15, 52, 203, 877, 4140, 21147, 115975, 678570, 4213597,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub opt_cost: f64,
    /// Blocks of client indices, each ascending, ordered by first element.
    pub opt_partition: Vec<Vec<usize>>,
    /// Centroid of each block, in block order.
    pub opt_centers: PointSet,
}

/// Set partitions of `0..n` with at most `max_blocks` blocks, as restricted
/// growth strings in lexicographic order. Entry `i` is the block of element `i`.
#[derive(Debug, Clone)]
pub struct Partitions {
    rgs: Vec<usize>,
    max_blocks: usize,
    done: bool,
}

pub fn enumerate_partitions(n: usize, max_blocks: usize) -> Result<Partitions> {
    if n > MAX_ORACLE_POINTS {
        return Err(GeoError::GuardExceeded(format!(
            "partition enumeration limited to n <= {MAX_ORACLE_POINTS}, got {n}"
        )));
    }
    Ok(Partitions {
        rgs: vec![0; n],
        max_blocks,
        done: max_blocks == 0 && n > 0,
    })
}

impl Iterator for Partitions {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.rgs.clone();
        // Advance: rightmost position that can still grow.
        let n = self.rgs.len();
        let mut prefix_max = vec![0usize; n];
        for i in 1..n {
            prefix_max[i] = prefix_max[i - 1].max(self.rgs[i - 1]);
        }
        let pos = (1..n).rev().find(|&i| {
            let limit = (prefix_max[i] + 1).min(self.max_blocks - 1);
            self.rgs[i] < limit
        });
        match pos {
            Some(i) => {
                self.rgs[i] += 1;
                for v in &mut self.rgs[i + 1..] {
                    *v = 0;
                }
            }
            None => self.done = true,
        }
        Some(out)
    }
}

/// Within-block squared error about the centroid for every subset bitmask.
fn sse_table(points: &PointSet) -> Vec<f64> {
    let n = points.len();
    let dim = points.dim();
    (0..1usize << n)
        .map(|mask| {
            if mask == 0 {
                return 0.0;
            }
            let members = || (0..n).filter(move |i| mask >> i & 1 == 1).map(|i| points.get(i).coords());
            let c = centroid_of(members(), dim);
            members().map(|p| sq_dist_slices(p, &c)).sum()
        })
        .collect()
}

fn blocks_of(rgs: &[usize]) -> Vec<usize> {
    let count = rgs.iter().copied().max().map_or(0, |m| m + 1);
    let mut masks = vec![0usize; count];
    for (i, &b) in rgs.iter().enumerate() {
        masks[b] |= 1 << i;
    }
    masks
}

fn search(points: &PointSet, max_blocks: usize, open_cost: f64) -> Result<OracleResult> {
    if points.is_empty() {
        return Err(GeoError::EmptyPointSet);
    }
    let table = sse_table(points);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for rgs in enumerate_partitions(points.len(), max_blocks)? {
        let masks = blocks_of(&rgs);
        let cost = open_cost * masks.len() as f64 + masks.iter().map(|&m| table[m]).sum::<f64>();
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, masks));
        }
    }
    let (opt_cost, masks) = best.expect("at least one partition");
    let n = points.len();
    let opt_partition: Vec<Vec<usize>> = masks
        .iter()
        .map(|&m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect();
    let centers = opt_partition
        .iter()
        .map(|b| Point::new(centroid_of(b.iter().map(|&i| points.get(i).coords()), points.dim())))
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleResult {
        opt_cost,
        opt_partition,
        opt_centers: PointSet::with_points(points.dim(), centers)?,
    })
}

/// Exact SOS-FL optimum: `f * blocks + Σ block SSE` over all partitions.
pub fn exact_sosfl(clients: &PointSet, f: f64) -> Result<OracleResult> {
    if !(f > 0.0) {
        return Err(GeoError::InvalidParameter(format!("facility cost must be > 0, got {f}")));
    }
    search(clients, clients.len().max(1), f)
}

/// Exact k-means optimum over partitions into at most `k` blocks.
pub fn exact_kmeans(points: &PointSet, k: usize) -> Result<OracleResult> {
    if k == 0 || k > points.len().max(1) {
        return Err(GeoError::InvalidParameter(format!(
            "k must be in 1..={}, got {k}",
            points.len()
        )));
    }
    search(points, k, 0.0)
}
