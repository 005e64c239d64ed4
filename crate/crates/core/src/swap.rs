//! Best-improvement multi-swap search shared by both solvers.
//!
//! A swap removes a subset `A` of the current centers and opens a subset `B`
//! of a fixed candidate set, with `|A| + |B| <= cap`. The search returns the
//! cheapest swap whose cost is strictly below a threshold, breaking ties by
//! the smallest `(|A| + |B|, sorted A, sorted B)`.
//!
//! For each `A` the additions are explored depth-first in decreasing order of
//! their single-candidate gain. Gains measured against `F ∖ A` only shrink as
//! more candidates open, so a prefix of the sorted gains bounds what any
//! extension can save and whole subtrees are cut.

use std::cmp::Ordering;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::geometry::{sq_dist_slices, PointSet};

/// Largest number of removal sets enumerated per search.
pub const REMOVAL_GUARD: u128 = 50_000_000;
/// Largest client-by-candidate distance table.
pub const TABLE_GUARD: usize = 100_000_000;

/// Indices of removed centers (into the current set) and opened candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapMove {
    pub remove: Vec<usize>,
    pub add: Vec<usize>,
    pub cost: f64,
}

impl SwapMove {
    pub fn size(&self) -> usize {
        self.remove.len() + self.add.len()
    }

    fn key_cmp(&self, other: &SwapMove) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.size().cmp(&other.size()))
            .then_with(|| self.remove.cmp(&other.remove))
            .then_with(|| self.add.cmp(&other.add))
    }

    /// The center set after the swap: kept centers in order, then the opened ones.
    pub fn apply(&self, centers: &PointSet, candidates: &PointSet) -> PointSet {
        let mut out = PointSet::empty(centers.dim());
        for (i, p) in centers.iter().enumerate() {
            if self.remove.binary_search(&i).is_err() {
                out.push_unchecked(p.clone());
            }
        }
        for &b in &self.add {
            out.push_unchecked(candidates.get(b).clone());
        }
        out
    }
}

/// Squared distances from every client to every candidate, candidate-major.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    pub candidates: PointSet,
    n_clients: usize,
    table: Vec<f64>,
}

impl DistanceTable {
    pub fn new(clients: &PointSet, candidates: PointSet) -> Result<Self> {
        candidates.check_dim(clients.dim())?;
        let n = clients.len();
        let size = n.saturating_mul(candidates.len());
        if size > TABLE_GUARD {
            return Err(GeoError::GuardExceeded(format!(
                "{n} clients x {} candidates exceeds the distance table limit",
                candidates.len()
            )));
        }
        let table: Vec<f64> = candidates
            .points()
            .par_iter()
            .flat_map_iter(|b| clients.iter().map(move |c| sq_dist_slices(c.coords(), b.coords())))
            .collect();
        Ok(Self {
            candidates,
            n_clients: n,
            table,
        })
    }

    #[inline]
    fn row(&self, b: usize) -> &[f64] {
        &self.table[b * self.n_clients..(b + 1) * self.n_clients]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SwapLimits {
    /// Bound on `|A| + |B|`.
    pub cap: usize,
    /// Bound on the number of centers after the swap.
    pub max_centers: Option<usize>,
}

/// Cheapest swap with cost strictly below `threshold`, where cost is
/// `open_cost * |F'| + Σ_c d(c, F')²`.
pub fn best_swap(
    clients: &PointSet,
    centers: &PointSet,
    table: &DistanceTable,
    open_cost: f64,
    limits: SwapLimits,
    threshold: f64,
) -> Result<Option<SwapMove>> {
    if centers.is_empty() {
        return Err(GeoError::EmptyReferenceSet);
    }
    clients.check_dim(centers.dim())?;
    let n_f = centers.len();
    let max_remove = limits.cap.min(n_f);
    let removal_sets: u128 = (0..=max_remove as u128)
        .map(|a| binomial(n_f as u128, a))
        .sum();
    if removal_sets > REMOVAL_GUARD {
        return Err(GeoError::GuardExceeded(format!(
            "{removal_sets} removal sets for {n_f} centers with cap {}; lower the swap cap",
            limits.cap
        )));
    }
    let ctx = Context::new(clients, centers, table, open_cost, limits);
    let bound = AtomicU64::new(threshold.to_bits());

    // Work items: the empty removal, then removals grouped by their first element.
    let mut firsts: Vec<Option<usize>> = vec![None];
    if max_remove >= 1 {
        firsts.extend((0..n_f).map(Some));
    }
    let best = firsts
        .into_par_iter()
        .map(|first| {
            let mut search = Search::new(&ctx, &bound, threshold);
            match first {
                None => search.removal(&[]),
                Some(a0) => {
                    let mut rest: Vec<usize> = vec![a0];
                    search.removals_from(&mut rest, a0 + 1, max_remove);
                }
            }
            search.best
        })
        .reduce(
            || None,
            |a, b| match (a, b) {
                (Some(a), Some(b)) => Some(if b.key_cmp(&a) == Ordering::Less { b } else { a }),
                (a, None) => a,
                (None, b) => b,
            },
        );
    Ok(best)
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

struct Context<'a> {
    table: &'a DistanceTable,
    open_cost: f64,
    limits: SwapLimits,
    n_f: usize,
    /// Per client, the nearest `cap + 1` centers as `(dist², index)`.
    nearest: Vec<Vec<(f64, usize)>>,
    /// Per client, distances to every center (client-major), used when the short list runs out.
    center_dist: Vec<f64>,
    base_gain: Vec<f64>,
    usable: Vec<bool>,
}

impl<'a> Context<'a> {
    fn new(
        clients: &PointSet,
        centers: &PointSet,
        table: &'a DistanceTable,
        open_cost: f64,
        limits: SwapLimits,
    ) -> Self {
        let n_f = centers.len();
        let keep = (limits.cap + 1).min(n_f);
        let center_dist: Vec<f64> = clients
            .iter()
            .flat_map(|c| centers.iter().map(move |q| sq_dist_slices(c.coords(), q.coords())))
            .collect();
        let nearest: Vec<Vec<(f64, usize)>> = (0..clients.len())
            .map(|c| {
                let row = &center_dist[c * n_f..(c + 1) * n_f];
                let mut v: Vec<(f64, usize)> = row.iter().copied().zip(0..).collect();
                let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                if keep < v.len() {
                    v.select_nth_unstable_by(keep, cmp);
                    v.truncate(keep);
                }
                v.sort_by(cmp);
                v
            })
            .collect();
        // Opening a copy of an existing center never helps.
        let usable: Vec<bool> = table
            .candidates
            .iter()
            .map(|b| !centers.iter().any(|q| q.same_location(b)))
            .collect();
        let base: Vec<f64> = nearest.iter().map(|v| v[0].0).collect();
        let base_gain = (0..table.candidates.len())
            .into_par_iter()
            .map(|b| gain(table.row(b), &base))
            .collect();
        Self {
            table,
            open_cost,
            limits,
            n_f,
            nearest,
            center_dist,
            base_gain,
            usable,
        }
    }

    /// `d(c, F ∖ A)²`, or infinity when nothing is left.
    fn residual(&self, c: usize, removed: &[usize]) -> f64 {
        for &(d, i) in &self.nearest[c] {
            if !removed.contains(&i) {
                return d;
            }
        }
        if self.nearest[c].len() == self.n_f {
            return f64::INFINITY;
        }
        let row = &self.center_dist[c * self.n_f..(c + 1) * self.n_f];
        row.iter()
            .enumerate()
            .filter(|(i, _)| !removed.contains(i))
            .map(|(_, &d)| d)
            .fold(f64::INFINITY, f64::min)
    }
}

fn gain(row: &[f64], base: &[f64]) -> f64 {
    row.iter().zip(base).map(|(&d, &e)| (e - d).max(0.0)).sum()
}

struct Search<'c, 'a> {
    ctx: &'c Context<'a>,
    bound: &'c AtomicU64,
    threshold: f64,
    best: Option<SwapMove>,
}

impl<'c, 'a> Search<'c, 'a> {
    fn new(ctx: &'c Context<'a>, bound: &'c AtomicU64, threshold: f64) -> Self {
        Self {
            ctx,
            bound,
            threshold,
            best: None,
        }
    }

    fn removals_from(&mut self, current: &mut Vec<usize>, start: usize, max_remove: usize) {
        self.removal(current);
        if current.len() == max_remove {
            return;
        }
        for a in start..self.ctx.n_f {
            current.push(a);
            self.removals_from(current, a + 1, max_remove);
            current.pop();
        }
    }

    fn bound(&self) -> f64 {
        f64::from_bits(self.bound.load(AtomicOrdering::Relaxed))
    }

    /// True when a lower bound cannot lead to an acceptable swap.
    fn hopeless(&self, lb: f64) -> bool {
        let tol = 1e-9 * lb.abs().max(1e-300);
        let lb = lb - tol;
        lb >= self.threshold || lb > self.bound()
    }

    fn offer(&mut self, mv: SwapMove) {
        if !(mv.cost < self.threshold) {
            return;
        }
        if self
            .best
            .as_ref()
            .is_some_and(|b| mv.key_cmp(b) != Ordering::Less)
        {
            return;
        }
        let mut cur = self.bound.load(AtomicOrdering::Relaxed);
        while mv.cost < f64::from_bits(cur) {
            match self.bound.compare_exchange_weak(
                cur,
                mv.cost.to_bits(),
                AtomicOrdering::Relaxed,
                AtomicOrdering::Relaxed,
            ) {
                Ok(_) => break,
                Err(now) => cur = now,
            }
        }
        self.best = Some(mv);
    }

    fn removal(&mut self, removed: &[usize]) {
        let ctx = self.ctx;
        let n_f = ctx.n_f;
        let kept = n_f - removed.len();
        let slots = ctx.limits.cap - removed.len();
        let max_add = match ctx.limits.max_centers {
            Some(m) if m < kept => return,
            Some(m) => slots.min(m - kept),
            None => slots,
        };
        if kept == 0 && max_add == 0 {
            return;
        }
        let n = ctx.nearest.len();
        let residual: Vec<f64> = (0..n).map(|c| ctx.residual(c, removed)).collect();
        let empty = kept == 0;
        let conn: f64 = residual.iter().sum();
        let root_cost = ctx.open_cost * kept as f64 + conn;

        // Gains against F ∖ A; only clients whose nearest center was removed change.
        let affected: Vec<usize> = (0..n)
            .filter(|&c| removed.contains(&ctx.nearest[c][0].1))
            .collect();
        let mut order: Vec<(f64, usize)> = (0..ctx.table.candidates.len())
            .filter(|&b| ctx.usable[b])
            .filter_map(|b| {
                let g = if empty {
                    f64::INFINITY
                } else if affected.is_empty() {
                    ctx.base_gain[b]
                } else {
                    let row = ctx.table.row(b);
                    affected.iter().fold(ctx.base_gain[b], |g, &c| {
                        let d = row[c];
                        g + (residual[c] - d).max(0.0) - (ctx.nearest[c][0].0 - d).max(0.0)
                    })
                };
                let net = g - ctx.open_cost;
                (net > 0.0).then_some((net, b))
            })
            .collect();
        if !empty {
            self.offer(SwapMove {
                remove: removed.to_vec(),
                add: Vec::new(),
                cost: root_cost,
            });
            let top: f64 = top_sum(&mut order, max_add);
            if self.hopeless(root_cost - top) {
                return;
            }
        }
        if max_add == 0 || order.is_empty() {
            return;
        }
        order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        let mut prefix = Vec::with_capacity(order.len() + 1);
        prefix.push(0.0);
        for &(g, _) in &order {
            prefix.push(prefix.last().unwrap() + g);
        }
        let mut added = Vec::with_capacity(max_add);
        self.additions(removed, &residual, root_cost, kept, empty, &order, &prefix, 0, max_add, &mut added);
    }

    #[allow(clippy::too_many_arguments)]
    fn additions(
        &mut self,
        removed: &[usize],
        minima: &[f64],
        cost: f64,
        count: usize,
        empty: bool,
        order: &[(f64, usize)],
        prefix: &[f64],
        start: usize,
        remaining: usize,
        added: &mut Vec<usize>,
    ) {
        let ctx = self.ctx;
        let mut next = vec![0.0; minima.len()];
        for p in start..order.len() {
            let b = order[p].1;
            // Best case: b plus the largest remaining gains after it.
            if !(empty && count == 0) {
                let end = (p + remaining).min(order.len());
                let lb = cost - order[p].0 - (prefix[end] - prefix[p + 1]);
                if self.hopeless(lb) {
                    break;
                }
            }
            let row = ctx.table.row(b);
            let mut conn = 0.0;
            for (c, slot) in next.iter_mut().enumerate() {
                *slot = minima[c].min(row[c]);
                conn += *slot;
            }
            let new_count = count + 1;
            let child_cost = ctx.open_cost * new_count as f64 + conn;
            added.push(b);
            let mut add = added.clone();
            add.sort_unstable();
            self.offer(SwapMove {
                remove: removed.to_vec(),
                add,
                cost: child_cost,
            });
            if remaining > 1 {
                self.additions(
                    removed, &next, child_cost, new_count, false, order, prefix, p + 1,
                    remaining - 1, added,
                );
            }
            added.pop();
        }
    }
}

/// Sum of the `r` largest `.0` values (reorders `v`).
fn top_sum(v: &mut [(f64, usize)], r: usize) -> f64 {
    if r == 0 || v.is_empty() {
        return 0.0;
    }
    let r = r.min(v.len());
    if r < v.len() {
        v.select_nth_unstable_by(r - 1, |x, y| y.0.total_cmp(&x.0));
    }
    v[..r].iter().map(|x| x.0).sum()
}
