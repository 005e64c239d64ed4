//! Ball separators with a small net.
//!
//! For a point set `X` and size parameter `mu`, [`separate`] returns a ball `B`
//! holding a constant multiple of `mu` points of `X` and a net `Z` such that,
//! for every point `p` of space,
//!
//! ```text
//! d(p, Z) <= max(d(p, X \ B), d(p, X ∩ B))
//! ```
//!
//! # Construction
//!
//! The center is the point of `X` whose `mu`-th nearest neighbor is closest.
//! The radius is that neighbor distance times a seeded factor in `[1, 2]`,
//! clamped so the inside count stays within `[c_lo·mu, c_hi·mu]`.
//!
//! The net is a minimum vertex cover of the *crossing empty-ball graph*: pairs
//! `(x, y)` with `x` inside, `y` outside, such that some closed ball with `x`
//! and `y` on its boundary has no point of `X` in its interior. For a query `p`
//! let `R = max(a, b)` with `a, b` the distances to the nearest inside and
//! outside points. The ball of radius `R` about `p` already holds a point of
//! each side; shrinking it toward the farther of the two, while keeping that
//! point on the boundary, ends at an empty ball through a crossing pair, and
//! both members lie within `R` of `p`. Any cover of the crossing pairs
//! therefore meets the distance bound. Pair emptiness is a small LP over the
//! bisector hyperplane, solved with [`crate::lp`].
//!
//! Each result is re-checked on an internal query sample. A violation (only
//! possible through floating-point trouble in the LP) triggers densification
//! rounds. If those do not fix it, the net falls back to `X ∩ B`, which meets
//! the bound trivially but may exceed the size budget.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::geometry::{sq_dist_slices, Point, PointSet};
use crate::lp;

/// Relative slack for closed-ball membership.
pub const MEMBERSHIP_SLACK: f64 = 1e-12;
/// Relative tolerance used when comparing both sides of the distance bound.
pub const CONTRACT_TOLERANCE: f64 = 1e-9;
pub const MAX_DENSIFY_ROUNDS: u32 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(GeoError::InvalidParameter(format!(
                "ball radius must be finite and >= 0, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    /// Closed membership with [`MEMBERSHIP_SLACK`] relative slack.
    #[inline]
    pub fn contains(&self, p: &[f64]) -> bool {
        sq_dist_slices(p, self.center.coords())
            <= self.radius * self.radius * (1.0 + MEMBERSHIP_SLACK)
    }

    /// Smallest ball about the bounding-box center that holds every point.
    pub fn bounding(points: &PointSet) -> Option<Ball> {
        let (lo, hi) = points.bounding_box()?;
        let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let radius = 0.5 * sq_dist_slices(&lo, &hi).sqrt();
        // Half-diagonal can round below the farthest corner; widen until every point is in.
        let far = points
            .iter()
            .map(|p| sq_dist_slices(p.coords(), &center))
            .fold(0.0f64, f64::max)
            .sqrt();
        Some(Ball {
            center: Point::new(center).ok()?,
            radius: radius.max(far),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparatorParams {
    /// Lower inside-count multiplier.
    pub c_lo: f64,
    /// Upper inside-count multiplier.
    pub c_hi: f64,
    /// Net size budget multiplier on `mu^(1 - 1/d)`.
    pub kappa: f64,
    /// Number of jittered candidate spheres tried; the smallest net wins.
    pub shell_layers: usize,
    pub radius_jitter_seed: u64,
    /// `X` must hold more than `alpha * mu` points.
    pub alpha: f64,
}

impl Default for SeparatorParams {
    fn default() -> Self {
        Self {
            c_lo: 0.25,
            c_hi: 4.0,
            kappa: 8.0,
            shell_layers: 4,
            radius_jitter_seed: 0,
            alpha: 8.0,
        }
    }
}

impl SeparatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_lo >= 0.25) || !(self.c_hi >= self.c_lo) {
            return Err(GeoError::InvalidParameter(format!(
                "need c_lo >= 1/4 and c_hi >= c_lo, got c_lo={} c_hi={}",
                self.c_lo, self.c_hi
            )));
        }
        if !(self.kappa > 0.0) {
            return Err(GeoError::InvalidParameter("kappa must be > 0".into()));
        }
        if self.shell_layers == 0 {
            return Err(GeoError::InvalidParameter("shell_layers must be >= 1".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(GeoError::InvalidParameter("alpha must be > 0".into()));
        }
        Ok(())
    }

    /// `kappa * mu^(1 - 1/d)`.
    pub fn net_budget(&self, mu: usize, dim: usize) -> f64 {
        self.kappa * (mu as f64).powf(1.0 - 1.0 / dim as f64)
    }

    /// The closed inside-count window `[ceil(c_lo mu), floor(c_hi mu)]`.
    pub fn window(&self, mu: usize) -> (usize, usize) {
        let lo = (self.c_lo * mu as f64 - 1e-9).ceil().max(1.0) as usize;
        let hi = (self.c_hi * mu as f64 + 1e-9).floor() as usize;
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatorResult {
    pub ball: Ball,
    pub net: PointSet,
    pub inside_count: usize,
    pub densify_rounds: u32,
    /// The net is `X ∩ B` because the regular construction could not be used.
    pub fallback: bool,
}

impl SeparatorResult {
    pub fn within_budget(&self, params: &SeparatorParams, mu: usize) -> bool {
        self.net.len() as f64 <= params.net_budget(mu, self.net.dim())
    }
}

/// Anything that produces a ball and net for `PARTITION`.
pub trait Separator {
    fn separate(&self, x: &PointSet, mu: usize) -> Result<SeparatorResult>;
}

/// The construction described in the module docs.
#[derive(Debug, Clone, Default)]
pub struct BallNetSeparator {
    pub params: SeparatorParams,
}

impl Separator for BallNetSeparator {
    fn separate(&self, x: &PointSet, mu: usize) -> Result<SeparatorResult> {
        separate(x, mu, &self.params)
    }
}

/// Fault injection: the regular ball with an empty net. Used to confirm the
/// lemma checkers notice a broken separator.
#[derive(Debug, Clone, Default)]
pub struct EmptyNetSeparator {
    pub params: SeparatorParams,
}

impl Separator for EmptyNetSeparator {
    fn separate(&self, x: &PointSet, mu: usize) -> Result<SeparatorResult> {
        let mut res = separate(x, mu, &self.params)?;
        res.net = PointSet::empty(x.dim());
        Ok(res)
    }
}

pub fn separate(x: &PointSet, mu: usize, params: &SeparatorParams) -> Result<SeparatorResult> {
    params.validate()?;
    if mu == 0 {
        return Err(GeoError::InvalidParameter("mu must be >= 1".into()));
    }
    let n = x.len();
    let threshold = params.alpha * mu as f64;
    if n as f64 <= threshold {
        return Err(GeoError::SetTooSmall { size: n, threshold });
    }
    let dim = x.dim();
    let (center_idx, base_sq) = densest_center(x, mu);
    let center = x.get(center_idx).clone();
    let base = base_sq.sqrt();

    let mut sorted_sq: Vec<f64> = x
        .iter()
        .map(|p| sq_dist_slices(p.coords(), center.coords()))
        .collect();
    sorted_sq.sort_by(f64::total_cmp);

    let window = params.window(mu);
    let mut rng = ChaCha8Rng::seed_from_u64(params.radius_jitter_seed);
    let mut best: Option<(Ball, Vec<usize>)> = None;
    let budget = params.net_budget(mu, dim);
    // Extra draws only while the best net is still over budget.
    for attempt in 0..4 * params.shell_layers {
        if attempt >= params.shell_layers
            && best.as_ref().is_some_and(|(_, c)| c.len() as f64 <= budget)
        {
            break;
        }
        let factor: f64 = rng.random_range(1.0..=2.0);
        let Some(radius) = clamp_radius(&sorted_sq, base * factor, window) else {
            continue;
        };
        let ball = Ball {
            center: center.clone(),
            radius,
        };
        let cover = crossing_cover(x, &ball);
        if best.as_ref().is_none_or(|(_, c)| cover.len() < c.len()) {
            best = Some((ball, cover));
        }
    }

    let Some((ball, cover)) = best else {
        log::warn!("separator: inside-count window {window:?} unattainable; using X ∩ B");
        let ball = Ball {
            center,
            radius: base,
        };
        return Ok(fallback_result(x, ball, 1));
    };

    let mut net = points_of(x, &cover);
    let inside_count = count_inside(x, &ball);
    let mut rounds = 0u32;
    let queries = internal_queries(x, &ball, params.radius_jitter_seed ^ 0x5eed_c0de);
    while contract_violations(x, &ball, &net, &queries) > 0 {
        rounds += 1;
        if rounds > MAX_DENSIFY_ROUNDS {
            log::warn!("separator: contract still violated after densification; using X ∩ B");
            return Ok(fallback_result(x, ball, rounds));
        }
        log::debug!("separator: densification round {rounds}");
        net = densify(x, &ball, &net, rounds);
    }
    if !(net.len() as f64 <= params.net_budget(mu, dim)) {
        log::debug!(
            "separator: net of {} points exceeds budget {:.1}",
            net.len(),
            params.net_budget(mu, dim)
        );
    }
    Ok(SeparatorResult {
        ball,
        net,
        inside_count,
        densify_rounds: rounds,
        fallback: false,
    })
}

fn fallback_result(x: &PointSet, ball: Ball, rounds: u32) -> SeparatorResult {
    let inside: Vec<usize> = (0..x.len()).filter(|&i| ball.contains(x.get(i).coords())).collect();
    SeparatorResult {
        inside_count: inside.len(),
        net: points_of(x, &inside),
        ball,
        densify_rounds: rounds.max(1),
        fallback: true,
    }
}

fn count_inside(x: &PointSet, ball: &Ball) -> usize {
    x.iter().filter(|p| ball.contains(p.coords())).count()
}

/// Point minimizing its squared distance to its `mu`-th nearest neighbor.
fn densest_center(x: &PointSet, mu: usize) -> (usize, f64) {
    let n = x.len();
    let k = mu.min(n - 1).max(1);
    let mut buf = Vec::with_capacity(n);
    let mut best = (0usize, f64::INFINITY);
    for (i, p) in x.iter().enumerate() {
        buf.clear();
        buf.extend(
            x.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| sq_dist_slices(p.coords(), q.coords())),
        );
        if buf.is_empty() {
            return (0, 0.0);
        }
        let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
        if *kth < best.1 {
            best = (i, *kth);
        }
    }
    best
}

/// Adjust `radius` so the closed ball holds between `window.0` and `window.1`
/// points. `sorted_sq` are ascending squared distances from the center.
fn clamp_radius(sorted_sq: &[f64], radius: f64, window: (usize, usize)) -> Option<f64> {
    let (lo, hi) = window;
    let n = sorted_sq.len();
    let inside = |r: f64| {
        let lim = r * r * (1.0 + MEMBERSHIP_SLACK);
        sorted_sq.partition_point(|&d| d <= lim)
    };
    // Radius strictly between the m-th and (m+1)-th distance, so exactly m points are inside.
    let gap_radius = |m: usize| -> Option<f64> {
        if m == 0 || m > n {
            return None;
        }
        if m == n {
            return Some(sorted_sq[n - 1].sqrt());
        }
        let (a, b) = (sorted_sq[m - 1].sqrt(), sorted_sq[m].sqrt());
        let r = 0.5 * (a + b);
        (inside(r) == m).then_some(r)
    };
    let count = inside(radius);
    let r = if count > hi {
        (lo..=hi.min(n)).rev().find_map(gap_radius)?
    } else if count < lo {
        (lo..=hi.min(n)).find_map(gap_radius)?
    } else {
        radius
    };
    let c = inside(r);
    (lo <= c && c <= hi).then_some(r)
}

fn points_of(x: &PointSet, indices: &[usize]) -> PointSet {
    let mut out = PointSet::empty(x.dim());
    for &i in indices {
        out.push_unique(x.get(i).clone());
    }
    out
}

/// Indices of a minimum vertex cover of the crossing empty-ball graph, ascending.
fn crossing_cover(x: &PointSet, ball: &Ball) -> Vec<usize> {
    let (inside, outside): (Vec<usize>, Vec<usize>) =
        (0..x.len()).partition(|&i| ball.contains(x.get(i).coords()));
    if inside.is_empty() || outside.is_empty() {
        return Vec::new();
    }
    let adj = crossing_edges(x, &inside, &outside);
    let (left, right) = min_vertex_cover(outside.len(), &adj);
    let mut cover: Vec<usize> = left
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c)
        .map(|(i, _)| inside[i])
        .chain(
            right
                .iter()
                .enumerate()
                .filter(|&(_, &c)| c)
                .map(|(j, _)| outside[j]),
        )
        .collect();
    cover.sort_unstable();
    cover
}

/// For each inside point (by position in `inside`), the positions in `outside`
/// it forms an empty-ball pair with. Errs toward including pairs.
fn crossing_edges(x: &PointSet, inside: &[usize], outside: &[usize]) -> Vec<Vec<usize>> {
    let scale = x
        .bounding_box()
        .map(|(lo, hi)| sq_dist_slices(&lo, &hi).sqrt())
        .unwrap_or(1.0)
        .max(f64::MIN_POSITIVE);
    let knn = nearest_neighbors(x, PROBE_NEIGHBORS);
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(0x0dd_ba11));
    let shared = Shared {
        x,
        knn: &knn,
        order: &order,
        bound: 1e7 * scale,
    };
    inside
        .par_iter()
        .map_init(
            || PairTester::new(x.dim()),
            |tester, &xi| {
                outside
                    .iter()
                    .enumerate()
                    .filter(|&(_, &yi)| tester.empty_ball_exists(&shared, xi, yi))
                    .map(|(j, _)| j)
                    .collect()
            },
        )
        .collect()
}

/// Neighbors of each endpoint used for the cheap rejection probe.
const PROBE_NEIGHBORS: usize = 16;

fn nearest_neighbors(x: &PointSet, k: usize) -> Vec<Vec<usize>> {
    let n = x.len();
    let k = k.min(n.saturating_sub(1));
    (0..n)
        .into_par_iter()
        .map(|i| {
            let p = x.get(i).coords();
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist_slices(p, x.get(j).coords()), j))
                .collect();
            if k < d.len() {
                d.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0));
            }
            d.truncate(k);
            d.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

struct Shared<'a> {
    x: &'a PointSet,
    knn: &'a [Vec<usize>],
    order: &'a [usize],
    bound: f64,
}

struct PairTester {
    dim: usize,
    rows: Vec<f64>,
    obj: Vec<f64>,
    interval: [f64; 2],
}

impl PairTester {
    fn new(dim: usize) -> Self {
        let k = dim.saturating_sub(1);
        Self {
            dim,
            rows: Vec::new(),
            obj: (0..k).map(|i| 1.0 / (1.0 + 0.618_034 * i as f64)).collect(),
            interval: [0.0; 2],
        }
    }

    /// Is there a closed ball with `x_i`, `x_j` on its boundary and no point
    /// of `X` strictly inside?
    fn empty_ball_exists(&mut self, sh: &Shared<'_>, xi: usize, yi: usize) -> bool {
        let x = sh.x;
        let a = x.get(xi).coords();
        let b = x.get(yi).coords();
        let mid: Vec<f64> = a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect();
        let half: Vec<f64> = a.iter().zip(&mid).map(|(p, m)| p - m).collect();
        let h2: f64 = half.iter().map(|v| v * v).sum();
        if h2 == 0.0 {
            return false;
        }
        // Ball centers q = mid + v with v ⟂ half. Point z stays outside the open ball iff
        // 2 v·w <= |w|^2 - |half|^2 with w = z - mid (v·half = 0).
        let basis = orthonormal_complement(&half, self.dim);
        let k = basis.len();
        let dim = self.dim;
        let constraint = |z: usize, out: &mut Vec<f64>| {
            let z = x.get(z).coords();
            let mut w2 = 0.0;
            for t in 0..dim {
                let w = z[t] - mid[t];
                w2 += w * w;
            }
            for e in &basis {
                let dot: f64 = (0..dim).map(|t| e[t] * (z[t] - mid[t])).sum();
                out.push(2.0 * dot);
            }
            out.push(w2 - h2 + 1e-10 * (w2 + h2));
        };
        let others = |z: &&usize| **z != xi && **z != yi;
        let stride = k + 1;

        // Probe with the neighbors of both endpoints; an infeasible subset rules the pair out.
        self.rows.clear();
        for &z in sh.knn[xi].iter().chain(&sh.knn[yi]).filter(others) {
            constraint(z, &mut self.rows);
        }
        if !self.feasible(k, sh.bound) {
            return false;
        }
        self.rows.clear();
        if k == 1 {
            self.interval = [-sh.bound, sh.bound];
        }
        for &z in sh.order.iter().filter(others) {
            constraint(z, &mut self.rows);
            if k <= 1 {
                let r = &self.rows[self.rows.len() - stride..];
                let ok = if k == 0 {
                    r[0] >= 0.0
                } else {
                    interval_step(&mut self.interval, r[0], r[1])
                };
                if !ok {
                    return false;
                }
            }
        }
        k <= 1 || self.feasible(k, sh.bound)
    }

    fn feasible(&self, k: usize, bound: f64) -> bool {
        match k {
            0 => self.rows.iter().all(|&rhs| rhs >= 0.0),
            1 => {
                let mut iv = [-bound, bound];
                self.rows
                    .chunks_exact(2)
                    .all(|r| interval_step(&mut iv, r[0], r[1]))
            }
            _ => lp::minimize(&self.rows, &self.obj, bound).is_some(),
        }
    }
}

/// Intersect `iv = [lo, hi]` with `c·u <= rhs`; false once empty.
fn interval_step(iv: &mut [f64; 2], c: f64, rhs: f64) -> bool {
    if c.abs() < 1e-300 {
        return rhs >= 0.0;
    }
    if c > 0.0 {
        iv[1] = iv[1].min(rhs / c);
    } else {
        iv[0] = iv[0].max(rhs / c);
    }
    iv[0] <= iv[1]
}

/// Orthonormal basis of the hyperplane orthogonal to `normal` (dimension `dim - 1`).
fn orthonormal_complement(normal: &[f64], dim: usize) -> Vec<Vec<f64>> {
    let len = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n: Vec<f64> = normal.iter().map(|v| v / len).collect();
    let skip = n
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim.saturating_sub(1));
    for axis in (0..dim).filter(|&i| i != skip) {
        let mut e = vec![0.0; dim];
        e[axis] = 1.0;
        for b in std::iter::once(&n).chain(basis.iter()) {
            let dot: f64 = e.iter().zip(b).map(|(p, q)| p * q).sum();
            e.iter_mut().zip(b).for_each(|(p, q)| *p -= dot * q);
        }
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        e.iter_mut().for_each(|v| *v /= norm);
        basis.push(e);
    }
    basis
}

/// König's theorem: maximum matching, then alternating reachability from
/// unmatched left vertices. Returns cover membership for left and right sides.
fn min_vertex_cover(n_right: usize, adj: &[Vec<usize>]) -> (Vec<bool>, Vec<bool>) {
    let n_left = adj.len();
    let mut match_right: Vec<Option<usize>> = vec![None; n_right];
    let mut match_left: Vec<Option<usize>> = vec![None; n_left];

    fn augment(
        u: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        match_left: &mut [Option<usize>],
        match_right: &mut [Option<usize>],
    ) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            let free = match match_right[v] {
                None => true,
                Some(w) => augment(w, adj, seen, match_left, match_right),
            };
            if free {
                match_right[v] = Some(u);
                match_left[u] = Some(v);
                return true;
            }
        }
        false
    }

    for u in 0..n_left {
        let mut seen = vec![false; n_right];
        augment(u, adj, &mut seen, &mut match_left, &mut match_right);
    }

    let mut vis_left = vec![false; n_left];
    let mut vis_right = vec![false; n_right];
    let mut stack: Vec<usize> = (0..n_left).filter(|&u| match_left[u].is_none()).collect();
    for &u in &stack {
        vis_left[u] = true;
    }
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if vis_right[v] || match_left[u] == Some(v) {
                continue;
            }
            vis_right[v] = true;
            if let Some(w) = match_right[v] {
                if !vis_left[w] {
                    vis_left[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    let left = vis_left.iter().map(|&v| !v).collect::<Vec<_>>();
    // Left vertices without edges are never needed in the cover.
    let left = left
        .into_iter()
        .enumerate()
        .map(|(u, c)| c && !adj[u].is_empty())
        .collect();
    (left, vis_right)
}

fn densify(x: &PointSet, ball: &Ball, net: &PointSet, round: u32) -> PointSet {
    let mut out = net.clone();
    let mut add = |p: &Point| {
        out.push_unique(p.clone());
    };
    if round == 1 {
        // Both endpoints of every crossing pair.
        let (inside, outside): (Vec<usize>, Vec<usize>) =
            (0..x.len()).partition(|&i| ball.contains(x.get(i).coords()));
        if !inside.is_empty() && !outside.is_empty() {
            let adj = crossing_edges(x, &inside, &outside);
            for (i, nbrs) in adj.iter().enumerate() {
                if !nbrs.is_empty() {
                    add(x.get(inside[i]));
                }
                for &j in nbrs {
                    add(x.get(outside[j]));
                }
            }
        }
    } else {
        // Points of X in a radial shell that doubles each round.
        let width = ball.radius * 2f64.powi(round as i32 - 8);
        for p in x {
            let r = sq_dist_slices(p.coords(), ball.center.coords()).sqrt();
            if (r - ball.radius).abs() <= width {
                add(p);
            }
        }
    }
    out
}

fn internal_queries(x: &PointSet, ball: &Ball, seed: u64) -> PointSet {
    let mut q = contract_queries(x, 384, seed);
    let sphere = sphere_queries(ball, 128, seed.wrapping_add(1));
    for p in sphere.iter() {
        q.push_unchecked(p.clone());
    }
    q
}

fn contract_violations(x: &PointSet, ball: &Ball, net: &PointSet, queries: &PointSet) -> usize {
    queries
        .iter()
        .filter(|p| {
            let (lhs, rhs) = contract_sides(x, ball, net, p.coords());
            lhs > rhs * (1.0 + CONTRACT_TOLERANCE)
        })
        .count()
}

/// `(d(p, Z), max(d(p, X \ B), d(p, X ∩ B)))` with empty sides at +∞.
fn contract_sides(x: &PointSet, ball: &Ball, net: &PointSet, p: &[f64]) -> (f64, f64) {
    let mut inside = f64::INFINITY;
    let mut outside = f64::INFINITY;
    for q in x {
        let d = sq_dist_slices(p, q.coords());
        if ball.contains(q.coords()) {
            inside = inside.min(d);
        } else {
            outside = outside.min(d);
        }
    }
    let lhs = net
        .iter()
        .map(|z| sq_dist_slices(p, z.coords()))
        .fold(f64::INFINITY, f64::min);
    (lhs.sqrt(), inside.max(outside).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractReport {
    pub queries: usize,
    pub violations: usize,
    /// Query indices that violated the bound (first 100).
    pub violating_queries: Vec<usize>,
    /// Largest `d(p, Z) / rhs` over queries with a finite right-hand side.
    pub worst_ratio: f64,
    pub inside_empty: bool,
    pub outside_empty: bool,
}

impl ContractReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

pub fn verify_contract(
    x: &PointSet,
    result: &SeparatorResult,
    queries: &PointSet,
) -> Result<ContractReport> {
    if queries.is_empty() {
        return Err(GeoError::InvalidParameter("queries must be nonempty".into()));
    }
    queries.check_dim(x.dim())?;
    let ball = &result.ball;
    let inside_empty = !x.iter().any(|p| ball.contains(p.coords()));
    let outside_empty = x.iter().all(|p| ball.contains(p.coords()));
    let mut violating = Vec::new();
    let mut count = 0usize;
    let mut worst = 0.0f64;
    for (i, p) in queries.iter().enumerate() {
        let (lhs, rhs) = contract_sides(x, ball, &result.net, p.coords());
        if rhs.is_finite() {
            let ratio = if rhs > 0.0 {
                lhs / rhs
            } else if lhs > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            worst = worst.max(ratio);
        }
        if lhs > rhs * (1.0 + CONTRACT_TOLERANCE) {
            count += 1;
            if violating.len() < 100 {
                violating.push(i);
            }
        }
    }
    Ok(ContractReport {
        queries: queries.len(),
        violations: count,
        violating_queries: violating,
        worst_ratio: worst,
        inside_empty,
        outside_empty,
    })
}

/// Query mixture: uniform points in the (slightly inflated) bounding box,
/// points of `X`, and far-field points at 10x the box diameter.
pub fn contract_queries(x: &PointSet, n: usize, seed: u64) -> PointSet {
    let dim = x.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = x
        .bounding_box()
        .unwrap_or((vec![0.0; dim], vec![1.0; dim]));
    let diam = sq_dist_slices(&lo, &hi).sqrt().max(1.0);
    let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut out = PointSet::empty(dim);
    let mut on_x: Vec<usize> = (0..x.len()).collect();
    on_x.shuffle(&mut rng);
    for i in 0..n {
        let coords: Vec<f64> = match i % 3 {
            0 => lo
                .iter()
                .zip(&hi)
                .map(|(&a, &b)| {
                    let pad = 0.05 * (b - a);
                    rng.random_range((a - pad)..=(b + pad))
                })
                .collect(),
            1 if !on_x.is_empty() => x.get(on_x[(i / 3) % on_x.len()]).coords().to_vec(),
            _ => {
                let dir = random_direction(&mut rng, dim);
                mid.iter().zip(&dir).map(|(m, d)| m + 10.0 * diam * d).collect()
            }
        };
        out.push_unchecked(Point::new(coords).expect("finite"));
    }
    out
}

/// Points on (and within a hair of) the boundary sphere of `ball`.
pub fn sphere_queries(ball: &Ball, n: usize, seed: u64) -> PointSet {
    let dim = ball.center.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = PointSet::empty(dim);
    for i in 0..n {
        let dir = random_direction(&mut rng, dim);
        let scale = match i % 3 {
            0 => 1.0,
            1 => 1.0 - 1e-6,
            _ => 1.0 + rng.random_range(0.0..0.05),
        };
        let coords = ball
            .center
            .coords()
            .iter()
            .zip(&dir)
            .map(|(c, d)| c + ball.radius * scale * d)
            .collect();
        out.push_unchecked(Point::new(coords).expect("finite"));
    }
    out
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let len = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if len > 1e-12 {
            return v.into_iter().map(|a| a / len).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize, dim: usize, seed: u64) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointSet::from_rows(
            (0..n)
                .map(|_| (0..dim).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn fallback_net_always_satisfies_contract() {
        let x = uniform(100, 2, 1);
        let ball = Ball::new(Point::new(vec![0.5, 0.5]).unwrap(), 0.3).unwrap();
        let res = fallback_result(&x, ball, 1);
        let q = contract_queries(&x, 2000, 9);
        assert!(verify_contract(&x, &res, &q).unwrap().passed());
    }

    #[test]
    fn full_net_has_no_violations() {
        let x = uniform(120, 3, 2);
        let res = SeparatorResult {
            ball: Ball::new(Point::new(vec![0.5; 3]).unwrap(), 0.25).unwrap(),
            net: x.clone(),
            inside_count: 0,
            densify_rounds: 0,
            fallback: false,
        };
        let q = contract_queries(&x, 1500, 4);
        assert_eq!(verify_contract(&x, &res, &q).unwrap().violations, 0);
    }

    #[test]
    fn unit_square_example() {
        let x = uniform(400, 2, 7);
        let params = SeparatorParams {
            radius_jitter_seed: 7,
            ..Default::default()
        };
        let res = separate(&x, 25, &params).unwrap();
        assert!(!res.fallback);
        assert_eq!(res.densify_rounds, 0);
        let (lo, hi) = params.window(25);
        assert!(lo <= res.inside_count && res.inside_count <= hi, "{}", res.inside_count);
        assert_eq!(res.inside_count, count_inside(&x, &res.ball));
        assert!(res.net.len() as f64 <= 5.0 * params.kappa, "net {}", res.net.len());
        let q = contract_queries(&x, 10_000, 77);
        let report = verify_contract(&x, &res, &q).unwrap();
        assert_eq!(report.violations, 0, "{report:?}");
        let sphere = sphere_queries(&res.ball, 2000, 3);
        assert_eq!(verify_contract(&x, &res, &sphere).unwrap().violations, 0);
        assert_eq!(verify_contract(&x, &res, &x).unwrap().violations, 0);
    }

    #[test]
    fn one_dimensional_net_is_tiny() {
        let x = uniform(200, 1, 11);
        let res = separate(&x, 10, &SeparatorParams::default()).unwrap();
        assert!(res.net.len() <= 2, "{}", res.net.len());
        let q = contract_queries(&x, 3000, 1);
        assert!(verify_contract(&x, &res, &q).unwrap().passed());
    }

    #[test]
    fn too_small_rejected() {
        let x = uniform(200, 2, 3);
        assert!(matches!(
            separate(&x, 25, &SeparatorParams::default()),
            Err(GeoError::SetTooSmall { .. })
        ));
        assert!(separate(&x, 0, &SeparatorParams::default()).is_err());
    }

    #[test]
    fn bad_params_rejected() {
        let x = uniform(400, 2, 3);
        for p in [
            SeparatorParams { c_lo: 0.1, ..Default::default() },
            SeparatorParams { c_hi: 0.2, ..Default::default() },
            SeparatorParams { kappa: 0.0, ..Default::default() },
            SeparatorParams { shell_layers: 0, ..Default::default() },
        ] {
            assert!(separate(&x, 25, &p).is_err());
        }
    }

    #[test]
    fn coincident_points_fall_back() {
        let x = PointSet::from_rows(vec![vec![1.0, 1.0]; 300]).unwrap();
        let res = separate(&x, 10, &SeparatorParams::default()).unwrap();
        assert!(res.fallback);
        assert!(res.densify_rounds > 0);
        assert_eq!(res.net.len(), 1);
        let q = contract_queries(&x, 500, 2);
        assert!(verify_contract(&x, &res, &q).unwrap().passed());
    }

    #[test]
    fn deterministic_under_seed() {
        let x = uniform(300, 3, 5);
        let p = SeparatorParams {
            radius_jitter_seed: 99,
            ..Default::default()
        };
        assert_eq!(separate(&x, 20, &p).unwrap(), separate(&x, 20, &p).unwrap());
    }

    #[test]
    fn empty_sides_are_vacuous() {
        let x = uniform(50, 2, 8);
        let res = SeparatorResult {
            ball: Ball::new(Point::new(vec![0.5, 0.5]).unwrap(), 10.0).unwrap(),
            net: PointSet::empty(2),
            inside_count: 50,
            densify_rounds: 0,
            fallback: false,
        };
        let report = verify_contract(&x, &res, &x).unwrap();
        assert!(report.outside_empty && !report.inside_empty);
        assert!(report.passed());
    }

    #[test]
    fn empty_net_is_caught() {
        let x = uniform(400, 2, 7);
        let res = EmptyNetSeparator::default().separate(&x, 25).unwrap();
        let q = contract_queries(&x, 500, 1);
        assert!(verify_contract(&x, &res, &q).unwrap().violations > 0);
    }

    #[test]
    fn vertex_cover_covers_every_edge() {
        let adj = vec![vec![0, 1], vec![1], vec![], vec![1, 2]];
        let (l, r) = min_vertex_cover(3, &adj);
        for (u, nb) in adj.iter().enumerate() {
            for &v in nb {
                assert!(l[u] || r[v]);
            }
        }
        let size = l.iter().filter(|&&c| c).count() + r.iter().filter(|&&c| c).count();
        assert_eq!(size, 3);
        let (l, r) = min_vertex_cover(1, &[vec![0], vec![0], vec![0]]);
        assert_eq!(l, vec![false; 3]);
        assert_eq!(r, vec![true]);
    }

    #[test]
    fn clamp_respects_window() {
        let sq: Vec<f64> = (0..50).map(|i| (i as f64).powi(2)).collect();
        let r = clamp_radius(&sq, 100.0, (5, 10)).unwrap();
        let inside = sq.iter().filter(|&&d| d <= r * r).count();
        assert_eq!(inside, 10);
        let r = clamp_radius(&sq, 0.0, (5, 10)).unwrap();
        assert_eq!(sq.iter().filter(|&&d| d <= r * r).count(), 5);
        assert!(clamp_radius(&[0.0; 20], 1.0, (5, 10)).is_none());
    }
}
