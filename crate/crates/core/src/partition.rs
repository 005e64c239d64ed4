//! Repeated ball separation of a local solution `L` and a global solution `O`
//! into parts, plus the certificates built on top of the parts.
//!
//! Each iteration separates `L_i ∪ O_i ∪ Z_i`, where `Z_i` holds the nets of
//! earlier iterations that are not yet inside a ball. The facilities inside
//! the ball form the part; `Z_{i+1} = (Z_i ∖ B_i) ∪ T_i`. The loop stops once
//! at most `α μ` points remain, which become the final part with no net.

use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::geometry::{nearest_unchecked, sq_dist_slices, Point, PointSet};
use crate::separator::{Ball, BallNetSeparator, Separator, SeparatorParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub separator: SeparatorParams,
    pub max_iterations: usize,
}

impl Default for PartitionParams {
    fn default() -> Self {
        Self {
            alpha: 8.0,
            beta: 1024.0,
            gamma: 64.0,
            separator: SeparatorParams::default(),
            max_iterations: 100_000,
        }
    }
}

impl PartitionParams {
    /// `ceil(γ / ε^d)`, saturating.
    pub fn mu(&self, epsilon: f64, dim: usize) -> usize {
        let v = self.gamma / epsilon.powi(dim as i32);
        if v >= usize::MAX as f64 {
            usize::MAX
        } else {
            (v - 1e-9).ceil().max(1.0) as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub index: usize,
    /// Indices into the local solution.
    pub local: Vec<usize>,
    /// Indices into the global solution.
    pub global: Vec<usize>,
    /// The net produced for this part; empty for the last part.
    pub net: PointSet,
    /// Earlier net points inside this part's ball.
    pub carried: PointSet,
    pub ball: Ball,
    pub separator_fallback: bool,
}

impl Part {
    /// `T_i ∪ (Z_i ∩ B_i)` without repeated locations.
    pub fn net_union(&self) -> PointSet {
        let mut out = self.net.clone();
        for p in self.carried.iter() {
            out.push_unique(p.clone());
        }
        out
    }

    /// `|L_i| + |O_i| + |T_i ∪ ZB_i|`.
    pub fn size(&self) -> usize {
        self.local.len() + self.global.len() + self.net_union().len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionOutput {
    pub parts: Vec<Part>,
    pub epsilon: f64,
    pub mu: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub local: PointSet,
    pub global: PointSet,
}

impl PartitionOutput {
    pub fn dim(&self) -> usize {
        self.local.dim()
    }

    /// Part index of every local facility.
    pub fn local_part(&self) -> Vec<usize> {
        owner(self.local.len(), self.parts.iter().map(|p| &p.local))
    }

    pub fn global_part(&self) -> Vec<usize> {
        owner(self.global.len(), self.parts.iter().map(|p| &p.global))
    }

    /// `β / ε^d`.
    pub fn part_bound(&self) -> f64 {
        self.beta / self.epsilon.powi(self.dim() as i32)
    }
}

fn owner<'a>(n: usize, lists: impl Iterator<Item = &'a Vec<usize>>) -> Vec<usize> {
    let mut out = vec![usize::MAX; n];
    for (j, list) in lists.enumerate() {
        for &i in list {
            if i < n {
                out[i] = j;
            }
        }
    }
    out
}

pub fn run_partition(
    local: &PointSet,
    global: &PointSet,
    epsilon: f64,
    params: &PartitionParams,
) -> Result<PartitionOutput> {
    let sep = BallNetSeparator {
        params: SeparatorParams {
            alpha: params.alpha,
            ..params.separator.clone()
        },
    };
    run_partition_with(local, global, epsilon, params, &sep)
}

/// As [`run_partition`] with a caller-chosen separator.
pub fn run_partition_with(
    local: &PointSet,
    global: &PointSet,
    epsilon: f64,
    params: &PartitionParams,
    separator: &dyn Separator,
) -> Result<PartitionOutput> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(GeoError::InvalidParameter(format!(
            "epsilon must be in (0, 1], got {epsilon}"
        )));
    }
    if local.is_empty() || global.is_empty() {
        return Err(GeoError::EmptyPointSet);
    }
    global.check_dim(local.dim())?;
    let dim = local.dim();
    let mu = params.mu(epsilon, dim);
    let limit = params.alpha * mu as f64;

    let mut rest_l: Vec<usize> = (0..local.len()).collect();
    let mut rest_o: Vec<usize> = (0..global.len()).collect();
    let mut z = PointSet::empty(dim);
    let mut parts = Vec::new();
    loop {
        let size = rest_l.len() + rest_o.len() + z.len();
        if size as f64 <= limit {
            break;
        }
        if parts.len() >= params.max_iterations {
            return Err(GeoError::PartitionAborted(format!(
                "no termination after {} iterations ({size} points left)",
                parts.len()
            )));
        }
        let mut x = PointSet::empty(dim);
        for &i in &rest_l {
            x.push_unchecked(local.get(i).clone());
        }
        for &i in &rest_o {
            x.push_unchecked(global.get(i).clone());
        }
        for p in z.iter() {
            x.push_unchecked(p.clone());
        }
        let res = separator.separate(&x, mu)?;
        let ball = res.ball;
        let (in_l, out_l): (Vec<usize>, Vec<usize>) =
            rest_l.iter().partition(|&&i| ball.contains(local.get(i).coords()));
        let (in_o, out_o): (Vec<usize>, Vec<usize>) =
            rest_o.iter().partition(|&&i| ball.contains(global.get(i).coords()));
        let mut carried = PointSet::empty(dim);
        let mut next_z = PointSet::empty(dim);
        for p in z.iter() {
            if ball.contains(p.coords()) {
                carried.push_unchecked(p.clone());
            } else {
                next_z.push_unchecked(p.clone());
            }
        }
        let mut net = PointSet::empty(dim);
        for p in res.net.iter() {
            net.push_unique(p.clone());
            next_z.push_unique(p.clone());
        }
        let next_size = out_l.len() + out_o.len() + next_z.len();
        if in_l.is_empty() && in_o.is_empty() && next_size >= size {
            return Err(GeoError::PartitionAborted(format!(
                "iteration {} removed no facilities and {size} points remain",
                parts.len() + 1
            )));
        }
        if res.fallback {
            log::warn!("partition iteration {}: separator fell back", parts.len() + 1);
        }
        parts.push(Part {
            index: parts.len() + 1,
            local: in_l,
            global: in_o,
            net,
            carried,
            ball,
            separator_fallback: res.fallback,
        });
        rest_l = out_l;
        rest_o = out_o;
        z = next_z;
    }

    let mut leftover = PointSet::empty(dim);
    for &i in &rest_l {
        leftover.push_unchecked(local.get(i).clone());
    }
    for &i in &rest_o {
        leftover.push_unchecked(global.get(i).clone());
    }
    for p in z.iter() {
        leftover.push_unchecked(p.clone());
    }
    let ball = match Ball::bounding(&leftover) {
        Some(b) => b,
        None => {
            let mut all = local.clone();
            for p in global.iter() {
                all.push_unchecked(p.clone());
            }
            Ball::bounding(&all).expect("nonempty")
        }
    };
    parts.push(Part {
        index: parts.len() + 1,
        local: rest_l,
        global: rest_o,
        net: PointSet::empty(dim),
        carried: z,
        ball,
        separator_fallback: false,
    });
    Ok(PartitionOutput {
        parts,
        epsilon,
        mu,
        alpha: params.alpha,
        beta: params.beta,
        gamma: params.gamma,
        local: local.clone(),
        global: global.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl BoundCheck {
    fn new(name: &str, measured: f64, bound: f64) -> Self {
        Self {
            name: name.to_string(),
            measured,
            bound,
            pass: measured <= bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation1Report {
    /// Largest part versus `β / ε^d`.
    pub part_size: BoundCheck,
    /// Number of parts versus `ε(|L| + |O|)/10`.
    pub part_count: BoundCheck,
    /// Distinct net points versus `ε(|L| + |O|)/10`.
    pub net_size: BoundCheck,
    /// `Σ |T_i ∪ ZB_i|` versus `ε(|L| + |O|)/5`.
    pub net_union_sum: BoundCheck,
    /// `Σ |T_i ∪ ZB_i|` versus `2 Σ |T_i|`.
    pub double_count: BoundCheck,
    pub local_cover_exact: bool,
    pub global_cover_exact: bool,
    pub fallback_parts: usize,
}

impl Observation1Report {
    pub fn all_items_hold(&self) -> bool {
        [&self.part_size, &self.part_count, &self.net_size, &self.net_union_sum]
            .iter()
            .all(|c| c.pass)
    }

    pub fn passed(&self) -> bool {
        self.all_items_hold()
            && self.double_count.pass
            && self.local_cover_exact
            && self.global_cover_exact
    }

    pub fn lines(&self) -> Vec<String> {
        [&self.part_size, &self.part_count, &self.net_size, &self.net_union_sum]
            .iter()
            .enumerate()
            .map(|(i, c)| {
                format!(
                    "item {}: {} {} (measured {}, bound {:.3})",
                    i + 1,
                    c.name,
                    if c.pass { "pass" } else { "FAIL" },
                    c.measured,
                    c.bound
                )
            })
            .collect()
    }
}

fn exact_cover(n: usize, lists: impl Iterator<Item = usize>) -> bool {
    let mut seen = vec![false; n];
    for i in lists {
        if i >= n || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    seen.into_iter().all(|s| s)
}

pub fn check_observation1(out: &PartitionOutput) -> Observation1Report {
    let total = (out.local.len() + out.global.len()) as f64;
    let part_size = out.parts.iter().map(Part::size).max().unwrap_or(0);
    let mut all_nets = PointSet::empty(out.dim());
    for part in &out.parts {
        for p in part.net.iter() {
            all_nets.push_unique(p.clone());
        }
    }
    let union_sum: usize = out.parts.iter().map(|p| p.net_union().len()).sum();
    let net_sum: usize = out.parts.iter().map(|p| p.net.len()).sum();
    let fallback_parts = out.parts.iter().filter(|p| p.separator_fallback).count();
    let report = Observation1Report {
        part_size: BoundCheck::new("max part size", part_size as f64, out.part_bound()),
        part_count: BoundCheck::new("part count", out.parts.len() as f64, out.epsilon * total / 10.0),
        net_size: BoundCheck::new("net points", all_nets.len() as f64, out.epsilon * total / 10.0),
        net_union_sum: BoundCheck::new("net union sum", union_sum as f64, out.epsilon * total / 5.0),
        double_count: BoundCheck::new("double count", union_sum as f64, 2.0 * net_sum as f64),
        local_cover_exact: exact_cover(out.local.len(), out.parts.iter().flat_map(|p| p.local.iter().copied())),
        global_cover_exact: exact_cover(out.global.len(), out.parts.iter().flat_map(|p| p.global.iter().copied())),
        fallback_parts,
    };
    if fallback_parts > 0 && !report.all_items_hold() {
        log::warn!("observation bounds exceeded with {fallback_parts} fallback separations");
    }
    report
}

/// Which side each client is closer to, with its nearest facility on each side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSides {
    /// `true` when `d(c, L) <= d(c, O)`.
    pub closer_to_local: Vec<bool>,
    pub local_dist: Vec<f64>,
    pub global_dist: Vec<f64>,
    pub nearest_local: Vec<usize>,
    pub nearest_global: Vec<usize>,
}

impl ClientSides {
    pub fn local_side(&self) -> Vec<usize> {
        (0..self.closer_to_local.len()).filter(|&c| self.closer_to_local[c]).collect()
    }

    pub fn global_side(&self) -> Vec<usize> {
        (0..self.closer_to_local.len()).filter(|&c| !self.closer_to_local[c]).collect()
    }

    /// `max(c_L, c_O)`, the squared radius every certificate point must meet.
    fn bound(&self, c: usize) -> f64 {
        self.local_dist[c].max(self.global_dist[c])
    }
}

pub fn classify_clients(clients: &PointSet, local: &PointSet, global: &PointSet) -> Result<ClientSides> {
    if clients.is_empty() || local.is_empty() || global.is_empty() {
        return Err(GeoError::EmptyReferenceSet);
    }
    local.check_dim(clients.dim())?;
    global.check_dim(clients.dim())?;
    let mut sides = ClientSides {
        closer_to_local: Vec::with_capacity(clients.len()),
        local_dist: Vec::with_capacity(clients.len()),
        global_dist: Vec::with_capacity(clients.len()),
        nearest_local: Vec::with_capacity(clients.len()),
        nearest_global: Vec::with_capacity(clients.len()),
    };
    for c in clients.iter() {
        let (li, ld) = nearest_unchecked(c.coords(), local.points());
        let (gi, gd) = nearest_unchecked(c.coords(), global.points());
        sides.closer_to_local.push(ld <= gd);
        sides.local_dist.push(ld);
        sides.global_dist.push(gd);
        sides.nearest_local.push(li);
        sides.nearest_global.push(gi);
    }
    Ok(sides)
}

/// Relative slack on squared-distance certificate bounds.
pub const CERTIFICATE_TOLERANCE: f64 = 1e-9;

fn within(d: f64, bound: f64) -> bool {
    d <= bound * (1.0 + CERTIFICATE_TOLERANCE) + 1e-300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Lemma2Outcome {
    NotApplicable,
    Witness { part: usize, point: Point, sq_dist: f64 },
}

/// For a client whose nearest global facility lies in an earlier part than its
/// nearest local facility, a point of the later part's net union that is no
/// farther than both.
pub fn check_lemma2(
    client: &Point,
    c: usize,
    sides: &ClientSides,
    out: &PartitionOutput,
) -> Result<Lemma2Outcome> {
    let lp = out.local_part();
    let gp = out.global_part();
    check_lemma2_with(client, c, sides, out, &lp, &gp)
}

fn check_lemma2_with(
    client: &Point,
    c: usize,
    sides: &ClientSides,
    out: &PartitionOutput,
    local_part: &[usize],
    global_part: &[usize],
) -> Result<Lemma2Outcome> {
    let i = global_part[sides.nearest_global[c]];
    let j = local_part[sides.nearest_local[c]];
    if i >= j {
        return Ok(Lemma2Outcome::NotApplicable);
    }
    let part = &out.parts[j];
    let bound = sides.bound(c);
    let best = part
        .carried
        .iter()
        .chain(part.net.iter())
        .map(|p| (sq_dist_slices(client.coords(), p.coords()), p))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    match best {
        Some((d, p)) if within(d, bound) => Ok(Lemma2Outcome::Witness {
            part: j + 1,
            point: p.clone(),
            sq_dist: d,
        }),
        other => Err(GeoError::LemmaViolation(format!(
            "client {c}: nearest global facility in part {}, nearest local in part {}, \
             closest net point at squared distance {} exceeds {bound}",
            i + 1,
            j + 1,
            other.map_or(f64::INFINITY, |(d, _)| d)
        ))),
    }
}

/// Assignment of every client served by `L_j` but not by `O_j` to a point of
/// `T_j ∪ ZB_j`. `j` is 1-based. Returns `(client, point)` pairs in client order.
pub fn build_assignment_g(
    clients: &PointSet,
    sides: &ClientSides,
    out: &PartitionOutput,
    j: usize,
) -> Result<Vec<(usize, Point)>> {
    if j == 0 || j > out.parts.len() {
        return Err(GeoError::InvalidParameter(format!(
            "part index must be in 1..={}, got {j}",
            out.parts.len()
        )));
    }
    let lp = out.local_part();
    let gp = out.global_part();
    assignment_with(clients, sides, out, j - 1, &lp, &gp)
}

fn assignment_with(
    clients: &PointSet,
    sides: &ClientSides,
    out: &PartitionOutput,
    j: usize,
    local_part: &[usize],
    global_part: &[usize],
) -> Result<Vec<(usize, Point)>> {
    let part = &out.parts[j];
    let mut map = Vec::new();
    for (c, client) in clients.iter().enumerate() {
        if local_part[sides.nearest_local[c]] != j || global_part[sides.nearest_global[c]] == j {
            continue;
        }
        let i = global_part[sides.nearest_global[c]];
        // Squared-distance target: c_O on the local side, c_L on the global side.
        let target = if sides.closer_to_local[c] {
            sides.global_dist[c]
        } else {
            sides.local_dist[c]
        };
        let point = if i < j {
            match check_lemma2_with(client, c, sides, out, local_part, global_part)? {
                Lemma2Outcome::Witness { point, .. } => point,
                Lemma2Outcome::NotApplicable => unreachable!("i < j"),
            }
        } else {
            let (k, _) = nearest_unchecked(client.coords(), part.net.points());
            if part.net.is_empty() {
                return Err(GeoError::LemmaViolation(format!(
                    "client {c}: part {} has no net to assign to",
                    j + 1
                )));
            }
            part.net.get(k).clone()
        };
        let d = sq_dist_slices(client.coords(), point.coords());
        if !within(d, target) {
            return Err(GeoError::LemmaViolation(format!(
                "client {c} assigned in part {} at squared distance {d}, above {target}",
                j + 1
            )));
        }
        map.push((c, point));
    }
    Ok(map)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub clients: usize,
    pub lemma2_applicable: usize,
    pub lemma2_violations: usize,
    pub assignments: usize,
    pub assignment_violations: usize,
    /// First violation messages (at most 20).
    pub details: Vec<String>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.lemma2_violations == 0 && self.assignment_violations == 0
    }
}

/// Runs the witness check on every client and builds every part's assignment.
pub fn check_lemmas(clients: &PointSet, out: &PartitionOutput) -> Result<LemmaReport> {
    let sides = classify_clients(clients, &out.local, &out.global)?;
    let lp = out.local_part();
    let gp = out.global_part();
    let mut report = LemmaReport {
        clients: clients.len(),
        ..Default::default()
    };
    let note = |report: &mut LemmaReport, msg: String| {
        if report.details.len() < 20 {
            report.details.push(msg);
        }
    };
    for (c, client) in clients.iter().enumerate() {
        match check_lemma2_with(client, c, &sides, out, &lp, &gp) {
            Ok(Lemma2Outcome::NotApplicable) => {}
            Ok(Lemma2Outcome::Witness { .. }) => report.lemma2_applicable += 1,
            Err(e) => {
                report.lemma2_applicable += 1;
                report.lemma2_violations += 1;
                note(&mut report, e.to_string());
            }
        }
    }
    for j in 0..out.parts.len() {
        // Count per client so one bad client does not hide the others.
        for (c, client) in clients.iter().enumerate() {
            if lp[sides.nearest_local[c]] != j || gp[sides.nearest_global[c]] == j {
                continue;
            }
            let single = PointSet::with_points(clients.dim(), vec![client.clone()])?;
            let one = ClientSides {
                closer_to_local: vec![sides.closer_to_local[c]],
                local_dist: vec![sides.local_dist[c]],
                global_dist: vec![sides.global_dist[c]],
                nearest_local: vec![sides.nearest_local[c]],
                nearest_global: vec![sides.nearest_global[c]],
            };
            report.assignments += 1;
            if let Err(e) = assignment_with(&single, &one, out, j, &lp, &gp) {
                report.assignment_violations += 1;
                note(&mut report, e.to_string().replace("client 0", &format!("client {c}")));
            }
        }
    }
    Ok(report)
}

/// Which parts a test solution swaps out.
#[derive(Debug, Clone, PartialEq)]
pub enum SwapSelection {
    /// One part, 1-based.
    Part(usize),
    /// A group of parts, 1-based.
    Group(Vec<usize>),
}

/// `(L ∖ L_J) ∪ O_J ∪ T_J ∪ ZB_J` for the selected parts `J`.
pub fn build_swap_solution(out: &PartitionOutput, selection: &SwapSelection) -> Result<PointSet> {
    let chosen: Vec<usize> = match selection {
        SwapSelection::Part(i) => vec![*i],
        SwapSelection::Group(g) => g.clone(),
    };
    for &i in &chosen {
        if i == 0 || i > out.parts.len() {
            return Err(GeoError::InvalidParameter(format!(
                "part index must be in 1..={}, got {i}",
                out.parts.len()
            )));
        }
    }
    let lp = out.local_part();
    let mut s = PointSet::empty(out.dim());
    for (f, p) in out.local.iter().enumerate() {
        if !chosen.contains(&(lp[f] + 1)) {
            s.push_unchecked(p.clone());
        }
    }
    for &i in &chosen {
        let part = &out.parts[i - 1];
        for &g in &part.global {
            s.push_unchecked(out.global.get(g).clone());
        }
        for p in part.net_union().iter() {
            s.push_unchecked(p.clone());
        }
    }
    Ok(s)
}
