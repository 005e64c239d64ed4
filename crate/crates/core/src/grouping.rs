//! Balanced grouping of parts so that every group has at least as many local
//! facilities as global facilities plus net points.

use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::partition::{Part, PartitionOutput};

/// `|L_j| − |O_j| − |T_j ∪ ZB_j|`.
pub fn u_value(part: &Part) -> i64 {
    part.local.len() as i64 - part.global.len() as i64 - part.net_union().len() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedPart {
    /// Position of the part in its partition, 0-based.
    pub part_ref: usize,
    pub u: i64,
}

pub fn signed_parts(out: &PartitionOutput) -> Vec<SignedPart> {
    out.parts
        .iter()
        .enumerate()
        .map(|(part_ref, p)| SignedPart { part_ref, u: u_value(p) })
        .collect()
}

/// `2β / ε^d` rounded up to an even integer.
pub fn group_limit(beta: f64, epsilon: f64, dim: usize) -> usize {
    let v = (2.0 * beta / epsilon.powi(dim as i32) - 1e-9).ceil().max(2.0);
    let v = if v >= (usize::MAX / 2) as f64 { (usize::MAX / 2) as f64 } else { v };
    let l = v as usize;
    l + l % 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    pub iteration: usize,
    pub remaining_u: i64,
    pub bound: i64,
}

impl OuterStep {
    pub fn holds(&self) -> bool {
        self.remaining_u >= self.bound
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupingTrace {
    /// `u(R′)` against `(2I/l + 1) l/2 − j l/2` after each completed outer iteration.
    pub outer: Vec<OuterStep>,
    /// `u(Ψ′)` after each inner step.
    pub inner: Vec<i64>,
    pub early_exit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedCollection {
    pub groups: Vec<Vec<SignedPart>>,
    pub l: usize,
    pub trace: GroupingTrace,
}

fn total(parts: &[SignedPart]) -> i64 {
    parts.iter().map(|p| p.u).sum()
}

fn take_first(rest: &mut Vec<SignedPart>, pred: impl Fn(i64) -> bool) -> Option<SignedPart> {
    let i = rest.iter().position(|p| pred(p.u))?;
    Some(rest.remove(i))
}

fn missing(what: &str, rest: &[SignedPart]) -> GeoError {
    GeoError::InsufficientSurplus(format!(
        "no remaining part with {what}; u(R') = {} over {} parts",
        total(rest),
        rest.len()
    ))
}

/// How many parts the alternating phase adds after the first positive one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSteps {
    /// `l/2 - 1`, so the alternating phase holds `l/2` parts and a group at most `l`.
    #[default]
    HalfTotal,
    /// `l/2` steps after the first part; a group can reach `l + 1` parts.
    Literal,
}

pub fn group_parts(parts: &[SignedPart], l: usize) -> Result<GroupedCollection> {
    group_parts_with(parts, l, InnerSteps::default())
}

pub fn group_parts_with(parts: &[SignedPart], l: usize, steps: InnerSteps) -> Result<GroupedCollection> {
    if l < 2 || !l.is_multiple_of(2) {
        return Err(GeoError::InvalidParameter(format!("group limit must be even and >= 2, got {l}")));
    }
    let half = l / 2;
    let count = parts.len() as i64;
    let mut groups: Vec<Vec<SignedPart>> = Vec::new();
    let mut trace = GroupingTrace::default();
    let mut rest: Vec<SignedPart> = Vec::new();
    for &p in parts {
        if p.u == 0 {
            groups.push(vec![p]);
        } else {
            rest.push(p);
        }
    }
    let surplus = total(&rest);
    let start = count + half as i64;
    if rest.len() > l && surplus < start {
        return Err(GeoError::InsufficientSurplus(format!(
            "u(R) = {surplus} is below I + l/2 = {start}"
        )));
    }
    let mut j = 0usize;
    while rest.len() > l {
        j += 1;
        let first = take_first(&mut rest, |u| u > 0).ok_or_else(|| missing("u > 0", &rest))?;
        let mut psi = vec![first];
        let mut u_psi = first.u;
        let inner = match steps {
            InnerSteps::HalfTotal => half - 1,
            InnerSteps::Literal => half,
        };
        for _ in 0..inner {
            if u_psi >= 0 {
                if rest.iter().all(|p| p.u > 0) {
                    groups.push(psi);
                    groups.extend(rest.drain(..).map(|p| vec![p]));
                    trace.early_exit = true;
                    return Ok(GroupedCollection { groups, l, trace });
                }
                let r = take_first(&mut rest, |u| u < 0).expect("a part with u < 0 remains");
                u_psi += r.u;
                psi.push(r);
            } else {
                let r = take_first(&mut rest, |u| u > 0).ok_or_else(|| missing("u > 0", &rest))?;
                u_psi += r.u;
                psi.push(r);
            }
            trace.inner.push(u_psi);
        }
        while u_psi < 0 {
            let r = take_first(&mut rest, |u| u > 0).ok_or_else(|| missing("u > 0", &rest))?;
            u_psi += r.u;
            psi.push(r);
        }
        groups.push(psi);
        trace.outer.push(OuterStep {
            iteration: j,
            remaining_u: total(&rest),
            bound: start - (j * half) as i64,
        });
    }
    if !rest.is_empty() {
        let u = total(&rest);
        if u < 0 {
            return Err(GeoError::InsufficientSurplus(format!(
                "final group of {} parts has u = {u}",
                rest.len()
            )));
        }
        groups.push(rest);
    }
    Ok(GroupedCollection { groups, l, trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingReport {
    pub groups: usize,
    pub disjoint_cover: bool,
    pub max_group_size: usize,
    pub size_ok: bool,
    pub min_group_u: Option<i64>,
    pub u_ok: bool,
    pub outer_bound_ok: bool,
    pub inner_bound_ok: bool,
    pub violations: Vec<String>,
}

impl GroupingReport {
    pub fn passed(&self) -> bool {
        self.disjoint_cover && self.size_ok && self.u_ok && self.outer_bound_ok && self.inner_bound_ok
    }
}

/// Checks `g` against the true `u` of each part; `u[j]` belongs to part `j`.
pub fn verify_grouping(g: &GroupedCollection, u: &[i64]) -> GroupingReport {
    let mut violations = Vec::new();
    let mut seen = vec![0usize; u.len()];
    for p in g.groups.iter().flatten() {
        if p.part_ref < u.len() {
            seen[p.part_ref] += 1;
        } else {
            violations.push(format!("unknown part {}", p.part_ref));
        }
    }
    let disjoint_cover = violations.is_empty() && seen.iter().all(|&s| s == 1);
    if !disjoint_cover {
        violations.push("groups are not a disjoint cover of the parts".into());
    }
    let max_group_size = g.groups.iter().map(Vec::len).max().unwrap_or(0);
    let size_ok = max_group_size <= g.l;
    if !size_ok {
        violations.push(format!("group of size {max_group_size} exceeds l = {}", g.l));
    }
    let sums: Vec<i64> = g
        .groups
        .iter()
        .map(|grp| grp.iter().map(|p| u.get(p.part_ref).copied().unwrap_or(0)).sum())
        .collect();
    for (i, &s) in sums.iter().enumerate() {
        if s < 0 {
            violations.push(format!("group {i} has u = {s}"));
        }
    }
    let half = (g.l / 2) as i64;
    let outer_bound_ok = g.trace.outer.iter().all(OuterStep::holds);
    if !outer_bound_ok {
        violations.push("remaining surplus fell below the outer-loop bound".into());
    }
    let inner_bound_ok = g.trace.inner.iter().all(|v| v.abs() <= half);
    if !inner_bound_ok {
        violations.push(format!("partial group surplus left [-{half}, {half}]"));
    }
    GroupingReport {
        groups: g.groups.len(),
        disjoint_cover,
        max_group_size,
        size_ok,
        min_group_u: sums.iter().copied().min(),
        u_ok: sums.iter().all(|&s| s >= 0),
        outer_bound_ok,
        inner_bound_ok,
        violations,
    }
}

/// As [`verify_grouping`], recomputing `u` from the partition's parts.
pub fn verify_grouping_for(g: &GroupedCollection, out: &PartitionOutput) -> GroupingReport {
    let u: Vec<i64> = out.parts.iter().map(u_value).collect();
    verify_grouping(g, &u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed(u: &[i64]) -> Vec<SignedPart> {
        u.iter().enumerate().map(|(part_ref, &u)| SignedPart { part_ref, u }).collect()
    }

    #[test]
    fn limits() {
        assert_eq!(group_limit(1024.0, 0.5, 2), 8192);
        assert_eq!(group_limit(1.5, 1.0, 1), 4);
        assert_eq!(group_limit(2.5, 1.0, 1), 6);
    }

    #[test]
    fn small_collection_is_one_group() {
        let u = [3, -1, -2, 5, -1];
        let g = group_parts(&signed(&u), 10).unwrap();
        assert_eq!(g.groups.len(), 1);
        assert_eq!(g.groups[0].len(), 5);
        let rep = verify_grouping(&g, &u);
        assert!(rep.passed());
        assert_eq!(rep.min_group_u, Some(4));
    }

    #[test]
    fn zeros_are_singletons() {
        let u = [0; 7];
        let g = group_parts(&signed(&u), 4).unwrap();
        assert_eq!(g.groups.len(), 7);
        assert!(g.groups.iter().all(|grp| grp.len() == 1));
        assert!(verify_grouping(&g, &u).passed());
    }

    #[test]
    fn all_positive_exits_early() {
        let u = [3, 1, 1, 1, 1, 1, 1];
        let g = group_parts(&signed(&u), 4).unwrap();
        assert!(g.trace.early_exit);
        assert_eq!(g.groups[0], signed(&u)[..1].to_vec());
        assert_eq!(g.groups.len(), 7);
        assert!(verify_grouping(&g, &u).passed());
    }

    #[test]
    fn balanced_run_traces_bounds() {
        // I = 12, l = 4: needs u(R) >= 14.
        let u = [2, -2, 2, -1, 2, 2, 2, 2, -1, 2, 2, 2];
        let g = group_parts(&signed(&u), 4).unwrap();
        assert!(!g.trace.outer.is_empty());
        let rep = verify_grouping(&g, &u);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn literal_steps_can_overfill() {
        // 2, -2, -2 leaves u = -2; two more positive parts make five.
        let u = [2, -2, -2, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2];
        let literal = group_parts_with(&signed(&u), 4, InnerSteps::Literal).unwrap();
        assert_eq!(literal.groups[0].len(), 5);
        assert!(!verify_grouping(&literal, &u).size_ok);
        let g = group_parts(&signed(&u), 4).unwrap();
        assert!(verify_grouping(&g, &u).passed());
    }

    #[test]
    fn insufficient_surplus() {
        let u = [1, -1, 1, -1, 1, -1, 1];
        assert!(matches!(group_parts(&signed(&u), 4), Err(GeoError::InsufficientSurplus(_))));
        assert!(matches!(group_parts(&signed(&[-1, -1]), 4), Err(GeoError::InsufficientSurplus(_))));
        assert!(group_parts(&signed(&[1]), 3).is_err());
    }

    #[test]
    fn planted_bad_group_is_reported() {
        let u = [1, -2, 3];
        let g = GroupedCollection {
            groups: vec![signed(&u)[..2].to_vec(), signed(&u)[2..].to_vec()],
            l: 4,
            trace: GroupingTrace::default(),
        };
        let rep = verify_grouping(&g, &u);
        assert!(!rep.u_ok && rep.disjoint_cover);
        assert_eq!(rep.min_group_u, Some(-1));
        let g = GroupedCollection { groups: vec![signed(&u)[..1].to_vec()], ..g };
        assert!(!verify_grouping(&g, &u).disjoint_cover);
    }

    #[test]
    fn empty_collection() {
        let g = group_parts(&[], 4).unwrap();
        assert!(g.groups.is_empty());
        assert!(verify_grouping(&g, &[]).passed());
    }
}
