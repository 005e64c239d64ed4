//! Bicriteria k-means local search over `ceil((1 + 5ε)k)` centers.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::{CandidateSet, CandidateStrategy};
use crate::error::{GeoError, Result};
use crate::geometry::{kmeans_cost, nearest_unchecked, CostBreakdown, PointSet};
use crate::sosfl::{describe, effective_factor, validate_common, SolveResult, TraceEntry, BlockedImprovement};
use crate::swap::{best_swap, DistanceTable, SwapLimits};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initializer {
    /// D² seeding followed by single-swap search over client positions.
    #[default]
    SingleswapSurrogate,
    D2Seeding,
    /// Use `BicriteriaConfig::initial_centers`.
    Given,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BicriteriaConfig {
    pub k: usize,
    /// In `[0, 1]`; 0 gives exactly `k` centers.
    pub epsilon: f64,
    pub swap_cap: usize,
    pub improvement_factor: Option<f64>,
    pub greedy: bool,
    pub max_iterations: usize,
    pub candidates: CandidateStrategy,
    pub seed: u64,
    pub initializer: Initializer,
    pub initial_centers: Option<PointSet>,
}

impl Default for BicriteriaConfig {
    fn default() -> Self {
        Self {
            k: 2,
            epsilon: 0.2,
            swap_cap: 3,
            improvement_factor: None,
            greedy: false,
            max_iterations: 10_000,
            candidates: CandidateStrategy::default(),
            seed: 0,
            initializer: Initializer::default(),
            initial_centers: None,
        }
    }
}

impl BicriteriaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(GeoError::InvalidParameter("k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(GeoError::InvalidParameter(format!(
                "epsilon must be in [0, 1], got {}",
                self.epsilon
            )));
        }
        if self.initializer == Initializer::Given && self.initial_centers.is_none() {
            return Err(GeoError::InvalidParameter(
                "initializer \"given\" needs initial_centers".into(),
            ));
        }
        validate_common(self.swap_cap, self.improvement_factor)
    }

    pub fn budget(&self) -> usize {
        center_budget(self.k, self.epsilon)
    }
}

/// `ceil((1 + 5ε) k)`, ignoring rounding noise just above an integer.
pub fn center_budget(k: usize, epsilon: f64) -> usize {
    ((1.0 + 5.0 * epsilon) * k as f64 - 1e-9).ceil().max(k as f64) as usize
}

/// Append client points that are not already centers, in seeded random order,
/// until there are `budget` centers. Client points repeat once exhausted.
pub fn pad_centers(centers: &PointSet, points: &PointSet, budget: usize, seed: u64) -> Result<PointSet> {
    centers.check_dim(points.dim())?;
    if centers.len() > budget {
        return Err(GeoError::InvalidParameter(format!(
            "{} centers already exceed the budget {budget}",
            centers.len()
        )));
    }
    let mut out = centers.clone();
    if out.len() == budget {
        return Ok(out);
    }
    if points.is_empty() {
        return Err(GeoError::EmptyPointSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut rng);
    let mut fresh = Vec::new();
    let mut dup = Vec::new();
    for &i in &order {
        let p = points.get(i);
        if out.iter().any(|q| q.same_location(p)) || fresh.iter().any(|&j: &usize| points.get(j).same_location(p)) {
            dup.push(i);
        } else {
            fresh.push(i);
        }
    }
    for &i in fresh.iter().chain(dup.iter()).cycle() {
        if out.len() == budget {
            break;
        }
        out.push_unchecked(points.get(i).clone());
    }
    Ok(out)
}

/// D² seeding of `k` centers.
fn d2_seed(points: &PointSet, k: usize, rng: &mut ChaCha8Rng) -> PointSet {
    let n = points.len();
    let mut centers = PointSet::empty(points.dim());
    centers.push_unchecked(points.get(rng.random_range(0..n)).clone());
    let mut dist: Vec<f64> = points
        .iter()
        .map(|p| nearest_unchecked(p.coords(), centers.points()).1)
        .collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points.get(pick).clone();
        for (i, p) in points.iter().enumerate() {
            dist[i] = dist[i].min(crate::geometry::sq_dist_slices(p.coords(), c.coords()));
        }
        centers.push_unchecked(c);
    }
    centers
}

/// The starting center set, padded or truncated to the budget.
pub fn initialize_kmeans(points: &PointSet, cfg: &BicriteriaConfig) -> Result<PointSet> {
    cfg.validate()?;
    if points.is_empty() {
        return Err(GeoError::EmptyPointSet);
    }
    let budget = cfg.budget();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeded = match cfg.initializer {
        Initializer::Given => {
            let given = cfg.initial_centers.clone().expect("validated");
            given.check_dim(points.dim())?;
            if given.len() > budget {
                log::warn!("given centers truncated from {} to {budget}", given.len());
                given.select(&(0..budget).collect::<Vec<_>>())
            } else {
                if given.len() < budget {
                    log::warn!("given centers padded from {} to {budget}", given.len());
                }
                given
            }
        }
        Initializer::D2Seeding => d2_seed(points, cfg.k.min(budget), &mut rng),
        Initializer::SingleswapSurrogate => {
            let start = d2_seed(points, cfg.k.min(budget), &mut rng);
            single_swap(points, start, cfg.k.min(budget))?
        }
    };
    pad_centers(&seeded, points, budget, cfg.seed.wrapping_add(1))
}

/// Swap one center for one client position while that improves the cost by
/// the factor `1 - 1/n`.
fn single_swap(points: &PointSet, mut centers: PointSet, k: usize) -> Result<PointSet> {
    let cands = CandidateStrategy::Clients.build(points, 0)?;
    let table = DistanceTable::new(points, cands.points)?;
    let factor = 1.0 - 1.0 / points.len() as f64;
    let limits = SwapLimits {
        cap: 2,
        max_centers: Some(k),
    };
    let mut cost = kmeans_cost(points, &centers)?;
    for _ in 0..10_000 {
        let Some(mv) = best_swap(points, &centers, &table, 0.0, limits, factor * cost)? else {
            break;
        };
        centers = mv.apply(&centers, &table.candidates);
        cost = mv.cost;
    }
    Ok(centers)
}

/// Local search keeping exactly `budget` centers.
pub fn solve_kmeans_bicriteria(points: &PointSet, cfg: &BicriteriaConfig) -> Result<SolveResult> {
    let mut centers = initialize_kmeans(points, cfg)?;
    let candidates: CandidateSet = cfg.candidates.build(points, cfg.seed)?;
    solve_from(points, cfg, &mut centers, candidates.points)
}

fn solve_from(
    points: &PointSet,
    cfg: &BicriteriaConfig,
    centers: &mut PointSet,
    candidates: PointSet,
) -> Result<SolveResult> {
    let budget = cfg.budget();
    let table = DistanceTable::new(points, candidates)?;
    let factor = effective_factor(cfg.greedy, cfg.improvement_factor, points.len());
    let limits = SwapLimits {
        cap: cfg.swap_cap,
        max_centers: Some(budget),
    };
    let mut cost = kmeans_cost(points, centers)?;
    let mut trace = vec![TraceEntry {
        iteration: 0,
        cost,
        removed: Vec::new(),
        added: Vec::new(),
    }];
    let mut blocked = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        debug_assert_eq!(centers.len(), budget);
        let Some(mv) = best_swap(points, centers, &table, 0.0, limits, cost)? else {
            converged = true;
            break;
        };
        let (removed, added) = describe(&mv, centers, &table.candidates);
        let swapped = mv.apply(centers, &table.candidates);
        let seed = cfg.seed.wrapping_add(2 + iterations as u64);
        let next = pad_centers(&swapped, points, budget, seed)?;
        let next_cost = kmeans_cost(points, &next)?;
        if !(next_cost < factor * cost) {
            blocked = Some(BlockedImprovement {
                cost: next_cost,
                required_below: factor * cost,
                removed,
                added,
            });
            converged = true;
            break;
        }
        iterations += 1;
        *centers = next;
        cost = next_cost;
        trace.push(TraceEntry {
            iteration: iterations,
            cost,
            removed,
            added,
        });
    }
    Ok(SolveResult {
        cost: CostBreakdown::new(0.0, cost),
        solution: centers.clone(),
        trace,
        iterations,
        converged,
        improvement_factor: factor,
        blocked_improvement: blocked,
    })
}
