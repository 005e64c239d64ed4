//! Multi-swap local search for sum-of-squares facility location.

use serde::{Deserialize, Serialize};

use crate::candidates::CandidateStrategy;
use crate::error::{GeoError, Result};
use crate::geometry::{sosfl_cost, CostBreakdown, PointSet};
use crate::swap::{best_swap, DistanceTable, SwapLimits, SwapMove};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalSearchConfig {
    pub epsilon: f64,
    /// Bound on `|F1 ∖ F| + |F ∖ F1|`.
    pub swap_cap: usize,
    /// Required ratio `new / old` for an accepted swap; `None` means `1 - 1/n`.
    pub improvement_factor: Option<f64>,
    /// Accept any strict improvement.
    pub greedy: bool,
    pub max_iterations: usize,
    pub candidates: CandidateStrategy,
    pub seed: u64,
}

impl Default for LocalSearchConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            swap_cap: 3,
            improvement_factor: None,
            greedy: false,
            max_iterations: 10_000,
            candidates: CandidateStrategy::default(),
            seed: 0,
        }
    }
}

impl LocalSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(GeoError::InvalidParameter(format!(
                "epsilon must be in (0, 1], got {}",
                self.epsilon
            )));
        }
        validate_common(self.swap_cap, self.improvement_factor)
    }

    /// The acceptance ratio actually used for `n` clients; 1 in greedy mode.
    pub fn effective_factor(&self, n: usize) -> f64 {
        effective_factor(self.greedy, self.improvement_factor, n)
    }
}

pub(crate) fn validate_common(swap_cap: usize, factor: Option<f64>) -> Result<()> {
    if swap_cap == 0 {
        return Err(GeoError::InvalidParameter("swap_cap must be >= 1".into()));
    }
    if let Some(f) = factor {
        if !(f > 0.0 && f < 1.0) {
            return Err(GeoError::InvalidParameter(format!(
                "improvement_factor must be in (0, 1), got {f}"
            )));
        }
    }
    Ok(())
}

pub(crate) fn effective_factor(greedy: bool, factor: Option<f64>, n: usize) -> f64 {
    if greedy {
        1.0
    } else {
        factor.unwrap_or(1.0 - 1.0 / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub cost: f64,
    pub removed: Vec<Vec<f64>>,
    pub added: Vec<Vec<f64>>,
}

/// A strict improvement that did not clear the acceptance ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockedImprovement {
    pub cost: f64,
    pub required_below: f64,
    pub removed: Vec<Vec<f64>>,
    pub added: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub solution: PointSet,
    pub cost: CostBreakdown,
    /// Iteration 0 is the starting solution.
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
    pub converged: bool,
    pub improvement_factor: f64,
    pub blocked_improvement: Option<BlockedImprovement>,
}

impl SolveResult {
    /// Every accepted step is below `factor` times the previous cost.
    pub fn descent_holds(&self) -> bool {
        self.trace
            .windows(2)
            .all(|w| w[1].cost < self.improvement_factor * w[0].cost)
    }

    /// `ceil(ln(initial / final) / -ln(factor))`, or `None` if unbounded.
    pub fn iteration_bound(&self) -> Option<usize> {
        let first = self.trace.first()?.cost;
        let last = self.trace.last()?.cost;
        if !(self.improvement_factor < 1.0) || !(last > 0.0) {
            return None;
        }
        let v = (first / last).ln() / -self.improvement_factor.ln();
        Some((v - 1e-9).ceil().max(0.0) as usize)
    }

    pub fn within_iteration_bound(&self) -> bool {
        self.iteration_bound().is_none_or(|b| self.iterations <= b)
    }
}

pub(crate) fn describe(mv: &SwapMove, centers: &PointSet, candidates: &PointSet) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    (
        mv.remove.iter().map(|&i| centers.get(i).coords().to_vec()).collect(),
        mv.add.iter().map(|&b| candidates.get(b).coords().to_vec()).collect(),
    )
}

/// The best improving swap whose cost clears `factor * cost(F)`.
pub fn find_improving_swap(
    facilities: &PointSet,
    clients: &PointSet,
    f: f64,
    cfg: &LocalSearchConfig,
    candidates: &PointSet,
) -> Result<Option<SwapMove>> {
    cfg.validate()?;
    let current = sosfl_cost(clients, facilities, f)?.total;
    let table = DistanceTable::new(clients, candidates.clone())?;
    let threshold = cfg.effective_factor(clients.len()) * current;
    let limits = SwapLimits {
        cap: cfg.swap_cap,
        max_centers: None,
    };
    best_swap(clients, facilities, &table, f, limits, threshold)
}

/// Local search starting from one facility at every client.
pub fn solve_sosfl(clients: &PointSet, f: f64, cfg: &LocalSearchConfig) -> Result<SolveResult> {
    cfg.validate()?;
    if clients.is_empty() {
        return Err(GeoError::EmptyPointSet);
    }
    if !(f > 0.0) || !f.is_finite() {
        return Err(GeoError::InvalidParameter(format!(
            "facility cost must be > 0, got {f}"
        )));
    }
    let candidates = cfg.candidates.build(clients, cfg.seed)?;
    let table = DistanceTable::new(clients, candidates.points)?;
    let factor = cfg.effective_factor(clients.len());
    let limits = SwapLimits {
        cap: cfg.swap_cap,
        max_centers: None,
    };
    let mut facilities = clients.clone();
    let mut cost = sosfl_cost(clients, &facilities, f)?.total;
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
        // Search for any strict improvement; the best one decides acceptance.
        let Some(mv) = best_swap(clients, &facilities, &table, f, limits, cost)? else {
            converged = true;
            break;
        };
        let (removed, added) = describe(&mv, &facilities, &table.candidates);
        let next = mv.apply(&facilities, &table.candidates);
        let next_cost = sosfl_cost(clients, &next, f)?.total;
        if !(next_cost < factor * cost) {
            log::info!(
                "improvement to {next_cost} blocked: must be below {}",
                factor * cost
            );
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
        facilities = next;
        cost = next_cost;
        log::debug!("iteration {iterations}: cost {cost}");
        trace.push(TraceEntry {
            iteration: iterations,
            cost,
            removed,
            added,
        });
    }
    Ok(SolveResult {
        cost: sosfl_cost(clients, &facilities, f)?,
        solution: facilities,
        trace,
        iterations,
        converged,
        improvement_factor: factor,
        blocked_improvement: blocked,
    })
}
