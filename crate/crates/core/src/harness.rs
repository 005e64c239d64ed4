//! Experiment configuration, orchestration and reports.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::CandidateStrategy;
use crate::error::{GeoError, Result};
use crate::geometry::{centroid, kmeans_cost, sse_about, PointSet};
use crate::grouping::{group_limit, group_parts, signed_parts, verify_grouping_for, GroupingReport};
use crate::instance::{gen_instance, InstanceSpec};
use crate::io::read_points;
use crate::kmeans::{solve_kmeans_bicriteria, BicriteriaConfig, Initializer};
use crate::oracle::{exact_kmeans, exact_sosfl, MAX_ORACLE_POINTS};
use crate::partition::{
    check_lemmas, check_observation1, run_partition_with, LemmaReport, Observation1Report, PartitionParams,
};
use crate::separator::{
    contract_queries, verify_contract, BallNetSeparator, ContractReport, EmptyNetSeparator, Separator,
    SeparatorParams,
};
use crate::sosfl::{solve_sosfl, LocalSearchConfig, SolveResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Ratios below `1 - RATIO_SLACK` mean the oracle or the solver is wrong.
pub const RATIO_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    #[default]
    Sosfl,
    Kmeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparatorKind {
    #[default]
    BallNet,
    /// Discards every net; for planted failures.
    EmptyNet,
}

impl std::str::FromStr for SeparatorKind {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ball_net" => Ok(SeparatorKind::BallNet),
            "empty_net" => Ok(SeparatorKind::EmptyNet),
            other => Err(GeoError::InvalidParameter(format!("unknown separator kind {other:?}"))),
        }
    }
}

pub fn make_separator(kind: SeparatorKind, params: &PartitionParams) -> Box<dyn Separator + Sync> {
    let params = SeparatorParams {
        alpha: params.alpha,
        ..params.separator.clone()
    };
    match kind {
        SeparatorKind::BallNet => Box::new(BallNetSeparator { params }),
        SeparatorKind::EmptyNet => Box::new(EmptyNetSeparator { params }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Descent,
    Separator,
    Observation1,
    Lemmas,
    Grouping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstanceConfig {
    pub id: Option<String>,
    pub problem: Problem,
    #[serde(flatten)]
    pub spec: InstanceSpec,
    /// Read points from this CSV instead of generating them.
    pub input: Option<PathBuf>,
    pub f: Option<f64>,
    /// Facility cost as a multiple of `SSE / n`.
    pub f_scale: Option<f64>,
    pub k: usize,
    pub epsilon: Option<f64>,
    pub swap_cap: usize,
    pub candidates: CandidateStrategy,
    pub greedy: bool,
    pub improvement_factor: Option<f64>,
    pub max_iterations: usize,
    pub solver_seed: u64,
    pub initializer: Initializer,
    /// Compare against the exact optimum when `n <= 12`.
    pub oracle: bool,
    pub checks: Vec<Check>,
    /// μ for the separator check; defaults to the partition's μ.
    pub mu: Option<usize>,
    pub queries: usize,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            id: None,
            problem: Problem::Sosfl,
            spec: InstanceSpec::default(),
            input: None,
            f: None,
            f_scale: None,
            k: 2,
            epsilon: None,
            swap_cap: 3,
            candidates: CandidateStrategy::default(),
            greedy: false,
            improvement_factor: None,
            max_iterations: 10_000,
            solver_seed: 0,
            initializer: Initializer::default(),
            oracle: true,
            checks: vec![Check::Descent],
            mu: None,
            queries: 10_000,
        }
    }
}

/// A point source in a check case: a CSV path or a generator spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointSource {
    Path(PathBuf),
    Spec(InstanceSpec),
}

impl PointSource {
    fn load(&self, base: &Path) -> Result<PointSet> {
        match self {
            PointSource::Path(p) => read_points(base.join(p)),
            PointSource::Spec(s) => gen_instance(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckCaseConfig {
    pub id: Option<String>,
    pub epsilon: f64,
    pub local: PointSource,
    pub global: PointSource,
    /// Defaults to the local and global points together.
    #[serde(default)]
    pub clients: Option<PointSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub record_timings: bool,
    #[serde(default)]
    pub separator_kind: SeparatorKind,
    #[serde(default)]
    pub partition: PartitionParams,
    #[serde(default, rename = "instance")]
    pub instances: Vec<InstanceConfig>,
    #[serde(default, rename = "check_case")]
    pub check_cases: Vec<CheckCaseConfig>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| GeoError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(GeoError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GeoError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentCheck {
    pub descent_holds: bool,
    pub iteration_bound: Option<usize>,
    pub within_iteration_bound: bool,
}

impl DescentCheck {
    pub fn of(r: &SolveResult) -> Self {
        Self {
            descent_holds: r.descent_holds(),
            iteration_bound: r.iteration_bound(),
            within_iteration_bound: r.within_iteration_bound(),
        }
    }

    pub fn passed(&self) -> bool {
        self.descent_holds && self.within_iteration_bound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum GroupingOutcome {
    Checked(GroupingReport),
    InsufficientSurplus { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatorCheck {
    pub mu: usize,
    pub net_size: usize,
    pub inside_count: usize,
    pub densify_rounds: u32,
    pub fallback: bool,
    pub contract: ContractReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckResults {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub descent: Option<DescentCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub separator: Option<SeparatorCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observation1: Option<Observation1Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemmas: Option<LemmaReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grouping: Option<GroupingOutcome>,
    /// Checks that could not run or did not count, with the reason.
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub id: String,
    pub problem: Problem,
    pub n: usize,
    pub d: usize,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    pub centers: usize,
    pub solver_cost: f64,
    pub oracle_cost: Option<f64>,
    pub ratio: Option<f64>,
    /// k-means only: the exact optimum with `budget` centers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_budget_cost: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub blocked_improvement: bool,
    pub checks: CheckResults,
    pub violations: Vec<String>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckCaseRow {
    pub id: String,
    pub epsilon: f64,
    pub report: VerifyReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub instances: usize,
    pub with_oracle: usize,
    pub ratio_mean: Option<f64>,
    pub ratio_median: Option<f64>,
    pub ratio_max: Option<f64>,
    pub ratio_within_1_05: usize,
    pub ratio_within_1_25: usize,
    pub check_cases: usize,
    pub failed_instances: usize,
    pub failed_check_cases: usize,
    pub all_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    /// Seconds since the Unix epoch; not part of the reproducible content.
    pub timestamp: u64,
    pub rows: Vec<InstanceRow>,
    pub check_cases: Vec<CheckCaseRow>,
    pub aggregate: Aggregate,
}

impl ExperimentReport {
    /// One line per instance, plot-ready.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| GeoError::Io {
            path: PathBuf::from("<csv>"),
            message: e.to_string(),
        };
        w.write_record([
            "id", "problem", "n", "d", "epsilon", "centers", "solver_cost", "oracle_cost", "ratio", "iterations",
            "converged", "passed",
        ])
        .map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.id.clone(),
                match r.problem {
                    Problem::Sosfl => "sosfl".into(),
                    Problem::Kmeans => "kmeans".into(),
                },
                r.n.to_string(),
                r.d.to_string(),
                r.epsilon.to_string(),
                r.centers.to_string(),
                r.solver_cost.to_string(),
                opt(r.oracle_cost),
                opt(r.ratio),
                r.iterations.to_string(),
                r.converged.to_string(),
                r.passed.to_string(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| GeoError::Io {
            path: PathBuf::from("<csv>"),
            message: e.to_string(),
        })?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn now_timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// `f`, either given directly or as `f_scale * SSE / n`.
pub fn facility_cost(cfg: &InstanceConfig, points: &PointSet) -> Result<f64> {
    let f = match (cfg.f, cfg.f_scale) {
        (Some(f), None) => f,
        (None, Some(s)) => s * sse_about(points, &centroid(points)?) / points.len() as f64,
        (Some(_), Some(_)) => {
            return Err(GeoError::Config("give either f or f_scale, not both".into()));
        }
        (None, None) => return Err(GeoError::Config("sosfl instances need f or f_scale".into())),
    };
    if !(f > 0.0 && f.is_finite()) {
        return Err(GeoError::InvalidParameter(format!("facility cost must be > 0, got {f}")));
    }
    Ok(f)
}

struct Ctx<'a> {
    partition: &'a PartitionParams,
    separator: &'a (dyn Separator + Sync),
}

fn run_instance(index: usize, cfg: &InstanceConfig, ctx: &Ctx, base: &Path, timings: bool) -> Result<InstanceRow> {
    let start = Instant::now();
    let points = match &cfg.input {
        Some(p) => read_points(base.join(p))?,
        None => gen_instance(&cfg.spec)?,
    };
    let id = cfg.id.clone().unwrap_or_else(|| format!("instance-{index}"));
    let n = points.len();
    let oracle_on = cfg.oracle && n <= MAX_ORACLE_POINTS;
    let mut violations = Vec::new();
    let mut checks = CheckResults::default();

    let (result, epsilon, f, k, budget, oracle, oracle_budget_cost, solver_cost) = match cfg.problem {
        Problem::Sosfl => {
            let epsilon = cfg.epsilon.unwrap_or(0.5);
            let f = facility_cost(cfg, &points)?;
            let lc = LocalSearchConfig {
                epsilon,
                swap_cap: cfg.swap_cap,
                improvement_factor: cfg.improvement_factor,
                greedy: cfg.greedy,
                max_iterations: cfg.max_iterations,
                candidates: cfg.candidates,
                seed: cfg.solver_seed,
            };
            let r = solve_sosfl(&points, f, &lc)?;
            let oracle = if oracle_on { Some(exact_sosfl(&points, f)?) } else { None };
            let cost = r.cost.total;
            (r, epsilon, Some(f), None, None, oracle, None, cost)
        }
        Problem::Kmeans => {
            let epsilon = cfg.epsilon.unwrap_or(0.2);
            let bc = BicriteriaConfig {
                k: cfg.k,
                epsilon,
                swap_cap: cfg.swap_cap,
                improvement_factor: cfg.improvement_factor,
                greedy: cfg.greedy,
                max_iterations: cfg.max_iterations,
                candidates: cfg.candidates,
                seed: cfg.solver_seed,
                initializer: cfg.initializer,
                initial_centers: None,
            };
            let budget = bc.budget();
            let r = solve_kmeans_bicriteria(&points, &bc)?;
            if r.solution.len() != budget {
                violations.push(format!("returned {} centers, budget is {budget}", r.solution.len()));
            }
            let cost = kmeans_cost(&points, &r.solution)?;
            let (oracle, at_budget) = if oracle_on && cfg.k <= n {
                let at_k = exact_kmeans(&points, cfg.k)?;
                let at_budget = exact_kmeans(&points, budget.min(n))?.opt_cost;
                if cost < at_budget * (1.0 - RATIO_SLACK) - 1e-12 {
                    violations.push(format!("cost {cost} is below the optimum {at_budget} with {budget} centers"));
                }
                (Some(at_k), Some(at_budget))
            } else {
                (None, None)
            };
            (r, epsilon, None, Some(cfg.k), Some(budget), oracle, at_budget, cost)
        }
    };

    let ratio = oracle.as_ref().map(|o| ratio_of(solver_cost, o.opt_cost));
    if let Some(r) = ratio {
        if cfg.problem == Problem::Sosfl && r < 1.0 - RATIO_SLACK {
            violations.push(format!("ratio {r} is below 1"));
        }
    }

    for check in &cfg.checks {
        match check {
            Check::Descent => {
                let d = DescentCheck::of(&result);
                if !d.descent_holds {
                    violations.push("an accepted swap did not clear the improvement factor".into());
                }
                if !d.within_iteration_bound {
                    violations.push(format!(
                        "{} iterations exceed the bound {:?}",
                        result.iterations, d.iteration_bound
                    ));
                }
                checks.descent = Some(d);
            }
            Check::Separator => {
                let mu = cfg.mu.unwrap_or_else(|| ctx.partition.mu(epsilon, points.dim()));
                match ctx.separator.separate(&points, mu) {
                    Ok(res) => {
                        let queries = contract_queries(&points, cfg.queries, cfg.spec.seed ^ 0xc0ffee);
                        let contract = verify_contract(&points, &res, &queries)?;
                        if !contract.passed() {
                            violations.push(format!("separator contract: {} violations", contract.violations));
                        }
                        checks.separator = Some(SeparatorCheck {
                            mu,
                            net_size: res.net.len(),
                            inside_count: res.inside_count,
                            densify_rounds: res.densify_rounds,
                            fallback: res.fallback,
                            contract,
                        });
                    }
                    Err(GeoError::SetTooSmall { size, threshold }) => checks
                        .skipped
                        .push(format!("separator: {size} points do not exceed {threshold}")),
                    Err(e) => return Err(e),
                }
            }
            Check::Observation1 | Check::Lemmas | Check::Grouping => {}
        }
    }

    let wants_partition = cfg
        .checks
        .iter()
        .any(|c| matches!(c, Check::Observation1 | Check::Lemmas | Check::Grouping));
    if wants_partition {
        match &oracle {
            Some(o) => {
                let report = verify_inner(&points, &result.solution, &o.opt_centers, epsilon, ctx, false)?;
                if cfg.checks.contains(&Check::Observation1) {
                    checks.observation1 = Some(report.observation1);
                }
                if cfg.checks.contains(&Check::Lemmas) {
                    checks.lemmas = Some(report.lemmas);
                }
                if cfg.checks.contains(&Check::Grouping) {
                    checks.grouping = Some(report.grouping);
                }
                violations.extend(report.violations);
                checks.skipped.extend(report.notes);
            }
            None => checks
                .skipped
                .push("partition checks need the exact optimum (n <= 12 with oracle on)".into()),
        }
    }

    let passed = violations.is_empty();
    Ok(InstanceRow {
        id,
        problem: cfg.problem,
        n,
        d: points.dim(),
        epsilon,
        f,
        k,
        budget,
        centers: result.solution.len(),
        solver_cost,
        oracle_cost: oracle.as_ref().map(|o| o.opt_cost),
        ratio,
        oracle_budget_cost,
        iterations: result.iterations,
        converged: result.converged,
        blocked_improvement: result.blocked_improvement.is_some(),
        checks,
        violations,
        passed,
        wall_time_ms: timings.then(|| ms(start)),
    })
}

fn ratio_of(cost: f64, opt: f64) -> f64 {
    if opt > 0.0 {
        cost / opt
    } else if cost <= 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub parts: usize,
    pub mu: usize,
    pub observation1: Observation1Report,
    pub lemmas: LemmaReport,
    pub grouping: GroupingOutcome,
    pub violations: Vec<String>,
    pub passed: bool,
    /// Overruns that do not count as violations in this context.
    pub notes: Vec<String>,
}

/// Partition `local` against `global` and run every certificate check.
/// With `strict`, part-size bound overruns and a grouping surplus
/// shortfall count as violations; otherwise they are only noted.
fn verify_inner(
    clients: &PointSet,
    local: &PointSet,
    global: &PointSet,
    epsilon: f64,
    ctx: &Ctx,
    strict: bool,
) -> Result<VerifyReport> {
    let out = run_partition_with(local, global, epsilon, ctx.partition, ctx.separator)?;
    let observation1 = check_observation1(&out);
    let lemmas = check_lemmas(clients, &out)?;
    let l = group_limit(out.beta, out.epsilon, out.dim());
    let grouping = match group_parts(&signed_parts(&out), l) {
        Ok(g) => GroupingOutcome::Checked(verify_grouping_for(&g, &out)),
        Err(GeoError::InsufficientSurplus(message)) => GroupingOutcome::InsufficientSurplus { message },
        Err(e) => return Err(e),
    };
    let mut violations = Vec::new();
    let mut notes = Vec::new();
    for line in observation1.lines() {
        if line.contains("FAIL") {
            if strict {
                violations.push(format!("observation {line}"));
            } else {
                notes.push(format!("observation {line}"));
            }
        }
    }
    if !observation1.double_count.pass {
        violations.push("net union sum exceeds twice the net count".into());
    }
    if !(observation1.local_cover_exact && observation1.global_cover_exact) {
        violations.push("parts are not an exact disjoint cover".into());
    }
    if lemmas.lemma2_violations > 0 {
        violations.push(format!("{} witness violations", lemmas.lemma2_violations));
    }
    if lemmas.assignment_violations > 0 {
        violations.push(format!("{} assignment violations", lemmas.assignment_violations));
    }
    match &grouping {
        GroupingOutcome::Checked(rep) => violations.extend(rep.violations.iter().map(|v| format!("grouping: {v}"))),
        GroupingOutcome::InsufficientSurplus { message } if strict => {
            violations.push(format!("grouping: {message}"));
        }
        GroupingOutcome::InsufficientSurplus { message } => notes.push(format!("grouping skipped: {message}")),
    }
    Ok(VerifyReport {
        parts: out.parts.len(),
        mu: out.mu,
        observation1,
        lemmas,
        grouping,
        passed: violations.is_empty(),
        violations,
        notes,
    })
}

/// Inputs for a single certificate check.
#[derive(Debug, Clone)]
pub struct VerifyInput {
    pub clients: Option<PointSet>,
    pub local: PointSet,
    pub global: PointSet,
    pub epsilon: f64,
    pub partition: PartitionParams,
    pub separator_kind: SeparatorKind,
}

pub fn verify(input: &VerifyInput) -> Result<VerifyReport> {
    let sep = make_separator(input.separator_kind, &input.partition);
    let ctx = Ctx {
        partition: &input.partition,
        separator: sep.as_ref(),
    };
    let clients = match &input.clients {
        Some(c) => c.clone(),
        None => union(&input.local, &input.global)?,
    };
    verify_inner(&clients, &input.local, &input.global, input.epsilon, &ctx, true)
}

fn union(a: &PointSet, b: &PointSet) -> Result<PointSet> {
    let mut rows = a.to_rows();
    rows.extend(b.to_rows());
    PointSet::from_rows(rows)
}

#[derive(Debug, Clone)]
pub struct PlantedCase {
    pub name: &'static str,
    pub input: VerifyInput,
    pub expect_observation1: bool,
    pub expect_grouping: bool,
}

/// A passing case, a part-size overrun and a group with negative surplus.
pub fn planted_cases() -> Result<Vec<PlantedCase>> {
    let pts = |n, seed| {
        gen_instance(&InstanceSpec {
            n,
            d: 2,
            seed,
            ..Default::default()
        })
    };
    let base = VerifyInput {
        clients: None,
        local: pts(100, 1)?,
        global: pts(100, 2)?,
        epsilon: 0.5,
        partition: PartitionParams::default(),
        separator_kind: SeparatorKind::BallNet,
    };
    Ok(vec![
        PlantedCase {
            name: "pass",
            input: base.clone(),
            expect_observation1: true,
            expect_grouping: true,
        },
        PlantedCase {
            name: "observation1_overrun",
            input: VerifyInput {
                partition: PartitionParams {
                    beta: 1.0,
                    ..PartitionParams::default()
                },
                ..base.clone()
            },
            expect_observation1: false,
            expect_grouping: true,
        },
        PlantedCase {
            name: "grouping_negative",
            input: VerifyInput {
                local: pts(50, 3)?,
                ..base
            },
            expect_observation1: true,
            expect_grouping: false,
        },
    ])
}

impl VerifyReport {
    pub fn observation1_ok(&self) -> bool {
        self.observation1.passed()
    }

    pub fn grouping_ok(&self) -> bool {
        matches!(&self.grouping, GroupingOutcome::Checked(r) if r.passed())
    }
}

fn run_check_case(index: usize, case: &CheckCaseConfig, ctx: &Ctx, base: &Path, timings: bool) -> Result<CheckCaseRow> {
    let start = Instant::now();
    let local = case.local.load(base)?;
    let global = case.global.load(base)?;
    let clients = match &case.clients {
        Some(c) => c.load(base)?,
        None => union(&local, &global)?,
    };
    let report = verify_inner(&clients, &local, &global, case.epsilon, ctx, true)?;
    Ok(CheckCaseRow {
        id: case.id.clone().unwrap_or_else(|| format!("case-{index}")),
        epsilon: case.epsilon,
        report,
        wall_time_ms: timings.then(|| ms(start)),
    })
}

/// Runs every instance and check case in parallel and merges the rows in
/// configuration order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.partition.separator.validate()?;
    let sep = make_separator(cfg.separator_kind, &cfg.partition);
    let ctx = Ctx {
        partition: &cfg.partition,
        separator: sep.as_ref(),
    };
    let rows = cfg
        .instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| run_instance(i, inst, &ctx, &cfg.base_dir, cfg.record_timings))
        .collect::<Result<Vec<_>>>()?;
    let check_cases = cfg
        .check_cases
        .par_iter()
        .enumerate()
        .map(|(i, case)| run_check_case(i, case, &ctx, &cfg.base_dir, cfg.record_timings))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(&rows, &check_cases);
    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        timestamp: now_timestamp(),
        rows,
        check_cases,
        aggregate,
    })
}

fn aggregate(rows: &[InstanceRow], cases: &[CheckCaseRow]) -> Aggregate {
    let mut ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    ratios.sort_by(f64::total_cmp);
    let median = if ratios.is_empty() {
        None
    } else if ratios.len() % 2 == 1 {
        Some(ratios[ratios.len() / 2])
    } else {
        Some((ratios[ratios.len() / 2 - 1] + ratios[ratios.len() / 2]) / 2.0)
    };
    let failed_instances = rows.iter().filter(|r| !r.passed).count();
    let failed_check_cases = cases.iter().filter(|c| !c.report.passed).count();
    Aggregate {
        instances: rows.len(),
        with_oracle: ratios.len(),
        ratio_mean: (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
        ratio_median: median,
        ratio_max: ratios.last().copied(),
        ratio_within_1_05: ratios.iter().filter(|&&r| r <= 1.05).count(),
        ratio_within_1_25: ratios.iter().filter(|&&r| r <= 1.25).count(),
        check_cases: cases.len(),
        failed_instances,
        failed_check_cases,
        all_passed: failed_instances == 0 && failed_check_cases == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
schema_version = 1

[[instance]]
id = "fl"
problem = "sosfl"
generator = "uniform_box"
n = 6
d = 2
seed = 3
f_scale = 0.3
greedy = true
checks = ["descent", "observation1", "lemmas", "grouping"]

[[instance]]
id = "km"
problem = "kmeans"
n = 7
d = 1
seed = 4
k = 2
epsilon = 0.2
greedy = true
"#;

    #[test]
    fn parses_and_runs() {
        let cfg = ExperimentConfig::parse(SMALL).unwrap();
        assert_eq!(cfg.instances.len(), 2);
        assert_eq!(cfg.instances[1].spec.n, 7);
        let rep = run_experiment(&cfg).unwrap();
        assert_eq!(rep.rows[0].id, "fl");
        assert_eq!(rep.rows[1].budget, Some(4));
        assert_eq!(rep.rows[1].centers, 4);
        assert!(rep.aggregate.all_passed, "{:?}", rep.rows);
        assert_eq!(rep.aggregate.with_oracle, 2);
        assert!(rep.rows[0].checks.observation1.is_some());
        let again = run_experiment(&cfg).unwrap();
        assert_eq!(rep.rows, again.rows);
        let csv = rep.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn empty_and_bad_configs() {
        let rep = run_experiment(&ExperimentConfig::parse("schema_version = 1").unwrap()).unwrap();
        assert!(rep.rows.is_empty() && rep.aggregate.all_passed);
        assert!(matches!(ExperimentConfig::parse("schema_version = 2"), Err(GeoError::Config(_))));
        assert!(ExperimentConfig::parse("schema_version = 1\n[[instance]]\nn = \"x\"").is_err());
        let missing_f = ExperimentConfig::parse("schema_version = 1\n[[instance]]\nn = 3").unwrap();
        assert!(run_experiment(&missing_f).is_err());
    }

    #[test]
    fn planted_flags() {
        for case in planted_cases().unwrap() {
            let rep = verify(&case.input).unwrap();
            assert_eq!(rep.observation1_ok(), case.expect_observation1, "{}", case.name);
            assert_eq!(rep.grouping_ok(), case.expect_grouping, "{}", case.name);
            assert_eq!(rep.passed, case.expect_observation1 && case.expect_grouping, "{}", case.name);
        }
    }

    #[test]
    fn broken_separator_is_caught() {
        let text = r#"
schema_version = 1
separator_kind = "empty_net"
[partition]
gamma = 4.0

[[check_case]]
epsilon = 0.5
local = { n = 200, d = 2, seed = 1 }
global = { n = 200, d = 2, seed = 2 }
"#;
        let rep = run_experiment(&ExperimentConfig::parse(text).unwrap()).unwrap();
        assert!(!rep.aggregate.all_passed);
        assert!(rep.check_cases[0].report.lemmas.lemma2_violations > 0);
    }
}
