use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use geoclust::candidates::CandidateStrategy;
use geoclust::harness::{
    make_separator, planted_cases, run_experiment, verify, ExperimentConfig, InstanceConfig, Problem,
    SeparatorKind, VerifyInput, SCHEMA_VERSION,
};
use geoclust::instance::{gen_instance, Generator, InstanceSpec};
use geoclust::io::{read_points, write_points, write_points_to};
use geoclust::kmeans::{solve_kmeans_bicriteria, BicriteriaConfig, Initializer};
use geoclust::oracle::{exact_kmeans, exact_sosfl};
use geoclust::partition::{check_lemmas, check_observation1, run_partition_with, PartitionParams};
use geoclust::separator::{contract_queries, verify_contract, Separator, SeparatorParams};
use geoclust::sosfl::{solve_sosfl, LocalSearchConfig, SolveResult};
use geoclust::{centroid, sse_about, GeoError, PointSet};

const EXIT_VIOLATION: u8 = 2;
const EXIT_BAD_INPUT: u8 = 3;

/// A checked property failed.
#[derive(Debug)]
struct Violation(String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invariant violation: {}", self.0)
    }
}

impl std::error::Error for Violation {}

#[derive(Parser)]
#[command(name = "geoclust", version, about = "Local search clustering with separator certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded random instance as CSV.
    Gen(GenArgs),
    /// Local search for sum-of-squares facility location.
    SolveSosfl(SosflArgs),
    /// Bicriteria k-means local search.
    SolveKmeans(KmeansArgs),
    /// Exact optimum by partition enumeration (n <= 12).
    Oracle(OracleArgs),
    /// Partition a local and a global solution into parts.
    Partition(PartitionArgs),
    /// Build one ball separator and check its contract.
    Separator(SeparatorArgs),
    /// Run the certificate checks on given, configured or planted inputs.
    Verify(VerifyArgs),
    /// Run an experiment configuration.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value_t = GenKind::UniformBox)]
    generator: GenKind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    box_size: f64,
    #[arg(long, default_value_t = 3)]
    components: usize,
    #[arg(long, default_value_t = 0.05)]
    spread: f64,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    UniformBox,
    GaussianMixture,
    GridPlusNoise,
}

impl From<GenKind> for Generator {
    fn from(g: GenKind) -> Self {
        match g {
            GenKind::UniformBox => Generator::UniformBox,
            GenKind::GaussianMixture => Generator::GaussianMixture,
            GenKind::GridPlusNoise => Generator::GridPlusNoise,
        }
    }
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 3)]
    swap_cap: usize,
    #[arg(long, default_value = "subset:4")]
    candidates: CandidateStrategy,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Accept any strict improvement instead of requiring the 1 - 1/n factor.
    #[arg(long)]
    greedy: bool,
    #[arg(long)]
    improvement_factor: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    max_iterations: usize,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SosflArgs {
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, required_unless_present = "f_scale", conflicts_with = "f_scale")]
    f: Option<f64>,
    /// Facility cost as a multiple of SSE / n.
    #[arg(long)]
    f_scale: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
}

#[derive(Args)]
struct KmeansArgs {
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = InitKind::SingleswapSurrogate)]
    initializer: InitKind,
    /// Initial centers for `--initializer given`.
    #[arg(long)]
    initial: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitKind {
    SingleswapSurrogate,
    D2Seeding,
    Given,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sosfl,
    Kmeans,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long, conflicts_with = "f_scale")]
    f: Option<f64>,
    #[arg(long)]
    f_scale: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    /// Output path; stdout when omitted or given without a value.
    #[arg(long, num_args = 0..=1, default_missing_value = "-")]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct PartitionConstants {
    #[arg(long, default_value_t = 8.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1024.0)]
    beta: f64,
    #[arg(long, default_value_t = 64.0)]
    gamma: f64,
    /// Radius jitter seed of the separator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SepKind::BallNet)]
    separator_kind: SepKind,
}

impl PartitionConstants {
    fn params(&self) -> PartitionParams {
        PartitionParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            separator: SeparatorParams {
                radius_jitter_seed: self.seed,
                alpha: self.alpha,
                ..SeparatorParams::default()
            },
            ..PartitionParams::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SepKind {
    BallNet,
    EmptyNet,
}

impl From<SepKind> for SeparatorKind {
    fn from(k: SepKind) -> Self {
        match k {
            SepKind::BallNet => SeparatorKind::BallNet,
            SepKind::EmptyNet => SeparatorKind::EmptyNet,
        }
    }
}

#[derive(Args)]
struct PartitionArgs {
    #[arg(long)]
    local: PathBuf,
    #[arg(long)]
    global: PathBuf,
    /// Clients for the certificate checks; defaults to local and global together.
    #[arg(long)]
    clients: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[command(flatten)]
    constants: PartitionConstants,
    /// Add the size bounds and certificate reports; exit 2 if they fail.
    #[arg(long)]
    check: bool,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SeparatorArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    mu: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    queries: usize,
    #[arg(long, default_value_t = 8.0)]
    alpha: f64,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Experiment configuration; its check cases are run.
    #[arg(long, conflicts_with_all = ["local", "planted"])]
    config: Option<PathBuf>,
    #[arg(long, requires = "global", conflicts_with = "planted")]
    local: Option<PathBuf>,
    #[arg(long, requires = "local")]
    global: Option<PathBuf>,
    #[arg(long)]
    clients: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[command(flatten)]
    constants: PartitionConstants,
    /// Run the built-in planted cases and check their flags.
    #[arg(long)]
    planted: bool,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment configuration; a built-in desk-scale suite when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Include wall times in the report.
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_BAD_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_BAD_INPUT);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Violation>().is_some() {
        return EXIT_VIOLATION;
    }
    match e.downcast_ref::<GeoError>() {
        Some(g) if g.is_invariant_violation() => EXIT_VIOLATION,
        _ => EXIT_BAD_INPUT,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("GEOCLUST_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .with_context(|| format!("GEOCLUST_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => cmd_gen(a),
        Command::SolveSosfl(a) => cmd_sosfl(a),
        Command::SolveKmeans(a) => cmd_kmeans(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Partition(a) => cmd_partition(a),
        Command::Separator(a) => cmd_separator(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn emit<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) if p != Path::new("-") => {
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
        }
        _ => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load(path: &Path) -> Result<PointSet> {
    Ok(read_points(path)?)
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let spec = InstanceSpec {
        generator: a.generator.into(),
        n: a.n,
        d: a.d,
        box_size: a.box_size,
        components: a.components,
        spread: a.spread,
        seed: a.seed,
    };
    let points = gen_instance(&spec)?;
    match a.output {
        Some(p) => write_points(&p, &points)?,
        None => write_points_to(std::io::stdout().lock(), &points).map_err(anyhow::Error::msg)?,
    }
    Ok(())
}

fn facility_cost(points: &PointSet, f: Option<f64>, f_scale: Option<f64>) -> Result<f64> {
    match (f, f_scale) {
        (Some(f), None) => Ok(f),
        (None, Some(s)) => Ok(s * sse_about(points, &centroid(points)?) / points.len() as f64),
        _ => bail!(GeoError::InvalidParameter("give exactly one of --f and --f-scale".into())),
    }
}

fn trace_json(r: &SolveResult) -> Value {
    json!({
        "iterations": r.iterations,
        "converged": r.converged,
        "improvement_factor": r.improvement_factor,
        "descent_holds": r.descent_holds(),
        "iteration_bound": r.iteration_bound(),
        "blocked_improvement": r.blocked_improvement,
        "trace": r.trace,
    })
}

fn merge(mut a: Value, b: Value) -> Value {
    if let (Some(a), Value::Object(b)) = (a.as_object_mut(), b) {
        a.extend(b);
    }
    a
}

fn cmd_sosfl(a: SosflArgs) -> Result<()> {
    let clients = load(&a.search.input)?;
    let f = facility_cost(&clients, a.f, a.f_scale)?;
    let cfg = LocalSearchConfig {
        epsilon: a.epsilon,
        swap_cap: a.search.swap_cap,
        improvement_factor: a.search.improvement_factor,
        greedy: a.search.greedy,
        max_iterations: a.search.max_iterations,
        candidates: a.search.candidates,
        seed: a.search.seed,
    };
    let r = solve_sosfl(&clients, f, &cfg)?;
    let out = merge(
        json!({
            "f": f,
            "epsilon": a.epsilon,
            "swap_cap": cfg.swap_cap,
            "candidates": cfg.candidates.to_string(),
            "seed": cfg.seed,
            "greedy": cfg.greedy,
            "cost": r.cost,
            "facilities": r.solution,
        }),
        trace_json(&r),
    );
    emit(a.search.json.as_deref(), &out)?;
    if !(r.descent_holds() && r.within_iteration_bound()) {
        bail!(Violation("descent bookkeeping failed".into()));
    }
    Ok(())
}

fn cmd_kmeans(a: KmeansArgs) -> Result<()> {
    let points = load(&a.search.input)?;
    let initial_centers = a.initial.as_deref().map(load).transpose()?;
    let cfg = BicriteriaConfig {
        k: a.k,
        epsilon: a.epsilon,
        swap_cap: a.search.swap_cap,
        improvement_factor: a.search.improvement_factor,
        greedy: a.search.greedy,
        max_iterations: a.search.max_iterations,
        candidates: a.search.candidates,
        seed: a.search.seed,
        initializer: match a.initializer {
            InitKind::SingleswapSurrogate => Initializer::SingleswapSurrogate,
            InitKind::D2Seeding => Initializer::D2Seeding,
            InitKind::Given => Initializer::Given,
        },
        initial_centers,
    };
    let r = solve_kmeans_bicriteria(&points, &cfg)?;
    let budget = cfg.budget();
    let out = merge(
        json!({
            "k": cfg.k,
            "epsilon": cfg.epsilon,
            "budget": budget,
            "swap_cap": cfg.swap_cap,
            "candidates": cfg.candidates.to_string(),
            "seed": cfg.seed,
            "greedy": cfg.greedy,
            "cost": r.cost,
            "centers": r.solution,
        }),
        trace_json(&r),
    );
    emit(a.search.json.as_deref(), &out)?;
    if r.solution.len() != budget {
        bail!(Violation(format!("{} centers returned for budget {budget}", r.solution.len())));
    }
    if !(r.descent_holds() && r.within_iteration_bound()) {
        bail!(Violation("descent bookkeeping failed".into()));
    }
    Ok(())
}

fn cmd_oracle(a: OracleArgs) -> Result<()> {
    let points = load(&a.input)?;
    let out = match a.mode {
        Mode::Sosfl => {
            let f = facility_cost(&points, a.f, a.f_scale)?;
            let r = exact_sosfl(&points, f)?;
            merge(json!({"mode": "sosfl", "f": f}), serde_json::to_value(r)?)
        }
        Mode::Kmeans => {
            let Some(k) = a.k else {
                bail!(GeoError::InvalidParameter("--mode kmeans needs --k".into()));
            };
            let r = exact_kmeans(&points, k)?;
            merge(json!({"mode": "kmeans", "k": k}), serde_json::to_value(r)?)
        }
    };
    emit(a.json.as_deref(), &out)
}

fn cmd_partition(a: PartitionArgs) -> Result<()> {
    let local = load(&a.local)?;
    let global = load(&a.global)?;
    let params = a.constants.params();
    let sep = make_separator(a.constants.separator_kind.into(), &params);
    let out = run_partition_with(&local, &global, a.epsilon, &params, sep.as_ref())?;
    let parts: Vec<Value> = out
        .parts
        .iter()
        .map(|p| {
            json!({
                "index": p.index,
                "local": p.local,
                "global": p.global,
                "net": p.net,
                "carried": p.carried,
                "ball": p.ball,
                "separator_fallback": p.separator_fallback,
            })
        })
        .collect();
    let mut report = json!({
        "epsilon": out.epsilon,
        "mu": out.mu,
        "alpha": out.alpha,
        "beta": out.beta,
        "gamma": out.gamma,
        "parts": parts,
    });
    let mut failure = None;
    if a.check {
        let obs = check_observation1(&out);
        let clients = match &a.clients {
            Some(p) => load(p)?,
            None => {
                let mut rows = local.to_rows();
                rows.extend(global.to_rows());
                PointSet::from_rows(rows)?
            }
        };
        let lemmas = check_lemmas(&clients, &out)?;
        if !obs.passed() {
            failure = Some(format!("observation checks failed: {}", obs.lines().join("; ")));
        } else if !lemmas.passed() {
            failure = Some(format!(
                "{} witness and {} assignment violations",
                lemmas.lemma2_violations, lemmas.assignment_violations
            ));
        }
        report = merge(
            report,
            json!({
                "observation1": obs,
                "observation1_lines": obs.lines(),
                "lemmas": lemmas,
            }),
        );
    }
    emit(a.json.as_deref(), &report)?;
    match failure {
        Some(msg) => Err(Violation(msg).into()),
        None => Ok(()),
    }
}

fn cmd_separator(a: SeparatorArgs) -> Result<()> {
    let x = load(&a.input)?;
    let params = SeparatorParams {
        radius_jitter_seed: a.seed,
        alpha: a.alpha,
        ..SeparatorParams::default()
    };
    let sep = geoclust::separator::BallNetSeparator { params: params.clone() };
    let res = sep.separate(&x, a.mu)?;
    let queries = contract_queries(&x, a.queries.max(1), a.seed);
    let contract = verify_contract(&x, &res, &queries)?;
    let out = json!({
        "ball": res.ball,
        "net": res.net,
        "inside_count": res.inside_count,
        "densify_rounds": res.densify_rounds,
        "fallback": res.fallback,
        "net_budget": params.net_budget(a.mu, x.dim()),
        "within_budget": res.within_budget(&params, a.mu),
        "queries": contract.queries,
        "violations": contract.violations,
        "worst_ratio": contract.worst_ratio,
    });
    emit(a.json.as_deref(), &out)?;
    if !contract.passed() {
        bail!(Violation(format!("{} contract violations", contract.violations)));
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<()> {
    if a.planted {
        let mut rows = Vec::new();
        let mut mismatched = Vec::new();
        for case in planted_cases()? {
            let rep = verify(&case.input)?;
            let ok = rep.observation1_ok() == case.expect_observation1 && rep.grouping_ok() == case.expect_grouping;
            if !ok {
                mismatched.push(case.name);
            }
            rows.push(json!({
                "name": case.name,
                "expect_observation1": case.expect_observation1,
                "expect_grouping": case.expect_grouping,
                "observation1_ok": rep.observation1_ok(),
                "grouping_ok": rep.grouping_ok(),
                "flags_as_expected": ok,
                "report": rep,
            }));
        }
        emit(a.json.as_deref(), &json!({"planted": rows}))?;
        if !mismatched.is_empty() {
            bail!(Violation(format!("planted cases flagged wrongly: {}", mismatched.join(", "))));
        }
        return Ok(());
    }
    if let Some(path) = a.config {
        let mut cfg = ExperimentConfig::load(&path)?;
        cfg.instances.clear();
        let rep = run_experiment(&cfg)?;
        emit(a.json.as_deref(), &rep)?;
        if !rep.aggregate.all_passed {
            bail!(Violation(format!("{} check cases failed", rep.aggregate.failed_check_cases)));
        }
        return Ok(());
    }
    let (Some(local), Some(global)) = (&a.local, &a.global) else {
        bail!(GeoError::InvalidParameter("verify needs --planted, --config or --local/--global".into()));
    };
    let input = VerifyInput {
        clients: a.clients.as_deref().map(load).transpose()?,
        local: load(local)?,
        global: load(global)?,
        epsilon: a.epsilon,
        partition: a.constants.params(),
        separator_kind: a.constants.separator_kind.into(),
    };
    let rep = verify(&input)?;
    emit(a.json.as_deref(), &rep)?;
    if !rep.passed {
        bail!(Violation(rep.violations.join("; ")));
    }
    Ok(())
}

/// Twenty seeded planar SOS-FL instances and ten k-means instances at oracle scale.
fn builtin_suite() -> ExperimentConfig {
    let mut instances = Vec::new();
    for seed in 0..20u64 {
        instances.push(InstanceConfig {
            id: Some(format!("sosfl-{seed}")),
            problem: Problem::Sosfl,
            spec: InstanceSpec {
                n: 8,
                d: 2,
                seed,
                ..InstanceSpec::default()
            },
            f_scale: Some([0.1, 0.3, 1.0][seed as usize % 3]),
            greedy: true,
            ..InstanceConfig::default()
        });
    }
    for seed in 0..10u64 {
        instances.push(InstanceConfig {
            id: Some(format!("kmeans-{seed}")),
            problem: Problem::Kmeans,
            spec: InstanceSpec {
                n: 8,
                d: 2,
                seed: 100 + seed,
                ..InstanceSpec::default()
            },
            k: 2,
            epsilon: Some(0.2),
            greedy: true,
            ..InstanceConfig::default()
        });
    }
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        record_timings: false,
        separator_kind: SeparatorKind::BallNet,
        partition: PartitionParams::default(),
        instances,
        check_cases: Vec::new(),
        base_dir: PathBuf::new(),
    }
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => builtin_suite(),
    };
    cfg.record_timings |= a.timings;
    let start = std::time::Instant::now();
    let rep = run_experiment(&cfg)?;
    let agg = &rep.aggregate;
    eprintln!(
        "{} instances, {} check cases in {:.2} s; max ratio {}; failed {} / {}",
        agg.instances,
        agg.check_cases,
        start.elapsed().as_secs_f64(),
        agg.ratio_max.map_or("n/a".to_string(), |r| format!("{r:.4}")),
        agg.failed_instances,
        agg.failed_check_cases
    );
    if let Some(p) = &a.csv {
        std::fs::write(p, rep.to_csv()?).with_context(|| format!("writing {}", p.display()))?;
    }
    emit(a.json.as_deref(), &rep)?;
    if !agg.all_passed {
        bail!(Violation(format!(
            "{} instances and {} check cases failed",
            agg.failed_instances, agg.failed_check_cases
        )));
    }
    Ok(())
}
