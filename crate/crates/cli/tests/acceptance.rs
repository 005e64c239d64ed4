//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use geoclust::candidates::CandidateStrategy;
use geoclust::grouping::{
    group_limit, group_parts, group_parts_with, signed_parts, verify_grouping, verify_grouping_for, InnerSteps,
    SignedPart,
};
use geoclust::instance::{gen_instance, Generator, InstanceSpec};
use geoclust::io::write_points;
use geoclust::kmeans::{center_budget, solve_kmeans_bicriteria, BicriteriaConfig};
use geoclust::oracle::{exact_kmeans, exact_sosfl};
use geoclust::partition::{check_lemmas, check_observation1, run_partition, PartitionOutput, PartitionParams};
use geoclust::separator::{contract_queries, separate, verify_contract, SeparatorParams};
use geoclust::sosfl::{solve_sosfl, LocalSearchConfig, SolveResult};
use geoclust::{centroid, kmeans_cost, sse_about, PointSet};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn line(o: &Outcome) {
    println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
}

fn uniform(n: usize, d: usize, seed: u64) -> PointSet {
    gen_instance(&InstanceSpec { n, d, seed, ..Default::default() }).unwrap()
}

fn separator_contract() -> Outcome {
    let start = Instant::now();
    let params = SeparatorParams::default();
    let rows: Vec<(usize, usize, bool, bool)> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let d = 1 + (i % 3) as usize;
            let generator = if i % 2 == 0 { Generator::UniformBox } else { Generator::GaussianMixture };
            let x = gen_instance(&InstanceSpec { generator, n: 400, d, seed: 1000 + i, ..Default::default() }).unwrap();
            let res = separate(&x, 25, &SeparatorParams { radius_jitter_seed: i, ..params.clone() }).unwrap();
            let queries = contract_queries(&x, 10_000, 7 * i + 1);
            let rep = verify_contract(&x, &res, &queries).unwrap();
            (rep.violations, rep.queries, res.densify_rounds > 0 || res.fallback, res.within_budget(&params, 25))
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let violations: usize = rows.iter().map(|r| r.0).sum();
    let queries: usize = rows.iter().map(|r| r.1).sum();
    let densified = rows.iter().filter(|r| r.2).count();
    let over_budget = rows.iter().filter(|r| !r.3).count();
    Outcome {
        name: "1 separator contract",
        pass: violations == 0 && densified <= 5 && secs < 60.0 && queries == 1_000_000,
        detail: format!(
            "{violations} violations over {queries} queries, {densified}/100 densified, \
             {over_budget}/100 nets over budget, {secs:.1} s"
        ),
    }
}

/// The fifty (L, O) pairs of the partition suite.
fn partition_suite() -> Vec<(PointSet, PointSet, PointSet, f64)> {
    (0..50u64)
        .map(|i| {
            let eps = if i % 2 == 0 { 0.25 } else { 0.5 };
            (uniform(200, 2, 2 * i), uniform(200, 2, 2 * i + 1), uniform(400, 2, 10_000 + i), eps)
        })
        .collect()
}

fn partitions(suite: &[(PointSet, PointSet, PointSet, f64)], params: &PartitionParams) -> Vec<PartitionOutput> {
    suite
        .par_iter()
        .map(|(l, o, _, eps)| run_partition(l, o, *eps, params).unwrap())
        .collect()
}

fn observation1(outs: &[PartitionOutput]) -> Outcome {
    let reports: Vec<_> = outs.iter().map(check_observation1).collect();
    let items = reports.iter().filter(|r| r.all_items_hold()).count();
    let covers = reports.iter().filter(|r| r.local_cover_exact && r.global_cover_exact).count();
    let max_parts = outs.iter().map(|o| o.parts.len()).max().unwrap_or(0);
    Outcome {
        name: "2 partition size bounds (default gamma)",
        pass: items == outs.len() && covers == outs.len(),
        detail: format!("items 1-4 hold on {items}/50, exact covers {covers}/50, max parts {max_parts}"),
    }
}

fn observation1_small_mu(outs: &[PartitionOutput]) -> String {
    let reports: Vec<_> = outs.iter().map(check_observation1).collect();
    let count = |f: &dyn Fn(&geoclust::partition::Observation1Report) -> bool| reports.iter().filter(|r| f(r)).count();
    format!(
        "gamma=4: items hold 1:{} 2:{} 3:{} 4:{} of 50; double count {}/50; covers {}/50; parts {}..{}",
        count(&|r| r.part_size.pass),
        count(&|r| r.part_count.pass),
        count(&|r| r.net_size.pass),
        count(&|r| r.net_union_sum.pass),
        count(&|r| r.double_count.pass),
        count(&|r| r.local_cover_exact && r.global_cover_exact),
        outs.iter().map(|o| o.parts.len()).min().unwrap_or(0),
        outs.iter().map(|o| o.parts.len()).max().unwrap_or(0),
    )
}

fn certificates(suite: &[(PointSet, PointSet, PointSet, f64)], outs: &[PartitionOutput]) -> (usize, usize, usize) {
    let reports: Vec<_> = suite
        .par_iter()
        .zip(outs.par_iter())
        .map(|((_, _, clients, _), out)| check_lemmas(clients, out).unwrap())
        .collect();
    let applicable = reports.iter().map(|r| r.lemma2_applicable + r.assignments).sum();
    let violations = reports.iter().map(|r| r.lemma2_violations + r.assignment_violations).sum();
    let parts = outs.iter().map(|o| o.parts.len()).sum();
    (applicable, violations, parts)
}

/// A vector of `count` values in `[-l/2, l/2]` whose sum is at least `count + l/2`.
fn surplus_vector(rng: &mut ChaCha8Rng, l: usize) -> Vec<i64> {
    let half = (l / 2) as i64;
    let count = rng.random_range(l + 1..=60);
    let mut u: Vec<i64> = (0..count).map(|_| rng.random_range(-half..=half)).collect();
    let need = count as i64 + half;
    while u.iter().sum::<i64>() < need {
        let i = rng.random_range(0..count);
        if u[i] < half {
            u[i] += 1;
        }
    }
    u
}

fn grouping(outs: &[PartitionOutput]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = 0;
    let mut outer_steps = 0;
    let mut early_exits = 0;
    let mut literal_overruns = 0;
    for _ in 0..1000 {
        let l = [4, 6, 8, 10][rng.random_range(0..4)];
        let u = surplus_vector(&mut rng, l);
        let parts: Vec<SignedPart> = u.iter().enumerate().map(|(part_ref, &u)| SignedPart { part_ref, u }).collect();
        match group_parts(&parts, l) {
            Ok(g) => {
                outer_steps += g.trace.outer.len();
                early_exits += g.trace.early_exit as usize;
                if !verify_grouping(&g, &u).passed() {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
        if let Ok(g) = group_parts_with(&parts, l, InnerSteps::Literal) {
            literal_overruns += !verify_grouping(&g, &u).size_ok as usize;
        }
    }
    let mut partition_failures = 0;
    for out in outs {
        let l = group_limit(out.beta, out.epsilon, out.dim());
        match group_parts(&signed_parts(out), l) {
            Ok(g) if verify_grouping_for(&g, out).passed() => {}
            _ => partition_failures += 1,
        }
    }
    Outcome {
        name: "4 grouping",
        pass: failures == 0 && partition_failures == 0,
        detail: format!(
            "{failures}/1000 synthetic failures ({outer_steps} outer iterations traced, {early_exits} early exits), \
             {partition_failures}/50 partition outputs failing; literal inner loop overfills {literal_overruns}/1000"
        ),
    }
}

/// The hundred desk-scale instances shared by the solver criteria.
fn solver_suite() -> Vec<(PointSet, f64)> {
    (0..100u64)
        .map(|i| {
            let generator = if i % 4 < 2 { Generator::UniformBox } else { Generator::GaussianMixture };
            let spec = InstanceSpec {
                generator,
                n: 6 + (i % 3) as usize,
                d: 1 + (i % 2) as usize,
                components: 2 + (i % 2) as usize,
                spread: 0.08,
                seed: 500 + i,
                ..Default::default()
            };
            let c = gen_instance(&spec).unwrap();
            let sse = sse_about(&c, &centroid(&c).unwrap());
            let f = [0.1, 0.3, 1.0][(i / 2 % 3) as usize] * sse / c.len() as f64;
            (c, f)
        })
        .collect()
}

fn sosfl_cfg(greedy: bool) -> LocalSearchConfig {
    LocalSearchConfig {
        swap_cap: 3,
        greedy,
        candidates: CandidateStrategy::Subset { max_subset: 4 },
        ..Default::default()
    }
}

fn kmeans_cfg(k: usize, greedy: bool) -> BicriteriaConfig {
    BicriteriaConfig {
        k,
        epsilon: 0.2,
        swap_cap: 3,
        greedy,
        candidates: CandidateStrategy::Subset { max_subset: 4 },
        ..Default::default()
    }
}

fn sosfl_quality(suite: &[(PointSet, f64)], runs: &mut Vec<SolveResult>) -> Outcome {
    let start = Instant::now();
    let results: Vec<(SolveResult, f64)> = suite
        .par_iter()
        .map(|(c, f)| {
            let r = solve_sosfl(c, *f, &sosfl_cfg(true)).unwrap();
            let opt = exact_sosfl(c, *f).unwrap().opt_cost;
            let ratio = r.cost.total / opt;
            (r, ratio)
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let within_105 = results.iter().filter(|r| r.1 <= 1.05).count();
    let within_125 = results.iter().filter(|r| r.1 <= 1.25).count();
    let below_one = results.iter().filter(|r| r.1 < 1.0 - 1e-9).count();
    let max = results.iter().map(|r| r.1).fold(0.0, f64::max);
    runs.extend(results.into_iter().map(|r| r.0));
    Outcome {
        name: "5 sosfl vs oracle",
        pass: within_105 >= 90 && within_125 == 100 && below_one == 0 && secs < 120.0,
        detail: format!(
            "ratio <= 1.05 on {within_105}/100, <= 1.25 on {within_125}/100, max {max:.4}, {below_one} below 1, {secs:.1} s"
        ),
    }
}

fn kmeans_quality(suite: &[(PointSet, f64)], runs: &mut Vec<SolveResult>) -> Outcome {
    let mut detail = Vec::new();
    let mut pass = true;
    for k in [2, 3] {
        let budget = center_budget(k, 0.2);
        let results: Vec<(SolveResult, bool, bool, bool)> = suite
            .par_iter()
            .map(|(p, _)| {
                let r = solve_kmeans_bicriteria(p, &kmeans_cfg(k, true)).unwrap();
                let cost = kmeans_cost(p, &r.solution).unwrap();
                let at_k = exact_kmeans(p, k).unwrap().opt_cost;
                let at_budget = exact_kmeans(p, budget.min(p.len())).unwrap().opt_cost;
                let card = r.solution.len() == budget;
                (r, card, cost <= at_k * (1.0 + 1e-12), cost >= at_budget * (1.0 - 1e-9) - 1e-15)
            })
            .collect();
        let card = results.iter().filter(|r| r.1).count();
        let beats = results.iter().filter(|r| r.2).count();
        let above = results.iter().filter(|r| r.3).count();
        pass &= card == 100 && beats >= 90 && above == 100;
        detail.push(format!(
            "k={k}: budget {budget} held {card}/100, cost <= OPT_k {beats}/100, cost >= OPT_budget {above}/100"
        ));
        runs.extend(results.into_iter().map(|r| r.0));
    }
    Outcome {
        name: "6 kmeans bicriteria",
        pass,
        detail: detail.join("; "),
    }
}

fn descent(suite: &[(PointSet, f64)], runs: &mut Vec<SolveResult>) -> Outcome {
    // The greedy runs above have factor 1; add runs at the default 1 - 1/n.
    let strict: Vec<SolveResult> = suite
        .par_iter()
        .flat_map_iter(|(c, f)| {
            [
                solve_sosfl(c, *f, &sosfl_cfg(false)).unwrap(),
                solve_kmeans_bicriteria(c, &kmeans_cfg(2, false)).unwrap(),
                solve_kmeans_bicriteria(c, &kmeans_cfg(3, false)).unwrap(),
            ]
        })
        .collect();
    runs.extend(strict);
    let swaps: usize = runs.iter().map(|r| r.trace.len() - 1).sum();
    let desc = runs.iter().filter(|r| r.descent_holds()).count();
    let bounded = runs.iter().filter(|r| r.within_iteration_bound()).count();
    let bounds = runs.iter().filter(|r| r.iteration_bound().is_some()).count();
    let recomputed = runs.iter().all(|r| r.trace.last().is_some_and(|t| t.cost == r.cost.total));
    Outcome {
        name: "7 descent bookkeeping",
        pass: desc == runs.len() && bounded == runs.len() && recomputed,
        detail: format!(
            "{} runs, {swaps} accepted swaps, descent holds on {desc}, iteration bound held on {bounded} \
             ({bounds} with a finite bound)",
            runs.len()
        ),
    }
}

fn strip_timestamp(text: &str) -> String {
    let mut v: serde_json::Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(_) => return text.to_string(),
    };
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timestamp");
    }
    serde_json::to_string(&v).unwrap()
}

fn run_cli(dir: &Path, args: &[&str], threads: &str) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_geoclust"))
        .args(args)
        .current_dir(dir)
        .env("GEOCLUST_THREADS", threads)
        .output()
        .unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_points(d.join("small.csv"), &uniform(8, 2, 1)).unwrap();
    write_points(d.join("x.csv"), &uniform(400, 2, 7)).unwrap();
    write_points(d.join("l.csv"), &uniform(200, 2, 11)).unwrap();
    write_points(d.join("o.csv"), &uniform(200, 2, 12)).unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["gen", "--n", "50", "--d", "3", "--generator", "gaussian-mixture", "--seed", "5"],
        vec!["solve-sosfl", "--input", "small.csv", "--f-scale", "0.3", "--seed", "42"],
        vec!["solve-sosfl", "--input", "small.csv", "--f", "0.05", "--greedy", "--candidates", "sampled:50x3"],
        vec!["solve-kmeans", "--input", "small.csv", "--k", "2", "--epsilon", "0.2", "--seed", "42"],
        vec!["oracle", "--input", "small.csv", "--mode", "sosfl", "--f", "0.05", "--json"],
        vec!["oracle", "--input", "small.csv", "--mode", "kmeans", "--k", "3", "--json"],
        vec!["separator", "--input", "x.csv", "--mu", "25", "--seed", "7", "--queries", "10000"],
        vec!["partition", "--local", "l.csv", "--global", "o.csv", "--epsilon", "0.5", "--gamma", "4", "--check"],
        vec!["verify", "--planted"],
        vec!["bench"],
    ];
    let mut mismatched = Vec::new();
    let mut runs = 0;
    for args in &cases {
        let (c1, a) = run_cli(d, args, "1");
        let (c2, b) = run_cli(d, args, "4");
        let (c3, c) = run_cli(d, args, "4");
        runs += 3;
        let same = strip_timestamp(&a) == strip_timestamp(&b) && a == c && c1 == c2 && c2 == c3;
        // The partition run may legitimately exit 2 on observation overruns.
        if !same || a.is_empty() || !(c1 == 0 || (c1 == 2 && args[0] == "partition")) {
            mismatched.push(format!("{} (exit {c1})", args.join(" ")));
        }
    }
    Outcome {
        name: "8 determinism",
        pass: mismatched.is_empty(),
        detail: if mismatched.is_empty() {
            format!("{runs} CLI runs over {} commands byte-identical (1 and 4 threads)", cases.len())
        } else {
            format!("differing: {}", mismatched.join(" | "))
        },
    }
}

fn main() {
    let start = Instant::now();
    let mut outcomes = vec![separator_contract()];

    let suite = partition_suite();
    let outs = partitions(&suite, &PartitionParams::default());
    outcomes.push(observation1(&outs));
    let (applicable, violations, parts) = certificates(&suite, &outs);
    let small = PartitionParams { gamma: 4.0, ..Default::default() };
    let small_outs = partitions(&suite, &small);
    let (s_applicable, s_violations, s_parts) = certificates(&suite, &small_outs);
    outcomes.push(Outcome {
        name: "3 certificates",
        pass: violations == 0 && s_violations == 0,
        detail: format!(
            "default gamma: {violations} violations, {applicable} applicable checks over {parts} parts; \
             gamma=4: {s_violations} violations, {s_applicable} applicable checks over {s_parts} parts"
        ),
    });
    outcomes.push(grouping(&outs));

    let solver = solver_suite();
    let mut runs = Vec::new();
    outcomes.push(sosfl_quality(&solver, &mut runs));
    outcomes.push(kmeans_quality(&solver, &mut runs));
    outcomes.push(descent(&solver, &mut runs));
    outcomes.push(determinism());

    outcomes.sort_by_key(|o| o.name);
    for o in &outcomes {
        line(o);
    }
    println!("info: {}", observation1_small_mu(&small_outs));
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!(
        "acceptance: {}/{} criteria passed in {:.1} s",
        outcomes.len() - failed,
        outcomes.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
