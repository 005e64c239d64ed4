use geoclust::grouping::{group_parts, signed_parts, verify_grouping, verify_grouping_for, group_limit, SignedPart};
use geoclust::instance::{gen_instance, InstanceSpec};
use geoclust::partition::{check_lemmas, run_partition, PartitionParams};
use geoclust::separator::{contract_queries, separate, verify_contract, SeparatorParams};
use proptest::prelude::*;

fn uniform(n: usize, seed: u64) -> geoclust::PointSet {
    gen_instance(&InstanceSpec { n, d: 2, seed, ..Default::default() }).unwrap()
}

#[test]
fn separator_contract_on_uniform_sets() {
    let params = SeparatorParams::default();
    for seed in 0..5 {
        let x = uniform(400, seed);
        let res = separate(&x, 25, &params).unwrap();
        let (lo, hi) = params.window(25);
        assert!((lo..=hi).contains(&res.inside_count), "inside {}", res.inside_count);
        let report = verify_contract(&x, &res, &contract_queries(&x, 5_000, seed)).unwrap();
        assert!(report.passed(), "seed {seed}: {} violations", report.violations);
    }
}

#[test]
fn separator_refuses_small_sets() {
    assert!(separate(&uniform(100, 1), 25, &SeparatorParams::default()).is_err());
}

#[test]
fn partition_covers_each_facility_once_and_is_deterministic() {
    let params = PartitionParams { gamma: 4.0, ..Default::default() };
    let local = uniform(300, 3);
    let global = uniform(300, 4);
    let a = run_partition(&local, &global, 0.5, &params).unwrap();
    let b = run_partition(&local, &global, 0.5, &params).unwrap();
    assert_eq!(a, b);
    assert!(a.parts.len() > 1);
    let mut seen_local: Vec<usize> = a.parts.iter().flat_map(|p| p.local.clone()).collect();
    let mut seen_global: Vec<usize> = a.parts.iter().flat_map(|p| p.global.clone()).collect();
    seen_local.sort_unstable();
    seen_global.sort_unstable();
    assert_eq!(seen_local, (0..300).collect::<Vec<_>>());
    assert_eq!(seen_global, (0..300).collect::<Vec<_>>());
    assert!(a.local_part().iter().all(|&j| j < a.parts.len()));
}

#[test]
fn certificates_hold_on_a_nontrivial_partition() {
    let params = PartitionParams { gamma: 4.0, ..Default::default() };
    let local = uniform(200, 5);
    let global = uniform(200, 6);
    let clients = uniform(500, 7);
    let out = run_partition(&local, &global, 0.5, &params).unwrap();
    let report = check_lemmas(&clients, &out).unwrap();
    assert!(report.passed(), "{:?}", report.details);
    assert!(report.assignments > 0 && report.assignments <= clients.len());
}

#[test]
fn grouping_of_a_real_partition_is_consistent() {
    let params = PartitionParams { gamma: 4.0, beta: 2.0, ..Default::default() };
    let local = uniform(200, 8);
    let global = uniform(150, 9);
    let out = run_partition(&local, &global, 0.5, &params).unwrap();
    let l = group_limit(out.beta, out.epsilon, out.dim());
    if let Ok(g) = group_parts(&signed_parts(&out), l) {
        let report = verify_grouping_for(&g, &out);
        assert!(report.disjoint_cover);
        assert!(report.size_ok);
    }
}

fn surplus_vector() -> impl Strategy<Value = (Vec<i64>, usize)> {
    (prop::sample::select(vec![4usize, 6, 8, 10, 12]), 1usize..60).prop_flat_map(|(l, n)| {
        let half = (l / 2) as i64;
        (prop::collection::vec(-half..=half, n), Just(l))
    })
}

proptest! {
    #[test]
    fn grouping_keeps_every_group_nonnegative((mut u, l) in surplus_vector()) {
        let half = (l / 2) as i64;
        while u.iter().sum::<i64>() < u.len() as i64 + half {
            u.push(half);
        }
        let parts: Vec<SignedPart> = u.iter().enumerate().map(|(part_ref, &u)| SignedPart { part_ref, u }).collect();
        let g = group_parts(&parts, l).unwrap();
        let report = verify_grouping(&g, &u);
        prop_assert!(report.passed(), "{:?}", report.violations);
    }
}
