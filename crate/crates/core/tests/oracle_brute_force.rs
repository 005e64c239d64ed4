use geoclust::kmeans::{solve_kmeans_bicriteria, BicriteriaConfig};
use geoclust::oracle::{exact_kmeans, exact_sosfl};
use geoclust::sosfl::{solve_sosfl, LocalSearchConfig};
use geoclust::PointSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cheapest labelling of the points with at most `labels` labels, each
/// nonempty label paying `open` plus the squared distances to its mean.
fn brute(points: &[Vec<f64>], labels: usize, open: f64) -> f64 {
    let n = points.len();
    let d = points[0].len();
    let mut best = f64::INFINITY;
    let mut code = vec![0usize; n];
    loop {
        let mut cost = 0.0;
        for l in 0..labels {
            let members: Vec<&Vec<f64>> = (0..n).filter(|&i| code[i] == l).map(|i| &points[i]).collect();
            if members.is_empty() {
                continue;
            }
            let mean: Vec<f64> = (0..d)
                .map(|t| members.iter().map(|p| p[t]).sum::<f64>() / members.len() as f64)
                .collect();
            cost += open;
            cost += members
                .iter()
                .map(|p| p.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .sum::<f64>();
        }
        best = best.min(cost);
        let mut i = 0;
        while i < n {
            code[i] += 1;
            if code[i] < labels {
                break;
            }
            code[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(0.0..10.0)).collect()).collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn exact_kmeans_matches_labelling_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let n = rng.random_range(1..=6);
        let d = rng.random_range(1..=3);
        let k = rng.random_range(1..=n);
        let rows = random_rows(&mut rng, n, d);
        let got = exact_kmeans(&PointSet::from_rows(rows.clone()).unwrap(), k).unwrap();
        let want = brute(&rows, k, 0.0);
        assert!(close(got.opt_cost, want), "n={n} k={k}: {} vs {want}", got.opt_cost);
    }
}

#[test]
fn exact_sosfl_matches_labelling_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..40 {
        let n = rng.random_range(1..=6);
        let d = rng.random_range(1..=3);
        let f = rng.random_range(0.1..40.0);
        let rows = random_rows(&mut rng, n, d);
        let got = exact_sosfl(&PointSet::from_rows(rows.clone()).unwrap(), f).unwrap();
        let want = brute(&rows, n, f);
        assert!(close(got.opt_cost, want), "n={n} f={f}: {} vs {want}", got.opt_cost);
    }
}

#[test]
fn solvers_never_beat_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for seed in 0..15 {
        let rows = random_rows(&mut rng, 7, 2);
        let pts = PointSet::from_rows(rows).unwrap();
        let f = rng.random_range(1.0..20.0);
        let opt = exact_sosfl(&pts, f).unwrap().opt_cost;
        let cfg = LocalSearchConfig { seed, ..Default::default() };
        let r = solve_sosfl(&pts, f, &cfg).unwrap();
        assert!(r.cost.total >= opt - 1e-9 * (1.0 + opt));

        let kcfg = BicriteriaConfig { k: 3, epsilon: 0.0, seed, ..Default::default() };
        let r = solve_kmeans_bicriteria(&pts, &kcfg).unwrap();
        assert_eq!(r.solution.len(), 3);
        let opt = exact_kmeans(&pts, 3).unwrap().opt_cost;
        assert!(r.cost.connection_cost >= opt - 1e-9 * (1.0 + opt));
    }
}

#[test]
fn oracle_rejects_large_inputs() {
    let pts = PointSet::from_scalars(&(0..13).map(f64::from).collect::<Vec<_>>()).unwrap();
    assert!(exact_kmeans(&pts, 2).is_err());
    assert!(exact_sosfl(&pts, 1.0).is_err());
    assert!(exact_sosfl(&PointSet::from_scalars(&[0.0]).unwrap(), 0.0).is_err());
}
