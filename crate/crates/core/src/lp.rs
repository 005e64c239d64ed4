//! Seidel's incremental linear program for small dimension.
//!
//! Constraints are rows `a · u <= b` stored flat as `[a_0, .., a_{k-1}, b]`.
//! Variables are boxed to `[-bound, bound]` so every subproblem has a vertex
//! optimum.

/// Minimize `obj · u` over the rows; `None` if infeasible.
pub(crate) fn minimize(rows: &[f64], obj: &[f64], bound: f64) -> Option<Vec<f64>> {
    let k = obj.len();
    debug_assert!(k >= 1);
    debug_assert_eq!(rows.len() % (k + 1), 0);
    if k == 1 {
        return minimize_1d(rows, obj[0], bound).map(|u| vec![u]);
    }
    let stride = k + 1;
    let mut u: Vec<f64> = obj
        .iter()
        .map(|&c| if c > 0.0 { -bound } else { bound })
        .collect();
    let n = rows.len() / stride;
    for i in 0..n {
        let row = &rows[i * stride..(i + 1) * stride];
        let (a, b) = row.split_at(k);
        let b = b[0];
        let lhs: f64 = a.iter().zip(&u).map(|(x, y)| x * y).sum();
        if lhs <= b + slack(b, lhs) {
            continue;
        }
        // The optimum over the first i+1 rows lies on a · u = b.
        let (j, aj) = a
            .iter()
            .copied()
            .enumerate()
            .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
            .expect("k >= 1");
        if aj.abs() < 1e-300 {
            return None;
        }
        let reduced_len = (i + 2) * k;
        let mut reduced = Vec::with_capacity(reduced_len);
        let push_projected = |reduced: &mut Vec<f64>, r: &[f64], rb: f64| {
            let rj = r[j] / aj;
            for l in 0..k {
                if l != j {
                    reduced.push(r[l] - rj * a[l]);
                }
            }
            reduced.push(rb - rj * b);
        };
        for p in 0..i {
            let r = &rows[p * stride..(p + 1) * stride];
            push_projected(&mut reduced, &r[..k], r[k]);
        }
        // Box on the eliminated coordinate.
        let mut e = vec![0.0; k];
        e[j] = 1.0;
        push_projected(&mut reduced, &e, bound);
        e[j] = -1.0;
        push_projected(&mut reduced, &e, bound);

        let oj = obj[j] / aj;
        let reduced_obj: Vec<f64> = (0..k).filter(|&l| l != j).map(|l| obj[l] - oj * a[l]).collect();
        let sub = minimize(&reduced, &reduced_obj, bound)?;
        let mut next = Vec::with_capacity(k);
        let mut it = sub.into_iter();
        for l in 0..k {
            if l == j {
                next.push(0.0);
            } else {
                next.push(it.next().expect("k-1 values"));
            }
        }
        let rest: f64 = (0..k).filter(|&l| l != j).map(|l| a[l] * next[l]).sum();
        next[j] = (b - rest) / aj;
        u = next;
    }
    Some(u)
}

fn minimize_1d(rows: &[f64], obj: f64, bound: f64) -> Option<f64> {
    let mut lo = -bound;
    let mut hi = bound;
    for row in rows.chunks_exact(2) {
        let (a, b) = (row[0], row[1]);
        if a.abs() < 1e-300 {
            if b < -slack(b, 0.0) {
                return None;
            }
        } else if a > 0.0 {
            hi = hi.min(b / a);
        } else {
            lo = lo.max(b / a);
        }
    }
    if lo > hi + 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
        return None;
    }
    Some(if obj > 0.0 { lo } else { hi.max(lo) })
}

#[inline]
fn slack(b: f64, lhs: f64) -> f64 {
    1e-12 * (1.0 + b.abs().max(lhs.abs()))
}
