//! Simplex against exhaustive vertex enumeration on small random programs.

use cash_core::lp::{solve_lp, LinearProgram, Sense};
use cash_core::CashError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Every constraint as `g · x <= h` (equalities contribute both sides).
fn halfspaces(lp: &LinearProgram) -> (Vec<(Vec<f64>, f64)>, Vec<usize>) {
    let n = lp.num_vars();
    let mut rows = Vec::new();
    let mut equalities = Vec::new();
    for c in &lp.constraints {
        match c.sense {
            Sense::Le => rows.push((c.coeffs.clone(), c.rhs)),
            Sense::Ge => rows.push((c.coeffs.iter().map(|x| -x).collect(), -c.rhs)),
            Sense::Eq => {
                equalities.push(rows.len());
                rows.push((c.coeffs.clone(), c.rhs));
            }
        }
    }
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = -1.0;
        rows.push((e.clone(), -lp.lower[i]));
        if let Some(u) = lp.upper[i] {
            e[i] = 1.0;
            rows.push((e, u));
        }
    }
    (rows, equalities)
}

/// Best objective over all basic feasible points, or `None` if none exist.
fn brute_force(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    let (rows, equalities) = halfspaces(lp);
    let feasible = |x: &[f64]| {
        rows.iter().enumerate().all(|(i, (g, h))| {
            let v: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum();
            if equalities.contains(&i) {
                (v - h).abs() <= 1e-7
            } else {
                v <= h + 1e-7
            }
        })
    };
    let sign = if lp.maximize { 1.0 } else { -1.0 };
    let mut best: Option<f64> = None;
    let mut pick = vec![0usize; n];
    fn next(pick: &mut [usize], total: usize) -> bool {
        let k = pick.len();
        for i in (0..k).rev() {
            if pick[i] < total - k + i {
                pick[i] += 1;
                for j in i + 1..k {
                    pick[j] = pick[j - 1] + 1;
                }
                return true;
            }
        }
        false
    }
    for (i, p) in pick.iter_mut().enumerate() {
        *p = i;
    }
    loop {
        let a = pick.iter().map(|&i| rows[i].0.clone()).collect();
        let b = pick.iter().map(|&i| rows[i].1).collect();
        if let Some(x) = solve(a, b) {
            if feasible(&x) {
                let v: f64 = lp.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
                if best.is_none_or(|b| sign * v > sign * b) {
                    best = Some(v);
                }
            }
        }
        if !next(&mut pick, rows.len()) {
            break;
        }
    }
    best
}

fn random_lp(rng: &mut ChaCha8Rng) -> LinearProgram {
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(1..=5);
    let objective: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let mut lp = if rng.gen_bool(0.5) {
        LinearProgram::maximize(objective)
    } else {
        LinearProgram::minimize(objective)
    };
    for _ in 0..m {
        let coeffs: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        match rng.gen_range(0..6) {
            0 => lp.add(coeffs, Sense::Ge, rng.gen_range(-4.0..2.0)),
            1 => lp.add(coeffs, Sense::Eq, rng.gen_range(-2.0..2.0)),
            _ => lp.add(coeffs, Sense::Le, rng.gen_range(-1.0..6.0)),
        };
    }
    // boxed so every feasible program has a finite optimum
    for i in 0..n {
        let lo = if rng.gen_bool(0.2) { rng.gen_range(-2.0..0.0) } else { 0.0 };
        lp.set_bounds(i, lo, Some(rng.gen_range(1.0..8.0)));
    }
    lp
}

#[test]
fn simplex_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut solved, mut infeasible) = (0, 0);
    while solved + infeasible < 100 {
        let lp = random_lp(&mut rng);
        let oracle = brute_force(&lp);
        match (solve_lp(&lp), oracle) {
            (Ok(sol), Some(best)) => {
                assert!((sol.objective - best).abs() <= 1e-7, "simplex {} vs oracle {best}", sol.objective);
                assert!(lp.max_residual(&sol.x) <= 1e-7);
                solved += 1;
            }
            (Err(CashError::Infeasible), None) => infeasible += 1,
            (got, want) => panic!("simplex {got:?} but oracle {want:?} for {lp:?}"),
        }
    }
    assert!(solved >= 50, "only {solved} feasible programs");
}
