use h2dispatch::lp::{solve_lp, LinearProgram, LpStatus, Sense};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())?;
        if a[piv][c].abs() < 1e-9 {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Minimum over all basic feasible points of a boxed LP, `None` if infeasible.
fn vertex_oracle(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    // Candidate active hyperplanes: rows, then lower and upper bounds.
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for r in &lp.rows {
        let mut a = vec![0.0; n];
        for &(j, v) in &r.coeffs {
            a[j] += v;
        }
        planes.push((a, r.rhs));
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), lp.lower[j]));
        planes.push((e, lp.upper[j]));
    }
    let mut best: Option<f64> = None;
    for combo in combinations(planes.len(), n) {
        let a: Vec<Vec<f64>> = combo.iter().map(|&i| planes[i].0.clone()).collect();
        let b: Vec<f64> = combo.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = solve_dense(a, b) {
            if lp.max_violation(&x) <= 1e-7 {
                let v = lp.objective_value(&x);
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
    }
    best
}

fn random_boxed_lp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LinearProgram {
    let mut lp = LinearProgram::new();
    for j in 0..n {
        let lo = rng.gen_range(-3.0..1.0_f64).round();
        let hi = lo + rng.gen_range(1.0..4.0_f64).round();
        lp.add_var(&format!("x{j}"), rng.gen_range(-5.0..5.0_f64).round(), lo, hi);
    }
    for _ in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.7) {
                coeffs.push((j, rng.gen_range(-4.0..4.0_f64).round()));
            }
        }
        let sense = match rng.gen_range(0..5) {
            0 => Sense::Eq,
            1 | 2 => Sense::Ge,
            _ => Sense::Le,
        };
        lp.add_row(coeffs, sense, rng.gen_range(-4.0..4.0_f64).round());
    }
    lp
}

fn check_kkt(lp: &LinearProgram) {
    let s = solve_lp(lp).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    let scale = 1.0 + lp.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
    assert!(lp.max_violation(&s.x) <= 1e-8 * scale, "primal residual {}", lp.max_violation(&s.x));
    let gap = (s.objective - s.dual_objective(lp)).abs();
    assert!(gap <= 1e-7 * (1.0 + s.objective.abs()), "duality gap {gap}");
    // Dual sign conventions.
    for (r, y) in lp.rows.iter().zip(&s.duals) {
        match r.sense {
            Sense::Le => assert!(*y <= 1e-9),
            Sense::Ge => assert!(*y >= -1e-9),
            Sense::Eq => {}
        }
    }
    for j in 0..lp.num_vars() {
        let d = s.reduced_costs[j];
        let at_lo = (s.x[j] - lp.lower[j]).abs() < 1e-8;
        let at_hi = (s.x[j] - lp.upper[j]).abs() < 1e-8;
        if d > 1e-7 {
            assert!(at_lo, "positive reduced cost off lower bound");
        }
        if d < -1e-7 {
            assert!(at_hi, "negative reduced cost off upper bound");
        }
    }
}

#[test]
fn matches_vertex_enumeration_on_small_boxed_lps() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut feasible = 0;
    for _ in 0..300 {
        let n = rng.gen_range(1..=5);
        let m = rng.gen_range(1..=5);
        let lp = random_boxed_lp(&mut rng, n, m);
        let s = solve_lp(&lp).unwrap();
        match vertex_oracle(&lp) {
            Some(v) => {
                feasible += 1;
                assert_eq!(s.status, LpStatus::Optimal);
                assert!((s.objective - v).abs() <= 1e-7 * (1.0 + v.abs()), "{} vs {}", s.objective, v);
            }
            None => assert_eq!(s.status, LpStatus::Infeasible),
        }
    }
    assert!(feasible > 50);
}

#[test]
fn kkt_on_random_20_by_30() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let (m, n) = (20, 30);
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        let mut lp = LinearProgram::new();
        for _ in 0..n {
            let hi = if rng.gen_bool(0.5) { 10.0 } else { f64::INFINITY };
            lp.add_var("", rng.gen_range(-1.0..3.0), 0.0, hi);
        }
        for _ in 0..m {
            let coeffs: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.gen_range(-1.0..2.0))).collect();
            let act: f64 = coeffs.iter().map(|&(j, a)| a * x0[j]).sum();
            let (sense, rhs) = match rng.gen_range(0..3) {
                0 => (Sense::Le, act + rng.gen_range(0.0..5.0)),
                1 => (Sense::Ge, act - rng.gen_range(0.0..5.0)),
                _ => (Sense::Eq, act),
            };
            lp.add_row(coeffs, sense, rhs);
        }
        // Keep the problem bounded.
        lp.add_row((0..n).map(|j| (j, 1.0)).collect(), Sense::Le, 1000.0);
        check_kkt(&lp);
    }
}

#[test]
fn rhs_sensitivity_matches_duals() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    for _ in 0..200 {
        let lp = random_boxed_lp(&mut rng, 4, 4);
        let base = solve_lp(&lp).unwrap();
        if base.status != LpStatus::Optimal {
            continue;
        }
        let i = rng.gen_range(0..lp.num_rows());
        let delta = 1e-6;
        let mut up = lp.clone();
        up.rows[i].rhs += delta;
        let mut down = lp.clone();
        down.rows[i].rhs -= delta;
        let (su, sd) = (solve_lp(&up).unwrap(), solve_lp(&down).unwrap());
        if su.status != LpStatus::Optimal || sd.status != LpStatus::Optimal {
            continue;
        }
        // One-sided slopes bracket the dual (the value is piecewise linear).
        let right = (su.objective - base.objective) / delta;
        let left = (base.objective - sd.objective) / delta;
        let y = base.duals[i];
        let lo = left.min(right) - 1e-4;
        let hi = left.max(right) + 1e-4;
        assert!(y >= lo && y <= hi, "dual {y} outside [{left}, {right}]");
        if (right - left).abs() < 1e-6 {
            assert!((y - right).abs() < 1e-4);
            checked += 1;
        }
    }
    assert!(checked > 20);
}

#[test]
fn degenerate_cycling_example_terminates() {
    // Beale's cycling example.
    let mut lp = LinearProgram::new();
    let x: Vec<usize> = [-0.75, 20.0, -0.5, 6.0].iter().map(|&c| lp.add_var("", c, 0.0, f64::INFINITY)).collect();
    lp.add_row(vec![(x[0], 0.25), (x[1], -8.0), (x[2], -1.0), (x[3], 9.0)], Sense::Le, 0.0);
    lp.add_row(vec![(x[0], 0.5), (x[1], -12.0), (x[2], -0.5), (x[3], 3.0)], Sense::Le, 0.0);
    lp.add_row(vec![(x[2], 1.0)], Sense::Le, 1.0);
    let s = solve_lp(&lp).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.objective + 1.25).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn strong_duality_on_random_boxed_lps(seed in any::<u64>(), n in 1usize..6, m in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_boxed_lp(&mut rng, n, m);
        let s = solve_lp(&lp).unwrap();
        if s.status == LpStatus::Optimal {
            prop_assert!((s.objective - s.dual_objective(&lp)).abs() <= 1e-7 * (1.0 + s.objective.abs()));
            prop_assert!(lp.max_violation(&s.x) <= 1e-8 * 10.0);
        } else {
            prop_assert_eq!(s.status, LpStatus::Infeasible);
            prop_assert!(vertex_oracle(&lp).is_none());
        }
    }
}
