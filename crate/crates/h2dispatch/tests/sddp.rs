mod common;

use common::tiny;
use h2dispatch::dual::init_multiplier;
use h2dispatch::lp::{solve_lp, LpStatus};
use h2dispatch::oracle::{exact_electricity_surrogate, random_lambdas};
use h2dispatch::scenario::{stream_rng, DiscreteDistribution};
use h2dispatch::sddp::*;
use proptest::prelude::*;
use rand::Rng;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn converges_to_extensive_form_value() {
    for name in ["deterministic", "two_outcome"] {
        let (_, inst) = tiny(name);
        let data = ElectricityData::new(&inst.plant, &inst.noise).unwrap();
        let mut lambdas = vec![init_multiplier(&inst.plant).lambda];
        lambdas.extend(random_lambdas(&inst.plant, 10, 21));
        for (i, lam) in lambdas.iter().enumerate() {
            let exact = exact_electricity_surrogate(&data, lam).unwrap();
            let r = sddp_solve_data(lam, &data, 50, 100 + i as u64).unwrap();
            assert!(r.lower_bound <= exact + 1e-7 * exact.abs().max(1.0), "{name} #{i}: bound above exact");
            assert!(rel_err(r.lower_bound, exact) <= 1e-6, "{name} #{i}: {} vs {exact}", r.lower_bound);
        }
    }
}

#[test]
fn bounds_are_monotone_and_valid_from_the_start() {
    for name in common::TINY {
        let (_, inst) = tiny(name);
        let data = ElectricityData::new(&inst.plant, &inst.noise).unwrap();
        let lam = init_multiplier(&inst.plant).lambda;
        let exact = exact_electricity_surrogate(&data, &lam).unwrap();
        let r = sddp_solve_data(&lam, &data, 30, 5).unwrap();
        assert_eq!(r.bounds.len(), 31);
        assert!(r.bounds[0] <= exact + 1e-9, "{name}: zero-iteration bound");
        for w in r.bounds.windows(2) {
            assert!(w[1] >= w[0] - 1e-7, "{name}: bound decreased {} -> {}", w[0], w[1]);
        }
        let zero = sddp_solve_data(&lam, &data, 0, 5).unwrap();
        assert_eq!(zero.lower_bound, r.bounds[0]);
    }
}

/// Random states reachable at hour `h`: PPA stock in [0, cap] and Q within
/// the bounds accumulated over `h` hours.
fn random_state(rng: &mut impl Rng, h: usize, data: &ElectricityData) -> (f64, f64) {
    let p = rng.gen_range(0.0..=data.ppa_cap);
    let lo = -(h as f64) * data.p * data.e_bar;
    let hi = h as f64 * (1.0 - data.p) * data.e_bar;
    (p, if hi > lo { rng.gen_range(lo..=hi) } else { 0.0 })
}

#[test]
fn cuts_underestimate_stage_values() {
    for name in common::TINY {
        let (_, inst) = tiny(name);
        let data = ElectricityData::new(&inst.plant, &inst.noise).unwrap();
        for (i, lam) in random_lambdas(&inst.plant, 3, 77).iter().enumerate() {
            let r = sddp_solve_data(lam, &data, 20, i as u64).unwrap();
            let mut rng = stream_rng(1234, i as u64);
            for h in 1..data.horizon {
                for _ in 0..200 {
                    let (p, q) = random_state(&mut rng, h, &data);
                    let v = solve_stage(h, lam, p, q, &r.cuts, &data).unwrap().value;
                    let c = r.cuts.eval(h, p, q);
                    assert!(c <= v + 1e-6, "{name} stage {h} at ({p}, {q}): cut {c} > value {v}");
                }
            }
        }
    }
}

#[test]
fn lazy_rows_match_full_stage_lp() {
    let (_, inst) = tiny("three_outcome");
    let data = ElectricityData::new(&inst.plant, &inst.noise).unwrap();
    let lam = init_multiplier(&inst.plant).lambda;
    let r = sddp_solve_data(&lam, &data, 15, 3).unwrap();
    let mut rng = stream_rng(8, 0);
    for h in 0..data.horizon {
        for _ in 0..50 {
            let (p, q) = random_state(&mut rng, h, &data);
            let lazy = solve_stage(h, &lam, p, q, &r.cuts, &data).unwrap();
            let lp = build_stage_problem(h, &lam, p, q, &r.cuts, &data);
            let full = solve_lp(&lp).unwrap();
            assert_eq!(full.status, LpStatus::Optimal);
            assert!(rel_err(lazy.value, full.objective) <= 1e-9, "stage {h}: {} vs {}", lazy.value, full.objective);
            assert!((full.objective - full.dual_objective(&lp)).abs() <= 1e-7 * (1.0 + full.objective.abs()));
        }
    }
}

#[test]
fn terminal_stage_is_the_surrogate() {
    let (_, inst) = tiny("two_outcome");
    let data = ElectricityData::new(&inst.plant, &inst.noise).unwrap();
    let lam = init_multiplier(&inst.plant).lambda;
    let r = sddp_solve_data(&lam, &data, 10, 1).unwrap();
    let t = data.horizon;
    assert_eq!(r.cuts.cuts(t).len(), 2);
    for k in -50..=50 {
        let q = 7.3 * k as f64;
        assert_eq!(r.cuts.eval(t, 12.0, q), data.surrogate(q));
    }
}

fn flat_cuts(data: &ElectricityData, level: f64) -> CutSet {
    let t = data.horizon;
    let mut cuts: Vec<Cut> = (1..t).map(|h| Cut { stage: h, intercept: level, slope_p: 0.0, slope_q: 0.0 }).collect();
    cuts.push(Cut { stage: t, intercept: -data.c_subsidy, slope_p: 0.0, slope_q: data.beta1 });
    cuts.push(Cut { stage: t, intercept: -data.c_subsidy, slope_p: 0.0, slope_q: data.beta2 });
    CutSet::from_cuts(t, cuts).unwrap()
}

#[test]
fn free_prices_buy_nothing() {
    let (_, inst) = tiny("two_outcome");
    let data = ElectricityData::new(&inst.plant, &inst.noise).unwrap();
    let cuts = flat_cuts(&data, -3.0);
    let sol = solve_stage(0, &vec![0.0; data.horizon], data.ppa_cap, 0.0, &cuts, &data).unwrap();
    assert_eq!(sol.e_ppa, 0.0);
    for o in &sol.outcomes {
        assert!(o.e_n.abs() < 1e-12 && o.e_grid <= 1e-12);
    }
    assert!((sol.value + 3.0).abs() < 1e-9);
}

#[test]
fn high_price_fills_the_mix_cap_linearly() {
    let (_, inst) = tiny("deterministic");
    let data = ElectricityData::new(&inst.plant, &inst.noise).unwrap();
    let cuts = flat_cuts(&data, 0.0);
    let pv = data.pv[0].values[0];
    for p_in in [300.0, 50.0] {
        let value = |l: f64| {
            let mut lam = vec![0.0; data.horizon];
            lam[0] = l;
            solve_stage(0, &lam, p_in, 0.0, &cuts, &data).unwrap()
        };
        let (a, b, c) = (value(10.0), value(20.0), value(30.0));
        // Affine in the price with slope minus the mix cap.
        assert!(((b.value - a.value) - (c.value - b.value)).abs() < 1e-9);
        assert!(((b.value - a.value) / 10.0 + data.e_bar).abs() < 1e-9);
        let want_ppa = p_in.min(data.e_bar - pv);
        assert!((b.e_ppa - want_ppa).abs() < 1e-9, "p_in {p_in}: e_ppa {}", b.e_ppa);
        assert!((b.e_ppa + b.outcomes[0].e_grid + pv - data.e_bar).abs() < 1e-9);
    }
}

fn path_index(k: usize, data: &ElectricityData) -> (Vec<usize>, f64) {
    let mut rest = k;
    let mut idx = Vec::with_capacity(data.horizon);
    let mut pr = 1.0;
    for d in &data.pv {
        idx.push(rest % d.len());
        pr *= d.probs[rest % d.len()];
        rest /= d.len();
    }
    (idx, pr)
}

#[test]
fn allocation_monte_carlo_matches_exhaustive_weighting() {
    let (_, inst) = tiny("two_outcome");
    let data = ElectricityData::new(&inst.plant, &inst.noise).unwrap();
    let lam = init_multiplier(&inst.plant).lambda;
    let r = sddp_solve_data(&lam, &data, 30, 2).unwrap();
    let leaves: usize = data.pv.iter().map(DiscreteDistribution::len).product();
    let mut mean = vec![0.0; data.horizon];
    let mut second = vec![0.0; data.horizon];
    let mut priced = 0.0;
    for k in 0..leaves {
        let (idx, pr) = path_index(k, &data);
        let path = allocation_path(&r.cuts, &lam, &data, &idx).unwrap();
        for h in 0..data.horizon {
            mean[h] += pr * path.supply[h];
            second[h] += pr * path.supply[h] * path.supply[h];
        }
        priced += pr * path.priced_cost;
    }
    // The cut-greedy policy is optimal for the converged model.
    assert!(rel_err(priced, r.lower_bound) <= 1e-6, "{priced} vs {}", r.lower_bound);
    let n = 4000;
    let mc = simulate_allocation_data(&r.cuts, &lam, &data, n, 9).unwrap();
    for h in 0..data.horizon {
        let sd = (second[h] - mean[h] * mean[h]).max(0.0).sqrt();
        let tol = 4.0 * sd / (n as f64).sqrt() + 1e-9;
        assert!((mc.mean_supply[h] - mean[h]).abs() <= tol, "hour {h}: {} vs {}", mc.mean_supply[h], mean[h]);
    }
    let again = simulate_allocation_data(&r.cuts, &lam, &data, n, 9).unwrap();
    assert_eq!(mc, again);
}

#[test]
fn deterministic_allocation_replays_stage_chain() {
    let (_, inst) = tiny("deterministic");
    let data = ElectricityData::new(&inst.plant, &inst.noise).unwrap();
    let lam = init_multiplier(&inst.plant).lambda;
    let r = sddp_solve_data(&lam, &data, 10, 0).unwrap();
    let stats = simulate_allocation_data(&r.cuts, &lam, &data, 7, 4).unwrap();
    let (mut p, mut q) = (data.ppa_cap, 0.0);
    for h in 0..data.horizon {
        let s = solve_stage(h, &lam, p, q, &r.cuts, &data).unwrap();
        let o = s.outcomes[0];
        let want = s.e_ppa + o.e_grid + data.pv[h].values[0];
        // Averaging identical paths only adds rounding.
        assert!((stats.mean_supply[h] - want).abs() <= 1e-12 * (1.0 + want.abs()));
        p = o.p_next.max(0.0);
        q = o.q_next;
    }
    assert!(stats.std_priced_cost < 1e-9);
}

/// Two-hour deterministic data for the brute-force comparison.
fn two_hour_data() -> ElectricityData {
    ElectricityData {
        horizon: 2,
        e_bar: 10.0,
        p: 0.2,
        c_ppa: 0.05,
        c_grid: vec![0.1, 0.2],
        grid_floor: -14.0,
        ppa_cap: 8.0,
        beta1: 0.0,
        beta2: 0.3,
        c_subsidy: 5.0,
        pv: vec![DiscreteDistribution::point(3.0), DiscreteDistribution::point(6.0)],
    }
}

fn grid(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| a + (b - a) * k as f64 / (n - 1) as f64)
}

#[test]
fn nonlinear_and_convexified_formulations_agree() {
    let data = two_hour_data();
    for lam in [vec![0.15, 0.12], vec![0.02, 0.3], vec![0.4, 0.0]] {
        let lp = exact_electricity_surrogate(&data, &lam).unwrap();
        let n = 61;
        let mut best = f64::INFINITY;
        let (pv0, pv1) = (3.0, 6.0);
        for a0 in grid(0.0, data.ppa_cap.min(data.e_bar - pv0), n) {
            for g0 in grid(data.grid_floor, data.e_bar - a0 - pv0, n) {
                for a1 in grid(0.0, (data.ppa_cap - a0).min(data.e_bar - pv1), n) {
                    for g1 in grid(data.grid_floor, data.e_bar - a1 - pv1, n) {
                        let seq = [
                            AllocStep { e_ppa: a0, e_grid: g0, e_pv: pv0 },
                            AllocStep { e_ppa: a1, e_grid: g1, e_pv: pv1 },
                        ];
                        best = best.min(alloc_cost(&seq, &lam, &data).unwrap());
                    }
                }
            }
        }
        // Each grid step moves the cost by at most (prices + beta) times the step.
        let lip = lam.iter().fold(0.0f64, |m, l| m.max(l.abs())) + 0.2 + data.c_ppa + data.beta2;
        let step = (data.e_bar - data.grid_floor) / (n - 1) as f64;
        assert!(best >= lp - 1e-9, "grid optimum {best} below LP value {lp}");
        assert!(best - lp <= 4.0 * lip * step, "grid optimum {best} too far above LP value {lp}");
    }
}

fn random_alloc(rng: &mut impl Rng, data: &ElectricityData) -> Vec<AllocStep> {
    let mut p = data.ppa_cap;
    data.pv
        .iter()
        .map(|d| {
            let e_pv = d.values[rng.gen_range(0..d.len())];
            let a = rng.gen_range(0.0..=p.min((data.e_bar - e_pv).max(0.0)));
            p -= a;
            let top = data.e_bar - a - e_pv;
            let g = if top > data.grid_floor { rng.gen_range(data.grid_floor..=top) } else { data.grid_floor };
            AllocStep { e_ppa: a, e_grid: g, e_pv }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gamma_lift_is_feasible_with_equal_cost(seed in any::<u64>()) {
        let (_, inst) = tiny("three_outcome");
        let data = ElectricityData::new(&inst.plant, &inst.noise).unwrap();
        let lam = random_lambdas(&inst.plant, 1, seed).remove(0);
        let seq = random_alloc(&mut stream_rng(seed, 1), &data);
        let aug = lift_gamma(&seq, &data).unwrap();
        prop_assert!(check_aug_sequence(&aug, &data).is_ok());
        let (a, b) = (alloc_cost(&seq, &lam, &data).unwrap(), aug_cost(&aug, &lam, &data).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn phi_projection_never_increases_cost(seed in any::<u64>(), slack_n in 0.0f64..1.0, slack_r in 0.0f64..1.0) {
        let (_, inst) = tiny("three_outcome");
        let data = ElectricityData::new(&inst.plant, &inst.noise).unwrap();
        let lam = random_lambdas(&inst.plant, 1, seed).remove(0);
        // Loosen the auxiliaries: e_n above the positive part, e_r below the cap.
        let aug: Vec<AugStep> = lift_gamma(&random_alloc(&mut stream_rng(seed, 2), &data), &data)
            .unwrap()
            .into_iter()
            .map(|s| AugStep { e_n: s.e_n + slack_n * 100.0, e_r: s.e_r * slack_r, ..s })
            .collect();
        prop_assert!(check_aug_sequence(&aug, &data).is_ok());
        let back = lift_gamma(&project_phi(&aug, &data).unwrap(), &data).unwrap();
        prop_assert!(aug_cost(&back, &lam, &data).unwrap() <= aug_cost(&aug, &lam, &data).unwrap() + 1e-9);
    }

    #[test]
    fn infeasible_sequences_are_flagged(seed in any::<u64>()) {
        let (_, inst) = tiny("three_outcome");
        let data = ElectricityData::new(&inst.plant, &inst.noise).unwrap();
        let mut seq = random_alloc(&mut stream_rng(seed, 3), &data);
        seq[0].e_ppa = data.ppa_cap + 1.0;
        prop_assert!(lift_gamma(&seq, &data).is_err());
    }
}
