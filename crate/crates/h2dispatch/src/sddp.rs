//! Electricity allocation subproblem: SDDP over the convexified problem in
//! the state (P, Q), PPA budget left and cumulative electricity score.
//!
//! The positive part of grid electricity and the PV/PPA clamp in the Q
//! dynamics are modelled by auxiliary variables `e_n >= (e_grid)+` and
//! `e_r <= min(E_bar, e_ppa + e_pv)`, which makes every stage an LP.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus, Sense};
use crate::model::{self, PlantSpec};
use crate::scenario::{stream_rng, DiscreteDistribution, NoiseModel};

/// `V_stage(P, Q) >= intercept + slope_p * P + slope_q * Q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub stage: usize,
    pub intercept: f64,
    pub slope_p: f64,
    pub slope_q: f64,
}

impl Cut {
    #[inline]
    pub fn eval(&self, p: f64, q: f64) -> f64 {
        self.intercept + self.slope_p * p + self.slope_q * q
    }
}

/// Plant and noise data the electricity subproblem depends on.
#[derive(Clone, Debug, PartialEq)]
pub struct ElectricityData {
    pub horizon: usize,
    pub e_bar: f64,
    pub p: f64,
    pub c_ppa: f64,
    pub c_grid: Vec<f64>,
    pub grid_floor: f64,
    pub ppa_cap: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub c_subsidy: f64,
    pub pv: Vec<DiscreteDistribution>,
}

impl ElectricityData {
    pub fn new(plant: &PlantSpec, noise: &NoiseModel) -> Result<Self> {
        noise.validate(plant.horizon)?;
        model::check_betas(plant.beta1, plant.beta2, plant)?;
        if plant.c_grid.iter().any(|&c| c < 0.0) || plant.c_ppa < 0.0 {
            return Err(Error::config("costs", "electricity prices must be nonnegative"));
        }
        Ok(ElectricityData {
            horizon: plant.horizon,
            e_bar: model::max_consumption(plant),
            p: plant.p,
            c_ppa: plant.c_ppa,
            c_grid: plant.c_grid.clone(),
            grid_floor: model::grid_floor(plant, noise.pv_max()),
            ppa_cap: plant.ppa_cap,
            beta1: plant.beta1,
            beta2: plant.beta2,
            c_subsidy: plant.c_subsidy,
            pv: noise.stages.iter().map(|s| s.pv.clone()).collect(),
        })
    }

    pub fn surrogate(&self, q: f64) -> f64 {
        model::surrogate_unchecked(q, self.beta1, self.beta2, self.c_subsidy)
    }

    /// Lower bound on the priced stage cost: only the `-lambda * supply`
    /// term can be negative, and supply lies in `[grid_floor, E_bar]`.
    fn stage_floor(&self, lambda: f64) -> f64 {
        -(lambda * self.e_bar).max(lambda * self.grid_floor)
    }
}

/// Polyhedral lower models of the electricity value functions, indexed by
/// the hour at which the state is observed (0..=T). Stage T holds the two
/// affine pieces of the surrogate final cost.
#[derive(Clone, Debug, PartialEq)]
pub struct CutSet {
    stages: Vec<Vec<Cut>>,
}

impl CutSet {
    /// Terminal pieces plus one valid affine floor per intermediate stage.
    pub fn initial(data: &ElectricityData, lambda: &[f64]) -> Self {
        let t = data.horizon;
        let mut stages = vec![Vec::new(); t + 1];
        stages[t] = vec![
            Cut { stage: t, intercept: -data.c_subsidy, slope_p: 0.0, slope_q: data.beta1 },
            Cut { stage: t, intercept: -data.c_subsidy, slope_p: 0.0, slope_q: data.beta2 },
        ];
        let mut tail = 0.0;
        for h in (1..t).rev() {
            tail += data.stage_floor(lambda[h]);
            let remaining = (t - h) as f64;
            stages[h].push(Cut {
                stage: h,
                intercept: tail - data.c_subsidy - data.beta1 * remaining * data.p * data.e_bar,
                slope_p: 0.0,
                slope_q: data.beta1,
            });
        }
        CutSet { stages }
    }

    pub fn from_cuts(horizon: usize, cuts: Vec<Cut>) -> Result<Self> {
        let mut stages = vec![Vec::new(); horizon + 1];
        for c in cuts {
            if c.stage == 0 || c.stage > horizon {
                return Err(Error::Parse { path: "cuts".into(), reason: format!("cut stage {} out of range", c.stage) });
            }
            if !(c.intercept.is_finite() && c.slope_p.is_finite() && c.slope_q.is_finite()) {
                return Err(Error::Parse { path: "cuts".into(), reason: "non-finite cut".into() });
            }
            stages[c.stage].push(c);
        }
        if stages[horizon].len() != 2 {
            return Err(Error::Parse { path: "cuts".into(), reason: "terminal stage needs exactly two pieces".into() });
        }
        Ok(CutSet { stages })
    }

    pub fn horizon(&self) -> usize {
        self.stages.len() - 1
    }

    pub fn cuts(&self, stage: usize) -> &[Cut] {
        &self.stages[stage]
    }

    pub fn push(&mut self, cut: Cut) {
        self.stages[cut.stage].push(cut);
    }

    pub fn len(&self) -> usize {
        self.stages.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Cut> {
        self.stages.iter().flatten()
    }

    /// Max of cuts; `-inf` for stage 0, which carries none.
    pub fn eval(&self, stage: usize, p: f64, q: f64) -> f64 {
        self.stages[stage].iter().map(|c| c.eval(p, q)).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutcomeSolution {
    pub e_grid: f64,
    pub e_n: f64,
    pub e_r: f64,
    pub theta: f64,
    pub p_next: f64,
    pub q_next: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageSolution {
    pub value: f64,
    pub e_ppa: f64,
    pub outcomes: Vec<OutcomeSolution>,
    /// Subgradient of the stage value in the incoming state.
    pub grad_p: f64,
    pub grad_q: f64,
}

const VARS_PER_OUTCOME: usize = 4;

fn var_g(w: usize) -> usize {
    1 + VARS_PER_OUTCOME * w
}
fn var_n(w: usize) -> usize {
    2 + VARS_PER_OUTCOME * w
}
fn var_r(w: usize) -> usize {
    3 + VARS_PER_OUTCOME * w
}
fn var_theta(w: usize) -> usize {
    4 + VARS_PER_OUTCOME * w
}

/// Stage LP with the given cuts of stage `h + 1` attached to each outcome.
fn stage_lp(
    h: usize,
    lambda: f64,
    p_in: f64,
    q_in: f64,
    data: &ElectricityData,
    next: &[Cut],
    active: &[Vec<usize>],
) -> (LinearProgram, Vec<(usize, usize)>) {
    let pv = &data.pv[h];
    let lam = lambda;
    let cg = data.c_grid[h];
    let mut lp = LinearProgram::new();
    lp.add_var("e_ppa", data.c_ppa - lam, 0.0, f64::INFINITY);
    for &pi in &pv.probs {
        lp.add_var("", -pi * lam, data.grid_floor, f64::INFINITY);
        lp.add_var("", pi * cg, 0.0, f64::INFINITY);
        lp.add_var("", 0.0, 0.0, data.e_bar);
        lp.add_var("", pi, f64::NEG_INFINITY, f64::INFINITY);
    }
    lp.objective_offset = -lam * pv.mean();
    lp.add_row(vec![(0, 1.0)], Sense::Le, p_in);
    for (w, &e_pv) in pv.values.iter().enumerate() {
        lp.add_row(vec![(0, 1.0), (var_g(w), 1.0)], Sense::Le, data.e_bar - e_pv);
        lp.add_row(vec![(var_g(w), 1.0), (var_n(w), -1.0)], Sense::Le, 0.0);
        lp.add_row(vec![(var_r(w), 1.0), (0, -1.0)], Sense::Le, e_pv);
    }
    // Start with every cut row satisfied: e, n and r at zero, theta at the
    // largest attached cut.
    let mut start = vec![0.0; lp.num_vars()];
    let mut cut_rows = Vec::new();
    for (w, list) in active.iter().enumerate() {
        start[var_g(w)] = data.grid_floor;
        if let Some(top) = list.iter().map(|&k| next[k].eval(p_in, q_in)).reduce(f64::max) {
            start[var_theta(w)] = top;
        }
        for &k in list {
            let c = &next[k];
            let mut coeffs = vec![(var_theta(w), 1.0)];
            if c.slope_p != 0.0 {
                coeffs.push((0, c.slope_p));
            }
            if c.slope_q != 0.0 {
                coeffs.push((var_n(w), -c.slope_q * (1.0 - data.p)));
                coeffs.push((var_r(w), c.slope_q * data.p));
            }
            lp.add_row(coeffs, Sense::Ge, c.intercept + c.slope_p * p_in + c.slope_q * q_in);
            cut_rows.push((w, k));
        }
    }
    lp.start = start;
    let _ = h;
    (lp, cut_rows)
}

/// The full stage LP at `(p_in, q_in)`, every cut of stage `h + 1` attached
/// to every outcome.
pub fn build_stage_problem(
    h: usize,
    lambda: &[f64],
    p_in: f64,
    q_in: f64,
    cuts: &CutSet,
    data: &ElectricityData,
) -> LinearProgram {
    let next = cuts.cuts(h + 1);
    let all: Vec<usize> = (0..next.len()).collect();
    let active = vec![all; data.pv[h].len()];
    let mut lp = stage_lp(h, lambda[h], p_in, q_in, data, next, &active).0;
    for w in 0..data.pv[h].len() {
        lp.names[var_g(w)] = format!("e_grid_{w}");
        lp.names[var_n(w)] = format!("e_n_{w}");
        lp.names[var_r(w)] = format!("e_r_{w}");
        lp.names[var_theta(w)] = format!("theta_{w}");
    }
    lp
}

fn best_cut(next: &[Cut], p: f64, q: f64) -> (usize, f64) {
    let mut arg = 0;
    let mut best = f64::NEG_INFINITY;
    for (k, c) in next.iter().enumerate() {
        let v = c.eval(p, q);
        if v > best {
            best = v;
            arg = k;
        }
    }
    (arg, best)
}

/// Solves the stage LP, attaching cut rows lazily: starts from the floor
/// and the cut active at the incoming state, then adds the most violated
/// cut per outcome until none is violated.
pub fn solve_stage(
    h: usize,
    lambda: &[f64],
    p_in: f64,
    q_in: f64,
    cuts: &CutSet,
    data: &ElectricityData,
) -> Result<StageSolution> {
    let next = cuts.cuts(h + 1);
    let n_out = data.pv[h].len();
    let (k0, _) = best_cut(next, p_in, q_in);
    let mut active: Vec<Vec<usize>> = (0..n_out)
        .map(|_| {
            let mut v = vec![0];
            if k0 != 0 {
                v.push(k0);
            }
            v
        })
        .collect();
    if next.len() <= 4 {
        active.iter_mut().for_each(|v| *v = (0..next.len()).collect());
    }
    for _round in 0..=next.len() {
        let (lp, cut_rows) = stage_lp(h, lambda[h], p_in, q_in, data, next, &active);
        let sol = solve_lp(&lp).map_err(|e| Error::lp(format!("stage {h}"), e))?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::lp(
                format!("stage {h}"),
                crate::lp::LpError::Numerical(format!("stage LP reported {:?}", sol.status)),
            ));
        }
        let e = sol.x[0];
        let mut outcomes = Vec::with_capacity(n_out);
        let mut added = false;
        for w in 0..n_out {
            let (g, n, r, th) = (sol.x[var_g(w)], sol.x[var_n(w)], sol.x[var_r(w)], sol.x[var_theta(w)]);
            let p_next = p_in - e;
            let q_next = q_in + (1.0 - data.p) * n - data.p * r;
            let (k, v) = best_cut(next, p_next, q_next);
            if v > th + 1e-9 * (1.0 + th.abs()) && !active[w].contains(&k) {
                active[w].push(k);
                added = true;
            }
            outcomes.push(OutcomeSolution { e_grid: g, e_n: n, e_r: r, theta: th, p_next, q_next });
        }
        if added {
            continue;
        }
        let mut grad_p = sol.duals[0];
        let mut grad_q = 0.0;
        let first_cut_row = 1 + 3 * n_out;
        for (row, &(_, k)) in cut_rows.iter().enumerate() {
            let y = sol.duals[first_cut_row + row];
            grad_p += y * next[k].slope_p;
            grad_q += y * next[k].slope_q;
        }
        return Ok(StageSolution { value: sol.objective, e_ppa: e, outcomes, grad_p, grad_q });
    }
    Err(Error::Solver(format!("stage {h}: lazy cut loop did not settle")))
}

#[derive(Clone, Debug)]
pub struct SddpResult {
    pub cuts: CutSet,
    pub lower_bound: f64,
    /// Lower bound before the first iteration and after each one.
    pub bounds: Vec<f64>,
}

/// Runs `iters` SDDP iterations, one sampled forward path each, keeping all cuts.
pub fn sddp_solve(
    lambda: &[f64],
    plant: &PlantSpec,
    noise: &NoiseModel,
    iters: usize,
    seed: u64,
) -> Result<SddpResult> {
    let data = ElectricityData::new(plant, noise)?;
    sddp_solve_data(lambda, &data, iters, seed)
}

pub fn sddp_solve_data(lambda: &[f64], data: &ElectricityData, iters: usize, seed: u64) -> Result<SddpResult> {
    let t = data.horizon;
    if lambda.len() != t {
        return Err(Error::config("lambda", format!("expected {t} prices, got {}", lambda.len())));
    }
    let mut cuts = CutSet::initial(data, lambda);
    let root = |cuts: &CutSet| solve_stage(0, lambda, data.ppa_cap, 0.0, cuts, data).map(|s| s.value);
    let mut bounds = vec![root(&cuts)?];
    for it in 0..iters {
        let ctx = |e: Error| Error::Solver(format!("SDDP iteration {it}: {e}"));
        let mut rng = stream_rng(seed, it as u64);
        let mut visited = Vec::with_capacity(t);
        let (mut p, mut q) = (data.ppa_cap, 0.0);
        visited.push((p, q));
        for h in 0..t.saturating_sub(1) {
            let sol = solve_stage(h, lambda, p, q, &cuts, data).map_err(ctx)?;
            let w = data.pv[h].sample_index(&mut rng);
            p = sol.outcomes[w].p_next.max(0.0);
            q = sol.outcomes[w].q_next;
            visited.push((p, q));
        }
        for h in (1..t).rev() {
            let (ph, qh) = visited[h];
            let sol = solve_stage(h, lambda, ph, qh, &cuts, data).map_err(ctx)?;
            cuts.push(Cut {
                stage: h,
                intercept: sol.value - sol.grad_p * ph - sol.grad_q * qh,
                slope_p: sol.grad_p,
                slope_q: sol.grad_q,
            });
        }
        bounds.push(root(&cuts).map_err(ctx)?);
    }
    let lower_bound = *bounds.last().unwrap();
    Ok(SddpResult { cuts, lower_bound, bounds })
}

/// Outcome of rolling the cut-greedy allocation along one PV path.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocationPath {
    /// `e_ppa + e_grid + e_pv` per hour.
    pub supply: Vec<f64>,
    /// Physical cost: PPA and grid purchases plus the surrogate final cost.
    pub cost: f64,
    /// Cost including the `-lambda * supply` revenue.
    pub priced_cost: f64,
    pub q_final: f64,
}

pub fn allocation_path(cuts: &CutSet, lambda: &[f64], data: &ElectricityData, pv_index: &[usize]) -> Result<AllocationPath> {
    let t = data.horizon;
    let (mut p, mut q) = (data.ppa_cap, 0.0);
    let mut supply = Vec::with_capacity(t);
    let mut cost = 0.0;
    let mut priced = 0.0;
    for h in 0..t {
        let sol = solve_stage(h, lambda, p, q, cuts, data)?;
        let w = pv_index[h];
        let o = sol.outcomes[w];
        let e_pv = data.pv[h].values[w];
        let s = sol.e_ppa + o.e_grid + e_pv;
        let c = data.c_ppa * sol.e_ppa + data.c_grid[h] * o.e_n;
        cost += c;
        priced += c - lambda[h] * s;
        supply.push(s);
        p = o.p_next.max(0.0);
        q = o.q_next;
    }
    let fin = data.surrogate(q);
    Ok(AllocationPath { supply, cost: cost + fin, priced_cost: priced + fin, q_final: q })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationStats {
    pub mean_supply: Vec<f64>,
    pub mean_cost: f64,
    pub mean_priced_cost: f64,
    pub std_priced_cost: f64,
}

/// Monte Carlo of the cut-greedy allocation policy over sampled PV paths.
pub fn simulate_allocation(
    cuts: &CutSet,
    lambda: &[f64],
    plant: &PlantSpec,
    noise: &NoiseModel,
    n_paths: usize,
    seed: u64,
) -> Result<AllocationStats> {
    let data = ElectricityData::new(plant, noise)?;
    simulate_allocation_data(cuts, lambda, &data, n_paths, seed)
}

pub fn simulate_allocation_data(
    cuts: &CutSet,
    lambda: &[f64],
    data: &ElectricityData,
    n_paths: usize,
    seed: u64,
) -> Result<AllocationStats> {
    if n_paths == 0 {
        return Err(Error::config("solver.gradient_paths", "need at least one path"));
    }
    let paths: Vec<AllocationPath> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let idx: Vec<usize> = data.pv.iter().map(|d| d.sample_index(&mut rng)).collect();
            allocation_path(cuts, lambda, data, &idx)
        })
        .collect::<Result<_>>()?;
    let t = data.horizon;
    let nf = n_paths as f64;
    let mut mean_supply = vec![0.0; t];
    let (mut c, mut pc, mut pc2) = (0.0, 0.0, 0.0);
    for path in &paths {
        for (m, s) in mean_supply.iter_mut().zip(&path.supply) {
            *m += s / nf;
        }
        c += path.cost / nf;
        pc += path.priced_cost / nf;
        pc2 += path.priced_cost * path.priced_cost / nf;
    }
    Ok(AllocationStats {
        mean_supply,
        mean_cost: c,
        mean_priced_cost: pc,
        std_priced_cost: (pc2 - pc * pc).max(0.0).sqrt(),
    })
}

/// One hour of an allocation along a fixed PV path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AllocStep {
    pub e_ppa: f64,
    pub e_grid: f64,
    pub e_pv: f64,
}

/// Allocation hour with the auxiliary variables of the convexified problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugStep {
    pub e_ppa: f64,
    pub e_grid: f64,
    pub e_pv: f64,
    pub e_n: f64,
    pub e_r: f64,
}

const SEQ_TOL: f64 = 1e-9;

fn check_common(h: usize, e_ppa: f64, e_grid: f64, e_pv: f64, p: f64, data: &ElectricityData) -> Result<()> {
    if e_ppa < -SEQ_TOL || e_ppa > p + SEQ_TOL {
        return Err(Error::InfeasibleControl(format!("hour {h}: PPA draw {e_ppa} outside [0, {p}]")));
    }
    if e_grid < data.grid_floor - SEQ_TOL {
        return Err(Error::InfeasibleControl(format!("hour {h}: grid {e_grid} below floor")));
    }
    if e_ppa + e_grid + e_pv > data.e_bar + SEQ_TOL {
        return Err(Error::InfeasibleControl(format!("hour {h}: supply exceeds maximal consumption")));
    }
    Ok(())
}

/// Checks an allocation under the exact dynamics; returns `(P_T, Q_T)`.
pub fn check_alloc_sequence(seq: &[AllocStep], data: &ElectricityData) -> Result<(f64, f64)> {
    let (mut p, mut q) = (data.ppa_cap, 0.0);
    for (h, s) in seq.iter().enumerate() {
        check_common(h, s.e_ppa, s.e_grid, s.e_pv, p, data)?;
        p -= s.e_ppa;
        q += (1.0 - data.p) * s.e_grid.max(0.0) - data.p * data.e_bar.min(s.e_ppa + s.e_pv);
    }
    Ok((p, q))
}

/// Checks an augmented allocation under the linear dynamics; returns `(P_T, Q_T)`.
pub fn check_aug_sequence(seq: &[AugStep], data: &ElectricityData) -> Result<(f64, f64)> {
    let (mut p, mut q) = (data.ppa_cap, 0.0);
    for (h, s) in seq.iter().enumerate() {
        check_common(h, s.e_ppa, s.e_grid, s.e_pv, p, data)?;
        if s.e_n < -SEQ_TOL || s.e_n < s.e_grid - SEQ_TOL {
            return Err(Error::InfeasibleControl(format!("hour {h}: e_n below the positive part of grid")));
        }
        if s.e_r > data.e_bar + SEQ_TOL || s.e_r > s.e_ppa + s.e_pv + SEQ_TOL {
            return Err(Error::InfeasibleControl(format!("hour {h}: e_r above renewable supply")));
        }
        p -= s.e_ppa;
        q += (1.0 - data.p) * s.e_n - data.p * s.e_r;
    }
    Ok((p, q))
}

pub fn alloc_cost(seq: &[AllocStep], lambda: &[f64], data: &ElectricityData) -> Result<f64> {
    let (_, q) = check_alloc_sequence(seq, data)?;
    let run: f64 = seq
        .iter()
        .enumerate()
        .map(|(h, s)| {
            data.c_ppa * s.e_ppa + data.c_grid[h] * s.e_grid.max(0.0) - lambda[h] * (s.e_ppa + s.e_grid + s.e_pv)
        })
        .sum();
    Ok(run + data.surrogate(q))
}

pub fn aug_cost(seq: &[AugStep], lambda: &[f64], data: &ElectricityData) -> Result<f64> {
    let (_, q) = check_aug_sequence(seq, data)?;
    let run: f64 = seq
        .iter()
        .enumerate()
        .map(|(h, s)| data.c_ppa * s.e_ppa + data.c_grid[h] * s.e_n - lambda[h] * (s.e_ppa + s.e_grid + s.e_pv))
        .sum();
    Ok(run + data.surrogate(q))
}

/// Adds `e_n = (e_grid)+` and `e_r = min(E_bar, e_ppa + e_pv)`.
pub fn lift_gamma(seq: &[AllocStep], data: &ElectricityData) -> Result<Vec<AugStep>> {
    check_alloc_sequence(seq, data)?;
    Ok(seq
        .iter()
        .map(|s| AugStep {
            e_ppa: s.e_ppa,
            e_grid: s.e_grid,
            e_pv: s.e_pv,
            e_n: s.e_grid.max(0.0),
            e_r: data.e_bar.min(s.e_ppa + s.e_pv),
        })
        .collect())
}

/// Drops the auxiliary variables; Q then follows the exact dynamics.
pub fn project_phi(seq: &[AugStep], data: &ElectricityData) -> Result<Vec<AllocStep>> {
    check_aug_sequence(seq, data)?;
    Ok(seq.iter().map(|s| AllocStep { e_ppa: s.e_ppa, e_grid: s.e_grid, e_pv: s.e_pv }).collect())
}
