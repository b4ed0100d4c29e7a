//! Admissible one-step lookahead policy built from the operational value
//! table and the electricity cuts, and its Monte Carlo evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, Control, Mode, PlantSpec, State, STOCK_TOL};
use crate::scenario::{stream_rng, NoiseModel};
use crate::sddp::{CutSet, ElectricityData};
use crate::sdp::{production_options, ProductionOption, ValueFunctionO};

pub const DEFAULT_PPA_POINTS: usize = 30;

/// How the PPA draw is chosen on its grid for a fixed production option.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PpaSearch {
    /// Bisection on forward differences; relies on convexity in the draw.
    #[default]
    Bisection,
    /// Scan every grid point.
    Exhaustive,
}

pub struct PolicyContext<'a> {
    pub vo: &'a ValueFunctionO,
    pub cuts: &'a CutSet,
    pub lambda: &'a [f64],
    pub plant: &'a PlantSpec,
    pub noise: &'a NoiseModel,
    pub n_ppa: usize,
    pub search: PpaSearch,
    data: ElectricityData,
    options: [Vec<ProductionOption>; 3],
    /// Cuts of each stage sorted by Q slope, for upper-envelope evaluation.
    sorted: Vec<Vec<(f64, f64, f64)>>,
}

impl<'a> PolicyContext<'a> {
    pub fn new(
        vo: &'a ValueFunctionO,
        cuts: &'a CutSet,
        lambda: &'a [f64],
        plant: &'a PlantSpec,
        noise: &'a NoiseModel,
        n_ppa: usize,
    ) -> Result<Self> {
        if vo.lambda.as_slice() != lambda {
            return Err(Error::Stale("operational values were computed for different prices".into()));
        }
        if cuts.horizon() != plant.horizon || vo.horizon() != plant.horizon {
            return Err(Error::Stale("value functions do not match the plant horizon".into()));
        }
        if n_ppa == 0 {
            return Err(Error::config("grids.ppa_points", "need at least one point"));
        }
        let data = ElectricityData::new(plant, noise)?;
        let options = Mode::ALL.map(|m| production_options(plant, &vo.grids.loads, m));
        let sorted = (0..=plant.horizon)
            .map(|h| {
                let mut v: Vec<(f64, f64, f64)> =
                    cuts.cuts(h).iter().map(|c| (c.slope_q, c.intercept, c.slope_p)).collect();
                v.sort_by(|a, b| a.0.total_cmp(&b.0));
                v
            })
            .collect();
        Ok(PolicyContext { vo, cuts, lambda, plant, noise, n_ppa, search: PpaSearch::default(), data, options, sorted })
    }

    pub fn with_search(mut self, search: PpaSearch) -> Self {
        self.search = search;
        self
    }

    pub fn data(&self) -> &ElectricityData {
        &self.data
    }

    pub fn ppa_grid(&self, p_stock: f64) -> Vec<f64> {
        ppa_grid(p_stock, self.data.e_bar, self.n_ppa)
    }
}

/// `n` evenly spaced PPA draws over `[0, min(p_stock, e_bar)]`; a single
/// point when nothing can be drawn.
pub fn ppa_grid(p_stock: f64, e_bar: f64, n: usize) -> Vec<f64> {
    let top = p_stock.min(e_bar).max(0.0);
    if top == 0.0 || n == 1 {
        return vec![if n == 1 { top } else { 0.0 }];
    }
    (0..n).map(|k| if k == n - 1 { top } else { top * k as f64 / (n - 1) as f64 }).collect()
}

/// Draws in `[0, top]` where the last-hour cost of an option consuming
/// `energy` changes slope, for each PV outcome: grid draw zero, renewable
/// supply reaching `E_bar`, and the score crossing zero. The crossing is the
/// smallest draw found by bisection whose next score is nonpositive under
/// the exact dynamics, so drawing it keeps the subsidy.
pub fn terminal_kinks(q: f64, energy: f64, top: f64, pv: &[f64], plant: &PlantSpec) -> Vec<f64> {
    let e_bar = model::max_consumption(plant);
    let next_q = |e: f64, w: f64| model::step_cumulative(q, energy - e - w, e, w, plant);
    let mut out = Vec::with_capacity(3 * pv.len());
    for &w in pv {
        for e in [energy - w, e_bar - w] {
            if e > 0.0 && e < top {
                out.push(e);
            }
        }
        if next_q(0.0, w) > 0.0 && next_q(top, w) <= 0.0 {
            let (mut lo, mut hi) = (0.0, top);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if next_q(mid, w) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            out.push(hi);
        }
    }
    out
}

/// `grid` merged with `extra`, sorted, without duplicates.
pub(crate) fn merge_draws(grid: &[f64], extra: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = grid.iter().chain(extra).copied().collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Upper envelope of lines `c + s x`, slopes ascending.
#[derive(Default)]
struct Envelope {
    c: Vec<f64>,
    s: Vec<f64>,
    breaks: Vec<f64>,
}

impl Envelope {
    fn build(&mut self, lines: impl Iterator<Item = (f64, f64)>) {
        self.c.clear();
        self.s.clear();
        self.breaks.clear();
        for (c, s) in lines {
            if let Some(&last_s) = self.s.last() {
                if s == last_s {
                    if c <= *self.c.last().unwrap() {
                        continue;
                    }
                    self.c.pop();
                    self.s.pop();
                }
            }
            while self.c.len() >= 2 {
                let k = self.c.len();
                let (c1, s1, c2, s2) = (self.c[k - 2], self.s[k - 2], self.c[k - 1], self.s[k - 1]);
                // Middle line never strictly on top.
                if (c1 - c) * (s2 - s1) <= (c1 - c2) * (s - s1) {
                    self.c.pop();
                    self.s.pop();
                } else {
                    break;
                }
            }
            self.c.push(c);
            self.s.push(s);
        }
        for k in 1..self.c.len() {
            self.breaks.push((self.c[k - 1] - self.c[k]) / (self.s[k] - self.s[k - 1]));
        }
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let k = self.breaks.partition_point(|&b| b <= x);
        let lo = k.saturating_sub(1);
        let hi = (k + 1).min(self.c.len() - 1);
        let mut best = f64::NEG_INFINITY;
        for j in lo..=hi {
            best = best.max(self.c[j] + self.s[j] * x);
        }
        best
    }
}

/// Decision taken before the hour's noise is observed; grid electricity is
/// the recourse fixed by the hourly balance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub mode_cmd: Mode,
    pub load: f64,
    pub h_out: f64,
    pub e_ppa: f64,
    pub h_prod: f64,
    pub consumption: f64,
    pub expected_cost: f64,
}

impl Decision {
    pub fn realize(&self, e_pv: f64) -> Control {
        Control {
            e_ppa: self.e_ppa,
            e_grid: self.consumption - self.e_ppa - e_pv,
            load: self.load,
            mode_cmd: self.mode_cmd,
            h_out: self.h_out,
        }
    }
}

/// Minimizes, over the discretized controls, the expected stage cost plus
/// `V^O_{h+1}` plus the cut model of `V^E_{h+1}`, with grid electricity
/// forced by the balance and Q advanced by its exact dynamics.
pub fn one_step_decision(ctx: &PolicyContext<'_>, state: &State, h: usize) -> Result<Decision> {
    let plant = ctx.plant;
    let t = plant.horizon;
    if h >= t {
        return Err(Error::Constraint(format!("hour {h} outside horizon {t}")));
    }
    if !plant.stock_within_bounds(state.s) || state.p_stock < -1e-9 {
        return Err(Error::Constraint(format!("invalid state {state:?} at hour {h}")));
    }
    let data = &ctx.data;
    let demand = &ctx.noise.stages[h].demand;
    let pv = &ctx.noise.stages[h].pv;
    let (d_max, d_min) = (demand.max(), demand.min());
    let outs = &ctx.vo.grids.h_out[h];
    let options = &ctx.options[state.m.index()];
    let cg = data.c_grid[h];

    // Electricity part per production option. For a fixed option the
    // expected cost is convex in e_ppa, so its first minimizer on the grid is
    // located by bisection on forward differences.
    let ppa_pts = ctx.ppa_grid(state.p_stock);
    let terminal = h + 1 == t;
    let mut envs: Vec<Option<Envelope>> = (0..ppa_pts.len()).map(|_| None).collect();
    let mut b_best = vec![f64::INFINITY; options.len()];
    let mut b_arg = vec![0usize; options.len()];
    let top = ppa_pts[ppa_pts.len() - 1];
    let mut b_draw = vec![0.0; options.len()];
    for (k, opt) in options.iter().enumerate() {
        // At the last hour the terminal model is piecewise linear in the
        // draw, so adding its kinks makes the search exact.
        let merged;
        let pts: &[f64] = if terminal {
            merged = merge_draws(&ppa_pts, &terminal_kinks(state.q, opt.energy, top, &pv.values, plant));
            &merged
        } else {
            &ppa_pts
        };
        let mut eval = |j: usize| -> f64 {
            let e = pts[j];
            if !terminal && envs[j].is_none() {
                let p_next = state.p_stock - e;
                let mut env = Envelope::default();
                env.build(ctx.sorted[h + 1].iter().map(|&(sq, a, sp)| (a + sp * p_next, sq)));
                envs[j] = Some(env);
            }
            let mut b = plant.c_ppa * e;
            for (&w, &pi) in pv.values.iter().zip(&pv.probs) {
                let g = opt.consumption_minus(e, w);
                let q_next = state.q + (1.0 - plant.p) * g.max(0.0) - plant.p * data.e_bar.min(e + w);
                let v = if terminal {
                    data.surrogate(q_next)
                } else {
                    envs[j].as_ref().expect("envelope built above").eval(q_next)
                };
                b += pi * (cg * g.max(0.0) + v);
            }
            b
        };
        match ctx.search {
            PpaSearch::Bisection => {
                let mut memo = vec![f64::NAN; pts.len()];
                let mut at = |j: usize| {
                    if memo[j].is_nan() {
                        memo[j] = eval(j);
                    }
                    memo[j]
                };
                let (mut lo, mut hi) = (0usize, pts.len() - 1);
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    if at(mid + 1) >= at(mid) {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                b_best[k] = at(lo);
                b_arg[k] = lo;
            }
            PpaSearch::Exhaustive => {
                for j in 0..pts.len() {
                    let b = eval(j);
                    if b < b_best[k] {
                        b_best[k] = b;
                        b_arg[k] = j;
                    }
                }
            }
        }
        b_draw[k] = pts[b_arg[k]];
    }

    let mut best = f64::INFINITY;
    let mut arg: Option<(usize, usize)> = None;
    for (k, opt) in options.iter().enumerate() {
        for (jo, &o) in outs.iter().enumerate() {
            let low = state.s + opt.h_prod - d_max.min(o);
            let high = state.s + opt.h_prod - d_min.min(o);
            if low < plant.s_min - STOCK_TOL || high > plant.s_max + STOCK_TOL {
                continue;
            }
            let mut a = 0.0;
            for (&d, &pd) in demand.values.iter().zip(&demand.probs) {
                let sn = model::step_stock(state.s, opt.h_prod, d, o);
                a += pd * (plant.c_backup * (d - o).max(0.0) + ctx.vo.value_at(h + 1, sn, opt.cmd));
            }
            let total = a + b_best[k];
            if total < best {
                best = total;
                arg = Some((k, jo));
            }
        }
    }
    let (k, jo) = arg.ok_or_else(|| {
        Error::InfeasibleControl(format!("no admissible control at hour {h} from state {state:?}"))
    })?;
    let opt = options[k];
    Ok(Decision {
        mode_cmd: opt.cmd,
        load: opt.load,
        h_out: outs[jo],
        e_ppa: b_draw[k],
        h_prod: opt.h_prod,
        consumption: opt.energy,
        expected_cost: best,
    })
}

impl ProductionOption {
    #[inline]
    fn consumption_minus(&self, e_ppa: f64, e_pv: f64) -> f64 {
        self.energy - e_ppa - e_pv
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HourRecord {
    pub hour: usize,
    pub stock: f64,
    pub mode: Mode,
    pub p_stock: f64,
    pub q: f64,
    pub mode_cmd: Mode,
    pub load: f64,
    pub h_out: f64,
    pub e_ppa: f64,
    pub e_grid: f64,
    pub demand: f64,
    pub e_pv: f64,
    pub consumption: f64,
    pub stage_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub hours: Vec<HourRecord>,
    pub final_state: State,
    pub subsidy_granted: bool,
    pub cost_k: f64,
    pub cost_khat: f64,
}

/// Counts of invariant breaches over simulated trajectories.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantCounts {
    pub stock_bounds: usize,
    pub ppa_negative: usize,
    pub coupling: usize,
    pub grid_floor: usize,
    pub mix_cap: usize,
    pub final_cost_identity: usize,
    pub max_coupling_residual: f64,
}

impl InvariantCounts {
    pub fn total(&self) -> usize {
        self.stock_bounds + self.ppa_negative + self.coupling + self.grid_floor + self.mix_cap + self.final_cost_identity
    }

    fn merge(&mut self, o: &InvariantCounts) {
        self.stock_bounds += o.stock_bounds;
        self.ppa_negative += o.ppa_negative;
        self.coupling += o.coupling;
        self.grid_floor += o.grid_floor;
        self.mix_cap += o.mix_cap;
        self.final_cost_identity += o.final_cost_identity;
        self.max_coupling_residual = self.max_coupling_residual.max(o.max_coupling_residual);
    }
}

pub const COUPLING_TOL: f64 = 1e-9;

/// Applies the policy along one noise path of `(demand, pv)` per hour.
pub fn simulate_path(
    ctx: &PolicyContext<'_>,
    path: &[(f64, f64)],
    keep_hours: bool,
) -> Result<(SimulationRecord, InvariantCounts)> {
    let plant = ctx.plant;
    let data = &ctx.data;
    let mut st = State::initial(plant);
    let mut hours = Vec::with_capacity(if keep_hours { path.len() } else { 0 });
    let mut inv = InvariantCounts::default();
    let mut running = 0.0;
    for (h, &(d, w)) in path.iter().enumerate() {
        let dec = one_step_decision(ctx, &st, h)?;
        let u = dec.realize(w);
        let residual = (u.e_ppa + u.e_grid + w - dec.consumption).abs();
        inv.max_coupling_residual = inv.max_coupling_residual.max(residual);
        if residual > COUPLING_TOL {
            inv.coupling += 1;
        }
        if u.e_grid < data.grid_floor - 1e-9 {
            inv.grid_floor += 1;
        }
        if u.e_ppa + u.e_grid + w > data.e_bar + 1e-9 {
            inv.mix_cap += 1;
        }
        let cost = model::stage_cost(u.e_ppa, u.e_grid, d, u.h_out, h, plant);
        let next = State {
            s: model::step_stock(st.s, dec.h_prod, d, u.h_out),
            m: u.mode_cmd,
            p_stock: model::step_ppa(st.p_stock, u.e_ppa)?,
            q: model::step_cumulative(st.q, u.e_grid, u.e_ppa, w, plant),
        };
        if !plant.stock_within_bounds(next.s) {
            inv.stock_bounds += 1;
        }
        if keep_hours {
            hours.push(HourRecord {
                hour: h,
                stock: st.s,
                mode: st.m,
                p_stock: st.p_stock,
                q: st.q,
                mode_cmd: u.mode_cmd,
                load: u.load,
                h_out: u.h_out,
                e_ppa: u.e_ppa,
                e_grid: u.e_grid,
                demand: d,
                e_pv: w,
                consumption: dec.consumption,
                stage_cost: cost,
            });
        }
        running += cost;
        st = next;
    }
    if st.p_stock < 0.0 {
        inv.ppa_negative += 1;
    }
    let k = model::subsidy_cost(st.q, plant);
    let khat = data.surrogate(st.q);
    if st.q <= 0.0 {
        let beta = (data.beta1 * st.q).max(data.beta2 * st.q);
        if ((k - khat) + beta).abs() > 1e-9 * (1.0 + data.c_subsidy) {
            inv.final_cost_identity += 1;
        }
    }
    Ok((
        SimulationRecord {
            hours,
            final_state: st,
            subsidy_granted: st.q <= 0.0,
            cost_k: running + k,
            cost_khat: running + khat,
        },
        inv,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyStats {
    pub n_paths: usize,
    pub mean_k: f64,
    pub mean_khat: f64,
    /// 95% normal half-widths.
    pub half_width_k: f64,
    pub half_width_khat: f64,
    pub subsidy_rate: f64,
    pub invariants: InvariantCounts,
    pub samples: Vec<SimulationRecord>,
}

fn mean_and_half_width(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Monte Carlo evaluation; both final-cost variants use the same
/// trajectories. The first `keep` paths are returned in full.
pub fn simulate_policy(ctx: &PolicyContext<'_>, n_paths: usize, seed: u64, keep: usize) -> Result<PolicyStats> {
    if n_paths == 0 {
        return Err(Error::config("solver.policy_paths", "need at least one path"));
    }
    let n_eff = if ctx.noise.is_deterministic() { 1 } else { n_paths };
    let runs: Vec<(SimulationRecord, InvariantCounts)> = (0..n_eff)
        .into_par_iter()
        .map(|k| {
            let path = ctx.noise.sample_path_with(&mut stream_rng(seed, k as u64));
            simulate_path(ctx, &path, k < keep)
        })
        .collect::<Result<_>>()?;
    let mut invariants = InvariantCounts::default();
    let mut ck = Vec::with_capacity(n_eff);
    let mut ckh = Vec::with_capacity(n_eff);
    let mut granted = 0usize;
    let mut samples = Vec::new();
    for (k, (rec, inv)) in runs.into_iter().enumerate() {
        invariants.merge(&inv);
        ck.push(rec.cost_k);
        ckh.push(rec.cost_khat);
        granted += rec.subsidy_granted as usize;
        if k < keep {
            samples.push(rec);
        }
    }
    let (mean_k, half_width_k) = mean_and_half_width(&ck);
    let (mean_khat, half_width_khat) = mean_and_half_width(&ckh);
    Ok(PolicyStats {
        n_paths: n_eff,
        mean_k,
        mean_khat,
        half_width_k,
        half_width_khat,
        subsidy_rate: granted as f64 / n_eff as f64,
        invariants,
        samples,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub dual_value: f64,
    pub policy_value: f64,
    pub gap_abs: f64,
    pub gap_rel: f64,
    pub dual_shifted: f64,
    pub policy_shifted: f64,
    pub gap_rel_shifted: f64,
    pub mc_half_width: f64,
    /// Policy cost below the dual bound by more than the Monte Carlo half-width.
    pub violation: bool,
}

/// Duality gap between a policy cost and a dual bound; shifted values add
/// the subsidy back for readability.
pub fn gap_report(dual_value: f64, policy_value: f64, c_subsidy: f64, mc_half_width: f64) -> Result<GapReport> {
    if !dual_value.is_finite() || !policy_value.is_finite() {
        return Err(Error::Certification("dual and policy values must be finite".into()));
    }
    let gap_abs = policy_value - dual_value;
    let rel = |num: f64, den: f64| if den == 0.0 { if num == 0.0 { 0.0 } else { f64::INFINITY } } else { num / den.abs() };
    Ok(GapReport {
        dual_value,
        policy_value,
        gap_abs,
        gap_rel: rel(gap_abs, policy_value),
        dual_shifted: dual_value + c_subsidy,
        policy_shifted: policy_value + c_subsidy,
        gap_rel_shifted: rel(gap_abs, policy_value + c_subsidy),
        mc_half_width,
        violation: gap_abs < -mc_half_width - 1e-9 * (1.0 + policy_value.abs()),
    })
}
