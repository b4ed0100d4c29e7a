//! Brute-force solvers for tiny instances: the ground truth that the
//! decomposition, its bounds and the simulated policy are checked against.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dual::{derive_seed, init_multiplier, SEED_SDDP};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus, Sense};
use crate::model::{self, Mode, PlantSpec, State, STOCK_TOL};
use crate::policy::{merge_draws, one_step_decision, ppa_grid, terminal_kinks, PolicyContext};
use crate::scenario::{stream_rng, NoiseModel};
use crate::sddp::{sddp_solve_data, ElectricityData};
use crate::sdp::{production_options, solve_operational, OperationalGrids, ProductionOption};

pub const MAX_HORIZON: usize = 4;
pub const MAX_OUTCOMES: usize = 3;
pub const MAX_TREE_LEAVES: usize = 100_000;
/// The subsidy indicator is handled by enumerating leaf subsets.
pub const MAX_PV_LEAVES: usize = 10;
/// Cap on decision nodes visited by the primal enumeration.
pub const PRIMAL_NODE_BUDGET: usize = 50_000_000;
pub const CHAIN_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct TinyInstance {
    pub plant: PlantSpec,
    pub noise: NoiseModel,
    pub grids: OperationalGrids,
    pub n_ppa: usize,
}

impl TinyInstance {
    pub fn new(plant: PlantSpec, noise: NoiseModel, grids: OperationalGrids, n_ppa: usize) -> Result<Self> {
        plant.validate()?;
        noise.validate(plant.horizon)?;
        grids.validate(&plant)?;
        if plant.horizon > MAX_HORIZON {
            return Err(Error::Budget(format!("horizon {} exceeds {MAX_HORIZON}", plant.horizon)));
        }
        let mut leaves = 1usize;
        for (h, st) in noise.stages.iter().enumerate() {
            if st.demand.len() > MAX_OUTCOMES || st.pv.len() > MAX_OUTCOMES {
                return Err(Error::Budget(format!("hour {h} has more than {MAX_OUTCOMES} outcomes")));
            }
            leaves *= st.demand.len() * st.pv.len();
        }
        if leaves > MAX_TREE_LEAVES {
            return Err(Error::Budget(format!("{leaves} scenario leaves exceed {MAX_TREE_LEAVES}")));
        }
        if n_ppa == 0 {
            return Err(Error::config("grids.ppa_points", "need at least one point"));
        }
        Ok(TinyInstance { plant, noise, grids, n_ppa })
    }

    pub fn pv_leaves(&self) -> usize {
        self.noise.stages.iter().map(|s| s.pv.len()).product()
    }
}

fn feasible_output(plant: &PlantSpec, s: f64, opt: &ProductionOption, o: f64, d_min: f64, d_max: f64) -> bool {
    let low = s + opt.h_prod - d_max.min(o);
    let high = s + opt.h_prod - d_min.min(o);
    low >= plant.s_min - STOCK_TOL && high <= plant.s_max + STOCK_TOL
}

/// Operational dual part by enumerating demand histories and controls
/// with exact (off-grid) stocks. Infeasible starting states give `+inf`.
pub fn exact_operational(inst: &TinyInstance, lambda: &[f64]) -> Result<f64> {
    check_lambda(inst, lambda)?;
    let options = Mode::ALL.map(|m| production_options(&inst.plant, &inst.grids.loads, m));
    fn rec(inst: &TinyInstance, lambda: &[f64], options: &[Vec<ProductionOption>; 3], h: usize, s: f64, m: Mode) -> f64 {
        let plant = &inst.plant;
        if h == plant.horizon {
            return 0.0;
        }
        let dist = &inst.noise.stages[h].demand;
        let (d_min, d_max) = (dist.min(), dist.max());
        let mut best = f64::INFINITY;
        for opt in &options[m.index()] {
            for &o in &inst.grids.h_out[h] {
                if !feasible_output(plant, s, opt, o, d_min, d_max) {
                    continue;
                }
                let mut v = lambda[h] * opt.energy;
                for (&d, &pd) in dist.values.iter().zip(&dist.probs) {
                    let sn = model::step_stock(s, opt.h_prod, d, o);
                    v += pd * (plant.c_backup * (d - o).max(0.0) + rec(inst, lambda, options, h + 1, sn, opt.cmd));
                }
                if v < best {
                    best = v;
                }
            }
        }
        best
    }
    Ok(rec(inst, lambda, &options, 0, inst.plant.s0, inst.plant.m0))
}

fn check_lambda(inst: &TinyInstance, lambda: &[f64]) -> Result<()> {
    if lambda.len() != inst.plant.horizon || lambda.iter().any(|l| !l.is_finite()) {
        return Err(Error::config("lambda", format!("expected {} finite prices", inst.plant.horizon)));
    }
    Ok(())
}

/// Final cost attached to the leaves of the extensive electricity LP.
#[derive(Clone, Debug, PartialEq)]
pub enum LeafCost<'a> {
    /// Convex surrogate through two epigraph rows per leaf.
    Surrogate,
    /// `Q_T <= 0` imposed on the flagged leaves; no final cost otherwise.
    Granted(&'a [bool]),
}

/// Extensive form of the convexified electricity problem over the PV tree.
#[derive(Clone, Debug)]
pub struct ExtensiveLp {
    pub lp: LinearProgram,
    /// Probability of each leaf, in lexicographic order of PV histories.
    pub leaf_probs: Vec<f64>,
    /// Column of `e_ppa` for each decision node, stage by stage.
    pub ppa_columns: Vec<Vec<usize>>,
}

/// Builds the extensive LP: one `e_ppa` per PV history before the hour's
/// outcome, one `(e_grid, e_n, e_r)` per history including it, and the
/// budget `sum e_ppa <= ppa_cap` along every path.
pub fn extensive_electricity_lp(data: &ElectricityData, lambda: &[f64], leaf_cost: LeafCost<'_>) -> Result<ExtensiveLp> {
    let t = data.horizon;
    if lambda.len() != t {
        return Err(Error::config("lambda", format!("expected {t} prices, got {}", lambda.len())));
    }
    let leaves: usize = data.pv.iter().map(|d| d.len()).product();
    if leaves > MAX_TREE_LEAVES {
        return Err(Error::Budget(format!("{leaves} PV leaves")));
    }
    if let LeafCost::Granted(flags) = &leaf_cost {
        if flags.len() != leaves {
            return Err(Error::config("leaf_cost", format!("expected {leaves} flags, got {}", flags.len())));
        }
    }
    let mut lp = LinearProgram::new();
    // Per node at stage h: (probability, path of e_ppa columns, q expression terms).
    struct Node {
        prob: f64,
        ppa_path: Vec<usize>,
        q_terms: Vec<(usize, f64)>,
    }
    let mut nodes = vec![Node { prob: 1.0, ppa_path: Vec::new(), q_terms: Vec::new() }];
    let mut ppa_columns = Vec::with_capacity(t);
    for (h, pv) in data.pv.iter().enumerate() {
        let lam = lambda[h];
        let cg = data.c_grid[h];
        let mut next = Vec::with_capacity(nodes.len() * pv.len());
        let mut cols = Vec::with_capacity(nodes.len());
        for node in &nodes {
            let e = lp.add_var("", node.prob * (data.c_ppa - lam), 0.0, f64::INFINITY);
            cols.push(e);
            lp.objective_offset -= node.prob * lam * pv.mean();
            let mut ppa_path = node.ppa_path.clone();
            ppa_path.push(e);
            for (&w, &pi) in pv.values.iter().zip(&pv.probs) {
                let prob = node.prob * pi;
                let g = lp.add_var("", -prob * lam, data.grid_floor, f64::INFINITY);
                let n = lp.add_var("", prob * cg, 0.0, f64::INFINITY);
                let r = lp.add_var("", 0.0, 0.0, data.e_bar);
                lp.add_row(vec![(e, 1.0), (g, 1.0)], Sense::Le, data.e_bar - w);
                lp.add_row(vec![(g, 1.0), (n, -1.0)], Sense::Le, 0.0);
                lp.add_row(vec![(r, 1.0), (e, -1.0)], Sense::Le, w);
                let mut q_terms = node.q_terms.clone();
                q_terms.push((n, 1.0 - data.p));
                q_terms.push((r, -data.p));
                next.push(Node { prob, ppa_path: ppa_path.clone(), q_terms });
            }
        }
        ppa_columns.push(cols);
        nodes = next;
    }
    let mut leaf_probs = Vec::with_capacity(nodes.len());
    for (k, leaf) in nodes.iter().enumerate() {
        leaf_probs.push(leaf.prob);
        lp.add_row(leaf.ppa_path.iter().map(|&j| (j, 1.0)).collect(), Sense::Le, data.ppa_cap);
        match &leaf_cost {
            LeafCost::Surrogate => {
                let z = lp.add_var("", leaf.prob, f64::NEG_INFINITY, f64::INFINITY);
                for beta in [data.beta1, data.beta2] {
                    let mut coeffs = vec![(z, 1.0)];
                    coeffs.extend(leaf.q_terms.iter().map(|&(j, a)| (j, -beta * a)));
                    lp.add_row(coeffs, Sense::Ge, -data.c_subsidy);
                }
            }
            LeafCost::Granted(flags) => {
                if flags[k] {
                    lp.add_row(leaf.q_terms.clone(), Sense::Le, 0.0);
                }
            }
        }
    }
    Ok(ExtensiveLp { lp, leaf_probs, ppa_columns })
}

fn solve_extensive(ext: &ExtensiveLp, what: &str) -> Result<Option<f64>> {
    let sol = solve_lp(&ext.lp).map_err(|e| Error::lp(what.to_string(), e))?;
    match sol.status {
        LpStatus::Optimal => Ok(Some(sol.objective)),
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(Error::Solver(format!("{what}: unbounded"))),
    }
}

/// Optimal value of the convexified electricity problem with the surrogate
/// final cost; the limit of the SDDP lower bound.
pub fn exact_electricity_surrogate(data: &ElectricityData, lambda: &[f64]) -> Result<f64> {
    let ext = extensive_electricity_lp(data, lambda, LeafCost::Surrogate)?;
    solve_extensive(&ext, "extensive electricity LP")?
        .ok_or_else(|| Error::Solver("extensive electricity LP infeasible".into()))
}

/// Electricity part with the true subsidy cost `-c_s 1{Q_T <= 0}`: the
/// minimum over leaf subsets `S` of the LP with `Q_T <= 0` on `S`, minus
/// `c_s P(S)`. At fixed `S` the epigraph variables are tight at an optimum
/// (grid prices are nonnegative), so each LP equals the nonconvex problem
/// restricted to `S`.
pub fn exact_electricity_subsidy(data: &ElectricityData, lambda: &[f64]) -> Result<f64> {
    let leaves: usize = data.pv.iter().map(|d| d.len()).product();
    if leaves > MAX_PV_LEAVES {
        return Err(Error::Budget(format!("{leaves} PV leaves exceed {MAX_PV_LEAVES} for subset enumeration")));
    }
    let mut best = f64::INFINITY;
    let mut infeasible: Vec<u32> = Vec::new();
    for mask in 0u32..(1u32 << leaves) {
        // Supersets of an infeasible subset are infeasible.
        if infeasible.iter().any(|&m| mask & m == m) {
            continue;
        }
        let flags: Vec<bool> = (0..leaves).map(|k| mask >> k & 1 == 1).collect();
        let ext = extensive_electricity_lp(data, lambda, LeafCost::Granted(&flags))?;
        match solve_extensive(&ext, "subset electricity LP")? {
            Some(v) => {
                let granted: f64 = ext.leaf_probs.iter().zip(&flags).filter(|(_, &f)| f).map(|(p, _)| p).sum();
                best = best.min(v - data.c_subsidy * granted);
            }
            None => infeasible.push(mask),
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualEval {
    pub operational: f64,
    pub electricity: f64,
    pub value: f64,
}

/// Dual function with the true subsidy cost, both parts exact.
pub fn exact_dual_eval(inst: &TinyInstance, lambda: &[f64]) -> Result<DualEval> {
    let operational = exact_operational(inst, lambda)?;
    let data = ElectricityData::new(&inst.plant, &inst.noise)?;
    let electricity = exact_electricity_subsidy(&data, lambda)?;
    Ok(DualEval { operational, electricity, value: operational + electricity })
}

/// Optimal value of the original problem over the discretized controls of
/// the policy (operational grids and the PPA draw grid), by backward
/// enumeration on exact states with memoization.
pub fn exact_primal(inst: &TinyInstance) -> Result<f64> {
    let plant = &inst.plant;
    let e_bar = model::max_consumption(plant);
    let options = Mode::ALL.map(|m| production_options(plant, &inst.grids.loads, m));
    let joint: Vec<(Vec<(f64, f64)>, Vec<f64>)> =
        (0..plant.horizon).map(|h| inst.noise.support(h)).collect::<Result<_>>()?;
    struct Ctx<'a> {
        inst: &'a TinyInstance,
        e_bar: f64,
        options: [Vec<ProductionOption>; 3],
        joint: Vec<(Vec<(f64, f64)>, Vec<f64>)>,
        memo: HashMap<(usize, u64, usize, u64, u64), f64>,
        visited: usize,
    }
    fn rec(c: &mut Ctx<'_>, h: usize, st: State) -> Result<f64> {
        let plant = &c.inst.plant;
        if h == plant.horizon {
            return Ok(model::subsidy_cost(st.q, plant));
        }
        let key = (h, st.s.to_bits(), st.m.index(), st.p_stock.to_bits(), st.q.to_bits());
        if let Some(&v) = c.memo.get(&key) {
            return Ok(v);
        }
        c.visited += 1;
        if c.visited > PRIMAL_NODE_BUDGET {
            return Err(Error::Budget(format!("primal enumeration visited more than {PRIMAL_NODE_BUDGET} states")));
        }
        let dist = &c.inst.noise.stages[h].demand;
        let (d_min, d_max) = (dist.min(), dist.max());
        let opts = c.options[st.m.index()].clone();
        let outs = c.inst.grids.h_out[h].clone();
        let grid = ppa_grid(st.p_stock, c.e_bar, c.inst.n_ppa);
        let last = h + 1 == plant.horizon;
        let pv_values = c.inst.noise.stages[h].pv.values.clone();
        let (support, probs) = c.joint[h].clone();
        let mut best = f64::INFINITY;
        for opt in &opts {
            // Same draw candidates as the policy: the grid, plus the
            // last-hour kinks of each option.
            let draws = if last {
                merge_draws(&grid, &terminal_kinks(st.q, opt.energy, grid[grid.len() - 1], &pv_values, plant))
            } else {
                grid.clone()
            };
            for &o in &outs {
                if !feasible_output(plant, st.s, opt, o, d_min, d_max) {
                    continue;
                }
                for &e in &draws {
                    let mut v = 0.0;
                    for (&(d, w), &pr) in support.iter().zip(&probs) {
                        let g = opt.energy - e - w;
                        let next = State {
                            s: model::step_stock(st.s, opt.h_prod, d, o),
                            m: opt.cmd,
                            p_stock: st.p_stock - e,
                            q: model::step_cumulative(st.q, g, e, w, plant),
                        };
                        let cost = model::stage_cost(e, g, d, o, h, plant);
                        v += pr * (cost + rec(c, h + 1, next)?);
                    }
                    if v < best {
                        best = v;
                    }
                }
            }
        }
        c.memo.insert(key, best);
        Ok(best)
    }
    let mut c = Ctx { inst, e_bar, options, joint, memo: HashMap::new(), visited: 0 };
    rec(&mut c, 0, State::initial(plant))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyValue {
    pub mean_k: f64,
    pub mean_khat: f64,
    pub subsidy_probability: f64,
}

/// Expected cost of the one-step policy by enumerating every joint noise history.
pub fn exact_policy_value(ctx: &PolicyContext<'_>) -> Result<PolicyValue> {
    let plant = ctx.plant;
    let joint: Vec<(Vec<(f64, f64)>, Vec<f64>)> =
        (0..plant.horizon).map(|h| ctx.noise.support(h)).collect::<Result<_>>()?;
    let leaves: usize = joint.iter().map(|j| j.1.len()).product();
    if leaves > MAX_TREE_LEAVES {
        return Err(Error::Budget(format!("{leaves} joint leaves exceed {MAX_TREE_LEAVES}")));
    }
    let mut acc = PolicyValue { mean_k: 0.0, mean_khat: 0.0, subsidy_probability: 0.0 };
    fn rec(
        ctx: &PolicyContext<'_>,
        joint: &[(Vec<(f64, f64)>, Vec<f64>)],
        h: usize,
        st: State,
        prob: f64,
        running: f64,
        acc: &mut PolicyValue,
    ) -> Result<()> {
        let plant = ctx.plant;
        if h == plant.horizon {
            acc.mean_k += prob * (running + model::subsidy_cost(st.q, plant));
            acc.mean_khat += prob * (running + ctx.data().surrogate(st.q));
            if st.q <= 0.0 {
                acc.subsidy_probability += prob;
            }
            return Ok(());
        }
        let dec = one_step_decision(ctx, &st, h)?;
        for (&(d, w), &pr) in joint[h].0.iter().zip(&joint[h].1) {
            let u = dec.realize(w);
            let cost = model::stage_cost(u.e_ppa, u.e_grid, d, u.h_out, h, plant);
            let next = State {
                s: model::step_stock(st.s, dec.h_prod, d, u.h_out),
                m: u.mode_cmd,
                p_stock: model::step_ppa(st.p_stock, u.e_ppa)?,
                q: model::step_cumulative(st.q, u.e_grid, u.e_ppa, w, plant),
            };
            rec(ctx, joint, h + 1, next, prob * pr, running + cost, acc)?;
        }
        Ok(())
    }
    rec(ctx, &joint, 0, State::initial(plant), 1.0, 0.0, &mut acc)?;
    Ok(acc)
}

/// The four values of the bound chain at one multiplier, with the parts
/// they are assembled from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub lambda: Vec<f64>,
    /// Operational value from the SDP table plus the SDDP lower bound.
    pub dual_surrogate: f64,
    /// Exact dual function with the true subsidy cost.
    pub dual_exact: f64,
    pub primal: f64,
    pub policy: f64,
    pub op_sdp: f64,
    pub op_exact: f64,
    pub elec_sddp: f64,
    pub elec_surrogate_exact: f64,
    pub elec_subsidy_exact: f64,
    pub violations: Vec<String>,
}

impl ChainReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `dual_surrogate <= dual_exact <= primal <= policy` within
/// `CHAIN_TOL`. `primal` may be passed in since it does not depend on the
/// multiplier. Violations are listed in the report, not raised.
pub fn verify_chain(
    inst: &TinyInstance,
    lambda: &[f64],
    sddp_iterations: usize,
    seed: u64,
    primal: Option<f64>,
) -> Result<ChainReport> {
    check_lambda(inst, lambda)?;
    let plant = &inst.plant;
    let data = ElectricityData::new(plant, &inst.noise)?;
    let vo = solve_operational(lambda, plant, &inst.noise, &inst.grids)?;
    let op_sdp = vo.value_at(0, plant.s0, plant.m0);
    let sddp = sddp_solve_data(lambda, &data, sddp_iterations, seed)?;
    let dual = exact_dual_eval(inst, lambda)?;
    let elec_surrogate_exact = exact_electricity_surrogate(&data, lambda)?;
    let primal = match primal {
        Some(v) => v,
        None => exact_primal(inst)?,
    };
    let ctx = PolicyContext::new(&vo, &sddp.cuts, lambda, plant, &inst.noise, inst.n_ppa)?;
    let policy = exact_policy_value(&ctx)?.mean_k;
    let mut report = ChainReport {
        lambda: lambda.to_vec(),
        dual_surrogate: op_sdp + sddp.lower_bound,
        dual_exact: dual.value,
        primal,
        policy,
        op_sdp,
        op_exact: dual.operational,
        elec_sddp: sddp.lower_bound,
        elec_surrogate_exact,
        elec_subsidy_exact: dual.electricity,
        violations: Vec::new(),
    };
    let links = [
        ("surrogate dual", report.dual_surrogate, "exact dual", report.dual_exact),
        ("exact dual", report.dual_exact, "primal optimum", report.primal),
        ("primal optimum", report.primal, "policy value", report.policy),
    ];
    for (a, va, b, vb) in links {
        if !(va <= vb + CHAIN_TOL) {
            report.violations.push(format!("{a} {va} exceeds {b} {vb}"));
        }
    }
    Ok(report)
}

/// `n` price vectors drawn uniformly per hour in `[0, 2 * max(c_grid_h, c_ppa)]`.
pub fn random_lambdas(plant: &PlantSpec, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, 0);
    (0..n)
        .map(|_| plant.c_grid.iter().map(|&cg| rng.gen_range(0.0..=2.0 * cg.max(plant.c_ppa))).collect())
        .collect()
}

/// Chain reports at the initial multiplier followed by `n_random` random ones.
pub fn chain_suite(inst: &TinyInstance, n_random: usize, sddp_iterations: usize, seed: u64) -> Result<Vec<ChainReport>> {
    let primal = exact_primal(inst)?;
    let mut lambdas = vec![init_multiplier(&inst.plant).lambda];
    lambdas.extend(random_lambdas(&inst.plant, n_random, seed));
    lambdas
        .iter()
        .enumerate()
        .map(|(i, l)| verify_chain(inst, l, sddp_iterations, derive_seed(seed, SEED_SDDP, i as u64), Some(primal)))
        .collect()
}
