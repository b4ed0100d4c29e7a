//! Gradient-like ascent on the deterministic price vector.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PlantSpec;
use crate::scenario::NoiseModel;
use crate::sddp::{sddp_solve_data, simulate_allocation_data, CutSet, ElectricityData};
use crate::sdp::{propagate, solve_operational, OperationalGrids, ValueFunctionO};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    pub lambda: Vec<f64>,
    pub iteration: usize,
    pub step: f64,
}

/// `lambda_h = p * c_grid_h + (1 - p) * c_ppa`.
pub fn init_multiplier(plant: &PlantSpec) -> Multiplier {
    let lambda = plant.c_grid.iter().map(|&cg| plant.p * cg + (1.0 - plant.p) * plant.c_ppa).collect();
    Multiplier { lambda, iteration: 0, step: 0.0 }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub iterations: usize,
    pub initial_step: f64,
    pub halving_period: usize,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule { iterations: 51, initial_step: 5e-6, halving_period: 15 }
    }
}

impl StepSchedule {
    pub fn step(&self, k: usize) -> f64 {
        self.initial_step * 0.5f64.powi((k / self.halving_period) as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_step.is_finite() && self.initial_step >= 0.0) {
            return Err(Error::config("solver.initial_step", "must be finite and nonnegative"));
        }
        if self.halving_period == 0 {
            return Err(Error::config("solver.halving_period", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubproblemSettings {
    pub sddp_iterations: usize,
    pub gradient_paths: usize,
}

impl Default for SubproblemSettings {
    fn default() -> Self {
        SubproblemSettings { sddp_iterations: 60, gradient_paths: 2300 }
    }
}

/// Independent seed per (component, iteration).
pub fn derive_seed(root: u64, component: u64, k: u64) -> u64 {
    let mut z = root ^ component.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ k.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const SEED_SDDP: u64 = 1;
pub const SEED_ALLOCATION: u64 = 2;
pub const SEED_POLICY: u64 = 3;

pub struct GradientEval {
    /// Expected consumption minus expected supply, per hour.
    pub grad: Vec<f64>,
    /// Operational value plus the SDDP lower bound.
    pub dual_value: f64,
    pub op_value: f64,
    pub elec_bound: f64,
    pub consumption: Vec<f64>,
    pub supply: Vec<f64>,
    pub vo: ValueFunctionO,
    pub cuts: CutSet,
}

/// Solves both subproblems at `lambda` and assembles the gradient-like
/// direction from the exact consumption law and sampled supply.
pub fn gradient_like(
    lambda: &[f64],
    plant: &PlantSpec,
    noise: &NoiseModel,
    grids: &OperationalGrids,
    settings: &SubproblemSettings,
    seed: u64,
) -> Result<GradientEval> {
    let data = ElectricityData::new(plant, noise)?;
    gradient_like_data(lambda, plant, noise, grids, &data, settings, seed, 0)
}

#[allow(clippy::too_many_arguments)]
fn gradient_like_data(
    lambda: &[f64],
    plant: &PlantSpec,
    noise: &NoiseModel,
    grids: &OperationalGrids,
    data: &ElectricityData,
    settings: &SubproblemSettings,
    seed: u64,
    k: u64,
) -> Result<GradientEval> {
    let vo = solve_operational(lambda, plant, noise, grids)?;
    let op_value = vo.value_at(0, plant.s0, plant.m0);
    if !op_value.is_finite() {
        return Err(Error::InfeasibleControl("initial state has no feasible operational policy".into()));
    }
    let prop = propagate(&vo, plant, noise, plant.s0, plant.m0)?;
    let sddp = sddp_solve_data(lambda, data, settings.sddp_iterations, derive_seed(seed, SEED_SDDP, k))?;
    let alloc = simulate_allocation_data(
        &sddp.cuts,
        lambda,
        data,
        settings.gradient_paths,
        derive_seed(seed, SEED_ALLOCATION, k),
    )?;
    let grad = prop.consumption.iter().zip(&alloc.mean_supply).map(|(c, s)| c - s).collect();
    Ok(GradientEval {
        grad,
        dual_value: op_value + sddp.lower_bound,
        op_value,
        elec_bound: sddp.lower_bound,
        consumption: prop.consumption,
        supply: alloc.mean_supply,
        vo,
        cuts: sddp.cuts,
    })
}

/// Policy statistics attached to an ascent iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyEval {
    pub mean_k: f64,
    pub mean_khat: f64,
    pub half_width_k: f64,
    pub subsidy_rate: f64,
    pub invariant_violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub dual_value: f64,
    pub op_value: f64,
    pub elec_bound: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub wall_time_s: f64,
    pub policy: Option<PolicyEval>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscentReport {
    pub records: Vec<IterationRecord>,
    pub best_iteration: usize,
    pub best_dual: f64,
}

impl AscentReport {
    /// Lowest policy mean among evaluated iterations.
    pub fn best_policy(&self) -> Option<(usize, PolicyEval)> {
        self.records
            .iter()
            .filter_map(|r| r.policy.map(|p| (r.iteration, p)))
            .min_by(|a, b| a.1.mean_k.total_cmp(&b.1.mean_k))
    }
}

pub struct AscentOutcome {
    pub best: Multiplier,
    pub report: AscentReport,
    /// Subproblem solutions at the best multiplier.
    pub best_vo: ValueFunctionO,
    pub best_cuts: CutSet,
}

/// `ascend_with` without per-iteration hook.
pub fn ascend(
    plant: &PlantSpec,
    noise: &NoiseModel,
    grids: &OperationalGrids,
    schedule: &StepSchedule,
    settings: &SubproblemSettings,
    seed: u64,
) -> Result<AscentOutcome> {
    ascend_with(plant, noise, grids, schedule, settings, seed, |_, _, _| Ok(None))
}

/// Evaluates `lambda_0 .. lambda_N` for `N = schedule.iterations` and steps
/// `lambda_{k+1} = lambda_k + step(k) * grad_k` in between. The hook sees
/// every evaluated multiplier with its subproblem solutions.
pub fn ascend_with<F>(
    plant: &PlantSpec,
    noise: &NoiseModel,
    grids: &OperationalGrids,
    schedule: &StepSchedule,
    settings: &SubproblemSettings,
    seed: u64,
    mut hook: F,
) -> Result<AscentOutcome>
where
    F: FnMut(usize, &Multiplier, &GradientEval) -> Result<Option<PolicyEval>>,
{
    schedule.validate()?;
    let data = ElectricityData::new(plant, noise)?;
    let mut mult = init_multiplier(plant);
    let mut records = Vec::with_capacity(schedule.iterations + 1);
    let mut best: Option<(Multiplier, f64, ValueFunctionO, CutSet)> = None;
    for k in 0..=schedule.iterations {
        let start = Instant::now();
        let ev = gradient_like_data(&mult.lambda, plant, noise, grids, &data, settings, seed, k as u64)
            .map_err(|e| Error::Solver(format!("ascent iteration {k}: {e}")))?;
        let step = if k < schedule.iterations { schedule.step(k) } else { 0.0 };
        mult.iteration = k;
        mult.step = step;
        let policy = hook(k, &mult, &ev)?;
        let grad_norm = ev.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        records.push(IterationRecord {
            iteration: k,
            dual_value: ev.dual_value,
            op_value: ev.op_value,
            elec_bound: ev.elec_bound,
            grad_norm,
            step,
            wall_time_s: start.elapsed().as_secs_f64(),
            policy,
        });
        if best.as_ref().map_or(true, |b| ev.dual_value > b.1) {
            best = Some((mult.clone(), ev.dual_value, ev.vo.clone(), ev.cuts.clone()));
        }
        if k < schedule.iterations {
            for (l, g) in mult.lambda.iter_mut().zip(&ev.grad) {
                *l += step * g;
            }
        }
    }
    let (best_mult, best_dual, best_vo, best_cuts) = best.expect("at least one iteration is evaluated");
    Ok(AscentOutcome {
        report: AscentReport { records, best_iteration: best_mult.iteration, best_dual },
        best: best_mult,
        best_vo,
        best_cuts,
    })
}
