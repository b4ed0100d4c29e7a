//! Operational subproblem: backward tabular dynamic programming over
//! (stock, mode) with electricity priced at `lambda`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, Mode, PlantSpec, STOCK_TOL};
use crate::scenario::NoiseModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationalGrids {
    /// Uniform stock grid from `s_min` to `s_max`.
    pub stock: Vec<f64>,
    /// Loads available under the START command, ascending.
    pub loads: Vec<f64>,
    /// Output (withdrawal) levels per hour, ascending from 0.
    pub h_out: Vec<Vec<f64>>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![b],
        _ => (0..n).map(|k| if k == n - 1 { b } else { a + (b - a) * k as f64 / (n - 1) as f64 }).collect(),
    }
}

impl OperationalGrids {
    /// Stock grid over the storage bounds, loads over `[l_min, 1]`, and
    /// output levels over `[0, largest demand outcome]` for each hour.
    pub fn build(plant: &PlantSpec, noise: &NoiseModel, n_s: usize, n_l: usize, n_o: usize) -> Result<Self> {
        if n_s < 2 {
            return Err(Error::config("grids.stock_points", "need at least 2 points"));
        }
        if n_l < 1 {
            return Err(Error::config("grids.load_points", "need at least 1 point"));
        }
        if n_o < 2 {
            return Err(Error::config("grids.h_out_points", "need at least 2 points"));
        }
        let h_out = noise
            .stages
            .iter()
            .map(|st| {
                let top = st.demand.max();
                if top > 0.0 {
                    linspace(0.0, top, n_o)
                } else {
                    vec![0.0]
                }
            })
            .collect();
        Ok(OperationalGrids {
            stock: linspace(plant.s_min, plant.s_max, n_s),
            loads: linspace(plant.electrolyser.l_min, 1.0, n_l),
            h_out,
        })
    }

    pub fn validate(&self, plant: &PlantSpec) -> Result<()> {
        let n = self.stock.len();
        if n < 2 {
            return Err(Error::config("grids.stock", "need at least 2 points"));
        }
        if (self.stock[0] - plant.s_min).abs() > 1e-9 || (self.stock[n - 1] - plant.s_max).abs() > 1e-9 {
            return Err(Error::config("grids.stock", "must span the storage bounds"));
        }
        let ds = (plant.s_max - plant.s_min) / (n - 1) as f64;
        for (k, s) in self.stock.iter().enumerate() {
            if (s - (plant.s_min + ds * k as f64)).abs() > 1e-9 * (1.0 + s.abs()) {
                return Err(Error::config("grids.stock", "must be uniform"));
            }
        }
        if self.loads.is_empty() || self.loads.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("grids.loads", "must be nonempty and increasing"));
        }
        if self.loads.iter().any(|&l| !plant.admissible_load(l, Mode::Start)) {
            return Err(Error::config("grids.loads", "loads must lie in [l_min, 1]"));
        }
        if self.h_out.len() != plant.horizon {
            return Err(Error::config("grids.h_out", "need one output grid per hour"));
        }
        for g in &self.h_out {
            if g.is_empty() || g[0] < 0.0 || g.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::config("grids.h_out", "must be nonempty, nonnegative and increasing"));
            }
        }
        Ok(())
    }

    pub fn stock_step(&self) -> f64 {
        (self.stock[self.stock.len() - 1] - self.stock[0]) / (self.stock.len() - 1) as f64
    }

    /// Lower neighbour index and the weight of the upper neighbour.
    pub fn locate(&self, s: f64) -> (usize, f64) {
        let n = self.stock.len();
        let t = ((s - self.stock[0]) / self.stock_step()).clamp(0.0, (n - 1) as f64);
        let mut i = t as usize;
        if i >= n - 1 {
            i = n - 2;
        }
        let mut w = t - i as f64;
        if w < 1e-10 {
            w = 0.0;
        } else if w > 1.0 - 1e-10 {
            w = 1.0;
        }
        (i, w)
    }

    pub fn nearest(&self, s: f64) -> usize {
        let (i, w) = self.locate(s);
        if w > 0.5 {
            i + 1
        } else {
            i
        }
    }
}

/// One hourly operational decision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpControl {
    pub mode_cmd: Mode,
    pub load: f64,
    pub h_out: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Choice {
    option: u16,
    h_out: u16,
}

const NO_CHOICE: Choice = Choice { option: u16::MAX, h_out: u16::MAX };

/// Hourly production option reachable from a given previous mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct ProductionOption {
    pub cmd: Mode,
    pub load: f64,
    pub h_prod: f64,
    pub energy: f64,
}

/// Options from `prev` in tie-break order: COLD, IDLE, then START by load.
pub(crate) fn production_options(plant: &PlantSpec, loads: &[f64], prev: Mode) -> Vec<ProductionOption> {
    let mut out = Vec::with_capacity(loads.len() + 2);
    for cmd in [Mode::Cold, Mode::Idle] {
        out.push(ProductionOption {
            cmd,
            load: 0.0,
            h_prod: 0.0,
            energy: model::plant_consumption(0.0, prev, cmd, plant).expect("zero load is admissible"),
        });
    }
    for &l in loads {
        out.push(ProductionOption {
            cmd: Mode::Start,
            load: l,
            h_prod: model::hydrogen_production(l, prev, Mode::Start, plant).expect("grid load is admissible"),
            energy: model::plant_consumption(l, prev, Mode::Start, plant).expect("grid load is admissible"),
        });
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueFunctionO {
    pub lambda: Vec<f64>,
    pub grids: OperationalGrids,
    horizon: usize,
    /// `(h * n_s + i) * 3 + mode`, for h = 0..=T.
    values: Vec<f64>,
    choices: Vec<Choice>,
    options: [Vec<ProductionOption>; 3],
}

impl ValueFunctionO {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn idx(&self, h: usize, i: usize, m: Mode) -> usize {
        (h * self.grids.stock.len() + i) * 3 + m.index()
    }

    pub fn value(&self, h: usize, i: usize, m: Mode) -> f64 {
        self.values[self.idx(h, i, m)]
    }

    /// Linear interpolation in stock; `+inf` if either neighbour is infeasible.
    pub fn value_at(&self, h: usize, s: f64, m: Mode) -> f64 {
        let (i, w) = self.grids.locate(s);
        interp(&self.values, (h * self.grids.stock.len() + i) * 3 + m.index(), w)
    }

    pub fn control(&self, h: usize, i: usize, m: Mode) -> Option<OpControl> {
        let c = self.choices[self.idx(h, i, m)];
        if c == NO_CHOICE {
            return None;
        }
        let opt = self.options[m.index()][c.option as usize];
        Some(OpControl { mode_cmd: opt.cmd, load: opt.load, h_out: self.grids.h_out[h][c.h_out as usize] })
    }

    /// Rebuilds a table from exported values; argmin choices are not stored
    /// in the export, so `control` returns `None` on the result.
    pub fn from_values(lambda: Vec<f64>, grids: OperationalGrids, plant: &PlantSpec, values: Vec<f64>) -> Result<Self> {
        let horizon = lambda.len();
        let n = grids.stock.len();
        if values.len() != (horizon + 1) * n * 3 {
            return Err(Error::Parse { path: "value table".into(), reason: "unexpected number of entries".into() });
        }
        let options = Mode::ALL.map(|m| production_options(plant, &grids.loads, m));
        Ok(ValueFunctionO { lambda, grids, horizon, values, choices: vec![NO_CHOICE; horizon * n * 3], options })
    }

    /// Rows `(hour, stock, mode, value)` for export.
    pub fn rows(&self) -> impl Iterator<Item = (usize, f64, Mode, f64)> + '_ {
        let n = self.grids.stock.len();
        (0..=self.horizon).flat_map(move |h| {
            (0..n).flat_map(move |i| Mode::ALL.into_iter().map(move |m| (h, self.grids.stock[i], m, self.value(h, i, m))))
        })
    }
}

#[inline]
fn interp(values: &[f64], base: usize, w: f64) -> f64 {
    if w == 0.0 {
        values[base]
    } else if w == 1.0 {
        values[base + 3]
    } else {
        (1.0 - w) * values[base] + w * values[base + 3]
    }
}

/// Backward recursion:
/// `V_h(s, m) = min E_D[c_backup (D - h_out)+ + lambda_h (E^e + E^c) + V_{h+1}(s', cmd)]`
/// over controls whose next stock stays within bounds for every demand outcome.
pub fn solve_operational(
    lambda: &[f64],
    plant: &PlantSpec,
    noise: &NoiseModel,
    grids: &OperationalGrids,
) -> Result<ValueFunctionO> {
    let t_len = plant.horizon;
    if lambda.len() != t_len {
        return Err(Error::config("lambda", format!("expected {t_len} prices, got {}", lambda.len())));
    }
    if lambda.iter().any(|l| !l.is_finite()) {
        return Err(Error::config("lambda", "prices must be finite"));
    }
    noise.validate(t_len)?;
    grids.validate(plant)?;
    let n = grids.stock.len();
    let options = Mode::ALL.map(|m| production_options(plant, &grids.loads, m));
    let mut values = vec![0.0; (t_len + 1) * n * 3];
    let mut choices = vec![NO_CHOICE; t_len * n * 3];
    let ds = grids.stock_step();
    let s_lo = grids.stock[0];

    for h in (0..t_len).rev() {
        let dist = &noise.stages[h].demand;
        let d_max = dist.max();
        let d_min = dist.min();
        let outs = &grids.h_out[h];
        // Expected backup cost and served quantities per output level.
        let backup: Vec<f64> = outs.iter().map(|&o| dist.expect(|d| plant.c_backup * (d - o).max(0.0))).collect();
        let served: Vec<Vec<(f64, f64)>> = outs
            .iter()
            .map(|&o| dist.values.iter().zip(&dist.probs).map(|(&d, &p)| (d.min(o), p)).collect())
            .collect();
        let (done, rest) = values.split_at_mut((h + 1) * n * 3);
        let next = &rest[..n * 3];
        let cur = &mut done[h * n * 3..];
        let ch = &mut choices[h * n * 3..(h + 1) * n * 3];
        let lam = lambda[h];
        cur.par_chunks_mut(3).zip(ch.par_chunks_mut(3)).enumerate().for_each(|(i, (vals, chs))| {
            let s = grids.stock[i];
            for prev in Mode::ALL {
                let mut best = f64::INFINITY;
                let mut arg = NO_CHOICE;
                for (k, opt) in options[prev.index()].iter().enumerate() {
                    let base = lam * opt.energy;
                    let m_next = opt.cmd.index();
                    for (j, &o) in outs.iter().enumerate() {
                        let low = s + opt.h_prod - d_max.min(o);
                        let high = s + opt.h_prod - d_min.min(o);
                        if low < plant.s_min - STOCK_TOL || high > plant.s_max + STOCK_TOL {
                            continue;
                        }
                        let mut ev = 0.0;
                        for &(q, p) in &served[j] {
                            let sn = s + opt.h_prod - q;
                            let t = ((sn - s_lo) / ds).clamp(0.0, (n - 1) as f64);
                            let mut a = t as usize; // t >= 0, truncation is floor
                            if a >= n - 1 {
                                a = n - 2;
                            }
                            let mut w = t - a as f64;
                            if w < 1e-10 {
                                w = 0.0;
                            } else if w > 1.0 - 1e-10 {
                                w = 1.0;
                            }
                            ev += p * interp(next, a * 3 + m_next, w);
                        }
                        let v = base + backup[j] + ev;
                        if v < best {
                            best = v;
                            arg = Choice { option: k as u16, h_out: j as u16 };
                        }
                    }
                }
                vals[prev.index()] = best;
                chs[prev.index()] = arg;
            }
        });
    }
    Ok(ValueFunctionO { lambda: lambda.to_vec(), grids: grids.clone(), horizon: t_len, values, choices, options })
}

/// Control stored for the grid stock nearest to `state.s`.
pub fn operational_policy(v: &ValueFunctionO, s: f64, m: Mode, h: usize) -> Result<OpControl> {
    if h >= v.horizon {
        return Err(Error::Constraint(format!("hour {h} outside horizon {}", v.horizon)));
    }
    let i = v.grids.nearest(s);
    if !v.value(h, i, m).is_finite() {
        return Err(Error::InfeasibleControl(format!("no feasible operational control at hour {h}, stock {s}, mode {m}")));
    }
    v.control(h, i, m)
        .ok_or_else(|| Error::InfeasibleControl("value table carries no argmin controls".into()))
}

/// Forward propagation of the state law under the tabulated policy.
#[derive(Clone, Debug)]
pub struct Propagation {
    /// Expected electrolyser plus compressor draw per hour, kWh.
    pub consumption: Vec<f64>,
    /// Expected priced cost; equals the interpolated `V_0(s0, m0)`.
    pub expected_cost: f64,
    pub expected_backup: f64,
}

/// Propagates the exact law of (stock, mode) forward. Off-grid stocks are
/// split between neighbouring grid points with the interpolation weights,
/// which keeps the expected cost equal to the interpolated value function.
pub fn propagate(v: &ValueFunctionO, plant: &PlantSpec, noise: &NoiseModel, s0: f64, m0: Mode) -> Result<Propagation> {
    let t_len = v.horizon;
    let n = v.grids.stock.len();
    let mut mass = vec![0.0; n * 3];
    let (i0, w0) = v.grids.locate(s0);
    mass[i0 * 3 + m0.index()] += 1.0 - w0;
    if w0 > 0.0 {
        mass[(i0 + 1) * 3 + m0.index()] += w0;
    }
    let mut consumption = vec![0.0; t_len];
    let mut expected_cost = 0.0;
    let mut expected_backup = 0.0;
    let mut next = vec![0.0; n * 3];
    for h in 0..t_len {
        next.iter_mut().for_each(|x| *x = 0.0);
        let dist = &noise.stages[h].demand;
        for i in 0..n {
            for m in Mode::ALL {
                let pm = mass[i * 3 + m.index()];
                if pm == 0.0 {
                    continue;
                }
                let c = v.choices[v.idx(h, i, m)];
                if c == NO_CHOICE {
                    return Err(Error::InfeasibleControl(format!(
                        "reachable state without feasible control at hour {h}, stock {}, mode {m}",
                        v.grids.stock[i]
                    )));
                }
                let opt = v.options[m.index()][c.option as usize];
                let o = v.grids.h_out[h][c.h_out as usize];
                consumption[h] += pm * opt.energy;
                let backup = dist.expect(|d| plant.c_backup * (d - o).max(0.0));
                expected_backup += pm * backup;
                expected_cost += pm * (v.lambda[h] * opt.energy + backup);
                for (&d, &p) in dist.values.iter().zip(&dist.probs) {
                    let sn = model::step_stock(v.grids.stock[i], opt.h_prod, d, o);
                    let (a, w) = v.grids.locate(sn);
                    next[a * 3 + opt.cmd.index()] += pm * p * (1.0 - w);
                    if w > 0.0 {
                        next[(a + 1) * 3 + opt.cmd.index()] += pm * p * w;
                    }
                }
            }
        }
        std::mem::swap(&mut mass, &mut next);
    }
    Ok(Propagation { consumption, expected_cost, expected_backup })
}

/// Expected hourly electrolyser plus compressor consumption under the policy.
pub fn expected_consumption_profile(
    v: &ValueFunctionO,
    plant: &PlantSpec,
    noise: &NoiseModel,
    s0: f64,
    m0: Mode,
) -> Result<Vec<f64>> {
    Ok(propagate(v, plant, noise, s0, m0)?.consumption)
}
