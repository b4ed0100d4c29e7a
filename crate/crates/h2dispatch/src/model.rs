//! Plant physics, dynamics and costs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Cold,
    Idle,
    Start,
}

impl Mode {
    /// Also the tie-break order used by every argmin in the crate.
    pub const ALL: [Mode; 3] = [Mode::Cold, Mode::Idle, Mode::Start];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Mode {
        Mode::ALL[i]
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Cold => "cold",
            Mode::Idle => "idle",
            Mode::Start => "start",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cold" => Ok(Mode::Cold),
            "idle" => Ok(Mode::Idle),
            "start" => Ok(Mode::Start),
            other => Err(Error::config("mode", format!("unknown mode `{other}`"))),
        }
    }
}

/// Fraction of the hour left for production after switching from a mode
/// (row) to a mode command (column).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable(pub [[f64; 3]; 3]);

impl Default for TransitionTable {
    fn default() -> Self {
        TransitionTable([
            [1.0, 5.0 / 6.0, 99.0 / 120.0],
            [119.0 / 120.0, 1.0, 299.0 / 300.0],
            [119.0 / 120.0, 119.0 / 120.0, 1.0],
        ])
    }
}

impl TransitionTable {
    pub fn get(&self, prev: Mode, cmd: Mode) -> f64 {
        self.0[prev.index()][cmd.index()]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::config("phi_e", "curve has no points"));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::config("phi_e", "abscissae must be strictly increasing"));
            }
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::config("phi_e", "curve contains non-finite values"));
        }
        let (xs, ys) = points.into_iter().unzip();
        Ok(PiecewiseLinear { xs, ys })
    }

    pub fn constant(y: f64) -> Self {
        PiecewiseLinear { xs: vec![0.0, 1.0], ys: vec![y, y] }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    /// Linear interpolation, flat outside the domain.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let k = self.xs.partition_point(|&v| v <= x);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let (y0, y1) = (self.ys[k - 1], self.ys[k]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElectrolyserSpec {
    pub mu: TransitionTable,
    /// Unitary consumption curve, load fraction to kWh/kg.
    pub phi_e: PiecewiseLinear,
    pub m_max: f64,
    pub e_idle: f64,
    pub l_min: f64,
}

impl ElectrolyserSpec {
    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.mu.0.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::config(format!("electrolyser.mu[{i}][{j}]"), "must lie in [0, 1]"));
                }
            }
            if row[i] != 1.0 {
                return Err(Error::config(format!("electrolyser.mu[{i}][{i}]"), "diagonal must be 1"));
            }
        }
        if !(self.m_max > 0.0 && self.m_max.is_finite()) {
            return Err(Error::config("electrolyser.m_max_kg_per_h", "must be positive"));
        }
        if !(self.e_idle >= 0.0 && self.e_idle.is_finite()) {
            return Err(Error::config("electrolyser.e_idle_kwh_per_h", "must be nonnegative"));
        }
        if !(self.l_min > 0.0 && self.l_min <= 1.0) {
            return Err(Error::config("electrolyser.l_min", "must lie in (0, 1]"));
        }
        let (a, b) = self.phi_e.domain();
        if a > self.l_min || b < 1.0 {
            return Err(Error::config(
                "electrolyser.phi_e",
                format!("curve domain [{a}, {b}] must cover [{}, 1]", self.l_min),
            ));
        }
        if self.phi_e.points().any(|(_, y)| y < 0.0) {
            return Err(Error::config("electrolyser.phi_e", "consumption must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub electrolyser: ElectrolyserSpec,
    /// Compressor draw, kWh/kg.
    pub e_comp: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub ppa_cap: f64,
    pub c_ppa: f64,
    pub c_grid: Vec<f64>,
    pub c_backup: f64,
    pub c_subsidy: f64,
    pub p: f64,
    pub horizon: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub s0: f64,
    pub m0: Mode,
}

impl PlantSpec {
    pub fn validate(&self) -> Result<()> {
        self.electrolyser.validate()?;
        let finite = [
            ("plant.e_comp_kwh_per_kg", self.e_comp),
            ("plant.stock_min_kg", self.s_min),
            ("plant.stock_max_kg", self.s_max),
            ("costs.ppa_cap_kwh", self.ppa_cap),
            ("costs.c_ppa_eur_per_kwh", self.c_ppa),
            ("costs.c_backup_eur_per_kg", self.c_backup),
            ("costs.c_subsidy_eur", self.c_subsidy),
            ("plant.initial_stock_kg", self.s0),
        ];
        for (field, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(field, "must be finite"));
            }
        }
        if self.e_comp < 0.0 {
            return Err(Error::config("plant.e_comp_kwh_per_kg", "must be nonnegative"));
        }
        if !(0.0 <= self.s_min && self.s_min < self.s_max) {
            return Err(Error::config("plant.stock_min_kg", "need 0 <= stock_min < stock_max"));
        }
        if !(0.0 < self.p && self.p < 1.0) {
            return Err(Error::config("costs.subsidy_threshold", "must lie in (0, 1)"));
        }
        if self.horizon == 0 {
            return Err(Error::config("plant.horizon_hours", "must be positive"));
        }
        if self.c_grid.len() != self.horizon {
            return Err(Error::config(
                "profiles.c_grid_eur_per_kwh",
                format!("expected {} hourly prices, got {}", self.horizon, self.c_grid.len()),
            ));
        }
        if self.c_grid.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::config("profiles.c_grid_eur_per_kwh", "must be finite and nonnegative"));
        }
        if self.ppa_cap < 0.0 {
            return Err(Error::config("costs.ppa_cap_kwh", "must be nonnegative"));
        }
        if self.c_subsidy < 0.0 || self.c_backup < 0.0 {
            return Err(Error::config("costs", "subsidy and backup costs must be nonnegative"));
        }
        if !(self.s_min..=self.s_max).contains(&self.s0) {
            return Err(Error::config("plant.initial_stock_kg", "must lie within the storage bounds"));
        }
        check_betas(self.beta1, self.beta2, self)?;
        // The maximal consumption bound is attained at full load.
        let el = &self.electrolyser;
        let top = el.phi_e.eval(1.0);
        let steps = 1000;
        for k in 0..=steps {
            let l = el.l_min + (1.0 - el.l_min) * k as f64 / steps as f64;
            if l * el.phi_e.eval(l) > top + 1e-9 {
                return Err(Error::config(
                    "electrolyser.phi_e",
                    format!("load {l} draws more than full load; consumption must peak at load 1"),
                ));
            }
        }
        if el.e_idle > max_consumption(self) {
            return Err(Error::config("electrolyser.e_idle_kwh_per_h", "exceeds maximal consumption"));
        }
        Ok(())
    }

    pub fn admissible_load(&self, load: f64, cmd: Mode) -> bool {
        match cmd {
            Mode::Cold | Mode::Idle => load == 0.0,
            Mode::Start => load >= self.electrolyser.l_min - 1e-12 && load <= 1.0 + 1e-12,
        }
    }

    pub fn stock_within_bounds(&self, s: f64) -> bool {
        s >= self.s_min - STOCK_TOL && s <= self.s_max + STOCK_TOL
    }
}

/// Absolute slack used when checking stock bounds on floating-point stocks.
pub const STOCK_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub s: f64,
    pub m: Mode,
    pub p_stock: f64,
    pub q: f64,
}

impl State {
    pub fn initial(spec: &PlantSpec) -> State {
        State { s: spec.s0, m: spec.m0, p_stock: spec.ppa_cap, q: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub e_ppa: f64,
    pub e_grid: f64,
    pub load: f64,
    pub mode_cmd: Mode,
    pub h_out: f64,
}

/// Maximal hourly consumption of electrolyser and compressor.
pub fn max_consumption(spec: &PlantSpec) -> f64 {
    (spec.electrolyser.phi_e.eval(1.0) + spec.e_comp) * spec.electrolyser.m_max
}

/// Bounds `[Q_lo, Q_hi]` reachable by the cumulative electricity score.
pub fn cumulative_bounds(spec: &PlantSpec) -> (f64, f64) {
    let e_bar = max_consumption(spec);
    let t = spec.horizon as f64;
    (-t * spec.p * e_bar, t * (1.0 - spec.p) * e_bar)
}

/// Lower bound on grid electricity: export cannot exceed what PPA and PV deliver.
pub fn grid_floor(spec: &PlantSpec, pv_max: f64) -> f64 {
    -spec.ppa_cap - pv_max
}

fn check_load(load: f64, cmd: Mode, spec: &PlantSpec) -> Result<()> {
    if spec.admissible_load(load, cmd) {
        Ok(())
    } else {
        Err(Error::Constraint(format!("load {load} is not admissible under mode command {cmd}")))
    }
}

pub fn hydrogen_production(load: f64, m_prev: Mode, cmd: Mode, spec: &PlantSpec) -> Result<f64> {
    check_load(load, cmd, spec)?;
    let el = &spec.electrolyser;
    Ok(load * el.mu.get(m_prev, cmd) * el.m_max)
}

pub fn electrolyser_energy(load: f64, m_prev: Mode, cmd: Mode, spec: &PlantSpec) -> Result<f64> {
    let h = hydrogen_production(load, m_prev, cmd, spec)?;
    let el = &spec.electrolyser;
    Ok(match cmd {
        Mode::Cold => 0.0,
        Mode::Idle => el.e_idle * el.mu.get(m_prev, cmd),
        Mode::Start => el.phi_e.eval(load) * h,
    })
}

pub fn compressor_energy(h_prod: f64, spec: &PlantSpec) -> f64 {
    spec.e_comp * h_prod
}

/// Electrolyser plus compressor draw for one hour.
pub fn plant_consumption(load: f64, m_prev: Mode, cmd: Mode, spec: &PlantSpec) -> Result<f64> {
    let h = hydrogen_production(load, m_prev, cmd, spec)?;
    Ok(electrolyser_energy(load, m_prev, cmd, spec)? + compressor_energy(h, spec))
}

/// Next stock; unused output is re-injected. Bounds are checked by the caller.
pub fn step_stock(s: f64, h_prod: f64, demand: f64, h_out: f64) -> f64 {
    s + h_prod - demand.min(h_out)
}

pub fn step_cumulative(q: f64, e_grid: f64, e_ppa: f64, e_pv: f64, spec: &PlantSpec) -> f64 {
    let e_bar = max_consumption(spec);
    q + (1.0 - spec.p) * e_grid.max(0.0) - spec.p * e_bar.min(e_ppa + e_pv)
}

pub fn step_ppa(p_stock: f64, e_ppa: f64) -> Result<f64> {
    if e_ppa < 0.0 {
        return Err(Error::InfeasibleControl(format!("negative PPA draw {e_ppa}")));
    }
    if e_ppa > p_stock {
        return Err(Error::InfeasibleControl(format!("PPA draw {e_ppa} exceeds remaining budget {p_stock}")));
    }
    Ok(p_stock - e_ppa)
}

pub fn stage_cost(e_ppa: f64, e_grid: f64, demand: f64, h_out: f64, h: usize, spec: &PlantSpec) -> f64 {
    spec.c_ppa * e_ppa + spec.c_grid[h] * e_grid.max(0.0) + spec.c_backup * (demand - h_out).max(0.0)
}

pub fn subsidy_cost(q_t: f64, spec: &PlantSpec) -> f64 {
    if q_t <= 0.0 {
        -spec.c_subsidy
    } else {
        0.0
    }
}

/// Largest admissible `beta2`: `c_s / Q_hi`.
pub fn beta_upper_bound(spec: &PlantSpec) -> f64 {
    spec.c_subsidy / cumulative_bounds(spec).1
}

pub fn check_betas(beta1: f64, beta2: f64, spec: &PlantSpec) -> Result<()> {
    let bound = beta_upper_bound(spec);
    if !(0.0 <= beta1 && beta1 < beta2 && beta2 <= bound) {
        return Err(Error::config(
            "costs.beta",
            format!("need 0 <= beta1 < beta2 <= {bound} (c_s / Q_hi), got beta1={beta1}, beta2={beta2}"),
        ));
    }
    Ok(())
}

/// Convex surrogate of the subsidy cost.
pub fn surrogate_final_cost(q_t: f64, beta1: f64, beta2: f64, spec: &PlantSpec) -> Result<f64> {
    check_betas(beta1, beta2, spec)?;
    Ok(surrogate_unchecked(q_t, beta1, beta2, spec.c_subsidy))
}

pub(crate) fn surrogate_unchecked(q_t: f64, beta1: f64, beta2: f64, c_subsidy: f64) -> f64 {
    (beta1 * q_t).max(beta2 * q_t) - c_subsidy
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_spec(m_max: f64, e_comp: f64, phi1: f64) -> PlantSpec {
        PlantSpec {
            electrolyser: ElectrolyserSpec {
                mu: TransitionTable::default(),
                phi_e: PiecewiseLinear::constant(phi1),
                m_max,
                e_idle: 0.0,
                l_min: 0.1,
            },
            e_comp,
            s_min: 0.0,
            s_max: 10.0,
            ppa_cap: 0.0,
            c_ppa: 0.0,
            c_grid: vec![0.0],
            c_backup: 0.0,
            c_subsidy: 1.0,
            p: 0.5,
            horizon: 1,
            beta1: 0.0,
            beta2: 1e-6,
            s0: 0.0,
            m0: Mode::Cold,
        }
    }

    #[test]
    fn max_consumption_small_cases() {
        assert_eq!(max_consumption(&unit_spec(1.0, 0.0, 1.0)), 1.0);
        assert_eq!(max_consumption(&unit_spec(2.0, 3.0, 7.0)), 20.0);
    }

    #[test]
    fn piecewise_linear_eval() {
        let f = PiecewiseLinear::new(vec![(0.0, 1.0), (1.0, 3.0), (2.0, 3.0)]).unwrap();
        assert_eq!(f.eval(0.5), 2.0);
        assert_eq!(f.eval(1.5), 3.0);
        assert_eq!(f.eval(-1.0), 1.0);
        assert_eq!(f.eval(5.0), 3.0);
        assert!(PiecewiseLinear::new(vec![(1.0, 0.0), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("START".parse::<Mode>().unwrap(), Mode::Start);
        assert!("warm".parse::<Mode>().is_err());
        assert!(Mode::Cold < Mode::Idle && Mode::Idle < Mode::Start);
    }
}
