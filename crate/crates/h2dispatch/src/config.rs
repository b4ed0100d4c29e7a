//! Run configuration (TOML with units in key names) and data loading.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dual::{StepSchedule, SubproblemSettings};
use crate::error::{Error, Result};
use crate::model::{ElectrolyserSpec, Mode, PiecewiseLinear, PlantSpec, TransitionTable};
use crate::scenario::{scaled_noise_model, DiscreteDistribution, NoiseModel, Profiles, StageDistribution};
use crate::sdp::OperationalGrids;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub horizon_hours: usize,
    pub initial_stock_kg: f64,
    pub initial_mode: Mode,
    pub stock_min_kg: f64,
    pub stock_max_kg: f64,
    pub compressor_kwh_per_kg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectrolyserSection {
    pub m_max_kg_per_h: f64,
    pub e_idle_kwh_per_h: f64,
    pub l_min: f64,
    /// CSV with columns `load,kwh_per_kg`.
    pub phi_e_csv: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<[[f64; 3]; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub c_ppa_eur_per_kwh: f64,
    pub c_backup_eur_per_kg: f64,
    pub c_subsidy_eur: f64,
    pub subsidy_threshold: f64,
    pub ppa_cap_kwh: f64,
    pub beta1_eur_per_kwh: f64,
    pub beta2_eur_per_kwh: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfilesSection {
    /// CSV with columns `hour,mu_pv_kwh,mu_d_kg,c_grid_eur_per_kwh`.
    pub csv: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HourNoise {
    pub demand_kg: Vec<f64>,
    pub demand_probs: Vec<f64>,
    pub pv_kwh: Vec<f64>,
    pub pv_probs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Demand and PV drawn independently within an hour.
    pub independent: bool,
    #[serde(default)]
    pub demand_factors: Vec<f64>,
    #[serde(default)]
    pub demand_probs: Vec<f64>,
    #[serde(default)]
    pub pv_factors: Vec<f64>,
    #[serde(default)]
    pub pv_probs: Vec<f64>,
    /// Explicit per-hour outcomes; replaces the scaled profile model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hours: Option<Vec<HourNoise>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub stock_points: usize,
    pub load_points: usize,
    pub h_out_points: usize,
    pub ppa_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub seed: u64,
    pub ascent_iterations: usize,
    pub initial_step: f64,
    pub halving_period: usize,
    pub sddp_iterations: usize,
    pub gradient_paths: usize,
    pub policy_paths: usize,
    /// Evaluate the policy every this many ascent iterations (0: never).
    pub policy_eval_every: usize,
    pub keep_trajectories: usize,
    /// Random multipliers checked by the oracle command besides the initial one.
    pub oracle_lambdas: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantSection,
    pub electrolyser: ElectrolyserSection,
    pub costs: CostSection,
    pub profiles: ProfilesSection,
    pub noise: NoiseSection,
    pub grids: GridSection,
    pub solver: SolverSection,
    pub output: OutputSection,
}

/// Everything a run needs, resolved from a configuration.
#[derive(Clone, Debug)]
pub struct Problem {
    pub plant: PlantSpec,
    pub noise: NoiseModel,
    pub grids: OperationalGrids,
    pub profiles: Profiles,
    pub schedule: StepSchedule,
    pub settings: SubproblemSettings,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<RunConfig> {
        toml::from_str(s).map_err(|e| Error::Parse { path: "config".into(), reason: e.to_string() })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Reads a config file; relative data paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Parse { path: path.display().to_string(), reason: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.electrolyser.phi_e_csv);
        fix(&mut cfg.profiles.csv);
        fix(&mut cfg.output.dir);
        Ok(cfg)
    }

    pub fn schedule(&self) -> StepSchedule {
        StepSchedule {
            iterations: self.solver.ascent_iterations,
            initial_step: self.solver.initial_step,
            halving_period: self.solver.halving_period,
        }
    }

    pub fn settings(&self) -> SubproblemSettings {
        SubproblemSettings { sddp_iterations: self.solver.sddp_iterations, gradient_paths: self.solver.gradient_paths }
    }

    pub fn problem(&self) -> Result<Problem> {
        for (field, p) in [("electrolyser.phi_e_csv", &self.electrolyser.phi_e_csv), ("profiles.csv", &self.profiles.csv)] {
            if !p.exists() {
                return Err(Error::config(field, format!("file {} does not exist", p.display())));
            }
        }
        let phi_e = read_phi_e(&self.electrolyser.phi_e_csv)?;
        let profiles = Profiles::read_csv(&self.profiles.csv)?;
        let t = self.plant.horizon_hours;
        if profiles.len() < t {
            return Err(Error::config("profiles.csv", format!("{} rows for a {t}-hour horizon", profiles.len())));
        }
        let profiles = Profiles {
            mu_pv: profiles.mu_pv[..t].to_vec(),
            mu_d: profiles.mu_d[..t].to_vec(),
            c_grid: profiles.c_grid[..t].to_vec(),
        };
        let plant = PlantSpec {
            electrolyser: ElectrolyserSpec {
                mu: self.electrolyser.mu.map(TransitionTable).unwrap_or_default(),
                phi_e,
                m_max: self.electrolyser.m_max_kg_per_h,
                e_idle: self.electrolyser.e_idle_kwh_per_h,
                l_min: self.electrolyser.l_min,
            },
            e_comp: self.plant.compressor_kwh_per_kg,
            s_min: self.plant.stock_min_kg,
            s_max: self.plant.stock_max_kg,
            ppa_cap: self.costs.ppa_cap_kwh,
            c_ppa: self.costs.c_ppa_eur_per_kwh,
            c_grid: profiles.c_grid.clone(),
            c_backup: self.costs.c_backup_eur_per_kg,
            c_subsidy: self.costs.c_subsidy_eur,
            p: self.costs.subsidy_threshold,
            horizon: t,
            beta1: self.costs.beta1_eur_per_kwh,
            beta2: self.costs.beta2_eur_per_kwh,
            s0: self.plant.initial_stock_kg,
            m0: self.plant.initial_mode,
        };
        plant.validate()?;
        if plant.c_grid.iter().any(|&c| c < 0.0) {
            return Err(Error::config("profiles.c_grid_eur_per_kwh", "prices must be nonnegative"));
        }
        let mut noise = match &self.noise.hours {
            Some(hours) => {
                if hours.len() != t {
                    return Err(Error::config("noise.hours", format!("expected {t} entries, got {}", hours.len())));
                }
                let mut stages = Vec::with_capacity(t);
                for (h, hn) in hours.iter().enumerate() {
                    stages.push(StageDistribution {
                        demand: DiscreteDistribution::new(hn.demand_kg.clone(), hn.demand_probs.clone())
                            .map_err(|e| Error::config(format!("noise.hours[{h}].demand"), e.to_string()))?,
                        pv: DiscreteDistribution::new(hn.pv_kwh.clone(), hn.pv_probs.clone())
                            .map_err(|e| Error::config(format!("noise.hours[{h}].pv"), e.to_string()))?,
                    });
                }
                NoiseModel::new(stages)
            }
            None => scaled_noise_model(
                &profiles,
                &self.noise.demand_factors,
                &self.noise.demand_probs,
                &self.noise.pv_factors,
                &self.noise.pv_probs,
            )?,
        };
        noise.independent = self.noise.independent;
        noise.validate(t)?;
        let g = &self.grids;
        let grids = OperationalGrids::build(&plant, &noise, g.stock_points, g.load_points, g.h_out_points)?;
        if g.ppa_points == 0 {
            return Err(Error::config("grids.ppa_points", "need at least one point"));
        }
        let schedule = self.schedule();
        schedule.validate()?;
        let settings = self.settings();
        if settings.gradient_paths == 0 {
            return Err(Error::config("solver.gradient_paths", "need at least one path"));
        }
        if self.solver.policy_paths == 0 {
            return Err(Error::config("solver.policy_paths", "need at least one path"));
        }
        Ok(Problem { plant, noise, grids, profiles, schedule, settings })
    }
}

#[derive(Deserialize)]
struct PhiRow {
    load: f64,
    kwh_per_kg: f64,
}

pub fn read_phi_e(path: &Path) -> Result<PiecewiseLinear> {
    let shown = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse { path: shown.clone(), reason: e.to_string() })?;
    let mut pts = Vec::new();
    for rec in rdr.deserialize::<PhiRow>() {
        let r = rec.map_err(|e| Error::Parse { path: shown.clone(), reason: e.to_string() })?;
        pts.push((r.load, r.kwh_per_kg));
    }
    PiecewiseLinear::new(pts).map_err(|e| Error::config("electrolyser.phi_e_csv", e.to_string()))
}
