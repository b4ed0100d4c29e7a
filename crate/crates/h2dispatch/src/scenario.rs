//! Stagewise-independent finite noise on hourly demand and PV output.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite distribution of one scalar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(Error::config("noise", "outcomes and probabilities must be nonempty and of equal length"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config("noise", "outcomes must be finite and nonnegative"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::config("noise", "probabilities must be nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config("noise", format!("probabilities sum to {total}, expected 1")));
        }
        Ok(DiscreteDistribution { values, probs })
    }

    pub fn point(v: f64) -> Self {
        DiscreteDistribution { values: vec![v], probs: vec![1.0] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.values.iter().zip(&self.probs).map(|(&v, p)| p * f(v)).sum()
    }

    pub fn sample_index<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Rounding left `u` above the last partial sum.
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

/// Outcomes `factor * mu`, one per factor.
pub fn build_scaled_distribution(mu: f64, factors: &[f64], probs: &[f64]) -> Result<DiscreteDistribution> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::config("profiles", format!("mean {mu} must be finite and nonnegative")));
    }
    if factors.len() != probs.len() {
        return Err(Error::config("noise", "factors and probabilities differ in length"));
    }
    DiscreteDistribution::new(factors.iter().map(|f| f * mu).collect(), probs.to_vec())
}

/// Demand (kg) and PV (kWh) realized during one hour, sampled independently.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageDistribution {
    pub demand: DiscreteDistribution,
    pub pv: DiscreteDistribution,
}

impl StageDistribution {
    pub fn joint(&self) -> (Vec<(f64, f64)>, Vec<f64>) {
        let mut outcomes = Vec::with_capacity(self.demand.len() * self.pv.len());
        let mut probs = Vec::with_capacity(outcomes.capacity());
        for (d, pd) in self.demand.values.iter().zip(&self.demand.probs) {
            for (e, pe) in self.pv.values.iter().zip(&self.pv.probs) {
                outcomes.push((*d, *e));
                probs.push(pd * pe);
            }
        }
        (outcomes, probs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub stages: Vec<StageDistribution>,
    pub independent: bool,
}

impl NoiseModel {
    pub fn new(stages: Vec<StageDistribution>) -> Self {
        NoiseModel { stages, independent: true }
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.stages.len() != horizon {
            return Err(Error::config(
                "noise",
                format!("expected {horizon} hourly distributions, got {}", self.stages.len()),
            ));
        }
        if !self.independent {
            return Err(Error::config("noise.independent", "only independent demand and PV marginals are supported"));
        }
        for (h, st) in self.stages.iter().enumerate() {
            DiscreteDistribution::new(st.demand.values.clone(), st.demand.probs.clone())
                .map_err(|e| Error::config(format!("noise.hour[{h}].demand"), e.to_string()))?;
            DiscreteDistribution::new(st.pv.values.clone(), st.pv.probs.clone())
                .map_err(|e| Error::config(format!("noise.hour[{h}].pv"), e.to_string()))?;
        }
        Ok(())
    }

    pub fn pv_max(&self) -> f64 {
        self.stages.iter().map(|s| s.pv.max()).fold(0.0, f64::max)
    }

    pub fn support(&self, h: usize) -> Result<(Vec<(f64, f64)>, Vec<f64>)> {
        self.stages
            .get(h)
            .map(StageDistribution::joint)
            .ok_or_else(|| Error::Constraint(format!("hour {h} outside horizon {}", self.stages.len())))
    }

    pub fn is_deterministic(&self) -> bool {
        self.stages.iter().all(|s| s.demand.len() == 1 && s.pv.len() == 1)
    }

    pub fn sample_path(&self, seed: u64) -> Vec<(f64, f64)> {
        self.sample_path_with(&mut stream_rng(seed, 0))
    }

    pub fn sample_path_with<R: Rng>(&self, rng: &mut R) -> Vec<(f64, f64)> {
        self.stages
            .iter()
            .map(|st| {
                let d = st.demand.values[st.demand.sample_index(rng)];
                let e = st.pv.values[st.pv.sample_index(rng)];
                (d, e)
            })
            .collect()
    }

    /// PV only, for the electricity subproblem.
    pub fn sample_pv_path_with<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        self.stages.iter().map(|st| st.pv.sample_index(rng)).collect()
    }
}

/// Independent generator for one (seed, stream) pair; the stream keys
/// components and Monte Carlo paths so results do not depend on scheduling.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Hourly mean profiles and grid prices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profiles {
    pub mu_pv: Vec<f64>,
    pub mu_d: Vec<f64>,
    pub c_grid: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileRow {
    hour: usize,
    mu_pv_kwh: f64,
    mu_d_kg: f64,
    c_grid_eur_per_kwh: f64,
}

impl Profiles {
    pub fn len(&self) -> usize {
        self.c_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c_grid.is_empty()
    }

    pub fn read_csv(path: &Path) -> Result<Profiles> {
        let shown = path.display().to_string();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse { path: shown.clone(), reason: e.to_string() })?;
        let mut out = Profiles { mu_pv: vec![], mu_d: vec![], c_grid: vec![] };
        for (k, rec) in rdr.deserialize::<ProfileRow>().enumerate() {
            let row = rec.map_err(|e| Error::Parse { path: shown.clone(), reason: e.to_string() })?;
            if row.hour != k {
                return Err(Error::Parse { path: shown, reason: format!("row {k} has hour {}", row.hour) });
            }
            out.mu_pv.push(row.mu_pv_kwh);
            out.mu_d.push(row.mu_d_kg);
            out.c_grid.push(row.c_grid_eur_per_kwh);
        }
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let shown = path.display().to_string();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse { path: shown.clone(), reason: e.to_string() })?;
        for h in 0..self.len() {
            w.serialize(ProfileRow {
                hour: h,
                mu_pv_kwh: self.mu_pv[h],
                mu_d_kg: self.mu_d[h],
                c_grid_eur_per_kwh: self.c_grid[h],
            })
            .map_err(|e| Error::Parse { path: shown.clone(), reason: e.to_string() })?;
        }
        w.flush().map_err(|e| Error::Io { path: shown, source: e })?;
        Ok(())
    }
}

/// Noise model with `factor * mean` outcomes around the hourly profiles.
pub fn scaled_noise_model(
    profiles: &Profiles,
    demand_factors: &[f64],
    demand_probs: &[f64],
    pv_factors: &[f64],
    pv_probs: &[f64],
) -> Result<NoiseModel> {
    let mut stages = Vec::with_capacity(profiles.len());
    for h in 0..profiles.len() {
        stages.push(StageDistribution {
            demand: build_scaled_distribution(profiles.mu_d[h], demand_factors, demand_probs)
                .map_err(|e| Error::config(format!("profiles.mu_d_kg[{h}]"), e.to_string()))?,
            pv: build_scaled_distribution(profiles.mu_pv[h], pv_factors, pv_probs)
                .map_err(|e| Error::config(format!("profiles.mu_pv_kwh[{h}]"), e.to_string()))?,
        });
    }
    Ok(NoiseModel::new(stages))
}
