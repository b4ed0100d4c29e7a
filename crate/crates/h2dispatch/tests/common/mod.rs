#![allow(dead_code)]

use std::path::{Path, PathBuf};

use h2dispatch::config::{Problem, RunConfig};
use h2dispatch::model::{ElectrolyserSpec, Mode, PiecewiseLinear, PlantSpec, TransitionTable};
use h2dispatch::oracle::TinyInstance;

pub const TINY: [&str; 3] = ["deterministic", "two_outcome", "three_outcome"];

pub fn data_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

pub fn load(rel: &str) -> (RunConfig, Problem) {
    let cfg = RunConfig::load(&data_path(rel)).expect("bundled config parses");
    let pb = cfg.problem().expect("bundled config is valid");
    (cfg, pb)
}

pub fn tiny(name: &str) -> (RunConfig, TinyInstance) {
    let (cfg, pb) = load(&format!("tiny/{name}.toml"));
    let inst = TinyInstance::new(pb.plant, pb.noise, pb.grids, cfg.grids.ppa_points).expect("tiny instance");
    (cfg, inst)
}

/// Reference plant with a flat 55 kWh/kg curve: Ebar = (55 + 6) * 23 = 1403.
pub fn reference_plant(horizon: usize) -> PlantSpec {
    PlantSpec {
        electrolyser: ElectrolyserSpec {
            mu: TransitionTable::default(),
            phi_e: PiecewiseLinear::constant(55.0),
            m_max: 23.0,
            e_idle: 3.0,
            l_min: 0.1,
        },
        e_comp: 6.0,
        s_min: 25.0,
        s_max: 750.0,
        ppa_cap: 41650.0,
        c_ppa: 0.075,
        c_grid: vec![0.1; horizon],
        c_backup: 5000.0,
        c_subsidy: 5e6,
        p: 0.2,
        horizon,
        beta1: 0.0,
        beta2: 26.5,
        s0: 250.0,
        m0: Mode::Cold,
    }
}

/// Two-hour convex toy: buy `x_h` (cost alpha,
/// adds `a` to the score) or `y_h` (cost beta, removes `b`, capped) to cover
/// a consumption `u_h` in a box with linear utility, and pay
/// `max(k1 Q, k2 Q)` on the final score `Q = sum a x - b y`.
#[derive(Clone, Debug)]
pub struct PriceToy {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub y_cap: [f64; 2],
    pub u_lo: [f64; 2],
    pub u_hi: [f64; 2],
    pub u_cost: [f64; 2],
    pub k: (f64, f64),
}

pub struct PriceToySolution {
    pub x: [f64; 2],
    pub y: [f64; 2],
    /// Negated duals of the coverage rows `u_h - x_h - y_h <= 0`.
    pub lambda: [f64; 2],
    pub objective: f64,
    pub dual_objective: f64,
}

impl PriceToy {
    pub fn random(rng: &mut impl rand::Rng) -> Self {
        let mut r = |a: f64, b: f64| rng.gen_range(a..b);
        let lo = [r(1.0, 3.0), r(1.0, 3.0)];
        PriceToy {
            alpha: [r(0.2, 2.0), r(0.2, 2.0)],
            beta: [r(0.2, 2.0), r(0.2, 2.0)],
            a: [r(0.3, 2.0), r(0.3, 2.0)],
            b: [r(0.3, 2.0), r(0.3, 2.0)],
            y_cap: [r(0.5, 3.0), r(0.5, 3.0)],
            u_lo: lo,
            u_hi: [lo[0] + r(0.0, 2.0), lo[1] + r(0.0, 2.0)],
            u_cost: [r(-1.0, 0.5), r(-1.0, 0.5)],
            k: (r(0.0, 0.3), r(1.0, 6.0)),
        }
    }

    pub fn solve(&self) -> PriceToySolution {
        use h2dispatch::lp::{solve_lp, LinearProgram, LpStatus, Sense};
        let mut lp = LinearProgram::new();
        let mut x = [0; 2];
        let mut y = [0; 2];
        let mut u = [0; 2];
        for h in 0..2 {
            x[h] = lp.add_var(&format!("x{h}"), self.alpha[h], 0.0, f64::INFINITY);
            y[h] = lp.add_var(&format!("y{h}"), self.beta[h], 0.0, self.y_cap[h]);
            u[h] = lp.add_var(&format!("u{h}"), self.u_cost[h], self.u_lo[h], self.u_hi[h]);
        }
        let z = lp.add_var("z", 1.0, f64::NEG_INFINITY, f64::INFINITY);
        let cover: Vec<usize> =
            (0..2).map(|h| lp.add_row(vec![(u[h], 1.0), (x[h], -1.0), (y[h], -1.0)], Sense::Le, 0.0)).collect();
        for kk in [self.k.0, self.k.1] {
            let mut c = vec![(z, -1.0)];
            for h in 0..2 {
                c.push((x[h], kk * self.a[h]));
                c.push((y[h], -kk * self.b[h]));
            }
            lp.add_row(c, Sense::Le, 0.0);
        }
        let sol = solve_lp(&lp).expect("toy LP solves");
        assert_eq!(sol.status, LpStatus::Optimal);
        PriceToySolution {
            x: [sol.x[x[0]], sol.x[x[1]]],
            y: [sol.x[y[0]], sol.x[y[1]]],
            lambda: [-sol.duals[cover[0]], -sol.duals[cover[1]]],
            objective: sol.objective,
            dual_objective: sol.dual_objective(&lp),
        }
    }

    /// `(alpha b + beta a) / (a + b)` at hour `h`.
    pub fn bound(&self, h: usize) -> f64 {
        (self.alpha[h] * self.b[h] + self.beta[h] * self.a[h]) / (self.a[h] + self.b[h])
    }
}

/// Draws toys until `n` of them have both purchases positive at some hour;
/// returns each with that hour.
pub fn mixed_purchase_toys(n: usize, seed: u64) -> Vec<(PriceToy, usize, PriceToySolution)> {
    let mut rng = h2dispatch::scenario::stream_rng(seed, 0);
    let mut out = Vec::new();
    let mut tries = 0;
    while out.len() < n {
        tries += 1;
        assert!(tries < 100_000, "mixed purchases too rare");
        let toy = PriceToy::random(&mut rng);
        let sol = toy.solve();
        if let Some(h) = (0..2).find(|&h| sol.x[h] > 1e-7 && sol.y[h] > 1e-7) {
            out.push((toy, h, sol));
        }
    }
    out
}
