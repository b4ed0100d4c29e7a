mod common;

use common::{tiny, TINY};
use h2dispatch::oracle::*;
use h2dispatch::scenario::{DiscreteDistribution, NoiseModel, StageDistribution};
use h2dispatch::sddp::ElectricityData;
use h2dispatch::sdp::{propagate, solve_operational, OperationalGrids};
use h2dispatch::Error;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

/// One hour, demand 3 kg, a minimum batch far above the storage room.
fn one_hour(s0: f64) -> TinyInstance {
    let (cfg, inst) = tiny("deterministic");
    let mut plant = inst.plant.clone();
    plant.horizon = 1;
    plant.c_grid.truncate(1);
    plant.electrolyser.m_max = 100.0;
    plant.electrolyser.l_min = 1.0;
    plant.s0 = s0;
    plant.beta2 = 0.004;
    let noise = NoiseModel::new(vec![StageDistribution {
        demand: DiscreteDistribution::point(3.0),
        pv: DiscreteDistribution::point(10.0),
    }]);
    let grids = OperationalGrids::build(&plant, &noise, 9, 1, 3).unwrap();
    TinyInstance::new(plant, noise, grids, cfg.grids.ppa_points).unwrap()
}

#[test]
fn single_hour_without_production_pays_backup() {
    let empty = one_hour(0.0);
    let p = &empty.plant;
    // PV alone keeps the score negative, so the subsidy is granted.
    assert!(close(exact_primal(&empty).unwrap(), p.c_backup * 3.0 - p.c_subsidy, 1e-12));
    let full = one_hour(8.0);
    assert!(close(exact_primal(&full).unwrap(), -p.c_subsidy, 1e-12));
}

#[test]
fn primal_is_invariant_under_outcome_relabeling() {
    for name in ["two_outcome", "three_outcome"] {
        let (_, inst) = tiny(name);
        let mut flipped = inst.clone();
        for st in &mut flipped.noise.stages {
            for d in [&mut st.demand, &mut st.pv] {
                d.values.reverse();
                d.probs.reverse();
            }
        }
        let a = exact_primal(&inst).unwrap();
        let b = exact_primal(&flipped).unwrap();
        assert!(close(a, b, 1e-12), "{name}: {a} vs {b}");
        let l = random_lambdas(&inst.plant, 1, 2).remove(0);
        assert!(close(exact_dual_eval(&inst, &l).unwrap().value, exact_dual_eval(&flipped, &l).unwrap().value, 1e-12));
    }
}

#[test]
fn weak_duality_at_random_prices() {
    for name in TINY {
        let (_, inst) = tiny(name);
        let primal = exact_primal(&inst).unwrap();
        for l in random_lambdas(&inst.plant, 20, 13) {
            let d = exact_dual_eval(&inst, &l).unwrap();
            assert!(d.value <= primal + CHAIN_TOL, "{name}: {} > {primal}", d.value);
        }
    }
}

#[test]
fn free_electricity_leaves_backup_cost_only() {
    for name in TINY {
        let (_, inst) = tiny(name);
        let zero = vec![0.0; inst.plant.horizon];
        let exact = exact_operational(&inst, &zero).unwrap();
        let vo = solve_operational(&zero, &inst.plant, &inst.noise, &inst.grids).unwrap();
        let prop = propagate(&vo, &inst.plant, &inst.noise, inst.plant.s0, inst.plant.m0).unwrap();
        assert!(close(exact, prop.expected_backup, 1e-9), "{name}: {exact} vs {}", prop.expected_backup);
        assert!(exact >= 0.0);
    }
}

#[test]
fn dual_parts_add_up_and_surrogate_is_lower() {
    for name in TINY {
        let (_, inst) = tiny(name);
        let data = ElectricityData::new(&inst.plant, &inst.noise).unwrap();
        for l in random_lambdas(&inst.plant, 5, 21) {
            let d = exact_dual_eval(&inst, &l).unwrap();
            assert_eq!(d.value, d.operational + d.electricity);
            assert!(close(d.operational, exact_operational(&inst, &l).unwrap(), 0.0));
            assert!(exact_electricity_surrogate(&data, &l).unwrap() <= d.electricity + CHAIN_TOL);
        }
    }
}

#[test]
fn chain_holds_on_bundled_instances() {
    for name in TINY {
        let (cfg, inst) = tiny(name);
        for r in chain_suite(&inst, 4, cfg.solver.sddp_iterations, cfg.solver.seed).unwrap() {
            assert!(r.holds(), "{name}: {r:?}");
            assert!(r.dual_surrogate <= r.dual_exact + CHAIN_TOL);
            assert!(r.dual_exact <= r.primal + CHAIN_TOL);
            assert!(r.primal <= r.policy + CHAIN_TOL);
        }
    }
}

#[test]
fn oversized_instances_are_refused() {
    let (_, inst) = tiny("deterministic");
    let mut plant = inst.plant.clone();
    plant.horizon = 5;
    plant.c_grid.push(0.1);
    plant.beta2 = 0.02;
    let mut noise = inst.noise.clone();
    noise.stages.push(noise.stages[0].clone());
    let grids = OperationalGrids::build(&plant, &noise, 5, 2, 2).unwrap();
    let r = TinyInstance::new(plant, noise, grids, 3);
    assert!(matches!(r, Err(Error::Budget(_))), "{:?}", r.err());

    let mut noise = inst.noise.clone();
    noise.stages[0].pv = DiscreteDistribution::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.25; 4]).unwrap();
    assert!(matches!(TinyInstance::new(inst.plant.clone(), noise, inst.grids.clone(), 3), Err(Error::Budget(_))));
}
