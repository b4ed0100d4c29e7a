mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::data_path;
use h2dispatch::config::RunConfig;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_h2dispatch")).args(args).output().expect("binary runs")
}

fn run_in(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut a = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    a.extend_from_slice(extra);
    run(&a)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

fn rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn solve_simulate_report_on_tiny_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data_path("tiny/two_outcome.toml");
    let o = run_in("solve", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path();
    assert_eq!(
        header(&out.join("ascent_report.csv")),
        "iteration,dual_value,op_value,elec_bound,grad_norm,step,wall_time_s,policy_mean_k,policy_mean_khat,policy_half_width_k,subsidy_rate,invariant_violations"
    );
    assert_eq!(rows(&out.join("ascent_report.csv")), 11);
    assert_eq!(header(&out.join("lambda.csv")), "hour,lambda_eur_per_kwh");
    assert_eq!(rows(&out.join("lambda.csv")), 3);
    assert_eq!(header(&out.join("value_function.csv")), "hour,stock_kg,mode,value_eur");
    assert_eq!(header(&out.join("cuts.csv")), "stage,intercept,slope_p,slope_q");
    assert!(out.join("manifest.toml").exists());

    let o = run_in("simulate", &cfg, out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        header(&out.join("gap_report.csv")),
        "source,iteration,dual_value,policy_value,gap_abs,gap_rel,dual_shifted,policy_shifted,gap_rel_shifted,mc_half_width,subsidy_rate,violation"
    );
    assert_eq!(
        header(&out.join("trajectories.csv")),
        "path,hour,stock_kg,mode,p_stock_kwh,q_kwh,mode_cmd,load,h_out_kg,e_ppa_kwh,e_grid_kwh,demand_kg,e_pv_kwh,consumption_kwh,stage_cost_eur"
    );
    // Two kept paths of three hours.
    assert_eq!(rows(&out.join("trajectories.csv")), 6);
    assert_eq!(header(&out.join("invariants.csv")), "check,violations");
    let inv = std::fs::read_to_string(out.join("invariants.csv")).unwrap();
    assert!(inv.lines().skip(1).all(|l| l.ends_with(",0")), "{inv}");

    let first = std::fs::read(out.join("gap_report.csv")).unwrap();
    let o = run_in("simulate", &cfg, out, &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(out.join("gap_report.csv")).unwrap(), first);

    let o = run_in("report", &cfg, out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!o.stdout.is_empty());
}

#[test]
fn deterministic_config_keeps_one_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data_path("tiny/deterministic.toml");
    assert_eq!(run_in("solve", &cfg, dir.path(), &["--iterations", "2"]).status.code(), Some(0));
    let o = run_in("simulate", &cfg, dir.path(), &["--iterations", "2", "--paths", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(rows(&dir.path().join("trajectories.csv")), 4);
}

#[test]
fn zero_iterations_emit_initial_prices() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data_path("tiny/deterministic.toml");
    let o = run_in("solve", &cfg, dir.path(), &["--iterations", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(rows(&dir.path().join("ascent_report.csv")), 1);
    let text = std::fs::read_to_string(dir.path().join("lambda.csv")).unwrap();
    // p = 0.2, c_ppa = 0.075 and the hourly grid prices of the profile.
    let want = [0.08, 0.07, 0.1, 0.09];
    for (line, w) in text.lines().skip(1).zip(want) {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((v - w).abs() < 1e-12, "{line}");
    }
}

#[test]
fn missing_config_is_a_named_validation_error() {
    let o = run(&["solve", "--config", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/run.toml"), "{}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::load(&data_path("tiny/deterministic.toml")).unwrap();
    cfg.profiles.csv = dir.path().join("gone.csv");
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, cfg.to_toml_string()).unwrap();
    let o = run_in("solve", &p, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gone.csv"), "{}", stderr(&o));

    let o = run(&["solve"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_field_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::load(&data_path("tiny/deterministic.toml")).unwrap();
    cfg.costs.beta2_eur_per_kwh = 10.0;
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, cfg.to_toml_string()).unwrap();
    let o = run_in("solve", &p, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("costs.beta"), "{}", stderr(&o));
}

#[test]
fn stale_artifacts_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data_path("tiny/two_outcome.toml");
    let out = dir.path();
    assert_eq!(run_in("simulate", &cfg, out, &[]).status.code(), Some(2));
    assert_eq!(run_in("solve", &cfg, out, &["--iterations", "2"]).status.code(), Some(0));

    // Different seed or iteration count than the solve.
    let o = run_in("simulate", &cfg, out, &["--iterations", "2", "--seed", "99"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert_eq!(run_in("simulate", &cfg, out, &[]).status.code(), Some(2));
    // Simulation-only knobs do not invalidate the solve.
    assert_eq!(run_in("simulate", &cfg, out, &["--iterations", "2", "--paths", "20"]).status.code(), Some(0));

    let lp = out.join("lambda.csv");
    let text = std::fs::read_to_string(&lp).unwrap();
    std::fs::write(&lp, text.replacen(",0.", ",1.", 1)).unwrap();
    let o = run_in("simulate", &cfg, out, &["--iterations", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lambda.csv"), "{}", stderr(&o));
}

#[test]
fn oracle_passes_on_bundled_tiny_configs() {
    for name in common::TINY {
        let dir = tempfile::tempdir().unwrap();
        let o = run_in("oracle", &data_path(&format!("tiny/{name}.toml")), dir.path(), &[]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
        let rep = dir.path().join("oracle_report.csv");
        assert_eq!(
            header(&rep),
            "lambda_index,dual_surrogate,dual_exact,primal,policy,op_sdp,op_exact,elec_sddp,elec_surrogate_exact,elec_subsidy_exact,holds"
        );
        assert_eq!(rows(&rep), 21);
    }
}

#[test]
fn oracle_refuses_full_scale_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in("oracle", &data_path("default.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn configs_round_trip() {
    for rel in ["default.toml", "coarse.toml", "tiny/deterministic.toml", "tiny/two_outcome.toml", "tiny/three_outcome.toml"] {
        let cfg = RunConfig::load(&data_path(rel)).unwrap();
        let again = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg, "{rel}");
    }
}

#[test]
fn solve_writes_effective_config_that_reparses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = data_path("tiny/three_outcome.toml");
    assert_eq!(run_in("solve", &cfg_path, dir.path(), &["--iterations", "1", "--seed", "5"]).status.code(), Some(0));
    let written = RunConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(written.solver.seed, 5);
    assert_eq!(written.solver.ascent_iterations, 1);
    let a = std::fs::read(dir.path().join("lambda.csv")).unwrap();
    assert_eq!(run_in("solve", &cfg_path, dir.path(), &["--iterations", "1", "--seed", "5"]).status.code(), Some(0));
    assert_eq!(std::fs::read(dir.path().join("lambda.csv")).unwrap(), a);
}
