//! Command-line driver: `solve`, `simulate`, `oracle` and `report`.
//!
//! Every command reads one TOML configuration. `solve` writes the ascent
//! artifacts and a manifest of their hashes; `simulate` and `report` refuse
//! to run on artifacts whose manifest does not match the current
//! configuration or whose files were modified since.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Problem, RunConfig};
use crate::dual::{ascend_with, derive_seed, AscentReport, PolicyEval, SEED_POLICY};
use crate::error::{Error, Result};
use crate::model::Mode;
use crate::oracle::{chain_suite, TinyInstance};
use crate::policy::{gap_report, simulate_policy, GapReport, PolicyContext, PolicyStats};
use crate::sddp::{Cut, CutSet};
use crate::sdp::ValueFunctionO;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CERTIFICATION: i32 = 4;

pub const ASCENT_REPORT: &str = "ascent_report.csv";
pub const LAMBDA: &str = "lambda.csv";
pub const VALUE_FUNCTION: &str = "value_function.csv";
pub const CUTS: &str = "cuts.csv";
pub const MANIFEST: &str = "manifest.toml";
pub const EFFECTIVE_CONFIG: &str = "config.toml";
pub const GAP_REPORT: &str = "gap_report.csv";
pub const TRAJECTORIES: &str = "trajectories.csv";
pub const INVARIANTS: &str = "invariants.csv";
pub const ORACLE_REPORT: &str = "oracle_report.csv";

#[derive(Debug, Parser)]
#[command(name = "h2dispatch", version, about = "Price-decomposition solver for a hydrogen plant")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the dual ascent and write multipliers, value tables and cuts.
    Solve(CommonArgs),
    /// Simulate the policy at the best multiplier and write the gap report.
    Simulate(CommonArgs),
    /// Check the bound chain on a tiny instance against exact enumeration.
    Oracle(CommonArgs),
    /// Summarize existing artifacts.
    Report(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "N")]
    pub iterations: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub paths: Option<usize>,
}

impl CommonArgs {
    /// Loads the configuration and applies command-line overrides.
    pub fn resolve(&self) -> Result<RunConfig> {
        if !self.config.exists() {
            return Err(Error::config("--config", format!("file {} does not exist", self.config.display())));
        }
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.solver.seed = s;
        }
        if let Some(n) = self.iterations {
            cfg.solver.ascent_iterations = n;
        }
        if let Some(d) = &self.out {
            cfg.output.dir = d.clone();
        }
        if let Some(n) = self.paths {
            cfg.solver.policy_paths = n;
        }
        Ok(cfg)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Parse { .. } | Error::Io { .. } | Error::Budget(_) | Error::Stale(_) => {
            EXIT_VALIDATION
        }
        Error::Constraint(_) | Error::InfeasibleControl(_) | Error::Lp { .. } | Error::Solver(_) => EXIT_SOLVER,
        Error::Certification(_) => EXIT_CERTIFICATION,
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Messages go to stdout, errors to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let res = match &cli.command {
        Command::Solve(a) => a.resolve().and_then(|c| cmd_solve(&c)).map(|s| s.to_string()),
        Command::Simulate(a) => a.resolve().and_then(|c| cmd_simulate(&c)).map(|s| s.to_string()),
        Command::Oracle(a) => a.resolve().and_then(|c| cmd_oracle(&c)).map(|s| s.to_string()),
        Command::Report(a) => a.resolve().and_then(|c| cmd_report(&c)),
    };
    match res {
        Ok(msg) => {
            println!("{msg}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io { path: path.display().to_string(), source: e }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Parse { path: path.display().to_string(), reason: e.to_string() }
}

fn write_rows<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_rows<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    if !path.exists() {
        return Err(Error::Stale(format!("{} is missing; run `solve` first", path.display())));
    }
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().map(|x| x.map_err(csv_err(path))).collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn file_sha(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
}

/// Hash of everything the solve artifacts depend on: the configuration
/// without output and simulation-only knobs, plus the data file contents.
pub fn solve_fingerprint(cfg: &RunConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.output.dir = PathBuf::new();
    c.electrolyser.phi_e_csv = PathBuf::new();
    c.profiles.csv = PathBuf::new();
    c.solver.policy_paths = 0;
    c.solver.keep_trajectories = 0;
    c.solver.oracle_lambdas = 0;
    let mut h = Sha256::new();
    h.update(c.to_toml_string().as_bytes());
    for p in [&cfg.electrolyser.phi_e_csv, &cfg.profiles.csv] {
        h.update(fs::read(p).map_err(io_err(p))?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub fingerprint: String,
    pub seed: u64,
    pub best_iteration: usize,
    pub best_dual: f64,
    /// File name to SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct AscentRow {
    iteration: usize,
    dual_value: f64,
    op_value: f64,
    elec_bound: f64,
    grad_norm: f64,
    step: f64,
    wall_time_s: f64,
    policy_mean_k: Option<f64>,
    policy_mean_khat: Option<f64>,
    policy_half_width_k: Option<f64>,
    subsidy_rate: Option<f64>,
    invariant_violations: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct LambdaRow {
    hour: usize,
    lambda_eur_per_kwh: f64,
}

#[derive(Serialize, Deserialize)]
struct ValueRow {
    hour: usize,
    stock_kg: f64,
    mode: Mode,
    value_eur: f64,
}

#[derive(Debug, Clone)]
pub struct SolveSummary {
    pub out_dir: PathBuf,
    pub report: AscentReport,
    pub best_lambda: Vec<f64>,
}

impl std::fmt::Display for SolveSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "solve: {} evaluations, best dual {:.6} at iteration {}; artifacts in {}",
            self.report.records.len(),
            self.report.best_dual,
            self.report.best_iteration,
            self.out_dir.display()
        )?;
        if let Some((k, p)) = self.report.best_policy() {
            write!(f, "\nbest evaluated policy {:.6} at iteration {k} (subsidy rate {:.4})", p.mean_k, p.subsidy_rate)?;
        }
        Ok(())
    }
}

fn evaluate_policy(
    cfg: &RunConfig,
    pb: &Problem,
    vo: &ValueFunctionO,
    cuts: &CutSet,
    lambda: &[f64],
    seed: u64,
    keep: usize,
) -> Result<PolicyStats> {
    let ctx = PolicyContext::new(vo, cuts, lambda, &pb.plant, &pb.noise, cfg.grids.ppa_points)?;
    simulate_policy(&ctx, cfg.solver.policy_paths, seed, keep)
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<SolveSummary> {
    let pb = cfg.problem()?;
    let out = &cfg.output.dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    // A partial rerun must not leave a manifest vouching for older files.
    let manifest_path = out.join(MANIFEST);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(io_err(&manifest_path))?;
    }
    let seed = cfg.solver.seed;
    let every = cfg.solver.policy_eval_every;
    let outcome = ascend_with(&pb.plant, &pb.noise, &pb.grids, &pb.schedule, &pb.settings, seed, |k, m, ev| {
        if every == 0 || k % every != 0 {
            return Ok(None);
        }
        let st = evaluate_policy(cfg, &pb, &ev.vo, &ev.cuts, &m.lambda, derive_seed(seed, SEED_POLICY, k as u64), 0)?;
        Ok(Some(PolicyEval {
            mean_k: st.mean_k,
            mean_khat: st.mean_khat,
            half_width_k: st.half_width_k,
            subsidy_rate: st.subsidy_rate,
            invariant_violations: st.invariants.total(),
        }))
    })?;

    let rows = outcome.report.records.iter().map(|r| AscentRow {
        iteration: r.iteration,
        dual_value: r.dual_value,
        op_value: r.op_value,
        elec_bound: r.elec_bound,
        grad_norm: r.grad_norm,
        step: r.step,
        wall_time_s: r.wall_time_s,
        policy_mean_k: r.policy.map(|p| p.mean_k),
        policy_mean_khat: r.policy.map(|p| p.mean_khat),
        policy_half_width_k: r.policy.map(|p| p.half_width_k),
        subsidy_rate: r.policy.map(|p| p.subsidy_rate),
        invariant_violations: r.policy.map(|p| p.invariant_violations),
    });
    write_rows(&out.join(ASCENT_REPORT), rows)?;
    let lam = &outcome.best.lambda;
    write_rows(
        &out.join(LAMBDA),
        lam.iter().enumerate().map(|(hour, &l)| LambdaRow { hour, lambda_eur_per_kwh: l }),
    )?;
    write_rows(
        &out.join(VALUE_FUNCTION),
        outcome.best_vo.rows().map(|(hour, stock_kg, mode, value_eur)| ValueRow { hour, stock_kg, mode, value_eur }),
    )?;
    write_rows(&out.join(CUTS), outcome.best_cuts.iter().copied())?;
    let cfg_path = out.join(EFFECTIVE_CONFIG);
    fs::write(&cfg_path, cfg.to_toml_string()).map_err(io_err(&cfg_path))?;

    let mut files = BTreeMap::new();
    for name in [ASCENT_REPORT, LAMBDA, VALUE_FUNCTION, CUTS] {
        files.insert(name.to_string(), file_sha(&out.join(name))?);
    }
    let manifest = Manifest {
        fingerprint: solve_fingerprint(cfg)?,
        seed,
        best_iteration: outcome.report.best_iteration,
        best_dual: outcome.report.best_dual,
        files,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Solver(format!("manifest: {e}")))?;
    fs::write(&manifest_path, text).map_err(io_err(&manifest_path))?;
    Ok(SolveSummary { out_dir: out.clone(), best_lambda: lam.clone(), report: outcome.report })
}

/// Solve artifacts read back after the staleness checks.
pub struct SolveArtifacts {
    pub manifest: Manifest,
    pub lambda: Vec<f64>,
    pub vo: ValueFunctionO,
    pub cuts: CutSet,
    pub report: AscentReport,
}

pub fn load_artifacts(cfg: &RunConfig, pb: &Problem) -> Result<SolveArtifacts> {
    let out = &cfg.output.dir;
    let mpath = out.join(MANIFEST);
    if !mpath.exists() {
        return Err(Error::Stale(format!("no manifest in {}; run `solve` first", out.display())));
    }
    let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| Error::Parse { path: mpath.display().to_string(), reason: e.to_string() })?;
    if manifest.fingerprint != solve_fingerprint(cfg)? {
        return Err(Error::Stale("artifacts were produced from a different configuration or data".into()));
    }
    for name in [ASCENT_REPORT, LAMBDA, VALUE_FUNCTION, CUTS] {
        let want = manifest.files.get(name).ok_or_else(|| Error::Stale(format!("manifest does not list {name}")))?;
        let p = out.join(name);
        if !p.exists() || &file_sha(&p)? != want {
            return Err(Error::Stale(format!("{name} is missing or was modified after `solve`")));
        }
    }
    let t = pb.plant.horizon;
    let lrows: Vec<LambdaRow> = read_rows(&out.join(LAMBDA))?;
    if lrows.len() != t || lrows.iter().enumerate().any(|(h, r)| r.hour != h) {
        return Err(Error::Stale(format!("{LAMBDA} does not cover hours 0..{t}")));
    }
    let lambda: Vec<f64> = lrows.iter().map(|r| r.lambda_eur_per_kwh).collect();
    let vrows: Vec<ValueRow> = read_rows(&out.join(VALUE_FUNCTION))?;
    let n = pb.grids.stock.len();
    for (k, r) in vrows.iter().enumerate() {
        let (h, i, m) = (k / (3 * n), (k / 3) % n, Mode::from_index(k % 3));
        if r.hour != h || r.mode != m || r.stock_kg != pb.grids.stock[i] {
            return Err(Error::Stale(format!("{VALUE_FUNCTION} row {k} does not match the stock grid")));
        }
    }
    let vo = ValueFunctionO::from_values(lambda.clone(), pb.grids.clone(), &pb.plant, vrows.iter().map(|r| r.value_eur).collect())?;
    let cuts = CutSet::from_cuts(t, read_rows::<Cut>(&out.join(CUTS))?)?;
    let arows: Vec<AscentRow> = read_rows(&out.join(ASCENT_REPORT))?;
    let records = arows
        .into_iter()
        .map(|r| crate::dual::IterationRecord {
            iteration: r.iteration,
            dual_value: r.dual_value,
            op_value: r.op_value,
            elec_bound: r.elec_bound,
            grad_norm: r.grad_norm,
            step: r.step,
            wall_time_s: r.wall_time_s,
            policy: match (r.policy_mean_k, r.policy_mean_khat, r.policy_half_width_k, r.subsidy_rate, r.invariant_violations) {
                (Some(mean_k), Some(mean_khat), Some(half_width_k), Some(subsidy_rate), Some(invariant_violations)) => {
                    Some(PolicyEval { mean_k, mean_khat, half_width_k, subsidy_rate, invariant_violations })
                }
                _ => None,
            },
        })
        .collect();
    let report = AscentReport { records, best_iteration: manifest.best_iteration, best_dual: manifest.best_dual };
    Ok(SolveArtifacts { manifest, lambda, vo, cuts, report })
}

#[derive(Serialize, Deserialize)]
struct GapRow {
    source: String,
    iteration: usize,
    dual_value: f64,
    policy_value: f64,
    gap_abs: f64,
    gap_rel: f64,
    dual_shifted: f64,
    policy_shifted: f64,
    gap_rel_shifted: f64,
    mc_half_width: f64,
    subsidy_rate: f64,
    violation: bool,
}

impl GapRow {
    fn new(source: &str, iteration: usize, g: &GapReport, subsidy_rate: f64) -> Self {
        GapRow {
            source: source.into(),
            iteration,
            dual_value: g.dual_value,
            policy_value: g.policy_value,
            gap_abs: g.gap_abs,
            gap_rel: g.gap_rel,
            dual_shifted: g.dual_shifted,
            policy_shifted: g.policy_shifted,
            gap_rel_shifted: g.gap_rel_shifted,
            mc_half_width: g.mc_half_width,
            subsidy_rate,
            violation: g.violation,
        }
    }
}

#[derive(Serialize)]
struct TrajectoryRow {
    path: usize,
    hour: usize,
    stock_kg: f64,
    mode: Mode,
    p_stock_kwh: f64,
    q_kwh: f64,
    mode_cmd: Mode,
    load: f64,
    h_out_kg: f64,
    e_ppa_kwh: f64,
    e_grid_kwh: f64,
    demand_kg: f64,
    e_pv_kwh: f64,
    consumption_kwh: f64,
    stage_cost_eur: f64,
}

#[derive(Serialize)]
struct InvariantRow {
    check: &'static str,
    violations: usize,
}

#[derive(Debug, Clone)]
pub struct SimulateSummary {
    pub stats: PolicyStats,
    pub gap: GapReport,
    /// Gap of the lowest policy estimate seen during the ascent, if any.
    pub evaluated_gap: Option<(usize, GapReport)>,
}

impl std::fmt::Display for SimulateSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = &self.stats;
        write!(
            f,
            "simulate: {} paths, mean cost {:.6} (K) / {:.6} (surrogate), half-width {:.6}, subsidy rate {:.4}, invariant violations {}\n\
             gap at best multiplier: {:.6} ({:.4}%)",
            s.n_paths,
            s.mean_k,
            s.mean_khat,
            s.half_width_k,
            s.subsidy_rate,
            s.invariants.total(),
            self.gap.gap_abs,
            100.0 * self.gap.gap_rel
        )?;
        if let Some((k, g)) = &self.evaluated_gap {
            write!(f, "\ngap of best evaluated policy (iteration {k}): {:.6} ({:.4}%)", g.gap_abs, 100.0 * g.gap_rel)?;
        }
        Ok(())
    }
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateSummary> {
    let pb = cfg.problem()?;
    let art = load_artifacts(cfg, &pb)?;
    let out = &cfg.output.dir;
    let seed = derive_seed(cfg.solver.seed, SEED_POLICY, u64::MAX);
    let stats = evaluate_policy(cfg, &pb, &art.vo, &art.cuts, &art.lambda, seed, cfg.solver.keep_trajectories)?;
    let c_s = pb.plant.c_subsidy;
    let best_dual = art.manifest.best_dual;
    let gap = gap_report(best_dual, stats.mean_k, c_s, stats.half_width_k)?;
    let mut rows = vec![GapRow::new("best_multiplier", art.manifest.best_iteration, &gap, stats.subsidy_rate)];
    let evaluated_gap = match art.report.best_policy() {
        Some((k, p)) => {
            let g = gap_report(best_dual, p.mean_k, c_s, p.half_width_k)?;
            rows.push(GapRow::new("best_evaluated", k, &g, p.subsidy_rate));
            Some((k, g))
        }
        None => None,
    };
    write_rows(&out.join(GAP_REPORT), rows)?;
    let traj = stats.samples.iter().enumerate().flat_map(|(path, rec)| {
        rec.hours.iter().map(move |h| TrajectoryRow {
            path,
            hour: h.hour,
            stock_kg: h.stock,
            mode: h.mode,
            p_stock_kwh: h.p_stock,
            q_kwh: h.q,
            mode_cmd: h.mode_cmd,
            load: h.load,
            h_out_kg: h.h_out,
            e_ppa_kwh: h.e_ppa,
            e_grid_kwh: h.e_grid,
            demand_kg: h.demand,
            e_pv_kwh: h.e_pv,
            consumption_kwh: h.consumption,
            stage_cost_eur: h.stage_cost,
        })
    });
    write_rows(&out.join(TRAJECTORIES), traj)?;
    let inv = &stats.invariants;
    write_rows(
        &out.join(INVARIANTS),
        [
            ("stock_bounds", inv.stock_bounds),
            ("ppa_negative", inv.ppa_negative),
            ("coupling", inv.coupling),
            ("grid_floor", inv.grid_floor),
            ("mix_cap", inv.mix_cap),
            ("final_cost_identity", inv.final_cost_identity),
        ]
        .map(|(check, violations)| InvariantRow { check, violations }),
    )?;
    let summary = SimulateSummary { stats, gap, evaluated_gap };
    if summary.gap.violation {
        return Err(Error::Certification(format!(
            "policy cost {} is below the dual bound {} beyond the Monte Carlo half-width",
            summary.gap.policy_value, summary.gap.dual_value
        )));
    }
    if summary.stats.invariants.total() > 0 {
        return Err(Error::Certification(format!("{} trajectory invariant violations", summary.stats.invariants.total())));
    }
    Ok(summary)
}

#[derive(Serialize)]
struct OracleRow {
    lambda_index: usize,
    dual_surrogate: f64,
    dual_exact: f64,
    primal: f64,
    policy: f64,
    op_sdp: f64,
    op_exact: f64,
    elec_sddp: f64,
    elec_surrogate_exact: f64,
    elec_subsidy_exact: f64,
    holds: bool,
}

#[derive(Debug, Clone)]
pub struct OracleSummary {
    pub checked: usize,
    pub failed: usize,
}

impl std::fmt::Display for OracleSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "oracle: bound chain holds at {}/{} multipliers", self.checked - self.failed, self.checked)
    }
}

pub fn cmd_oracle(cfg: &RunConfig) -> Result<OracleSummary> {
    let pb = cfg.problem()?;
    let inst = TinyInstance::new(pb.plant, pb.noise, pb.grids, cfg.grids.ppa_points)?;
    let reports = chain_suite(&inst, cfg.solver.oracle_lambdas, cfg.solver.sddp_iterations, cfg.solver.seed)?;
    let out = &cfg.output.dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_rows(
        &out.join(ORACLE_REPORT),
        reports.iter().enumerate().map(|(i, r)| OracleRow {
            lambda_index: i,
            dual_surrogate: r.dual_surrogate,
            dual_exact: r.dual_exact,
            primal: r.primal,
            policy: r.policy,
            op_sdp: r.op_sdp,
            op_exact: r.op_exact,
            elec_sddp: r.elec_sddp,
            elec_surrogate_exact: r.elec_surrogate_exact,
            elec_subsidy_exact: r.elec_subsidy_exact,
            holds: r.holds(),
        }),
    )?;
    let failed: Vec<String> =
        reports.iter().enumerate().filter(|(_, r)| !r.holds()).map(|(i, r)| format!("#{i}: {}", r.violations.join("; "))).collect();
    if !failed.is_empty() {
        return Err(Error::Certification(format!("bound chain violated at {}", failed.join(" | "))));
    }
    Ok(OracleSummary { checked: reports.len(), failed: 0 })
}

pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    let pb = cfg.problem()?;
    let art = load_artifacts(cfg, &pb)?;
    let mut s = Vec::new();
    let r = &art.report;
    let first = r.records.first().map_or(f64::NAN, |x| x.dual_value);
    writeln!(s, "evaluations: {}", r.records.len()).ok();
    writeln!(s, "dual value at initial multiplier: {first:.6}").ok();
    writeln!(s, "best dual value: {:.6} (iteration {})", r.best_dual, r.best_iteration).ok();
    writeln!(s, "total ascent time: {:.1} s", r.records.iter().map(|x| x.wall_time_s).sum::<f64>()).ok();
    for rec in r.records.iter().filter(|x| x.policy.is_some()) {
        let p = rec.policy.unwrap();
        writeln!(
            s,
            "  iteration {:>3}: policy {:.6} +- {:.6}, subsidy rate {:.4}",
            rec.iteration, p.mean_k, p.half_width_k, p.subsidy_rate
        )
        .ok();
    }
    let gp = cfg.output.dir.join(GAP_REPORT);
    if gp.exists() {
        for g in read_rows::<GapRow>(&gp)? {
            writeln!(
                s,
                "gap ({}, iteration {}): {:.6} ({:.4}%), shifted {:.6} vs {:.6}",
                g.source,
                g.iteration,
                g.gap_abs,
                100.0 * g.gap_rel,
                g.dual_shifted,
                g.policy_shifted
            )
            .ok();
        }
    } else {
        writeln!(s, "no gap report yet; run `simulate`").ok();
    }
    Ok(String::from_utf8(s).expect("report text is UTF-8").trim_end().to_string())
}
