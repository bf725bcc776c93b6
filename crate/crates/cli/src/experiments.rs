//! The experiment kinds, looked up by name.

use serde::Serialize;
use serde_json::{json, Value};

use spinctl_core::evolution::TriadPath;
use spinctl_core::fidelity::{mc_fidelity_spins, noise_along_triad, SpinNumber};
use spinctl_core::magnus::{method_registry, time_ordered_exp};
use spinctl_core::noise::NoiseSampler;
use spinctl_core::optimizer::{sweep_lambda, ControlSolution, OptimizationProblem, RefinedSummary, SweepPoint};
use spinctl_core::quat::{qexp, Quat};
use spinctl_core::registry::{Named, Registry};
use spinctl_core::EpsilonStrength;

use crate::config::RunConfig;
use crate::output::{num, OutputDir, Table};
use crate::RunError;

pub trait Experiment: Named + Send + Sync {
    /// Writes the experiment's files and returns per-row results for the report.
    fn run(&self, cfg: &RunConfig, out: &mut OutputDir) -> Result<Value, RunError>;
}

pub struct Solve;
pub struct Sweep;
pub struct McValidate;
pub struct MagnusCheck;
pub struct KernelTable;

pub fn experiment_registry() -> Registry<dyn Experiment> {
    let mut r: Registry<dyn Experiment> = Registry::new("experiment");
    r.register(Box::new(Solve));
    r.register(Box::new(Sweep));
    r.register(Box::new(McValidate));
    r.register(Box::new(MagnusCheck));
    r.register(Box::new(KernelTable));
    r
}

fn problem(cfg: &RunConfig) -> OptimizationProblem {
    let mut continuation = cfg.lambda_inv.clone();
    if continuation.first() != Some(&0.0) {
        continuation.insert(0, 0.0);
    }
    let mut p = OptimizationProblem::new(cfg.kernel(), cfg.target(), cfg.time_grid()).with_continuation(continuation);
    p.tolerances = cfg.tolerances;
    p.gradient = cfg.gradient.clone();
    p
}

fn grid_note(cfg: &RunConfig) -> String {
    format!(
        "grid: tau = {}, n_steps = {}, reporting n_steps = {}",
        cfg.tau,
        cfg.grid.n_steps,
        cfg.grid.n_steps * cfg.grid.refine
    )
}

fn stage_for(p: &SweepPoint) -> String {
    format!("optimize (lambda_inv = {})", p.lambda_inv)
}

/// Runs the continuation and returns the solution at its last value.
fn solve_last(cfg: &RunConfig) -> Result<ControlSolution, RunError> {
    let p = problem(cfg);
    let points = sweep_lambda(&p).map_err(|e| RunError::solver("set up problem", e))?;
    let last = points.into_iter().last().expect("continuation is never empty");
    let stage = stage_for(&last);
    last.result.map_err(|e| RunError::solver(&stage, e))
}

fn refine(cfg: &RunConfig, sol: &ControlSolution) -> RefinedSummary {
    sol.refined(cfg.kernel().as_ref(), cfg.grid.refine, &cfg.target())
}

fn controls_table(cfg: &RunConfig, sol: &ControlSolution, fine: &RefinedSummary) -> Table {
    let mut t = Table::new(&["t", "omega_x", "omega_y", "omega_z", "d_omega_x", "d_omega_y", "d_omega_z"]);
    t.note(grid_note(cfg));
    t.note(format!(
        "refinement delta: S {} -> {} ({:+e}), E_out {} -> {} ({:+e})",
        num(sol.action),
        num(fine.action),
        fine.action - sol.action,
        num(sol.energy_output),
        num(fine.energy_output),
        fine.energy_output - sol.energy_output
    ));
    t.note(format!("lambda_inv = {}, drift = {:?}", num(sol.lambda_inv), sol.drift.to_array()));
    let times = sol.control.grid.times();
    for ((t_k, w), d) in times.iter().zip(sol.control.omega_lab.values()).zip(sol.delta_omega.values()) {
        t.push([*t_k, w.x, w.y, w.z, d.x, d.y, d.z].map(num).to_vec());
    }
    t
}

#[derive(Serialize)]
struct SolutionArchive<'a> {
    config: &'a RunConfig,
    lambda_inv: f64,
    drift: [f64; 3],
    action: f64,
    constrained_action: f64,
    energy_output: f64,
    el_residual: f64,
    bc_error: f64,
    iterations: usize,
    refined: RefinedSummary,
    t: Vec<f64>,
    delta_omega_rot: Vec<[f64; 3]>,
    omega_lab: Vec<[f64; 3]>,
    frames: Vec<[f64; 4]>,
}

fn archive<'a>(cfg: &'a RunConfig, sol: &ControlSolution, fine: RefinedSummary) -> SolutionArchive<'a> {
    SolutionArchive {
        config: cfg,
        lambda_inv: sol.lambda_inv,
        drift: sol.drift.to_array(),
        action: sol.action,
        constrained_action: sol.constrained_action,
        energy_output: sol.energy_output,
        el_residual: sol.el_residual,
        bc_error: sol.bc_error,
        iterations: sol.iterations,
        refined: fine,
        t: sol.control.grid.times(),
        delta_omega_rot: sol.delta_omega_rot.values().iter().map(|v| v.to_array()).collect(),
        omega_lab: sol.control.omega_lab.values().iter().map(|v| v.to_array()).collect(),
        frames: sol
            .triad
            .frames()
            .iter()
            .map(|u| {
                let q = Quat::from(*u);
                [q.w, q.x, q.y, q.z]
            })
            .collect(),
    }
}

fn fidelity_columns(cfg: &RunConfig) -> Vec<(SpinNumber, EpsilonStrength, String)> {
    let mut cols = Vec::new();
    for s in cfg.spins() {
        for e in cfg.epsilons() {
            cols.push((s, e, format!("F_s{}_eps{}", s.s(), e.value())));
        }
    }
    cols
}

fn summary(sol: &ControlSolution, fine: &RefinedSummary, cfg: &RunConfig) -> Value {
    let f: serde_json::Map<String, Value> = fidelity_columns(cfg)
        .into_iter()
        .map(|(s, e, name)| (name, json!(spinctl_core::fidelity::fidelity_weak(s, e, fine.action))))
        .collect();
    json!({
        "lambda_inv": sol.lambda_inv,
        "S": sol.action,
        "S_refined": fine.action,
        "E_out": sol.energy_output,
        "E_out_refined": fine.energy_output,
        "el_residual": sol.el_residual,
        "bc_error": sol.bc_error,
        "iterations": sol.iterations,
        "fidelity": f,
    })
}

impl Named for Solve {
    fn name(&self) -> &str {
        "solve"
    }
}

impl Experiment for Solve {
    fn run(&self, cfg: &RunConfig, out: &mut OutputDir) -> Result<Value, RunError> {
        let sol = solve_last(cfg)?;
        let fine = refine(cfg, &sol);
        out.write_json("solution.json", &archive(cfg, &sol, fine))?;
        out.write_csv("controls.csv", &controls_table(cfg, &sol, &fine))?;
        Ok(json!([summary(&sol, &fine, cfg)]))
    }
}

impl Named for Sweep {
    fn name(&self) -> &str {
        "sweep"
    }
}

impl Experiment for Sweep {
    fn run(&self, cfg: &RunConfig, out: &mut OutputDir) -> Result<Value, RunError> {
        let p = problem(cfg);
        let points = sweep_lambda(&p).map_err(|e| RunError::solver("set up problem", e))?;
        let cols = fidelity_columns(cfg);
        let mut header = vec!["lambda_inv", "S", "E_out"];
        header.extend(cols.iter().map(|c| c.2.as_str()));
        header.extend(["S_opt_grid", "E_out_opt_grid", "max_abs_d_omega", "el_residual", "bc_error", "status"]);
        let mut table = Table::new(&header);
        table.note(grid_note(cfg));
        table.note("S, E_out and F are evaluated on the reporting grid; *_opt_grid columns on the optimization grid");
        let mut rows = Vec::new();
        let mut worst_delta: f64 = 0.0;
        let mut failure = None;
        for pt in &points {
            match &pt.result {
                Ok(sol) => {
                    let fine = refine(cfg, sol);
                    worst_delta = worst_delta.max((fine.action - sol.action).abs());
                    let max_dev = sol.delta_omega.values().iter().map(|v| v.max_abs()).fold(0.0, f64::max);
                    let mut row = vec![num(pt.lambda_inv), num(fine.action), num(fine.energy_output)];
                    row.extend(
                        cols.iter().map(|(s, e, _)| num(spinctl_core::fidelity::fidelity_weak(*s, *e, fine.action))),
                    );
                    row.extend([
                        num(sol.action),
                        num(sol.energy_output),
                        num(max_dev),
                        num(sol.el_residual),
                        num(sol.bc_error),
                        "ok".to_string(),
                    ]);
                    table.push(row);
                    out.write_csv(
                        &format!("controls_lambda_{}.csv", num(pt.lambda_inv)),
                        &controls_table(cfg, sol, &fine),
                    )?;
                    rows.push(summary(sol, &fine, cfg));
                }
                Err(e) => {
                    let mut row = vec![num(pt.lambda_inv), String::new(), String::new()];
                    row.extend(cols.iter().map(|_| String::new()));
                    row.extend([
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        e.to_string(),
                    ]);
                    table.push(row);
                    rows.push(json!({ "lambda_inv": pt.lambda_inv, "error": e.to_string() }));
                    failure.get_or_insert_with(|| RunError::solver(&stage_for(pt), e.clone()));
                }
            }
        }
        table.note(format!("refinement delta: max |S_reporting - S_opt_grid| = {worst_delta:e}"));
        out.write_csv("sweep.csv", &table)?;
        match failure {
            Some(err) => Err(err),
            None => Ok(Value::Array(rows)),
        }
    }
}

impl Named for McValidate {
    fn name(&self) -> &str {
        "mc-validate"
    }
}

impl Experiment for McValidate {
    fn run(&self, cfg: &RunConfig, out: &mut OutputDir) -> Result<Value, RunError> {
        let sol = solve_last(cfg)?;
        let triad: &TriadPath = &sol.triad;
        let kernel = cfg.kernel();
        let seed = cfg.seed();
        let spins = cfg.spins();
        let mut table = Table::new(&[
            "epsilon",
            "s",
            "S_analytic",
            "F_analytic",
            "F_mc_real",
            "F_mc_imag",
            "std_err",
            "samples",
            "seed",
        ]);
        table.note(format!(
            "grid: tau = {}, n_steps = {} (Monte Carlo runs on the optimization grid)",
            cfg.tau, cfg.grid.n_steps
        ));
        table.note(format!("control: lambda_inv = {}", num(sol.lambda_inv)));
        let mut rows = Vec::new();
        for e in cfg.epsilons() {
            let est = mc_fidelity_spins(triad, kernel.as_ref(), e, &spins, cfg.samples, seed)
                .map_err(|err| RunError::new(&format!("monte carlo (epsilon = {})", e.value()), err))?;
            for x in est {
                table.push(vec![
                    num(e.value()),
                    num(x.spin.s()),
                    num(x.action),
                    num(x.analytic_prediction),
                    num(x.mean.re),
                    num(x.mean.im),
                    num(x.std_error),
                    x.samples.to_string(),
                    seed.to_string(),
                ]);
                rows.push(json!({
                    "epsilon": e.value(),
                    "s": x.spin.s(),
                    "F_analytic": x.analytic_prediction,
                    "F_mc": [x.mean.re, x.mean.im],
                    "std_err": x.std_error,
                }));
            }
        }
        out.write_csv("mc.csv", &table)?;
        Ok(Value::Array(rows))
    }
}

impl Named for MagnusCheck {
    fn name(&self) -> &str {
        "magnus-check"
    }
}

impl Experiment for MagnusCheck {
    fn run(&self, cfg: &RunConfig, out: &mut OutputDir) -> Result<Value, RunError> {
        let sol = solve_last(cfg)?;
        let grid = cfg.time_grid();
        let kernel = cfg.kernel();
        let sampler =
            NoiseSampler::new(kernel.as_ref(), grid, cfg.seed()).map_err(|e| RunError::new("sample noise paths", e))?;
        let methods = method_registry();
        let mut table = Table::new(&["epsilon", "path", "method", "m_norm", "mismatch", "status"]);
        table.note(grid_note(cfg));
        table.note(format!("noise n = n^i E_i along the control at lambda_inv = {}", num(sol.lambda_inv)));
        table.note(format!("seed = {}; mismatch = |exp(eps m(tau)/2) - time-ordered product|", cfg.seed()));
        let mut worst = serde_json::Map::new();
        for e in cfg.epsilons() {
            for p in 0..cfg.samples {
                let n = noise_along_triad(&sol.triad, &sampler.path(p as u64));
                let ordered = Quat::from(time_ordered_exp(&n, e));
                for m in methods.iter() {
                    let (norm, mismatch, status) = match m.rotation_vector(&n, e) {
                        Ok(path) => {
                            let end = path.last();
                            let d = (Quat::from(qexp(end.scale(0.5 * e.value()))) - ordered).norm();
                            (num(end.norm()), d, "ok".to_string())
                        }
                        Err(err) => (String::new(), f64::NAN, err.to_string()),
                    };
                    if mismatch.is_finite() {
                        let key = format!("{}@eps{}", m.name(), e.value());
                        let prev = worst.get(&key).and_then(Value::as_f64).unwrap_or(0.0);
                        worst.insert(key, json!(prev.max(mismatch)));
                    }
                    let shown = if mismatch.is_finite() { num(mismatch) } else { String::new() };
                    table.push(vec![num(e.value()), p.to_string(), m.name().to_string(), norm, shown, status]);
                }
            }
        }
        out.write_csv("magnus.csv", &table)?;
        Ok(json!({ "max_mismatch": worst }))
    }
}

impl Named for KernelTable {
    fn name(&self) -> &str {
        "kernel-table"
    }
}

impl Experiment for KernelTable {
    fn run(&self, cfg: &RunConfig, out: &mut OutputDir) -> Result<Value, RunError> {
        let grid = cfg.time_grid();
        let kernel = cfg.kernel();
        let mut table = Table::new(&["s", "N_xx"]);
        table.note(format!("grid: lags k * tau / n_steps for k = 0..={}, tau = {}", grid.n_steps(), cfg.tau));
        table.note(format!("kernel: {}", kernel.describe()));
        for s in grid.times() {
            table.push(vec![num(s), num(kernel.profile(s))]);
        }
        out.write_csv("kernel.csv", &table)?;
        Ok(json!({ "rows": grid.nodes(), "zero_lag": kernel.profile(0.0) }))
    }
}
