//! Direct transcription of the noise action under an energy budget.
//!
//! Minimizes `S_c = S + (λ/2) ∫ |Ω|² dt` over rigid triad paths that start at
//! `e_i` and end on the target triad. The terminal condition is enforced by
//! an augmented Lagrangian on `vec(v_N)`; the inner problems use L-BFGS.

mod gradient;
mod lbfgs;
mod transcription;

pub use gradient::{gradient_registry, Adjoint, FiniteDifference, GradientMethod};
pub use lbfgs::{minimize, LbfgsOutcome, LbfgsSettings, LbfgsStatus, LineSearchFailure};
pub use transcription::{right_jacobian_transpose, Forward, ObjectiveParts, Transcription};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolution::{
    boundary_triad, drift_for_target, energy_output, triad_distance, ControlPath, EvolutionError, TargetRotation,
    TriadPath,
};
use crate::fidelity::{fidelity_weak, SpinNumber};
use crate::grid::{finite_difference, EpsilonStrength, PurePath, TimeGrid};
use crate::noise::{CovarianceKernel, LagTable, NoiseKernel};
use crate::quat::{PureQuat, UnitQuat};
use crate::registry::UnknownEntry;
use transcription::{flatten, unflatten};

/// Penalty rounds before giving up on the terminal condition.
pub const MAX_PENALTY_ROUNDS: usize = 10;
const INITIAL_PENALTY: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub bc_tol: f64,
    pub el_tol: f64,
    pub step_tol: f64,
    pub max_iterations: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { bc_tol: 1e-6, el_tol: 1e-4, step_tol: 1e-10, max_iterations: 20_000 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationProblem {
    pub kernel: NoiseKernel,
    pub target: TargetRotation,
    pub grid: TimeGrid,
    pub lambda_inv: f64,
    pub continuation: Vec<f64>,
    pub tolerances: Tolerances,
    pub gradient: String,
}

#[derive(Debug, Error, Clone)]
pub enum OptimizerError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error("line search found no descent direction (penalty round {round}, iteration {iteration})")]
    NoDescent { round: usize, iteration: usize, last: Box<ControlSolution> },
    #[error("terminal triad mismatch {bc_error:e} above tolerance after {rounds} penalty rounds")]
    BCUnreachable { rounds: usize, bc_error: f64, last: Box<ControlSolution> },
    #[error(transparent)]
    Unknown(#[from] UnknownEntry),
}

impl OptimizationProblem {
    /// Single-point problem at `λ⁻¹ = 0` with default tolerances.
    pub fn new(kernel: NoiseKernel, target: TargetRotation, grid: TimeGrid) -> Self {
        OptimizationProblem {
            kernel,
            target,
            grid,
            lambda_inv: 0.0,
            continuation: vec![0.0],
            tolerances: Tolerances::default(),
            gradient: "adjoint".into(),
        }
    }

    pub fn with_lambda_inv(mut self, lambda_inv: f64) -> Self {
        self.lambda_inv = lambda_inv;
        self
    }

    pub fn with_continuation(mut self, continuation: Vec<f64>) -> Self {
        self.continuation = continuation;
        self
    }

    pub fn with_grid(mut self, grid: TimeGrid) -> Self {
        self.grid = grid;
        self
    }

    pub fn tau(&self) -> f64 {
        self.grid.tau()
    }

    pub fn drift(&self) -> Result<PureQuat, OptimizerError> {
        Ok(drift_for_target(&self.target, self.tau())?)
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: String| Err(OptimizerError::InvalidProblem(m));
        if !(self.lambda_inv >= 0.0 && self.lambda_inv.is_finite()) {
            return bad(format!("lambda_inv must be finite and >= 0, got {}", self.lambda_inv));
        }
        if self.continuation.first() != Some(&0.0) {
            return bad("continuation must start at 0".into());
        }
        if self.continuation.windows(2).any(|w| !(w[1] > w[0])) || self.continuation.iter().any(|v| !v.is_finite()) {
            return bad("continuation must be strictly increasing and finite".into());
        }
        if self.grid.n_steps() < 8 {
            return bad(format!("need at least 8 steps, got {}", self.grid.n_steps()));
        }
        gradient_registry().get(&self.gradient)?;
        self.drift()?;
        Ok(())
    }
}

/// Optimal control at one `λ⁻¹`, with its certificates.
#[derive(Debug, Clone)]
pub struct ControlSolution {
    pub lambda_inv: f64,
    pub drift: PureQuat,
    pub triad: TriadPath,
    pub control: ControlPath,
    /// `δΩ̃_k`, the decision variables.
    pub delta_omega_rot: PurePath,
    /// `δω(t) = ω(t) − Ω_D` in the lab frame.
    pub delta_omega: PurePath,
    pub action: f64,
    pub constrained_action: f64,
    pub energy_output: f64,
    pub el_residual: f64,
    pub bc_error: f64,
    pub iterations: usize,
    pub multiplier: PureQuat,
    pub penalty: f64,
}

impl ControlSolution {
    pub fn fidelity(&self, s: SpinNumber, epsilon: EpsilonStrength) -> f64 {
        fidelity_weak(s, epsilon, self.action)
    }

    /// Whether both certificates hold.
    pub fn certified(&self, tol: &Tolerances) -> bool {
        self.bc_error <= tol.bc_tol && self.el_residual <= tol.el_tol
    }

    /// Re-evaluates the same control, linearly interpolated, on a grid
    /// `factor` times finer.
    pub fn refined(&self, k: &dyn CovarianceKernel, factor: usize, target: &TargetRotation) -> RefinedSummary {
        let fine = self.triad.grid().refined(factor);
        let coarse = self.delta_omega_rot.values();
        let x: Vec<PureQuat> = (0..fine.nodes())
            .map(|i| {
                let (k0, r) = (i / factor, (i % factor) as f64 / factor as f64);
                if r == 0.0 {
                    coarse[k0]
                } else {
                    coarse[k0].scale(1.0 - r) + coarse[k0 + 1].scale(r)
                }
            })
            .collect();
        let lambda = if self.lambda_inv > 0.0 { 1.0 / self.lambda_inv } else { 0.0 };
        let tr = Transcription::new(LagTable::new(k, fine), self.drift, lambda);
        let fwd = tr.forward(&x);
        let end = boundary_triad(target).1;
        let omega: Vec<PureQuat> = x.iter().zip(tr.u0()).map(|(d, u)| self.drift + u.conj().rotate(d)).collect();
        let control = ControlPath::from_rotating(PurePath::new(fine, omega).expect("same grid"), &fwd.triad);
        RefinedSummary {
            n_steps: fine.n_steps(),
            action: fwd.parts.action,
            energy_output: energy_output(&control),
            bc_error: triad_distance(&fwd.triad.last(), &end),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedSummary {
    pub n_steps: usize,
    pub action: f64,
    pub energy_output: f64,
    pub bc_error: f64,
}

/// `D_i(t) = ∫ N_ij(t, t′) E_j(t′) dt′` by trapezoid.
pub fn dual_triad(e: &TriadPath, k: &dyn CovarianceKernel) -> [PurePath; 3] {
    let table = LagTable::new(k, e.grid());
    table.dual(e.refs()).map(|d| PurePath::new(e.grid(), d).expect("same grid"))
}

fn residual(triad: &TriadPath, dual: [&[PureQuat]; 3], x: &[PureQuat], drift: PureQuat, lambda_inv: f64) -> f64 {
    let grid = triad.grid();
    let tau = grid.tau();
    let dx = finite_difference(x, grid.dt());
    let n = grid.n_steps();
    // the end nodes of the transcription are first-order accurate, so the
    // certificate is taken over nodes 2..=N−2
    let omega_dot = |k: usize| {
        let u0 = crate::quat::qexp(drift.scale(0.5 * grid.t(k)));
        u0.conj().rotate(&(dx[k] - drift.cross(&x[k])))
    };
    if lambda_inv == 0.0 {
        let scale = if drift.norm() > 0.0 { drift.norm() / tau } else { 1.0 };
        return (2..=n - 2).map(|k| omega_dot(k).norm()).fold(0.0, f64::max) / scale;
    }
    let lambda = 1.0 / lambda_inv;
    let torque = |k: usize| {
        let e = triad.at(k);
        (0..3).fold(PureQuat::ZERO, |acc, i| acc + e[i].cross(&dual[i][k]))
    };
    let dual_size = (0..grid.nodes()).map(|k| (0..3).map(|i| dual[i][k].norm()).sum::<f64>()).fold(0.0, f64::max);
    let scale = lambda * drift.norm() / tau + dual_size;
    (2..=n - 2).map(|k| (omega_dot(k).scale(lambda) + torque(k)).norm()).fold(0.0, f64::max) / scale
}

/// Normalized Euler–Lagrange residual `max ‖λ ∂_t Ω + Σ E_i∧D_i‖`, computed
/// from scratch; at `λ⁻¹ = 0` it is `max ‖∂_t Ω‖`.
pub fn el_residual(sol: &ControlSolution, problem: &OptimizationProblem) -> f64 {
    let d = dual_triad(&sol.triad, problem.kernel.as_ref());
    residual(
        &sol.triad,
        [d[0].values(), d[1].values(), d[2].values()],
        sol.delta_omega_rot.values(),
        sol.drift,
        sol.lambda_inv,
    )
}

struct Assembly<'a> {
    tr: &'a Transcription,
    lambda_inv: f64,
    end: [PureQuat; 3],
}

impl Assembly<'_> {
    fn solution(&self, x: Vec<PureQuat>, iterations: usize) -> ControlSolution {
        let tr = self.tr;
        let grid = tr.grid();
        let fwd = tr.forward(&x);
        let drift = tr.drift();
        let omega: Vec<PureQuat> = x.iter().zip(tr.u0()).map(|(d, u)| drift + u.conj().rotate(d)).collect();
        let control = ControlPath::from_rotating(PurePath::new(grid, omega).expect("same grid"), &fwd.triad);
        // ω_lab = u_c Ω ū_c = v (Ω_D + x) v̄ since u_0 commutes with Ω_D; this
        // form is exactly zero on the drift
        let dev = fwd.v.iter().zip(&x).map(|(v, xk)| v.rotate(&(drift + *xk)) - drift).collect();
        let delta_omega = PurePath::new(grid, dev).expect("same grid");
        let el = residual(&fwd.triad, [&fwd.dual[0], &fwd.dual[1], &fwd.dual[2]], &x, drift, self.lambda_inv);
        let e_out = energy_output(&control);
        ControlSolution {
            lambda_inv: self.lambda_inv,
            drift,
            bc_error: triad_distance(&fwd.triad.last(), &self.end),
            triad: fwd.triad,
            delta_omega,
            control,
            delta_omega_rot: PurePath::new(grid, x).expect("same grid"),
            action: fwd.parts.action,
            constrained_action: fwd.parts.action + fwd.parts.energy,
            energy_output: e_out,
            el_residual: el,
            iterations,
            multiplier: tr.multiplier,
            penalty: tr.penalty,
        }
    }
}

fn resample(path: &PurePath, grid: TimeGrid) -> Vec<PureQuat> {
    let src = path.grid();
    if src == grid {
        return path.values().to_vec();
    }
    let v = path.values();
    grid.times()
        .iter()
        .map(|t| {
            let pos = (t / src.dt()).clamp(0.0, src.n_steps() as f64);
            let k = (pos.floor() as usize).min(src.n_steps() - 1);
            let r = pos - k as f64;
            v[k].scale(1.0 - r) + v[k + 1].scale(r)
        })
        .collect()
}

pub fn solve(problem: &OptimizationProblem) -> Result<ControlSolution, OptimizerError> {
    solve_from(problem, None)
}

/// Solves at `problem.lambda_inv`, starting from `warm` when given.
pub fn solve_from(
    problem: &OptimizationProblem,
    warm: Option<&ControlSolution>,
) -> Result<ControlSolution, OptimizerError> {
    problem.validate()?;
    let drift = problem.drift()?;
    let grid = problem.grid;
    let end = boundary_triad(&problem.target).1;
    let table = LagTable::new(problem.kernel.as_ref(), grid);
    let lambda = if problem.lambda_inv > 0.0 { 1.0 / problem.lambda_inv } else { 0.0 };
    let mut tr = Transcription::new(table, drift, lambda);
    if problem.lambda_inv == 0.0 {
        // infinitely costly energy: the geodesic is the only admissible path
        let asm = Assembly { tr: &tr, lambda_inv: 0.0, end };
        return Ok(asm.solution(vec![PureQuat::ZERO; grid.nodes()], 0));
    }
    let methods = gradient_registry();
    let method = methods.get(&problem.gradient)?;
    let tol = problem.tolerances;
    let mut x = match warm {
        Some(w) => resample(&w.delta_omega_rot, grid),
        None => vec![PureQuat::ZERO; grid.nodes()],
    };
    tr.multiplier = warm.map_or(PureQuat::ZERO, |w| w.multiplier);
    tr.penalty = warm.map_or(INITIAL_PENALTY, |w| w.penalty.max(INITIAL_PENALTY));
    let mut iterations = 0;
    let mut last_h = f64::INFINITY;
    for round in 0..MAX_PENALTY_ROUNDS {
        let mut settings = LbfgsSettings {
            step_tol: tol.step_tol,
            grad_tol: 1e-13,
            max_iterations: tol.max_iterations,
            ..Default::default()
        };
        let mut polish = 0;
        loop {
            let outcome = {
                let tr_ref = &tr;
                minimize(
                    |flat: &[f64]| {
                        let (f, g) = method.evaluate(tr_ref, &unflatten(flat));
                        (f, flatten(&g))
                    },
                    flatten(&x),
                    &settings,
                )
            };
            match outcome {
                Ok(out) => {
                    iterations += out.iterations;
                    x = unflatten(&out.x);
                }
                Err(fail) => {
                    iterations += fail.last.iterations;
                    let asm = Assembly { tr: &tr, lambda_inv: problem.lambda_inv, end };
                    return Err(OptimizerError::NoDescent {
                        round,
                        iteration: iterations,
                        last: Box::new(asm.solution(unflatten(&fail.last.x), iterations)),
                    });
                }
            }
            let asm = Assembly { tr: &tr, lambda_inv: problem.lambda_inv, end };
            let sol = asm.solution(x.clone(), iterations);
            if sol.bc_error > tol.bc_tol {
                break;
            }
            if sol.el_residual <= tol.el_tol || polish == 2 {
                return Ok(sol);
            }
            polish += 1;
            settings.step_tol = 0.0;
            settings.floor = 1e-13;
            settings.grad_tol = 1e-12;
        }
        let h = tr.forward(&x).terminal();
        tr.multiplier += h.scale(tr.penalty);
        if h.norm() > 0.25 * last_h {
            tr.penalty *= 10.0;
        }
        last_h = h.norm();
    }
    let asm = Assembly { tr: &tr, lambda_inv: problem.lambda_inv, end };
    let last = asm.solution(x, iterations);
    Err(OptimizerError::BCUnreachable { rounds: MAX_PENALTY_ROUNDS, bc_error: last.bc_error, last: Box::new(last) })
}

/// One point of a continuation sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub lambda_inv: f64,
    pub result: Result<ControlSolution, OptimizerError>,
}

/// Solves along `problem.continuation`, warm-starting each point from the
/// last successful one. Failures are recorded and the sweep continues.
pub fn sweep_lambda(problem: &OptimizationProblem) -> Result<Vec<SweepPoint>, OptimizerError> {
    problem.validate()?;
    let mut out = Vec::with_capacity(problem.continuation.len());
    let mut warm: Option<ControlSolution> = None;
    for &li in &problem.continuation {
        let p = problem.clone().with_lambda_inv(li);
        let result = solve_from(&p, warm.as_ref());
        if let Ok(sol) = &result {
            warm = Some(sol.clone());
        }
        out.push(SweepPoint { lambda_inv: li, result });
    }
    Ok(out)
}

/// Re-solves every successful sweep point on a grid `factor` times finer,
/// warm-started from the coarse solution. Points are independent, so this
/// runs in parallel.
pub fn refine_sweep(problem: &OptimizationProblem, points: &[SweepPoint], factor: usize) -> Vec<SweepPoint> {
    use rayon::prelude::*;
    let fine = problem.clone().with_grid(problem.grid.refined(factor));
    points
        .par_iter()
        .map(|pt| SweepPoint {
            lambda_inv: pt.lambda_inv,
            result: match &pt.result {
                Ok(sol) => solve_from(&fine.clone().with_lambda_inv(pt.lambda_inv), Some(sol)),
                Err(e) => Err(e.clone()),
            },
        })
        .collect()
}

/// Generating quaternions `u_0(t) = exp(½ t Ω_D)` of the drift.
pub fn drift_frames(drift: PureQuat, grid: TimeGrid) -> Vec<UnitQuat> {
    grid.times().iter().map(|t| crate::quat::qexp(drift.scale(0.5 * t))).collect()
}
