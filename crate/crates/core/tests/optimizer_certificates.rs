//! Post-hoc certificates on solver output for the tilted-target 1/f problem.

use std::f64::consts::PI;
use std::sync::Arc;

use spinctl_core::evolution::{TargetRotation, TriadPath};
use spinctl_core::noise::{NoiseKernel, OneOverF};
use spinctl_core::optimizer::{el_residual, refine_sweep, solve, sweep_lambda, OptimizationProblem, Tolerances};
use spinctl_core::quat::qexp;
use spinctl_core::{PureQuat, TimeGrid};

fn problem(n_steps: usize) -> OptimizationProblem {
    let k: NoiseKernel = Arc::new(OneOverF::new(8.0, 0.1, 20.0, [1.0, 0.0, 0.0]).unwrap());
    let target = TargetRotation::new(Some(PureQuat::new(1.0, 0.0, 1.0)), 2.0 * 2f64.sqrt() * PI, 0).unwrap();
    OptimizationProblem::new(k, target, TimeGrid::new(1.0, n_steps).unwrap())
        .with_continuation(vec![0.0, 10.0, 20.0, 30.0, 50.0])
}

#[test]
fn certificates_warm_cold_agreement_and_perturbation() {
    let p = problem(512);
    let points = sweep_lambda(&p).unwrap();
    let sols: Vec<_> = points.iter().map(|pt| pt.result.clone().unwrap()).collect();

    let warm = sols.last().unwrap();
    let cold = solve(&p.clone().with_lambda_inv(50.0)).unwrap();
    let rel = (warm.action - cold.action).abs() / cold.action;
    assert!(rel <= 1e-4, "warm {} cold {}", warm.action, cold.action);

    // the drift is a saddle of S_c, so the first step can lower E_out; past it
    // the output grows with λ⁻¹
    for w in sols[1..].windows(2) {
        assert!(w[1].energy_output >= w[0].energy_output, "{} then {}", w[0].energy_output, w[1].energy_output);
    }
    assert!(sols.iter().all(|s| s.bc_error <= Tolerances::default().bc_tol));

    let fine = refine_sweep(&p, &points[points.len() - 1..], 2);
    let sol = fine[0].result.as_ref().unwrap();
    let fp = p.clone().with_grid(p.grid.refined(2)).with_lambda_inv(50.0);
    let el = el_residual(sol, &fp);
    assert!(el <= 1e-4, "el {el:e}");
    assert!((el - sol.el_residual).abs() <= 1e-12 * el.max(1.0));

    let kick = qexp(PureQuat::new(0.3, -0.5, 0.8).scale(1e-2 / PureQuat::new(0.3, -0.5, 0.8).norm()));
    let mut kicked = sol.clone();
    let frames = sol.triad.frames().iter().map(|u| *u * kick).collect();
    kicked.triad = TriadPath::from_frames(sol.triad.grid(), frames).unwrap();
    let el_kicked = el_residual(&kicked, &fp);
    assert!(el_kicked > el, "{el_kicked:e} vs {el:e}");
}

#[test]
fn drift_solution_has_zero_residual() {
    let p = problem(256);
    let sol = solve(&p).unwrap();
    assert_eq!(sol.el_residual, 0.0);
    assert_eq!(el_residual(&sol, &p), 0.0);
    assert!(sol.delta_omega.values().iter().all(|v| v.max_abs() < 1e-12));
}
