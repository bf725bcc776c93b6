//! Discretized `S_c` over nodal deviations `δΩ̃_k` and its adjoint gradient.
//!
//! With `u_0(t) = exp(½ t Ω_D)` the control frame factors as `u_c = v u_0`,
//! `dv/dt = ½ v δΩ̃`, and the rotating-frame field is
//! `Ω = Ω_D + ū_0 δΩ̃ u_0`. Steps use `v_{k+1} = v_k exp(½ dt y_k)` with
//! `y_k = (x_k + x_{k+1})/2`.

use crate::evolution::TriadPath;
use crate::grid::TimeGrid;
use crate::noise::LagTable;
use crate::quat::{qexp, PureQuat, UnitQuat};

/// Terms of the augmented objective at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts {
    pub action: f64,
    pub energy: f64,
    pub penalty: f64,
}

impl ObjectiveParts {
    pub fn total(&self) -> f64 {
        self.action + self.energy + self.penalty
    }
}

/// Forward-pass state kept for the adjoint sweep.
#[derive(Debug, Clone)]
pub struct Forward {
    pub v: Vec<UnitQuat>,
    pub steps: Vec<PureQuat>,
    pub triad: TriadPath,
    pub dual: [Vec<PureQuat>; 3],
    pub parts: ObjectiveParts,
}

impl Forward {
    /// Constraint `h = vec(v_N)`.
    pub fn terminal(&self) -> PureQuat {
        self.v.last().expect("nonempty").vector()
    }
}

/// Everything fixed during one minimization.
#[derive(Debug, Clone)]
pub struct Transcription {
    table: LagTable,
    drift: PureQuat,
    lambda: f64,
    weights: Vec<f64>,
    u0: Vec<UnitQuat>,
    pub multiplier: PureQuat,
    pub penalty: f64,
}

/// `J_rᵀ(p) g` for the right Jacobian of `p ↦ exp(p)`:
/// `exp(p + δ) = exp(p) exp(J_r δ)`.
pub fn right_jacobian_transpose(p: &PureQuat, g: &PureQuat) -> PureQuat {
    let t2 = p.norm_sqr();
    let (a, c, b) = if t2 < 1e-6 {
        // A = sin 2θ/2θ, (1 − A)/θ², B/θ with B = (1 − cos 2θ)/2θ
        (1.0 - 2.0 * t2 / 3.0, 2.0 / 3.0 - 2.0 * t2 / 15.0, 1.0 - t2 / 3.0)
    } else {
        let t = t2.sqrt();
        let a = (2.0 * t).sin() / (2.0 * t);
        (a, (1.0 - a) / t2, (1.0 - (2.0 * t).cos()) / (2.0 * t * t))
    };
    g.scale(a) + p.scale(c * p.dot(g)) + p.cross(g).scale(b)
}

impl Transcription {
    pub fn new(table: LagTable, drift: PureQuat, lambda: f64) -> Self {
        let grid = table.grid();
        let u0 = grid.times().iter().map(|t| qexp(drift.scale(0.5 * t))).collect();
        Transcription {
            weights: grid.trapezoid_weights(),
            table,
            drift,
            lambda,
            u0,
            multiplier: PureQuat::ZERO,
            penalty: 0.0,
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.table.grid()
    }

    pub fn table(&self) -> &LagTable {
        &self.table
    }

    pub fn drift(&self) -> PureQuat {
        self.drift
    }

    pub fn u0(&self) -> &[UnitQuat] {
        &self.u0
    }

    pub fn dimension(&self) -> usize {
        3 * self.grid().nodes()
    }

    pub fn forward(&self, x: &[PureQuat]) -> Forward {
        let grid = self.grid();
        let half_dt = 0.5 * grid.dt();
        let mut v = Vec::with_capacity(grid.nodes());
        let mut steps = Vec::with_capacity(grid.n_steps());
        let mut cur = UnitQuat::IDENTITY;
        v.push(cur);
        for k in 0..grid.n_steps() {
            let p = (x[k] + x[k + 1]).scale(0.5 * half_dt);
            cur = cur * qexp(p);
            steps.push(p);
            v.push(cur);
        }
        let frames = v.iter().zip(&self.u0).map(|(a, b)| *a * *b).collect();
        let triad = TriadPath::from_frames(grid, frames).expect("one frame per node");
        let dual = self.table.dual(triad.refs());
        let action = self.table.action(triad.refs(), &dual);
        let energy = 0.5
            * self.lambda
            * x.iter().zip(&self.weights).map(|(xk, w)| w * (self.drift + *xk).norm_sqr()).sum::<f64>();
        let h = v.last().expect("nonempty").vector();
        let penalty = self.multiplier.dot(&h) + 0.5 * self.penalty * h.norm_sqr();
        Forward { v, steps, triad, dual, parts: ObjectiveParts { action, energy, penalty } }
    }

    pub fn value(&self, x: &[PureQuat]) -> f64 {
        self.forward(x).parts.total()
    }

    /// Objective and gradient by one forward and one backward sweep.
    pub fn value_and_gradient(&self, x: &[PureQuat]) -> (Forward, Vec<PureQuat>) {
        let grid = self.grid();
        let n = grid.n_steps();
        let half_dt = 0.5 * grid.dt();
        let fwd = self.forward(x);
        // sensitivity to right perturbations v_a → v_a exp(ζ_a)
        let mut c: Vec<PureQuat> = (0..grid.nodes())
            .map(|a| {
                let e = fwd.triad.at(a);
                let torque = (0..3).fold(PureQuat::ZERO, |acc, i| acc + e[i].cross(&fwd.dual[i][a]));
                self.u0[a].rotate(&torque).scale(-2.0 * self.weights[a])
            })
            .collect();
        let vn = fwd.v[n];
        let h = vn.vector();
        let g = self.multiplier + h.scale(self.penalty);
        c[n] += g.scale(vn.w()) - h.cross(&g);

        let mut adj = c[n];
        let mut grad_step = vec![PureQuat::ZERO; n];
        for k in (0..n).rev() {
            grad_step[k] = right_jacobian_transpose(&fwd.steps[k], &adj).scale(half_dt);
            if k > 0 {
                adj = c[k] + qexp(fwd.steps[k]).rotate(&adj);
            }
        }
        let mut grad: Vec<PureQuat> =
            x.iter().zip(&self.weights).map(|(xk, w)| (self.drift + *xk).scale(self.lambda * w)).collect();
        for k in 0..n {
            grad[k] += grad_step[k].scale(0.5);
            grad[k + 1] += grad_step[k].scale(0.5);
        }
        (fwd, grad)
    }
}

pub fn flatten(x: &[PureQuat]) -> Vec<f64> {
    x.iter().flat_map(|v| v.to_array()).collect()
}

pub fn unflatten(x: &[f64]) -> Vec<PureQuat> {
    x.chunks_exact(3).map(|c| PureQuat::new(c[0], c[1], c[2])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{CovarianceKernel, DiagonalConstant, OneOverF};

    fn sample_x(nodes: usize) -> Vec<PureQuat> {
        (0..nodes)
            .map(|k| {
                let t = k as f64 / (nodes - 1) as f64;
                PureQuat::new((3.0 * t).sin(), 2.0 * t - 1.0, (5.0 * t).cos() * 0.7)
            })
            .collect()
    }

    #[test]
    fn jacobian_against_finite_differences() {
        for p in [PureQuat::new(0.3, -0.2, 0.9), PureQuat::new(1e-4, 2e-4, -1e-4), PureQuat::new(1.4, 0.1, 1.1)] {
            let base = qexp(p);
            for dir in PureQuat::BASIS {
                let h = 1e-6;
                let plus = qexp(p + dir.scale(h));
                let minus = qexp(p - dir.scale(h));
                // ζ with exp(p+δ) = exp(p) exp(ζ): ζ ≈ vec(ū (u_+ − u_−))/2h
                let dz = ((base.conj() * plus).vector() - (base.conj() * minus).vector()).scale(0.5 / h);
                for g in PureQuat::BASIS {
                    let lhs = right_jacobian_transpose(&p, &g).dot(&dir);
                    assert!((lhs - g.dot(&dz)).abs() < 1e-8, "{p:?} {lhs} {}", g.dot(&dz));
                }
            }
        }
    }

    #[test]
    fn adjoint_matches_central_differences() {
        let grid = TimeGrid::new(1.0, 24).unwrap();
        let kernels: Vec<(Box<dyn CovarianceKernel>, f64)> = vec![
            (Box::new(OneOverF::new(8.0, 0.1, 20.0, [1.0, 0.0, 0.0]).unwrap()), 0.05),
            (Box::new(DiagonalConstant::new([0.5, 1.0, 0.2]).unwrap()), 0.3),
        ];
        for (k, lambda) in kernels {
            let mut tr = Transcription::new(LagTable::new(k.as_ref(), grid), PureQuat::new(6.0, 0.0, 6.0), lambda);
            tr.multiplier = PureQuat::new(0.3, -0.1, 0.2);
            tr.penalty = 4.0;
            let x = sample_x(grid.nodes());
            let (_, grad) = tr.value_and_gradient(&x);
            let flat = flatten(&x);
            let g = flatten(&grad);
            let h = 1e-6;
            for i in (0..flat.len()).step_by(5) {
                let mut p = flat.clone();
                p[i] += h;
                let mut m = flat.clone();
                m[i] -= h;
                let fd = (tr.value(&unflatten(&p)) - tr.value(&unflatten(&m))) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()), "i = {i}: fd {fd} adjoint {}", g[i]);
            }
        }
    }
}
