//! Kinematics of the rotating triad `E_i(t) = ū_c(t) e_i u_c(t)` driven by
//! `du_c/dt = ½ u_c Ω`, so that `∂_t E_i = E_i ∧ Ω`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{finite_difference, GridError, PurePath, TimeGrid};
use crate::quat::{qexp, PureQuat, QuatError, UnitQuat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("target has zero principal angle and winding {0}; an explicit axis is required")]
    AxisRequired(i64),
    #[error("target angle {0} needs an axis")]
    MissingAxis(f64),
    #[error("target angle must be finite, got {0}")]
    BadAngle(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Quat(#[from] QuatError),
}

/// Rigid triad sampled on a grid, with the generating quaternions `u_c(t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriadPath {
    grid: TimeGrid,
    e: [Vec<PureQuat>; 3],
    frames: Vec<UnitQuat>,
}

impl TriadPath {
    pub fn from_frames(grid: TimeGrid, frames: Vec<UnitQuat>) -> Result<Self, GridError> {
        if frames.len() != grid.nodes() {
            return Err(GridError::LengthMismatch { expected: grid.nodes(), got: frames.len() });
        }
        let e = PureQuat::BASIS.map(|b| frames.iter().map(|u| u.conj().rotate(&b)).collect());
        Ok(TriadPath { grid, e, frames })
    }

    /// `E_i(t) = e_i` throughout.
    pub fn static_triad(grid: TimeGrid) -> Self {
        Self::from_frames(grid, vec![UnitQuat::IDENTITY; grid.nodes()]).expect("one frame per node")
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn e(&self, i: usize) -> &[PureQuat] {
        &self.e[i]
    }

    pub fn refs(&self) -> [&[PureQuat]; 3] {
        [&self.e[0], &self.e[1], &self.e[2]]
    }

    pub fn at(&self, k: usize) -> [PureQuat; 3] {
        [self.e[0][k], self.e[1][k], self.e[2][k]]
    }

    pub fn frames(&self) -> &[UnitQuat] {
        &self.frames
    }

    pub fn last(&self) -> [PureQuat; 3] {
        self.at(self.grid.n_steps())
    }

    /// Largest violation of `E_i·E_j = δ_ij` and `E_1∧E_2 = E_3` over all nodes.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.grid.nodes() {
            let e = self.at(k);
            for i in 0..3 {
                for j in 0..3 {
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((e[i].dot(&e[j]) - target).abs());
                }
            }
            worst = worst.max((e[0].cross(&e[1]) - e[2]).max_abs());
        }
        worst
    }

    /// Rotating-frame rate `Ω = ½ ε^{ijk} E_i (E_j·∂_t E_k)` with central
    /// differences for `∂_t E`.
    pub fn rotating_rates(&self) -> Vec<PureQuat> {
        let lab = self.lab_rates();
        lab.iter()
            .enumerate()
            .map(|(k, w)| {
                let e = self.at(k);
                e[0].scale(w.x) + e[1].scale(w.y) + e[2].scale(w.z)
            })
            .collect()
    }

    /// Lab components `ω^i = ½ ε^{ijk} E_j·∂_t E_k`.
    pub fn lab_rates(&self) -> Vec<PureQuat> {
        let dt = self.grid.dt();
        let de =
            [finite_difference(&self.e[0], dt), finite_difference(&self.e[1], dt), finite_difference(&self.e[2], dt)];
        (0..self.grid.nodes())
            .map(|k| {
                let e = self.at(k);
                let d = [de[0][k], de[1][k], de[2][k]];
                PureQuat::new(
                    0.5 * (e[1].dot(&d[2]) - e[2].dot(&d[1])),
                    0.5 * (e[2].dot(&d[0]) - e[0].dot(&d[2])),
                    0.5 * (e[0].dot(&d[1]) - e[1].dot(&d[0])),
                )
            })
            .collect()
    }
}

/// Control field in both frames: `ω^i = Ω·E_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPath {
    pub grid: TimeGrid,
    pub omega_rot: PurePath,
    pub omega_lab: PurePath,
}

impl ControlPath {
    pub fn from_rotating(omega_rot: PurePath, triad: &TriadPath) -> Self {
        let lab = omega_rot
            .values()
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let e = triad.at(k);
                PureQuat::new(w.dot(&e[0]), w.dot(&e[1]), w.dot(&e[2]))
            })
            .collect();
        let grid = omega_rot.grid();
        ControlPath { grid, omega_lab: PurePath::new(grid, lab).expect("same grid"), omega_rot }
    }
}

/// Integrates `u_{k+1} = u_k exp(½ dt Ω(t_k*))` from `u_0 = 1` with midpoint
/// values of `Ω` from cubic interpolation.
pub fn propagate_triad(omega_rot: &PurePath) -> TriadPath {
    let grid = omega_rot.grid();
    let h = 0.5 * grid.dt();
    let mut frames = Vec::with_capacity(grid.nodes());
    let mut u = UnitQuat::IDENTITY;
    frames.push(u);
    for k in 0..grid.n_steps() {
        u = u * qexp(omega_rot.midpoint(k).scale(h));
        frames.push(u);
    }
    TriadPath::from_frames(grid, frames).expect("one frame per node")
}

/// Lab and rotating-frame controls recovered from a triad.
pub fn omega_from_triad(e: &TriadPath) -> ControlPath {
    let grid = e.grid();
    let lab = e.lab_rates();
    let rot = lab
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let t = e.at(k);
            t[0].scale(w.x) + t[1].scale(w.y) + t[2].scale(w.z)
        })
        .collect();
    ControlPath {
        grid,
        omega_rot: PurePath::new(grid, rot).expect("same grid"),
        omega_lab: PurePath::new(grid, lab).expect("same grid"),
    }
}

/// `|Ω|² = (1/8) Σ_{ij} (E_i·∂E_j − E_j·∂E_i)²`.
pub fn power_first_line(e: &[PureQuat; 3], de: &[PureQuat; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let a = e[i].dot(&de[j]) - e[j].dot(&de[i]);
            s += a * a;
        }
    }
    s / 8.0
}

/// `|Ω|² = ½ ε^{ijk} E_i·(∂E_j ∧ ∂E_k)`.
pub fn power_second_line(e: &[PureQuat; 3], de: &[PureQuat; 3]) -> f64 {
    e[0].dot(&de[1].cross(&de[2])) + e[1].dot(&de[2].cross(&de[0])) + e[2].dot(&de[0].cross(&de[1]))
}

/// Anything that carries an instantaneous output power `|Ω(t)|²`.
pub trait PowerSource {
    fn grid(&self) -> TimeGrid;
    fn power(&self) -> Vec<f64>;
}

impl PowerSource for TriadPath {
    fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// Second-line form with the rigid derivative `∂E_i = E_i ∧ Ω`.
    fn power(&self) -> Vec<f64> {
        self.rotating_rates()
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let e = self.at(k);
                let de = e.map(|ei| ei.cross(w));
                power_second_line(&e, &de)
            })
            .collect()
    }
}

impl PowerSource for ControlPath {
    fn grid(&self) -> TimeGrid {
        self.grid
    }

    fn power(&self) -> Vec<f64> {
        self.omega_rot.values().iter().map(PureQuat::norm_sqr).collect()
    }
}

pub fn power<P: PowerSource>(p: &P) -> Vec<f64> {
    p.power()
}

/// `E_out = ½ ∫ |Ω|² dt` by the trapezoid rule.
pub fn energy_output<P: PowerSource>(p: &P) -> f64 {
    let w = p.grid().trapezoid_weights();
    0.5 * p.power().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
}

/// Target `U_T` given as principal rotation `q_T = θ r̂`, `θ ∈ [0, 2π)`,
/// plus the number of extra full turns of the drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetRotation {
    pub q_t: PureQuat,
    pub u_t: UnitQuat,
    pub winding: i64,
    axis: Option<PureQuat>,
}

impl TargetRotation {
    /// `angle` may be any real; it is reduced to `[0, 2π)` and the carried
    /// full turns are added to `winding`.
    pub fn new(axis: Option<PureQuat>, angle: f64, winding: i64) -> Result<Self, EvolutionError> {
        if !angle.is_finite() {
            return Err(EvolutionError::BadAngle(angle));
        }
        let axis = match axis {
            Some(a) => Some(a.normalized().ok_or(QuatError::Degenerate(0.0))?),
            None => None,
        };
        let turns = (angle / (2.0 * PI)).floor();
        let mut theta = angle - turns * 2.0 * PI;
        let mut carried = turns as i64;
        if theta >= 2.0 * PI {
            theta -= 2.0 * PI;
            carried += 1;
        }
        let q_t = match axis {
            Some(a) => a.scale(theta),
            None if theta == 0.0 => PureQuat::ZERO,
            None => return Err(EvolutionError::MissingAxis(angle)),
        };
        Ok(TargetRotation { q_t, u_t: qexp(q_t.scale(0.5)), winding: winding + carried, axis })
    }

    pub fn identity() -> Self {
        TargetRotation::new(None, 0.0, 0).expect("identity")
    }

    pub fn theta(&self) -> f64 {
        self.q_t.norm()
    }

    pub fn axis(&self) -> Option<PureQuat> {
        self.axis
    }
}

/// Start and end triads: `E_i(0) = e_i`, `E_i(τ) = ū_T e_i u_T`.
pub fn boundary_triad(target: &TargetRotation) -> ([PureQuat; 3], [PureQuat; 3]) {
    let end = PureQuat::BASIS.map(|b| target.u_t.conj().rotate(&b));
    (PureQuat::BASIS, end)
}

/// Constant drift `((θ_T + 2πn)/τ) r̂` reaching the target in sector `n`.
pub fn drift_for_target(target: &TargetRotation, tau: f64) -> Result<PureQuat, EvolutionError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(GridError::BadTau(tau).into());
    }
    let total = target.theta() + 2.0 * PI * target.winding as f64;
    if total == 0.0 {
        return Ok(PureQuat::ZERO);
    }
    let axis = target.axis.ok_or(EvolutionError::AxisRequired(target.winding))?;
    Ok(axis.scale(total / tau))
}

/// Largest componentwise distance between two triads.
pub fn triad_distance(a: &[PureQuat; 3], b: &[PureQuat; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).max_abs()).fold(0.0, f64::max)
}
