//! Effective rotation vector of a time-ordered exponential.
//!
//! For a field `n(t)` the ordered product `T exp((ε/2)∫n)` equals
//! `exp((ε/2) m_ε(τ))`, where `m_ε` obeys the closed ODE
//!
//! ```text
//! dm/dt = n − (ε/2) m∧n + f(ε|m|) m̂∧(m̂∧n),   f(x) = 1 − (x/2) cot(x/2)
//! ```
//!
//! This module integrates that ODE, inverts it, expands it in ε, iterates it,
//! and provides the brute-force ordered product used as the oracle.

use num_rational::Ratio;
use thiserror::Error;

use crate::grid::cumulative_trapezoid;
pub use crate::grid::{EpsilonStrength, PurePath, TimeGrid};
use crate::quat::{qexp, PureQuat, UnitQuat};
use crate::registry::{Named, Registry};

use std::f64::consts::PI;

/// Half-width of the excluded band around `ε|m| = 2π`.
pub const COT_GUARD: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MagnusError {
    #[error("ε|m| reached {value:.4} at t = {time:.6}, within the guard band of the 2π cot pole")]
    SingularCot { time: f64, value: f64 },
    #[error("Magnus order {0} is not supported (orders 0..=2)")]
    UnsupportedOrder(usize),
    #[error("iteration diverging: step change grew for 3 consecutive iterations (last change {last_change:e} at iteration {iteration})")]
    NonConvergence { iteration: usize, last_change: f64 },
    #[error("Bernoulli index {0} outside 0..=20")]
    BernoulliRange(usize),
}

/// Ordered midpoint product; later factors multiply on the left.
pub fn time_ordered_exp(n: &PurePath, epsilon: EpsilonStrength) -> UnitQuat {
    time_ordered_exp_between(n, epsilon, 0, n.grid().n_steps())
}

/// Ordered product over steps `first..last` only.
pub fn time_ordered_exp_between(n: &PurePath, epsilon: EpsilonStrength, first: usize, last: usize) -> UnitQuat {
    let h = 0.5 * epsilon.value() * n.grid().dt();
    let mut u = UnitQuat::IDENTITY;
    for k in first..last {
        u = qexp(n.midpoint(k).scale(h)) * u;
    }
    u
}

/// Partial ordered products at every node (`U(t_0) = 1`).
pub fn time_ordered_history(n: &PurePath, epsilon: EpsilonStrength) -> Vec<UnitQuat> {
    let h = 0.5 * epsilon.value() * n.grid().dt();
    let mut out = Vec::with_capacity(n.grid().nodes());
    let mut u = UnitQuat::IDENTITY;
    out.push(u);
    for k in 0..n.grid().n_steps() {
        u = qexp(n.midpoint(k).scale(h)) * u;
        out.push(u);
    }
    out
}

/// Coefficient `g` with `f(ε|m|) m̂∧(m̂∧n) = g · m∧(m∧n)`; finite at `m = 0`.
fn nested_coefficient(m2: f64, eps: f64) -> f64 {
    let x2 = eps * eps * m2;
    if x2 < 1e-2 {
        // f(x)/x² = Σ_{j≥1} (−1)^{j+1} B_{2j} x^{2j−2}/(2j)!
        let series = 1.0 / 12.0 + x2 * (1.0 / 720.0 + x2 * (1.0 / 30240.0 + x2 * (1.0 / 1209600.0 + x2 / 47900160.0)));
        eps * eps * series
    } else {
        let x = x2.sqrt();
        let half = 0.5 * x;
        (1.0 - half / half.tan()) / m2
    }
}

fn check_pole(m: &PureQuat, eps: f64, time: f64) -> Result<(), MagnusError> {
    let value = eps * m.norm();
    if value > 2.0 * PI - COT_GUARD {
        return Err(MagnusError::SingularCot { time, value });
    }
    Ok(())
}

fn m_rhs(m: &PureQuat, n: &PureQuat, eps: f64) -> PureQuat {
    let mn = m.cross(n);
    let g = nested_coefficient(m.norm_sqr(), eps);
    *n - mn.scale(0.5 * eps) + m.cross(&mn).scale(g)
}

/// Classic RK4 for `m_ε(t)` from `m_ε(0) = 0`.
pub fn solve_m_ode(n: &PurePath, epsilon: EpsilonStrength) -> Result<PurePath, MagnusError> {
    let grid = n.grid();
    let eps = epsilon.value();
    let dt = grid.dt();
    let v = n.values();
    let mut out = Vec::with_capacity(grid.nodes());
    let mut m = PureQuat::ZERO;
    out.push(m);
    for k in 0..grid.n_steps() {
        let t = grid.t(k);
        let nm = n.midpoint(k);
        let k1 = m_rhs(&m, &v[k], eps);
        let m2 = m + k1.scale(dt / 2.0);
        check_pole(&m2, eps, t + dt / 2.0)?;
        let k2 = m_rhs(&m2, &nm, eps);
        let m3 = m + k2.scale(dt / 2.0);
        check_pole(&m3, eps, t + dt / 2.0)?;
        let k3 = m_rhs(&m3, &nm, eps);
        let m4 = m + k3.scale(dt);
        check_pole(&m4, eps, t + dt)?;
        let k4 = m_rhs(&m4, &v[k + 1], eps);
        m += (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dt / 6.0);
        check_pole(&m, eps, t + dt)?;
        out.push(m);
    }
    Ok(PurePath::new(grid, out).expect("one value per node"))
}

/// Recovers `n(t)` from `m_ε(t)`:
/// `n = ṁ + ε h(x) m∧ṁ − ε² k(x) m∧(m∧ṁ)` with `x = ε|m|`,
/// `h = (1 − cos x)/x²`, `k = (sin x/x − 1)/x²`.
pub fn n_of_m(m: &PurePath, epsilon: EpsilonStrength) -> PurePath {
    let eps = epsilon.value();
    let dm = m.derivative();
    let values = m
        .values()
        .iter()
        .zip(dm.values())
        .map(|(mv, p)| {
            let x2 = eps * eps * mv.norm_sqr();
            let (h, k) = if x2 < 1e-2 {
                (
                    0.5 - x2 * (1.0 / 24.0 - x2 * (1.0 / 720.0 - x2 * (1.0 / 40320.0 - x2 / 3628800.0))),
                    -1.0 / 6.0 + x2 * (1.0 / 120.0 - x2 * (1.0 / 5040.0 - x2 * (1.0 / 362880.0 - x2 / 39916800.0))),
                )
            } else {
                let x = x2.sqrt();
                ((1.0 - x.cos()) / x2, (x.sin() / x - 1.0) / x2)
            };
            let mp = mv.cross(p);
            *p + mp.scale(eps * h) - mv.cross(&mp).scale(eps * eps * k)
        })
        .collect();
    PurePath::new(m.grid(), values).expect("same grid")
}

/// `j`-th coefficient of `m_ε = Σ ε^j m^(j)` by nested trapezoid quadrature.
pub fn magnus_term(n: &PurePath, order: usize) -> Result<PurePath, MagnusError> {
    let grid = n.grid();
    let dt = grid.dt();
    let v = n.values();
    let c = cumulative_trapezoid(v, dt);
    match order {
        0 => Ok(PurePath::new(grid, c).expect("same grid")),
        1 => {
            let integrand: Vec<PureQuat> = v.iter().zip(&c).map(|(a, b)| a.cross(b)).collect();
            let m1 = cumulative_trapezoid(&integrand, dt).into_iter().map(|x| x.scale(0.5)).collect();
            Ok(PurePath::new(grid, m1).expect("same grid"))
        }
        2 => {
            // n1∧(n2∧n3): inner pair integrates to P(t1) = ∫ n2∧C(t2).
            let inner: Vec<PureQuat> = v.iter().zip(&c).map(|(a, b)| a.cross(b)).collect();
            let p = cumulative_trapezoid(&inner, dt);
            // n3∧(n2∧n1) = n2 (n3·n1) − n1 (n3·n2); integrate n3 first to get C.
            let mut qmat = Vec::with_capacity(v.len());
            let mut acc = [[0.0; 3]; 3];
            qmat.push(acc);
            for kk in 0..v.len() - 1 {
                let a = v[kk].to_array();
                let ca = c[kk].to_array();
                let b = v[kk + 1].to_array();
                let cb = c[kk + 1].to_array();
                for (r, row) in acc.iter_mut().enumerate() {
                    for (s, cell) in row.iter_mut().enumerate() {
                        *cell += 0.5 * dt * (a[r] * ca[s] + b[r] * cb[s]);
                    }
                }
                qmat.push(acc);
            }
            let scal: Vec<PureQuat> = v.iter().zip(&c).map(|(a, b)| PureQuat::new(a.dot(b), 0.0, 0.0)).collect();
            let q = cumulative_trapezoid(&scal, dt);
            let integrand: Vec<PureQuat> = (0..v.len())
                .map(|kk| {
                    let n1 = v[kk].to_array();
                    let qm = &qmat[kk];
                    let qn = PureQuat::new(
                        qm[0][0] * n1[0] + qm[0][1] * n1[1] + qm[0][2] * n1[2],
                        qm[1][0] * n1[0] + qm[1][1] * n1[1] + qm[1][2] * n1[2],
                        qm[2][0] * n1[0] + qm[2][1] * n1[1] + qm[2][2] * n1[2],
                    );
                    v[kk].cross(&p[kk]) + qn - v[kk].scale(q[kk].x)
                })
                .collect();
            let m2 = cumulative_trapezoid(&integrand, dt).into_iter().map(|x| x.scale(1.0 / 6.0)).collect();
            Ok(PurePath::new(grid, m2).expect("same grid"))
        }
        j => Err(MagnusError::UnsupportedOrder(j)),
    }
}

/// Result of [`magnus_iterate`].
#[derive(Debug, Clone)]
pub struct IterateOutcome {
    pub path: PurePath,
    /// Sup-norm change produced by the final iteration (0 when no iteration ran).
    pub last_change: f64,
    pub iterations: usize,
}

/// Fixed-point iteration `m^[j] = ∫ rhs(m^[j−1], n)` starting from `m^[0] = ∫n`.
pub fn magnus_iterate(
    n: &PurePath,
    epsilon: EpsilonStrength,
    iterations: usize,
) -> Result<IterateOutcome, MagnusError> {
    let grid = n.grid();
    let eps = epsilon.value();
    let dt = grid.dt();
    let mut m = cumulative_trapezoid(n.values(), dt);
    let mut last_change = 0.0;
    let mut growth = 0;
    for it in 1..=iterations {
        for (k, mk) in m.iter().enumerate() {
            check_pole(mk, eps, grid.t(k))?;
        }
        let rhs: Vec<PureQuat> = m.iter().zip(n.values()).map(|(mk, nk)| m_rhs(mk, nk, eps)).collect();
        let next = cumulative_trapezoid(&rhs, dt);
        let change = next.iter().zip(&m).map(|(a, b)| (*a - *b).max_abs()).fold(0.0, f64::max);
        if it > 1 && change > last_change {
            growth += 1;
            if growth >= 3 {
                return Err(MagnusError::NonConvergence { iteration: it, last_change: change });
            }
        } else {
            growth = 0;
        }
        last_change = change;
        m = next;
    }
    Ok(IterateOutcome { path: PurePath::new(grid, m).expect("same grid"), last_change, iterations })
}

/// Exact Bernoulli number `B_j` (convention `B_1 = −1/2`) from
/// `B_j = Σ_k 1/(k+1) Σ_l (−1)^l C(k,l) l^j`.
pub fn bernoulli(j: usize) -> Result<Ratio<i128>, MagnusError> {
    if j > 20 {
        return Err(MagnusError::BernoulliRange(j));
    }
    let mut total = Ratio::from_integer(0i128);
    for k in 0..=j {
        let mut inner: i128 = 0;
        let mut binom: i128 = 1;
        for l in 0..=k {
            let power = if j == 0 { 1 } else { (l as i128).pow(j as u32) };
            let term = binom * power;
            inner += if l % 2 == 0 { term } else { -term };
            binom = binom * (k - l) as i128 / (l + 1) as i128;
        }
        total += Ratio::new(inner, (k + 1) as i128);
    }
    Ok(total)
}

pub fn bernoulli_f64(j: usize) -> Result<f64, MagnusError> {
    let b = bernoulli(j)?;
    Ok(*b.numer() as f64 / *b.denom() as f64)
}

/// Taylor coefficients `m^(0..=2)(τ)`-style paths extracted from the exact
/// ODE by central differences in ε with one Richardson step. Uses the
/// symmetry `m_{−ε}[n] = −m_ε[−n]` so only non-negative ε are integrated.
pub fn ode_taylor_coefficients(n: &PurePath, h: f64) -> Result<[PurePath; 3], MagnusError> {
    let neg = n.map(|v| -v);
    let solve = |p: &PurePath, e: f64| solve_m_ode(p, EpsilonStrength::new(e).expect("h > 0"));
    let m0 = solve(n, 0.0)?;
    let parts = |e: f64| -> Result<(Vec<PureQuat>, Vec<PureQuat>), MagnusError> {
        let plus = solve(n, e)?;
        let minus = solve(&neg, e)?.map(|v| -v);
        let odd = plus.values().iter().zip(minus.values()).map(|(a, b)| (*a - *b).scale(0.5 / e)).collect();
        let even = plus
            .values()
            .iter()
            .zip(minus.values())
            .zip(m0.values())
            .map(|((a, b), c)| ((*a + *b).scale(0.5) - *c).scale(1.0 / (e * e)))
            .collect();
        Ok((odd, even))
    };
    let (o1, e1) = parts(h)?;
    let (o2, e2) = parts(h / 2.0)?;
    let rich = |coarse: &[PureQuat], fine: &[PureQuat]| -> Vec<PureQuat> {
        coarse.iter().zip(fine).map(|(c, f)| (f.scale(4.0) - *c).scale(1.0 / 3.0)).collect()
    };
    let grid = n.grid();
    Ok([
        m0,
        PurePath::new(grid, rich(&o1, &o2)).expect("same grid"),
        PurePath::new(grid, rich(&e1, &e2)).expect("same grid"),
    ])
}

/// A way of computing `m_ε(t)` from `n(t)`.
pub trait RotationVectorMethod: Named + Send + Sync {
    fn rotation_vector(&self, n: &PurePath, epsilon: EpsilonStrength) -> Result<PurePath, MagnusError>;
}

/// RK4 integration of the exact ODE.
pub struct ExactOde;

/// Fixed-point iteration with a set number of sweeps.
pub struct Iterated {
    pub iterations: usize,
}

/// Truncated series `Σ_{j ≤ order} ε^j m^(j)`.
pub struct TruncatedSeries {
    pub order: usize,
}

impl Named for ExactOde {
    fn name(&self) -> &str {
        "exact-ode"
    }
}

impl RotationVectorMethod for ExactOde {
    fn rotation_vector(&self, n: &PurePath, epsilon: EpsilonStrength) -> Result<PurePath, MagnusError> {
        solve_m_ode(n, epsilon)
    }
}

impl Named for Iterated {
    fn name(&self) -> &str {
        "iterate"
    }
}

impl RotationVectorMethod for Iterated {
    fn rotation_vector(&self, n: &PurePath, epsilon: EpsilonStrength) -> Result<PurePath, MagnusError> {
        magnus_iterate(n, epsilon, self.iterations).map(|o| o.path)
    }
}

impl Named for TruncatedSeries {
    fn name(&self) -> &str {
        "magnus-series"
    }
}

impl RotationVectorMethod for TruncatedSeries {
    fn rotation_vector(&self, n: &PurePath, epsilon: EpsilonStrength) -> Result<PurePath, MagnusError> {
        let eps = epsilon.value();
        let mut total = PurePath::zeros(n.grid());
        for j in 0..=self.order {
            let term = magnus_term(n, j)?;
            let w = eps.powi(j as i32);
            total = PurePath::new(
                n.grid(),
                total.values().iter().zip(term.values()).map(|(a, b)| *a + b.scale(w)).collect(),
            )
            .expect("same grid");
        }
        Ok(total)
    }
}

/// Registry with `exact-ode`, `iterate` (12 sweeps) and `magnus-series` (order 2).
pub fn method_registry() -> Registry<dyn RotationVectorMethod> {
    let mut r: Registry<dyn RotationVectorMethod> = Registry::new("rotation-vector method");
    r.register(Box::new(ExactOde));
    r.register(Box::new(Iterated { iterations: 12 }));
    r.register(Box::new(TruncatedSeries { order: 2 }));
    r
}
