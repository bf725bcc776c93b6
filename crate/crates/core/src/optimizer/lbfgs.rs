//! Limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsSettings {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop after three consecutive iterations whose relative decrease is
    /// below this.
    pub step_tol: f64,
    /// Stop once `‖g‖∞` falls below this.
    pub grad_tol: f64,
    /// Near the rounding floor of `f`, steps that raise `f` by at most this
    /// relative amount are accepted when the directional derivative shrinks
    /// (approximate Wolfe). Zero disables it.
    pub floor: f64,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        LbfgsSettings { memory: 12, max_iterations: 20_000, step_tol: 1e-10, grad_tol: 1e-12, floor: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    SmallDecrease,
    SmallGradient,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub status: LbfgsStatus,
}

/// The line search found no decrease along steepest descent either.
#[derive(Debug, Clone)]
pub struct LineSearchFailure {
    pub last: LbfgsOutcome,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn direction(g: &[f64], mem: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().map(|x| -x).collect();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y, rho) in mem.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = mem.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q
}

pub fn minimize(
    mut objective: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    x0: Vec<f64>,
    settings: &LbfgsSettings,
) -> Result<LbfgsOutcome, LineSearchFailure> {
    let mut x = x0;
    let (mut f, mut g) = objective(&x);
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(settings.memory);
    let mut quiet = 0;
    let g0 = inf_norm(&g);
    let outcome = |x: &[f64], f: f64, g: &[f64], it: usize, status| LbfgsOutcome {
        x: x.to_vec(),
        f,
        grad_norm: inf_norm(g),
        iterations: it,
        status,
    };
    for it in 0..settings.max_iterations {
        if inf_norm(&g) <= settings.grad_tol {
            return Ok(outcome(&x, f, &g, it, LbfgsStatus::SmallGradient));
        }
        let mut d = direction(&g, &mem);
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            mem.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&d, &g);
        }
        let mut step = if mem.is_empty() { (1.0 / inf_norm(&g)).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for attempt in 0..2 {
            for _ in 0..60 {
                let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
                let (ft, gt) = objective(&trial);
                if ft.is_finite() && ft < f && ft <= f + 1e-4 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
                if settings.floor > 0.0 && ft.is_finite() && ft <= f + settings.floor * f.abs() {
                    let st = dot(&d, &gt);
                    if st >= 0.9 * slope && st <= -0.8 * slope {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
                step *= 0.5;
            }
            if accepted.is_some() || attempt == 1 || mem.is_empty() {
                break;
            }
            mem.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&d, &g);
            step = (1.0 / inf_norm(&g)).min(1.0);
        }
        let Some((xn, fnew, gn)) = accepted else {
            // no representable decrease left after a run of tiny steps: this
            // is the rounding floor, not a failure
            if quiet > 0 || inf_norm(&g) <= 1e-8 * g0 || (settings.floor > 0.0 && it > 0) {
                return Ok(outcome(&x, f, &g, it, LbfgsStatus::SmallDecrease));
            }
            return Err(LineSearchFailure { last: outcome(&x, f, &g, it, LbfgsStatus::MaxIterations) });
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if mem.len() == settings.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        let decrease = f - fnew;
        x = xn;
        f = fnew;
        g = gn;
        if settings.step_tol > 0.0 && decrease <= settings.step_tol * f.abs().max(1.0) {
            quiet += 1;
            if quiet >= 3 {
                return Ok(outcome(&x, f, &g, it + 1, LbfgsStatus::SmallDecrease));
            }
        } else {
            quiet = 0;
        }
    }
    Ok(outcome(&x, f, &g, settings.max_iterations, LbfgsStatus::MaxIterations))
}
