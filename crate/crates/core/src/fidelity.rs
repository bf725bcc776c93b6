//! Fidelity of a spin-s rotation under weak stationary noise, in closed form
//! and by Monte Carlo over sampled noise paths.
//!
//! Traces are normalized so that `Tr 1 = 1`; amplitudes and fidelities are
//! therefore already in `[−1, 1]`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolution::TriadPath;
use crate::grid::{EpsilonStrength, PurePath};
use crate::magnus::time_ordered_exp;
use crate::noise::{CovarianceKernel, LagTable, NoiseError, NoiseSampler};
use crate::quat::PureQuat;

/// Slack allowed on `|x| ≤ 1` before the Chebyshev route refuses.
pub const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FidelityError {
    #[error("argument {0} outside [-1, 1]")]
    DomainError(f64),
    #[error("need at least 2 samples for a standard error, got {0}")]
    DegenerateSample(usize),
    #[error("two_s must be at least 1, got {0}")]
    InvalidSpin(u32),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

/// Spin quantum number stored as `2s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SpinNumber(u32);

impl SpinNumber {
    pub const HALF: SpinNumber = SpinNumber(1);

    pub fn new(two_s: u32) -> Result<Self, FidelityError> {
        if two_s == 0 {
            return Err(FidelityError::InvalidSpin(two_s));
        }
        Ok(SpinNumber(two_s))
    }

    pub fn two_s(&self) -> u32 {
        self.0
    }

    pub fn s(&self) -> f64 {
        0.5 * self.0 as f64
    }

    pub fn multiplicity(&self) -> usize {
        self.0 as usize + 1
    }

    /// `j = −s, −s+1, …, s`.
    pub fn projections(&self) -> impl Iterator<Item = f64> {
        let two_s = self.0 as i64;
        (0..=two_s).map(move |k| 0.5 * (2 * k - two_s) as f64)
    }
}

impl TryFrom<u32> for SpinNumber {
    type Error = FidelityError;
    fn try_from(v: u32) -> Result<Self, Self::Error> {
        SpinNumber::new(v)
    }
}

impl From<SpinNumber> for u32 {
    fn from(s: SpinNumber) -> u32 {
        s.0
    }
}

/// Monte Carlo fidelity for one spin, with the weak-noise prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityEstimate {
    pub spin: SpinNumber,
    pub mean: Complex64,
    pub std_error: f64,
    pub imag_std_error: f64,
    pub samples: usize,
    pub action: f64,
    pub analytic_prediction: f64,
}

/// `S = ½ ∫∫ N_ij(t,t′) E_i(t)·E_j(t′)` by 2-D trapezoid.
#[allow(non_snake_case)]
pub fn action_S(e: &TriadPath, k: &dyn CovarianceKernel) -> f64 {
    let table = LagTable::new(k, e.grid());
    let d = table.dual(e.refs());
    table.action(e.refs(), &d)
}

/// Leading-order fidelity `(2s+1)⁻¹ Σ_j exp(−(jε)² S)`.
pub fn fidelity_weak(s: SpinNumber, epsilon: EpsilonStrength, action: f64) -> f64 {
    let e2 = epsilon.value() * epsilon.value();
    let sum: f64 = s.projections().map(|j| (-(j * j) * e2 * action).exp()).sum();
    sum / s.multiplicity() as f64
}

/// `A_{1/2} = cos(ε m/2)`.
pub fn amplitude_half(m_tau: f64, epsilon: EpsilonStrength) -> f64 {
    (0.5 * epsilon.value() * m_tau).cos()
}

/// `(2s+1)⁻¹ Σ_j exp(−i j ε m)` by direct summation.
pub fn amplitude_s(s: SpinNumber, m_tau: f64, epsilon: EpsilonStrength) -> Complex64 {
    amplitude_from_phase(s, epsilon.value() * m_tau)
}

/// Same sum with the phase `φ = ε m` given directly.
pub fn amplitude_from_phase(s: SpinNumber, phi: f64) -> Complex64 {
    let sum: Complex64 = s.projections().map(|j| Complex64::from_polar(1.0, -j * phi)).sum();
    sum / s.multiplicity() as f64
}

/// Chebyshev polynomial of the second kind `U_j(x)`.
pub fn chebyshev_u(j: u32, x: f64) -> Result<f64, FidelityError> {
    if !(x.abs() <= 1.0 + DOMAIN_SLACK) {
        return Err(FidelityError::DomainError(x));
    }
    if j == 0 {
        return Ok(1.0);
    }
    let (mut prev, mut cur) = (1.0, 2.0 * x);
    for _ in 1..j {
        let next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `A_s = (2s+1)⁻¹ U_{2s}(A_{1/2})`.
pub fn amplitude_from_half(s: SpinNumber, a_half: f64) -> Result<f64, FidelityError> {
    Ok(chebyshev_u(s.two_s(), a_half)? / s.multiplicity() as f64)
}

/// Recovers `φ = ε m ∈ [0, 2π]` from `A_{1/2}` and sums over `j`.
pub fn lift_half(s: SpinNumber, a_half: f64) -> Result<Complex64, FidelityError> {
    if !(a_half.abs() <= 1.0 + DOMAIN_SLACK) {
        return Err(FidelityError::DomainError(a_half));
    }
    Ok(amplitude_from_phase(s, 2.0 * a_half.clamp(-1.0, 1.0).acos()))
}

#[derive(Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

fn mean_and_error(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mut acc = Kahan::default();
    values.clone().for_each(|v| acc.add(v));
    let mean = acc.sum / n as f64;
    let mut sq = Kahan::default();
    values.for_each(|v| sq.add((v - mean) * (v - mean)));
    let var = sq.sum / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// `n = n^i E_i` for lab-frame components `n^i` given at the grid nodes.
pub fn noise_along_triad(e: &TriadPath, lab: &[PureQuat]) -> PurePath {
    let rotated = lab
        .iter()
        .enumerate()
        .map(|(a, c)| {
            let t = e.at(a);
            t[0].scale(c.x) + t[1].scale(c.y) + t[2].scale(c.z)
        })
        .collect();
    PurePath::new(e.grid(), rotated).expect("one value per node")
}

/// `A_{1/2}` of every sampled path: noise components `n^i` drawn in the lab
/// frame, rotated to `n = n^i E_i`, time-ordered.
pub fn sampled_half_amplitudes(
    e: &TriadPath,
    k: &dyn CovarianceKernel,
    epsilon: EpsilonStrength,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>, FidelityError> {
    let grid = e.grid();
    let sampler = NoiseSampler::new(k, grid, seed)?;
    Ok((0..count)
        .into_par_iter()
        .map(|p| {
            let n = noise_along_triad(e, &sampler.path(p as u64));
            time_ordered_exp(&n, epsilon).w()
        })
        .collect())
}

/// Monte Carlo fidelities for several spins from one set of noise paths.
pub fn mc_fidelity_spins(
    e: &TriadPath,
    k: &dyn CovarianceKernel,
    epsilon: EpsilonStrength,
    spins: &[SpinNumber],
    count: usize,
    seed: u64,
) -> Result<Vec<FidelityEstimate>, FidelityError> {
    if count < 2 {
        return Err(FidelityError::DegenerateSample(count));
    }
    let halves = sampled_half_amplitudes(e, k, epsilon, count, seed)?;
    let action = action_S(e, k);
    spins
        .iter()
        .map(|&s| {
            let amps = halves.iter().map(|a| lift_half(s, *a)).collect::<Result<Vec<_>, _>>()?;
            let (re, re_err) = mean_and_error(amps.iter().map(|a| a.re), count);
            let (im, im_err) = mean_and_error(amps.iter().map(|a| a.im), count);
            Ok(FidelityEstimate {
                spin: s,
                mean: Complex64::new(re, im),
                std_error: re_err,
                imag_std_error: im_err,
                samples: count,
                action,
                analytic_prediction: fidelity_weak(s, epsilon, action),
            })
        })
        .collect()
}

pub fn mc_fidelity(
    e: &TriadPath,
    k: &dyn CovarianceKernel,
    epsilon: EpsilonStrength,
    s: SpinNumber,
    count: usize,
    seed: u64,
) -> Result<FidelityEstimate, FidelityError> {
    Ok(mc_fidelity_spins(e, k, epsilon, &[s], count, seed)?.remove(0))
}
