use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde_json::Value;

use super::covariance::{assemble_covariance, CovarianceFactor};
use super::kernels::CovarianceKernel;
use super::NoiseError;
use crate::grid::TimeGrid;
use crate::quat::PureQuat;

/// Draws zero-mean Gaussian paths with the grid covariance of a kernel.
///
/// Path `p` under seed `s` always comes from ChaCha stream `p` of key `s`,
/// so results do not depend on how paths are split across threads.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    grid: TimeGrid,
    factor: CovarianceFactor,
    seed: u64,
    kernel: Value,
}

impl NoiseSampler {
    pub fn new(k: &dyn CovarianceKernel, grid: TimeGrid, seed: u64) -> Result<Self, NoiseError> {
        let factor = CovarianceFactor::factorize(&assemble_covariance(k, grid))?;
        Ok(NoiseSampler { grid, factor, seed, kernel: k.describe() })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn factor(&self) -> &CovarianceFactor {
        &self.factor
    }

    /// Lab-frame components at every node for path number `index`.
    pub fn path(&self, index: u64) -> Vec<PureQuat> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let z: Vec<f64> = (0..self.factor.rank()).map(|_| rng.sample(StandardNormal)).collect();
        let mut flat = vec![0.0; self.factor.dim()];
        self.factor.apply(&z, &mut flat);
        flat.chunks_exact(3).map(|c| PureQuat::new(c[0], c[1], c[2])).collect()
    }
}

/// A batch of sampled paths, stored `count × 3 × nodes`.
#[derive(Debug, Clone)]
pub struct NoiseSampleSet {
    pub grid: TimeGrid,
    pub count: usize,
    pub seed: u64,
    pub kernel: Value,
    data: Vec<f64>,
}

impl NoiseSampleSet {
    /// Component `i` of path `p` at node `a`.
    pub fn value(&self, p: usize, i: usize, a: usize) -> f64 {
        let n = self.grid.nodes();
        self.data[(p * 3 + i) * n + a]
    }

    /// Component `i` of path `p` over all nodes.
    pub fn component(&self, p: usize, i: usize) -> &[f64] {
        let n = self.grid.nodes();
        &self.data[(p * 3 + i) * n..(p * 3 + i + 1) * n]
    }

    pub fn path(&self, p: usize) -> Vec<PureQuat> {
        (0..self.grid.nodes())
            .map(|a| PureQuat::new(self.value(p, 0, a), self.value(p, 1, a), self.value(p, 2, a)))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

pub fn sample_paths(
    k: &dyn CovarianceKernel,
    grid: TimeGrid,
    count: usize,
    seed: u64,
) -> Result<NoiseSampleSet, NoiseError> {
    let sampler = NoiseSampler::new(k, grid, seed)?;
    let n = grid.nodes();
    let mut data = vec![0.0; count * 3 * n];
    data.par_chunks_mut(3 * n).enumerate().for_each(|(p, chunk)| {
        let path = sampler.path(p as u64);
        for (a, v) in path.iter().enumerate() {
            chunk[a] = v.x;
            chunk[n + a] = v.y;
            chunk[2 * n + a] = v.z;
        }
    });
    Ok(NoiseSampleSet { grid, count, seed, kernel: sampler.kernel, data })
}
