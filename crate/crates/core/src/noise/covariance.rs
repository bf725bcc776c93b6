use rayon::prelude::*;

use super::kernels::{CovarianceKernel, Mat3};
use super::NoiseError;
use crate::grid::TimeGrid;
use crate::quat::PureQuat;

/// Dense covariance of all noise components on all nodes; row/column index
/// `3·node + component`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl CovarianceMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.dim + c]
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).fold(0.0, f64::max)
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|r| (0..r).all(|c| self.get(r, c) == self.get(c, r)))
    }
}

/// Block entries `N_ij(|t_a − t_b|)`.
pub fn assemble_covariance(k: &dyn CovarianceKernel, grid: TimeGrid) -> CovarianceMatrix {
    let lags = LagTable::new(k, grid);
    let nodes = grid.nodes();
    let dim = 3 * nodes;
    let mut data = vec![0.0; dim * dim];
    data.par_chunks_mut(dim).enumerate().for_each(|(r, row)| {
        let (a, i) = (r / 3, r % 3);
        for b in 0..nodes {
            let m = &lags.lags[a.abs_diff(b)];
            for j in 0..3 {
                row[3 * b + j] = m[i][j];
            }
        }
    });
    CovarianceMatrix { dim, data }
}

/// Low-rank factor `C ≈ L Lᵀ` from pivoted Cholesky.
///
/// Pivoting stops once the largest remaining diagonal falls below
/// `tol · max diag`; the tolerance is escalated 1e−12 → 1e−10 → 1e−8 if the
/// remainder is found indefinite.
#[derive(Debug, Clone)]
pub struct CovarianceFactor {
    dim: usize,
    rank: usize,
    /// Rows of `L` that are not identically zero.
    rows: Vec<usize>,
    /// Row-major `rows.len() × rank`.
    l: Vec<f64>,
    tolerance: f64,
}

const TOLERANCES: [f64; 3] = [1e-12, 1e-10, 1e-8];

impl CovarianceFactor {
    pub fn factorize(c: &CovarianceMatrix) -> Result<CovarianceFactor, NoiseError> {
        let dim = c.dim;
        let max_diag = c.max_diagonal();
        let min_diag = (0..dim).map(|i| c.get(i, i)).fold(0.0, f64::min);
        if min_diag < 0.0 {
            return Err(NoiseError::NotPSD { min_eigen: min_diag, max_diag });
        }
        if max_diag == 0.0 {
            return Ok(CovarianceFactor { dim, rank: 0, rows: Vec::new(), l: Vec::new(), tolerance: 0.0 });
        }
        let mut worst = 0.0;
        for &tol in &TOLERANCES {
            let (cols, remaining) = pivoted_columns(c, tol * max_diag);
            let floor = -tol * max_diag;
            let min_remaining = remaining.iter().fold(f64::INFINITY, |m, &d| m.min(d));
            let mut min_eigen = min_remaining.min(0.0);
            if min_remaining >= floor {
                min_eigen = min_eigen.min(residual_min_eigen(c, &cols));
                if min_eigen >= floor * (dim as f64).sqrt() {
                    return Ok(Self::from_columns(dim, cols, tol));
                }
            }
            worst = min_eigen;
        }
        Err(NoiseError::NotPSD { min_eigen: worst, max_diag })
    }

    fn from_columns(dim: usize, cols: Vec<Vec<f64>>, tolerance: f64) -> Self {
        let rank = cols.len();
        let rows: Vec<usize> = (0..dim).filter(|&r| cols.iter().any(|c| c[r] != 0.0)).collect();
        let mut l = Vec::with_capacity(rows.len() * rank);
        for &r in &rows {
            l.extend(cols.iter().map(|c| c[r]));
        }
        CovarianceFactor { dim, rank, rows, l, tolerance }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Truncation tolerance that succeeded, relative to the max diagonal.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// `out = L z`; `z` has length `rank`, `out` length `dim`.
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (k, &r) in self.rows.iter().enumerate() {
            let row = &self.l[k * self.rank..(k + 1) * self.rank];
            out[r] = row.iter().zip(z).map(|(a, b)| a * b).sum();
        }
    }

    /// `(L Lᵀ)_{rc}`.
    pub fn reconstructed(&self, r: usize, c: usize) -> f64 {
        let find = |x: usize| self.rows.iter().position(|&y| y == x);
        match (find(r), find(c)) {
            (Some(a), Some(b)) => {
                let ra = &self.l[a * self.rank..(a + 1) * self.rank];
                let rb = &self.l[b * self.rank..(b + 1) * self.rank];
                ra.iter().zip(rb).map(|(x, y)| x * y).sum()
            }
            _ => 0.0,
        }
    }
}

/// Pivoted Cholesky columns plus the remaining Schur-complement diagonal.
fn pivoted_columns(c: &CovarianceMatrix, stop: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let dim = c.dim;
    let mut d: Vec<f64> = (0..dim).map(|i| c.get(i, i)).collect();
    let mut used = vec![false; dim];
    let mut cols: Vec<Vec<f64>> = Vec::new();
    loop {
        let pivot = (0..dim).filter(|&i| !used[i]).max_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("finite diagonal"));
        let p = match pivot {
            Some(p) if d[p] > stop => p,
            _ => break,
        };
        let root = d[p].sqrt();
        let prow = c.row(p);
        let mut col: Vec<f64> = vec![0.0; dim];
        col.par_iter_mut().enumerate().for_each(|(i, x)| {
            if used[i] || i == p {
                return;
            }
            let mut v = prow[i];
            for prev in &cols {
                v -= prev[i] * prev[p];
            }
            *x = v / root;
        });
        col[p] = root;
        for i in 0..dim {
            if !used[i] && i != p {
                d[i] -= col[i] * col[i];
            }
        }
        d[p] = 0.0;
        used[p] = true;
        cols.push(col);
    }
    let remaining = (0..dim).filter(|&i| !used[i]).map(|i| d[i]).collect();
    (cols, remaining)
}

/// Most negative eigenvalue estimate of `C − L Lᵀ` by shifted power iteration.
fn residual_min_eigen(c: &CovarianceMatrix, cols: &[Vec<f64>]) -> f64 {
    let dim = c.dim;
    let apply = |v: &[f64]| -> Vec<f64> {
        let proj: Vec<f64> = cols.iter().map(|col| col.iter().zip(v).map(|(a, b)| a * b).sum()).collect();
        (0..dim)
            .into_par_iter()
            .map(|r| {
                let mut x: f64 = c.row(r).iter().zip(v).map(|(a, b)| a * b).sum();
                for (col, p) in cols.iter().zip(&proj) {
                    x -= col[r] * p;
                }
                x
            })
            .collect()
    };
    let normalize = |v: &mut Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        n
    };
    let rayleigh = |v: &[f64], av: &[f64]| v.iter().zip(av).map(|(a, b)| a * b).sum::<f64>();
    let start = || -> Vec<f64> { (0..dim).map(|i| 1.0 + 0.37 * ((i as f64) * 1.618).sin()).collect() };
    let mut v = start();
    normalize(&mut v);
    let mut lam = 0.0;
    for _ in 0..30 {
        let mut av = apply(&v);
        lam = rayleigh(&v, &av);
        if normalize(&mut av) == 0.0 {
            return 0.0;
        }
        v = av;
    }
    let shift = lam.abs();
    let mut v = start();
    normalize(&mut v);
    let mut mu = 0.0;
    for _ in 0..60 {
        let av = apply(&v);
        let mut sv: Vec<f64> = av.iter().zip(&v).map(|(a, b)| a - shift * b).collect();
        mu = rayleigh(&v, &av);
        if normalize(&mut sv) == 0.0 {
            break;
        }
        v = sv;
    }
    mu.min(lam)
}

/// Kernel sampled at every grid lag, used for the O(N²) quadratures
/// `D_i(t_a) = Σ_b w_b N_ij(|t_a − t_b|) E_j(t_b)`.
#[derive(Debug, Clone)]
pub struct LagTable {
    grid: TimeGrid,
    lags: Vec<Mat3>,
    active: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

impl LagTable {
    pub fn new(k: &dyn CovarianceKernel, grid: TimeGrid) -> LagTable {
        let dt = grid.dt();
        let lags: Vec<Mat3> = (0..grid.nodes()).map(|d| k.eval(d as f64 * dt)).collect();
        let mut active = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                if lags.iter().any(|m| m[i][j] != 0.0) {
                    active.push((i, j));
                }
            }
        }
        LagTable { grid, lags, active, weights: grid.trapezoid_weights() }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn lag(&self, d: usize) -> &Mat3 {
        &self.lags[d]
    }

    pub fn is_zero(&self) -> bool {
        self.active.is_empty()
    }

    /// Dual triad `D_i = ∫ N_ij E_j` at every node.
    pub fn dual(&self, e: [&[PureQuat]; 3]) -> [Vec<PureQuat>; 3] {
        let n = self.grid.nodes();
        let mut out = [vec![PureQuat::ZERO; n], vec![PureQuat::ZERO; n], vec![PureQuat::ZERO; n]];
        for &(i, j) in &self.active {
            let ej = e[j];
            let weighted: Vec<PureQuat> = ej.iter().zip(&self.weights).map(|(v, w)| v.scale(*w)).collect();
            let kij: Vec<f64> = self.lags.iter().map(|m| m[i][j]).collect();
            let contrib: Vec<PureQuat> = (0..n)
                .into_par_iter()
                .with_min_len(64)
                .map(|a| {
                    let mut acc = PureQuat::ZERO;
                    for (b, wb) in weighted.iter().enumerate() {
                        acc += wb.scale(kij[a.abs_diff(b)]);
                    }
                    acc
                })
                .collect();
            for (o, c) in out[i].iter_mut().zip(contrib) {
                *o += c;
            }
        }
        out
    }

    /// `½ Σ_i ∫ E_i·D_i`.
    pub fn action(&self, e: [&[PureQuat]; 3], d: &[Vec<PureQuat>; 3]) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for (a, w) in self.weights.iter().enumerate() {
                s += w * e[i][a].dot(&d[i][a]);
            }
        }
        0.5 * s
    }
}

#[cfg(test)]
mod tests {
    use super::super::kernels::{DiagonalConstant, OneOverF, UserMatrix};
    use super::*;

    #[test]
    fn zero_kernel_has_zero_factor() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let c = assemble_covariance(&UserMatrix::zero(), g);
        assert!(c.data.iter().all(|x| *x == 0.0));
        let f = CovarianceFactor::factorize(&c).unwrap();
        assert_eq!(f.rank(), 0);
        let mut out = vec![1.0; c.dim()];
        f.apply(&[], &mut out);
        assert!(out.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn diagonal_constant_has_rank_at_most_three() {
        let g = TimeGrid::new(1.0, 20).unwrap();
        let k = DiagonalConstant::new([1.0, 0.5, 2.0]).unwrap();
        let c = assemble_covariance(&k, g);
        assert!(c.is_symmetric());
        assert_eq!(c.get(3 * 4 + 1, 3 * 17 + 1), 0.5);
        assert_eq!(c.get(3 * 4 + 1, 3 * 17 + 2), 0.0);
        let f = CovarianceFactor::factorize(&c).unwrap();
        assert_eq!(f.rank(), 3);
        for (r, cc) in [(0, 0), (5, 59), (30, 3), (1, 2)] {
            assert!((f.reconstructed(r, cc) - c.get(r, cc)).abs() < 1e-12);
        }
    }

    #[test]
    fn one_over_f_factor_reconstructs() {
        let g = TimeGrid::new(1.0, 64).unwrap();
        let k = OneOverF::new(8.0, 0.1, 20.0, [0.0, 0.6, 0.8]).unwrap();
        let c = assemble_covariance(&k, g);
        assert!(c.is_symmetric());
        let f = CovarianceFactor::factorize(&c).unwrap();
        assert!(f.rank() <= 65);
        let scale = c.max_diagonal();
        for r in (0..c.dim()).step_by(7) {
            for cc in (0..c.dim()).step_by(5) {
                assert!((f.reconstructed(r, cc) - c.get(r, cc)).abs() < 1e-9 * scale);
            }
        }
    }

    #[test]
    fn indefinite_kernel_is_rejected() {
        let g = TimeGrid::new(1.0, 8).unwrap();
        let k = UserMatrix::new("bad", |_| [[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 0.0]]);
        match CovarianceFactor::factorize(&assemble_covariance(&k, g)) {
            Err(NoiseError::NotPSD { min_eigen, .. }) => assert!(min_eigen < 0.0),
            other => panic!("expected NotPSD, got {other:?}"),
        }
        // Positive diagonal, negative off-diagonal lag structure.
        let k = UserMatrix::new("osc", |s| {
            let v = if s < 0.3 { 1.0 } else { -1.0 };
            [[v, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
        });
        assert!(matches!(CovarianceFactor::factorize(&assemble_covariance(&k, g)), Err(NoiseError::NotPSD { .. })));
    }

    #[test]
    fn dual_of_constant_kernel_on_static_triad() {
        let g = TimeGrid::new(2.0, 40).unwrap();
        let kappa = 1.5;
        let t = LagTable::new(&DiagonalConstant::new([kappa, 0.0, 0.0]).unwrap(), g);
        let e: Vec<Vec<PureQuat>> = PureQuat::BASIS.iter().map(|b| vec![*b; g.nodes()]).collect();
        let er = [&e[0][..], &e[1][..], &e[2][..]];
        let d = t.dual(er);
        for ((d0, d1), d2) in d[0].iter().zip(&d[1]).zip(&d[2]) {
            assert!((*d0 - PureQuat::E1.scale(kappa * 2.0)).max_abs() < 1e-13);
            assert_eq!(*d1, PureQuat::ZERO);
            assert_eq!(*d2, PureQuat::ZERO);
        }
        assert!((t.action(er, &d) - 0.5 * kappa * 4.0).abs() < 1e-12);
    }
}
