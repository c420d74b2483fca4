#![allow(dead_code)]

use eigengame::linalg::{self, Mat};
use eigengame::rng::{self, Rng};
use eigengame::updates::{Constraint, EigenState};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub fn test_rng(seed: u64) -> Rng {
    rng::stream(seed, rng::streams::TEST)
}

pub fn gaussian_vec(rng: &mut Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn unit_vec(rng: &mut Rng, d: usize) -> Vec<f64> {
    linalg::normalized(&gaussian_vec(rng, d)).unwrap()
}

pub fn gaussian_mat(rng: &mut Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect()).unwrap()
}

/// `(1/m) AᵀA` for a Gaussian `m x d` matrix `A`: generic, positive definite.
pub fn random_psd(rng: &mut Rng, d: usize) -> Mat {
    gaussian_mat(rng, d + 4, d).gram().symmetrized().unwrap()
}

/// `QΛQᵀ` with eigenvalues in `[0.1, 2]` separated by at least `gap`.
pub fn random_spectrum_matrix(rng: &mut Rng, d: usize, gap: f64) -> (Mat, Vec<f64>) {
    let mut lambdas: Vec<f64> = Vec::with_capacity(d);
    while lambdas.len() < d {
        let x = rng.random_range(0.1..2.0);
        if lambdas.iter().all(|l: &f64| (l - x).abs() >= gap) {
            lambdas.push(x);
        }
    }
    lambdas.sort_by(|a, b| b.total_cmp(a));
    let q = linalg::random_orthogonal(d, rng.random()).unwrap();
    let sigma = q
        .matmul(&Mat::from_diag(&lambdas))
        .unwrap()
        .matmul(&q.transpose())
        .unwrap()
        .symmetrized()
        .unwrap();
    (sigma, lambdas)
}

pub fn random_state(rng: &mut Rng, d: usize, k: usize) -> EigenState {
    let cols: Vec<Vec<f64>> = (0..k).map(|_| unit_vec(rng, d)).collect();
    EigenState::new(Mat::from_cols(&cols).unwrap(), Constraint::UnitSphere).unwrap()
}

/// Data with per-coordinate scales spread over a decade, so the covariance
/// has a non-flat spectrum.
pub fn random_dataset(rng: &mut Rng, n: usize, d: usize) -> Mat {
    let scales: Vec<f64> = (0..d).map(|j| 10f64.powf(-(j as f64) / d as f64)).collect();
    let q = linalg::random_orthogonal(d, rng.random()).unwrap();
    let mut x = gaussian_mat(rng, n, d);
    for r in 0..n {
        for (c, s) in scales.iter().enumerate() {
            x[(r, c)] *= s;
        }
    }
    x.matmul(&q.transpose()).unwrap()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    linalg::norm(&diff) / linalg::norm(b).max(f64::MIN_POSITIVE)
}

/// Weighted mean over `shards` equal contiguous row blocks of `x`.
pub fn shard_mean<F>(x: &Mat, shards: usize, mut f: F) -> Vec<f64>
where
    F: FnMut(&Mat) -> Vec<f64>,
{
    let per = x.rows() / shards;
    let mut acc = vec![0.0; x.cols()];
    for m in 0..shards {
        let block = x.row_block(m * per, (m + 1) * per);
        linalg::axpy(block.rows() as f64 / x.rows() as f64, &f(&block), &mut acc);
    }
    acc
}

/// Top eigenvector of the symmetric part of `(I − Σⱼ pⱼpⱼᵀ) Σ`, the maximizer
/// of the deflated Rayleigh quotient over the unit sphere.
pub fn best_response(sigma: &Mat, parents: &[Vec<f64>]) -> Vec<f64> {
    let d = sigma.rows();
    let mut deflated = sigma.clone();
    for p in parents {
        let sp = sigma.mat_vec(p).unwrap();
        for r in 0..d {
            for c in 0..d {
                deflated[(r, c)] -= p[r] * sp[c];
            }
        }
    }
    linalg::jacobi_eigh(&deflated.symmetrized().unwrap()).unwrap().vector(0)
}
