use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, jacobi_eigh, Mat, SymEig};
use crate::rng::{self, Rng};

/// Eigenvalue profile of a synthetic covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spectrum {
    /// `λᵢ = λ₁ rⁱ⁻¹`
    Exponential { lambda1: f64, ratio: f64 },
    /// `λᵢ = λ₁ − (i−1)(λ₁ − λ_d)/(d−1)`
    Linear { lambda1: f64, lambda_d: f64 },
}

impl Spectrum {
    pub fn exponential(lambda1: f64, ratio: f64) -> Self {
        Spectrum::Exponential { lambda1, ratio }
    }

    pub fn linear(lambda1: f64, lambda_d: f64) -> Self {
        Spectrum::Linear { lambda1, lambda_d }
    }

    /// Default linear profile for dimension `d`: `λ_d = λ₁ / d`.
    pub fn default_linear(lambda1: f64, d: usize) -> Self {
        Spectrum::Linear {
            lambda1,
            lambda_d: lambda1 / d as f64,
        }
    }

    /// The `d` eigenvalues, strictly positive and strictly decreasing.
    pub fn eigenvalues(&self, d: usize) -> Result<Vec<f64>> {
        if d == 0 {
            return Err(Error::config("spectrum dimension must be positive"));
        }
        let values: Vec<f64> = match *self {
            Spectrum::Exponential { lambda1, ratio } => {
                if !(lambda1 > 0.0 && lambda1.is_finite()) {
                    return Err(Error::config(format!("lambda1 must be positive, got {lambda1}")));
                }
                if !(ratio > 0.0 && ratio < 1.0) {
                    return Err(Error::config(format!("decay ratio must lie in (0,1), got {ratio}")));
                }
                (0..d).map(|i| lambda1 * ratio.powi(i as i32)).collect()
            }
            Spectrum::Linear { lambda1, lambda_d } => {
                if !(lambda_d > 0.0 && lambda1 > lambda_d && lambda1.is_finite()) {
                    return Err(Error::config(format!(
                        "linear spectrum needs lambda1 > lambda_d > 0, got {lambda1} and {lambda_d}"
                    )));
                }
                if d == 1 {
                    vec![lambda1]
                } else {
                    let step = (lambda1 - lambda_d) / (d - 1) as f64;
                    (0..d).map(|i| lambda1 - i as f64 * step).collect()
                }
            }
        };
        if values.windows(2).any(|w| w[1] >= w[0]) || values.iter().any(|&v| v <= 0.0) {
            return Err(Error::config("spectrum is not strictly positive and decreasing"));
        }
        Ok(values)
    }
}

/// `Σ = QΛQᵀ` with `Q = random_orthogonal(d, seed)`, plus its exact eigensystem.
pub fn synth_covariance(spectrum: &Spectrum, d: usize, seed: u64) -> Result<(Mat, SymEig)> {
    let q = linalg::random_orthogonal(d, seed)?;
    synth_covariance_with_basis(spectrum, &q)
}

/// As [`synth_covariance`] with a caller-supplied orthogonal basis.
pub fn synth_covariance_with_basis(spectrum: &Spectrum, q: &Mat) -> Result<(Mat, SymEig)> {
    if !q.is_square() {
        return Err(Error::shape("basis must be square"));
    }
    let lambdas = spectrum.eigenvalues(q.rows())?;
    let sigma = q
        .matmul(&Mat::from_diag(&lambdas))?
        .matmul(&q.transpose())?
        .symmetrized()?;
    let mut vectors = q.clone();
    for c in 0..q.cols() {
        let mut v = q.col(c);
        let lead = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        vectors.set_col(c, &v)?;
    }
    Ok((
        sigma,
        SymEig {
            eigenvalues: lambdas,
            eigenvectors: vectors,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Uniform row draws with replacement.
    WithReplacement,
    /// Consecutive rows, wrapping at the end; a batch of `n` rows is the full matrix.
    Sequential,
}

#[derive(Debug, Clone)]
pub enum Dataset {
    Rows { rows: Mat, sampling: Sampling },
    /// Zero-mean Gaussian with covariance `Σ`, drawn as `Σ^{1/2} z`.
    Gaussian { sqrt_sigma: Mat },
}

impl Dataset {
    pub fn rows(rows: Mat) -> Self {
        Dataset::Rows {
            rows,
            sampling: Sampling::WithReplacement,
        }
    }

    pub fn sequential(rows: Mat) -> Self {
        Dataset::Rows {
            rows,
            sampling: Sampling::Sequential,
        }
    }

    /// Generator dataset for covariance `sigma`.
    pub fn gaussian(sigma: &Mat) -> Result<Self> {
        let eig = jacobi_eigh(sigma)?;
        let d = eig.dim();
        let mut sqrt_sigma = Mat::zeros(d, d);
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            let root = lambda.max(0.0).sqrt();
            let q = eig.vector(k);
            for r in 0..d {
                linalg::axpy(root * q[r], &q, sqrt_sigma.row_mut(r));
            }
        }
        Ok(Dataset::Gaussian { sqrt_sigma })
    }

    pub fn dim(&self) -> usize {
        match self {
            Dataset::Rows { rows, .. } => rows.cols(),
            Dataset::Gaussian { sqrt_sigma } => sqrt_sigma.cols(),
        }
    }

    /// Number of stored rows; `None` for generators.
    pub fn len(&self) -> Option<usize> {
        match self {
            Dataset::Rows { rows, .. } => Some(rows.rows()),
            Dataset::Gaussian { .. } => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }
}

/// Random stream plus read cursor of a batch sampler.
#[derive(Debug, Clone)]
pub struct SamplerState {
    rng: Rng,
    cursor: usize,
}

impl SamplerState {
    pub fn new(seed: u64) -> Self {
        SamplerState {
            rng: rng::stream(seed, rng::streams::BATCHES),
            cursor: 0,
        }
    }

    pub fn from_rng(rng: Rng) -> Self {
        SamplerState { rng, cursor: 0 }
    }
}

/// Draws an `n x d` minibatch and advances the sampler state.
pub fn sample_batch(ds: &Dataset, n: usize, state: &mut SamplerState) -> Result<Mat> {
    if n == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    let d = ds.dim();
    let mut out = Mat::zeros(n, d);
    match ds {
        Dataset::Rows { rows, sampling } => {
            let len = rows.rows();
            if len == 0 {
                return Err(Error::config("cannot sample from an empty dataset"));
            }
            for r in 0..n {
                let src = match sampling {
                    Sampling::WithReplacement => state.rng.random_range(0..len),
                    Sampling::Sequential => {
                        let s = state.cursor;
                        state.cursor = (state.cursor + 1) % len;
                        s
                    }
                };
                out.row_mut(r).copy_from_slice(rows.row(src));
            }
        }
        Dataset::Gaussian { sqrt_sigma } => {
            let mut z = vec![0.0; d];
            for r in 0..n {
                z.iter_mut()
                    .for_each(|x| *x = StandardNormal.sample(&mut state.rng));
                let x = sqrt_sigma.mat_vec(&z)?;
                out.row_mut(r).copy_from_slice(&x);
            }
        }
    }
    Ok(out)
}
