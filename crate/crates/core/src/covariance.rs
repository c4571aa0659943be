//! Stationary correlation models on the periodic grid and the covariance
//! operators built from them.

use nalgebra::{DMatrix, DVector, DVectorView, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationKind {
    /// Second-order autoregressive: `(1 + d/L) exp(-d/L)`.
    Soar,
    /// Renormalised inverse of `I + L^4 Δ²` with `Δ` the periodic second difference.
    Laplacian,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationSpec {
    pub kind: CorrelationKind,
    pub n: usize,
    /// Grid spacing.
    pub dx: f64,
    /// Correlation length scale, in the same units as `dx`.
    pub lengthscale: f64,
}

impl CorrelationSpec {
    pub fn soar(n: usize, dx: f64, lengthscale: f64) -> Self {
        Self { kind: CorrelationKind::Soar, n, dx, lengthscale }
    }

    pub fn laplacian(n: usize, dx: f64, lengthscale: f64) -> Self {
        Self { kind: CorrelationKind::Laplacian, n, dx, lengthscale }
    }

    pub fn identity(n: usize) -> Self {
        Self { kind: CorrelationKind::Identity, n, dx: 1.0, lengthscale: 1.0 }
    }
}

/// Minimum-image distance between grid indices on a ring of `n` points.
fn ring_distance(i: usize, j: usize, n: usize) -> usize {
    let d = i.abs_diff(j);
    d.min(n - d)
}

pub fn build_correlation(spec: &CorrelationSpec) -> Result<DMatrix<f64>> {
    let n = spec.n;
    if n == 0 {
        return Err(Error::Config("correlation dimension must be positive".into()));
    }
    if spec.kind != CorrelationKind::Identity {
        if !(spec.lengthscale > 0.0) || !spec.lengthscale.is_finite() {
            return Err(Error::Config(format!(
                "length scale must be positive, got {}",
                spec.lengthscale
            )));
        }
        if !(spec.dx > 0.0) {
            return Err(Error::Config(format!("grid spacing must be positive, got {}", spec.dx)));
        }
    }

    match spec.kind {
        CorrelationKind::Identity => Ok(DMatrix::identity(n, n)),
        CorrelationKind::Soar => Ok(DMatrix::from_fn(n, n, |i, j| {
            let r = ring_distance(i, j, n) as f64 * spec.dx / spec.lengthscale;
            (1.0 + r) * (-r).exp()
        })),
        CorrelationKind::Laplacian => {
            let scale = 1.0 / (spec.dx * spec.dx);
            let mut lap = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                lap[(i, (i + n - 1) % n)] += scale;
                lap[(i, i)] -= 2.0 * scale;
                lap[(i, (i + 1) % n)] += scale;
            }
            let l4 = spec.lengthscale.powi(4);
            let op = DMatrix::identity(n, n) + (&lap * &lap) * l4;
            let inv = op
                .cholesky()
                .ok_or_else(|| Error::Construction("I + L^4 Δ² is not positive definite".into()))?
                .inverse();
            let diag: Vec<f64> = (0..n).map(|i| inv[(i, i)]).collect();
            if diag.iter().any(|&d| !(d > 0.0)) {
                return Err(Error::Construction("non-positive variance in Laplacian inverse".into()));
            }
            let corr = DMatrix::from_fn(n, n, |i, j| inv[(i, j)] / (diag[i] * diag[j]).sqrt());
            // symmetrise away roundoff from the inverse
            let corr = (&corr + corr.transpose()) * 0.5;
            let eig = SymmetricEigen::new(corr.clone());
            let min = eig.eigenvalues.min();
            if !(min > 0.0) {
                return Err(Error::Construction(format!(
                    "renormalised Laplacian correlation lost definiteness (min eigenvalue {min:e})"
                )));
            }
            Ok(corr)
        }
    }
}

/// `σ²C` together with its symmetric square root and, when `σ > 0`, the
/// inverse factors.
#[derive(Debug, Clone)]
pub struct CovarianceOperator {
    sigma: f64,
    matrix: DMatrix<f64>,
    sqrt: DMatrix<f64>,
    inv_sqrt: Option<DMatrix<f64>>,
    inverse: Option<DMatrix<f64>>,
}

pub fn make_covariance(corr: &DMatrix<f64>, sigma: f64) -> Result<CovarianceOperator> {
    let n = corr.nrows();
    check_len(n, corr.ncols())?;
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("standard deviation must be non-negative, got {sigma}")));
    }
    let sym = (corr + corr.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let min = eig.eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    let q = &eig.eigenvectors;
    let spectral = |f: &dyn Fn(f64) -> f64| {
        let scaled = DMatrix::from_fn(n, n, |i, j| q[(i, j)] * f(eig.eigenvalues[j]));
        let m = &scaled * q.transpose();
        (&m + m.transpose()) * 0.5
    };
    let var = sigma * sigma;
    let sqrt = spectral(&|l| sigma * l.sqrt());
    let (inv_sqrt, inverse) = if sigma > 0.0 {
        (Some(spectral(&|l| 1.0 / (sigma * l.sqrt()))), Some(spectral(&|l| 1.0 / (var * l))))
    } else {
        (None, None)
    };
    Ok(CovarianceOperator { sigma, matrix: sym * var, sqrt, inv_sqrt, inverse })
}

fn matvec(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    let mut o = nalgebra::DVectorViewMut::from_slice(out, m.nrows());
    o.gemv(1.0, m, &DVectorView::from_slice(v, m.ncols()), 0.0);
}

impl CovarianceOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn sqrt_matrix(&self) -> &DMatrix<f64> {
        &self.sqrt
    }

    pub fn inv_sqrt_matrix(&self) -> Option<&DMatrix<f64>> {
        self.inv_sqrt.as_ref()
    }

    pub fn inverse_matrix(&self) -> Option<&DMatrix<f64>> {
        self.inverse.as_ref()
    }

    pub fn is_invertible(&self) -> bool {
        self.inverse.is_some()
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        matvec(&self.matrix, v, out);
    }

    pub fn apply_sqrt_into(&self, v: &[f64], out: &mut [f64]) {
        matvec(&self.sqrt, v, out);
    }

    /// # Panics
    /// If the operator was built with `σ = 0`.
    pub fn apply_inv_sqrt_into(&self, v: &[f64], out: &mut [f64]) {
        matvec(self.inv_sqrt.as_ref().expect("singular covariance has no inverse"), v, out);
    }

    /// # Panics
    /// If the operator was built with `σ = 0`.
    pub fn apply_inv_into(&self, v: &[f64], out: &mut [f64]) {
        matvec(self.inverse.as_ref().expect("singular covariance has no inverse"), v, out);
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), v.len())?;
        let mut out = vec![0.0; v.len()];
        self.apply_into(v, &mut out);
        Ok(out)
    }

    pub fn apply_inv(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), v.len())?;
        if !self.is_invertible() {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: 0.0 });
        }
        let mut out = vec![0.0; v.len()];
        self.apply_inv_into(v, &mut out);
        Ok(out)
    }

    /// `aᵀ C⁻¹ a`.
    pub fn inv_norm_sq(&self, a: &[f64]) -> f64 {
        let mut tmp = vec![0.0; a.len()];
        self.apply_inv_into(a, &mut tmp);
        a.iter().zip(&tmp).map(|(x, y)| x * y).sum()
    }
}

/// Draws `C^{1/2} z` with `z` standard normal.
pub fn sample_gaussian<R: Rng + ?Sized>(cov: &CovarianceOperator, rng: &mut R) -> Vec<f64> {
    let n = cov.dim();
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (cov.sqrt_matrix() * z).data.into()
}
