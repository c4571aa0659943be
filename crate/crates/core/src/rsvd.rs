//! Randomised SVD of a matrix-free square operator.
//!
//! One pass of subspace iteration with a Gaussian start: sketch `Y = A G`,
//! orthonormalise, project `K = Zᵀ A`, take the small SVD of `K` and drop the
//! `l` oversampling triplets.

use nalgebra::{DMatrix, DVector, DVectorView, DVectorViewMut};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::parallel::map_indices;

/// A square linear operator that can be applied with its transpose.
pub trait SketchableOperator: Sync {
    fn dim(&self) -> usize;

    fn apply_into(&self, x: &[f64], out: &mut [f64]);

    fn apply_transpose_into(&self, x: &[f64], out: &mut [f64]);

    /// Applies the operator to each column of `x`; columns run in parallel.
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        block_apply(self.dim(), x, |c, o| self.apply_into(c, o))
    }

    fn apply_transpose_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        block_apply(self.dim(), x, |c, o| self.apply_transpose_into(c, o))
    }
}

fn block_apply<F>(dim: usize, x: &DMatrix<f64>, f: F) -> DMatrix<f64>
where
    F: Fn(&[f64], &mut [f64]) + Sync + Send,
{
    assert_eq!(x.nrows(), dim, "block row count");
    let cols = map_indices(x.ncols(), |j| {
        let col = x.column(j);
        let mut out = vec![0.0; dim];
        f(col.as_slice(), &mut out);
        out
    });
    DMatrix::from_iterator(dim, cols.len(), cols.into_iter().flatten())
}

/// Assembles an operator column by column from unit vectors.
pub fn assemble_dense<A: SketchableOperator + ?Sized>(op: &A) -> DMatrix<f64> {
    op.apply_block(&DMatrix::identity(op.dim(), op.dim()))
}

/// An explicit dense matrix.
#[derive(Debug, Clone)]
pub struct DenseOperator(pub DMatrix<f64>);

impl SketchableOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let mut o = DVectorViewMut::from_slice(out, self.0.nrows());
        o.gemv(1.0, &self.0, &DVectorView::from_slice(x, self.0.ncols()), 0.0);
    }

    fn apply_transpose_into(&self, x: &[f64], out: &mut [f64]) {
        let mut o = DVectorViewMut::from_slice(out, self.0.ncols());
        o.gemv_tr(1.0, &self.0, &DVectorView::from_slice(x, self.0.nrows()), 0.0);
    }
}

/// Truncated factors `U Σ Vᵀ`.
#[derive(Debug, Clone)]
pub struct LowRankSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
    /// Oversampling used to build the factors.
    pub oversampling: usize,
    /// Numerical rank of the sketch `A G`; below `k + l` the trailing
    /// triplets carry no information about `A`.
    pub effective_rank: usize,
}

impl LowRankSvd {
    /// The rank-0 factorisation of an `s × s` operator.
    pub fn empty(s: usize) -> Self {
        Self {
            u: DMatrix::zeros(s, 0),
            sigma: DVector::zeros(0),
            v: DMatrix::zeros(s, 0),
            oversampling: 0,
            effective_rank: 0,
        }
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// `out = U Σ Vᵀ x`.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.apply_acc(&self.v, &self.u, x, out, 0.0);
    }

    /// `out = V Σ Uᵀ x`.
    pub fn apply_transpose_into(&self, x: &[f64], out: &mut [f64]) {
        self.apply_acc(&self.u, &self.v, x, out, 0.0);
    }

    /// `out += U Σ Vᵀ x`.
    pub fn apply_add_into(&self, x: &[f64], out: &mut [f64]) {
        self.apply_acc(&self.v, &self.u, x, out, 1.0);
    }

    /// `out += V Σ Uᵀ x`.
    pub fn apply_transpose_add_into(&self, x: &[f64], out: &mut [f64]) {
        self.apply_acc(&self.u, &self.v, x, out, 1.0);
    }

    fn apply_acc(&self, right: &DMatrix<f64>, left: &DMatrix<f64>, x: &[f64], out: &mut [f64], beta: f64) {
        let s = self.dim();
        let mut o = DVectorViewMut::from_slice(out, s);
        if self.rank() == 0 {
            if beta == 0.0 {
                o.fill(0.0);
            }
            return;
        }
        let mut coeffs = right.tr_mul(&DVectorView::from_slice(x, s));
        coeffs.component_mul_assign(&self.sigma);
        o.gemv(1.0, left, &coeffs, beta);
    }
}

/// Householder QR orthonormalisation of the sketch, returning the basis and
/// the numerical rank read off the diagonal of `R`.
fn orthonormalize(y: DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let qr = y.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..r.nrows().min(r.ncols())).map(|i| r[(i, i)].abs()).collect();
    let largest = diag.iter().cloned().fold(0.0, f64::max);
    let tol = largest * 1e-12 * (r.nrows() as f64).sqrt();
    let rank = if largest > 0.0 { diag.iter().filter(|&&d| d > tol).count() } else { 0 };
    (qr.q(), rank)
}

pub fn rsvd<A, R>(op: &A, k: usize, l: usize, rng: &mut R) -> Result<LowRankSvd>
where
    A: SketchableOperator + ?Sized,
    R: Rng + ?Sized,
{
    let s = op.dim();
    if k == 0 {
        return Err(Error::Config("target rank must be at least 1".into()));
    }
    let m = k + l;
    if m > s {
        return Err(Error::Config(format!("k + l = {m} exceeds operator dimension {s}")));
    }

    let g = DMatrix::from_fn(s, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = op.apply_block(&g);
    let (z, effective_rank) = orthonormalize(y);
    if effective_rank < m {
        log::warn!("randomised SVD sketch has numerical rank {effective_rank} < k + l = {m}");
    }

    // Kᵀ = Aᵀ Z, so K = Zᵀ A needs only adjoint products.
    let kt = op.apply_transpose_block(&z);
    let svd = kt.svd(true, true);
    let left = svd.u.expect("requested U");
    let right_t = svd.v_t.expect("requested Vᵀ");

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    order.truncate(k);

    // Kᵀ = Ũ Σ W̃ᵀ gives K = W̃ Σ Ũᵀ: the right factor of K is Ũ, the left is W̃.
    let v = DMatrix::from_fn(s, k, |i, j| left[(i, order[j])]);
    let u_hat = DMatrix::from_fn(m, k, |i, j| right_t[(order[j], i)]);
    let sigma = DVector::from_fn(k, |j, _| svd.singular_values[order[j]]);
    let u = &z * u_hat;

    Ok(LowRankSvd { u, sigma, v, oversampling: l, effective_rank })
}
