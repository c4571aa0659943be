//! Block space-time operators of the incremental weak-constraint problem.
//!
//! Every operator is applied matrix-free. `L`, `Lᵀ` and the block-diagonal
//! `D` factors act on time blocks independently and run block-parallel;
//! `L⁻¹`, `L⁻ᵀ`, `P` and `W` are sequential recursions in time.

mod observations;
mod problem;
mod trajectory;

use std::sync::Arc;

pub use observations::ObservationSet;
pub use problem::{compute_b_d, nonlinear_cost, InnerProblem};
pub use trajectory::Trajectory;
pub(crate) use trajectory::dot;

use crate::covariance::CovarianceOperator;
use crate::error::{Error, Result};
use crate::lorenz96::{adj_into, tlm_into, ModelConfig};
use crate::parallel::for_each_block;

/// Background covariance `B` and the time-invariant model-error covariance `Q`.
#[derive(Debug, Clone)]
pub struct CovarianceSet {
    pub background: CovarianceOperator,
    pub model_error: CovarianceOperator,
}

impl CovarianceSet {
    pub fn new(background: CovarianceOperator, model_error: CovarianceOperator) -> Result<Self> {
        if background.dim() != model_error.dim() {
            return Err(Error::DimensionMismatch {
                expected: background.dim(),
                found: model_error.dim(),
            });
        }
        if !background.is_invertible() || !model_error.is_invertible() {
            return Err(Error::Config("B and Q must be invertible".into()));
        }
        Ok(Self { background, model_error })
    }

    /// Covariance of time block `i` in `D = diag(B, Q, ..., Q)`.
    pub fn block(&self, i: usize) -> &CovarianceOperator {
        if i == 0 {
            &self.background
        } else {
            &self.model_error
        }
    }
}

/// The trajectory at which the model is linearised, with the covariances
/// that make up `D`.
#[derive(Debug, Clone)]
pub struct LinearizationState {
    model: ModelConfig,
    reference: Trajectory,
    covs: Arc<CovarianceSet>,
}

impl LinearizationState {
    pub fn new(model: ModelConfig, reference: Trajectory, covs: Arc<CovarianceSet>) -> Result<Self> {
        if reference.n() != model.n {
            return Err(Error::DimensionMismatch { expected: model.n, found: reference.n() });
        }
        if covs.background.dim() != model.n {
            return Err(Error::DimensionMismatch { expected: model.n, found: covs.background.dim() });
        }
        if !reference.is_finite() {
            return Err(Error::Config("reference trajectory has non-finite entries".into()));
        }
        Ok(Self { model, reference, covs })
    }

    pub fn model(&self) -> &ModelConfig {
        &self.model
    }

    pub fn reference(&self) -> &Trajectory {
        &self.reference
    }

    pub fn covariances(&self) -> &CovarianceSet {
        &self.covs
    }

    pub fn n(&self) -> usize {
        self.model.n
    }

    pub fn num_blocks(&self) -> usize {
        self.reference.num_blocks()
    }

    /// Length of a space-time vector, `(N + 1) n`.
    pub fn dim(&self) -> usize {
        self.reference.len()
    }

    pub fn zeros(&self) -> Trajectory {
        Trajectory::zeros(self.n(), self.num_blocks())
    }

    fn check(&self, v: &[f64]) {
        assert_eq!(v.len(), self.dim(), "space-time vector length");
    }

    /// `M_i v`, the tangent-linear step from time `i` to `i + 1`.
    pub(crate) fn tlm(&self, i: usize, v: &[f64], out: &mut [f64]) {
        tlm_into(&self.model, self.reference.block(i), v, out);
    }

    /// `M_iᵀ v`.
    pub(crate) fn adj(&self, i: usize, v: &[f64], out: &mut [f64]) {
        adj_into(&self.model, self.reference.block(i), v, out);
    }

    pub(crate) fn l_into(&self, v: &[f64], out: &mut [f64]) {
        self.check(v);
        let n = self.n();
        for_each_block(out, n, |i, o| {
            if i == 0 {
                o.copy_from_slice(&v[..n]);
            } else {
                self.tlm(i - 1, &v[(i - 1) * n..i * n], o);
                for (a, b) in o.iter_mut().zip(&v[i * n..(i + 1) * n]) {
                    *a = b - *a;
                }
            }
        });
    }

    pub(crate) fn lt_into(&self, v: &[f64], out: &mut [f64]) {
        self.check(v);
        let n = self.n();
        let last = self.num_blocks() - 1;
        for_each_block(out, n, |i, o| {
            if i == last {
                o.copy_from_slice(&v[i * n..]);
            } else {
                self.adj(i, &v[(i + 1) * n..(i + 2) * n], o);
                for (a, b) in o.iter_mut().zip(&v[i * n..(i + 1) * n]) {
                    *a = b - *a;
                }
            }
        });
    }

    /// Forward recursion `w_0 = v_0`, `w_i = M_{i-1} w_{i-1} + v_i`.
    pub(crate) fn linv_into(&self, v: &[f64], out: &mut [f64]) {
        self.check(v);
        let n = self.n();
        out[..n].copy_from_slice(&v[..n]);
        for i in 1..self.num_blocks() {
            let (done, rest) = out.split_at_mut(i * n);
            let o = &mut rest[..n];
            self.tlm(i - 1, &done[(i - 1) * n..], o);
            for (a, b) in o.iter_mut().zip(&v[i * n..(i + 1) * n]) {
                *a += b;
            }
        }
    }

    /// Backward recursion `w_N = v_N`, `w_i = M_iᵀ w_{i+1} + v_i`.
    pub(crate) fn linvt_into(&self, v: &[f64], out: &mut [f64]) {
        self.check(v);
        let n = self.n();
        let last = self.num_blocks() - 1;
        out[last * n..].copy_from_slice(&v[last * n..]);
        for i in (0..last).rev() {
            let (head, tail) = out.split_at_mut((i + 1) * n);
            let o = &mut head[i * n..];
            self.adj(i, &tail[..n], o);
            for (a, b) in o.iter_mut().zip(&v[i * n..(i + 1) * n]) {
                *a += b;
            }
        }
    }

    /// `P v = (L⁻¹ - I) v`, via `q_0 = 0`, `q_i = M_{i-1}(q_{i-1} + v_{i-1})`.
    pub(crate) fn p_into(&self, v: &[f64], out: &mut [f64]) {
        self.check(v);
        let n = self.n();
        out[..n].fill(0.0);
        let mut acc = vec![0.0; n];
        for i in 1..self.num_blocks() {
            for ((a, q), x) in acc.iter_mut().zip(&out[(i - 1) * n..i * n]).zip(&v[(i - 1) * n..i * n]) {
                *a = q + x;
            }
            self.tlm(i - 1, &acc, &mut out[i * n..(i + 1) * n]);
        }
    }

    /// `Pᵀ v = (L⁻ᵀ - I) v`, via `q_N = 0`, `q_i = M_iᵀ(q_{i+1} + v_{i+1})`.
    pub(crate) fn pt_into(&self, v: &[f64], out: &mut [f64]) {
        self.check(v);
        let n = self.n();
        let last = self.num_blocks() - 1;
        out[last * n..].fill(0.0);
        let mut acc = vec![0.0; n];
        for i in (0..last).rev() {
            for ((a, q), x) in acc
                .iter_mut()
                .zip(&out[(i + 1) * n..(i + 2) * n])
                .zip(&v[(i + 1) * n..(i + 2) * n])
            {
                *a = q + x;
            }
            self.adj(i, &acc, &mut out[i * n..(i + 1) * n]);
        }
    }

    pub(crate) fn d_sqrt_into(&self, v: &[f64], out: &mut [f64]) {
        self.check(v);
        let n = self.n();
        for_each_block(out, n, |i, o| self.covs.block(i).apply_sqrt_into(&v[i * n..(i + 1) * n], o));
    }

    pub(crate) fn d_inv_sqrt_into(&self, v: &[f64], out: &mut [f64]) {
        self.check(v);
        let n = self.n();
        for_each_block(out, n, |i, o| self.covs.block(i).apply_inv_sqrt_into(&v[i * n..(i + 1) * n], o));
    }

    pub(crate) fn d_inv_into(&self, v: &[f64], out: &mut [f64]) {
        self.check(v);
        let n = self.n();
        for_each_block(out, n, |i, o| self.covs.block(i).apply_inv_into(&v[i * n..(i + 1) * n], o));
    }

    /// `W v = P D^{1/2} v`.
    pub(crate) fn w_into(&self, v: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; v.len()];
        self.d_sqrt_into(v, &mut tmp);
        self.p_into(&tmp, out);
    }

    /// `Wᵀ v = D^{1/2} Pᵀ v`.
    pub(crate) fn wt_into(&self, v: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; v.len()];
        self.pt_into(v, &mut tmp);
        self.d_sqrt_into(&tmp, out);
    }

    fn map(&self, v: &Trajectory, f: impl Fn(&Self, &[f64], &mut [f64])) -> Trajectory {
        let mut out = self.zeros();
        f(self, v.as_slice(), out.as_mut_slice());
        out
    }

    pub fn apply_l(&self, v: &Trajectory) -> Trajectory {
        self.map(v, Self::l_into)
    }

    pub fn apply_lt(&self, v: &Trajectory) -> Trajectory {
        self.map(v, Self::lt_into)
    }

    pub fn apply_linv(&self, v: &Trajectory) -> Trajectory {
        self.map(v, Self::linv_into)
    }

    pub fn apply_linvt(&self, v: &Trajectory) -> Trajectory {
        self.map(v, Self::linvt_into)
    }

    pub fn apply_p(&self, v: &Trajectory) -> Trajectory {
        self.map(v, Self::p_into)
    }

    pub fn apply_pt(&self, v: &Trajectory) -> Trajectory {
        self.map(v, Self::pt_into)
    }

    pub fn apply_w(&self, v: &Trajectory) -> Trajectory {
        self.map(v, Self::w_into)
    }

    pub fn apply_wt(&self, v: &Trajectory) -> Trajectory {
        self.map(v, Self::wt_into)
    }

    /// `D^{1/2} v`; `D^{1/2}` is symmetric.
    pub fn apply_d_sqrt(&self, v: &Trajectory) -> Trajectory {
        self.map(v, Self::d_sqrt_into)
    }

    pub fn apply_d_inv_sqrt(&self, v: &Trajectory) -> Trajectory {
        self.map(v, Self::d_inv_sqrt_into)
    }

    pub fn apply_d_inv(&self, v: &Trajectory) -> Trajectory {
        self.map(v, Self::d_inv_into)
    }
}
