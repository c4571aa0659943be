//! Change-of-variable preconditioners `δx = C δx̃`.
//!
//! | variant        | `C`                          |
//! |----------------|------------------------------|
//! | `None`         | `I`                          |
//! | `ExactCvt`     | `L⁻¹ D^{1/2}`                |
//! | `LowRankLinv`  | `(I + U Σ Vᵀ) D^{1/2}`       |
//! | `LowRankS`     | `D^{1/2} + U Σ Vᵀ`           |
//!
//! The low-rank factors approximate `P = L⁻¹ − I` and `W = L⁻¹D^{1/2} − D^{1/2}`
//! respectively.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::Result;
use crate::operators::{LinearizationState, Trajectory};
use crate::rsvd::{rsvd, LowRankSvd, SketchableOperator};

/// `P = L⁻¹ − I` as a sketchable operator.
pub struct POperator<'a>(pub &'a LinearizationState);

/// `W = L⁻¹D^{1/2} − D^{1/2}` as a sketchable operator.
pub struct WOperator<'a>(pub &'a LinearizationState);

impl SketchableOperator for POperator<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.0.p_into(x, out);
    }

    fn apply_transpose_into(&self, x: &[f64], out: &mut [f64]) {
        self.0.pt_into(x, out);
    }
}

impl SketchableOperator for WOperator<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.0.w_into(x, out);
    }

    fn apply_transpose_into(&self, x: &[f64], out: &mut [f64]) {
        self.0.wt_into(x, out);
    }
}

#[derive(Debug, Clone)]
pub enum PreconditionerKind {
    None,
    ExactCvt,
    LowRankLinv(LowRankSvd),
    LowRankS(LowRankSvd),
}

#[derive(Debug, Clone)]
pub struct Preconditioner {
    kind: PreconditionerKind,
    capacitance_det: Option<f64>,
}

/// `det(I_k + Σ Vᵀ X)` for the low-rank update `X Σ Vᵀ`.
fn capacitance_det(svd: &LowRankSvd, x: &DMatrix<f64>) -> f64 {
    let k = svd.rank();
    let mut cap = svd.v.transpose() * x;
    for i in 0..k {
        cap.row_mut(i).scale_mut(svd.sigma[i]);
        cap[(i, i)] += 1.0;
    }
    cap.determinant()
}

impl Preconditioner {
    pub fn none() -> Self {
        Self { kind: PreconditionerKind::None, capacitance_det: None }
    }

    pub fn exact_cvt() -> Self {
        Self { kind: PreconditionerKind::ExactCvt, capacitance_det: None }
    }

    /// Wraps an approximation of `P`. Logs a warning when `I + U Σ Vᵀ` is
    /// numerically close to singular.
    pub fn lowrank_linv(svd: LowRankSvd) -> Self {
        let det = capacitance_det(&svd, &svd.u);
        warn_if_singular("low-rank L⁻¹", det);
        Self { kind: PreconditionerKind::LowRankLinv(svd), capacitance_det: Some(det) }
    }

    /// Wraps an approximation of `W`; the singularity check uses
    /// `D^{1/2} + U Σ Vᵀ = D^{1/2}(I + D^{-1/2} U Σ Vᵀ)`.
    pub fn lowrank_s(svd: LowRankSvd, lin: &LinearizationState) -> Self {
        let mut scaled = DMatrix::zeros(svd.dim(), svd.rank());
        for j in 0..svd.rank() {
            let col: Vec<f64> = svd.u.column(j).iter().copied().collect();
            let mut out = vec![0.0; col.len()];
            lin.d_inv_sqrt_into(&col, &mut out);
            scaled.column_mut(j).copy_from_slice(&out);
        }
        let det = capacitance_det(&svd, &scaled);
        warn_if_singular("low-rank S", det);
        Self { kind: PreconditionerKind::LowRankS(svd), capacitance_det: Some(det) }
    }

    pub fn kind(&self) -> &PreconditionerKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            PreconditionerKind::None => "none",
            PreconditionerKind::ExactCvt => "exact",
            PreconditionerKind::LowRankLinv(_) => "lowrank-linv",
            PreconditionerKind::LowRankS(_) => "lowrank-s",
        }
    }

    /// Determinant of the `k × k` capacitance matrix for low-rank variants.
    pub fn capacitance_det(&self) -> Option<f64> {
        self.capacitance_det
    }

    pub fn low_rank(&self) -> Option<&LowRankSvd> {
        match &self.kind {
            PreconditionerKind::LowRankLinv(f) | PreconditionerKind::LowRankS(f) => Some(f),
            _ => None,
        }
    }

    pub(crate) fn c_into(&self, lin: &LinearizationState, v: &[f64], out: &mut [f64]) {
        match &self.kind {
            PreconditionerKind::None => out.copy_from_slice(v),
            PreconditionerKind::ExactCvt => {
                let mut t = vec![0.0; v.len()];
                lin.d_sqrt_into(v, &mut t);
                lin.linv_into(&t, out);
            }
            PreconditionerKind::LowRankLinv(f) => {
                lin.d_sqrt_into(v, out);
                let t = out.to_vec();
                f.apply_add_into(&t, out);
            }
            PreconditionerKind::LowRankS(f) => {
                lin.d_sqrt_into(v, out);
                f.apply_add_into(v, out);
            }
        }
    }

    pub(crate) fn ct_into(&self, lin: &LinearizationState, v: &[f64], out: &mut [f64]) {
        match &self.kind {
            PreconditionerKind::None => out.copy_from_slice(v),
            PreconditionerKind::ExactCvt => {
                let mut t = vec![0.0; v.len()];
                lin.linvt_into(v, &mut t);
                lin.d_sqrt_into(&t, out);
            }
            PreconditionerKind::LowRankLinv(f) => {
                let mut t = v.to_vec();
                f.apply_transpose_add_into(v, &mut t);
                lin.d_sqrt_into(&t, out);
            }
            PreconditionerKind::LowRankS(f) => {
                lin.d_sqrt_into(v, out);
                f.apply_transpose_add_into(v, out);
            }
        }
    }

    /// `C v`.
    pub fn apply_c(&self, lin: &LinearizationState, v: &Trajectory) -> Trajectory {
        let mut out = lin.zeros();
        self.c_into(lin, v.as_slice(), out.as_mut_slice());
        out
    }

    /// `Cᵀ v`.
    pub fn apply_ct(&self, lin: &LinearizationState, v: &Trajectory) -> Trajectory {
        let mut out = lin.zeros();
        self.ct_into(lin, v.as_slice(), out.as_mut_slice());
        out
    }
}

fn warn_if_singular(what: &str, det: f64) {
    if !(det.abs() >= 1e-8) {
        log::warn!("{what} preconditioner is close to singular (capacitance determinant {det:e})");
    }
}

fn low_rank_factors<A, R>(op: &A, k: usize, l: usize, rng: &mut R) -> Result<LowRankSvd>
where
    A: SketchableOperator,
    R: Rng + ?Sized,
{
    if k == 0 {
        // M_i := 0, i.e. L̃⁻¹ = I
        return Ok(LowRankSvd::empty(op.dim()));
    }
    rsvd(op, k, l, rng)
}

/// Randomised rank-`k` approximation of `P`, wrapped as `(I + P̃) D^{1/2}`.
pub fn build_lowrank_linv<R: Rng + ?Sized>(
    lin: &LinearizationState,
    k: usize,
    l: usize,
    rng: &mut R,
) -> Result<Preconditioner> {
    Ok(Preconditioner::lowrank_linv(low_rank_factors(&POperator(lin), k, l, rng)?))
}

/// Randomised rank-`k` approximation of `W`, wrapped as `D^{1/2} + W̃`.
pub fn build_lowrank_s<R: Rng + ?Sized>(
    lin: &LinearizationState,
    k: usize,
    l: usize,
    rng: &mut R,
) -> Result<Preconditioner> {
    Ok(Preconditioner::lowrank_s(low_rank_factors(&WOperator(lin), k, l, rng)?, lin))
}
