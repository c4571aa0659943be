use crate::error::{check_len, Error, Result};
use crate::lorenz96::{rk4_into, ModelConfig};

use super::{CovarianceSet, LinearizationState, ObservationSet, Trajectory};

/// One Gauss-Newton inner problem: minimise
/// `½‖Lδx − b‖²_{D⁻¹} + ½‖Hδx − d‖²_{R⁻¹}`.
#[derive(Debug, Clone)]
pub struct InnerProblem {
    lin: LinearizationState,
    obs: ObservationSet,
    b: Trajectory,
    d: Vec<f64>,
}

impl InnerProblem {
    pub fn new(lin: LinearizationState, obs: ObservationSet, b: Trajectory, d: Vec<f64>) -> Result<Self> {
        obs.validate_against(lin.n(), lin.num_blocks())?;
        if !b.same_shape(lin.reference()) {
            return Err(Error::DimensionMismatch { expected: lin.dim(), found: b.len() });
        }
        check_len(obs.count(), d.len())?;
        Ok(Self { lin, obs, b, d })
    }

    /// Linearises around `lin`'s reference and computes `b` and `d` from the
    /// background and the observation values.
    pub fn from_background(lin: LinearizationState, background: &[f64], obs: ObservationSet) -> Result<Self> {
        obs.validate_against(lin.n(), lin.num_blocks())?;
        let (b, d) = compute_b_d(&lin, background, &obs)?;
        Self::new(lin, obs, b, d)
    }

    pub fn linearization(&self) -> &LinearizationState {
        &self.lin
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.obs
    }

    pub fn b(&self) -> &Trajectory {
        &self.b
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    fn inv_obs_var(&self) -> f64 {
        1.0 / (self.obs.sigma_o() * self.obs.sigma_o())
    }

    /// `A v = LᵀD⁻¹L v + HᵀR⁻¹H v`.
    pub fn hessian_apply(&self, v: &Trajectory) -> Trajectory {
        let lin = &self.lin;
        let lv = lin.apply_l(v);
        let mut out = lin.apply_lt(&lin.apply_d_inv(&lv));
        let hv: Vec<f64> = self.obs.apply_h(v).into_iter().map(|x| x * self.inv_obs_var()).collect();
        out.axpy(1.0, &self.obs.apply_ht(&hv, lin.n(), lin.num_blocks()));
        out
    }

    /// `LᵀD⁻¹b + HᵀR⁻¹d`.
    pub fn rhs(&self) -> Trajectory {
        let lin = &self.lin;
        let mut out = lin.apply_lt(&lin.apply_d_inv(&self.b));
        let scaled: Vec<f64> = self.d.iter().map(|x| x * self.inv_obs_var()).collect();
        out.axpy(1.0, &self.obs.apply_ht(&scaled, lin.n(), lin.num_blocks()));
        out
    }

    /// The quadratic cost at the increment `dx`.
    pub fn quadratic_cost(&self, dx: &Trajectory) -> f64 {
        let lin = &self.lin;
        let mut r = lin.apply_l(dx);
        r.axpy(-1.0, &self.b);
        let model_term = r.dot(&lin.apply_d_inv(&r));
        let obs_term: f64 = self
            .obs
            .apply_h(dx)
            .iter()
            .zip(&self.d)
            .map(|(h, d)| (h - d) * (h - d))
            .sum::<f64>()
            * self.inv_obs_var();
        0.5 * (model_term + obs_term)
    }
}

/// Mismatch vectors of the linearisation: `b₀ = xᵇ - x₀`,
/// `b_i = M_{i-1}(x_{i-1}) - x_i` with the nonlinear model, and the
/// innovation `d_i = y_i - H_i(x_i)`. With these signs `½‖Lδx - b‖²_{D⁻¹}`
/// is the linearisation of the background and model-error terms.
pub fn compute_b_d(
    lin: &LinearizationState,
    background: &[f64],
    obs: &ObservationSet,
) -> Result<(Trajectory, Vec<f64>)> {
    check_len(lin.n(), background.len())?;
    obs.validate_against(lin.n(), lin.num_blocks())?;
    let x = lin.reference();
    let n = lin.n();
    let mut b = lin.zeros();
    for (o, (r, xb)) in b.block_mut(0).iter_mut().zip(x.block(0).iter().zip(background)) {
        *o = xb - r;
    }
    let mut forecast = vec![0.0; n];
    for i in 1..x.num_blocks() {
        rk4_into(lin.model(), x.block(i - 1), &mut forecast);
        for (o, (f, xi)) in b.block_mut(i).iter_mut().zip(forecast.iter().zip(x.block(i))) {
            *o = f - xi;
        }
    }
    if !b.is_finite() {
        return Err(Error::Overflow("model forecast in b".into()));
    }
    let hx = obs.apply_h(x);
    let d = obs.flat_values().iter().zip(&hx).map(|(y, h)| y - h).collect();
    Ok((b, d))
}

/// The weak-constraint cost of a full trajectory with the nonlinear model.
pub fn nonlinear_cost(
    model: &ModelConfig,
    background: &[f64],
    obs: &ObservationSet,
    covs: &CovarianceSet,
    x: &Trajectory,
) -> Result<f64> {
    check_len(model.n, x.n())?;
    check_len(model.n, background.len())?;
    obs.validate_against(model.n, x.num_blocks())?;

    let dev: Vec<f64> = x.block(0).iter().zip(background).map(|(a, b)| a - b).collect();
    let background_term = covs.background.inv_norm_sq(&dev);

    let hx = obs.apply_h(x);
    let obs_term = obs.flat_values().iter().zip(&hx).map(|(y, h)| (y - h) * (y - h)).sum::<f64>()
        / (obs.sigma_o() * obs.sigma_o());

    let mut model_term = 0.0;
    let mut forecast = vec![0.0; model.n];
    for i in 0..x.window() {
        rk4_into(model, x.block(i), &mut forecast);
        let mismatch: Vec<f64> = x.block(i + 1).iter().zip(&forecast).map(|(a, f)| a - f).collect();
        model_term += covs.model_error.inv_norm_sq(&mismatch);
    }
    let total = 0.5 * (background_term + obs_term + model_term);
    if total.is_finite() {
        Ok(total)
    } else {
        Err(Error::Overflow("nonlinear cost".into()))
    }
}
