//! Lorenz 96 dynamics on a periodic ring, advanced with classical RK4.
//!
//! The tangent-linear and adjoint steps are the exact derivative of the
//! discrete RK4 map: every stage is differentiated, and the stage states are
//! recomputed from the reference state on each call.

use crate::error::{check_len, Error, Result};

/// A state of the model, `(X^1, ..., X^n)`.
pub type StateVector = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub n: usize,
    pub forcing: f64,
    pub dt: f64,
}

impl ModelConfig {
    pub fn new(n: usize, forcing: f64, dt: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::Config(format!(
                "Lorenz 96 needs at least 4 grid points, got {n}"
            )));
        }
        if !forcing.is_finite() {
            return Err(Error::Config("forcing must be finite".into()));
        }
        // dt = 0 is allowed: the step is then the identity map.
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        Ok(Self { n, forcing, dt })
    }

    /// The state `(F, ..., F)`, a fixed point of the dynamics.
    pub fn equilibrium(&self) -> StateVector {
        vec![self.forcing; self.n]
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        check_len(self.n, x.len())
    }
}

#[inline]
fn wrap(j: usize, offset: isize, n: usize) -> usize {
    (j as isize + offset).rem_euclid(n as isize) as usize
}

pub(crate) fn tendency_into(forcing: f64, x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for j in 0..n {
        let xm2 = x[wrap(j, -2, n)];
        let xm1 = x[wrap(j, -1, n)];
        let xp1 = x[wrap(j, 1, n)];
        out[j] = (xp1 - xm2) * xm1 - x[j] + forcing;
    }
}

/// Jacobian of the tendency at `x` applied to `dx`.
fn tendency_jvp_into(x: &[f64], dx: &[f64], out: &mut [f64]) {
    let n = x.len();
    for j in 0..n {
        let (m2, m1, p1) = (wrap(j, -2, n), wrap(j, -1, n), wrap(j, 1, n));
        out[j] = (x[p1] - x[m2]) * dx[m1] + x[m1] * (dx[p1] - dx[m2]) - dx[j];
    }
}

/// Transposed Jacobian of the tendency at `x` applied to `lambda`, accumulated into `out`.
fn tendency_vjp_acc(x: &[f64], lambda: &[f64], out: &mut [f64]) {
    let n = x.len();
    for j in 0..n {
        let (m2, m1, p1) = (wrap(j, -2, n), wrap(j, -1, n), wrap(j, 1, n));
        let l = lambda[j];
        out[m1] += (x[p1] - x[m2]) * l;
        out[p1] += x[m1] * l;
        out[m2] -= x[m1] * l;
        out[j] -= l;
    }
}

/// The three intermediate RK4 states a reference step passes through.
struct Stages {
    x2: Vec<f64>,
    x3: Vec<f64>,
    x4: Vec<f64>,
}

fn stages(cfg: &ModelConfig, x: &[f64]) -> Stages {
    let n = x.len();
    let h = 0.5 * cfg.dt;
    let mut k = vec![0.0; n];
    tendency_into(cfg.forcing, x, &mut k);
    let x2: Vec<f64> = x.iter().zip(&k).map(|(a, b)| a + h * b).collect();
    tendency_into(cfg.forcing, &x2, &mut k);
    let x3: Vec<f64> = x.iter().zip(&k).map(|(a, b)| a + h * b).collect();
    tendency_into(cfg.forcing, &x3, &mut k);
    let x4: Vec<f64> = x.iter().zip(&k).map(|(a, b)| a + cfg.dt * b).collect();
    Stages { x2, x3, x4 }
}

pub(crate) fn rk4_into(cfg: &ModelConfig, x: &[f64], out: &mut [f64]) {
    let n = x.len();
    let dt = cfg.dt;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    tendency_into(cfg.forcing, x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    tendency_into(cfg.forcing, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    tendency_into(cfg.forcing, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    tendency_into(cfg.forcing, &tmp, &mut k4);
    for i in 0..n {
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

pub(crate) fn tlm_into(cfg: &ModelConfig, x_ref: &[f64], dx: &[f64], out: &mut [f64]) {
    let n = x_ref.len();
    let dt = cfg.dt;
    let s = stages(cfg, x_ref);
    let mut dk1 = vec![0.0; n];
    let mut dk2 = vec![0.0; n];
    let mut dk3 = vec![0.0; n];
    let mut dk4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    tendency_jvp_into(x_ref, dx, &mut dk1);
    for i in 0..n {
        tmp[i] = dx[i] + 0.5 * dt * dk1[i];
    }
    tendency_jvp_into(&s.x2, &tmp, &mut dk2);
    for i in 0..n {
        tmp[i] = dx[i] + 0.5 * dt * dk2[i];
    }
    tendency_jvp_into(&s.x3, &tmp, &mut dk3);
    for i in 0..n {
        tmp[i] = dx[i] + dt * dk3[i];
    }
    tendency_jvp_into(&s.x4, &tmp, &mut dk4);
    for i in 0..n {
        out[i] = dx[i] + dt / 6.0 * (dk1[i] + 2.0 * dk2[i] + 2.0 * dk3[i] + dk4[i]);
    }
}

/// Reverse sweep through the stages of `tlm_into`.
pub(crate) fn adj_into(cfg: &ModelConfig, x_ref: &[f64], dy: &[f64], out: &mut [f64]) {
    let n = x_ref.len();
    let dt = cfg.dt;
    let s = stages(cfg, x_ref);

    let mut a_k1: Vec<f64> = dy.iter().map(|v| dt / 6.0 * v).collect();
    let mut a_k2: Vec<f64> = dy.iter().map(|v| dt / 3.0 * v).collect();
    let mut a_k3: Vec<f64> = a_k2.clone();
    let a_k4: Vec<f64> = a_k1.clone();
    out.copy_from_slice(dy);

    let mut a_stage = vec![0.0; n];
    tendency_vjp_acc(&s.x4, &a_k4, &mut a_stage);
    for i in 0..n {
        out[i] += a_stage[i];
        a_k3[i] += dt * a_stage[i];
    }

    a_stage.fill(0.0);
    tendency_vjp_acc(&s.x3, &a_k3, &mut a_stage);
    for i in 0..n {
        out[i] += a_stage[i];
        a_k2[i] += 0.5 * dt * a_stage[i];
    }

    a_stage.fill(0.0);
    tendency_vjp_acc(&s.x2, &a_k2, &mut a_stage);
    for i in 0..n {
        out[i] += a_stage[i];
        a_k1[i] += 0.5 * dt * a_stage[i];
    }

    tendency_vjp_acc(x_ref, &a_k1, out);
}

/// Right-hand side of the Lorenz 96 ODE with cyclic index wrap.
pub fn tendency(cfg: &ModelConfig, x: &[f64]) -> Result<StateVector> {
    cfg.check(x)?;
    let mut out = vec![0.0; cfg.n];
    tendency_into(cfg.forcing, x, &mut out);
    Ok(out)
}

/// One classical RK4 step. Fails if the result is not finite.
pub fn step_rk4(cfg: &ModelConfig, x: &[f64]) -> Result<StateVector> {
    cfg.check(x)?;
    let mut out = vec![0.0; cfg.n];
    rk4_into(cfg, x, &mut out);
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Overflow("RK4 step left the attractor".into()))
    }
}

/// Tangent-linear RK4 step at `x_ref` applied to `dx`.
pub fn step_tlm(cfg: &ModelConfig, x_ref: &[f64], dx: &[f64]) -> Result<StateVector> {
    cfg.check(x_ref)?;
    cfg.check(dx)?;
    let mut out = vec![0.0; cfg.n];
    tlm_into(cfg, x_ref, dx, &mut out);
    Ok(out)
}

/// Adjoint RK4 step at `x_ref` applied to `dy`; the transpose of [`step_tlm`].
pub fn step_adj(cfg: &ModelConfig, x_ref: &[f64], dy: &[f64]) -> Result<StateVector> {
    cfg.check(x_ref)?;
    cfg.check(dy)?;
    let mut out = vec![0.0; cfg.n];
    adj_into(cfg, x_ref, dy, &mut out);
    Ok(out)
}

/// Returns `x0` followed by `steps` successive RK4 steps.
pub fn integrate(cfg: &ModelConfig, x0: &[f64], steps: usize) -> Result<Vec<StateVector>> {
    cfg.check(x0)?;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0.to_vec());
    for i in 0..steps {
        let next = step_rk4(cfg, &states[i])
            .map_err(|_| Error::Overflow(format!("RK4 step {} left the attractor", i + 1)))?;
        states.push(next);
    }
    Ok(states)
}
