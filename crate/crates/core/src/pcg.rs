//! Conjugate gradients on the transformed system `Cᵀ A C δx̃ = Cᵀ rhs`,
//! recording the quadratic cost of the physical iterate `δx = C δx̃` after
//! every iteration.

use std::io::Write;

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_csv};
use crate::operators::{dot, InnerProblem, Trajectory};
use crate::precond::Preconditioner;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once `‖r‖ ≤ tol ‖Cᵀ rhs‖` in the transformed space.
    pub residual_tolerance: f64,
    /// Run exactly `max_iterations`, ignoring the tolerance.
    pub fixed_iterations: bool,
}

impl SolverConfig {
    pub fn fixed(iterations: usize) -> Self {
        Self { max_iterations: iterations, residual_tolerance: f64::EPSILON, fixed_iterations: true }
    }

    pub fn tolerance(tol: f64, max_iterations: usize) -> Self {
        Self { max_iterations, residual_tolerance: tol, fixed_iterations: false }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.residual_tolerance > 0.0) {
            return Err(Error::Config("residual tolerance must be positive".into()));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::fixed(100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub cost: f64,
    pub resnorm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// Non-positive curvature `pᵀ Cᵀ A C p ≤ 0`, i.e. a singular `C`.
    Breakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
    pub status: SolveStatus,
    pub preconditioner: &'static str,
}

impl SolveTrace {
    pub fn costs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cost).collect()
    }

    pub fn initial_cost(&self) -> f64 {
        self.records[0].cost
    }

    pub fn final_cost(&self) -> f64 {
        self.records.last().expect("trace is never empty").cost
    }

    /// Cost after `iteration` iterations; a trace that stopped early holds
    /// its last value.
    pub fn cost_at(&self, iteration: usize) -> f64 {
        self.records.get(iteration).unwrap_or_else(|| self.records.last().unwrap()).cost
    }

    /// First iteration whose cost is at most `initial / factor`.
    pub fn iterations_to_reduce(&self, factor: f64) -> Option<usize> {
        let target = self.initial_cost() / factor;
        self.records.iter().find(|r| r.cost <= target).map(|r| r.iteration)
    }

    /// CSV with header `iteration,cost,resnorm`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let rows = self
            .records
            .iter()
            .map(|r| vec![r.iteration.to_string(), fmt_f64(r.cost), fmt_f64(r.resnorm)]);
        write_csv(w, &["iteration", "cost", "resnorm"], rows)
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// Solves the inner problem from a zero initial guess. Returns the physical
/// increment and the per-iteration trace.
pub fn pcg_solve(
    prob: &InnerProblem,
    prec: &Preconditioner,
    cfg: &SolverConfig,
) -> Result<(Trajectory, SolveTrace)> {
    cfg.validate()?;
    let lin = prob.linearization();
    let dim = lin.dim();
    let variant = prec.name();

    let apply_transformed = |v: &[f64], out: &mut [f64]| {
        let mut cv = lin.zeros();
        prec.c_into(lin, v, cv.as_mut_slice());
        let acv = prob.hessian_apply(&cv);
        prec.ct_into(lin, acv.as_slice(), out);
    };

    let mut rhs = vec![0.0; dim];
    prec.ct_into(lin, prob.rhs().as_slice(), &mut rhs);
    let rhs_norm = dot(&rhs, &rhs).sqrt();

    let mut x = vec![0.0; dim];
    let mut dx = lin.zeros();
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut q = vec![0.0; dim];
    let mut rr = dot(&r, &r);

    let mut records = vec![TraceRecord { iteration: 0, cost: prob.quadratic_cost(&dx), resnorm: rr.sqrt() }];
    if !records[0].cost.is_finite() {
        return Err(Error::NonFiniteCost { iteration: 0, variant });
    }
    if rr == 0.0 {
        let trace = SolveTrace { records, status: SolveStatus::Converged, preconditioner: variant };
        return Ok((dx, trace));
    }

    let mut status = SolveStatus::MaxIterations;
    for iteration in 1..=cfg.max_iterations {
        apply_transformed(&p, &mut q);
        let curvature = dot(&p, &q);
        if !(curvature > 0.0) {
            log::warn!("{variant}: CG breakdown at iteration {iteration} (pᵀAp = {curvature:e})");
            status = SolveStatus::Breakdown;
            break;
        }
        let alpha = rr / curvature;
        for i in 0..dim {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }

        prec.c_into(lin, &x, dx.as_mut_slice());
        let cost = prob.quadratic_cost(&dx);
        if !cost.is_finite() {
            return Err(Error::NonFiniteCost { iteration, variant });
        }
        let rr_new = dot(&r, &r);
        records.push(TraceRecord { iteration, cost, resnorm: rr_new.sqrt() });

        if rr_new == 0.0 || (!cfg.fixed_iterations && rr_new.sqrt() <= cfg.residual_tolerance * rhs_norm) {
            status = SolveStatus::Converged;
            break;
        }
        let beta = rr_new / rr;
        for i in 0..dim {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }

    Ok((dx, SolveTrace { records, status, preconditioner: variant }))
}
