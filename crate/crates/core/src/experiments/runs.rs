use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_csv};
use crate::lorenz96::integrate;
use crate::operators::{nonlinear_cost, CovarianceSet, InnerProblem, LinearizationState, Trajectory};
use crate::parallel::map_indices;
use crate::pcg::{pcg_solve, SolveStatus, SolveTrace, SolverConfig};
use crate::precond::{build_lowrank_linv, build_lowrank_s, Preconditioner};

use super::{ExperimentConfig, TwinData, Variant};

/// `x₀ = x^b` propagated with the nonlinear model over the window.
pub fn background_trajectory(cfg: &ExperimentConfig, background: &[f64]) -> Result<Trajectory> {
    Trajectory::from_blocks(integrate(&cfg.model()?, background, cfg.window)?)
}

/// An inner problem ready to be solved with any preconditioner.
#[derive(Debug, Clone)]
pub struct Experiment {
    cfg: ExperimentConfig,
    problem: InnerProblem,
}

impl Experiment {
    /// Linearises around the model-consistent background trajectory.
    pub fn new(cfg: &ExperimentConfig, twin: &TwinData) -> Result<Self> {
        let reference = background_trajectory(cfg, &twin.background)?;
        Self::linearized_at(cfg, twin, reference, cfg.shared_covariances()?)
    }

    pub fn linearized_at(
        cfg: &ExperimentConfig,
        twin: &TwinData,
        reference: Trajectory,
        covs: Arc<CovarianceSet>,
    ) -> Result<Self> {
        cfg.validate()?;
        let lin = LinearizationState::new(cfg.model()?, reference, covs)?;
        let problem = InnerProblem::from_background(lin, &twin.background, twin.observations.clone())?;
        Ok(Self { cfg: cfg.clone(), problem })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn problem(&self) -> &InnerProblem {
        &self.problem
    }

    /// Builds the configured preconditioner; randomised variants draw their
    /// sketch from stream `member` of the sketch seed.
    pub fn preconditioner(&self, variant: Variant, member: u64) -> Result<Preconditioner> {
        let lin = self.problem.linearization();
        let (k, l) = (self.cfg.rank, self.cfg.oversampling);
        match variant {
            Variant::None => Ok(Preconditioner::none()),
            Variant::Exact => Ok(Preconditioner::exact_cvt()),
            Variant::LowRankLinv => build_lowrank_linv(lin, k, l, &mut self.cfg.sketch_rng(member)),
            Variant::LowRankS => build_lowrank_s(lin, k, l, &mut self.cfg.sketch_rng(member)),
        }
    }

    pub fn solve(&self, prec: &Preconditioner) -> Result<(Trajectory, SolveTrace)> {
        pcg_solve(&self.problem, prec, &SolverConfig::fixed(self.cfg.iterations))
    }

    pub fn run(&self, variant: Variant, member: u64) -> Result<SolveTrace> {
        let prec = self.preconditioner(variant, member)?;
        Ok(self.solve(&prec)?.1)
    }
}

/// One inner solve with the configured preconditioner.
pub fn run_inner(cfg: &ExperimentConfig, twin: &TwinData) -> Result<SolveTrace> {
    Experiment::new(cfg, twin)?.run(cfg.precond, 0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub iteration: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub members: Vec<SolveTrace>,
    /// Statistics over members that did not break down.
    pub aggregate: Vec<AggregateRow>,
    pub breakdowns: usize,
}

impl EnsembleResult {
    pub fn from_members(members: Vec<SolveTrace>, iterations: usize) -> Self {
        let good: Vec<&SolveTrace> = members.iter().filter(|t| t.status != SolveStatus::Breakdown).collect();
        let breakdowns = members.len() - good.len();
        let aggregate = if good.is_empty() {
            Vec::new()
        } else {
            (0..=iterations)
                .map(|it| {
                    let values: Vec<f64> = good.iter().map(|t| t.cost_at(it)).collect();
                    let count = values.len() as f64;
                    let mean = values.iter().sum::<f64>() / count;
                    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
                    AggregateRow {
                        iteration: it,
                        mean,
                        min: values.iter().copied().fold(f64::INFINITY, f64::min),
                        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        std: var.sqrt(),
                    }
                })
                .collect()
        };
        Self { members, aggregate, breakdowns }
    }

    pub fn mean_costs(&self) -> Vec<f64> {
        self.aggregate.iter().map(|r| r.mean).collect()
    }

    /// CSV with header `iteration,mean,min,max,std`.
    pub fn write_aggregate_csv<W: Write>(&self, w: W) -> Result<()> {
        let rows = self.aggregate.iter().map(|r| {
            vec![r.iteration.to_string(), fmt_f64(r.mean), fmt_f64(r.min), fmt_f64(r.max), fmt_f64(r.std)]
        });
        write_csv(w, &["iteration", "mean", "min", "max", "std"], rows)
    }
}

/// Solves the same inner problem with `realisations` independent sketches.
pub fn run_ensemble(cfg: &ExperimentConfig, twin: &TwinData, realisations: usize) -> Result<EnsembleResult> {
    if realisations == 0 {
        return Err(Error::Config("ensemble needs at least one realisation".into()));
    }
    let experiment = Experiment::new(cfg, twin)?;
    ensemble_of(&experiment, cfg.precond, realisations)
}

/// Ensemble over sketch streams `0..realisations` of a prepared experiment.
pub fn ensemble_of(experiment: &Experiment, variant: Variant, realisations: usize) -> Result<EnsembleResult> {
    let members = map_indices(realisations, |m| experiment.run(variant, m as u64));
    let members = members.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EnsembleResult::from_members(members, experiment.config().iterations))
}

#[derive(Debug, Clone)]
pub struct GaussNewtonResult {
    pub analysis: Trajectory,
    /// Nonlinear cost at the initial trajectory and after each outer step.
    pub costs: Vec<f64>,
    pub traces: Vec<SolveTrace>,
}

/// Outer loop: linearise, solve the inner problem, update `x ← x + δx`.
pub fn gauss_newton(cfg: &ExperimentConfig, twin: &TwinData, outer: usize) -> Result<GaussNewtonResult> {
    let initial = background_trajectory(cfg, &twin.background)?;
    gauss_newton_from(cfg, twin, initial, outer)
}

pub fn gauss_newton_from(
    cfg: &ExperimentConfig,
    twin: &TwinData,
    initial: Trajectory,
    outer: usize,
) -> Result<GaussNewtonResult> {
    if outer == 0 {
        return Err(Error::Config("at least one outer iteration is required".into()));
    }
    let model = cfg.model()?;
    let covs = cfg.shared_covariances()?;
    let cost = |x: &Trajectory| nonlinear_cost(&model, &twin.background, &twin.observations, &covs, x);

    let mut x = initial;
    let mut costs = vec![cost(&x)?];
    let mut traces = Vec::with_capacity(outer);
    for j in 0..outer {
        let experiment = Experiment::linearized_at(cfg, twin, x.clone(), covs.clone())?;
        let prec = experiment.preconditioner(cfg.precond, j as u64)?;
        let (dx, trace) = experiment.solve(&prec)?;
        x.axpy(1.0, &dx);
        let j_new = cost(&x)?;
        if j_new > *costs.last().unwrap() {
            log::warn!("outer iteration {}: nonlinear cost increased to {j_new:e}", j + 1);
        }
        costs.push(j_new);
        traces.push(trace);
    }
    Ok(GaussNewtonResult { analysis: x, costs, traces })
}
