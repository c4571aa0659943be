//! Identical-twin experiments with Lorenz 96: data generation, single and
//! ensemble inner solves, the outer Gauss-Newton loop, and singular-value
//! dumps of `P` and `W`.

mod config;
mod runs;
mod singvals;
mod twin;

pub use config::{Case, ExperimentConfig, Seeds, Variant};
pub(crate) use config::seeded_stream;
pub use runs::{
    background_trajectory, ensemble_of, gauss_newton, gauss_newton_from, run_ensemble, run_inner, AggregateRow,
    EnsembleResult, Experiment, GaussNewtonResult,
};
pub use singvals::{dump_singular_values, SingularValueTable, Which};
pub use twin::{generate_truth, generate_twin, TwinData};
