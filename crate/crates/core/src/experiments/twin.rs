use rand::Rng;
use rand_distr::StandardNormal;

use crate::covariance::sample_gaussian;
use crate::error::{Error, Result};
use crate::lorenz96::{integrate, ModelConfig};
use crate::operators::{ObservationSet, Trajectory};

use super::ExperimentConfig;

const MAX_SPINUP_ATTEMPTS: usize = 5;

/// Synthetic truth, background and observations of one identical-twin run.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinData {
    pub truth: Trajectory,
    pub background: Vec<f64>,
    pub observations: ObservationSet,
}

/// Perturbs `(F, ..., F)`, discards a spin-up, and returns the following
/// `N + 1` states.
pub fn generate_truth<R: Rng + ?Sized>(cfg: &ExperimentConfig, rng: &mut R) -> Result<Trajectory> {
    let model = cfg.model()?;
    let mut last_err = None;
    for _ in 0..MAX_SPINUP_ATTEMPTS {
        match spin_up(&model, cfg, rng) {
            Ok(t) => return Ok(t),
            Err(e @ Error::Overflow(_)) => {
                log::warn!("truth spin-up diverged, reseeding: {e}");
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

fn spin_up<R: Rng + ?Sized>(model: &ModelConfig, cfg: &ExperimentConfig, rng: &mut R) -> Result<Trajectory> {
    let x0: Vec<f64> = (0..model.n)
        .map(|_| model.forcing + cfg.truth_perturbation * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let spun = integrate(model, &x0, cfg.spinup_steps)?;
    let start = spun.last().expect("integrate returns x0");
    Trajectory::from_blocks(integrate(model, start, cfg.window)?)
}

/// Truth, background `x₀ᵗ + B^{1/2} z` and direct observations
/// `H_i(x_iᵗ) + σ_o z_i`, each drawn from its own seeded stream.
pub fn generate_twin(cfg: &ExperimentConfig) -> Result<TwinData> {
    cfg.validate()?;
    let truth = generate_truth(cfg, &mut cfg.truth_rng())?;
    let covs = cfg.covariances()?;

    let mut background = truth.block(0).to_vec();
    if !cfg.noise_free {
        let noise = sample_gaussian(&covs.background, &mut cfg.background_rng());
        background.iter_mut().zip(noise).for_each(|(x, e)| *x += e);
    }

    let times = cfg.observation_times();
    let components = cfg.observation_components();
    let mut rng = cfg.observation_rng();
    let values = times
        .iter()
        .map(|&t| {
            let state = truth.block(t);
            components
                .iter()
                .map(|&c| {
                    let noise = if cfg.noise_free { 0.0 } else { cfg.sigma_o * rng.sample::<f64, _>(StandardNormal) };
                    state[c] + noise
                })
                .collect()
        })
        .collect();
    let observations = ObservationSet::new(times, vec![components; cfg.observation_times().len()], values, cfg.sigma_o)?;

    Ok(TwinData { truth, background, observations })
}
