use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::covariance::{build_correlation, make_covariance, CorrelationSpec};
use crate::error::{Error, Result};
use crate::lorenz96::ModelConfig;
use crate::operators::{CovarianceSet, ObservationSet};

/// Observation scenarios: error std and the fraction of grid points observed
/// at each observation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// `σ_o = 0.15`, 20 of 100 components per time (`p = 300`).
    One,
    /// `σ_o = 0.45`, `p = 300`.
    Two,
    /// `σ_o = 0.15`, 4 of 100 components per time (`p = 60`).
    Three,
}

impl Case {
    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Case::One),
            2 => Ok(Case::Two),
            3 => Ok(Case::Three),
            _ => Err(Error::Config(format!("unknown case {id}, expected 1, 2 or 3"))),
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Case::One => 1,
            Case::Two => 2,
            Case::Three => 3,
        }
    }

    pub fn sigma_o(self) -> f64 {
        match self {
            Case::One | Case::Three => 1.5e-1,
            Case::Two => 4.5e-1,
        }
    }

    /// Observed components per observation time on the 100-point grid.
    pub fn obs_per_time_at_100(self) -> usize {
        match self {
            Case::One | Case::Two => 20,
            Case::Three => 4,
        }
    }

    /// Observed components per observation time, scaled to an `n`-point grid.
    pub fn obs_per_time(self, n: usize) -> usize {
        ((self.obs_per_time_at_100() * n) as f64 / 100.0).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    None,
    Exact,
    LowRankLinv,
    LowRankS,
}

impl Variant {
    pub fn is_randomised(self) -> bool {
        matches!(self, Variant::LowRankLinv | Variant::LowRankS)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::None => "none",
            Variant::Exact => "exact",
            Variant::LowRankLinv => "lowrank-linv",
            Variant::LowRankS => "lowrank-s",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Variant::None),
            "exact" => Ok(Variant::Exact),
            "lowrank-linv" => Ok(Variant::LowRankLinv),
            "lowrank-s" => Ok(Variant::LowRankS),
            _ => Err(Error::Config(format!(
                "unknown preconditioner '{s}', expected none, exact, lowrank-linv or lowrank-s"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    /// Truth trajectory.
    pub truth: u64,
    /// Background and observation noise (separate streams of this seed).
    pub noise: u64,
    /// Gaussian sketch matrices; ensemble member `m` uses stream `m`.
    pub sketch: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { truth: 1, noise: 2, sketch: 3 }
    }
}

const STREAM_BACKGROUND: u64 = 1;
const STREAM_OBSERVATIONS: u64 = 2;

pub(crate) fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Everything needed to reproduce one twin experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub forcing: f64,
    pub dt: f64,
    /// Window length `N`; the trajectory has `N + 1` states.
    pub window: usize,
    pub background_sigma: f64,
    /// SOAR length scale of `B`, in grid spacings.
    pub background_lengthscale: f64,
    pub model_error_sigma: f64,
    /// Laplacian length scale of `Q`, in grid spacings.
    pub model_error_lengthscale: f64,
    pub case: Case,
    pub sigma_o: f64,
    pub obs_per_time: usize,
    pub obs_interval: usize,
    pub precond: Variant,
    pub rank: usize,
    pub oversampling: usize,
    pub iterations: usize,
    pub outer_iterations: usize,
    pub seeds: Seeds,
    /// Std of the perturbation of `(F, ..., F)` that seeds the spin-up.
    pub truth_perturbation: f64,
    pub spinup_steps: usize,
    /// Skip the background and observation noise (the assimilation still
    /// uses the configured `B` and `R`).
    pub noise_free: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::full_scale(Case::One)
    }
}

impl ExperimentConfig {
    /// `n = 100`, `N = 149`, `Δt = 0.025`, `F = 8`.
    pub fn full_scale(case: Case) -> Self {
        let n = 100;
        Self {
            n,
            forcing: 8.0,
            dt: 2.5e-2,
            window: 149,
            background_sigma: 0.2,
            background_lengthscale: 2.0,
            model_error_sigma: 0.05,
            model_error_lengthscale: 0.75,
            case,
            sigma_o: case.sigma_o(),
            obs_per_time: case.obs_per_time(n),
            obs_interval: 10,
            precond: Variant::None,
            rank: 30,
            oversampling: 5,
            iterations: 100,
            outer_iterations: 1,
            seeds: Seeds::default(),
            truth_perturbation: 1e-3,
            spinup_steps: 500,
            noise_free: false,
        }
    }

    /// `n = 20`, `N = 29`: small enough to assemble `P` and `W` densely.
    pub fn reduced(case: Case) -> Self {
        Self::full_scale(case).with_grid(20, 29)
    }

    pub fn with_grid(mut self, n: usize, window: usize) -> Self {
        self.n = n;
        self.window = window;
        self.obs_per_time = self.case.obs_per_time(n);
        self
    }

    pub fn with_case(mut self, case: Case) -> Self {
        self.case = case;
        self.sigma_o = case.sigma_o();
        self.obs_per_time = case.obs_per_time(self.n);
        self
    }

    pub fn with_variant(mut self, precond: Variant, rank: usize) -> Self {
        self.precond = precond;
        self.rank = rank;
        self
    }

    pub fn with_seeds(mut self, truth: u64, noise: u64, sketch: u64) -> Self {
        self.seeds = Seeds { truth, noise, sketch };
        self
    }

    /// `σ_q = 0.1` with the given `Q` length scale in grid spacings.
    pub fn large_model_error(mut self, lengthscale: f64) -> Self {
        self.model_error_sigma = 0.1;
        self.model_error_lengthscale = lengthscale;
        self
    }

    /// Grid spacing `1/n`.
    pub fn dx(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("background_sigma", self.background_sigma),
            ("background_lengthscale", self.background_lengthscale),
            ("model_error_sigma", self.model_error_sigma),
            ("model_error_lengthscale", self.model_error_lengthscale),
            ("sigma_o", self.sigma_o),
            ("dt", self.dt),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if self.obs_per_time == 0 || self.obs_per_time > self.n {
            return Err(Error::Config(format!(
                "obs_per_time must lie in 1..={}, got {}",
                self.n, self.obs_per_time
            )));
        }
        if self.obs_interval == 0 || self.iterations == 0 || self.outer_iterations == 0 {
            return Err(Error::Config("obs_interval, iterations and outer_iterations must be positive".into()));
        }
        if self.precond.is_randomised() && self.rank + self.oversampling > self.n * (self.window + 1) {
            return Err(Error::Config("rank + oversampling exceeds the problem dimension".into()));
        }
        self.model().map(|_| ())
    }

    pub fn model(&self) -> Result<ModelConfig> {
        ModelConfig::new(self.n, self.forcing, self.dt)
    }

    pub fn covariances(&self) -> Result<CovarianceSet> {
        let dx = self.dx();
        let cb = build_correlation(&CorrelationSpec::soar(self.n, dx, self.background_lengthscale * dx))?;
        let cq = build_correlation(&CorrelationSpec::laplacian(self.n, dx, self.model_error_lengthscale * dx))?;
        CovarianceSet::new(make_covariance(&cb, self.background_sigma)?, make_covariance(&cq, self.model_error_sigma)?)
    }

    pub(crate) fn shared_covariances(&self) -> Result<Arc<CovarianceSet>> {
        self.covariances().map(Arc::new)
    }

    pub fn observation_times(&self) -> Vec<usize> {
        ObservationSet::regular_times(self.window, self.obs_interval)
    }

    pub fn observation_components(&self) -> Vec<usize> {
        ObservationSet::even_components(self.n, self.obs_per_time)
    }

    /// Total observation count `p`.
    pub fn total_observations(&self) -> usize {
        self.observation_times().len() * self.obs_per_time
    }

    pub fn truth_rng(&self) -> ChaCha8Rng {
        seeded_stream(self.seeds.truth, 0)
    }

    pub fn background_rng(&self) -> ChaCha8Rng {
        seeded_stream(self.seeds.noise, STREAM_BACKGROUND)
    }

    pub fn observation_rng(&self) -> ChaCha8Rng {
        seeded_stream(self.seeds.noise, STREAM_OBSERVATIONS)
    }

    pub fn sketch_rng(&self, member: u64) -> ChaCha8Rng {
        seeded_stream(self.seeds.sketch, member)
    }

    /// Resolved configuration as `key=value` lines.
    pub fn dump(&self) -> String {
        let dx = self.dx();
        let entries: Vec<(&str, String)> = vec![
            ("n", self.n.to_string()),
            ("forcing", self.forcing.to_string()),
            ("dt", self.dt.to_string()),
            ("window", self.window.to_string()),
            ("dx", dx.to_string()),
            ("background_sigma", self.background_sigma.to_string()),
            ("background_correlation", "soar".into()),
            ("background_lengthscale", (self.background_lengthscale * dx).to_string()),
            ("background_lengthscale_dx", self.background_lengthscale.to_string()),
            ("model_error_sigma", self.model_error_sigma.to_string()),
            ("model_error_correlation", "laplacian".into()),
            ("model_error_lengthscale", (self.model_error_lengthscale * dx).to_string()),
            ("model_error_lengthscale_dx", self.model_error_lengthscale.to_string()),
            ("case", self.case.id().to_string()),
            ("sigma_o", self.sigma_o.to_string()),
            ("obs_interval", self.obs_interval.to_string()),
            ("obs_per_time", self.obs_per_time.to_string()),
            (
                "obs_times",
                self.observation_times().iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
            ),
            ("obs_total", self.total_observations().to_string()),
            ("precond", self.precond.to_string()),
            ("rank", self.rank.to_string()),
            ("oversampling", self.oversampling.to_string()),
            ("iterations", self.iterations.to_string()),
            ("outer_iterations", self.outer_iterations.to_string()),
            ("seed_truth", self.seeds.truth.to_string()),
            ("seed_noise", self.seeds.noise.to_string()),
            ("seed_sketch", self.seeds.sketch.to_string()),
            ("truth_perturbation", self.truth_perturbation.to_string()),
            ("spinup_steps", self.spinup_steps.to_string()),
            ("noise_free", self.noise_free.to_string()),
        ];
        entries.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}
