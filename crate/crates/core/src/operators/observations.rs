use crate::error::{Error, Result};

use super::Trajectory;

/// Direct observations of selected grid components at selected times.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    times: Vec<usize>,
    components: Vec<Vec<usize>>,
    values: Vec<Vec<f64>>,
    sigma_o: f64,
}

impl ObservationSet {
    pub fn new(
        times: Vec<usize>,
        components: Vec<Vec<usize>>,
        values: Vec<Vec<f64>>,
        sigma_o: f64,
    ) -> Result<Self> {
        if times.len() != components.len() || times.len() != values.len() {
            return Err(Error::Config("observation times, components and values differ in length".into()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("observation times must be strictly increasing".into()));
        }
        for (c, v) in components.iter().zip(&values) {
            if c.len() != v.len() {
                return Err(Error::Config("observation components and values differ in length".into()));
            }
            if v.iter().any(|y| !y.is_finite()) {
                return Err(Error::Config("observation values must be finite".into()));
            }
        }
        if !(sigma_o > 0.0) || !sigma_o.is_finite() {
            return Err(Error::Config(format!("observation error std must be positive, got {sigma_o}")));
        }
        Ok(Self { times, components, values, sigma_o })
    }

    /// Observation layout with all values zero.
    pub fn layout(times: Vec<usize>, components: Vec<Vec<usize>>, sigma_o: f64) -> Result<Self> {
        let values = components.iter().map(|c| vec![0.0; c.len()]).collect();
        Self::new(times, components, values, sigma_o)
    }

    /// Every `interval`-th time counted back from `window`, so the final time is observed.
    pub fn regular_times(window: usize, interval: usize) -> Vec<usize> {
        let mut t: Vec<usize> = (0..=window).rev().step_by(interval.max(1)).collect();
        t.reverse();
        t
    }

    /// `count` evenly spaced grid indices starting at 0.
    pub fn even_components(n: usize, count: usize) -> Vec<usize> {
        let count = count.min(n);
        (0..count).map(|i| i * n / count).collect()
    }

    pub fn times(&self) -> &[usize] {
        &self.times
    }

    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn sigma_o(&self) -> f64 {
        self.sigma_o
    }

    /// Total number of observations `p`.
    pub fn count(&self) -> usize {
        self.components.iter().map(Vec::len).sum()
    }

    /// Observation vector `y` flattened in time order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn with_values(&self, values: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(self.times.clone(), self.components.clone(), values, self.sigma_o)
    }

    pub(crate) fn validate_against(&self, n: usize, blocks: usize) -> Result<()> {
        if self.times.last().is_some_and(|&t| t >= blocks) {
            return Err(Error::Config(format!("observation time beyond window of {blocks} blocks")));
        }
        if self.components.iter().flatten().any(|&c| c >= n) {
            return Err(Error::Config(format!("observed component index out of range for n = {n}")));
        }
        Ok(())
    }

    /// Selects observed components at observed times.
    pub fn apply_h(&self, v: &Trajectory) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count());
        for (&t, comps) in self.times.iter().zip(&self.components) {
            let block = v.block(t);
            out.extend(comps.iter().map(|&c| block[c]));
        }
        out
    }

    /// Scatters an observation-space vector into a zero trajectory of the given shape.
    pub fn apply_ht(&self, w: &[f64], n: usize, blocks: usize) -> Trajectory {
        assert_eq!(w.len(), self.count(), "observation vector length");
        let mut out = Trajectory::zeros(n, blocks);
        let mut k = 0;
        for (&t, comps) in self.times.iter().zip(&self.components) {
            let block = out.block_mut(t);
            for &c in comps {
                block[c] += w[k];
                k += 1;
            }
        }
        out
    }
}
