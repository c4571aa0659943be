use crate::error::{check_len, Error, Result};

/// A space-time vector `(x_0, ..., x_N)` stored contiguously, blocked by time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    n: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn zeros(n: usize, blocks: usize) -> Self {
        assert!(n > 0, "state dimension must be positive");
        Self { n, data: vec![0.0; n * blocks] }
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || data.is_empty() || !data.len().is_multiple_of(n) {
            return Err(Error::Config(format!(
                "{} entries do not split into blocks of {n}",
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    pub fn from_blocks(blocks: Vec<Vec<f64>>) -> Result<Self> {
        let n = blocks.first().map(Vec::len).unwrap_or(0);
        if n == 0 {
            return Err(Error::Config("trajectory needs at least one non-empty block".into()));
        }
        let mut data = Vec::with_capacity(n * blocks.len());
        for b in &blocks {
            check_len(n, b.len())?;
            data.extend_from_slice(b);
        }
        Ok(Self { n, data })
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of time blocks, `N + 1`.
    pub fn num_blocks(&self) -> usize {
        self.data.len() / self.n
    }

    /// Window length `N`.
    pub fn window(&self) -> usize {
        self.num_blocks() - 1
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn blocks(&self) -> std::slice::Chunks<'_, f64> {
        self.data.chunks(self.n)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n == other.n && self.data.len() == other.data.len()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
