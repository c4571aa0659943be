//! Dense reference implementations shared by the integration tests. Every
//! operator is rebuilt here as an explicit matrix from its block definition,
//! independently of the recursions used by the library.

#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use wc4dvar::covariance::{build_correlation, make_covariance, CorrelationSpec};
use wc4dvar::lorenz96::{integrate, step_tlm, ModelConfig};
use wc4dvar::operators::{CovarianceSet, InnerProblem, LinearizationState, ObservationSet, Trajectory};
use wc4dvar::precond::{Preconditioner, PreconditionerKind};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn random_trajectory<R: Rng>(rng: &mut R, n: usize, blocks: usize) -> Trajectory {
    Trajectory::from_vec(n, gaussian_vec(rng, n * blocks)).unwrap()
}

pub fn to_dvec(t: &Trajectory) -> DVector<f64> {
    DVector::from_column_slice(t.as_slice())
}

pub fn from_dvec(n: usize, v: &DVector<f64>) -> Trajectory {
    Trajectory::from_vec(n, v.iter().copied().collect()).unwrap()
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Assembles any linear map on trajectories by applying it to unit vectors.
pub fn assemble<F: Fn(&Trajectory) -> Trajectory>(n: usize, blocks: usize, f: F) -> DMatrix<f64> {
    let s = n * blocks;
    let mut m = DMatrix::zeros(s, s);
    for j in 0..s {
        let mut e = Trajectory::zeros(n, blocks);
        e.as_mut_slice()[j] = 1.0;
        m.set_column(j, &to_dvec(&f(&e)));
    }
    m
}

/// Jacobian of one RK4 step, column by column.
pub fn tlm_matrix(model: &ModelConfig, x: &[f64]) -> DMatrix<f64> {
    let n = model.n;
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        m.set_column(j, &DVector::from_vec(step_tlm(model, x, &e).unwrap()));
    }
    m
}

/// Block lower-bidiagonal `L` with `I` on the diagonal and `-M_{i-1}` below.
pub fn dense_l(lin: &LinearizationState) -> DMatrix<f64> {
    let (n, blocks) = (lin.n(), lin.num_blocks());
    let mut l = DMatrix::identity(n * blocks, n * blocks);
    for i in 1..blocks {
        let m = tlm_matrix(lin.model(), lin.reference().block(i - 1));
        l.view_mut((i * n, (i - 1) * n), (n, n)).copy_from(&(-m));
    }
    l
}

fn block_diag(n: usize, blocks: usize, block: impl Fn(usize) -> DMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n * blocks, n * blocks);
    for i in 0..blocks {
        d.view_mut((i * n, i * n), (n, n)).copy_from(&block(i));
    }
    d
}

pub fn dense_d(lin: &LinearizationState) -> DMatrix<f64> {
    let covs = lin.covariances();
    block_diag(lin.n(), lin.num_blocks(), |i| covs.block(i).matrix().clone())
}

/// Symmetric square root of `D` from a fresh eigendecomposition.
pub fn dense_d_sqrt(lin: &LinearizationState) -> DMatrix<f64> {
    let covs = lin.covariances();
    block_diag(lin.n(), lin.num_blocks(), |i| {
        let eig = covs.block(i).matrix().clone().symmetric_eigen();
        let sq = eig.eigenvalues.map(f64::sqrt);
        &eig.eigenvectors * DMatrix::from_diagonal(&sq) * eig.eigenvectors.transpose()
    })
}

pub fn dense_h(obs: &ObservationSet, n: usize, blocks: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(obs.count(), n * blocks);
    let mut row = 0;
    for (&t, comps) in obs.times().iter().zip(obs.components()) {
        for &c in comps {
            h[(row, t * n + c)] = 1.0;
            row += 1;
        }
    }
    h
}

pub fn inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().lu().try_inverse().expect("invertible")
}

/// Dense `A`, right-hand side and cost of an inner problem.
pub struct DenseProblem {
    pub n: usize,
    pub blocks: usize,
    pub l: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub d_inv: DMatrix<f64>,
    pub d_sqrt: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub r_inv: f64,
    pub b: DVector<f64>,
    pub dvec: DVector<f64>,
}

impl DenseProblem {
    pub fn new(prob: &InnerProblem) -> Self {
        let lin = prob.linearization();
        let (n, blocks) = (lin.n(), lin.num_blocks());
        let d = dense_d(lin);
        let sigma_o = prob.observations().sigma_o();
        Self {
            n,
            blocks,
            l: dense_l(lin),
            d_inv: inverse(&d),
            d,
            d_sqrt: dense_d_sqrt(lin),
            h: dense_h(prob.observations(), n, blocks),
            r_inv: 1.0 / (sigma_o * sigma_o),
            b: to_dvec(prob.b()),
            dvec: DVector::from_column_slice(prob.d()),
        }
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        self.l.transpose() * &self.d_inv * &self.l + self.h.transpose() * &self.h * self.r_inv
    }

    pub fn rhs(&self) -> DVector<f64> {
        self.l.transpose() * &self.d_inv * &self.b + self.h.transpose() * &self.dvec * self.r_inv
    }

    pub fn cost(&self, dx: &DVector<f64>) -> f64 {
        let r = &self.l * dx - &self.b;
        let o = &self.h * dx - &self.dvec;
        0.5 * ((r.transpose() * &self.d_inv * &r)[0] + o.norm_squared() * self.r_inv)
    }

    pub fn solve(&self) -> DVector<f64> {
        self.hessian().lu().solve(&self.rhs()).expect("nonsingular Hessian")
    }

    pub fn linv(&self) -> DMatrix<f64> {
        inverse(&self.l)
    }

    pub fn p(&self) -> DMatrix<f64> {
        self.linv() - DMatrix::identity(self.l.nrows(), self.l.ncols())
    }

    pub fn w(&self) -> DMatrix<f64> {
        self.p() * &self.d_sqrt
    }

    /// The preconditioner `C` written out from its definition.
    pub fn c(&self, prec: &Preconditioner) -> DMatrix<f64> {
        let s = self.l.nrows();
        match prec.kind() {
            PreconditionerKind::None => DMatrix::identity(s, s),
            PreconditionerKind::ExactCvt => self.linv() * &self.d_sqrt,
            PreconditionerKind::LowRankLinv(f) => {
                let lr = &f.u * DMatrix::from_diagonal(&f.sigma) * f.v.transpose();
                (DMatrix::identity(s, s) + lr) * &self.d_sqrt
            }
            PreconditionerKind::LowRankS(f) => &self.d_sqrt + &f.u * DMatrix::from_diagonal(&f.sigma) * f.v.transpose(),
        }
    }
}

pub struct FixtureSpec {
    pub n: usize,
    pub window: usize,
    /// Observed `(time, components)` pairs.
    pub obs: Vec<(usize, Vec<usize>)>,
    pub sigma_o: f64,
    pub seed: u64,
}

impl FixtureSpec {
    /// `n = 5`, `N = 4`, `p = 6`.
    pub fn small() -> Self {
        Self { n: 5, window: 4, obs: vec![(1, vec![0, 3]), (2, vec![1, 4]), (4, vec![2, 3])], sigma_o: 0.3, seed: 11 }
    }
}

pub fn small_covariances(n: usize) -> Arc<CovarianceSet> {
    let dx = 1.0 / n as f64;
    let cb = build_correlation(&CorrelationSpec::laplacian(n, dx, 0.6 * dx)).unwrap();
    let cq = build_correlation(&CorrelationSpec::laplacian(n, dx, 0.4 * dx)).unwrap();
    Arc::new(CovarianceSet::new(make_covariance(&cb, 0.4).unwrap(), make_covariance(&cq, 0.2).unwrap()).unwrap())
}

/// A small inner problem around a reference that is not model-consistent,
/// so every block of `b` and every innovation is nonzero.
pub fn fixture(spec: &FixtureSpec) -> InnerProblem {
    let mut rng = rng(spec.seed);
    let model = ModelConfig::new(spec.n, 8.0, 0.05).unwrap();
    let x0: Vec<f64> = gaussian_vec(&mut rng, spec.n).iter().map(|z| 8.0 + 2.0 * z).collect();
    let mut reference = Trajectory::from_blocks(integrate(&model, &x0, spec.window).unwrap()).unwrap();
    for (x, z) in reference.as_mut_slice().iter_mut().zip(gaussian_vec(&mut rng, spec.n * (spec.window + 1))) {
        *x += 0.1 * z;
    }
    let background: Vec<f64> = reference.block(0).iter().map(|x| x + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
    let (times, comps): (Vec<usize>, Vec<Vec<usize>>) = spec.obs.iter().cloned().unzip();
    let values = times
        .iter()
        .zip(&comps)
        .map(|(&t, c)| c.iter().map(|&j| reference.block(t)[j] + rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let obs = ObservationSet::new(times, comps, values, spec.sigma_o).unwrap();
    let lin = LinearizationState::new(model, reference, small_covariances(spec.n)).unwrap();
    InnerProblem::from_background(lin, &background, obs).unwrap()
}

/// Relative adjoint mismatch `|⟨Au, v⟩ - ⟨u, Aᵀv⟩| / (‖Au‖ ‖v‖)`.
pub fn adjoint_mismatch(au: &[f64], v: &[f64], u: &[f64], atv: &[f64]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let norm = |a: &[f64]| dot(a, a).sqrt();
    (dot(au, v) - dot(u, atv)).abs() / (norm(au) * norm(v))
}
