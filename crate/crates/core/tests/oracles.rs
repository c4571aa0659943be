mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use common::*;
use wc4dvar::experiments::{dump_singular_values, gauss_newton, gauss_newton_from, generate_twin, Case, ExperimentConfig, Variant, Which};
use wc4dvar::lorenz96::{integrate, step_adj, step_rk4, step_tlm, tendency, ModelConfig};
use wc4dvar::operators::{compute_b_d, nonlinear_cost, InnerProblem, Trajectory};
use wc4dvar::pcg::{pcg_solve, SolveStatus, SolverConfig};
use wc4dvar::precond::{build_lowrank_linv, build_lowrank_s, Preconditioner};
use wc4dvar::rsvd::{assemble_dense, rsvd, DenseOperator};

fn all_preconditioners(prob: &InnerProblem, k: usize, l: usize, seed: u64) -> Vec<Preconditioner> {
    let lin = prob.linearization();
    vec![
        Preconditioner::none(),
        Preconditioner::exact_cvt(),
        build_lowrank_linv(lin, k, l, &mut rng(seed)).unwrap(),
        build_lowrank_s(lin, k, l, &mut rng(seed)).unwrap(),
    ]
}

#[test]
fn block_operators_match_dense_assembly() {
    let prob = fixture(&FixtureSpec::small());
    let lin = prob.linearization();
    let dense = DenseProblem::new(&prob);
    let (n, blocks) = (lin.n(), lin.num_blocks());

    let cases: Vec<(&str, DMatrix<f64>, DMatrix<f64>)> = vec![
        ("L", assemble(n, blocks, |v| lin.apply_l(v)), dense.l.clone()),
        ("Lt", assemble(n, blocks, |v| lin.apply_lt(v)), dense.l.transpose()),
        ("Linv", assemble(n, blocks, |v| lin.apply_linv(v)), dense.linv()),
        ("Linvt", assemble(n, blocks, |v| lin.apply_linvt(v)), dense.linv().transpose()),
        ("P", assemble(n, blocks, |v| lin.apply_p(v)), dense.p()),
        ("Pt", assemble(n, blocks, |v| lin.apply_pt(v)), dense.p().transpose()),
        ("W", assemble(n, blocks, |v| lin.apply_w(v)), dense.w()),
        ("Wt", assemble(n, blocks, |v| lin.apply_wt(v)), dense.w().transpose()),
        ("Dsqrt", assemble(n, blocks, |v| lin.apply_d_sqrt(v)), dense.d_sqrt.clone()),
        ("Dinv", assemble(n, blocks, |v| lin.apply_d_inv(v)), dense.d_inv.clone()),
        ("A", assemble(n, blocks, |v| prob.hessian_apply(v)), dense.hessian()),
    ];
    for (name, got, want) in cases {
        let e = rel_err_mat(&got, &want);
        assert!(e < 1e-10, "{name}: relative error {e:e}");
    }
    assert!(rel_err(&to_dvec(&prob.rhs()), &dense.rhs()) < 1e-10);
}

#[test]
fn b_and_d_match_recomputation() {
    let prob = fixture(&FixtureSpec::small());
    let lin = prob.linearization();
    let x = lin.reference();
    let background: Vec<f64> = x.block(0).iter().zip(prob.b().block(0)).map(|(r, b)| r + b).collect();
    let (b, d) = compute_b_d(lin, &background, prob.observations()).unwrap();
    for i in 1..x.num_blocks() {
        let f = step_rk4(lin.model(), x.block(i - 1)).unwrap();
        for j in 0..lin.n() {
            assert!((b.block(i)[j] - (f[j] - x.block(i)[j])).abs() < 1e-14);
        }
    }
    let mut k = 0;
    for ((&t, comps), ys) in prob.observations().times().iter().zip(prob.observations().components()).zip(prob.observations().values()) {
        for (&c, y) in comps.iter().zip(ys) {
            assert_eq!(d[k], y - x.block(t)[c]);
            k += 1;
        }
    }
}

#[test]
fn quadratic_cost_matches_dense() {
    let prob = fixture(&FixtureSpec::small());
    let dense = DenseProblem::new(&prob);
    let mut r = rng(3);
    for _ in 0..5 {
        let dx = random_trajectory(&mut r, 5, 5);
        let got = prob.quadratic_cost(&dx);
        let want = dense.cost(&to_dvec(&dx));
        assert!((got - want).abs() <= 1e-10 * want.abs());
    }
}

#[test]
fn every_variant_solves_to_the_dense_solution() {
    let prob = fixture(&FixtureSpec::small());
    let dense = DenseProblem::new(&prob);
    let want = dense.solve();
    for prec in all_preconditioners(&prob, 6, 3, 1) {
        let (dx, trace) = pcg_solve(&prob, &prec, &SolverConfig::tolerance(1e-12, 500)).unwrap();
        assert_eq!(trace.status, SolveStatus::Converged, "{}", prec.name());
        let e = rel_err(&to_dvec(&dx), &want);
        assert!(e < 1e-8, "{}: relative error {e:e}", prec.name());
        // preconditioner invariance
        assert!((trace.final_cost() - dense.cost(&want)).abs() <= 1e-8 * dense.cost(&want));
    }
}

#[test]
fn preconditioners_match_their_definitions() {
    let prob = fixture(&FixtureSpec::small());
    let lin = prob.linearization();
    let dense = DenseProblem::new(&prob);
    for prec in all_preconditioners(&prob, 5, 3, 9) {
        let c = assemble(5, 5, |v| prec.apply_c(lin, v));
        let ct = assemble(5, 5, |v| prec.apply_ct(lin, v));
        let want = dense.c(&prec);
        assert!(rel_err_mat(&c, &want) < 1e-10, "{}", prec.name());
        assert!(rel_err_mat(&ct, &want.transpose()) < 1e-10, "{}", prec.name());
    }
}

#[test]
fn exact_cvt_spectrum_is_identity_plus_rank_p() {
    let prob = fixture(&FixtureSpec::small());
    let dense = DenseProblem::new(&prob);
    let c = dense.c(&Preconditioner::exact_cvt());
    let apr = c.transpose() * dense.hessian() * &c;
    let eig = apr.symmetric_eigen().eigenvalues;
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((min - 1.0).abs() < 1e-8, "smallest eigenvalue {min}");
    let above = eig.iter().filter(|&&e| e > 1.0 + 1e-8).count();
    assert!(above <= prob.observations().count(), "{above} eigenvalues above one");
}

#[test]
fn exact_cvt_converges_in_p_plus_one_iterations() {
    let prob = fixture(&FixtureSpec::small());
    let p = prob.observations().count();
    let (_, trace) = pcg_solve(&prob, &Preconditioner::exact_cvt(), &SolverConfig::tolerance(1e-8, p + 1)).unwrap();
    assert_eq!(trace.status, SolveStatus::Converged);
    assert!(trace.records.len() <= p + 2);
}

#[test]
fn trace_starts_at_zero_increment_cost() {
    let prob = fixture(&FixtureSpec::small());
    for prec in all_preconditioners(&prob, 4, 2, 5) {
        let (_, trace) = pcg_solve(&prob, &prec, &SolverConfig::fixed(10)).unwrap();
        assert_eq!(trace.initial_cost(), prob.quadratic_cost(&Trajectory::zeros(5, 5)));
        assert_eq!(trace.records.len(), 11);
    }
}

#[test]
fn zero_rhs_returns_zero() {
    let prob = fixture(&FixtureSpec::small());
    let lin = prob.linearization().clone();
    let obs = prob.observations().with_values(prob.observations().values().iter().map(|v| vec![0.0; v.len()]).collect()).unwrap();
    let zero = InnerProblem::new(lin.clone(), obs.clone(), lin.zeros(), vec![0.0; obs.count()]).unwrap();
    let (dx, trace) = pcg_solve(&zero, &Preconditioner::exact_cvt(), &SolverConfig::fixed(20)).unwrap();
    assert!(dx.as_slice().iter().all(|&x| x == 0.0));
    assert_eq!(trace.records.len(), 1);
    assert_eq!(trace.status, SolveStatus::Converged);
}

#[test]
fn identity_system_converges_in_one_iteration() {
    use std::sync::Arc;
    use wc4dvar::covariance::{build_correlation, make_covariance, CorrelationSpec};
    use wc4dvar::operators::{CovarianceSet, LinearizationState, ObservationSet};
    let n = 6;
    let id = build_correlation(&CorrelationSpec::identity(n)).unwrap();
    let covs = CovarianceSet::new(make_covariance(&id, 1.0).unwrap(), make_covariance(&id, 1.0).unwrap()).unwrap();
    let model = ModelConfig::new(n, 8.0, 0.025).unwrap();
    let reference = Trajectory::from_blocks(vec![vec![1.0; n]]).unwrap();
    let lin = LinearizationState::new(model, reference, Arc::new(covs)).unwrap();
    let obs = ObservationSet::new(vec![], vec![], vec![], 1.0).unwrap();
    let b = Trajectory::from_blocks(vec![vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0]]).unwrap();
    let prob = InnerProblem::new(lin, obs, b.clone(), vec![]).unwrap();
    let (dx, trace) = pcg_solve(&prob, &Preconditioner::none(), &SolverConfig::tolerance(1e-14, 10)).unwrap();
    assert_eq!(trace.records.len(), 2);
    assert!(trace.final_cost().abs() < 1e-28);
    assert_eq!(dx, b);
}

#[test]
fn full_rank_sketch_reproduces_exact_cvt() {
    let spec = FixtureSpec { n: 4, window: 3, obs: vec![(1, vec![0]), (3, vec![2])], sigma_o: 0.5, seed: 4 };
    let prob = fixture(&spec);
    let lin = prob.linearization();
    let dense = DenseProblem::new(&prob);
    let exact = dense.c(&Preconditioner::exact_cvt());
    // P and W vanish on the last block, so rank ≤ N n = 12 < s = 16.
    let linv = build_lowrank_linv(lin, 12, 4, &mut rng(2)).unwrap();
    let s = build_lowrank_s(lin, 12, 4, &mut rng(2)).unwrap();
    assert!(rel_err_mat(&assemble(4, 4, |v| linv.apply_c(lin, v)), &exact) < 1e-10);
    assert!(rel_err_mat(&assemble(4, 4, |v| s.apply_c(lin, v)), &exact) < 1e-10);
}

#[test]
fn rsvd_matches_dense_svd_of_p() {
    let prob = fixture(&FixtureSpec::small());
    let p = DenseProblem::new(&prob).p();
    let want = p.singular_values();
    let mut want: Vec<f64> = want.iter().copied().collect();
    want.sort_by(|a, b| b.total_cmp(a));
    // a sketch spanning the whole range makes the projection exact
    let f = rsvd(&DenseOperator(p.clone()), 4, 21, &mut rng(0)).unwrap();
    for i in 0..4 {
        assert!((f.sigma[i] - want[i]).abs() <= 1e-8 * want[i]);
    }
    let dense = assemble_dense(&DenseOperator(p.clone()));
    assert_eq!(dense, p);
}

#[test]
fn tlm_taylor_remainder_is_second_order() {
    let model = ModelConfig::new(40, 8.0, 0.025).unwrap();
    let mut r = rng(17);
    let x: Vec<f64> = integrate(&model, &gaussian_vec(&mut r, 40).iter().map(|z| 8.0 + z).collect::<Vec<_>>(), 100)
        .unwrap()
        .pop()
        .unwrap();
    let dx = gaussian_vec(&mut r, 40);
    let fx = step_rk4(&model, &x).unwrap();
    let mdx = step_tlm(&model, &x, &dx).unwrap();
    let remainder = |eps: f64| {
        let xp: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + eps * b).collect();
        let fp = step_rk4(&model, &xp).unwrap();
        fp.iter().zip(&fx).zip(&mdx).map(|((p, f), m)| (p - f - eps * m).powi(2)).sum::<f64>().sqrt()
    };
    for k in 2..6 {
        let eps = 10f64.powi(-k);
        let ratio = remainder(eps) / remainder(eps / 10.0);
        assert!((50.0..=200.0).contains(&ratio), "eps {eps:e}: ratio {ratio}");
    }
}

#[test]
fn nonlinear_cost_gradient_is_minus_rhs() {
    // J(x + εv) - J(x) + ε rhsᵀv = O(ε²): b and d carry the signs of the
    // nonlinear residuals, so -rhs is the gradient of the full cost.
    let prob = fixture(&FixtureSpec::small());
    let lin = prob.linearization();
    let x = lin.reference();
    let background: Vec<f64> = x.block(0).iter().zip(prob.b().block(0)).map(|(r, b)| r + b).collect();
    let j = |t: &Trajectory| nonlinear_cost(lin.model(), &background, prob.observations(), lin.covariances(), t).unwrap();
    let j0 = j(x);
    assert!((j0 - prob.quadratic_cost(&lin.zeros())).abs() <= 1e-12 * j0);
    let v = random_trajectory(&mut rng(8), 5, 5);
    let slope = -prob.rhs().dot(&v);
    let rem = |eps: f64| {
        let mut xp = x.clone();
        xp.axpy(eps, &v);
        (j(&xp) - j0 - eps * slope).abs()
    };
    for k in 2..5 {
        let eps = 10f64.powi(-k);
        let ratio = rem(eps) / rem(eps / 10.0);
        assert!((50.0..=200.0).contains(&ratio), "eps {eps:e}: ratio {ratio}");
    }
}

#[test]
fn adjoint_identities_at_moderate_size() {
    let spec = FixtureSpec { n: 12, window: 6, obs: vec![(2, vec![0, 5]), (6, vec![3, 7, 11])], sigma_o: 0.2, seed: 21 };
    let prob = fixture(&spec);
    let lin = prob.linearization();
    let obs = prob.observations();
    let mut r = rng(6);
    let precs = all_preconditioners(&prob, 8, 4, 3);
    for _ in 0..20 {
        let u = random_trajectory(&mut r, 12, 7);
        let v = random_trajectory(&mut r, 12, 7);
        let pairs = [
            (lin.apply_l(&u), lin.apply_lt(&v)),
            (lin.apply_linv(&u), lin.apply_linvt(&v)),
            (lin.apply_p(&u), lin.apply_pt(&v)),
            (lin.apply_w(&u), lin.apply_wt(&v)),
        ];
        for (au, atv) in &pairs {
            assert!(adjoint_mismatch(au.as_slice(), v.as_slice(), u.as_slice(), atv.as_slice()) < 1e-12);
        }
        for prec in &precs {
            let (cu, ctv) = (prec.apply_c(lin, &u), prec.apply_ct(lin, &v));
            assert!(adjoint_mismatch(cu.as_slice(), v.as_slice(), u.as_slice(), ctv.as_slice()) < 1e-12);
        }
        let w = gaussian_vec(&mut r, obs.count());
        let hu = obs.apply_h(&u);
        let htw = obs.apply_ht(&w, 12, 7);
        assert!(adjoint_mismatch(&hu, &w, u.as_slice(), htw.as_slice()) < 1e-12);
    }
}

#[test]
fn gauss_newton_from_truth_stays_put() {
    let mut cfg = ExperimentConfig::reduced(Case::One).with_variant(Variant::Exact, 0);
    cfg.noise_free = true;
    let twin = generate_twin(&cfg).unwrap();
    let gn = gauss_newton_from(&cfg, &twin, twin.truth.clone(), 1).unwrap();
    assert!(gn.costs[0].abs() < 1e-20);
    assert!(gn.costs[1].abs() < 1e-20);
    let mut diff = gn.analysis.clone();
    diff.axpy(-1.0, &twin.truth);
    assert!(diff.norm() < 1e-12);
}

#[test]
fn gauss_newton_descends() {
    let cfg = ExperimentConfig::reduced(Case::One).with_variant(Variant::Exact, 0);
    let twin = generate_twin(&cfg).unwrap();
    let one = gauss_newton(&cfg, &twin, 1).unwrap();
    assert!(one.costs[1] < one.costs[0]);
    let two = gauss_newton(&cfg, &twin, 2).unwrap();
    assert_eq!(two.costs[1], one.costs[1]);
    assert!(two.costs[2] <= one.costs[1]);
}

#[test]
fn larger_sketch_is_no_worse_on_leading_values() {
    let cfg = ExperimentConfig::reduced(Case::One);
    let twin = generate_twin(&cfg).unwrap();
    let t = dump_singular_values(&cfg, &twin, Which::P, &[30, 90], 4, true).unwrap();
    let dense = t.dense.unwrap();
    let err = |s: &[f64]| (0..30).map(|i| (s[i] - dense[i]).abs() / dense[i]).fold(0.0, f64::max);
    let (e30, e90) = (err(&t.approximations[0].1), err(&t.approximations[1].1));
    assert!(e90 <= e30 + 1e-12, "k=90 error {e90:e} vs k=30 error {e30:e}");
}

#[test]
fn background_error_statistics_match_b() {
    use wc4dvar::covariance::sample_gaussian;
    let cfg = ExperimentConfig::reduced(Case::One);
    let b = cfg.covariances().unwrap().background;
    let mut r = rng(99);
    let samples = 40_000;
    let n = cfg.n;
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for _ in 0..samples {
        let z = DVector::from_vec(sample_gaussian(&b, &mut r));
        acc += &z * z.transpose();
    }
    acc /= samples as f64;
    let var = b.sigma() * b.sigma();
    let worst = (acc - b.matrix()).abs().max();
    assert!(worst < 0.05 * var, "max deviation {worst:e} vs 5% of {var:e}");
}

#[test]
fn truth_climatology_is_plausible() {
    let model = ModelConfig::new(40, 8.0, 0.025).unwrap();
    let x0: Vec<f64> = (0..40).map(|i| if i == 0 { 8.01 } else { 8.0 }).collect();
    let traj = integrate(&model, &x0, 20_000).unwrap();
    let mean = traj[2000..].iter().flat_map(|x| x.iter()).sum::<f64>() / (18_001.0 * 40.0);
    assert!((1.5..=3.5).contains(&mean), "time mean {mean}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tlm_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let model = ModelConfig::new(9, 8.0, 0.025).unwrap();
        let mut r = rng(seed);
        let x: Vec<f64> = gaussian_vec(&mut r, 9).iter().map(|z| 8.0 + 3.0 * z).collect();
        let (u, v) = (gaussian_vec(&mut r, 9), gaussian_vec(&mut r, 9));
        let comb: Vec<f64> = u.iter().zip(&v).map(|(p, q)| a * p + b * q).collect();
        let lhs = step_tlm(&model, &x, &comb).unwrap();
        let mu = step_tlm(&model, &x, &u).unwrap();
        let mv = step_tlm(&model, &x, &v).unwrap();
        for i in 0..9 {
            let rhs = a * mu[i] + b * mv[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-13 * (1.0 + rhs.abs() + (a * mu[i]).abs() + (b * mv[i]).abs()));
        }
    }

    #[test]
    fn tendency_commutes_with_rotation(seed in any::<u64>(), n in 4usize..16, shift in 0usize..16) {
        let model = ModelConfig::new(n, 8.0, 0.025).unwrap();
        let x = gaussian_vec(&mut rng(seed), n);
        let shift = shift % n;
        let mut rotated = x.clone();
        rotated.rotate_right(shift);
        let mut expected = tendency(&model, &x).unwrap();
        expected.rotate_right(shift);
        prop_assert_eq!(tendency(&model, &rotated).unwrap(), expected);
    }

    #[test]
    fn model_adjoint_identity(seed in any::<u64>(), n in 4usize..30) {
        let model = ModelConfig::new(n, 8.0, 0.025).unwrap();
        let mut r = rng(seed);
        let x: Vec<f64> = gaussian_vec(&mut r, n).iter().map(|z| 8.0 + 3.0 * z).collect();
        let (u, v) = (gaussian_vec(&mut r, n), gaussian_vec(&mut r, n));
        let mu = step_tlm(&model, &x, &u).unwrap();
        let mtv = step_adj(&model, &x, &v).unwrap();
        prop_assert!(adjoint_mismatch(&mu, &v, &u, &mtv) < 1e-12);
    }

    #[test]
    fn linv_inverts_l(seed in any::<u64>()) {
        let prob = fixture(&FixtureSpec { seed, ..FixtureSpec::small() });
        let lin = prob.linearization();
        let v = random_trajectory(&mut rng(seed ^ 1), 5, 5);
        let back = lin.apply_l(&lin.apply_linv(&v));
        prop_assert!(rel_err(&to_dvec(&back), &to_dvec(&v)) < 1e-12);
    }
}
