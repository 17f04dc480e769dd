mod common;

use common::*;
use nodewise_loreg::lasso::*;
use nodewise_loreg::{Error, Matrix};
use proptest::prelude::*;

fn instance(n: usize, p: usize, seed: u64) -> (Vec<f64>, Matrix) {
    let mut r = rng(seed);
    let z = normalize_columns(&gaussian_matrix(n, p, &mut r));
    let y: Vec<f64> = (0..n)
        .map(|i| 1.0 * z[(i, 0)] - 0.7 * z[(i, 1)] + 0.3 * z[(i, p - 1)] + normal(&mut r))
        .collect();
    (y, z)
}

fn corr(y: &[f64], z: &Matrix) -> Vec<f64> {
    let n = z.rows() as f64;
    (0..z.cols()).map(|k| (0..z.rows()).map(|i| z[(i, k)] * y[i]).sum::<f64>() / n).collect()
}

#[test]
fn penalty_above_the_largest_correlation_gives_zero() {
    let (y, z) = instance(50, 6, 1);
    let top = corr(&y, &z).iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let fit = lasso_cd(&y, &z, &LassoConfig::new(top)).unwrap();
    assert!(fit.coef.iter().all(|c| *c == 0.0));
    assert!(fit.converged);
}

#[test]
fn orthogonal_design_reduces_to_soft_thresholding() {
    let mut r = rng(2);
    let z = orthogonal_design(40, 6, &mut r);
    let y: Vec<f64> = (0..40).map(|_| normal(&mut r)).collect();
    let c = corr(&y, &z);
    for lambda in [0.0, 0.05, 0.2] {
        let fit = lasso_cd(&y, &z, &LassoConfig::new(lambda)).unwrap();
        for k in 0..6 {
            assert!((fit.coef[k] - soft_threshold(c[k], lambda)).abs() <= 1e-10, "lambda {lambda}, k {k}");
        }
    }
}

#[test]
fn soft_threshold_values() {
    assert_eq!(soft_threshold(3.0, 1.0), 2.0);
    assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    assert_eq!(soft_threshold(0.5, 1.0), 0.0);
}

#[test]
fn sigma2_examples() {
    let y = [1.0, -2.0, 2.0, 1.0];
    let z = Matrix::from_rows(&[vec![1.0], vec![0.0], vec![1.0], vec![-1.0]]).unwrap();
    assert_eq!(lasso_sigma2(&y, &z, &[0.0], 0.3).unwrap(), 10.0 / 4.0);
    // residuals (0.5, -2, 1.5, 1.5) give rss 8.75; penalty 0.2 * 0.5
    let s = lasso_sigma2(&y, &z, &[0.5], 0.2).unwrap();
    assert!((s - (8.75 / 4.0 + 0.1)).abs() <= 1e-15);
    let exact = [1.0, 0.0, 1.0, -1.0];
    assert!(matches!(lasso_sigma2(&exact, &z, &[1.0], 0.0), Err(Error::NonPositiveVariance(_))));
}

#[test]
fn rejects_bad_configuration_and_design() {
    let (y, z) = instance(30, 4, 3);
    assert!(matches!(lasso_cd(&y, &z, &LassoConfig::new(-0.1)), Err(Error::InvalidConfig(_))));
    assert!(matches!(lasso_cd(&y, &z.scale(3.0), &LassoConfig::new(0.1)), Err(Error::NotNormalized { .. })));
    let cfg = LassoConfig { tol: 0.0, ..LassoConfig::new(0.1) };
    assert!(matches!(lasso_cd(&y, &z, &cfg), Err(Error::InvalidConfig(_))));
}

#[test]
fn sweep_cap_is_reported_not_fatal() {
    let (y, z) = instance(30, 10, 4);
    let cfg = LassoConfig { max_sweeps: 1, tol: 1e-14, ..LassoConfig::new(0.01) };
    let fit = lasso_cd(&y, &z, &cfg).unwrap();
    assert!(!fit.converged);
    assert_eq!(fit.sweeps, 1);
}

#[test]
fn default_grid_spans_the_stated_range() {
    let g = default_lambda_grid();
    assert_eq!(g.len(), 20);
    assert!((g[0] - 2.0).abs() <= 1e-12 && (g[19] - 0.02).abs() <= 1e-12);
    let ratio = g[1] / g[0];
    assert!(g.windows(2).all(|w| (w[1] / w[0] - ratio).abs() <= 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solutions_satisfy_subgradient_conditions(seed in any::<u64>(), p in 2usize..15, lambda in 0.001f64..0.5) {
        let (y, z) = instance(40, p, seed);
        let cfg = LassoConfig::new(lambda);
        let fit = lasso_cd(&y, &z, &cfg).unwrap();
        prop_assert!(fit.converged);
        prop_assert!(lasso_kkt_violation(&y, &z, &fit.coef, lambda) <= 10.0 * cfg.tol);
    }

    #[test]
    fn objective_never_increases_across_sweeps(seed in any::<u64>(), lambda in 0.001f64..0.3) {
        let (y, z) = instance(30, 8, seed);
        let mut prev = f64::INFINITY;
        for sweeps in 1..12 {
            let cfg = LassoConfig { max_sweeps: sweeps, tol: 1e-300, ..LassoConfig::new(lambda) };
            let obj = lasso_objective(&y, &z, &lasso_cd(&y, &z, &cfg).unwrap().coef, lambda);
            prop_assert!(obj <= prev + 1e-12);
            prev = obj;
        }
    }

    #[test]
    fn l1_norm_shrinks_with_the_penalty(seed in any::<u64>(), a in 0.005f64..0.5, b in 0.005f64..0.5) {
        let (y, z) = instance(40, 10, seed);
        let (hi, lo) = if a > b { (a, b) } else { (b, a) };
        let norm = |l: f64| lasso_cd(&y, &z, &LassoConfig::new(l)).unwrap().coef.iter().map(|c| c.abs()).sum::<f64>();
        prop_assert!(norm(hi) <= norm(lo) + 10.0 * DEFAULT_TOL);
    }
}
