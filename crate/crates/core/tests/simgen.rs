mod common;

use common::*;
use nodewise_loreg::linalg::{cholesky, sample_covariance, spd_inverse};
use nodewise_loreg::rng::{stream, Purpose};
use nodewise_loreg::simgen::*;
use nodewise_loreg::{Error, Matrix};
use proptest::prelude::*;

/// `λ_min(Ω) ≥ bound` iff `Ω − bound·I` admits a Cholesky factor.
fn min_eigen_at_least(omega: &Matrix, bound: f64) -> bool {
    let mut shifted = omega.clone();
    for i in 0..omega.rows() {
        shifted[(i, i)] -= bound;
    }
    cholesky(&shifted).is_ok()
}

fn adjacency(omega: &Matrix) -> Matrix {
    Matrix::from_fn(omega.rows(), omega.cols(), |i, j| f64::from(i != j && omega[(i, j)] != 0.0))
}

#[test]
fn band_examples() {
    let four = Matrix::from_rows(&[
        vec![1.0, 0.5, 0.3, 0.0],
        vec![0.5, 1.0, 0.5, 0.3],
        vec![0.3, 0.5, 1.0, 0.5],
        vec![0.0, 0.3, 0.5, 1.0],
    ])
    .unwrap();
    assert_eq!(gen_band(4), four);
    let three = Matrix::from_rows(&[vec![1.0, 0.5, 0.3], vec![0.5, 1.0, 0.5], vec![0.3, 0.5, 1.0]]).unwrap();
    assert_eq!(gen_band(3), three);
    assert_eq!(edge_count(&three), 3);
    assert_eq!(edge_count(&gen_band(200)), 397);
    for p in [3, 4, 10, 50, 200] {
        assert!(min_eigen_at_least(&gen_band(p), 1e-6), "p={p}");
    }
}

#[test]
fn random_graph_examples() {
    assert_eq!(precision_from_adjacency(&Matrix::zeros(4, 4)).unwrap(), Matrix::identity(4).scale(0.1));
    let mut total = 0;
    for seed in 0..400 {
        let omega = gen_random(5, &mut rng(seed)).unwrap();
        assert!(min_eigen_at_least(&omega, 0.1 - 1e-8));
        let a = adjacency(&omega);
        let shift = omega[(0, 0)];
        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j { shift } else { a[(i, j)] };
                assert_eq!(omega[(i, j)], expected);
            }
        }
        assert!(shift >= 0.1);
        total += edge_count(&omega);
    }
    // 10 pairs at probability 4/5
    let mean = total as f64 / 400.0;
    let se = (10.0 * 0.8 * 0.2 / 400.0_f64).sqrt();
    assert!((mean - 8.0).abs() <= 4.0 * se, "mean edges {mean}");
}

#[test]
fn hub_examples() {
    assert_eq!(edge_count(&gen_hub(200, 10).unwrap()), 180);
    let omega = gen_hub(20, 10).unwrap();
    let a = adjacency(&omega);
    for hub in [0, 10] {
        assert_eq!((0..20).filter(|&k| a[(hub, k)] != 0.0).count(), 9);
    }
    assert_eq!(edge_count(&omega), 18);
    assert!(min_eigen_at_least(&omega, 0.1 - 1e-8));
    assert_eq!(gen_hub(25, 10).unwrap_err(), Error::IndivisibleGroups { p: 25, group_size: 10 });
}

#[test]
fn cluster_examples() {
    let mut total = 0;
    for seed in 0..200 {
        let omega = gen_cluster(100, 10, &mut rng(seed)).unwrap();
        for i in 0..100 {
            for j in 0..100 {
                if i / 10 != j / 10 {
                    assert_eq!(omega[(i, j)], 0.0);
                }
            }
        }
        total += edge_count(&omega);
        if seed < 5 {
            assert!(min_eigen_at_least(&omega, 0.1 - 1e-8));
        }
    }
    // 450 within-group pairs at probability 0.6
    let mean = total as f64 / 200.0;
    let se = (450.0 * 0.6 * 0.4 / 200.0_f64).sqrt();
    assert!((mean - 270.0).abs() <= 3.0 * se, "mean edges {mean}");
    assert!(matches!(gen_cluster(15, 10, &mut rng(0)), Err(Error::IndivisibleGroups { .. })));
}

#[test]
fn graph_spec_validation_and_json() {
    assert!(GraphSpec::new(GraphFamily::Band, 3, 0).build().is_err());
    assert!(GraphSpec::new(GraphFamily::Hub, 25, 0).build().is_err());
    let bad = GraphSpec { edge_prob: Some(1.5), ..GraphSpec::new(GraphFamily::Random, 10, 0) };
    assert!(bad.validate().is_err());
    let spec: GraphSpec = serde_json::from_str(r#"{"family": "cluster", "p": 40, "seed": 9}"#).unwrap();
    assert_eq!(spec, GraphSpec::new(GraphFamily::Cluster, 40, 9));
    assert_eq!(spec.edge_prob(), 0.6);
    assert!(serde_json::from_str::<GraphSpec>(r#"{"family": "ring", "p": 40, "seed": 9}"#).is_err());
    assert!(serde_json::from_str::<GraphSpec>(r#"{"family": "band", "p": 40, "seed": 9, "q": 1}"#).is_err());
    assert_eq!(spec.build().unwrap(), spec.build().unwrap());
}

#[test]
fn identity_samplers() {
    let id = Matrix::identity(4);
    let g = sample_gaussian(&id, 10_000, &mut rng(1)).unwrap();
    let u = sample_subgaussian(&id, 10_000, &mut rng(2)).unwrap();
    let bound = 3f64.sqrt();
    assert!(u.data().iter().all(|v| v.abs() <= bound));
    for j in 0..4 {
        for m in [&g, &u] {
            let var = (0..10_000).map(|i| m[(i, j)].powi(2)).sum::<f64>() / 10_000.0;
            assert!((0.9..=1.1).contains(&var), "column {j} variance {var}");
        }
    }
}

#[test]
fn samplers_reach_the_population_covariance() {
    let omega = gen_band(10);
    let sigma = gauss_jordan_inverse(&omega);
    for dist in [Distribution::Gaussian, Distribution::SubGaussian] {
        let x = Sampler::new(&omega, dist).unwrap().draw(200_000, &mut stream(3, 0, Purpose::Data));
        let err = max_abs_diff(&sample_covariance(&x), &sigma);
        assert!(err <= 0.05, "{dist:?}: {err}");
    }
}

#[test]
fn sampler_mixing_and_kurtosis() {
    let omega = GraphSpec::new(GraphFamily::Random, 12, 4).build().unwrap();
    let sigma = spd_inverse(&omega).unwrap();
    for (dist, kurt) in [(Distribution::Gaussian, 3.0), (Distribution::SubGaussian, 1.8)] {
        let s = Sampler::new(&omega, dist).unwrap();
        let m = s.mixing();
        assert!(max_abs_diff(&naive_mul(&m, &naive_t(&m)), &sigma) <= 1e-10);
        assert_eq!((s.p(), s.distribution(), s.base_kurtosis()), (12, dist, kurt));
    }
    let sym = Sampler::new(&omega, Distribution::SubGaussian).unwrap().mixing();
    assert!(sym.is_symmetric(1e-12));
    assert!(sample_gaussian(&Matrix::from_diag(&[1.0, -1.0]), 3, &mut rng(0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_precisions_are_symmetric_and_well_conditioned(family in 0usize..4, groups in 1usize..5, seed in any::<u64>()) {
        let family = [GraphFamily::Band, GraphFamily::Random, GraphFamily::Hub, GraphFamily::Cluster][family];
        let omega = GraphSpec::new(family, 10 * groups, seed).build().unwrap();
        prop_assert!(omega.is_symmetric(0.0));
        let bound = if family == GraphFamily::Band { 1e-6 } else { 0.1 - 1e-8 };
        prop_assert!(min_eigen_at_least(&omega, bound));
    }

    #[test]
    fn draws_are_determined_by_their_stream(seed in any::<u64>(), rep in 0u64..50) {
        let omega = gen_band(6);
        let a = sample_subgaussian(&omega, 20, &mut stream(seed, rep, Purpose::Data)).unwrap();
        let b = sample_subgaussian(&omega, 20, &mut stream(seed, rep, Purpose::Data)).unwrap();
        let c = sample_subgaussian(&omega, 20, &mut stream(seed, rep + 1, Purpose::Data)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_ne!(&a, &c);
    }
}
