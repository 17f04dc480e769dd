mod common;

use std::sync::Mutex;

use common::*;
use nodewise_loreg::inference::{var_undesp_gaussian, Source};
use nodewise_loreg::metrics::EntrySet;
use nodewise_loreg::nodewise::Method;
use nodewise_loreg::simgen::{Distribution, GraphFamily, GraphSpec};
use nodewise_loreg::simulation::*;
use nodewise_loreg::{Error, IndexSet};
use rand::Rng as _;

fn small_spec() -> SimulationSpec {
    SimulationSpec::from_json(
        r#"{
            "schema_version": 1,
            "graph": {"family": "band", "p": 12, "seed": 3},
            "distribution": "gaussian",
            "n": 80,
            "replications": 5,
            "seed": 11
        }"#,
    )
    .unwrap()
}

fn invalid(text: &str) -> String {
    match SimulationSpec::from_json(text) {
        Err(Error::InvalidConfig(msg)) => msg,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn spec_defaults_and_round_trip() {
    let spec = small_spec();
    assert_eq!(spec.methods, Variant::standard_set());
    assert_eq!((spec.fdr_level, spec.alpha, spec.normality, spec.parallelism), (0.05, 0.05, true, None));
    assert_eq!(SimulationSpec::from_json(&spec.to_json()).unwrap(), spec);
    let pinned = spec.clone().with_parallelism(3);
    assert_eq!(pinned.workers(), 3);
    assert_eq!(SimulationSpec::from_json(&pinned.to_json()).unwrap(), pinned);
    assert_eq!(spec.run_methods(), vec![Method::Loreg, Method::Lasso]);
}

#[test]
fn spec_validation_errors() {
    let base = small_spec().to_json();
    let edit = |from: &str, to: &str| {
        assert!(base.contains(from), "{from}");
        base.replacen(from, to, 1)
    };
    assert!(invalid(&edit("\"schema_version\": 1", "\"schema_version\": 2")).contains("schema_version"));
    assert!(invalid(&edit("\"n\": 80", "\"n\": 2")).contains("n must"));
    assert!(invalid(&edit("\"replications\": 5", "\"replications\": 0")).contains("replications"));
    assert!(invalid(&edit("\"fdr_level\": 0.05", "\"fdr_level\": 0.0")).contains("fdr_level"));
    assert!(invalid(&edit("\"seed\": 11", "\"seed\": 11, \"parallelism\": 0")).contains("parallelism"));
    let msg = invalid(&edit("\"seed\": 11", "\"seed\": 11, \"sead\": 1"));
    assert!(msg.starts_with("spec line") && msg.contains("sead"), "{msg}");
    let msg = invalid(&edit("\"p\": 12", "\"p\": 3"));
    assert!(msg.contains("p >= 4"), "{msg}");
}

#[test]
fn variant_rules() {
    use Method::{Lasso, Loreg};
    use Source::{OmegaS, OmegaUS, That};
    let set = Variant::standard_set();
    assert_eq!(set.len(), 11);
    let labels: std::collections::BTreeSet<String> = set.iter().map(Variant::label).collect();
    assert_eq!(labels.len(), 11);
    assert_eq!(set[1].label(), "loreg_omega_s__z_omega_us__s_omega_s");
    assert!(set.iter().all(|v| v.validate().is_ok()));
    assert!(Variant::thresholded(Loreg, OmegaUS, That, OmegaS).validate().is_err());
    assert!(Variant::thresholded(Loreg, OmegaS, OmegaS, OmegaS).validate().is_err());
    assert!(Variant::thresholded(Lasso, OmegaS, OmegaUS, OmegaS).validate().is_err());
    assert!(Variant::plain(Lasso, OmegaUS).validate().is_ok());
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let spec = small_spec();
    let one = run_simulation(&spec.clone().with_parallelism(1), &|_| Ok(())).unwrap();
    let three = run_simulation(&spec.with_parallelism(3), &|_| Ok(())).unwrap();
    assert_eq!(
        serde_json::to_string(&one.report).unwrap(),
        serde_json::to_string(&three.report).unwrap()
    );
}

#[test]
fn report_structure() {
    let spec = small_spec();
    let seen = Mutex::new(Vec::new());
    let out = run_simulation(&spec, &|a| {
        assert_eq!(a.variants.len(), 11);
        assert_eq!(a.estimates.len(), 2);
        assert_eq!((a.x.rows(), a.x.cols()), (80, 12));
        seen.lock().unwrap().push(a.index);
        Ok(())
    })
    .unwrap();
    let mut seen = seen.into_inner().unwrap();
    seen.sort_unstable();
    assert_eq!(seen, vec![0, 1, 2, 3, 4]);

    let r = &out.report;
    assert_eq!((r.p, r.n, r.replications, r.edge_count), (12, 80, 5, 21));
    for v in &r.variants {
        assert_eq!(v.losses.len(), 5);
        assert_eq!(v.support.len(), 5);
    }
    for e in [NormalityEstimator::LoregTHat, NormalityEstimator::LassoTHat] {
        for set in [EntrySet::EstimatedSupport, EntrySet::TrueSupport, EntrySet::TrueNonSupport] {
            assert!(r.normality_block(e, set).is_some(), "{e:?} {set:?}");
        }
    }
    assert!(r.normality_block(NormalityEstimator::LoregOmegaUs, EntrySet::EstimatedSupport).is_some());
    assert!(r.normality_block(NormalityEstimator::LoregOmegaUs, EntrySet::TrueSupport).is_none());
    // the diagonal is always estimated
    assert!(r.estimated_support_size.unwrap() >= 12);
    assert_eq!(out.omega, GraphSpec::new(GraphFamily::Band, 12, 3).build().unwrap());

    let failing = run_simulation(&spec, &|a| if a.index == 2 { Err(Error::Io("disk full".into())) } else { Ok(()) });
    assert!(failing.is_err());

    let mut quiet = small_spec();
    quiet.normality = false;
    quiet.methods = vec![Variant::plain(Method::Loreg, Source::OmegaS)];
    let out = run_simulation(&quiet, &|a| {
        assert_eq!(a.estimates.len(), 1);
        Ok(())
    })
    .unwrap();
    assert!(out.report.normality.is_empty());
    assert_eq!(out.report.variants.len(), 1);
}

#[test]
fn population_variances_match_gaussian_closed_forms() {
    let pop = Population::new(&GraphSpec::new(GraphFamily::Hub, 20, 0), Distribution::Gaussian).unwrap();
    let sd = pop.desparsified_sd();
    let w = &pop.omega;
    for i in 0..20 {
        for j in 0..20 {
            let closed = w[(i, i)] * w[(j, j)] + w[(i, j)].powi(2);
            assert!((sd[(i, j)].powi(2) - closed).abs() <= 1e-9 * closed);
        }
    }
    for (i, j) in [(0, 3), (3, 0), (5, 5), (12, 10)] {
        let mut idx: Vec<usize> = (0..20).filter(|&k| w[(k, j)] != 0.0).collect();
        idx.push(i);
        let closed = var_undesp_gaussian(&pop.sigma, &IndexSet::from_unsorted(idx), i, j).unwrap();
        assert!((pop.undesparsified_sd(i, j).unwrap().powi(2) - closed).abs() <= 1e-9 * closed);
    }
}

#[test]
fn population_entry_variance_matches_monte_carlo() {
    let mut r = rng(5);
    let mix = random_spd(4, 0.2, &mut r);
    let vi = [0.5, -1.0, 0.2, 0.0];
    let vj = [0.1, 0.3, 0.0, -0.7];
    let proj = |v: &[f64], u: &[f64]| -> f64 {
        (0..4).map(|row| v[row] * (0..4).map(|k| mix[(row, k)] * u[k]).sum::<f64>()).sum()
    };
    let draws = 400_000;
    for (kurt, uniform) in [(3.0, false), (1.8, true)] {
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let u: Vec<f64> = (0..4)
                .map(|_| if uniform { r.random_range(-3f64.sqrt()..3f64.sqrt()) } else { normal(&mut r) })
                .collect();
            let v = proj(&vi, &u) * proj(&vj, &u);
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 / draws as f64;
        let var = s2 / draws as f64 - mean * mean;
        let exact = population_entry_variance(&mix, kurt, &vi, &vj);
        assert!((var - exact).abs() <= 0.03 * exact, "kurtosis {kurt}: {var} vs {exact}");
    }
}
