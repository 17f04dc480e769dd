use std::path::PathBuf;

use nodewise_loreg::inference::{build_inference, desparsify, threshold, Source, VarianceKind};
use nodewise_loreg::io::read_matrix_file;
use nodewise_loreg::linalg::sample_covariance;
use nodewise_loreg::nodewise::PrecisionEstimate;
use nodewise_loreg::simulation::Variant;
use nodewise_loreg::{Error, Matrix, Result};
use serde_json::json;

use crate::estimate::{load_data, EstimateRecord};
use crate::output::{read_json, RunDir};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SourceArg {
    OmegaS,
    OmegaUs,
    THat,
}

impl From<SourceArg> for Source {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::OmegaS => Source::OmegaS,
            SourceArg::OmegaUs => Source::OmegaUS,
            SourceArg::THat => Source::That,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum VarianceArg {
    /// Closed forms that assume Gaussian data.
    Gaussian,
    /// Sample fourth-moment estimates.
    General,
}

#[derive(clap::Args)]
pub struct Args {
    /// Directory written by `loreg estimate`.
    #[arg(long)]
    estimate: PathBuf,
    /// The data the estimate was computed from.
    #[arg(long)]
    data: PathBuf,
    /// Estimate whose entries are tested: `omega-us` or `t-hat`.
    #[arg(long, value_enum, default_value = "t-hat")]
    point: SourceArg,
    #[arg(long, value_enum, default_value = "gaussian")]
    variance: VarianceArg,
    /// Intervals have level 1 - alpha.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Benjamini–Hochberg level of the thresholded matrix.
    #[arg(long, default_value_t = 0.05)]
    fdr: f64,
    /// Matrix whose values the thresholded output keeps.
    #[arg(long, value_enum, default_value = "omega-s")]
    value: SourceArg,
    /// Matrix whose lower-triangular support is tested.
    #[arg(long, value_enum, default_value = "omega-s")]
    support: SourceArg,
    #[arg(long)]
    out: PathBuf,
}

fn load_estimate(args: &Args) -> Result<(EstimateRecord, PrecisionEstimate, Matrix)> {
    let record: EstimateRecord = read_json(&args.estimate.join("columns.json"))?;
    let x = load_data(&args.data, record.header, record.centered)?;
    if x.cols() != record.p || x.rows() != record.n {
        return Err(Error::DimensionMismatch(format!(
            "data is {} x {}, the estimate was fitted to {} x {}",
            x.rows(),
            x.cols(),
            record.n,
            record.p
        )));
    }
    let sigma_hat = sample_covariance(&x);
    for (j, g) in record.gamma_diag.iter().enumerate() {
        if (sigma_hat[(j, j)] - g).abs() > 1e-9 * g.abs().max(1e-300) {
            return Err(Error::DimensionMismatch(format!(
                "column {j} of the data does not match the estimate (variance {} vs {g})",
                sigma_hat[(j, j)]
            )));
        }
    }
    let omega_us = read_matrix_file(&args.estimate.join("omega_us.csv"), false)?;
    let omega_s = read_matrix_file(&args.estimate.join("omega_s.csv"), false)?;
    for m in [&omega_us, &omega_s] {
        if m.rows() != record.p || m.cols() != record.p {
            return Err(Error::DimensionMismatch("estimate matrices do not match columns.json".into()));
        }
    }
    let est = PrecisionEstimate {
        omega_us,
        omega_s,
        columns: record.columns.clone(),
        method: record.method,
        gamma_diag: record.gamma_diag.clone(),
        sigma_hat,
    };
    Ok((record, est, x))
}

pub fn run(args: Args) -> Result<()> {
    let point = Source::from(args.point);
    if point == Source::OmegaS {
        return Err(Error::InvalidConfig("--point must be omega-us or t-hat".into()));
    }
    if !(args.fdr > 0.0 && args.fdr < 1.0) {
        return Err(Error::InvalidConfig(format!("--fdr must lie in (0, 1), got {}", args.fdr)));
    }
    let (record, est, x) = load_estimate(&args)?;
    let (value, support) = (Source::from(args.value), Source::from(args.support));
    Variant::thresholded(record.method, value, point, support).validate()?;

    let kind = VarianceKind::for_source(point, args.variance == VarianceArg::Gaussian);
    let res = build_inference(&est, &x, kind, point, args.alpha)?;
    let t_hat = match &res.t_hat {
        Some(t) => Some(t.clone()),
        None if value == Source::That || support == Source::That => Some(desparsify(&est.omega_us, &est.sigma_hat)?),
        None => None,
    };
    let pick = |s: Source| match s {
        Source::OmegaS => &est.omega_s,
        Source::OmegaUS => &est.omega_us,
        Source::That => t_hat.as_ref().expect("computed when requested"),
    };
    let thr = threshold(pick(value), &res, pick(support), args.fdr)?;

    let mut dir = RunDir::create(&args.out, "infer")?;
    dir.record_input("data", &args.data)?;
    dir.record_input("estimate", &args.estimate.join("columns.json"))?;
    if let Some(t) = &t_hat {
        dir.write_matrix("t_hat.csv", t)?;
    }
    dir.write_matrix("point.csv", &res.point)?;
    dir.write_masked("variances.csv", &res.var_matrix, &res.defined)?;
    dir.write_masked("zscores.csv", &res.z_scores, &res.defined)?;
    dir.write_masked("ci_low.csv", &res.ci_low, &res.defined)?;
    dir.write_masked("ci_high.csv", &res.ci_high, &res.defined)?;
    dir.write_matrix("thresholded.csv", &thr.matrix)?;
    let summary = json!({
        "method": record.method,
        "point": point,
        "variance_kind": kind,
        "alpha": args.alpha,
        "n": res.n,
        "p": res.p(),
        "undefined_entries": res.undefined_count(),
        "floored_entries": res.floored_count(),
        "threshold": {
            "value": value,
            "z": point,
            "support": support,
            "fdr_level": args.fdr,
            "tested": thr.tested,
            "undefined": thr.undefined,
            "rejected": thr.rejected,
        },
    });
    dir.write_json("inference.json", &summary)?;
    dir.set_details(json!({ "variance_kind": kind, "rejected": thr.rejected.len() }));
    dir.finish()?;
    Ok(())
}
