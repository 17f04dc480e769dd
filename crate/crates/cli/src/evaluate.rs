use std::path::{Path, PathBuf};

use nodewise_loreg::inference::norm_quantile;
use nodewise_loreg::io::{read_masked_matrix_file, read_matrix_file};
use nodewise_loreg::metrics::{norm_losses, normality_report, support_metrics, EntryAccumulator, LossReport, SupportReport};
use nodewise_loreg::nodewise::Method;
use nodewise_loreg::simulation::{normality_entry_sets, NormalityBlock, NormalityEstimator, SimulationSpec, VariantReport};
use nodewise_loreg::{Error, Matrix, Result};
use serde::Serialize;
use serde_json::json;

use crate::output::{read_text, RunDir};
use crate::simulate::rep_dir;

#[derive(clap::Args)]
pub struct Args {
    /// True precision matrix CSV.
    #[arg(long, requires = "estimate", conflicts_with = "run")]
    truth: Option<PathBuf>,
    /// Estimated matrix CSV; repeatable.
    #[arg(long, requires = "truth")]
    estimate: Vec<PathBuf>,
    /// Matrix CSVs have a header line.
    #[arg(long)]
    header: bool,
    /// A `simulate` run directory written with `--save-replications`; its report is rebuilt.
    #[arg(long, required_unless_present = "truth")]
    run: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct FileLosses<'a> {
    file: String,
    #[serde(flatten)]
    losses: &'a LossReport,
}

#[derive(Serialize)]
struct FileSupport<'a> {
    file: String,
    #[serde(flatten)]
    support: &'a SupportReport,
}

#[derive(Serialize)]
struct RebuiltReport {
    variants: Vec<VariantReport>,
    normality: Vec<NormalityBlock>,
}

pub fn run(args: Args) -> Result<()> {
    match &args.run {
        Some(run) => evaluate_run(run, &args.out),
        None => evaluate_files(&args),
    }
}

fn evaluate_files(args: &Args) -> Result<()> {
    let truth_path = args.truth.as_ref().expect("clap requires --truth without --run");
    let truth = read_matrix_file(truth_path, args.header)?;
    let mut dir = RunDir::create(&args.out, "evaluate")?;
    dir.record_input("truth", truth_path)?;
    let mut results = Vec::new();
    for path in &args.estimate {
        let est = read_matrix_file(path, args.header)?;
        results.push((path.display().to_string(), norm_losses(&est, &truth)?, support_metrics(&est, &truth)?));
        dir.record_input("estimate", path)?;
    }
    let losses: Vec<FileLosses> = results.iter().map(|(f, l, _)| FileLosses { file: f.clone(), losses: l }).collect();
    let support: Vec<FileSupport> = results.iter().map(|(f, _, s)| FileSupport { file: f.clone(), support: s }).collect();
    dir.write_json("losses.json", &losses)?;
    dir.write_json("support.json", &support)?;
    dir.set_details(json!({ "estimates": results.len(), "p": truth.rows() }));
    dir.finish()?;
    Ok(())
}

fn read_rep(run: &Path, rep: usize, rel: &str) -> Result<Matrix> {
    read_matrix_file(&run.join(rep_dir(rep)).join(rel), false)
}

fn evaluate_run(run: &Path, out: &Path) -> Result<()> {
    let spec = SimulationSpec::from_json(&read_text(&run.join("spec.json"))?)?;
    let omega = read_matrix_file(&run.join("omega.csv"), false)?;
    if !run.join(rep_dir(0)).is_dir() {
        return Err(Error::InvalidConfig(format!(
            "{} has no saved replications; rerun simulate with --save-replications",
            run.display()
        )));
    }
    let reps = spec.replications;
    let p = omega.rows();

    let mut variants = Vec::new();
    for v in &spec.methods {
        let mut losses = Vec::with_capacity(reps);
        let mut support = Vec::with_capacity(reps);
        for r in 0..reps {
            let m = read_rep(run, r, &format!("variants/{}.csv", v.label()))?;
            losses.push(norm_losses(&m, &omega)?);
            support.push(support_metrics(&m, &omega)?);
        }
        variants.push(VariantReport::from_replications(*v, losses, support));
    }

    let estimators: Vec<NormalityEstimator> = NormalityEstimator::all()
        .into_iter()
        .filter(|e| run.join(rep_dir(0)).join("inference").join(e.label()).is_dir())
        .collect();
    let mut normality = Vec::new();
    if !estimators.is_empty() {
        let s_hat = if spec.run_methods().contains(&Method::Loreg) {
            let mut mask = vec![true; p * p];
            for r in 0..reps {
                let us = read_rep(run, r, "loreg/omega_us.csv")?;
                mask.iter_mut().zip(us.data()).for_each(|(m, v)| *m &= *v != 0.0);
            }
            Some((0..p * p).filter(|&k| mask[k]).map(|k| (k / p, k % p)).collect::<Vec<_>>())
        } else {
            None
        };
        let q = norm_quantile(1.0 - spec.alpha / 2.0);
        let root_n = (spec.n as f64).sqrt();
        for e in estimators {
            let mut accs = vec![EntryAccumulator::default(); p * p];
            for r in 0..reps {
                let base = run.join(rep_dir(r)).join("inference").join(e.label());
                let point = read_matrix_file(&base.join("point.csv"), false)?;
                let (var, defined) = read_masked_matrix_file(&base.join("variance.csv"), false)?;
                for i in 0..p {
                    for j in 0..p {
                        let sd = defined[i * p + j].then(|| var[(i, j)].sqrt());
                        accs[i * p + j].push(point[(i, j)], sd, omega[(i, j)], q, root_n);
                    }
                }
            }
            let sd = if e.is_desparsified() {
                read_matrix_file(&run.join("true_sd_desparsified.csv"), false)?
            } else {
                read_masked_matrix_file(&run.join("true_sd_undesparsified.csv"), false)?.0
            };
            for (set, entries) in normality_entry_sets(e, s_hat.as_deref(), &omega) {
                let report = normality_report(
                    set,
                    entries.iter().map(|&(i, j)| ((i, j), accs[i * p + j])),
                    &sd,
                    spec.n,
                    spec.alpha,
                );
                normality.push(NormalityBlock::new(e, &report));
            }
        }
    }

    let mut dir = RunDir::create(out, "evaluate")?;
    dir.record_input("spec", &run.join("spec.json"))?;
    dir.record_input("truth", &run.join("omega.csv"))?;
    let losses: Vec<_> = variants.iter().map(|v| json!({ "label": v.label, "losses": v.losses })).collect();
    let support: Vec<_> = variants.iter().map(|v| json!({ "label": v.label, "support": v.support })).collect();
    dir.write_json("losses.json", &losses)?;
    dir.write_json("support.json", &support)?;
    if !normality.is_empty() {
        dir.write_json("normality.json", &normality)?;
    }
    dir.write_json("report.json", &RebuiltReport { variants, normality })?;
    dir.set_details(json!({ "run": run.display().to_string(), "replications": reps }));
    dir.finish()?;
    Ok(())
}
