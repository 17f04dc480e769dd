use std::path::PathBuf;

use nodewise_loreg::metrics::{EntryNormality, MeanSd, NormalityReport};
use nodewise_loreg::rng::{Purpose, StreamKey};
use nodewise_loreg::simulation::{run_simulation, ReplicationArtifacts, SimulationOutput, SimulationSpec};
use nodewise_loreg::Result;
use serde_json::json;

use crate::output::{csv_table, read_text, write_json, RunDir};

#[derive(clap::Args)]
pub struct Args {
    /// Simulation spec (JSON).
    spec: PathBuf,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to `parallelism` in the spec JSON, then to all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Also write every replication's data, estimates and inference (large at p = 200).
    #[arg(long)]
    save_replications: bool,
}

/// Directory of replication `rep` inside a run directory.
pub fn rep_dir(rep: usize) -> String {
    format!("replications/rep_{rep:04}")
}

fn save_replication(run: &std::path::Path, a: &ReplicationArtifacts<'_>) -> Result<()> {
    use nodewise_loreg::io::{write_masked_matrix_file, write_matrix_file};
    use crate::output::path_in;
    let dir = rep_dir(a.index);
    write_matrix_file(&path_in(run, &format!("{dir}/x.csv"))?, a.x)?;
    for (m, est) in a.estimates {
        write_matrix_file(&path_in(run, &format!("{dir}/{}/omega_us.csv", m.name()))?, &est.omega_us)?;
        write_matrix_file(&path_in(run, &format!("{dir}/{}/omega_s.csv", m.name()))?, &est.omega_s)?;
    }
    for (v, m) in a.variants {
        write_matrix_file(&path_in(run, &format!("{dir}/variants/{}.csv", v.label()))?, m)?;
    }
    for (e, r) in a.inference {
        let base = format!("{dir}/inference/{}", e.label());
        write_matrix_file(&path_in(run, &format!("{base}/point.csv"))?, &r.point)?;
        write_masked_matrix_file(&path_in(run, &format!("{base}/variance.csv"))?, &r.var_matrix, &r.defined)?;
    }
    Ok(())
}

fn mean_sd_cells(m: &MeanSd) -> [String; 2] {
    [m.mean.to_string(), m.sd.to_string()]
}

fn summary_tables(out: &SimulationOutput) -> (String, String, String) {
    let r = &out.report;
    let mut loss_rows = Vec::new();
    let mut support_rows = Vec::new();
    for v in &r.variants {
        let s = &v.summary;
        let mut row = vec![v.label.clone()];
        for m in [&s.l1, &s.spectral, &s.frobenius, &s.max] {
            row.extend(mean_sd_cells(m));
        }
        loss_rows.push(row);
        let mut row = vec![v.label.clone()];
        for m in [&s.precision, &s.sensitivity, &s.specificity, &s.mcc] {
            row.extend(mean_sd_cells(m));
        }
        support_rows.push(row);
    }
    let mut normality_rows = Vec::new();
    for b in &r.normality {
        let Some(s) = &b.summary else { continue };
        let mut row = vec![b.estimator.label().to_string(), entry_set_name(b.entry_set).into(), b.entries.to_string()];
        for m in [&s.true_length, &s.avg_length, &s.cov_rate, &s.abs_avg_z, &s.sdz] {
            row.extend(mean_sd_cells(m));
        }
        normality_rows.push(row);
    }
    let metric_header = |names: &[&str]| -> Vec<String> {
        names.iter().flat_map(|n| [format!("{n}_mean"), format!("{n}_sd")]).collect()
    };
    let table = |lead: &[&str], names: &[&str], rows: &[Vec<String>]| {
        let h = metric_header(names);
        let header: Vec<&str> = lead.iter().copied().chain(h.iter().map(String::as_str)).collect();
        csv_table(&header, rows)
    };
    (
        table(&["variant"], &["l1", "spectral", "frobenius", "max"], &loss_rows),
        table(&["variant"], &["precision", "sensitivity", "specificity", "mcc"], &support_rows),
        table(
            &["estimator", "entry_set", "entries"],
            &["true_length", "avg_length", "cov_rate", "abs_avg_z", "sdz"],
            &normality_rows,
        ),
    )
}

pub fn entry_set_name(set: nodewise_loreg::metrics::EntrySet) -> &'static str {
    use nodewise_loreg::metrics::EntrySet;
    match set {
        EntrySet::EstimatedSupport => "estimated_support",
        EntrySet::TrueSupport => "true_support",
        EntrySet::TrueNonSupport => "true_nonsupport",
    }
}

fn entry_table(report: &NormalityReport) -> String {
    let rows: Vec<Vec<String>> = report
        .entries
        .iter()
        .map(|e: &EntryNormality| {
            vec![
                e.i.to_string(),
                e.j.to_string(),
                e.true_length.to_string(),
                e.avg_length.to_string(),
                e.cov_rate.to_string(),
                e.abs_avg_z.to_string(),
                e.sdz.to_string(),
                e.used.to_string(),
                e.dropped.to_string(),
            ]
        })
        .collect();
    csv_table(&["i", "j", "true_length", "avg_length", "cov_rate", "abs_avg_z", "sdz", "used", "dropped"], &rows)
}

pub fn run(args: Args) -> Result<()> {
    let mut spec = SimulationSpec::from_json(&read_text(&args.spec)?)?;
    if let Some(w) = args.workers {
        spec = spec.with_parallelism(w);
        spec.validate()?;
    }
    let mut dir = RunDir::create(&args.out, "simulate")?;
    dir.record_input("spec", &args.spec)?;
    // the saved spec leaves the worker count out; reports do not depend on it
    let saved = SimulationSpec { parallelism: None, ..spec.clone() };
    dir.write_text("spec.json", &(saved.to_json() + "\n"))?;

    let root = dir.root().to_path_buf();
    let save = args.save_replications;
    let out = run_simulation(&spec, &|a| if save { save_replication(&root, a) } else { Ok(()) })?;
    log::info!("finished {} replications", spec.replications);

    dir.write_matrix("omega.csv", &out.omega)?;
    write_json(&dir.path("metrics.json")?, &out.report)?;
    let (losses, support, normality) = summary_tables(&out);
    dir.write_text("tables/losses.csv", &losses)?;
    dir.write_text("tables/support.csv", &support)?;
    if !out.report.normality.is_empty() {
        dir.write_text("tables/normality.csv", &normality)?;
    }
    for (e, report) in &out.normality {
        let name = format!("normality/{}__{}.csv", e.label(), entry_set_name(report.entry_set));
        dir.write_text(&name, &entry_table(report))?;
    }
    if let Some(sd) = &out.true_sd_desparsified {
        dir.write_matrix("true_sd_desparsified.csv", sd)?;
    }
    if let Some((sd, mask)) = &out.true_sd_undesparsified {
        dir.write_masked("true_sd_undesparsified.csv", sd, mask)?;
    }

    dir.set_streams(
        (0..spec.replications)
            .map(|r| StreamKey::new(spec.seed, r as u64, Purpose::Data))
            .collect(),
    );
    dir.set_details(json!({
        "family": spec.graph.family,
        "p": out.report.p,
        "n": spec.n,
        "replications": spec.replications,
        "edge_count": out.report.edge_count,
        "graph_stream": StreamKey::new(spec.graph.seed, 0, Purpose::Graph),
        "saved_replications": save,
    }));
    dir.finish()?;
    Ok(())
}
