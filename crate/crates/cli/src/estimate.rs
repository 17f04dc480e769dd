use std::path::PathBuf;

use nodewise_loreg::io::read_matrix_file;
use nodewise_loreg::nodewise::{estimate, ColumnEstimate, Method, TMax, TuningSpec};
use nodewise_loreg::{Error, Matrix, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{read_json, RunDir};

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum MethodArg {
    Loreg,
    Lasso,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Loreg => Method::Loreg,
            MethodArg::Lasso => Method::Lasso,
        }
    }
}

fn parse_t_max(s: &str) -> std::result::Result<TMax, String> {
    if s == "auto" {
        return Ok(TMax::Auto);
    }
    s.parse().map(TMax::Fixed).map_err(|_| format!("expected a non-negative integer or \"auto\", got {s:?}"))
}

#[derive(clap::Args)]
pub struct Args {
    /// Data CSV, one observation per row.
    #[arg(long)]
    data: PathBuf,
    /// The first line of the CSV is a header.
    #[arg(long)]
    header: bool,
    /// Subtract column means first.
    #[arg(long)]
    center: bool,
    #[arg(long, value_enum, default_value = "loreg")]
    method: MethodArg,
    /// Tuning JSON; flags below override it.
    #[arg(long)]
    tuning: Option<PathBuf>,
    /// Largest support size searched: an integer or `auto` (n / (log p · log log n)).
    #[arg(long, value_parser = parse_t_max)]
    t_max: Option<TMax>,
    /// Use this support size for every column instead of the HBIC search.
    #[arg(long)]
    fixed_t: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

/// What `infer` needs to rebuild an estimate next to its matrices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub method: Method,
    pub centered: bool,
    pub header: bool,
    pub n: usize,
    pub p: usize,
    pub tuning: TuningSpec,
    pub gamma_diag: Vec<f64>,
    pub columns: Vec<ColumnEstimate>,
}

/// Reads a data CSV, centering its columns when asked.
pub fn load_data(path: &std::path::Path, header: bool, center: bool) -> Result<Matrix> {
    let x = read_matrix_file(path, header)?;
    if !center {
        return Ok(x);
    }
    let n = x.rows() as f64;
    let means: Vec<f64> = (0..x.cols()).map(|j| (0..x.rows()).map(|i| x[(i, j)]).sum::<f64>() / n).collect();
    Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] - means[j]))
}

pub fn run(args: Args) -> Result<()> {
    let method = Method::from(args.method);
    let mut tuning = match &args.tuning {
        Some(path) => read_json(path)?,
        None => TuningSpec::default(),
    };
    if let Some(t) = args.t_max {
        tuning.t_max = t;
    }
    if args.fixed_t.is_some() {
        tuning.fixed_t = args.fixed_t;
    }
    let x = load_data(&args.data, args.header, args.center)?;
    let (n, p) = (x.rows(), x.cols());
    if p < 2 {
        return Err(Error::InvalidConfig(format!("data needs at least 2 columns, found {p}")));
    }
    tuning.validate(method, p)?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |w| w.get()));
    let est = estimate(&x, method, &tuning, workers)?;

    let mut dir = RunDir::create(&args.out, "estimate")?;
    dir.record_input("data", &args.data)?;
    dir.write_matrix("omega_s.csv", &est.omega_s)?;
    dir.write_matrix("omega_us.csv", &est.omega_us)?;
    let diagnostics: usize = est.columns.iter().map(|c| c.diagnostics.len()).sum();
    dir.write_json(
        "columns.json",
        &EstimateRecord {
            method,
            centered: args.center,
            header: args.header,
            n,
            p,
            tuning: tuning.clone(),
            gamma_diag: est.gamma_diag.clone(),
            columns: est.columns,
        },
    )?;
    dir.set_details(json!({
        "method": method,
        "n": n,
        "p": p,
        "t_max": (method == Method::Loreg).then(|| tuning.t_max.resolve(n, p)),
        "column_diagnostics": diagnostics,
    }));
    dir.finish()?;
    Ok(())
}
