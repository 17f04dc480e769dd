//! Monte Carlo experiments: a fixed graph, repeated data draws, and the
//! losses, support recovery and normality metrics of each estimator variant.
//!
//! Replications run in parallel but are folded into the report strictly in
//! replication order, and every draw comes from a stream keyed by
//! `(seed, replication)`, so results do not depend on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{build_inference, threshold, InferenceResult, Source, VarianceKind};
use crate::linalg::{spd_inverse, IndexSet, Matrix};
use crate::metrics::{
    mean_sd, norm_losses, normality_report, support_metrics, EntryAccumulator, EntrySet, LossReport, MeanSd,
    NormalityReport, NormalitySummary, SupportReport,
};
use crate::nodewise::{estimate, with_pool, ColumnDiagnostic, Method, PrecisionEstimate, TuningSpec};
use crate::rng::{stream, Purpose};
use crate::simgen::{edge_count, Distribution, GraphSpec, Sampler};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdBy {
    /// Source of the null Z-scores.
    pub z: Source,
    /// Source of the tested lower-triangular support.
    pub support: Source,
}

/// One estimator: a method, the matrix it reports, and an optional FDR threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub method: Method,
    pub value: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdBy>,
}

impl Variant {
    pub fn plain(method: Method, value: Source) -> Self {
        Self {
            method,
            value,
            threshold: None,
        }
    }

    pub fn thresholded(method: Method, value: Source, z: Source, support: Source) -> Self {
        Self {
            method,
            value,
            threshold: Some(ThresholdBy { z, support }),
        }
    }

    /// File-name safe identifier, e.g. `loreg_omega_s__z_omega_us__s_omega_s`.
    pub fn label(&self) -> String {
        let mut s = format!("{}_{}", self.method.name(), self.value.name());
        if let Some(t) = self.threshold {
            s.push_str(&format!("__z_{}__s_{}", t.z.name(), t.support.name()));
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.threshold {
            if self.value == Source::OmegaUS {
                return Err(Error::InvalidConfig(format!(
                    "{}: thresholded values must come from a symmetric matrix (omega_s or t_hat)",
                    self.label()
                )));
            }
            if t.z == Source::OmegaS {
                return Err(Error::InvalidConfig(format!(
                    "{}: Z-scores come from omega_us or t_hat",
                    self.label()
                )));
            }
            if t.z == Source::OmegaUS && self.method == Method::Lasso {
                return Err(Error::InvalidConfig(format!(
                    "{}: undesparsified Z-scores are only available for loreg",
                    self.label()
                )));
            }
        }
        Ok(())
    }

    /// Six Loreg and five Lasso estimators: the two plain matrices and the FDR-thresholded ones.
    pub fn standard_set() -> Vec<Variant> {
        use Method::{Lasso, Loreg};
        use Source::{OmegaS, OmegaUS, That};
        vec![
            Variant::plain(Loreg, OmegaS),
            Variant::thresholded(Loreg, OmegaS, OmegaUS, OmegaS),
            Variant::thresholded(Loreg, OmegaS, That, OmegaS),
            Variant::thresholded(Loreg, That, That, OmegaS),
            Variant::thresholded(Loreg, That, That, That),
            Variant::plain(Loreg, That),
            Variant::plain(Lasso, OmegaS),
            Variant::thresholded(Lasso, OmegaS, That, OmegaS),
            Variant::thresholded(Lasso, That, That, OmegaS),
            Variant::thresholded(Lasso, That, That, That),
            Variant::plain(Lasso, That),
        ]
    }
}

fn default_fdr() -> f64 {
    0.05
}

fn default_alpha() -> f64 {
    0.05
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub schema_version: u32,
    pub graph: GraphSpec,
    pub distribution: Distribution,
    pub n: usize,
    pub replications: usize,
    #[serde(default = "Variant::standard_set")]
    pub methods: Vec<Variant>,
    #[serde(default)]
    pub tuning: TuningSpec,
    #[serde(default = "default_fdr")]
    pub fdr_level: f64,
    /// Confidence level `1 − alpha` for the normality metrics.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub seed: u64,
    /// Worker threads; all available cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
    /// Compute interval and Z-score metrics across replications.
    #[serde(default = "default_true")]
    pub normality: bool,
}

impl SimulationSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| {
            Error::InvalidConfig(format!("spec line {}, column {}: {e}", e.line(), e.column()))
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.graph.validate()?;
        if self.n < 3 {
            return Err(Error::InvalidConfig(format!("n must be at least 3, got {}", self.n)));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("methods is empty".into()));
        }
        for v in &self.methods {
            v.validate()?;
        }
        for m in self.run_methods() {
            self.tuning.validate(m, self.graph.p)?;
        }
        for (name, v) in [("fdr_level", self.fdr_level), ("alpha", self.alpha)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.parallelism == Some(0) {
            return Err(Error::InvalidConfig("parallelism must be at least 1".into()));
        }
        Ok(())
    }

    /// Methods that need fitting, in a fixed order.
    pub fn run_methods(&self) -> Vec<Method> {
        [Method::Loreg, Method::Lasso]
            .into_iter()
            .filter(|m| self.methods.iter().any(|v| v.method == *m))
            .collect()
    }

    pub fn workers(&self) -> usize {
        self.parallelism
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    /// Worker count used for this run; the report does not depend on it.
    pub fn with_parallelism(mut self, workers: usize) -> Self {
        self.parallelism = Some(workers);
        self
    }
}

/// Estimators whose entrywise normality is tracked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalityEstimator {
    LoregOmegaUs,
    LoregTHat,
    LassoTHat,
}

impl NormalityEstimator {
    pub fn label(self) -> &'static str {
        match self {
            Self::LoregOmegaUs => "loreg_omega_us",
            Self::LoregTHat => "loreg_t_hat",
            Self::LassoTHat => "lasso_t_hat",
        }
    }

    pub fn method(self) -> Method {
        match self {
            Self::LoregOmegaUs | Self::LoregTHat => Method::Loreg,
            Self::LassoTHat => Method::Lasso,
        }
    }

    pub fn source(self) -> Source {
        match self {
            Self::LoregOmegaUs => Source::OmegaUS,
            Self::LoregTHat | Self::LassoTHat => Source::That,
        }
    }

    pub fn is_desparsified(self) -> bool {
        self.source() == Source::That
    }

    /// Every estimator, in report order.
    pub fn all() -> [Self; 3] {
        [Self::LoregOmegaUs, Self::LoregTHat, Self::LassoTHat]
    }
}

/// `Var((aᵀu)(bᵀu))` for `a = Mᵀv_i`, `b = Mᵀv_j` and i.i.d. unit-variance `u` with `E u⁴ = κ`.
pub fn population_entry_variance(mix: &Matrix, kurtosis: f64, vi: &[f64], vj: &[f64]) -> f64 {
    let p = mix.rows();
    let proj = |v: &[f64]| -> Vec<f64> { (0..mix.cols()).map(|k| (0..p).map(|r| mix[(r, k)] * v[r]).sum()).collect() };
    let (a, b) = (proj(vi), proj(vj));
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    let ab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let cross: f64 = a.iter().zip(&b).map(|(x, y)| (x * y).powi(2)).sum();
    (kurtosis - 3.0) * cross + aa * bb + ab * ab
}

/// The fixed truth of an experiment.
#[derive(Clone, Debug)]
pub struct Population {
    pub omega: Matrix,
    pub sigma: Matrix,
    pub sampler: Sampler,
    pub edge_count: usize,
}

impl Population {
    pub fn new(graph: &GraphSpec, dist: Distribution) -> Result<Self> {
        let omega = graph.build()?;
        let sigma = spd_inverse(&omega)?;
        let sampler = Sampler::new(&omega, dist)?;
        let edge_count = edge_count(&omega);
        Ok(Self {
            omega,
            sigma,
            sampler,
            edge_count,
        })
    }

    pub fn p(&self) -> usize {
        self.omega.rows()
    }

    /// Population standard deviation of every desparsified entry.
    pub fn desparsified_sd(&self) -> Matrix {
        let p = self.p();
        let mix = self.sampler.mixing();
        // column i of `a` is Mᵀ Ω_{*i}
        let a = mix.transpose().matmul(&self.omega).expect("square");
        let g = a.transpose().matmul(&a).expect("square");
        let sq = Matrix::from_fn(p, p, |r, c| a[(r, c)] * a[(r, c)]);
        let h = sq.transpose().matmul(&sq).expect("square");
        let excess = self.sampler.base_kurtosis() - 3.0;
        Matrix::from_fn(p, p, |i, j| {
            (excess * h[(i, j)] + g[(i, i)] * g[(j, j)] + g[(i, j)].powi(2)).sqrt()
        })
    }

    /// Population standard deviation of the undesparsified entry `(i, j)` on `A⁺ = A_j* ∪ {i, j}`.
    pub fn undesparsified_sd(&self, i: usize, j: usize) -> Result<f64> {
        let mut idx: Vec<usize> = (0..self.p()).filter(|&k| self.omega[(k, j)] != 0.0).collect();
        idx.push(i);
        let a_plus = IndexSet::from_unsorted(idx);
        let s = spd_inverse(&self.sigma.principal_submatrix(a_plus.as_slice()))?;
        let embed = |col: usize| {
            let mut v = vec![0.0; self.p()];
            for (r, k) in a_plus.iter().enumerate() {
                v[k] = s[(r, col)];
            }
            v
        };
        let (ii, jj) = (a_plus.position(i).expect("added"), a_plus.position(j).expect("diagonal is nonzero"));
        let var = population_entry_variance(&self.sampler.mixing(), self.sampler.base_kurtosis(), &embed(ii), &embed(jj));
        Ok(var.sqrt())
    }
}

/// Everything one replication produced, handed to the caller before it is summarized.
pub struct ReplicationArtifacts<'a> {
    pub index: usize,
    pub x: &'a Matrix,
    pub estimates: &'a [(Method, PrecisionEstimate)],
    /// Variant matrices in `spec.methods` order.
    pub variants: &'a [(Variant, Matrix)],
    pub inference: &'a [(NormalityEstimator, InferenceResult)],
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub column_fallbacks: usize,
    pub degenerate_variances: usize,
    pub nonconverged_fits: usize,
    pub failed_candidates: usize,
    pub floored_inference_variances: usize,
    pub undefined_tested_pairs: usize,
}

impl RunDiagnostics {
    fn add(&mut self, o: &RunDiagnostics) {
        self.column_fallbacks += o.column_fallbacks;
        self.degenerate_variances += o.degenerate_variances;
        self.nonconverged_fits += o.nonconverged_fits;
        self.failed_candidates += o.failed_candidates;
        self.floored_inference_variances += o.floored_inference_variances;
        self.undefined_tested_pairs += o.undefined_tested_pairs;
    }

    fn count_columns(&mut self, est: &PrecisionEstimate) {
        for d in est.columns.iter().flat_map(|c| &c.diagnostics) {
            match d {
                ColumnDiagnostic::FellBackToEmpty { .. } => self.column_fallbacks += 1,
                ColumnDiagnostic::DegenerateVariance { .. } => self.degenerate_variances += 1,
                ColumnDiagnostic::NotConverged { .. } => self.nonconverged_fits += 1,
                ColumnDiagnostic::CandidateFailed { .. } => self.failed_candidates += 1,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub l1: MeanSd,
    pub spectral: MeanSd,
    pub frobenius: MeanSd,
    pub max: MeanSd,
    pub precision: MeanSd,
    pub sensitivity: MeanSd,
    pub specificity: MeanSd,
    pub mcc: MeanSd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: Variant,
    pub label: String,
    pub losses: Vec<LossReport>,
    pub support: Vec<SupportReport>,
    pub summary: VariantSummary,
}

impl VariantReport {
    /// Summarizes per-replication losses and support metrics.
    pub fn from_replications(variant: Variant, losses: Vec<LossReport>, support: Vec<SupportReport>) -> Self {
        let col = |f: &dyn Fn(usize) -> f64| mean_sd(&(0..losses.len()).map(f).collect::<Vec<_>>());
        let summary = VariantSummary {
            l1: col(&|k| losses[k].l1),
            spectral: col(&|k| losses[k].spectral),
            frobenius: col(&|k| losses[k].frobenius),
            max: col(&|k| losses[k].max),
            precision: col(&|k| support[k].precision),
            sensitivity: col(&|k| support[k].sensitivity),
            specificity: col(&|k| support[k].specificity),
            mcc: col(&|k| support[k].mcc),
        };
        Self {
            label: variant.label(),
            variant,
            losses,
            support,
            summary,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalityBlock {
    pub estimator: NormalityEstimator,
    pub entry_set: EntrySet,
    pub entries: usize,
    pub excluded: usize,
    pub dropped: usize,
    pub summary: Option<NormalitySummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub p: usize,
    pub n: usize,
    pub replications: usize,
    pub edge_count: usize,
    pub variants: Vec<VariantReport>,
    pub normality: Vec<NormalityBlock>,
    /// Size of the estimated support `Ŝ_Ω`, diagonal included.
    pub estimated_support_size: Option<usize>,
    pub diagnostics: RunDiagnostics,
}

impl NormalityBlock {
    pub fn new(estimator: NormalityEstimator, report: &NormalityReport) -> Self {
        Self {
            estimator,
            entry_set: report.entry_set,
            entries: report.entries.len(),
            excluded: report.excluded,
            dropped: report.dropped,
            summary: report.summary.clone(),
        }
    }
}

impl MetricsReport {
    pub fn variant(&self, v: &Variant) -> Option<&VariantReport> {
        self.variants.iter().find(|r| r.variant == *v)
    }

    pub fn normality_block(&self, e: NormalityEstimator, set: EntrySet) -> Option<&NormalityBlock> {
        self.normality.iter().find(|b| b.estimator == e && b.entry_set == set)
    }
}

/// Report plus the full per-entry tables behind it.
#[derive(Clone, Debug)]
pub struct SimulationOutput {
    pub report: MetricsReport,
    pub omega: Matrix,
    pub normality: Vec<(NormalityEstimator, NormalityReport)>,
    /// Population standard deviations of the desparsified entries.
    pub true_sd_desparsified: Option<Matrix>,
    /// Population standard deviations of the undesparsified entries on `Ŝ_Ω` (mask marks them).
    pub true_sd_undesparsified: Option<(Matrix, Vec<bool>)>,
}

struct Needs {
    undesp: bool,
    desp: [bool; 2],
    normality: Vec<NormalityEstimator>,
}

fn method_slot(m: Method) -> usize {
    match m {
        Method::Loreg => 0,
        Method::Lasso => 1,
    }
}

impl Needs {
    fn new(spec: &SimulationSpec) -> Self {
        let methods = spec.run_methods();
        let normality: Vec<NormalityEstimator> = if spec.normality && spec.replications >= 2 {
            NormalityEstimator::all()
                .into_iter()
                .filter(|e| methods.contains(&e.method()))
                .collect()
        } else {
            Vec::new()
        };
        let uses = |m: Method, s: Source| {
            spec.methods.iter().any(|v| {
                v.method == m && (v.value == s || v.threshold.is_some_and(|t| t.z == s || t.support == s))
            })
        };
        let z_us = spec
            .methods
            .iter()
            .any(|v| v.threshold.is_some_and(|t| t.z == Source::OmegaUS));
        let mut desp = [false; 2];
        for m in [Method::Loreg, Method::Lasso] {
            desp[method_slot(m)] =
                uses(m, Source::That) || normality.iter().any(|e| e.method() == m && e.is_desparsified());
        }
        Self {
            undesp: z_us || normality.contains(&NormalityEstimator::LoregOmegaUs),
            desp,
            normality,
        }
    }
}

struct RepOutcome {
    losses: Vec<LossReport>,
    support: Vec<SupportReport>,
    inference: Vec<(NormalityEstimator, InferenceResult)>,
    us_support: Option<Vec<bool>>,
    diagnostics: RunDiagnostics,
}

fn source_matrix<'a>(est: &'a PrecisionEstimate, t_hat: Option<&'a Matrix>, s: Source) -> &'a Matrix {
    match s {
        Source::OmegaS => &est.omega_s,
        Source::OmegaUS => &est.omega_us,
        Source::That => t_hat.expect("t_hat computed when needed"),
    }
}

fn run_replication(
    spec: &SimulationSpec,
    pop: &Population,
    needs: &Needs,
    rep: usize,
    on_rep: &(dyn Fn(&ReplicationArtifacts<'_>) -> Result<()> + Sync),
) -> Result<RepOutcome> {
    let mut rng = stream(spec.seed, rep as u64, Purpose::Data);
    let x = pop.sampler.draw(spec.n, &mut rng);
    let gaussian = spec.distribution == Distribution::Gaussian;
    let mut diagnostics = RunDiagnostics::default();

    let mut estimates = Vec::new();
    for m in spec.run_methods() {
        let est = estimate(&x, m, &spec.tuning, 1)?;
        diagnostics.count_columns(&est);
        estimates.push((m, est));
    }
    let est_of = |m: Method| &estimates.iter().find(|(k, _)| *k == m).expect("method was run").1;

    let undesp = if needs.undesp {
        let kind = VarianceKind::for_source(Source::OmegaUS, gaussian);
        Some(build_inference(est_of(Method::Loreg), &x, kind, Source::OmegaUS, spec.alpha)?)
    } else {
        None
    };
    let mut desp: [Option<InferenceResult>; 2] = [None, None];
    for (m, est) in &estimates {
        if needs.desp[method_slot(*m)] {
            let kind = VarianceKind::for_source(Source::That, gaussian);
            desp[method_slot(*m)] = Some(build_inference(est, &x, kind, Source::That, spec.alpha)?);
        }
    }
    let t_hat_of = |m: Method| desp[method_slot(m)].as_ref().and_then(|r| r.t_hat.as_ref());

    let mut variants = Vec::with_capacity(spec.methods.len());
    for v in &spec.methods {
        let est = est_of(v.method);
        let t_hat = t_hat_of(v.method);
        let value = source_matrix(est, t_hat, v.value);
        let m = match v.threshold {
            None => value.clone(),
            Some(t) => {
                let zs = match t.z {
                    Source::OmegaUS => undesp.as_ref().expect("undesparsified inference computed"),
                    _ => desp[method_slot(v.method)].as_ref().expect("desparsified inference computed"),
                };
                let out = threshold(value, zs, source_matrix(est, t_hat, t.support), spec.fdr_level)?;
                diagnostics.undefined_tested_pairs += out.undefined;
                out.matrix
            }
        };
        variants.push((*v, m));
    }

    let mut losses = Vec::with_capacity(variants.len());
    let mut support = Vec::with_capacity(variants.len());
    for (_, m) in &variants {
        losses.push(norm_losses(m, &pop.omega)?);
        support.push(support_metrics(m, &pop.omega)?);
    }

    let mut inference = Vec::new();
    if let Some(r) = &undesp {
        diagnostics.floored_inference_variances += r.floored_count();
    }
    for r in desp.iter().flatten() {
        diagnostics.floored_inference_variances += r.floored_count();
    }
    for &e in &needs.normality {
        let r = match e {
            NormalityEstimator::LoregOmegaUs => undesp.clone(),
            _ => desp[method_slot(e.method())].clone(),
        };
        if let Some(r) = r {
            inference.push((e, r));
        }
    }
    let us_support = estimates
        .iter()
        .find(|(m, _)| *m == Method::Loreg)
        .map(|(_, est)| est.omega_us.data().iter().map(|v| *v != 0.0).collect());

    on_rep(&ReplicationArtifacts {
        index: rep,
        x: &x,
        estimates: &estimates,
        variants: &variants,
        inference: &inference,
    })?;

    Ok(RepOutcome {
        losses,
        support,
        inference,
        us_support,
        diagnostics,
    })
}

/// Entry sets on which an estimator's normality is reported: `Ŝ_Ω` when known, plus
/// `S_Ω` and `S_Ω^c` for desparsified estimators.
pub fn normality_entry_sets(
    e: NormalityEstimator,
    s_hat: Option<&[(usize, usize)]>,
    omega: &Matrix,
) -> Vec<(EntrySet, Vec<(usize, usize)>)> {
    let p = omega.rows();
    let mut sets = Vec::new();
    if let Some(entries) = s_hat {
        sets.push((EntrySet::EstimatedSupport, entries.to_vec()));
    }
    if e.is_desparsified() {
        let (on, off): (Vec<_>, Vec<_>) =
            (0..p * p).map(|k| (k / p, k % p)).partition(|&(i, j)| omega[(i, j)] != 0.0);
        sets.push((EntrySet::TrueSupport, on));
        sets.push((EntrySet::TrueNonSupport, off));
    }
    sets
}

/// Runs every replication of `spec`. `on_rep` sees each replication's artifacts, possibly from
/// several threads at once.
pub fn run_simulation(
    spec: &SimulationSpec,
    on_rep: &(dyn Fn(&ReplicationArtifacts<'_>) -> Result<()> + Sync),
) -> Result<SimulationOutput> {
    spec.validate()?;
    let pop = Population::new(&spec.graph, spec.distribution)?;
    let p = pop.p();
    let needs = Needs::new(spec);
    let workers = spec.workers();
    let q = crate::inference::norm_quantile(1.0 - spec.alpha / 2.0);
    let root_n = (spec.n as f64).sqrt();

    let nv = spec.methods.len();
    let mut losses: Vec<Vec<LossReport>> = vec![Vec::with_capacity(spec.replications); nv];
    let mut support: Vec<Vec<SupportReport>> = vec![Vec::with_capacity(spec.replications); nv];
    let mut accs: Vec<(NormalityEstimator, Vec<EntryAccumulator>)> = needs
        .normality
        .iter()
        .map(|&e| (e, vec![EntryAccumulator::default(); p * p]))
        .collect();
    let mut s_hat: Option<Vec<bool>> = None;
    let mut diagnostics = RunDiagnostics::default();

    let batch = (workers * 2).max(1);
    let mut start = 0;
    while start < spec.replications {
        let end = (start + batch).min(spec.replications);
        let outcomes: Vec<Result<RepOutcome>> = with_pool(workers, || {
            if workers <= 1 {
                (start..end).map(|r| run_replication(spec, &pop, &needs, r, on_rep)).collect()
            } else {
                (start..end)
                    .into_par_iter()
                    .map(|r| run_replication(spec, &pop, &needs, r, on_rep))
                    .collect()
            }
        });
        for outcome in outcomes {
            let o = outcome?;
            for (k, (l, s)) in o.losses.into_iter().zip(o.support).enumerate() {
                losses[k].push(l);
                support[k].push(s);
            }
            for (e, r) in &o.inference {
                let acc = &mut accs.iter_mut().find(|(k, _)| k == e).expect("tracked estimator").1;
                for i in 0..p {
                    for j in 0..p {
                        acc[i * p + j].push(r.point[(i, j)], r.sd(i, j), pop.omega[(i, j)], q, root_n);
                    }
                }
            }
            if let Some(mask) = o.us_support {
                match &mut s_hat {
                    None => s_hat = Some(mask),
                    Some(cur) => cur.iter_mut().zip(&mask).for_each(|(c, m)| *c &= *m),
                }
            }
            diagnostics.add(&o.diagnostics);
        }
        start = end;
    }

    let variants: Vec<VariantReport> = spec
        .methods
        .iter()
        .zip(losses.into_iter().zip(support))
        .map(|(v, (l, s))| VariantReport::from_replications(*v, l, s))
        .collect();

    let s_hat_entries: Option<Vec<(usize, usize)>> = s_hat
        .as_ref()
        .filter(|_| !needs.normality.is_empty())
        .map(|mask| (0..p * p).filter(|&k| mask[k]).map(|k| (k / p, k % p)).collect());

    let true_sd_desparsified = needs.normality.iter().any(|e| e.is_desparsified()).then(|| pop.desparsified_sd());
    let true_sd_undesparsified = match (&s_hat_entries, needs.normality.contains(&NormalityEstimator::LoregOmegaUs)) {
        (Some(entries), true) => {
            let mut sd = Matrix::zeros(p, p);
            let mut mask = vec![false; p * p];
            for &(i, j) in entries {
                sd[(i, j)] = pop.undesparsified_sd(i, j)?;
                mask[i * p + j] = true;
            }
            Some((sd, mask))
        }
        _ => None,
    };

    let mut normality = Vec::new();
    let mut blocks = Vec::new();
    for (e, acc) in accs {
        let sd = if e.is_desparsified() {
            true_sd_desparsified.as_ref().expect("computed for desparsified estimators")
        } else {
            &true_sd_undesparsified.as_ref().expect("computed with the estimated support").0
        };
        for (set, entries) in normality_entry_sets(e, s_hat_entries.as_deref(), &pop.omega) {
            let report = normality_report(
                set,
                entries.iter().map(|&(i, j)| ((i, j), acc[i * p + j])),
                sd,
                spec.n,
                spec.alpha,
            );
            blocks.push(NormalityBlock::new(e, &report));
            normality.push((e, report));
        }
    }

    let report = MetricsReport {
        schema_version: SCHEMA_VERSION,
        p,
        n: spec.n,
        replications: spec.replications,
        edge_count: pop.edge_count,
        variants,
        normality: blocks,
        estimated_support_size: s_hat.map(|m| m.iter().filter(|b| **b).count()),
        diagnostics,
    };
    Ok(SimulationOutput {
        report,
        omega: pop.omega,
        normality,
        true_sd_desparsified,
        true_sd_undesparsified,
    })
}
