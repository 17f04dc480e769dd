//! Evaluation metrics for precision estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::norm_quantile;
use crate::linalg::{dot, spectral_norm, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l1: f64,
    pub spectral: f64,
    pub frobenius: f64,
    pub max: f64,
}

fn same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// Norms of `est − truth`.
pub fn norm_losses(est: &Matrix, truth: &Matrix) -> Result<LossReport> {
    let diff = est.sub(truth)?;
    Ok(LossReport {
        l1: diff.l1_norm(),
        spectral: spectral_norm(&diff),
        frobenius: diff.frobenius(),
        max: diff.max_abs(),
    })
}

/// A ratio whose denominator was zero and was reported as 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degenerate {
    Precision,
    Sensitivity,
    Specificity,
    Mcc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub mcc: f64,
    pub degenerate: Vec<Degenerate>,
}

/// Support recovery over off-diagonal entries, nonzero meaning `|entry| > 0`.
pub fn support_metrics(est: &Matrix, truth: &Matrix) -> Result<SupportReport> {
    support_metrics_with_threshold(est, truth, 0.0)
}

/// As [`support_metrics`], with estimated entries counted as nonzero when `|entry| > threshold`.
pub fn support_metrics_with_threshold(est: &Matrix, truth: &Matrix, threshold: f64) -> Result<SupportReport> {
    same_shape(est, truth)?;
    if !est.is_square() {
        return Err(Error::DimensionMismatch("support metrics need square matrices".into()));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for i in 0..est.rows() {
        for j in 0..est.cols() {
            if i == j {
                continue;
            }
            match (est[(i, j)].abs() > threshold, truth[(i, j)] != 0.0) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
    }
    let mut degenerate = Vec::new();
    let mut ratio = |num: usize, den: usize, kind: Degenerate| {
        if den == 0 {
            degenerate.push(kind);
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(tp, tp + fp, Degenerate::Precision);
    let sensitivity = ratio(tp, tp + fn_, Degenerate::Sensitivity);
    let specificity = ratio(tn, tn + fp, Degenerate::Specificity);
    let (tpf, tnf, fpf, fnf) = (tp as f64, tn as f64, fp as f64, fn_ as f64);
    let den = (tpf + fpf) * (tpf + fnf) * (tnf + fpf) * (tnf + fnf);
    let mcc = if den == 0.0 {
        degenerate.push(Degenerate::Mcc);
        0.0
    } else {
        (tpf * tnf - fpf * fnf) / den.sqrt()
    };
    Ok(SupportReport {
        tp,
        tn,
        fp,
        fn_,
        precision,
        sensitivity,
        specificity,
        mcc,
        degenerate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

/// Mean and sample standard deviation (`n − 1` denominator; 0 for fewer than two values).
pub fn mean_sd(values: &[f64]) -> MeanSd {
    let n = values.len();
    if n == 0 {
        return MeanSd { mean: f64::NAN, sd: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    MeanSd { mean, sd }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntrySet {
    /// Entries nonzero in every replication's unsymmetrized Loreg estimate.
    EstimatedSupport,
    TrueSupport,
    TrueNonSupport,
}

/// Intersection of the supports of `matrices`, diagonal included.
pub fn estimated_support(matrices: &[Matrix]) -> Vec<(usize, usize)> {
    let Some(first) = matrices.first() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for i in 0..first.rows() {
        for j in 0..first.cols() {
            if matrices.iter().all(|m| m[(i, j)] != 0.0) {
                out.push((i, j));
            }
        }
    }
    out
}

pub fn true_support(omega: &Matrix) -> Vec<(usize, usize)> {
    entries_where(omega, |v| v != 0.0)
}

pub fn true_nonsupport(omega: &Matrix) -> Vec<(usize, usize)> {
    entries_where(omega, |v| v == 0.0)
}

fn entries_where(m: &Matrix, keep: impl Fn(f64) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if keep(m[(i, j)]) {
                out.push((i, j));
            }
        }
    }
    out
}

/// One replication's point estimates and their standard errors (`None` where undefined).
#[derive(Clone, Copy, Debug)]
pub struct ReplicationEstimate<'a> {
    pub point: &'a Matrix,
    pub variance: &'a Matrix,
    pub defined: Option<&'a [bool]>,
}

impl ReplicationEstimate<'_> {
    fn sd(&self, i: usize, j: usize) -> Option<f64> {
        let ok = self.defined.is_none_or(|d| d[i * self.point.cols() + j]);
        ok.then(|| self.variance[(i, j)].sqrt())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryNormality {
    pub i: usize,
    pub j: usize,
    pub true_length: f64,
    pub avg_length: f64,
    pub cov_rate: f64,
    pub abs_avg_z: f64,
    pub sdz: f64,
    /// Replications with a defined variance for this entry.
    pub used: usize,
    pub dropped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalitySummary {
    pub true_length: MeanSd,
    pub avg_length: MeanSd,
    pub cov_rate: MeanSd,
    pub abs_avg_z: MeanSd,
    pub sdz: MeanSd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub entry_set: EntrySet,
    pub entries: Vec<EntryNormality>,
    /// Entries skipped because fewer than two replications had a defined variance.
    pub excluded: usize,
    /// Replication-entry pairs dropped for an undefined variance.
    pub dropped: usize,
    pub summary: Option<NormalitySummary>,
}

/// Running per-entry sums, folded one replication at a time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EntryAccumulator {
    used: usize,
    dropped: usize,
    covered: usize,
    length_sum: f64,
    z_mean: f64,
    z_m2: f64,
}

impl EntryAccumulator {
    /// Adds one replication; `sd = None` drops it for this entry.
    pub fn push(&mut self, point: f64, sd: Option<f64>, target: f64, q: f64, root_n: f64) {
        let Some(sd) = sd else {
            self.dropped += 1;
            return;
        };
        let half = q * sd / root_n;
        self.length_sum += 2.0 * half;
        if point - half <= target && target <= point + half {
            self.covered += 1;
        }
        let z = root_n * (point - target) / sd;
        self.used += 1;
        let delta = z - self.z_mean;
        self.z_mean += delta / self.used as f64;
        self.z_m2 += delta * (z - self.z_mean);
    }

    pub fn used(&self) -> usize {
        self.used
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    /// Metrics for entry `(i, j)`, or `None` with fewer than two usable replications.
    pub fn finish(&self, i: usize, j: usize, true_sd: f64, q: f64, root_n: f64) -> Option<EntryNormality> {
        if self.used < 2 {
            return None;
        }
        let used = self.used as f64;
        Some(EntryNormality {
            i,
            j,
            true_length: 2.0 * q * true_sd / root_n,
            avg_length: self.length_sum / used,
            cov_rate: self.covered as f64 / used,
            abs_avg_z: self.z_mean.abs(),
            sdz: (self.z_m2 / (used - 1.0)).sqrt(),
            used: self.used,
            dropped: self.dropped,
        })
    }
}

/// Assembles a report from finished accumulators.
pub fn normality_report(
    entry_set: EntrySet,
    accumulators: impl IntoIterator<Item = ((usize, usize), EntryAccumulator)>,
    sigma_true: &Matrix,
    n: usize,
    alpha: f64,
) -> NormalityReport {
    let q = norm_quantile(1.0 - alpha / 2.0);
    let root_n = (n as f64).sqrt();
    let mut entries = Vec::new();
    let (mut excluded, mut dropped) = (0, 0);
    for ((i, j), acc) in accumulators {
        dropped += acc.dropped;
        match acc.finish(i, j, sigma_true[(i, j)], q, root_n) {
            Some(e) => entries.push(e),
            None => excluded += 1,
        }
    }
    let summary = (!entries.is_empty()).then(|| {
        let col = |f: fn(&EntryNormality) -> f64| mean_sd(&entries.iter().map(f).collect::<Vec<_>>());
        NormalitySummary {
            true_length: col(|e| e.true_length),
            avg_length: col(|e| e.avg_length),
            cov_rate: col(|e| e.cov_rate),
            abs_avg_z: col(|e| e.abs_avg_z),
            sdz: col(|e| e.sdz),
        }
    });
    NormalityReport {
        entry_set,
        entries,
        excluded,
        dropped,
        summary,
    }
}

/// Per-entry interval and Z-score metrics over replications.
///
/// A replication whose variance is undefined at an entry is dropped for that
/// entry only. `sigma_true` holds population standard deviations.
pub fn normality_metrics(
    reps: &[ReplicationEstimate<'_>],
    truth: &Matrix,
    sigma_true: &Matrix,
    n: usize,
    alpha: f64,
    entries: &[(usize, usize)],
    entry_set: EntrySet,
) -> Result<NormalityReport> {
    if reps.len() < 2 {
        return Err(Error::InsufficientReplications {
            required: 2,
            got: reps.len(),
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    same_shape(truth, sigma_true)?;
    for r in reps {
        same_shape(r.point, truth)?;
        same_shape(r.variance, truth)?;
    }
    let q = norm_quantile(1.0 - alpha / 2.0);
    let root_n = (n as f64).sqrt();
    let accs = entries.iter().map(|&(i, j)| {
        let mut acc = EntryAccumulator::default();
        for r in reps {
            acc.push(r.point[(i, j)], r.sd(i, j), truth[(i, j)], q, root_n);
        }
        ((i, j), acc)
    });
    Ok(normality_report(entry_set, accs, sigma_true, n, alpha))
}

/// Two-class linear discriminant with a plug-in precision matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub omega: Matrix,
    pub class_means: [Vec<f64>; 2],
    pub priors: [f64; 2],
}

impl LdaModel {
    pub fn new(omega: Matrix, class_means: [Vec<f64>; 2], priors: [f64; 2]) -> Result<Self> {
        let p = omega.rows();
        if !omega.is_square() || class_means.iter().any(|m| m.len() != p) {
            return Err(Error::DimensionMismatch("class means must match omega".into()));
        }
        if priors.iter().any(|&pi| !(pi > 0.0 && pi < 1.0)) || (priors[0] + priors[1] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "priors must be positive and sum to 1, got {priors:?}"
            )));
        }
        Ok(Self {
            omega,
            class_means,
            priors,
        })
    }

    /// Class means and frequencies from labelled rows (labels 0 or 1).
    pub fn fit(x: &Matrix, labels: &[usize], omega: Matrix) -> Result<Self> {
        if labels.len() != x.rows() {
            return Err(Error::DimensionMismatch("one label per row is required".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidConfig(format!("labels must be 0 or 1, got {bad}")));
        }
        let mut means = [vec![0.0; x.cols()], vec![0.0; x.cols()]];
        let mut counts = [0usize; 2];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (m, v) in means[l].iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        for k in 0..2 {
            if counts[k] == 0 {
                return Err(Error::InvalidConfig(format!("class {k} has no observations")));
            }
            means[k].iter_mut().for_each(|m| *m /= counts[k] as f64);
        }
        let total = labels.len() as f64;
        Self::new(omega, means, [counts[0] as f64 / total, counts[1] as f64 / total])
    }

    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        let (d0, d1) = lda_scores(x, self)?;
        Ok(usize::from(d1 > d0))
    }
}

/// `δ_k(x) = xᵀΩμ_k − ½ μ_kᵀΩμ_k + log π_k` for `k = 0, 1`.
pub fn lda_scores(x: &[f64], model: &LdaModel) -> Result<(f64, f64)> {
    if x.len() != model.omega.rows() {
        return Err(Error::DimensionMismatch(format!(
            "observation has length {}, model has p = {}",
            x.len(),
            model.omega.rows()
        )));
    }
    let score = |k: usize| -> Result<f64> {
        let w = model.omega.matvec(&model.class_means[k])?;
        Ok(dot(x, &w) - 0.5 * dot(&model.class_means[k], &w) + model.priors[k].ln())
    };
    Ok((score(0)?, score(1)?))
}
