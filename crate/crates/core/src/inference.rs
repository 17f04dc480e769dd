//! Entrywise inference for nodewise precision estimates.
//!
//! Two families of variance estimates are provided. The undesparsified ones
//! apply to `Ω̂ᵁˢ_ij` and are defined only when `i ∈ Â_j⁺`; they are built
//! from `S = (Σ̂_{A⁺A⁺})⁻¹`. The desparsified ones apply to
//! `T̂ = Ω̂ + Ω̂ᵀ − Ω̂ᵀΣ̂Ω̂` and are defined for every entry.
//!
//! Null Z-scores feed a Benjamini–Hochberg step-up test that thresholds a
//! symmetric matrix on its lower-triangular support.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, IndexSet, Matrix};
use crate::nodewise::PrecisionEstimate;

/// Sample-based variance estimates below this are raised to it and flagged.
pub const VARIANCE_FLOOR: f64 = 1e-10;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Two-sided p-value `2(1 − Φ(|z|))`.
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceKind {
    UndesparsifiedGaussian,
    UndesparsifiedGeneral,
    DesparsifiedGaussian,
    DesparsifiedGeneral,
}

impl VarianceKind {
    pub fn is_desparsified(self) -> bool {
        matches!(self, Self::DesparsifiedGaussian | Self::DesparsifiedGeneral)
    }

    /// The kind matched to a point source and distribution assumption.
    pub fn for_source(source: Source, gaussian: bool) -> Self {
        match (source, gaussian) {
            (Source::That, true) => Self::DesparsifiedGaussian,
            (Source::That, false) => Self::DesparsifiedGeneral,
            (_, true) => Self::UndesparsifiedGaussian,
            (_, false) => Self::UndesparsifiedGeneral,
        }
    }
}

/// Which matrix of an estimate an operation reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[serde(rename = "omega_s")]
    OmegaS,
    #[serde(rename = "omega_us")]
    OmegaUS,
    #[serde(rename = "t_hat")]
    That,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::OmegaS => "omega_s",
            Source::OmegaUS => "omega_us",
            Source::That => "t_hat",
        }
    }
}

/// A variance estimate and whether it was raised to the floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variance {
    pub value: f64,
    pub floored: bool,
}

impl Variance {
    fn floor(raw: f64) -> Self {
        if raw < VARIANCE_FLOOR || !raw.is_finite() {
            Self {
                value: VARIANCE_FLOOR,
                floored: true,
            }
        } else {
            Self {
                value: raw,
                floored: false,
            }
        }
    }
}

fn check_square(m: &Matrix, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!("{what} must be square")));
    }
    Ok(())
}

/// `T̂ = Ω̂ + Ω̂ᵀ − Ω̂ᵀΣ̂Ω̂`.
pub fn desparsify(omega: &Matrix, sigma_hat: &Matrix) -> Result<Matrix> {
    check_square(omega, "omega")?;
    if sigma_hat.rows() != omega.rows() || sigma_hat.cols() != omega.cols() {
        return Err(Error::DimensionMismatch("omega and sigma_hat differ in shape".into()));
    }
    let quad = omega.transpose().matmul(&sigma_hat.matmul(omega)?)?;
    let p = omega.rows();
    Ok(Matrix::from_fn(p, p, |i, j| omega[(i, j)] + omega[(j, i)] - quad[(i, j)]))
}

fn positions(a_plus: &IndexSet, i: usize, j: usize) -> Result<(usize, usize)> {
    let ii = a_plus.position(i).ok_or(Error::IndexNotInActiveSet { index: i })?;
    let jj = a_plus.position(j).ok_or(Error::IndexNotInActiveSet { index: j })?;
    Ok((ii, jj))
}

/// `S_îî S_ĵĵ + S_îĵ²` with `S = (Σ̂_{A⁺A⁺})⁻¹`.
pub fn var_undesp_gaussian(sigma_hat: &Matrix, a_plus: &IndexSet, i: usize, j: usize) -> Result<f64> {
    check_square(sigma_hat, "sigma_hat")?;
    let (ii, jj) = positions(a_plus, i, j)?;
    let s = spd_inverse(&sigma_hat.principal_submatrix(a_plus.as_slice()))?;
    Ok(s[(ii, ii)] * s[(jj, jj)] + s[(ii, jj)].powi(2))
}

/// `(1/n) Σ_k [(S x_k)_î (S x_k)_ĵ]² − ½(Ω̂_ij² + Ω̂_ji²)` over the rows `x_k` restricted to `A⁺`.
pub fn var_undesp_general(
    x: &Matrix,
    sigma_hat: &Matrix,
    a_plus: &IndexSet,
    i: usize,
    j: usize,
    omega: &Matrix,
) -> Result<Variance> {
    check_square(sigma_hat, "sigma_hat")?;
    let (ii, jj) = positions(a_plus, i, j)?;
    let s = spd_inverse(&sigma_hat.principal_submatrix(a_plus.as_slice()))?;
    let u = restricted_scores(x, a_plus.as_slice(), &s);
    Ok(general_from_scores(&u, ii, jj, omega[(i, j)], omega[(j, i)]))
}

/// Rows `S x_{k,A⁺}` as an `n × |A⁺|` matrix.
fn restricted_scores(x: &Matrix, idx: &[usize], s: &Matrix) -> Matrix {
    let a = idx.len();
    Matrix::from_fn(x.rows(), a, |k, c| {
        idx.iter().enumerate().map(|(r, &col)| x[(k, col)] * s[(r, c)]).sum()
    })
}

fn general_from_scores(u: &Matrix, ii: usize, jj: usize, w_ij: f64, w_ji: f64) -> Variance {
    let n = u.rows() as f64;
    let quad: f64 = (0..u.rows()).map(|k| (u[(k, ii)] * u[(k, jj)]).powi(2)).sum::<f64>() / n;
    Variance::floor(quad - 0.5 * (w_ij * w_ij + w_ji * w_ji))
}

/// `Ω̂_ii Ω̂_jj + ½(Ω̂_ij² + Ω̂_ji²)`.
pub fn var_desp_gaussian(omega: &Matrix, i: usize, j: usize) -> f64 {
    omega[(i, i)] * omega[(j, j)] + 0.5 * (omega[(i, j)].powi(2) + omega[(j, i)].powi(2))
}

/// `(1/n) Σ_k (Ω̂_{*i}ᵀ x_k x_kᵀ Ω̂_{*j})² − ½(Ω̂_ij² + Ω̂_ji²)`.
pub fn var_desp_general(x: &Matrix, omega: &Matrix, i: usize, j: usize) -> Result<Variance> {
    if x.cols() != omega.rows() {
        return Err(Error::DimensionMismatch("data and omega disagree in p".into()));
    }
    let wi: Vec<f64> = (0..x.rows()).map(|k| (0..x.cols()).map(|c| x[(k, c)] * omega[(c, i)]).sum()).collect();
    let wj: Vec<f64> = (0..x.rows()).map(|k| (0..x.cols()).map(|c| x[(k, c)] * omega[(c, j)]).sum()).collect();
    let n = x.rows() as f64;
    let quad: f64 = wi.iter().zip(&wj).map(|(a, b)| (a * b).powi(2)).sum::<f64>() / n;
    Ok(Variance::floor(quad - 0.5 * (omega[(i, j)].powi(2) + omega[(j, i)].powi(2))))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub t_hat: Option<Matrix>,
    pub point_source: Source,
    pub point: Matrix,
    pub variance_kind: VarianceKind,
    /// Entry `(i, j)` holds the variance of `point[(i, j)]`; zero where undefined.
    pub var_matrix: Matrix,
    /// Row-major mask of entries with a defined variance.
    pub defined: Vec<bool>,
    /// Row-major mask of variances raised to the floor.
    pub floored: Vec<bool>,
    pub z_scores: Matrix,
    pub ci_low: Matrix,
    pub ci_high: Matrix,
    pub n: usize,
    pub alpha_level: f64,
}

impl InferenceResult {
    pub fn p(&self) -> usize {
        self.point.rows()
    }

    pub fn is_defined(&self, i: usize, j: usize) -> bool {
        self.defined[i * self.p() + j]
    }

    pub fn sd(&self, i: usize, j: usize) -> Option<f64> {
        self.is_defined(i, j).then(|| self.var_matrix[(i, j)].sqrt())
    }

    pub fn z(&self, i: usize, j: usize) -> Option<f64> {
        self.is_defined(i, j).then(|| self.z_scores[(i, j)])
    }

    pub fn undefined_count(&self) -> usize {
        self.defined.iter().filter(|d| !**d).count()
    }

    pub fn floored_count(&self) -> usize {
        self.floored.iter().filter(|f| **f).count()
    }
}

/// Variances of every entry of the chosen point estimate. `None` marks undefined entries.
fn variance_table(
    est: &PrecisionEstimate,
    x: &Matrix,
    kind: VarianceKind,
) -> Vec<Option<Variance>> {
    let p = est.omega_us.rows();
    let omega = &est.omega_us;
    let mut out = vec![None; p * p];
    match kind {
        VarianceKind::DesparsifiedGaussian => {
            for i in 0..p {
                for j in 0..p {
                    out[i * p + j] = Some(Variance {
                        value: var_desp_gaussian(omega, i, j),
                        floored: false,
                    });
                }
            }
        }
        VarianceKind::DesparsifiedGeneral => {
            let w = x.matmul(omega).expect("conformable by construction");
            let n = x.rows() as f64;
            for i in 0..p {
                for j in i..p {
                    let quad: f64 =
                        (0..x.rows()).map(|k| (w[(k, i)] * w[(k, j)]).powi(2)).sum::<f64>() / n;
                    let v = Variance::floor(quad - 0.5 * (omega[(i, j)].powi(2) + omega[(j, i)].powi(2)));
                    out[i * p + j] = Some(v);
                    out[j * p + i] = Some(v);
                }
            }
        }
        VarianceKind::UndesparsifiedGaussian | VarianceKind::UndesparsifiedGeneral => {
            for col in &est.columns {
                let j = col.j;
                let a_plus = col.active_plus();
                let idx = a_plus.as_slice();
                let s = match spd_inverse(&est.sigma_hat.principal_submatrix(idx)) {
                    Ok(s) => s,
                    Err(e) => {
                        log::warn!("column {j}: variance undefined ({e})");
                        continue;
                    }
                };
                let jj = a_plus.position(j).expect("j is in its own augmented set");
                let u = (kind == VarianceKind::UndesparsifiedGeneral).then(|| restricted_scores(x, idx, &s));
                for (ii, &i) in idx.iter().enumerate() {
                    let v = match &u {
                        None => Variance {
                            value: s[(ii, ii)] * s[(jj, jj)] + s[(ii, jj)].powi(2),
                            floored: false,
                        },
                        Some(u) => general_from_scores(u, ii, jj, omega[(i, j)], omega[(j, i)]),
                    };
                    out[i * p + j] = Some(v);
                }
            }
        }
    }
    out
}

/// Variances, Z-scores under `Ω_ij = 0` and `1 − α` confidence intervals for one point estimate.
pub fn build_inference(
    est: &PrecisionEstimate,
    x: &Matrix,
    kind: VarianceKind,
    point: Source,
    alpha_level: f64,
) -> Result<InferenceResult> {
    if !(alpha_level > 0.0 && alpha_level < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha_level}")));
    }
    let p = est.omega_us.rows();
    if x.cols() != p {
        return Err(Error::DimensionMismatch(format!("data has {} columns, estimate has p = {p}", x.cols())));
    }
    let t_hat = match point {
        Source::That => Some(desparsify(&est.omega_us, &est.sigma_hat)?),
        _ => None,
    };
    let point_matrix = match point {
        Source::OmegaS => est.omega_s.clone(),
        Source::OmegaUS => est.omega_us.clone(),
        Source::That => t_hat.clone().expect("computed above"),
    };
    let table = variance_table(est, x, kind);
    let n = x.rows();
    let root_n = (n as f64).sqrt();
    let q = norm_quantile(1.0 - alpha_level / 2.0);
    let mut var_matrix = Matrix::zeros(p, p);
    let mut z_scores = Matrix::zeros(p, p);
    let mut ci_low = point_matrix.clone();
    let mut ci_high = point_matrix.clone();
    let mut defined = vec![false; p * p];
    let mut floored = vec![false; p * p];
    for i in 0..p {
        for j in 0..p {
            let Some(v) = table[i * p + j] else { continue };
            let sd = v.value.sqrt();
            let pt = point_matrix[(i, j)];
            var_matrix[(i, j)] = v.value;
            z_scores[(i, j)] = root_n * pt / sd;
            ci_low[(i, j)] = pt - q * sd / root_n;
            ci_high[(i, j)] = pt + q * sd / root_n;
            defined[i * p + j] = true;
            floored[i * p + j] = v.floored;
        }
    }
    Ok(InferenceResult {
        t_hat,
        point_source: point,
        point: point_matrix,
        variance_kind: kind,
        var_matrix,
        defined,
        floored,
        z_scores,
        ci_low,
        ci_high,
        n,
        alpha_level,
    })
}

/// Benjamini–Hochberg step-up rule; returns the rejected indices in ascending order.
pub fn bh_fdr(pvalues: &[f64], q: f64) -> Result<Vec<usize>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidConfig(format!("FDR level must lie in (0, 1), got {q}")));
    }
    if let Some(&bad) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidPValue(bad));
    }
    let m = pvalues.len();
    let mut sorted: Vec<f64> = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cutoff = (1..=m)
        .rev()
        .find(|&k| sorted[k - 1] <= k as f64 * q / m as f64)
        .map(|k| sorted[k - 1]);
    Ok(match cutoff {
        Some(c) => (0..m).filter(|&i| pvalues[i] <= c).collect(),
        None => Vec::new(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSpec {
    /// Matrix whose values are kept.
    pub value_source: Source,
    /// Matrix whose null Z-scores are tested.
    pub z_source: Source,
    /// Matrix whose lower-triangular support is tested.
    pub support_source: Source,
    pub fdr_level: f64,
}

impl ThresholdSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fdr_level > 0.0 && self.fdr_level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "fdr_level must lie in (0, 1), got {}",
                self.fdr_level
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOutcome {
    pub matrix: Matrix,
    pub tested: usize,
    /// Rejected lower-triangular locations `(i, j)`, `i > j`.
    pub rejected: Vec<(usize, usize)>,
    /// Tested locations without a defined variance in either orientation.
    pub undefined: usize,
}

/// Null Z-score for the pair `{a, b}`, `a < b`: orientation `(a, b)` if defined, else `(b, a)`.
pub fn pair_z(res: &InferenceResult, a: usize, b: usize) -> Option<f64> {
    res.z(a, b).or_else(|| res.z(b, a))
}

/// Keeps `m1` on the diagonal and at tested pairs whose null hypothesis is rejected.
pub fn threshold(m1: &Matrix, zs: &InferenceResult, m3: &Matrix, fdr_level: f64) -> Result<ThresholdOutcome> {
    check_square(m1, "value matrix")?;
    let p = m1.rows();
    if m3.rows() != p || m3.cols() != p || zs.p() != p {
        return Err(Error::DimensionMismatch("threshold operands differ in shape".into()));
    }
    let mut locs = Vec::new();
    let mut pvals = Vec::new();
    let mut tested = 0;
    let mut undefined = 0;
    for i in 0..p {
        for j in 0..i {
            if m3[(i, j)] == 0.0 {
                continue;
            }
            tested += 1;
            match pair_z(zs, j, i) {
                Some(z) => {
                    locs.push((i, j));
                    pvals.push(two_sided_p(z));
                }
                None => undefined += 1,
            }
        }
    }
    let rejected: Vec<(usize, usize)> = bh_fdr(&pvals, fdr_level)?.into_iter().map(|k| locs[k]).collect();
    let mut out = Matrix::from_diag(&m1.diag());
    for &(i, j) in &rejected {
        let v = m1[(i, j)];
        out[(i, j)] = v;
        out[(j, i)] = v;
    }
    Ok(ThresholdOutcome {
        matrix: out,
        tested,
        rejected,
        undefined,
    })
}

/// Population check that the undesparsified variance never exceeds the desparsified one.
///
/// Returns `(lhs, rhs, lhs <= rhs + 1e-10)` with `lhs` the closed Gaussian form on `A⁺`
/// evaluated at `Σ` and `rhs = Ω_ii Ω_jj + Ω_ij²` for `Ω = Σ⁻¹`.
pub fn variance_ordering_check(sigma: &Matrix, a_plus: &IndexSet, i: usize, j: usize) -> Result<(f64, f64, bool)> {
    let lhs = var_undesp_gaussian(sigma, a_plus, i, j)?;
    let omega = spd_inverse(sigma)?;
    let rhs = omega[(i, i)] * omega[(j, j)] + omega[(i, j)].powi(2);
    Ok((lhs, rhs, lhs <= rhs + 1e-10))
}
