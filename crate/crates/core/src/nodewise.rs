//! Nodewise regression estimators of a precision matrix.
//!
//! Each column `j` regresses `X_j` on the standardized remaining columns,
//! chooses the tuning value by HBIC, maps the coefficients back to the raw
//! scale and turns them into the column `Ω̂_{*j}`. The column estimates form
//! `Ω̂ᵁˢ`, which is then symmetrized by keeping the smaller-magnitude entry.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::lasso::{default_lambda_grid, lasso_gram, LassoConfig, DEFAULT_MAX_SWEEPS, DEFAULT_TOL};
use crate::linalg::{sample_covariance, spd_inverse, IndexSet, Matrix};
use crate::sdar::{sdar_gram, GramSystem, SdarConfig, DEFAULT_MAX_ITER};

pub const DEFAULT_T_MAX: usize = 20;
/// Columns with `Σ̂_jj` at or below this are rejected.
pub const DEGENERATE_FLOOR: f64 = 1e-12;
/// `σ̂_j²` is floored at this multiple of `Σ̂_jj`.
pub const VARIANCE_FLOOR_REL: f64 = 1e-10;
const LOSS_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Loreg,
    Lasso,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Loreg => "loreg",
            Method::Lasso => "lasso",
        }
    }
}

/// Upper end of the support-size search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TMax {
    Fixed(usize),
    /// `⌊n / (ln p · ln ln n)⌋`.
    Auto,
}

impl Default for TMax {
    fn default() -> Self {
        TMax::Fixed(DEFAULT_T_MAX)
    }
}

impl TMax {
    /// Resolved bound, capped at `p − 1`.
    pub fn resolve(self, n: usize, p: usize) -> usize {
        let t = match self {
            TMax::Fixed(t) => t,
            TMax::Auto => auto_t_max(n, p),
        };
        t.min(p.saturating_sub(1))
    }
}

pub fn auto_t_max(n: usize, p: usize) -> usize {
    let denom = (p as f64).ln() * (n as f64).ln().ln();
    if denom > 0.0 {
        (n as f64 / denom).floor() as usize
    } else {
        0
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TMaxRepr {
    Fixed(usize),
    Named(String),
}

impl Serialize for TMax {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            TMax::Fixed(t) => TMaxRepr::Fixed(t),
            TMax::Auto => TMaxRepr::Named("auto".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TMax {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match TMaxRepr::deserialize(d)? {
            TMaxRepr::Fixed(t) => Ok(TMax::Fixed(t)),
            TMaxRepr::Named(s) if s == "auto" => Ok(TMax::Auto),
            TMaxRepr::Named(s) => Err(serde::de::Error::custom(format!(
                "t_max must be a non-negative integer or \"auto\", got {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningSpec {
    pub t_max: TMax,
    /// Use this support size for every column instead of HBIC selection.
    pub fixed_t: Option<usize>,
    pub lambda_grid: Vec<f64>,
    pub max_iter: usize,
    pub lasso_tol: f64,
    pub lasso_max_sweeps: usize,
}

impl Default for TuningSpec {
    fn default() -> Self {
        Self {
            t_max: TMax::default(),
            fixed_t: None,
            lambda_grid: default_lambda_grid(),
            max_iter: DEFAULT_MAX_ITER,
            lasso_tol: DEFAULT_TOL,
            lasso_max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

impl TuningSpec {
    pub fn validate(&self, method: Method, p: usize) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        match method {
            Method::Loreg => {
                if let Some(t) = self.fixed_t {
                    if t > p - 1 {
                        return Err(Error::InvalidConfig(format!(
                            "fixed_t = {t} exceeds p - 1 = {}",
                            p - 1
                        )));
                    }
                }
            }
            Method::Lasso => {
                if self.lambda_grid.is_empty() {
                    return Err(Error::InvalidConfig("lambda_grid is empty".into()));
                }
                if let Some(&l) = self.lambda_grid.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
                    return Err(Error::InvalidConfig(format!("lambda_grid contains {l}")));
                }
                if !(self.lasso_tol > 0.0) {
                    return Err(Error::InvalidConfig("lasso_tol must be > 0".into()));
                }
            }
        }
        Ok(())
    }
}

/// A tuning value: support size for Loreg, penalty for Lasso.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tuning {
    SupportSize(usize),
    Penalty(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HbicPoint {
    pub tuning: Tuning,
    pub active_size: usize,
    pub hbic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnDiagnostic {
    /// `σ̂_j²` fell below the floor and was raised to it.
    DegenerateVariance { raw: f64, floor: f64 },
    CandidateFailed { tuning: Tuning, reason: String },
    NotConverged { tuning: Tuning },
    /// The requested fit failed and the column fell back to the empty support.
    FellBackToEmpty { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnEstimate {
    pub j: usize,
    /// Coefficients on the standardized design, length `p − 1`.
    pub beta: Vec<f64>,
    /// Coefficients on the raw design, length `p − 1`.
    pub alpha: Vec<f64>,
    /// Support in full-matrix coordinates (never contains `j`).
    pub active: IndexSet,
    pub sigma2: f64,
    pub omega_jj: f64,
    /// `Ω̂_{\j,j}`, length `p − 1`.
    pub omega_col: Vec<f64>,
    pub chosen: Tuning,
    pub hbic_value: f64,
    pub trace: Vec<HbicPoint>,
    pub diagnostics: Vec<ColumnDiagnostic>,
}

impl ColumnEstimate {
    /// `Â_j ∪ {j}`.
    pub fn active_plus(&self) -> IndexSet {
        self.active.with(self.j)
    }

    /// `Ω̂_{*j}` as a length-`p` vector.
    pub fn full_column(&self) -> Vec<f64> {
        let p = self.omega_col.len() + 1;
        let mut col = vec![0.0; p];
        col[self.j] = self.omega_jj;
        for (k, &v) in self.omega_col.iter().enumerate() {
            col[full_index(k, self.j)] = v;
        }
        col
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionEstimate {
    pub omega_us: Matrix,
    pub omega_s: Matrix,
    pub columns: Vec<ColumnEstimate>,
    pub method: Method,
    pub gamma_diag: Vec<f64>,
    pub sigma_hat: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Standardized {
    pub z: Matrix,
    pub gamma_diag: Vec<f64>,
    pub sigma_hat: Matrix,
}

#[inline]
fn full_index(k: usize, j: usize) -> usize {
    if k < j {
        k
    } else {
        k + 1
    }
}

/// `Z = XΓ̂^{-1/2}` with `Γ̂ = diag(XᵀX/n)`.
pub fn standardize(x: &Matrix) -> Result<Standardized> {
    let sigma_hat = sample_covariance(x);
    let gamma_diag = sigma_hat.diag();
    if let Some(i) = gamma_diag.iter().position(|&g| !(g > DEGENERATE_FLOOR)) {
        return Err(Error::DegenerateColumn(i));
    }
    let scale: Vec<f64> = gamma_diag.iter().map(|g| 1.0 / g.sqrt()).collect();
    let z = Matrix::from_fn(x.rows(), x.cols(), |i, k| x[(i, k)] * scale[k]);
    Ok(Standardized {
        z,
        gamma_diag,
        sigma_hat,
    })
}

/// Shared read-only state for all column fits.
struct Workspace<'a> {
    x: &'a Matrix,
    z: &'a Matrix,
    gamma: &'a [f64],
    /// `ZᵀZ/n`, derived from `Σ̂`.
    corr: Matrix,
}

impl<'a> Workspace<'a> {
    fn new(x: &'a Matrix, z: &'a Matrix, gamma: &'a [f64], sigma_hat: &Matrix) -> Self {
        let p = gamma.len();
        let root: Vec<f64> = gamma.iter().map(|g| g.sqrt()).collect();
        let corr = Matrix::from_fn(p, p, |a, b| {
            if a == b {
                1.0
            } else {
                sigma_hat[(a, b)] / (root[a] * root[b])
            }
        });
        Self { x, z, gamma, corr }
    }

    fn n(&self) -> usize {
        self.x.rows()
    }

    fn p(&self) -> usize {
        self.x.cols()
    }

    fn system(&self, j: usize) -> GramSystem<'_> {
        let map: Vec<usize> = (0..self.p()).filter(|&k| k != j).collect();
        let root_jj = self.gamma[j].sqrt();
        let corr = map.iter().map(|&k| self.corr[(k, j)] * root_jj).collect();
        GramSystem::new(&self.corr, map, corr, self.gamma[j])
    }

    /// `‖X_j − Σ_k Z_{map(k)} β_k‖²/n` over the nonzero predictors.
    fn residual_loss(&self, j: usize, beta: &[f64]) -> f64 {
        let terms: Vec<(usize, f64)> = beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(k, &b)| (full_index(k, j), b))
            .collect();
        let rss: f64 = (0..self.n())
            .map(|i| {
                let fit: f64 = terms.iter().map(|&(c, b)| self.z[(i, c)] * b).sum();
                let r = self.x[(i, j)] - fit;
                r * r
            })
            .sum();
        rss / self.n() as f64
    }

    /// `‖X_j − X_{\j}α‖²/n`.
    fn raw_residual_variance(&self, j: usize, alpha: &[f64]) -> f64 {
        let terms: Vec<(usize, f64)> = alpha
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(k, &a)| (full_index(k, j), a))
            .collect();
        let rss: f64 = (0..self.n())
            .map(|i| {
                let fit: f64 = terms.iter().map(|&(c, a)| self.x[(i, c)] * a).sum();
                let r = self.x[(i, j)] - fit;
                r * r
            })
            .sum();
        rss / self.n() as f64
    }

    fn hbic_from_loss(&self, loss: f64, size: usize) -> f64 {
        let n = self.n() as f64;
        let p = self.p() as f64;
        n * loss.max(LOSS_FLOOR).ln() + size as f64 * (p - 1.0).ln() * n.ln().ln()
    }

    /// Maps standardized coefficients to a finished column estimate.
    fn finish(
        &self,
        j: usize,
        beta: Vec<f64>,
        sigma2_raw: f64,
        chosen: Tuning,
        hbic_value: f64,
        trace: Vec<HbicPoint>,
        mut diagnostics: Vec<ColumnDiagnostic>,
    ) -> ColumnEstimate {
        let alpha: Vec<f64> = beta
            .iter()
            .enumerate()
            .map(|(k, &b)| b / self.gamma[full_index(k, j)].sqrt())
            .collect();
        let floor = VARIANCE_FLOOR_REL * self.gamma[j];
        let sigma2 = if sigma2_raw < floor || !sigma2_raw.is_finite() {
            diagnostics.push(ColumnDiagnostic::DegenerateVariance {
                raw: sigma2_raw,
                floor,
            });
            floor
        } else {
            sigma2_raw
        };
        let omega_jj = 1.0 / sigma2;
        let omega_col = alpha.iter().map(|&a| -omega_jj * a).collect();
        let active = beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(k, _)| full_index(k, j))
            .collect();
        ColumnEstimate {
            j,
            beta,
            alpha,
            active,
            sigma2,
            omega_jj,
            omega_col,
            chosen,
            hbic_value,
            trace,
            diagnostics,
        }
    }

    /// SDAR coefficients at one support size (zero for `t = 0`).
    fn loreg_candidate(
        &self,
        sys: &GramSystem<'_>,
        t: usize,
        max_iter: usize,
        diagnostics: &mut Vec<ColumnDiagnostic>,
    ) -> Result<Vec<f64>> {
        if t == 0 {
            return Ok(vec![0.0; self.p() - 1]);
        }
        let res = sdar_gram(sys, &SdarConfig::new(t).with_max_iter(max_iter))?;
        if !res.converged {
            diagnostics.push(ColumnDiagnostic::NotConverged {
                tuning: Tuning::SupportSize(t),
            });
        }
        Ok(res.beta)
    }

    fn loreg_select(&self, j: usize, t_max: usize, max_iter: usize) -> Result<ColumnEstimate> {
        let sys = self.system(j);
        let mut diagnostics = Vec::new();
        let mut trace = Vec::with_capacity(t_max + 1);
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for t in 0..=t_max {
            let beta = match self.loreg_candidate(&sys, t, max_iter, &mut diagnostics) {
                Ok(b) => b,
                Err(e) => {
                    diagnostics.push(ColumnDiagnostic::CandidateFailed {
                        tuning: Tuning::SupportSize(t),
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let hbic = self.hbic_from_loss(self.residual_loss(j, &beta), t);
            trace.push(HbicPoint {
                tuning: Tuning::SupportSize(t),
                active_size: t,
                hbic,
            });
            // equal HBIC means the same support; the smaller penalty shrinks it less
                    if hbic.is_finite() && best.as_ref().is_none_or(|(_, h, _)| hbic <= *h) {
                best = Some((t, hbic, beta));
            }
        }
        let (t, hbic, beta) = best.ok_or(Error::AllCandidatesFailed { column: j })?;
        let sigma2 = self.loreg_sigma2(j, &beta);
        Ok(self.finish(j, beta, sigma2, Tuning::SupportSize(t), hbic, trace, diagnostics))
    }

    fn loreg_fixed(&self, j: usize, t: usize, max_iter: usize) -> Result<ColumnEstimate> {
        let sys = self.system(j);
        let mut diagnostics = Vec::new();
        let beta = self.loreg_candidate(&sys, t, max_iter, &mut diagnostics)?;
        let hbic = self.hbic_from_loss(self.residual_loss(j, &beta), t);
        let trace = vec![HbicPoint {
            tuning: Tuning::SupportSize(t),
            active_size: t,
            hbic,
        }];
        let sigma2 = self.loreg_sigma2(j, &beta);
        Ok(self.finish(j, beta, sigma2, Tuning::SupportSize(t), hbic, trace, diagnostics))
    }

    fn loreg_sigma2(&self, j: usize, beta: &[f64]) -> f64 {
        let alpha: Vec<f64> = beta
            .iter()
            .enumerate()
            .map(|(k, &b)| b / self.gamma[full_index(k, j)].sqrt())
            .collect();
        self.raw_residual_variance(j, &alpha)
    }

    fn lasso_select(&self, j: usize, tuning: &TuningSpec) -> Result<ColumnEstimate> {
        let sys = self.system(j);
        let mut diagnostics = Vec::new();
        let mut trace = Vec::with_capacity(tuning.lambda_grid.len());
        let mut best: Option<(f64, f64, Vec<f64>)> = None;
        let mut warm: Option<Vec<f64>> = None;
        for &lambda in &tuning.lambda_grid {
            let cfg = LassoConfig {
                lambda,
                tol: tuning.lasso_tol,
                max_sweeps: tuning.lasso_max_sweeps,
            };
            let fit = lasso_gram(&sys, &cfg, warm.as_deref());
            if !fit.converged {
                diagnostics.push(ColumnDiagnostic::NotConverged {
                    tuning: Tuning::Penalty(lambda),
                });
            }
            let support: Vec<usize> = (0..fit.coef.len()).filter(|&k| fit.coef[k] != 0.0).collect();
            match sys.restricted_ols(&support) {
                Ok(ols) => {
                    let mut refit = vec![0.0; fit.coef.len()];
                    for (&k, &b) in support.iter().zip(&ols) {
                        refit[k] = b;
                    }
                    let hbic = self.hbic_from_loss(self.residual_loss(j, &refit), support.len());
                    trace.push(HbicPoint {
                        tuning: Tuning::Penalty(lambda),
                        active_size: support.len(),
                        hbic,
                    });
                    // equal HBIC means the same support; the smaller penalty shrinks it less
                    if hbic.is_finite() && best.as_ref().is_none_or(|(_, h, _)| hbic <= *h) {
                        best = Some((lambda, hbic, fit.coef.clone()));
                    }
                }
                Err(e) => diagnostics.push(ColumnDiagnostic::CandidateFailed {
                    tuning: Tuning::Penalty(lambda),
                    reason: e.to_string(),
                }),
            }
            warm = Some(fit.coef);
        }
        let (lambda, hbic, beta) = best.ok_or(Error::AllCandidatesFailed { column: j })?;
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        let sigma2 = self.residual_loss(j, &beta) + lambda * l1;
        Ok(self.finish(j, beta, sigma2, Tuning::Penalty(lambda), hbic, trace, diagnostics))
    }

    fn empty_column(&self, j: usize, reason: String) -> ColumnEstimate {
        let beta = vec![0.0; self.p() - 1];
        let loss = self.residual_loss(j, &beta);
        let hbic = self.hbic_from_loss(loss, 0);
        let trace = vec![HbicPoint {
            tuning: Tuning::SupportSize(0),
            active_size: 0,
            hbic,
        }];
        let diagnostics = vec![ColumnDiagnostic::FellBackToEmpty { reason }];
        self.finish(j, beta, loss, Tuning::SupportSize(0), hbic, trace, diagnostics)
    }

    fn fit(&self, j: usize, method: Method, tuning: &TuningSpec) -> ColumnEstimate {
        let res = match (method, tuning.fixed_t) {
            (Method::Loreg, Some(t)) => self.loreg_fixed(j, t, tuning.max_iter),
            (Method::Loreg, None) => {
                self.loreg_select(j, tuning.t_max.resolve(self.n(), self.p()), tuning.max_iter)
            }
            (Method::Lasso, _) => self.lasso_select(j, tuning),
        };
        res.unwrap_or_else(|e| {
            log::warn!("column {j}: {e}; using the empty support");
            self.empty_column(j, e.to_string())
        })
    }
}

fn check_shape(x: &Matrix) -> Result<()> {
    if x.rows() < 3 {
        return Err(Error::InvalidConfig(format!(
            "at least 3 observations are required, got {}",
            x.rows()
        )));
    }
    if x.cols() < 2 {
        return Err(Error::InvalidConfig(format!(
            "at least 2 variables are required, got {}",
            x.cols()
        )));
    }
    Ok(())
}

fn check_column(j: usize, p: usize) -> Result<()> {
    if j >= p {
        return Err(Error::DimensionMismatch(format!("column {j} out of range for p = {p}")));
    }
    Ok(())
}

/// HBIC of the exact least-squares fit of `X_j` on `Z_A`.
pub fn hbic(active: &IndexSet, j: usize, x: &Matrix, z: &Matrix) -> Result<f64> {
    check_shape(x)?;
    check_column(j, x.cols())?;
    if x.rows() != z.rows() || x.cols() != z.cols() {
        return Err(Error::DimensionMismatch("X and Z differ in shape".into()));
    }
    if active.contains(j) {
        return Err(Error::InvalidConfig(format!("active set contains the response column {j}")));
    }
    if active.max_index().is_some_and(|m| m >= x.cols()) {
        return Err(Error::DimensionMismatch("active index out of range".into()));
    }
    let (n, p) = (x.rows(), x.cols());
    let idx = active.as_slice();
    let a = idx.len();
    let gram = Matrix::from_fn(a, a, |r, c| (0..n).map(|i| z[(i, idx[r])] * z[(i, idx[c])]).sum());
    let rhs = Matrix::from_fn(a, 1, |r, _| (0..n).map(|i| z[(i, idx[r])] * x[(i, j)]).sum());
    let coef = if a == 0 {
        Vec::new()
    } else {
        crate::linalg::Cholesky::factor_unchecked(&gram)
            .map_err(|_| Error::SingularActiveGram { size: a })?
            .solve(&rhs)?
            .into_data()
    };
    let rss: f64 = (0..n)
        .map(|i| {
            let fit: f64 = idx.iter().zip(&coef).map(|(&k, &b)| z[(i, k)] * b).sum();
            let r = x[(i, j)] - fit;
            r * r
        })
        .sum();
    let (nf, pf) = (n as f64, p as f64);
    Ok(nf * (rss / nf).max(LOSS_FLOOR).ln() + a as f64 * (pf - 1.0).ln() * nf.ln().ln())
}

/// HBIC-selected support size for column `j` with its trace.
pub fn select_t(
    j: usize,
    x: &Matrix,
    z: &Matrix,
    t_max: usize,
    max_iter: usize,
) -> Result<(usize, Vec<(usize, f64)>)> {
    check_shape(x)?;
    check_column(j, x.cols())?;
    if t_max > x.cols() - 1 {
        return Err(Error::InvalidConfig(format!("t_max = {t_max} exceeds p - 1")));
    }
    let gamma = sample_covariance(x);
    let g = gamma.diag();
    let ws = Workspace::new(x, z, &g, &gamma);
    let col = ws.loreg_select(j, t_max, max_iter)?;
    let trace = col
        .trace
        .iter()
        .filter_map(|h| match h.tuning {
            Tuning::SupportSize(t) => Some((t, h.hbic)),
            Tuning::Penalty(_) => None,
        })
        .collect();
    let Tuning::SupportSize(t) = col.chosen else {
        unreachable!("loreg selection yields a support size")
    };
    Ok((t, trace))
}

/// Column `j` of the Loreg estimate at a fixed support size.
pub fn fit_column_loreg(
    j: usize,
    x: &Matrix,
    z: &Matrix,
    gamma_diag: &[f64],
    t: usize,
    max_iter: usize,
) -> Result<ColumnEstimate> {
    check_shape(x)?;
    check_column(j, x.cols())?;
    if gamma_diag.len() != x.cols() || z.rows() != x.rows() || z.cols() != x.cols() {
        return Err(Error::DimensionMismatch("X, Z and gamma_diag disagree".into()));
    }
    if t > x.cols() - 1 {
        return Err(Error::InvalidConfig(format!("t = {t} exceeds p - 1")));
    }
    let sigma_hat = sample_covariance(x);
    let ws = Workspace::new(x, z, gamma_diag, &sigma_hat);
    ws.loreg_fixed(j, t, max_iter)
}

/// Minimum-magnitude symmetrization. On exact magnitude ties the entry above the diagonal wins.
pub fn symmetrize(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("symmetrize needs a square matrix".into()));
    }
    let mut s = m.clone();
    for i in 0..m.rows() {
        for j in i + 1..m.cols() {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            let v = if a.abs() <= b.abs() { a } else { b };
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(s)
}

/// Runs `f` on a pool of `workers` threads (inline when one worker suffices).
pub(crate) fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers <= 1 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("could not start a worker pool ({e}); running inline");
            f()
        }
    }
}

/// Full nodewise estimate of `Ω` from centered data `X`.
pub fn estimate(x: &Matrix, method: Method, tuning: &TuningSpec, workers: usize) -> Result<PrecisionEstimate> {
    check_shape(x)?;
    tuning.validate(method, x.cols())?;
    let Standardized {
        z,
        gamma_diag,
        sigma_hat,
    } = standardize(x)?;
    let ws = Workspace::new(x, &z, &gamma_diag, &sigma_hat);
    let p = x.cols();
    let columns: Vec<ColumnEstimate> = with_pool(workers, || {
        if workers <= 1 {
            (0..p).map(|j| ws.fit(j, method, tuning)).collect()
        } else {
            (0..p).into_par_iter().map(|j| ws.fit(j, method, tuning)).collect()
        }
    });
    let mut omega_us = Matrix::zeros(p, p);
    for col in &columns {
        for (i, v) in col.full_column().into_iter().enumerate() {
            omega_us[(i, col.j)] = v;
        }
    }
    let omega_s = symmetrize(&omega_us)?;
    Ok(PrecisionEstimate {
        omega_us,
        omega_s,
        columns,
        method,
        gamma_diag,
        sigma_hat,
    })
}

/// Rebuilds `Ω` from `Σ` one column at a time by population nodewise regression.
pub fn population_columns(sigma: &Matrix) -> Result<Matrix> {
    if !sigma.is_square() || sigma.rows() < 2 {
        return Err(Error::DimensionMismatch("need a square matrix with p >= 2".into()));
    }
    let p = sigma.rows();
    let mut omega = Matrix::zeros(p, p);
    for j in 0..p {
        let rest: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        let inv = spd_inverse(&sigma.principal_submatrix(&rest))?;
        let s: Vec<f64> = rest.iter().map(|&k| sigma[(k, j)]).collect();
        let alpha = inv.matvec(&s)?;
        let cond = sigma[(j, j)] - crate::linalg::dot(&s, &alpha);
        if !(cond > 0.0) {
            return Err(Error::NonPositiveVariance(cond));
        }
        let omega_jj = 1.0 / cond;
        omega[(j, j)] = omega_jj;
        for (&k, &a) in rest.iter().zip(&alpha) {
            omega[(k, j)] = -omega_jj * a;
        }
    }
    Ok(omega)
}
