//! Cyclic coordinate descent for `‖y − Zα‖²/n + 2λ‖α‖₁`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sdar::GramSystem;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub lambda: f64,
    /// Convergence threshold on the largest coefficient change in a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl LassoConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            tol: DEFAULT_TOL,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tol must be > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub coef: Vec<f64>,
    pub sweeps: usize,
    /// False when `max_sweeps` ran out; `coef` is then the last iterate.
    pub converged: bool,
}

#[inline]
pub fn soft_threshold(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

/// `count` log-spaced penalties from `hi` down to `lo`.
pub fn lambda_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![hi],
        _ => {
            let (a, b) = (hi.ln(), lo.ln());
            (0..count)
                .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

/// The 20-point grid from 2 down to 0.02.
pub fn default_lambda_grid() -> Vec<f64> {
    lambda_grid(0.02, 2.0, 20)
}

pub(crate) fn lasso_gram(sys: &GramSystem<'_>, cfg: &LassoConfig, warm: Option<&[f64]>) -> LassoFit {
    let p = sys.dim();
    let lambda = cfg.lambda;
    let mut coef = warm.map_or_else(|| vec![0.0; p], <[f64]>::to_vec);
    // grad[k] = Z_kᵀ(y − Zα)/n
    let mut grad: Vec<f64> = (0..p)
        .map(|k| {
            sys.corr()[k]
                - (0..p)
                    .filter(|&l| coef[l] != 0.0)
                    .map(|l| sys.g(k, l) * coef[l])
                    .sum::<f64>()
        })
        .collect();

    for sweep in 1..=cfg.max_sweeps {
        let mut max_change = 0.0_f64;
        for k in 0..p {
            let gkk = sys.g(k, k);
            let updated = soft_threshold(grad[k] + gkk * coef[k], lambda) / gkk;
            let delta = updated - coef[k];
            if delta != 0.0 {
                coef[k] = updated;
                for (l, g) in grad.iter_mut().enumerate() {
                    *g -= sys.g(l, k) * delta;
                }
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < cfg.tol && kkt_violation_gram(&grad, &coef, lambda) <= cfg.tol {
            return LassoFit {
                coef,
                sweeps: sweep,
                converged: true,
            };
        }
    }
    log::warn!(
        "lasso coordinate descent hit max_sweeps = {} at lambda = {lambda}",
        cfg.max_sweeps
    );
    LassoFit {
        coef,
        sweeps: cfg.max_sweeps,
        converged: false,
    }
}

fn kkt_violation_gram(grad: &[f64], coef: &[f64], lambda: f64) -> f64 {
    grad.iter()
        .zip(coef)
        .map(|(&g, &a)| {
            if a != 0.0 {
                (g - lambda * a.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Largest violation of the subgradient optimality conditions, evaluated from `Z` and `y`.
pub fn lasso_kkt_violation(y: &[f64], z: &Matrix, coef: &[f64], lambda: f64) -> f64 {
    let n = z.rows() as f64;
    let resid: Vec<f64> = (0..z.rows())
        .map(|i| y[i] - crate::linalg::dot(z.row(i), coef))
        .collect();
    let grad: Vec<f64> = (0..z.cols())
        .map(|k| (0..z.rows()).map(|i| z[(i, k)] * resid[i]).sum::<f64>() / n)
        .collect();
    kkt_violation_gram(&grad, coef, lambda)
}

pub fn lasso_objective(y: &[f64], z: &Matrix, coef: &[f64], lambda: f64) -> f64 {
    let n = z.rows() as f64;
    let rss: f64 = (0..z.rows())
        .map(|i| {
            let r = y[i] - crate::linalg::dot(z.row(i), coef);
            r * r
        })
        .sum();
    rss / n + 2.0 * lambda * coef.iter().map(|c| c.abs()).sum::<f64>()
}

/// Solves the Lasso on a design with √n-normalized columns.
pub fn lasso_cd(y: &[f64], z: &Matrix, cfg: &LassoConfig) -> Result<LassoFit> {
    cfg.validate()?;
    if y.len() != z.rows() {
        return Err(Error::DimensionMismatch(format!(
            "response has length {}, design has {} rows",
            y.len(),
            z.rows()
        )));
    }
    let n = z.rows() as f64;
    let root_n = n.sqrt();
    for j in 0..z.cols() {
        let norm = (0..z.rows()).map(|i| z[(i, j)] * z[(i, j)]).sum::<f64>().sqrt();
        if (norm - root_n).abs() > 1e-6 * root_n {
            return Err(Error::NotNormalized { column: j, norm });
        }
    }
    let gram = crate::linalg::sample_covariance(z);
    let corr: Vec<f64> = (0..z.cols())
        .map(|k| (0..z.rows()).map(|i| z[(i, k)] * y[i]).sum::<f64>() / n)
        .collect();
    let yy = y.iter().map(|v| v * v).sum::<f64>() / n;
    let sys = GramSystem::new(&gram, (0..z.cols()).collect(), corr, yy);
    Ok(lasso_gram(&sys, cfg, None))
}

/// Residual variance `‖y − Zα‖²/n + λ‖α‖₁` of a Lasso fit.
pub fn lasso_sigma2(y: &[f64], z: &Matrix, alpha: &[f64], lambda: f64) -> Result<f64> {
    if y.len() != z.rows() || alpha.len() != z.cols() {
        return Err(Error::DimensionMismatch("lasso_sigma2 operands".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    let n = z.rows() as f64;
    let rss: f64 = (0..z.rows())
        .map(|i| {
            let r = y[i] - crate::linalg::dot(z.row(i), alpha);
            r * r
        })
        .sum();
    let s = rss / n + lambda * alpha.iter().map(|a| a.abs()).sum::<f64>();
    if s <= 1e-12 {
        return Err(Error::NonPositiveVariance(s));
    }
    Ok(s)
}
