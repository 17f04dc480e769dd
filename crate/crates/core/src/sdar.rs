//! Support detection and root finding (SDAR) for size-constrained least squares.
//!
//! SDAR approximates `min ‖y − Zβ‖²/n  s.t. ‖β‖₀ ≤ T` by alternating between
//! a primal refit on the current active set and a dual (gradient) update,
//! then re-selecting the `T` coordinates with the largest `|β + d|`.
//!
//! The solver works entirely from the moments `ZᵀZ/n`, `Zᵀy/n` and `yᵀy/n`,
//! so nodewise regression can reuse one correlation matrix for all columns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, IndexSet, Matrix};

pub const DEFAULT_MAX_ITER: usize = 50;

/// Relative tolerance on the √n column-norm precondition.
const NORM_RTOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SdarConfig {
    /// Active-set size `T`.
    pub t: usize,
    pub max_iter: usize,
}

impl SdarConfig {
    pub fn new(t: usize) -> Self {
        Self {
            t,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    fn validate(&self, p_pred: usize) -> Result<()> {
        if self.t == 0 || self.t > p_pred {
            return Err(Error::InvalidConfig(format!(
                "SDAR needs 1 <= T <= {p_pred}, got T = {}",
                self.t
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdarResult {
    pub beta: Vec<f64>,
    pub active: IndexSet,
    /// Dual vector `d` at termination (zero on the active set).
    pub dual: Vec<f64>,
    /// Number of least-squares refits performed.
    pub iterations: usize,
    /// True when the active set reproduced itself.
    pub converged: bool,
}

/// Least-squares moments `G = ZᵀZ/n`, `c = Zᵀy/n`, `yy = yᵀy/n`.
///
/// `G` may be a larger matrix addressed through `map`: predictor `k`
/// corresponds to row/column `map[k]` of `gram`.
pub(crate) struct GramSystem<'a> {
    gram: &'a Matrix,
    map: Vec<usize>,
    corr: Vec<f64>,
    yy: f64,
}

impl<'a> GramSystem<'a> {
    pub(crate) fn new(gram: &'a Matrix, map: Vec<usize>, corr: Vec<f64>, yy: f64) -> Self {
        debug_assert_eq!(map.len(), corr.len());
        Self {
            gram,
            map,
            corr,
            yy,
        }
    }

    #[inline]
    pub(crate) fn dim(&self) -> usize {
        self.map.len()
    }

    #[inline]
    pub(crate) fn g(&self, a: usize, b: usize) -> f64 {
        self.gram[(self.map[a], self.map[b])]
    }

    pub(crate) fn corr(&self) -> &[f64] {
        &self.corr
    }

    /// OLS coefficients restricted to `active` (in predictor coordinates).
    pub(crate) fn restricted_ols(&self, active: &[usize]) -> Result<Vec<f64>> {
        if active.is_empty() {
            return Ok(Vec::new());
        }
        let sub = Matrix::from_fn(active.len(), active.len(), |a, b| {
            self.g(active[a], active[b])
        });
        let chol = Cholesky::factor_unchecked(&sub).map_err(|_| Error::SingularActiveGram {
            size: active.len(),
        })?;
        let rhs: Vec<f64> = active.iter().map(|&k| self.corr[k]).collect();
        Ok(chol.solve_vec(&rhs))
    }

    /// `‖y − Z_A β_A‖² / n` for the OLS β on `active`.
    pub(crate) fn restricted_loss(&self, active: &[usize], beta_a: &[f64]) -> f64 {
        let fitted: f64 = active
            .iter()
            .zip(beta_a)
            .map(|(&k, &b)| self.corr[k] * b)
            .sum();
        self.yy - fitted
    }
}

/// Indices of the `t` largest entries of `|v|`, ties going to the lower index.
pub fn top_t(v: &[f64], t: usize) -> IndexSet {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    order.truncate(t);
    IndexSet::from_unsorted(order)
}

struct Iterate {
    beta: Vec<f64>,
    dual: Vec<f64>,
    active: IndexSet,
    rss: f64,
}

/// One refit on `active`: returns `β` (OLS on `active`), `d`, and the next active set.
fn step(sys: &GramSystem<'_>, active: &IndexSet, t: usize) -> Result<(Iterate, IndexSet)> {
    let p = sys.dim();
    let idx = active.as_slice();
    let beta_a = sys.restricted_ols(idx)?;
    let mut beta = vec![0.0; p];
    for (&k, &b) in idx.iter().zip(&beta_a) {
        beta[k] = b;
    }
    let mut dual = vec![0.0; p];
    for (i, d) in dual.iter_mut().enumerate() {
        if active.contains(i) {
            continue;
        }
        let fitted: f64 = idx.iter().zip(&beta_a).map(|(&k, &b)| sys.g(i, k) * b).sum();
        *d = sys.corr()[i] - fitted;
    }
    let score: Vec<f64> = beta.iter().zip(&dual).map(|(b, d)| b + d).collect();
    let next = top_t(&score, t);
    let rss = sys.restricted_loss(idx, &beta_a);
    Ok((
        Iterate {
            beta,
            dual,
            active: active.clone(),
            rss,
        },
        next,
    ))
}

pub(crate) fn sdar_gram(sys: &GramSystem<'_>, cfg: &SdarConfig) -> Result<SdarResult> {
    cfg.validate(sys.dim())?;
    // β⁰ = 0 so β⁰ + d⁰ = Zᵀy/n
    let mut active = top_t(sys.corr(), cfg.t);
    let mut history: Vec<Iterate> = Vec::new();

    for k in 0..cfg.max_iter {
        let (iterate, next) = step(sys, &active, cfg.t)?;
        if next == active {
            return Ok(finish(iterate, k + 1, true));
        }
        let cycled = history.iter().any(|h| h.active == next);
        history.push(iterate);
        if cycled {
            log::debug!("SDAR revisited an active set after {} refits", k + 1);
            let best = history
                .into_iter()
                .reduce(|best, it| if it.rss < best.rss { it } else { best })
                .expect("history is non-empty");
            return Ok(finish(best, k + 1, false));
        }
        active = next;
    }
    let last = history.pop().expect("max_iter >= 1");
    Ok(finish(last, cfg.max_iter, false))
}

fn finish(it: Iterate, iterations: usize, converged: bool) -> SdarResult {
    SdarResult {
        beta: it.beta,
        active: it.active,
        dual: it.dual,
        iterations,
        converged,
    }
}

fn check_design(y: &[f64], z: &Matrix) -> Result<()> {
    if y.len() != z.rows() {
        return Err(Error::DimensionMismatch(format!(
            "response has length {}, design has {} rows",
            y.len(),
            z.rows()
        )));
    }
    let root_n = (z.rows() as f64).sqrt();
    for j in 0..z.cols() {
        let norm = (0..z.rows()).map(|i| z[(i, j)] * z[(i, j)]).sum::<f64>().sqrt();
        if (norm - root_n).abs() > NORM_RTOL * root_n {
            return Err(Error::NotNormalized { column: j, norm });
        }
    }
    Ok(())
}

fn moments(y: &[f64], z: &Matrix) -> (Matrix, Vec<f64>, f64) {
    let n = z.rows() as f64;
    let gram = crate::linalg::sample_covariance(z);
    let mut corr = vec![0.0; z.cols()];
    for (i, &yi) in y.iter().enumerate() {
        for (c, &zij) in corr.iter_mut().zip(z.row(i)) {
            *c += zij * yi;
        }
    }
    corr.iter_mut().for_each(|c| *c /= n);
    let yy = y.iter().map(|v| v * v).sum::<f64>() / n;
    (gram, corr, yy)
}

/// Runs SDAR on response `y` and a design `Z` whose columns have norm √n.
pub fn sdar_fit(y: &[f64], z: &Matrix, cfg: &SdarConfig) -> Result<SdarResult> {
    check_design(y, z)?;
    cfg.validate(z.cols())?;
    let (gram, corr, yy) = moments(y, z);
    let sys = GramSystem::new(&gram, (0..z.cols()).collect(), corr, yy);
    sdar_gram(&sys, cfg)
}

/// One refit from a given active set, as in the body of the SDAR loop.
#[derive(Clone, Debug, PartialEq)]
pub struct SdarStep {
    pub beta: Vec<f64>,
    pub dual: Vec<f64>,
    pub next_active: IndexSet,
}

pub fn sdar_step(y: &[f64], z: &Matrix, active: &IndexSet) -> Result<SdarStep> {
    if y.len() != z.rows() {
        return Err(Error::DimensionMismatch("response/design row count".into()));
    }
    let (gram, corr, yy) = moments(y, z);
    let sys = GramSystem::new(&gram, (0..z.cols()).collect(), corr, yy);
    let (it, next_active) = step(&sys, active, active.len())?;
    Ok(SdarStep {
        beta: it.beta,
        dual: it.dual,
        next_active,
    })
}

/// Largest violation of the SDAR fixed-point (KKT) conditions.
///
/// Computed straight from `Z` and `y`: the refit error on the active set,
/// the mismatch of the stored dual off the active set, and `+∞` when the
/// active set is not the top-`T` set of `|β + d|`.
pub fn kkt_residual(r: &SdarResult, y: &[f64], z: &Matrix) -> Result<f64> {
    let (n, p) = (z.rows(), z.cols());
    if y.len() != n || r.beta.len() != p || r.dual.len() != p {
        return Err(Error::DimensionMismatch("SDAR result does not match design".into()));
    }
    let act = r.active.as_slice();
    let nf = n as f64;

    let ztz = Matrix::from_fn(act.len(), act.len(), |a, b| {
        (0..n).map(|i| z[(i, act[a])] * z[(i, act[b])]).sum()
    });
    let zty: Vec<f64> = act
        .iter()
        .map(|&k| (0..n).map(|i| z[(i, k)] * y[i]).sum())
        .collect();
    let ols = if act.is_empty() {
        Vec::new()
    } else {
        Cholesky::factor_unchecked(&ztz)
            .map_err(|_| Error::SingularActiveGram { size: act.len() })?
            .solve_vec(&zty)
    };
    let refit = act
        .iter()
        .zip(&ols)
        .map(|(&k, o)| (r.beta[k] - o).abs())
        .fold(0.0, f64::max);

    let resid: Vec<f64> = (0..n)
        .map(|i| y[i] - act.iter().map(|&k| z[(i, k)] * r.beta[k]).sum::<f64>())
        .collect();
    let dual = (0..p)
        .filter(|&k| !r.active.contains(k))
        .map(|k| {
            let g = (0..n).map(|i| z[(i, k)] * resid[i]).sum::<f64>() / nf;
            (r.dual[k] - g).abs()
        })
        .fold(0.0, f64::max);

    let score: Vec<f64> = r.beta.iter().zip(&r.dual).map(|(b, d)| b + d).collect();
    let selection = if top_t(&score, act.len()) == r.active {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(refit.max(dual).max(selection))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Columns rescaled to norm √n.
    fn normalize(mut z: Matrix) -> Matrix {
        let n = z.rows();
        for j in 0..z.cols() {
            let norm = (0..n).map(|i| z[(i, j)] * z[(i, j)]).sum::<f64>().sqrt();
            let s = (n as f64).sqrt() / norm;
            for i in 0..n {
                z[(i, j)] *= s;
            }
        }
        z
    }

    fn random_design(n: usize, p: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        normalize(Matrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0)))
    }

    /// Hadamard-like ±1 design with ZᵀZ/n = I.
    fn orthogonal_design(n: usize, p: usize) -> Matrix {
        Matrix::from_fn(n, p, |i, j| {
            if (i & (j + 1)).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        })
    }

    #[test]
    fn orthogonal_design_is_orthogonal() {
        let z = orthogonal_design(8, 3);
        let g = crate::linalg::sample_covariance(&z);
        assert_eq!(g, Matrix::identity(3));
    }

    #[test]
    fn zero_response() {
        let z = random_design(10, 5, 1);
        let r = sdar_fit(&[0.0; 10], &z, &SdarConfig::new(2)).unwrap();
        assert_eq!(r.beta, vec![0.0; 5]);
        assert_eq!(r.active.as_slice(), &[0, 1]);
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn orthogonal_single_signal() {
        let z = orthogonal_design(8, 3);
        let y: Vec<f64> = z.column(0).iter().map(|v| 3.0 * v).collect();
        let r = sdar_fit(&y, &z, &SdarConfig::new(1)).unwrap();
        assert_eq!(r.active.as_slice(), &[0]);
        assert!((r.beta[0] - 3.0).abs() < 1e-14);
        assert_eq!(&r.beta[1..], &[0.0, 0.0]);
        assert!(r.converged);
    }

    #[test]
    fn random_design_matches_independent_ols() {
        let z = random_design(8, 3, 42);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let r = sdar_fit(&y, &z, &SdarConfig::new(2)).unwrap();
        assert!(kkt_residual(&r, &y, &z).unwrap() <= 1e-10);

        // normal equations on the returned support, solved by Cramer's rule
        let a = r.active.as_slice();
        let g = |u: usize, v: usize| (0..8).map(|i| z[(i, u)] * z[(i, v)]).sum::<f64>();
        let h = |u: usize| (0..8).map(|i| z[(i, u)] * y[i]).sum::<f64>();
        let (g00, g01, g11) = (g(a[0], a[0]), g(a[0], a[1]), g(a[1], a[1]));
        let det = g00 * g11 - g01 * g01;
        let b0 = (h(a[0]) * g11 - g01 * h(a[1])) / det;
        let b1 = (g00 * h(a[1]) - g01 * h(a[0])) / det;
        assert!((r.beta[a[0]] - b0).abs() < 1e-10);
        assert!((r.beta[a[1]] - b1).abs() < 1e-10);
    }

    #[test]
    fn kkt_detects_perturbation_and_swaps() {
        let z = random_design(30, 6, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let y: Vec<f64> = (0..30)
            .map(|i| 2.0 * z[(i, 1)] - 1.5 * z[(i, 4)] + 0.1 * rng.random_range(-1.0..1.0))
            .collect();
        let r = sdar_fit(&y, &z, &SdarConfig::new(2)).unwrap();
        assert!(r.converged);
        assert!(kkt_residual(&r, &y, &z).unwrap() <= 1e-8);

        let mut bumped = r.clone();
        let k = r.active.as_slice()[0];
        bumped.beta[k] += bumped.beta[k].signum();
        assert!(kkt_residual(&bumped, &y, &z).unwrap() >= 1.0 - 1e-8);

        // swap an active index for the inactive one with the smallest |β + d|
        let score: Vec<f64> = r.beta.iter().zip(&r.dual).map(|(b, d)| (b + d).abs()).collect();
        let weakest = (0..6)
            .filter(|&i| !r.active.contains(i))
            .min_by(|&a, &b| score[a].total_cmp(&score[b]))
            .unwrap();
        let mut swapped = r.clone();
        swapped.active = IndexSet::from_unsorted(vec![r.active.as_slice()[1], weakest]);
        assert_eq!(kkt_residual(&swapped, &y, &z).unwrap(), f64::INFINITY);
    }

    #[test]
    fn config_and_precondition_errors() {
        let z = random_design(10, 3, 1);
        let y = [1.0; 10];
        assert!(matches!(
            sdar_fit(&y, &z, &SdarConfig::new(0)),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            sdar_fit(&y, &z, &SdarConfig::new(4)),
            Err(Error::InvalidConfig(_))
        ));
        let raw = Matrix::from_fn(10, 3, |i, j| (i + j) as f64);
        assert!(matches!(
            sdar_fit(&y, &raw, &SdarConfig::new(1)),
            Err(Error::NotNormalized { column: 0, .. })
        ));
        assert!(matches!(
            sdar_fit(&y[..5], &z, &SdarConfig::new(1)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn collinear_active_set_is_singular() {
        // two identical columns forced into the active set
        let base = random_design(12, 1, 2);
        let z = Matrix::from_fn(12, 3, |i, j| if j < 2 { base[(i, 0)] } else { base[(i, 0)] * if i % 2 == 0 { 1.0 } else { -1.0 } });
        let z = normalize(z);
        let y = z.column(0);
        assert!(matches!(
            sdar_fit(&y, &z, &SdarConfig::new(2)),
            Err(Error::SingularActiveGram { size: 2 })
        ));
    }

    #[test]
    fn deterministic_output() {
        let z = random_design(40, 10, 77);
        let y: Vec<f64> = (0..40).map(|i| z[(i, 3)] + 0.3 * z[(i, 7)] + (i as f64 * 0.37).sin()).collect();
        let a = sdar_fit(&y, &z, &SdarConfig::new(3)).unwrap();
        let b = sdar_fit(&y, &z, &SdarConfig::new(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn top_t_breaks_ties_toward_lower_index() {
        assert_eq!(top_t(&[1.0, -2.0, 2.0, 0.5], 2).as_slice(), &[1, 2]);
        assert_eq!(top_t(&[1.0, 1.0, 1.0], 2).as_slice(), &[0, 1]);
        assert_eq!(top_t(&[0.0, 3.0, -3.0], 1).as_slice(), &[1]);
    }
}
