//! Dense linear-algebra kernels.
//!
//! Everything here works on small-to-moderate dense matrices (p in the low
//! hundreds). Factorizations and the Jacobi eigensolver are O(p³); nothing
//! is sparse and nothing is parallel.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry precondition of the SPD kernels.
const SYMMETRY_RTOL: f64 = 1e-10;
/// Cholesky pivots at or below this fraction of the largest diagonal entry fail.
const PIVOT_FLOOR: f64 = 1e-12;
/// Jacobi stops once the off-diagonal Frobenius norm falls below this fraction of ‖M‖_F.
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense real matrix stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting wrong lengths and non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// Square submatrix indexed by `idx` on both axes.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Matrix {
        Matrix::from_fn(idx.len(), idx.len(), |a, b| self[(idx[a], idx[b])])
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn l1_norm(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, rtol: f64) -> bool {
        self.first_asymmetry(rtol).is_none()
    }

    fn first_asymmetry(&self, rtol: f64) -> Option<(usize, usize)> {
        if !self.is_square() {
            return Some((0, 0));
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self[(i, j)] - self[(j, i)]).abs() > rtol * scale {
                    return Some((i, j));
                }
            }
        }
        None
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Strictly increasing set of 0-based indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// Sorts and deduplicates.
    pub fn from_unsorted(mut v: Vec<usize>) -> Self {
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    pub fn range(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    /// Position of `i` within the sorted set.
    pub fn position(&self, i: usize) -> Option<usize> {
        self.0.binary_search(&i).ok()
    }

    /// The set with `i` inserted.
    pub fn with(&self, i: usize) -> IndexSet {
        let mut v = self.0.clone();
        if let Err(pos) = v.binary_search(&i) {
            v.insert(pos, i);
        }
        IndexSet(v)
    }

    pub fn is_subset_of(&self, other: &IndexSet) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    pub fn max_index(&self) -> Option<usize> {
        self.0.last().copied()
    }
}

impl FromIterator<usize> for IndexSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self::from_unsorted(iter.into_iter().collect())
    }
}

/// Lower Cholesky factor of an SPD matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(m: &Matrix) -> Result<Self> {
        require_square(m)?;
        if let Some((row, col)) = m.first_asymmetry(SYMMETRY_RTOL) {
            return Err(Error::NotSymmetric { row, col });
        }
        Self::factor_unchecked(m)
    }

    /// Factorizes assuming `m` is square and symmetric; only the lower triangle is read.
    pub(crate) fn factor_unchecked(m: &Matrix) -> Result<Self> {
        let n = m.rows;
        let max_diag = (0..n).fold(0.0_f64, |acc, i| acc.max(m[(i, i)]));
        let floor = PIVOT_FLOOR * max_diag;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let lj = l.row(j)[..j].to_vec();
            let pivot = m[(j, j)] - dot(&lj, &lj);
            if !(pivot > floor) || pivot <= 0.0 {
                return Err(Error::NotPositiveDefinite { index: j, pivot });
            }
            let d = pivot.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let s = m[(i, j)] - dot(&l.row(i)[..j], &lj);
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn lower(&self) -> &Matrix {
        &self.l
    }

    pub fn into_lower(self) -> Matrix {
        self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    /// Solves M x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.l.rows;
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let s = b[i] - dot(&self.l.row(i)[..i], &b[..i]);
            b[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * b[k];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        if b.rows != self.l.rows {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has {} rows, system has {}",
                b.rows, self.l.rows
            )));
        }
        let mut out = Matrix::zeros(b.rows, b.cols);
        for j in 0..b.cols {
            let x = self.solve_vec(&b.column(j));
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.l.rows;
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            self.solve_in_place(&mut e);
            for (i, &v) in e.iter().enumerate() {
                inv[(i, j)] = v;
            }
        }
        // Symmetrize away rounding so downstream symmetry checks are exact.
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = avg;
                inv[(j, i)] = avg;
            }
        }
        inv
    }
}

fn require_square(m: &Matrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.rows, m.cols
        )))
    }
}

pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    Cholesky::factor(m).map(Cholesky::into_lower)
}

pub fn spd_inverse(m: &Matrix) -> Result<Matrix> {
    Ok(Cholesky::factor(m)?.inverse())
}

/// Solves M X = B for SPD M.
pub fn solve_spd(m: &Matrix, b: &Matrix) -> Result<Matrix> {
    require_square(m)?;
    if b.rows != m.rows {
        return Err(Error::DimensionMismatch(format!(
            "M is {}x{} but B has {} rows",
            m.rows, m.cols, b.rows
        )));
    }
    Cholesky::factor(m)?.solve(b)
}

/// Eigenvalues (ascending) and matching unit eigenvectors stored as columns.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Rotations sweep the strict upper triangle row by row; the loop stops once
/// the off-diagonal Frobenius norm drops to `1e-12 * ‖M‖_F`.
pub fn symmetric_eigen(m: &Matrix) -> Result<SymmetricEigen> {
    require_square(m)?;
    if let Some((row, col)) = m.first_asymmetry(SYMMETRY_RTOL) {
        return Err(Error::NotSymmetric { row, col });
    }
    let (a, v) = jacobi(m, true);
    let n = m.rows;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(x, x)].total_cmp(&a[(y, y)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let v = v.expect("vectors requested");
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymmetricEigen { values, vectors })
}

/// Diagonalizes `m` in place; the rotations are accumulated only when `vectors` is set.
fn jacobi(m: &Matrix, vectors: bool) -> (Matrix, Option<Matrix>) {
    let n = m.rows;
    let mut a = m.clone();
    let mut v = vectors.then(|| Matrix::identity(n));
    let target = JACOBI_TOL * m.frobenius();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }

    (a, v)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn symmetric_eigen_extremes(m: &Matrix) -> Result<(f64, f64)> {
    require_square(m)?;
    if let Some((row, col)) = m.first_asymmetry(SYMMETRY_RTOL) {
        return Err(Error::NotSymmetric { row, col });
    }
    if m.rows == 0 {
        return Err(Error::DimensionMismatch("empty matrix".into()));
    }
    let (a, _) = jacobi(m, false);
    let diag = a.diag();
    let lo = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// ‖M‖₂, the square root of the largest eigenvalue of MᵀM.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.data.is_empty() {
        return 0.0;
    }
    if m.is_square() && m.first_asymmetry(0.0).is_none() {
        let (lo, hi) = symmetric_eigen_extremes(m).expect("square and symmetric");
        return lo.abs().max(hi.abs());
    }
    let gram = gram(m);
    // gram is symmetric by construction
    let (_, hi) = symmetric_eigen_extremes(&gram).expect("MᵀM is square and symmetric");
    hi.max(0.0).sqrt()
}

/// MᵀM computed exploiting symmetry.
fn gram(m: &Matrix) -> Matrix {
    let c = m.cols;
    let mut g = Matrix::zeros(c, c);
    for r in 0..m.rows {
        let row = m.row(r);
        for i in 0..c {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            let gi = &mut g.data[i * c..(i + 1) * c];
            for j in i..c {
                gi[j] += ri * row[j];
            }
        }
    }
    for i in 0..c {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    g
}

/// Symmetric R with R·R = M⁻¹, via the eigendecomposition of M.
pub fn spd_inverse_sqrt(m: &Matrix) -> Result<Matrix> {
    let eig = symmetric_eigen(m)?;
    let max = eig.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if let Some((index, &pivot)) = eig
        .values
        .iter()
        .enumerate()
        .find(|(_, &l)| l <= PIVOT_FLOOR * max)
    {
        return Err(Error::NotPositiveDefinite { index, pivot });
    }
    let n = m.rows;
    let w: Vec<f64> = eig.values.iter().map(|l| 1.0 / l.sqrt()).collect();
    let q = &eig.vectors;
    let mut r = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let s: f64 = (0..n).map(|k| q[(i, k)] * w[k] * q[(j, k)]).sum();
            r[(i, j)] = s;
            r[(j, i)] = s;
        }
    }
    Ok(r)
}

/// Σ̂ = XᵀX / n for an n×p data matrix.
pub fn sample_covariance(x: &Matrix) -> Matrix {
    let n = x.rows.max(1) as f64;
    gram(x).scale(1.0 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_spd(p: usize, seed: u64) -> Matrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        let mut s = a.transpose().matmul(&a).unwrap();
        for i in 0..p {
            s[(i, i)] += 0.5;
        }
        s
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(
            Matrix::new(2, 2, vec![1.0; 3]),
            Err(Error::DimensionMismatch(_))
        ));
        assert_eq!(
            Matrix::new(2, 2, vec![1.0, f64::NAN, 0.0, 1.0]),
            Err(Error::NonFinite { row: 0, col: 1 })
        );
    }

    #[test]
    fn cholesky_examples() {
        assert_eq!(cholesky(&Matrix::identity(3)).unwrap(), Matrix::identity(3));
        let l = cholesky(&m(&[&[4.0, 2.0], &[2.0, 3.0]])).unwrap();
        assert_abs_diff_eq!(l[(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 1)], 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
        let llt = l.matmul(&l.transpose()).unwrap();
        assert!(llt.sub(&m(&[&[4.0, 2.0], &[2.0, 3.0]])).unwrap().max_abs() < 1e-14);
        assert_eq!(
            cholesky(&Matrix::from_diag(&[9.0, 16.0])).unwrap(),
            Matrix::from_diag(&[3.0, 4.0])
        );
    }

    #[test]
    fn cholesky_rejects_indefinite_and_asymmetric() {
        assert!(matches!(
            cholesky(&m(&[&[1.0, 2.0], &[2.0, 1.0]])),
            Err(Error::NotPositiveDefinite { index: 1, .. })
        ));
        assert!(matches!(
            cholesky(&m(&[&[1.0, 0.5], &[0.4, 1.0]])),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(matches!(
            cholesky(&Matrix::zeros(2, 3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(spd_inverse(&Matrix::identity(4)).unwrap(), Matrix::identity(4));
        let d = spd_inverse(&Matrix::from_diag(&[2.0, 4.0])).unwrap();
        assert!(d.sub(&Matrix::from_diag(&[0.5, 0.25])).unwrap().max_abs() < 1e-15);
        // band precision, p = 4
        let band = m(&[
            &[1.0, 0.5, 0.3, 0.0],
            &[0.5, 1.0, 0.5, 0.3],
            &[0.3, 0.5, 1.0, 0.5],
            &[0.0, 0.3, 0.5, 1.0],
        ]);
        let inv = spd_inverse(&band).unwrap();
        let resid = band.matmul(&inv).unwrap().sub(&Matrix::identity(4)).unwrap();
        assert!(resid.max_abs() < 1e-8);
    }

    #[test]
    fn solve_examples() {
        let b = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(solve_spd(&Matrix::identity(2), &b).unwrap(), b);
        let x = solve_spd(&m(&[&[2.0]]), &m(&[&[4.0]])).unwrap();
        assert_abs_diff_eq!(x[(0, 0)], 2.0, epsilon = 1e-15);

        let spd = random_spd(5, 7);
        let x0 = Matrix::from_fn(5, 2, |i, j| (i as f64) - 2.0 * j as f64);
        let rhs = spd.matmul(&x0).unwrap();
        let x = solve_spd(&spd, &rhs).unwrap();
        assert!(x.sub(&x0).unwrap().max_abs() < 1e-8);

        assert!(matches!(
            solve_spd(&spd, &Matrix::zeros(4, 1)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn eigen_extremes_examples() {
        assert_eq!(symmetric_eigen_extremes(&Matrix::identity(4)).unwrap(), (1.0, 1.0));
        let (lo, hi) = symmetric_eigen_extremes(&m(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        assert_abs_diff_eq!(lo, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-12);
        assert_eq!(
            symmetric_eigen_extremes(&Matrix::from_diag(&[1.0, 5.0, 3.0])).unwrap(),
            (1.0, 5.0)
        );
        assert!(symmetric_eigen_extremes(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let s = random_spd(12, 3);
        let eig = symmetric_eigen(&s).unwrap();
        let q = &eig.vectors;
        let recon = Matrix::from_fn(12, 12, |i, j| {
            (0..12).map(|k| q[(i, k)] * eig.values[k] * q[(j, k)]).sum()
        });
        assert!(recon.sub(&s).unwrap().max_abs() < 1e-10 * s.max_abs());
        let qtq = q.transpose().matmul(q).unwrap();
        assert!(qtq.sub(&Matrix::identity(12)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_examples() {
        assert_abs_diff_eq!(spectral_norm(&Matrix::identity(3)), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            spectral_norm(&Matrix::from_diag(&[2.0, -5.0])),
            5.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            spectral_norm(&m(&[&[0.0, 2.0], &[0.0, 0.0]])),
            2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn inverse_sqrt_examples() {
        assert!(spd_inverse_sqrt(&Matrix::identity(3))
            .unwrap()
            .sub(&Matrix::identity(3))
            .unwrap()
            .max_abs()
            < 1e-14);
        let r = spd_inverse_sqrt(&Matrix::from_diag(&[4.0, 9.0])).unwrap();
        assert_abs_diff_eq!(r[(0, 0)], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(r[(1, 1)], 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r[(0, 1)], 0.0, epsilon = 1e-14);

        let s = random_spd(3, 11);
        let r = spd_inverse_sqrt(&s).unwrap();
        assert!(r.is_symmetric(0.0));
        let rmr = r.matmul(&s).unwrap().matmul(&r).unwrap();
        assert!(rmr.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-8);
        assert!(matches!(
            spd_inverse_sqrt(&m(&[&[1.0, 2.0], &[2.0, 1.0]])),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn sample_covariance_examples() {
        assert_eq!(sample_covariance(&Matrix::zeros(4, 3)), Matrix::zeros(3, 3));
        assert_eq!(
            sample_covariance(&Matrix::identity(2)),
            Matrix::from_diag(&[0.5, 0.5])
        );
        let (a, b) = (1.5, -2.0);
        let s = sample_covariance(&m(&[&[a, b]]));
        assert_eq!(s, m(&[&[a * a, a * b], &[a * b, b * b]]));
    }

    #[test]
    fn index_set_basics() {
        let s = IndexSet::from_unsorted(vec![5, 1, 3, 3]);
        assert_eq!(s.as_slice(), &[1, 3, 5]);
        assert_eq!(s.position(5), Some(2));
        assert_eq!(s.with(2).as_slice(), &[1, 2, 3, 5]);
        assert_eq!(s.with(3), s);
        assert!(IndexSet::from_unsorted(vec![1, 5]).is_subset_of(&s));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn cholesky_reconstructs(p in 1usize..=50, seed in any::<u64>()) {
            let s = random_spd(p, seed);
            let l = cholesky(&s).unwrap();
            let err = l.matmul(&l.transpose()).unwrap().sub(&s).unwrap().frobenius();
            prop_assert!(err / s.frobenius() <= 1e-10);
        }

        #[test]
        fn inverse_matches_solve_with_identity(p in 1usize..=20, seed in any::<u64>()) {
            let s = random_spd(p, seed);
            let inv = spd_inverse(&s).unwrap();
            let sol = solve_spd(&s, &Matrix::identity(p)).unwrap();
            prop_assert!(inv.sub(&sol).unwrap().max_abs() <= 1e-8);
        }

        #[test]
        fn spectral_norm_transpose_and_eigen(p in 1usize..=12, q in 1usize..=12, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = Matrix::from_fn(p, q, |_, _| rng.random_range(-2.0..2.0));
            let n1 = spectral_norm(&a);
            let n2 = spectral_norm(&a.transpose());
            prop_assert!((n1 - n2).abs() <= 1e-8 * n1.max(1.0));

            let sym = a.transpose().matmul(&a).unwrap().sub(&Matrix::identity(q).scale(1.5)).unwrap();
            let (lo, hi) = symmetric_eigen_extremes(&sym).unwrap();
            let expect = lo.abs().max(hi.abs());
            prop_assert!((spectral_norm(&sym) - expect).abs() <= 1e-8 * expect.max(1.0));
        }

        #[test]
        fn inverse_sqrt_commutes(p in 1usize..=10, seed in any::<u64>()) {
            let s = random_spd(p, seed);
            let r = spd_inverse_sqrt(&s).unwrap();
            let rs = r.matmul(&s).unwrap();
            let sr = s.matmul(&r).unwrap();
            prop_assert!(rs.sub(&sr).unwrap().max_abs() <= 1e-8);
        }
    }
}
