//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nodewise_loreg::rng::{stream, Purpose, Rng};
use nodewise_loreg::Matrix;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> Rng {
    stream(seed, 0, Purpose::Test)
}

pub fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| normal(rng))
}

/// Triple-loop product, kept separate from `Matrix::matmul`.
pub fn naive_mul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    Matrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum())
}

pub fn naive_t(a: &Matrix) -> Matrix {
    Matrix::from_fn(a.cols(), a.rows(), |i, j| a[(j, i)])
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(m: &Matrix) -> Matrix {
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = m.row(i).to_vec();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        a.swap(c, piv);
        let d = a[c][c];
        assert!(d.abs() > 1e-300, "singular");
        for v in a[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
    }
    Matrix::from_fn(n, n, |i, j| a[i][n + j])
}

/// `GᵀG/k + ridge·I` for a Gaussian `G`.
pub fn random_spd(p: usize, ridge: f64, rng: &mut Rng) -> Matrix {
    let k = p + 3;
    let g = gaussian_matrix(k, p, rng);
    let mut m = naive_mul(&naive_t(&g), &g).scale(1.0 / k as f64);
    for i in 0..p {
        m[(i, i)] += ridge;
    }
    // exact symmetry
    Matrix::from_fn(p, p, |i, j| if i <= j { m[(i, j)] } else { m[(j, i)] })
}

/// Modified Gram-Schmidt; the columns of the result are orthonormal and scaled to norm √n.
pub fn orthogonal_design(n: usize, p: usize, rng: &mut Rng) -> Matrix {
    assert!(p <= n);
    let g = gaussian_matrix(n, p, rng);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
    for j in 0..p {
        let mut v = g.column(j);
        for q in &cols {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(q) {
                *x -= d * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        cols.push(v.into_iter().map(|x| x / norm).collect());
    }
    let root_n = (n as f64).sqrt();
    Matrix::from_fn(n, p, |i, j| cols[j][i] * root_n)
}

/// Columns rescaled to Euclidean norm √n.
pub fn normalize_columns(x: &Matrix) -> Matrix {
    let n = x.rows();
    let norms: Vec<f64> = (0..x.cols())
        .map(|j| (0..n).map(|i| x[(i, j)] * x[(i, j)]).sum::<f64>().sqrt())
        .collect();
    let root_n = (n as f64).sqrt();
    Matrix::from_fn(n, x.cols(), |i, j| x[(i, j)] / norms[j] * root_n)
}

/// Least squares on the listed columns by normal equations and Gauss-Jordan.
pub fn ols(y: &[f64], z: &Matrix, cols: &[usize]) -> Vec<f64> {
    if cols.is_empty() {
        return Vec::new();
    }
    let n = z.rows();
    let g = Matrix::from_fn(cols.len(), cols.len(), |a, b| (0..n).map(|i| z[(i, cols[a])] * z[(i, cols[b])]).sum());
    let inv = gauss_jordan_inverse(&g);
    let r: Vec<f64> = cols.iter().map(|&k| (0..n).map(|i| z[(i, k)] * y[i]).sum()).collect();
    (0..cols.len()).map(|a| (0..cols.len()).map(|b| inv[(a, b)] * r[b]).sum()).collect()
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn uniform_index(rng: &mut Rng, n: usize) -> usize {
    rng.random_range(0..n)
}
