//! Graph models, precision matrices and data samplers for simulations.
//!
//! Random, hub and cluster graphs turn a 0/1 adjacency matrix `A` into
//! `Ω = A + (|λ_min(A)| + 0.1) I`, so `λ_min(Ω) = 0.1`. Groups for hub and
//! cluster graphs are contiguous index blocks, and each hub is the first
//! node of its block.

use rand::Rng as _;
use rand_distr::{Distribution as _, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, spd_inverse, spd_inverse_sqrt, symmetric_eigen_extremes, Matrix};
use crate::rng::{stream, Purpose, Rng};

pub const DEFAULT_GROUP_SIZE: usize = 10;
pub const CLUSTER_EDGE_PROB: f64 = 0.6;
const DIAGONAL_SHIFT: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFamily {
    Band,
    Random,
    Hub,
    Cluster,
}

fn default_group_size() -> usize {
    DEFAULT_GROUP_SIZE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub family: GraphFamily,
    pub p: usize,
    pub seed: u64,
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    /// Overrides `4/p` (random) or `0.6` (cluster).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_prob: Option<f64>,
}

impl GraphSpec {
    pub fn new(family: GraphFamily, p: usize, seed: u64) -> Self {
        Self {
            family,
            p,
            seed,
            group_size: DEFAULT_GROUP_SIZE,
            edge_prob: None,
        }
    }

    pub fn edge_prob(&self) -> f64 {
        self.edge_prob.unwrap_or(match self.family {
            GraphFamily::Random => 4.0 / self.p as f64,
            GraphFamily::Cluster => CLUSTER_EDGE_PROB,
            GraphFamily::Band | GraphFamily::Hub => 0.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 4 {
            return Err(Error::InvalidConfig(format!("graph needs p >= 4, got {}", self.p)));
        }
        if matches!(self.family, GraphFamily::Hub | GraphFamily::Cluster) {
            check_groups(self.p, self.group_size)?;
        }
        let prob = self.edge_prob();
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::InvalidConfig(format!("edge_prob must lie in [0, 1], got {prob}")));
        }
        Ok(())
    }

    /// The precision matrix `Ω`, drawn from the graph stream of `seed`.
    pub fn build(&self) -> Result<Matrix> {
        self.validate()?;
        let mut rng = stream(self.seed, 0, Purpose::Graph);
        match self.family {
            GraphFamily::Band => Ok(gen_band(self.p)),
            GraphFamily::Random => gen_random_with_prob(self.p, self.edge_prob(), &mut rng),
            GraphFamily::Hub => gen_hub(self.p, self.group_size),
            GraphFamily::Cluster => {
                gen_cluster_with_prob(self.p, self.group_size, self.edge_prob(), &mut rng)
            }
        }
    }
}

fn check_groups(p: usize, group_size: usize) -> Result<()> {
    if group_size == 0 || p % group_size != 0 {
        return Err(Error::IndivisibleGroups { p, group_size });
    }
    Ok(())
}

/// `Ω_ij = 1, 0.5, 0.3` for `|i − j| = 0, 1, 2`.
pub fn gen_band(p: usize) -> Matrix {
    Matrix::from_fn(p, p, |i, j| match i.abs_diff(j) {
        0 => 1.0,
        1 => 0.5,
        2 => 0.3,
        _ => 0.0,
    })
}

/// `A + (|λ_min(A)| + 0.1) I`.
pub fn precision_from_adjacency(a: &Matrix) -> Result<Matrix> {
    let (lo, _) = symmetric_eigen_extremes(a)?;
    let shift = lo.abs() + DIAGONAL_SHIFT;
    let mut omega = a.clone();
    for i in 0..a.rows() {
        omega[(i, i)] += shift;
    }
    Ok(omega)
}

fn add_edge(a: &mut Matrix, i: usize, j: usize) {
    a[(i, j)] = 1.0;
    a[(j, i)] = 1.0;
}

/// Erdős–Rényi graph with edge probability `4/p`.
pub fn gen_random(p: usize, rng: &mut Rng) -> Result<Matrix> {
    gen_random_with_prob(p, 4.0 / p as f64, rng)
}

pub fn gen_random_with_prob(p: usize, prob: f64, rng: &mut Rng) -> Result<Matrix> {
    let mut a = Matrix::zeros(p, p);
    for i in 0..p {
        for j in i + 1..p {
            if rng.random::<f64>() < prob {
                add_edge(&mut a, i, j);
            }
        }
    }
    precision_from_adjacency(&a)
}

/// Star graphs on contiguous groups. Deterministic, so no generator is taken.
pub fn gen_hub(p: usize, group_size: usize) -> Result<Matrix> {
    check_groups(p, group_size)?;
    let mut a = Matrix::zeros(p, p);
    for start in (0..p).step_by(group_size) {
        for member in start + 1..start + group_size {
            add_edge(&mut a, start, member);
        }
    }
    precision_from_adjacency(&a)
}

/// Independent within-group edges with probability 0.6.
pub fn gen_cluster(p: usize, group_size: usize, rng: &mut Rng) -> Result<Matrix> {
    gen_cluster_with_prob(p, group_size, CLUSTER_EDGE_PROB, rng)
}

pub fn gen_cluster_with_prob(p: usize, group_size: usize, prob: f64, rng: &mut Rng) -> Result<Matrix> {
    check_groups(p, group_size)?;
    let mut a = Matrix::zeros(p, p);
    for start in (0..p).step_by(group_size) {
        for i in start..start + group_size {
            for j in i + 1..start + group_size {
                if rng.random::<f64>() < prob {
                    add_edge(&mut a, i, j);
                }
            }
        }
    }
    precision_from_adjacency(&a)
}

/// Nonzero entries strictly above the diagonal.
pub fn edge_count(m: &Matrix) -> usize {
    (0..m.rows())
        .map(|i| (i + 1..m.cols()).filter(|&j| m[(i, j)] != 0.0).count())
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Gaussian,
    SubGaussian,
}

/// Draws rows `x = M u` with `MMᵀ = Ω⁻¹`; the mixing matrix is factored once.
#[derive(Clone, Debug)]
pub struct Sampler {
    dist: Distribution,
    /// `Lᵀ` (Gaussian) or `Ω^{-1/2}` (sub-Gaussian), applied on the right.
    right: Matrix,
}

impl Sampler {
    pub fn new(omega: &Matrix, dist: Distribution) -> Result<Self> {
        let right = match dist {
            Distribution::Gaussian => cholesky(&spd_inverse(omega)?)?.transpose(),
            Distribution::SubGaussian => spd_inverse_sqrt(omega)?,
        };
        Ok(Self { dist, right })
    }

    pub fn p(&self) -> usize {
        self.right.rows()
    }

    pub fn distribution(&self) -> Distribution {
        self.dist
    }

    /// `M` with `x = M u`, so `Cov(x) = MMᵀ = Ω⁻¹`.
    pub fn mixing(&self) -> Matrix {
        self.right.transpose()
    }

    /// Fourth moment `E u⁴` of the unit-variance base coordinates.
    pub fn base_kurtosis(&self) -> f64 {
        match self.dist {
            Distribution::Gaussian => 3.0,
            Distribution::SubGaussian => 1.8,
        }
    }

    /// `n × p` data matrix. Normals come from the ziggurat sampler of `rand_distr`.
    pub fn draw(&self, n: usize, rng: &mut Rng) -> Matrix {
        let p = self.p();
        let base = match self.dist {
            Distribution::Gaussian => {
                Matrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut *rng))
            }
            Distribution::SubGaussian => {
                let bound = 3f64.sqrt();
                let u = Uniform::new_inclusive(-bound, bound).expect("finite bounds");
                Matrix::from_fn(n, p, |_, _| u.sample(&mut *rng))
            }
        };
        base.matmul(&self.right).expect("conformable by construction")
    }
}

/// `X = G Lᵀ` with `Ω⁻¹ = LLᵀ` and standard normal `G`.
pub fn sample_gaussian(omega: &Matrix, n: usize, rng: &mut Rng) -> Result<Matrix> {
    Ok(Sampler::new(omega, Distribution::Gaussian)?.draw(n, rng))
}

/// `X = U Ω^{-1/2}` with `U` uniform on `[−√3, √3]`.
pub fn sample_subgaussian(omega: &Matrix, n: usize, rng: &mut Rng) -> Result<Matrix> {
    Ok(Sampler::new(omega, Distribution::SubGaussian)?.draw(n, rng))
}
