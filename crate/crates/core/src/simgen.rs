//! Simulated regression models with known sparse directions, and the
//! subspace distance used to score direction estimates.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{self, Result};
use crate::kernel::Observation;
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SimModel {
    /// `y = b1^T x + e`, `b1` = ones on coordinates 1 and 2.
    Linear,
    /// `y = sin(b2^T x) exp(b2^T x) + e`, `b2` = ones on coordinates 2, 4, 6, 8, 10.
    SinExp,
    /// `y = sgn(b3^T x) |2 + b4^T x / 4|^3 + e`, `b3` on 1..=4 and `b4` on 5..=7.
    Cubic,
}

impl SimModel {
    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(SimModel::Linear),
            2 => Ok(SimModel::SinExp),
            3 => Ok(SimModel::Cubic),
            _ => error::config(format!("unknown model {id} (expected 1, 2 or 3)")),
        }
    }

    pub fn id(self) -> u8 {
        match self {
            SimModel::Linear => 1,
            SimModel::SinExp => 2,
            SimModel::Cubic => 3,
        }
    }

    /// Number of true directions.
    pub fn rank(self) -> usize {
        match self {
            SimModel::Cubic => 2,
            _ => 1,
        }
    }

    /// Smallest p hosting every support index.
    pub fn min_dim(self) -> usize {
        match self {
            SimModel::Linear => 2,
            SimModel::SinExp => 10,
            SimModel::Cubic => 7,
        }
    }

    /// Zero-based support of each true direction.
    fn supports(self) -> Vec<Vec<usize>> {
        match self {
            SimModel::Linear => vec![vec![0, 1]],
            SimModel::SinExp => vec![vec![1, 3, 5, 7, 9]],
            SimModel::Cubic => vec![vec![0, 1, 2, 3], vec![4, 5, 6]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimModelSpec {
    pub model: SimModel,
    pub p: usize,
    /// AR(1) correlation: `Cov(x_i, x_j) = rho^|i-j|`.
    pub rho: f64,
    pub noise_sd: f64,
}

impl SimModelSpec {
    pub fn new(model: SimModel, p: usize) -> Result<Self> {
        let spec = Self {
            model,
            p,
            rho: 0.3,
            noise_sd: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < self.model.min_dim() {
            return error::config(format!(
                "model {} needs p >= {}, got {}",
                self.model.id(),
                self.model.min_dim(),
                self.p
            ));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return error::config(format!("rho must lie in (-1, 1), got {}", self.rho));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return error::config(format!("noise_sd must be non-negative, got {}", self.noise_sd));
        }
        Ok(())
    }

    /// True directions, one column each, unnormalized (entries are 0 or 1).
    pub fn true_betas(&self) -> Result<DMatrix<f64>> {
        self.validate()?;
        let supports = self.model.supports();
        let mut b = DMatrix::zeros(self.p, supports.len());
        for (j, s) in supports.iter().enumerate() {
            for &i in s {
                b[(i, j)] = 1.0;
            }
        }
        Ok(b)
    }

    /// Covariates with `Cov(x_i, x_j) = rho^|i-j|`, via the AR(1) recursion.
    pub fn sample_x<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let innovation = (1.0 - self.rho * self.rho).sqrt();
        let mut x = DVector::zeros(self.p);
        x[0] = rng.sample(StandardNormal);
        for j in 1..self.p {
            let z: f64 = rng.sample(StandardNormal);
            x[j] = self.rho * x[j - 1] + innovation * z;
        }
        x
    }

    /// Noise-free mean response.
    pub fn mean_response(&self, x: &DVector<f64>) -> f64 {
        let sum = |idx: &[usize]| idx.iter().map(|&i| x[i]).sum::<f64>();
        match self.model {
            SimModel::Linear => x[0] + x[1],
            SimModel::SinExp => {
                let u = sum(&[1, 3, 5, 7, 9]);
                u.sin() * u.exp()
            }
            SimModel::Cubic => {
                let u = sum(&[0, 1, 2, 3]);
                let v = sum(&[4, 5, 6]);
                let sign = if u > 0.0 {
                    1.0
                } else if u < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                sign * (2.0 + v / 4.0).abs().powi(3)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Observation> {
        (0..n)
            .map(|_| {
                let x = self.sample_x(rng);
                let noise: f64 = rng.sample(StandardNormal);
                let y = self.mean_response(&x) + self.noise_sd * noise;
                Observation::new(x, y)
            })
            .collect()
    }

    /// `sample` driven by a ChaCha8 generator seeded with `seed`.
    pub fn sample_seeded(&self, n: usize, seed: u64) -> Vec<Observation> {
        self.sample(n, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

/// `1 - |det(Q^T Qhat)|` after orthonormalizing both arguments; in `[0, 1]`.
pub fn subspace_distance(b: &DMatrix<f64>, bhat: &DMatrix<f64>) -> f64 {
    subspace_distance_flagged(b, bhat).0
}

/// Distance plus a flag raised when either argument is rank deficient or the
/// shapes disagree, in which case the distance is 1.
pub fn subspace_distance_flagged(b: &DMatrix<f64>, bhat: &DMatrix<f64>) -> (f64, bool) {
    if b.shape() != bhat.shape() || b.ncols() == 0 {
        return (1.0, true);
    }
    let (q, bad_q) = linalg::orthonormal_basis(b);
    let (qh, bad_qh) = linalg::orthonormal_basis(bhat);
    if bad_q || bad_qh {
        return (1.0, true);
    }
    let gram = q.tr_mul(&qh);
    let det = gram.determinant().abs().min(1.0);
    ((1.0 - det).max(0.0), false)
}

/// Principal angles (radians, ascending) between the column spans of `a` and `b`.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let (qa, _) = linalg::orthonormal_basis(a);
    let (qb, _) = linalg::orthonormal_basis(b);
    let gram = qa.tr_mul(&qb);
    let mut angles: Vec<f64> = gram
        .singular_values()
        .iter()
        .map(|s| s.clamp(-1.0, 1.0).acos())
        .collect();
    angles.sort_by(f64::total_cmp);
    angles
}

/// Writes observations as CSV with header `x1,...,xp,y`.
pub fn write_csv(path: &Path, data: &[Observation]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let p = data.first().map_or(0, Observation::dim);
    let mut header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for obs in data {
        let row = obs
            .x
            .iter()
            .chain(std::iter::once(&obs.y))
            .map(|v| v.to_string());
        w.write_record(row)?;
    }
    w.into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()))?
        .flush()?;
    Ok(())
}
