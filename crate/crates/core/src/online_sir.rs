//! Dense online sliced inverse regression: an eigen tracker on the slice
//! kernel, mapped back to the predictor scale with a running inverse
//! covariance kept current by rank-one (Sherman-Morrison) updates.
//!
//! No sparsity is imposed, so in high dimensions the inverse covariance
//! amplifies noise in every coordinate.

use nalgebra::{DMatrix, DVector};

use crate::eigen::{EigenState, TrackerConfig};
use crate::error::{self, OssirError, Result};
use crate::kernel::{Centering, KernelState, Observation, SliceGrid, TiePolicy};

/// Ridge added to the warmup covariance, as a fraction of its average variance.
pub const WARMUP_RIDGE: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct OnlineSir {
    kernel: KernelState,
    eigen: EigenState,
    sigma_inv: DMatrix<f64>,
}

impl OnlineSir {
    pub fn warmup(
        batch: &[Observation],
        slices: usize,
        rank: usize,
        tracker: TrackerConfig,
        ties: TiePolicy,
    ) -> Result<Self> {
        let Some(first) = batch.first() else {
            return error::config("empty warmup batch");
        };
        let p = first.dim();
        let grid = SliceGrid::from_warmup(batch, slices, ties)?;
        let mut kernel = KernelState::new(grid, p, Centering::Exact);
        for obs in batch {
            kernel.update(obs)?;
        }
        let ys: Vec<f64> = batch.iter().map(|o| o.y).collect();
        let eigen = EigenState::init(&kernel, rank, tracker, &ys)?;

        let n = batch.len() as f64;
        let mut sigma = DMatrix::zeros(p, p);
        for obs in batch {
            let c = &obs.x - kernel.mean();
            sigma.ger(1.0 / n, &c, &c, 1.0);
        }
        let ridge = WARMUP_RIDGE * sigma.trace() / p as f64;
        if !(ridge > 0.0) {
            return Err(OssirError::Degenerate("warmup covariates have zero variance".into()));
        }
        for i in 0..p {
            sigma[(i, i)] += ridge;
        }
        let sigma_inv = sigma
            .cholesky()
            .ok_or_else(|| OssirError::Degenerate("warmup covariance is not positive definite".into()))?
            .inverse();
        Ok(Self {
            kernel,
            eigen,
            sigma_inv,
        })
    }

    pub fn observe(&mut self, obs: &Observation) -> Result<()> {
        if obs.dim() != self.kernel.dim() {
            return error::data("observation dimension mismatch");
        }
        // Sigma_{t+1} = t/(t+1) Sigma_t + t/(t+1)^2 c c^T with c = x - mean_t.
        let t = self.kernel.t() as f64;
        let c = &obs.x - self.kernel.mean();
        let u = c * (t.sqrt() / (t + 1.0));
        self.sigma_inv *= (t + 1.0) / t;
        let w = &self.sigma_inv * &u;
        let denom = 1.0 + u.dot(&w);
        self.sigma_inv.ger(-1.0 / denom, &w, &w, 1.0);

        self.kernel.update(obs)?;
        self.eigen.step(&self.kernel, obs.y)
    }

    pub fn eigen(&self) -> &EigenState {
        &self.eigen
    }

    pub fn sigma_inv(&self) -> &DMatrix<f64> {
        &self.sigma_inv
    }

    /// `Sigma^-1 eta`, columns unit-normalized.
    pub fn directions(&self) -> DMatrix<f64> {
        let mut b = &self.sigma_inv * self.eigen.vectors();
        for mut col in b.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= n;
            }
        }
        b
    }

    pub fn mean(&self) -> &DVector<f64> {
        self.kernel.mean()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::Strategy;
    use approx::assert_abs_diff_eq;

    #[test]
    fn inverse_tracks_ridged_running_covariance() {
        let data: Vec<_> = (0..80)
            .map(|i| {
                let a = (i as f64 * 0.37).sin();
                let b = (i as f64 * 1.91).cos();
                Observation::from_slice(&[a, b, a - 0.5 * b], a + b)
            })
            .collect();
        let mut m = OnlineSir::warmup(&data[..40], 4, 1, TrackerConfig::with_strategy(Strategy::Sgd), TiePolicy::Strict)
            .unwrap();
        let ridge0 = {
            let mean = data[..40].iter().fold(DVector::zeros(3), |acc, o| acc + &o.x) / 40.0;
            let tr: f64 = data[..40].iter().map(|o| (&o.x - &mean).norm_squared()).sum::<f64>() / 40.0;
            WARMUP_RIDGE * tr / 3.0
        };
        for obs in &data[40..] {
            m.observe(obs).unwrap();
        }
        let mean = m.mean().clone();
        let mut sigma = DMatrix::zeros(3, 3);
        for obs in &data {
            let c = &obs.x - &mean;
            sigma.ger(1.0 / 80.0, &c, &c, 1.0);
        }
        // The warmup ridge decays like the sample weights: 40/80 of it remains.
        for i in 0..3 {
            sigma[(i, i)] += ridge0 * 0.5;
        }
        let product = &sigma * m.sigma_inv();
        assert_abs_diff_eq!(product, DMatrix::identity(3, 3), epsilon = 1e-9);
    }
}
