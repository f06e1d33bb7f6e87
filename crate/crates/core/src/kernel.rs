//! Streaming slice-kernel statistics.
//!
//! For a stream `(x_1, y_1), (x_2, y_2), ...` and fixed response slices
//! `I_1, ..., I_H`, the kernel tracker maintains
//!
//! ```text
//!   dhat_{t,h} = (1/t) * sum_{i<=t} (x_i - xbar_t) 1{y_i in I_h}
//! ```
//!
//! and, on demand, `D_t = (1/H) * sum_h dhat_{t,h} dhat_{t,h}^T`. The state is
//! kept as the running mean, the uncentered per-slice sums of `x` and the slice
//! counts, from which `dhat` is recovered exactly as
//! `(cross_sum_h - n_h * xbar_t) / t`. Each update costs O(pH).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{self, OssirError, Result};

/// One `(x, y)` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: DVector<f64>,
    pub y: f64,
}

impl Observation {
    pub fn new(x: DVector<f64>, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_slice(x: &[f64], y: f64) -> Self {
        Self {
            x: DVector::from_column_slice(x),
            y,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// What to do when the warmup responses cannot fill `H` distinct slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TiePolicy {
    /// Raise a configuration error.
    #[default]
    Strict,
    /// Merge empty slices into their neighbours and continue with fewer slices.
    Collapse,
}

/// Fixed cut points `q_1 < ... < q_{H-1}` with implicit infinite ends.
///
/// Slices are right-closed: slice `h` is `(q_{h-1}, q_h]`, so a response equal
/// to a cut point falls in the lower slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceGrid {
    cuts: Vec<f64>,
    counts: Vec<u64>,
    requested: usize,
}

impl SliceGrid {
    /// Builds a grid directly from cut points, which must be finite and strictly increasing.
    pub fn from_cuts(cuts: Vec<f64>) -> Result<Self> {
        if cuts.iter().any(|c| !c.is_finite()) {
            return error::data("cut points must be finite");
        }
        if cuts.windows(2).any(|w| w[0] >= w[1]) {
            return error::config("cut points must be strictly increasing");
        }
        let h = cuts.len() + 1;
        Ok(Self {
            cuts,
            counts: vec![0; h],
            requested: h,
        })
    }

    /// Cut points at the interior empirical quantiles `1/H, ..., (H-1)/H` of the
    /// warmup responses (linear interpolation between order statistics).
    pub fn from_warmup(warmup: &[Observation], slices: usize, ties: TiePolicy) -> Result<Self> {
        let ys: Vec<f64> = warmup.iter().map(|o| o.y).collect();
        Self::from_responses(&ys, slices, ties)
    }

    pub fn from_responses(ys: &[f64], slices: usize, ties: TiePolicy) -> Result<Self> {
        if slices < 2 {
            return error::config(format!("need at least 2 slices, got {slices}"));
        }
        if ys.len() < slices {
            return error::config(format!(
                "warmup has {} responses, fewer than the {slices} slices requested",
                ys.len()
            ));
        }
        if ys.iter().any(|y| !y.is_finite()) {
            return error::data("non-finite response in warmup batch");
        }
        let mut sorted = ys.to_vec();
        sorted.sort_by(f64::total_cmp);

        let mut cuts: Vec<f64> = (1..slices)
            .map(|k| quantile_sorted(&sorted, k as f64 / slices as f64))
            .collect();

        let degenerate = cuts.windows(2).any(|w| w[0] >= w[1])
            || slice_occupancy(&cuts, &sorted).contains(&0);
        if degenerate {
            match ties {
                TiePolicy::Strict => {
                    return error::config(format!(
                        "warmup responses are too heavily tied to form {slices} non-empty slices"
                    ))
                }
                TiePolicy::Collapse => {
                    cuts.dedup();
                    loop {
                        let occ = slice_occupancy(&cuts, &sorted);
                        match occ.iter().position(|&n| n == 0) {
                            // Drop the cut above an empty slice, or the last cut for the top slice.
                            Some(h) => {
                                cuts.remove(h.min(cuts.len() - 1));
                            }
                            None => break,
                        }
                        if cuts.is_empty() {
                            break;
                        }
                    }
                    if cuts.is_empty() {
                        return error::config("all warmup responses are tied; cannot slice");
                    }
                }
            }
        }
        let h = cuts.len() + 1;
        Ok(Self {
            cuts,
            counts: vec![0; h],
            requested: slices,
        })
    }

    pub fn num_slices(&self) -> usize {
        self.counts.len()
    }

    /// Number of slices originally requested; larger than `num_slices` after a collapse.
    pub fn requested_slices(&self) -> usize {
        self.requested
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Zero-based slice index of `y`.
    pub fn slice_index(&self, y: f64) -> Result<usize> {
        if !y.is_finite() {
            return error::data(format!("non-finite response {y}"));
        }
        Ok(self.cuts.partition_point(|&c| c < y))
    }

    /// The 0/1 indicator vector `e(y)` with a single one in the slice of `y`.
    pub fn indicator(&self, y: f64) -> Result<DVector<f64>> {
        let h = self.slice_index(y)?;
        let mut e = DVector::zeros(self.num_slices());
        e[h] = 1.0;
        Ok(e)
    }

    fn record(&mut self, h: usize) {
        self.counts[h] += 1;
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn slice_occupancy(cuts: &[f64], sorted: &[f64]) -> Vec<usize> {
    let mut occ = vec![0; cuts.len() + 1];
    for &y in sorted {
        occ[cuts.partition_point(|&c| c < y)] += 1;
    }
    occ
}

/// How `dhat` is centred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Centering {
    /// Centre every past observation at the current mean (exact batch equivalence).
    #[default]
    Exact,
    /// Centre each observation once, at the running mean of its arrival time,
    /// and never re-centre. Approximates `Exact` with an O(1/t) bias.
    Recursive,
}

/// Running sufficient statistics for the slice kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelState {
    grid: SliceGrid,
    centering: Centering,
    t: u64,
    mean: DVector<f64>,
    /// `sum_i x_i e_i^T`, uncentered (p x H).
    cross_sum: DMatrix<f64>,
    /// `sum_i (x_i - xbar_i) e_i^T`; only maintained for `Centering::Recursive`.
    frozen_sum: Option<DMatrix<f64>>,
    dhat: DMatrix<f64>,
}

impl KernelState {
    pub fn new(grid: SliceGrid, p: usize, centering: Centering) -> Self {
        let h = grid.num_slices();
        Self {
            frozen_sum: (centering == Centering::Recursive).then(|| DMatrix::zeros(p, h)),
            grid,
            centering,
            t: 0,
            mean: DVector::zeros(p),
            cross_sum: DMatrix::zeros(p, h),
            dhat: DMatrix::zeros(p, h),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn num_slices(&self) -> usize {
        self.grid.num_slices()
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn grid(&self) -> &SliceGrid {
        &self.grid
    }

    pub fn centering(&self) -> Centering {
        self.centering
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cross_sum(&self) -> &DMatrix<f64> {
        &self.cross_sum
    }

    /// Centred slice-mean matrix `dhat_t` (p x H).
    pub fn dhat(&self) -> &DMatrix<f64> {
        &self.dhat
    }

    /// `dhat / sqrt(H)`, the factor `F` with `F F^T = D_t`.
    pub fn kernel_factor(&self) -> DMatrix<f64> {
        &self.dhat / (self.num_slices() as f64).sqrt()
    }

    /// Absorbs one observation; returns its slice index.
    pub fn update(&mut self, obs: &Observation) -> Result<usize> {
        if obs.dim() != self.dim() {
            return error::data(format!(
                "observation has {} covariates, state expects {}",
                obs.dim(),
                self.dim()
            ));
        }
        if obs.x.iter().any(|v| !v.is_finite()) {
            return error::data("non-finite covariate");
        }
        let h = self.grid.slice_index(obs.y)?;

        self.t += 1;
        let t = self.t as f64;
        self.mean += (&obs.x - &self.mean) / t;
        self.cross_sum.column_mut(h).axpy(1.0, &obs.x, 1.0);
        self.grid.record(h);

        match self.centering {
            Centering::Exact => {
                let counts = self.grid.counts();
                for (k, mut col) in self.dhat.column_iter_mut().enumerate() {
                    let n_k = counts[k] as f64;
                    col.copy_from(&self.cross_sum.column(k));
                    col.axpy(-n_k, &self.mean, 1.0);
                    col /= t;
                }
            }
            Centering::Recursive => {
                let frozen = self.frozen_sum.as_mut().expect("recursive centering keeps frozen sums");
                let centred = &obs.x - &self.mean;
                frozen.column_mut(h).axpy(1.0, &centred, 1.0);
                self.dhat.copy_from(frozen);
                self.dhat /= t;
            }
        }
        Ok(h)
    }

    /// `D_t = (1/H) dhat dhat^T`, exactly symmetric. Only the perturbation
    /// tracker needs this p x p matrix.
    pub fn build_d(&self) -> Result<DMatrix<f64>> {
        if self.t == 0 {
            return Err(OssirError::EmptyState(
                "kernel matrix requested before any observation".into(),
            ));
        }
        let mut d = &self.dhat * self.dhat.transpose();
        d /= self.num_slices() as f64;
        crate::linalg::symmetrize(&mut d);
        Ok(d)
    }

    /// Checks internal consistency after a restore.
    pub fn validate(&self) -> Result<()> {
        let (p, h) = (self.dim(), self.num_slices());
        if self.cross_sum.shape() != (p, h) || self.dhat.shape() != (p, h) {
            return error::data("kernel snapshot has inconsistent matrix shapes");
        }
        if let Some(f) = &self.frozen_sum {
            if f.shape() != (p, h) {
                return error::data("kernel snapshot has inconsistent matrix shapes");
            }
        }
        if (self.centering == Centering::Recursive) != self.frozen_sum.is_some() {
            return error::data("kernel snapshot centering does not match its stored sums");
        }
        let total: u64 = self.grid.counts().iter().sum();
        if total != self.t {
            return error::data(format!(
                "kernel snapshot slice counts sum to {total} but t = {}",
                self.t
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn obs(x: &[f64], y: f64) -> Observation {
        Observation::from_slice(x, y)
    }

    #[test]
    fn median_cut_for_two_slices() {
        let g = SliceGrid::from_responses(&[1.0, 2.0, 3.0, 4.0], 2, TiePolicy::Strict).unwrap();
        assert_eq!(g.cuts(), &[2.5]);
        assert_eq!(g.counts(), &[0, 0]);
    }

    #[test]
    fn tied_warmup_is_rejected_by_default() {
        let err = SliceGrid::from_responses(&[5.0; 4], 2, TiePolicy::Strict).unwrap_err();
        assert!(matches!(err, OssirError::InvalidConfig(_)));
        let err = SliceGrid::from_responses(&[5.0; 4], 2, TiePolicy::Collapse).unwrap_err();
        assert!(matches!(err, OssirError::InvalidConfig(_)));
    }

    #[test]
    fn partial_ties_collapse_to_fewer_slices() {
        let ys = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0];
        assert!(SliceGrid::from_responses(&ys, 4, TiePolicy::Strict).is_err());
        let g = SliceGrid::from_responses(&ys, 4, TiePolicy::Collapse).unwrap();
        assert!(g.num_slices() < 4 && g.num_slices() >= 2);
        assert_eq!(g.requested_slices(), 4);
        assert!(!slice_occupancy(g.cuts(), &ys).contains(&0));
    }

    #[test]
    fn warmup_errors() {
        assert!(matches!(
            SliceGrid::from_responses(&[1.0, 2.0], 3, TiePolicy::Strict),
            Err(OssirError::InvalidConfig(_))
        ));
        assert!(matches!(
            SliceGrid::from_responses(&[1.0, f64::NAN, 3.0], 2, TiePolicy::Strict),
            Err(OssirError::InvalidData(_))
        ));
        assert!(SliceGrid::from_responses(&[1.0, 2.0], 1, TiePolicy::Strict).is_err());
    }

    #[test]
    fn indicator_extremes_and_boundary() {
        let g = SliceGrid::from_cuts(vec![-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(g.indicator(-1e9).unwrap().as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(g.indicator(1e9).unwrap().as_slice(), &[0.0, 0.0, 0.0, 1.0]);
        let g = SliceGrid::from_cuts(vec![0.0]).unwrap();
        assert_eq!(g.indicator(0.0).unwrap().as_slice(), &[1.0, 0.0]);
        assert!(g.indicator(f64::INFINITY).is_err());
    }

    #[test]
    fn first_observation_gives_zero_dhat() {
        let g = SliceGrid::from_cuts(vec![0.0]).unwrap();
        let mut k = KernelState::new(g, 3, Centering::Exact);
        k.update(&obs(&[1.0, -2.0, 5.0], 0.7)).unwrap();
        assert_eq!(k.dhat().amax(), 0.0);
    }

    #[test]
    fn identical_covariates_give_zero_dhat() {
        let g = SliceGrid::from_cuts(vec![0.0]).unwrap();
        let mut k = KernelState::new(g, 2, Centering::Exact);
        k.update(&obs(&[1.0, 2.0], -1.0)).unwrap();
        k.update(&obs(&[1.0, 2.0], 1.0)).unwrap();
        assert_abs_diff_eq!(k.dhat().amax(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_invalid_data() {
        let g = SliceGrid::from_cuts(vec![0.0]).unwrap();
        let mut k = KernelState::new(g, 2, Centering::Exact);
        assert!(matches!(
            k.update(&obs(&[1.0], 0.0)),
            Err(OssirError::InvalidData(_))
        ));
    }

    #[test]
    fn build_d_on_empty_state_errors() {
        let g = SliceGrid::from_cuts(vec![0.0]).unwrap();
        let k = KernelState::new(g, 2, Centering::Exact);
        assert!(matches!(k.build_d(), Err(OssirError::EmptyState(_))));
    }

    #[test]
    fn build_d_single_column_outer_product() {
        // p = 2, H = 2: dhat columns (1, 0) and (-1, 0) give D = [[1, 0], [0, 0]].
        let g = SliceGrid::from_cuts(vec![0.0]).unwrap();
        let mut k = KernelState::new(g, 2, Centering::Exact);
        k.update(&obs(&[2.0, 0.0], -1.0)).unwrap();
        k.update(&obs(&[-2.0, 0.0], 1.0)).unwrap();
        let d = k.build_d().unwrap();
        assert_abs_diff_eq!(d, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn recursive_centering_freezes_arrival_means() {
        let g = SliceGrid::from_cuts(vec![0.0]).unwrap();
        let mut exact = KernelState::new(g.clone(), 1, Centering::Exact);
        let mut rec = KernelState::new(g, 1, Centering::Recursive);
        for o in [obs(&[1.0], 1.0), obs(&[-1.0], -1.0)] {
            exact.update(&o).unwrap();
            rec.update(&o).unwrap();
        }
        assert_abs_diff_eq!(exact.dhat()[(0, 0)], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(exact.dhat()[(0, 1)], 0.5, epsilon = 1e-15);
        // recursive froze the first point at its own mean (centred value 0).
        assert_abs_diff_eq!(rec.dhat()[(0, 1)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rec.dhat()[(0, 0)], -0.5, epsilon = 1e-15);
    }
}
