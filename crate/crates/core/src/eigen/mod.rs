//! Online top-d eigen-tracking of the slice kernel `D_t`.
//!
//! Four interchangeable strategies are provided:
//!
//! | strategy       | per-step cost                         | needs p x p storage |
//! |----------------|---------------------------------------|---------------------|
//! | `Ccipca`       | O(pdH)                                | no                  |
//! | `Perturbation` | O(p^3 + p^2 d)                        | yes (`D_t`, `Dbar`) |
//! | `Sgd`          | O(pdH), O(p d^2) on re-orthonormalization | no              |
//! | `Ipca`         | O(pH(d+1) + H(d+1)^2 + (d+1)^3)       | no                  |
//!
//! Every strategy except the perturbation one works on the p x H factor
//! `F = dhat / sqrt(H)` (so that `F F^T = D_t`) and never forms `D_t`.
//! All eigenvalues therefore live on the scale of `D_t` itself.

mod ccipca;
mod ipca;
mod perturbation;
mod sgd;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{self, OssirError, Result};
use crate::kernel::KernelState;
use crate::linalg;

/// Eigenvalues are clamped to this floor before any reciprocal is taken.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

/// Norm below which a CCIPCA vector or an IPCA residual counts as vanished.
pub const VANISHING_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Ccipca,
    Perturbation,
    Sgd,
    Ipca,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Ccipca,
        Strategy::Perturbation,
        Strategy::Sgd,
        Strategy::Ipca,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Ccipca => "ccipca",
            Strategy::Perturbation => "perturbation",
            Strategy::Sgd => "sgd",
            Strategy::Ipca => "ipca",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Strategy {
    type Err = OssirError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ccipca" => Ok(Strategy::Ccipca),
            "perturbation" => Ok(Strategy::Perturbation),
            "sgd" | "gd" => Ok(Strategy::Sgd),
            "ipca" => Ok(Strategy::Ipca),
            other => error::config(format!(
                "unknown tracker '{other}' (expected one of ccipca, perturbation, sgd, ipca)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub strategy: Strategy,
    /// `C` in the SGD step size `gamma_t = C / t`.
    pub sgd_rate_constant: f64,
    /// SGD and the perturbation tracker re-orthonormalize with Gram-Schmidt
    /// every this many steps.
    pub orthonormalize_every: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Ccipca,
            sgd_rate_constant: 5.0,
            orthonormalize_every: 50,
        }
    }
}

impl TrackerConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        Self {
            strategy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sgd_rate_constant > 0.0 && self.sgd_rate_constant.is_finite()) {
            return error::config("sgd_rate_constant must be positive and finite");
        }
        if self.orthonormalize_every == 0 {
            return error::config("orthonormalize_every must be at least 1");
        }
        Ok(())
    }
}

/// Running response means per slice, used by IPCA to place each new point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceMeans {
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl SliceMeans {
    pub fn new(slices: usize) -> Self {
        Self {
            sums: vec![0.0; slices],
            counts: vec![0; slices],
        }
    }

    pub fn record(&mut self, slice: usize, y: f64) {
        self.sums[slice] += y;
        self.counts[slice] += 1;
    }

    pub fn mean(&self, slice: usize) -> Option<f64> {
        (self.counts[slice] > 0).then(|| self.sums[slice] / self.counts[slice] as f64)
    }

    /// Slice whose mean response is closest to `y`; ties go to the lower index.
    pub fn nearest(&self, y: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for h in 0..self.sums.len() {
            if let Some(m) = self.mean(h) {
                let dist = (y - m).abs();
                if best.is_none_or(|(_, b)| dist < b) {
                    best = Some((h, dist));
                }
            }
        }
        best.map(|(h, _)| h)
    }
}

/// Current top-d eigenpair estimates of `D_t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenState {
    config: TrackerConfig,
    lambdas: DVector<f64>,
    /// p x d, unit columns.
    vectors: DMatrix<f64>,
    /// CCIPCA's unnormalized vectors `v_j`, with `lambda_j = |v_j|`.
    raw_v: Option<DMatrix<f64>>,
    /// Running average `Dbar_t` of the kernel matrices (perturbation only).
    dbar: Option<DMatrix<f64>>,
    slice_means: Option<SliceMeans>,
    /// Eigenvalue scale at initialization; normalizes the SGD vector step.
    sgd_scale: f64,
    step: u64,
    reinitializations: u64,
}

impl EigenState {
    /// Warm start from a dense eigendecomposition of the current kernel matrix.
    ///
    /// `warmup_responses` seeds the IPCA slice means and is ignored by the
    /// other strategies.
    pub fn init(
        kernel: &KernelState,
        d: usize,
        config: TrackerConfig,
        warmup_responses: &[f64],
    ) -> Result<Self> {
        config.validate()?;
        let (p, h) = (kernel.dim(), kernel.num_slices());
        if d == 0 || d > p.min(h) {
            return error::config(format!(
                "target rank d = {d} must lie in 1..=min(p, H) = {}",
                p.min(h)
            ));
        }
        let dmat = kernel.build_d()?;
        let eig = linalg::sym_eigen(&dmat)?;
        let scale = (kernel.cross_sum().norm() / kernel.t() as f64).powi(2);
        if eig.values[0] <= 0.0 || eig.values[0] <= 1e-20 * scale {
            return Err(OssirError::Degenerate(
                "kernel matrix is zero: the warmup covariates carry no slice signal".into(),
            ));
        }
        let lambdas = DVector::from_iterator(d, eig.values.iter().take(d).map(|&v| v.max(0.0)));
        let vectors = eig.vectors.columns(0, d).into_owned();

        let raw_v = (config.strategy == Strategy::Ccipca)
            .then(|| DMatrix::from_fn(p, d, |i, j| vectors[(i, j)] * lambdas[j]));
        let dbar = (config.strategy == Strategy::Perturbation).then(|| dmat.clone());
        let slice_means = (config.strategy == Strategy::Ipca)
            .then(|| -> Result<SliceMeans> {
                let mut m = SliceMeans::new(h);
                for &y in warmup_responses {
                    m.record(kernel.grid().slice_index(y)?, y);
                }
                Ok(m)
            })
            .transpose()?;

        Ok(Self {
            config,
            sgd_scale: lambdas[0].max(EIGENVALUE_FLOOR),
            lambdas,
            vectors,
            raw_v,
            dbar,
            slice_means,
            step: 0,
            reinitializations: 0,
        })
    }

    /// Builds a state from explicit eigenpairs, e.g. to replay a known start.
    pub fn from_parts(
        config: TrackerConfig,
        lambdas: DVector<f64>,
        vectors: DMatrix<f64>,
        dbar: Option<DMatrix<f64>>,
        slices: usize,
    ) -> Result<Self> {
        config.validate()?;
        let d = lambdas.len();
        if vectors.ncols() != d || d == 0 {
            return error::data("eigenvalue/eigenvector count mismatch");
        }
        let p = vectors.nrows();
        if config.strategy == Strategy::Perturbation {
            match &dbar {
                Some(m) if m.shape() == (p, p) => {}
                _ => return error::config("perturbation tracker needs a p x p running kernel"),
            }
        }
        let raw_v = (config.strategy == Strategy::Ccipca)
            .then(|| DMatrix::from_fn(p, d, |i, j| vectors[(i, j)] * lambdas[j]));
        Ok(Self {
            config,
            sgd_scale: lambdas.max().max(EIGENVALUE_FLOOR),
            lambdas,
            vectors,
            raw_v,
            dbar,
            slice_means: (config.strategy == Strategy::Ipca).then(|| SliceMeans::new(slices)),
            step: 0,
            reinitializations: 0,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn strategy(&self) -> Strategy {
        self.config.strategy
    }

    pub fn rank(&self) -> usize {
        self.lambdas.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn lambdas(&self) -> &DVector<f64> {
        &self.lambdas
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn raw_v(&self) -> Option<&DMatrix<f64>> {
        self.raw_v.as_ref()
    }

    pub fn dbar(&self) -> Option<&DMatrix<f64>> {
        self.dbar.as_ref()
    }

    pub fn slice_means(&self) -> Option<&SliceMeans> {
        self.slice_means.as_ref()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Number of CCIPCA components restarted after their vector vanished.
    pub fn reinitializations(&self) -> u64 {
        self.reinitializations
    }

    /// Eigenvalues clamped at [`EIGENVALUE_FLOOR`].
    pub fn clamped_lambdas(&self) -> DVector<f64> {
        self.lambdas.map(|l| l.max(EIGENVALUE_FLOOR))
    }

    /// Advances the estimate with the kernel state that has just absorbed the
    /// observation whose response is `y`.
    pub fn step(&mut self, kernel: &KernelState, y: f64) -> Result<()> {
        if kernel.dim() != self.dim() {
            return error::data("kernel and eigen state disagree on p");
        }
        let t = kernel.t();
        if t < 2 {
            return Err(OssirError::EmptyState(
                "eigen tracking needs an initialized kernel".into(),
            ));
        }
        let t_prev = t - 1;
        let previous = self.vectors.clone();
        match self.config.strategy {
            Strategy::Ccipca => self.ccipca_step(kernel.dhat(), t_prev)?,
            Strategy::Perturbation => {
                let d_new = kernel.build_d()?;
                self.perturbation_step(&d_new, t_prev)?;
                if self.step % self.config.orthonormalize_every == 0 {
                    linalg::gram_schmidt(&mut self.vectors);
                }
            }
            Strategy::Sgd => {
                let rate = self.config.sgd_rate_constant / t_prev as f64;
                let next = self.step + 1;
                let orthonormalize = next % self.config.orthonormalize_every == 0;
                self.sgd_step(kernel.dhat(), rate, orthonormalize)?
            }
            Strategy::Ipca => {
                let slice = kernel.grid().slice_index(y)?;
                let means = self
                    .slice_means
                    .as_mut()
                    .expect("IPCA state carries slice means");
                let k = means.nearest(y).unwrap_or(slice);
                means.record(slice, y);
                self.ipca_step(kernel.dhat(), k)?
            }
        }
        self.align_signs(&previous);
        Ok(())
    }

    /// Flips each eigenvector whose inner product with its predecessor is negative.
    fn align_signs(&mut self, previous: &DMatrix<f64>) {
        for j in 0..self.rank() {
            if self.vectors.column(j).dot(&previous.column(j)) < 0.0 {
                self.vectors.column_mut(j).neg_mut();
                if let Some(v) = self.raw_v.as_mut() {
                    v.column_mut(j).neg_mut();
                }
            }
        }
    }

    fn check_dhat(&self, dhat: &DMatrix<f64>) -> Result<()> {
        if dhat.nrows() != self.dim() || dhat.ncols() == 0 {
            return error::data(format!(
                "slice matrix is {}x{}, expected {} rows",
                dhat.nrows(),
                dhat.ncols(),
                self.dim()
            ));
        }
        Ok(())
    }
}
