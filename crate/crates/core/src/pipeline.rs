//! The streaming estimator: warm start on a small batch, then one observation
//! at a time run kernel update, eigen update, artificial response and a
//! truncated-gradient step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::eigen::{EigenState, TrackerConfig, EIGENVALUE_FLOOR};
use crate::error::{self, OssirError, Result};
use crate::kernel::{Centering, KernelState, Observation, SliceGrid, TiePolicy};
use crate::truncated_lasso::{SparseCoefModel, TruncationParams};

/// How the artificial response is normalized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseScale {
    /// `ytilde = (d_h^T eta) / (H lambda)`: the row of the batch artificial
    /// response matrix, so that regressing it on x targets `Sigma^-1 eta`.
    #[default]
    Batch,
    /// The same quantity divided by the current sample size `t`.
    Literal,
}

/// Learning rate of the truncated gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearningRate {
    Fixed(f64),
    /// `constant / trace(Sigma_warmup)`, set once at warmup.
    Scaled(f64),
}

impl Default for LearningRate {
    fn default() -> Self {
        LearningRate::Scaled(DEFAULT_RATE_CONSTANT)
    }
}

pub const DEFAULT_RATE_CONSTANT: f64 = 0.05;
pub const DEFAULT_GRAVITY: f64 = 0.25;
pub const GRAVITY_CONSTANT: f64 = 4.0;
pub const DEFAULT_SLICES: usize = 10;
pub const DEFAULT_WARMUP: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OssirConfig {
    pub slices: usize,
    pub rank: usize,
    pub tracker: TrackerConfig,
    pub rate: LearningRate,
    pub gravity: f64,
    #[serde(with = "crate::truncated_lasso::extended_float")]
    pub theta: f64,
    pub period: u64,
    /// Number of leading observations used for the warm start.
    pub warmup: usize,
    /// Lower bound on the warmup size; `None` means `5 * slices`.
    pub min_warmup: Option<usize>,
    pub centering: Centering,
    pub response_scale: ResponseScale,
    pub ties: TiePolicy,
    /// Regress the artificial response on `x - mean` instead of raw `x`.
    pub center_covariates: bool,
}

impl Default for OssirConfig {
    fn default() -> Self {
        Self {
            slices: DEFAULT_SLICES,
            rank: 1,
            tracker: TrackerConfig::default(),
            rate: LearningRate::default(),
            gravity: DEFAULT_GRAVITY,
            theta: f64::INFINITY,
            period: 10,
            warmup: DEFAULT_WARMUP,
            min_warmup: None,
            centering: Centering::Exact,
            response_scale: ResponseScale::Batch,
            ties: TiePolicy::Strict,
            center_covariates: true,
        }
    }
}

impl OssirConfig {
    pub fn required_warmup(&self) -> usize {
        let floor = self.min_warmup.unwrap_or(5 * self.slices);
        floor.max(self.slices).max(self.rank)
    }

    pub fn validate(&self) -> Result<()> {
        if self.slices < 2 {
            return error::config(format!("need at least 2 slices, got {}", self.slices));
        }
        if self.rank == 0 || self.rank > self.slices {
            return error::config(format!(
                "rank d = {} must lie in 1..=H = {}",
                self.rank, self.slices
            ));
        }
        self.tracker.validate()?;
        match self.rate {
            LearningRate::Fixed(g) | LearningRate::Scaled(g) if !(g > 0.0 && g.is_finite()) => {
                return error::config(format!("learning rate must be positive and finite, got {g}"));
            }
            _ => {}
        }
        if self.warmup < self.required_warmup() {
            return error::config(format!(
                "warmup size {} below the required minimum {}",
                self.warmup,
                self.required_warmup()
            ));
        }
        self.truncation(1.0).validate()
    }

    fn truncation(&self, gamma: f64) -> TruncationParams {
        TruncationParams {
            gamma,
            gravity: self.gravity,
            theta: self.theta,
            period: self.period,
        }
    }
}

/// Gravity `GRAVITY_CONSTANT * sqrt(ln p / n)` for a stream of `n` observations
/// in `p` dimensions, the lasso penalty scale at that sample size.
pub fn default_gravity(p: usize, n: usize) -> f64 {
    GRAVITY_CONSTANT * ((p.max(2) as f64).ln() / n.max(1) as f64).sqrt()
}

/// Periodic diagnostics emitted while streaming.
#[derive(Debug, Clone, PartialEq)]
pub struct Progress {
    pub t: u64,
    pub lambdas: DVector<f64>,
    pub nonzero: usize,
    pub distance: Option<f64>,
}

/// Unit-normalized directions plus a flag for every all-zero column.
#[derive(Debug, Clone, PartialEq)]
pub struct Directions {
    pub matrix: DMatrix<f64>,
    pub zero_columns: Vec<bool>,
}

impl Directions {
    pub fn from_raw(raw: &DMatrix<f64>) -> Self {
        let mut matrix = raw.clone();
        let mut zero_columns = Vec::with_capacity(raw.ncols());
        for mut col in matrix.column_iter_mut() {
            let n = col.norm();
            zero_columns.push(n == 0.0);
            if n > 0.0 {
                col /= n;
            }
        }
        Self {
            matrix,
            zero_columns,
        }
    }

    pub fn any_zero(&self) -> bool {
        self.zero_columns.iter().any(|&z| z)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OssirModel {
    config: OssirConfig,
    kernel: KernelState,
    eigen: EigenState,
    coef: SparseCoefModel,
    observed: u64,
    degenerate_responses: u64,
}

impl OssirModel {
    /// Fixes the slice grid, replays the batch into the kernel statistics and
    /// initializes the eigenpairs from a dense decomposition. Coefficients start at zero.
    pub fn warmup(batch: &[Observation], config: OssirConfig) -> Result<Self> {
        config.validate()?;
        let need = config.required_warmup();
        if batch.len() < need {
            return error::config(format!(
                "warmup batch has {} observations, need at least {need}",
                batch.len()
            ));
        }
        let p = batch[0].dim();
        if p == 0 {
            return error::data("observations have no covariates");
        }
        if let Some((i, _)) = batch.iter().enumerate().find(|(_, o)| o.dim() != p) {
            return error::data(format!("warmup observation {i} has a different dimension"));
        }
        let grid = SliceGrid::from_warmup(batch, config.slices, config.ties)?;
        if config.rank > grid.num_slices().min(p) {
            return error::config(format!(
                "rank d = {} exceeds min(p, H) = {}",
                config.rank,
                grid.num_slices().min(p)
            ));
        }
        let mut kernel = KernelState::new(grid, p, config.centering);
        for obs in batch {
            kernel.update(obs)?;
        }
        let ys: Vec<f64> = batch.iter().map(|o| o.y).collect();
        let eigen = EigenState::init(&kernel, config.rank, config.tracker, &ys)?;

        let gamma = match config.rate {
            LearningRate::Fixed(g) => g,
            LearningRate::Scaled(c) => {
                let trace = covariance_trace(batch, kernel.mean());
                if !(trace > 0.0) {
                    return Err(OssirError::Degenerate(
                        "warmup covariates have zero variance".into(),
                    ));
                }
                c / trace
            }
        };
        let coef = SparseCoefModel::new(p, config.rank, config.truncation(gamma))?;
        Ok(Self {
            config,
            kernel,
            eigen,
            coef,
            observed: 0,
            degenerate_responses: 0,
        })
    }

    pub fn config(&self) -> &OssirConfig {
        &self.config
    }

    pub fn kernel(&self) -> &KernelState {
        &self.kernel
    }

    pub fn eigen(&self) -> &EigenState {
        &self.eigen
    }

    pub fn coef(&self) -> &SparseCoefModel {
        &self.coef
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn rank(&self) -> usize {
        self.eigen.rank()
    }

    /// Total observations absorbed, warmup included.
    pub fn t(&self) -> u64 {
        self.kernel.t()
    }

    /// Observations streamed after the warmup.
    pub fn observed(&self) -> u64 {
        self.observed
    }

    /// Artificial-response coordinates zeroed because their eigenvalue hit the floor.
    pub fn degenerate_responses(&self) -> u64 {
        self.degenerate_responses
    }

    pub fn learning_rate(&self) -> f64 {
        self.coef.params().gamma
    }

    /// Artificial response for an observation already absorbed by the kernel
    /// and eigen states. Returns the response and the number of coordinates
    /// zeroed at the eigenvalue floor.
    pub fn artificial_response(&self, obs: &Observation) -> Result<(DVector<f64>, usize)> {
        let h = self.kernel.grid().slice_index(obs.y)?;
        let slice = self.kernel.dhat().column(h);
        let row = self.eigen.vectors().tr_mul(&slice);
        let mut scale = 1.0 / self.kernel.num_slices() as f64;
        if self.config.response_scale == ResponseScale::Literal {
            scale /= self.kernel.t().max(1) as f64;
        }
        let mut zeroed = 0;
        let resp = DVector::from_fn(self.rank(), |j, _| {
            let lambda = self.eigen.lambdas()[j];
            if lambda <= EIGENVALUE_FLOOR {
                zeroed += 1;
                0.0
            } else {
                row[j] * scale / lambda
            }
        });
        Ok((resp, zeroed))
    }

    /// Absorbs one observation: kernel, eigenpairs, artificial response, coefficients.
    pub fn observe(&mut self, obs: &Observation) -> Result<()> {
        if obs.dim() != self.dim() {
            return error::data(format!(
                "observation has {} covariates, expected {}",
                obs.dim(),
                self.dim()
            ));
        }
        if !obs.y.is_finite() || obs.x.iter().any(|v| !v.is_finite()) {
            return error::data("non-finite value in observation");
        }
        self.kernel.update(obs)?;
        self.eigen.step(&self.kernel, obs.y)?;
        let (resp, zeroed) = self.artificial_response(obs)?;
        self.degenerate_responses += zeroed as u64;
        if self.config.center_covariates {
            let x = &obs.x - self.kernel.mean();
            self.coef.tg_step(&x, &resp)?;
        } else {
            self.coef.tg_step(&obs.x, &resp)?;
        }
        self.observed += 1;
        Ok(())
    }

    /// Streams `stream`, calling `progress` after every `every` observations.
    /// `truth` enables the distance column of the progress record.
    pub fn observe_all<'a, I, F>(
        &mut self,
        stream: I,
        every: u64,
        truth: Option<&DMatrix<f64>>,
        mut progress: F,
    ) -> Result<()>
    where
        I: IntoIterator<Item = &'a Observation>,
        F: FnMut(&Progress),
    {
        for obs in stream {
            self.observe(obs)?;
            if every > 0 && self.observed % every == 0 {
                progress(&self.progress(truth));
            }
        }
        Ok(())
    }

    pub fn progress(&self, truth: Option<&DMatrix<f64>>) -> Progress {
        Progress {
            t: self.t(),
            lambdas: self.eigen.lambdas().clone(),
            nonzero: self.coef.nonzero_count(),
            distance: truth.map(|b| crate::simgen::subspace_distance(b, self.coef.betas())),
        }
    }

    /// Coefficient vectors normalized to unit length.
    pub fn current_directions(&self) -> Directions {
        Directions::from_raw(self.coef.betas())
    }

    /// Normalized coefficients with the pending truncation applied.
    pub fn sparse_directions(&self) -> Directions {
        Directions::from_raw(&self.coef.sparse_betas())
    }

    pub fn raw_coefficients(&self) -> &DMatrix<f64> {
        self.coef.betas()
    }

    pub fn snapshot(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn restore(json: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(json)?;
        model.kernel.validate()?;
        if model.eigen.dim() != model.kernel.dim() || model.coef.dim() != model.kernel.dim() {
            return error::data("snapshot components disagree on p");
        }
        Ok(model)
    }
}

fn covariance_trace(batch: &[Observation], mean: &DVector<f64>) -> f64 {
    let n = batch.len() as f64;
    batch.iter().map(|o| (&o.x - mean).norm_squared()).sum::<f64>() / (n - 1.0).max(1.0)
}
