use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::batch::{self, BatchDataset};
use crate::eigen::{Strategy, TrackerConfig};
use crate::error::{self, OssirError, Result};
use crate::kernel::Observation;
use crate::online_sir::OnlineSir;
use crate::pipeline::{OssirConfig, OssirModel};

/// The eight compared estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Truncated gradient with the perturbation tracker.
    M1,
    /// Truncated gradient with the SGD tracker.
    M2,
    /// Truncated gradient with CCIPCA.
    M3,
    /// Truncated gradient with incremental PCA.
    M4,
    /// Dense online SIR, perturbation tracker.
    M5,
    /// Dense online SIR, SGD tracker.
    M6,
    /// Batch SIR.
    M7,
    /// Batch Lasso-SIR.
    M8,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::M1,
        Method::M2,
        Method::M3,
        Method::M4,
        Method::M5,
        Method::M6,
        Method::M7,
        Method::M8,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::M1 => "M1",
            Method::M2 => "M2",
            Method::M3 => "M3",
            Method::M4 => "M4",
            Method::M5 => "M5",
            Method::M6 => "M6",
            Method::M7 => "M7",
            Method::M8 => "M8",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Method::M1 => "sparse online SIR, perturbation",
            Method::M2 => "sparse online SIR, SGD",
            Method::M3 => "sparse online SIR, CCIPCA",
            Method::M4 => "sparse online SIR, IPCA",
            Method::M5 => "online SIR, perturbation",
            Method::M6 => "online SIR, SGD",
            Method::M7 => "batch SIR",
            Method::M8 => "batch Lasso-SIR",
        }
    }

    /// Eigen tracker used by the streaming methods.
    pub fn tracker(self) -> Option<Strategy> {
        match self {
            Method::M1 | Method::M5 => Some(Strategy::Perturbation),
            Method::M2 | Method::M6 => Some(Strategy::Sgd),
            Method::M3 => Some(Strategy::Ccipca),
            Method::M4 => Some(Strategy::Ipca),
            Method::M7 | Method::M8 => None,
        }
    }

    /// Sparse streaming method built on `strategy`.
    pub fn from_tracker(strategy: Strategy) -> Method {
        match strategy {
            Strategy::Perturbation => Method::M1,
            Strategy::Sgd => Method::M2,
            Strategy::Ccipca => Method::M3,
            Strategy::Ipca => Method::M4,
        }
    }

    pub fn is_sparse_online(self) -> bool {
        matches!(self, Method::M1 | Method::M2 | Method::M3 | Method::M4)
    }

    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let m: Method = part.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return error::config("empty method list");
        }
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Method {
    type Err = OssirError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                OssirError::InvalidConfig(format!(
                    "unknown method '{s}' (valid: M1, M2, M3, M4, M5, M6, M7, M8)"
                ))
            })
    }
}

/// Result of one method on one data set.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    /// p x d direction estimate.
    pub estimate: DMatrix<f64>,
    /// Wall-clock seconds: the streaming loop for online methods, the whole
    /// fit for batch methods.
    pub seconds: f64,
    /// Non-zero coefficients for the sparse methods.
    pub nonzero: Option<usize>,
}

/// Fits `method` on `data`. The first `config.warmup` observations warm the
/// streaming methods up; the batch methods use everything.
pub fn run_method(method: Method, data: &[Observation], config: &OssirConfig) -> Result<MethodOutput> {
    if data.len() <= config.warmup {
        return error::config(format!(
            "{} observations leave nothing to stream after a warmup of {}",
            data.len(),
            config.warmup
        ));
    }
    let (warm, stream) = data.split_at(config.warmup);
    let mut start = Instant::now();
    let (estimate, nonzero) = match method {
        Method::M1 | Method::M2 | Method::M3 | Method::M4 => {
            let mut cfg = config.clone();
            cfg.tracker.strategy = method.tracker().expect("streaming method");
            let mut model = OssirModel::warmup(warm, cfg)?;
            start = Instant::now();
            for obs in stream {
                model.observe(obs)?;
            }
            let b = model.coef().sparse_betas();
            let nz = b.iter().filter(|v| **v != 0.0).count();
            (b, Some(nz))
        }
        Method::M5 | Method::M6 => {
            let tracker = TrackerConfig {
                strategy: method.tracker().expect("streaming method"),
                ..config.tracker
            };
            let mut model = OnlineSir::warmup(warm, config.slices, config.rank, tracker, config.ties)?;
            start = Instant::now();
            for obs in stream {
                model.observe(obs)?;
            }
            (model.directions(), None)
        }
        Method::M7 => {
            let ds = BatchDataset::from_observations(data, config.slices)?;
            (batch::batch_sir(&ds, config.rank)?, None)
        }
        Method::M8 => {
            let ds = BatchDataset::from_observations(data, config.slices)?;
            let b = batch::batch_lasso_sir(&ds, config.rank, None)?;
            let nz = b.iter().filter(|v| **v != 0.0).count();
            (b, Some(nz))
        }
    };
    Ok(MethodOutput {
        estimate,
        seconds: start.elapsed().as_secs_f64(),
        nonzero,
    })
}
