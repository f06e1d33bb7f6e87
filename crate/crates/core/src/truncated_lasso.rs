//! Online L1-regularized least squares by truncated gradient.
//!
//! Each of the `d` coefficient vectors is an independent regression of one
//! artificial-response coordinate on the shared covariate vector. Every
//! `period` steps, coordinates with magnitude at most `theta` are pulled toward
//! zero by `gravity * gamma * period` and clamped there.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{self, Result};

/// Truncation operator: shrinks `v` toward zero by `alpha` when `|v| <= theta`,
/// stopping at zero; larger values pass through.
pub fn truncate(v: f64, alpha: f64, theta: f64) -> f64 {
    if (0.0..=theta).contains(&v) {
        (v - alpha).max(0.0)
    } else if v < 0.0 && v >= -theta {
        (v + alpha).min(0.0)
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationParams {
    /// Learning rate.
    pub gamma: f64,
    /// Gravity; `0` turns the model into plain SGD least squares.
    pub gravity: f64,
    /// Only coordinates with `|beta| <= theta` are truncated. May be infinite.
    #[serde(with = "extended_float")]
    pub theta: f64,
    /// Truncate every this many steps.
    pub period: u64,
}

impl Default for TruncationParams {
    fn default() -> Self {
        Self {
            gamma: 0.01,
            gravity: 0.0,
            theta: f64::INFINITY,
            period: 10,
        }
    }
}

impl TruncationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return error::config(format!("gamma must be positive and finite, got {}", self.gamma));
        }
        if !(self.gravity >= 0.0 && self.gravity.is_finite()) {
            return error::config(format!("gravity must be non-negative, got {}", self.gravity));
        }
        if !(self.theta >= 0.0) {
            return error::config(format!("theta must be non-negative, got {}", self.theta));
        }
        if self.period == 0 {
            return error::config("period must be at least 1");
        }
        Ok(())
    }

    /// Amount removed from an eligible coordinate at each truncation.
    pub fn shrinkage(&self) -> f64 {
        self.gravity * self.gamma * self.period as f64
    }

    /// Penalty `mu` of `(1/2n) |y - X b|^2 + mu |b|_1` whose minimizer the
    /// truncated-gradient iterates approach for small `gamma`.
    pub fn matched_lasso_penalty(&self) -> f64 {
        self.gravity / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCoefModel {
    params: TruncationParams,
    /// p x d; column `j` is the coefficient vector of direction `j`.
    betas: DMatrix<f64>,
    step: u64,
}

impl SparseCoefModel {
    /// Zero-initialized model.
    pub fn new(p: usize, d: usize, params: TruncationParams) -> Result<Self> {
        params.validate()?;
        if p == 0 || d == 0 {
            return error::config("coefficient model needs p >= 1 and d >= 1");
        }
        Ok(Self {
            params,
            betas: DMatrix::zeros(p, d),
            step: 0,
        })
    }

    pub fn params(&self) -> &TruncationParams {
        &self.params
    }

    pub fn betas(&self) -> &DMatrix<f64> {
        &self.betas
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.betas.nrows()
    }

    pub fn rank(&self) -> usize {
        self.betas.ncols()
    }

    /// One truncated-gradient step: truncate if the step counter is a
    /// multiple of the period, then take the squared-error gradient step
    /// `beta_j += 2 gamma (ytilde_j - beta_j^T x) x` for every direction.
    pub fn tg_step(&mut self, x: &DVector<f64>, ytilde: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return error::data(format!("x has length {}, expected {}", x.len(), self.dim()));
        }
        if ytilde.len() != self.rank() {
            return error::data(format!(
                "artificial response has length {}, expected {}",
                ytilde.len(),
                self.rank()
            ));
        }
        self.step += 1;
        if self.step % self.params.period == 0 {
            self.apply_truncation();
        }
        let two_gamma = 2.0 * self.params.gamma;
        for j in 0..self.rank() {
            let residual = ytilde[j] - self.betas.column(j).dot(x);
            self.betas.column_mut(j).axpy(two_gamma * residual, x, 1.0);
        }
        Ok(())
    }

    /// Applies one truncation to every coefficient immediately.
    pub fn apply_truncation(&mut self) {
        let alpha = self.params.shrinkage();
        let theta = self.params.theta;
        if alpha > 0.0 {
            self.betas.apply(|b| *b = truncate(*b, alpha, theta));
        }
    }

    /// Coefficients with the next truncation applied, without mutating the model.
    ///
    /// Between truncations the gradient steps leave small non-zero values on
    /// inactive coordinates; this view exposes the support the model is
    /// converging to.
    pub fn sparse_betas(&self) -> DMatrix<f64> {
        let mut b = self.betas.clone();
        let alpha = self.params.shrinkage();
        let theta = self.params.theta;
        if alpha > 0.0 {
            b.apply(|v| *v = truncate(*v, alpha, theta));
        }
        b
    }

    /// Exact zeros in the stored coefficients.
    pub fn zero_count(&self) -> usize {
        self.betas.iter().filter(|&&b| b == 0.0).count()
    }

    pub fn nonzero_count(&self) -> usize {
        self.betas.len() - self.zero_count()
    }
}

/// Replays the same `(x, ytilde)` stream through a fresh copy of `template`
/// for every gravity value.
pub fn regularization_path(
    template: &SparseCoefModel,
    gravities: &[f64],
    stream: &[(DVector<f64>, DVector<f64>)],
) -> Result<Vec<SparseCoefModel>> {
    if gravities.is_empty() {
        return error::config("regularization path needs at least one gravity value");
    }
    gravities
        .iter()
        .map(|&g| {
            let params = TruncationParams {
                gravity: g,
                ..template.params
            };
            let mut model = SparseCoefModel::new(template.dim(), template.rank(), params)?;
            for (x, yt) in stream {
                model.tg_step(x, yt)?;
            }
            Ok(model)
        })
        .collect()
}

/// Serializes infinities as the strings `"inf"` / `"-inf"`, which JSON lacks.
pub(crate) mod extended_float {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn truncation_branches() {
        assert_abs_diff_eq!(truncate(0.5, 0.2, 1.0), 0.3, epsilon = 1e-15);
        assert_eq!(truncate(-0.1, 0.2, 1.0), 0.0);
        assert_eq!(truncate(2.0, 0.2, 1.0), 2.0);
        assert_eq!(truncate(-2.0, 0.2, 1.0), -2.0);
        assert_abs_diff_eq!(truncate(-0.5, 0.2, f64::INFINITY), -0.3, epsilon = 1e-15);
    }

    fn params(gamma: f64, gravity: f64) -> TruncationParams {
        TruncationParams {
            gamma,
            gravity,
            theta: f64::INFINITY,
            period: 1,
        }
    }

    #[test]
    fn first_step_from_zero() {
        let gamma = 0.05;
        let mut m = SparseCoefModel::new(3, 1, params(gamma, 0.0)).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        m.tg_step(&x, &DVector::from_vec(vec![1.0])).unwrap();
        assert_abs_diff_eq!(m.betas()[(0, 0)], 2.0 * gamma, epsilon = 1e-15);
        assert_eq!(m.betas()[(1, 0)], 0.0);
    }

    #[test]
    fn zero_rate_limit_leaves_model_unchanged() {
        // gamma must be positive, so check the gradient step vanishes on a perfect fit.
        let mut m = SparseCoefModel::new(2, 1, params(0.1, 0.0)).unwrap();
        let x = DVector::from_vec(vec![1.0, 1.0]);
        m.tg_step(&x, &DVector::from_vec(vec![0.0])).unwrap();
        assert_eq!(m.betas(), &DMatrix::zeros(2, 1));
    }

    #[test]
    fn huge_gravity_zeroes_everything_at_truncation() {
        let mut m = SparseCoefModel::new(2, 1, params(0.1, 1e3)).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0]);
        m.tg_step(&x, &DVector::from_vec(vec![3.0])).unwrap();
        m.apply_truncation();
        assert_eq!(m.zero_count(), 2);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut m = SparseCoefModel::new(2, 1, params(0.1, 0.0)).unwrap();
        assert!(m.tg_step(&DVector::zeros(3), &DVector::zeros(1)).is_err());
        assert!(m.tg_step(&DVector::zeros(2), &DVector::zeros(2)).is_err());
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(params(0.0, 0.0).validate().is_err());
        assert!(params(0.1, -1.0).validate().is_err());
        let mut p = params(0.1, 0.0);
        p.period = 0;
        assert!(p.validate().is_err());
        p.period = 1;
        p.theta = f64::NAN;
        assert!(p.validate().is_err());
    }

    #[test]
    fn empty_gravity_list_is_an_error() {
        let m = SparseCoefModel::new(2, 1, params(0.1, 0.0)).unwrap();
        assert!(regularization_path(&m, &[], &[]).is_err());
    }

    #[test]
    fn zero_gravity_path_is_plain_least_squares() {
        let template = SparseCoefModel::new(2, 1, params(0.05, 0.3)).unwrap();
        let stream: Vec<_> = (0..50)
            .map(|i| {
                let a = (i as f64 * 0.7).sin();
                let b = (i as f64 * 1.3).cos();
                (DVector::from_vec(vec![a, b]), DVector::from_vec(vec![2.0 * a - b]))
            })
            .collect();
        let path = regularization_path(&template, &[0.0], &stream).unwrap();
        let mut plain = SparseCoefModel::new(2, 1, params(0.05, 0.0)).unwrap();
        for (x, y) in &stream {
            plain.tg_step(x, y).unwrap();
        }
        assert_eq!(path[0].betas(), plain.betas());
    }
}
