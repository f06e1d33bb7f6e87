//! Batch reference estimators: classical sliced inverse regression,
//! Lasso-SIR, a dense top-eigenpair routine and a coordinate-descent lasso.

use nalgebra::{DMatrix, DVector};

use crate::error::{self, OssirError, Result};
use crate::kernel::Observation;
use crate::linalg;

/// Default constant in the Lasso-SIR penalty `C sqrt(log p / (n lambda))`.
pub const DEFAULT_PENALTY_CONSTANT: f64 = 1.0;

/// Stored sample, one column of `x` per observation.
#[derive(Debug, Clone)]
pub struct BatchDataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    slices: usize,
}

impl BatchDataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, slices: usize) -> Result<Self> {
        let (p, n) = x.shape();
        if y.len() != n {
            return error::data(format!("x has {n} columns but y has {} entries", y.len()));
        }
        if slices < 2 {
            return error::config("need at least 2 slices");
        }
        if n < slices {
            return error::config(format!("{n} observations cannot fill {slices} slices"));
        }
        if p == 0 {
            return error::data("no covariates");
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return error::data("non-finite value in batch data");
        }
        Ok(Self { x, y, slices })
    }

    pub fn from_observations(data: &[Observation], slices: usize) -> Result<Self> {
        let Some(first) = data.first() else {
            return error::data("empty batch");
        };
        let p = first.dim();
        if data.iter().any(|o| o.dim() != p) {
            return error::data("observations disagree on p");
        }
        let x = DMatrix::from_fn(p, data.len(), |i, j| data[j].x[i]);
        let y = DVector::from_iterator(data.len(), data.iter().map(|o| o.y));
        Self::new(x, y, slices)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    /// Covariates with the sample mean removed from every row.
    pub fn centered_x(&self) -> DMatrix<f64> {
        let mean = self.x.column_mean();
        let mut xc = self.x.clone();
        for mut col in xc.column_iter_mut() {
            col -= &mean;
        }
        xc
    }

    /// Slice label of every observation: sort by response, `c = n / H` per
    /// slice, the remainder joins the last slice.
    pub fn slice_labels(&self) -> Vec<usize> {
        let n = self.len();
        let c = n / self.slices;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.y[a].total_cmp(&self.y[b]));
        let mut labels = vec![0; n];
        for (rank, &i) in order.iter().enumerate() {
            labels[i] = (rank / c).min(self.slices - 1);
        }
        labels
    }
}

/// Slice means of the centered covariates and the slice weights `n_h / n`.
pub struct SliceSummary {
    /// p x H.
    pub means: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub labels: Vec<usize>,
    /// Centered covariates, p x n.
    pub centered: DMatrix<f64>,
}

impl SliceSummary {
    pub fn new(data: &BatchDataset) -> Self {
        let centered = data.centered_x();
        let labels = data.slice_labels();
        let (p, h) = (data.dim(), data.slices());
        let mut means = DMatrix::zeros(p, h);
        let mut counts = vec![0usize; h];
        for (i, &l) in labels.iter().enumerate() {
            means.column_mut(l).axpy(1.0, &centered.column(i), 1.0);
            counts[l] += 1;
        }
        for (l, &c) in counts.iter().enumerate() {
            if c > 0 {
                means.column_mut(l).scale_mut(1.0 / c as f64);
            }
        }
        let n = data.len() as f64;
        let weights = DVector::from_iterator(h, counts.iter().map(|&c| c as f64 / n));
        Self {
            means,
            weights,
            labels,
            centered,
        }
    }

    /// `sum_h (n_h / n) xbar_h xbar_h^T`; equals `(1/H) X_H X_H^T` when the slices are equal.
    pub fn gamma(&self) -> DMatrix<f64> {
        let mut scaled = self.means.clone();
        for (mut col, w) in scaled.column_iter_mut().zip(self.weights.iter()) {
            col *= w.sqrt();
        }
        let mut g = &scaled * scaled.transpose();
        linalg::symmetrize(&mut g);
        g
    }
}

/// Top-d eigenpairs of a symmetric matrix, eigenvalues descending.
pub fn dense_top_eigen(s: &DMatrix<f64>, d: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if !linalg::is_symmetric(s, 1e-10) {
        return error::data("dense_top_eigen needs a symmetric matrix");
    }
    if d == 0 || d > s.nrows() {
        return error::config(format!("rank {d} outside 1..={}", s.nrows()));
    }
    let eig = linalg::sym_eigen(s)?;
    Ok((eig.values.rows(0, d).into_owned(), eig.vectors.columns(0, d).into_owned()))
}

/// Classical sliced inverse regression: top-d solutions of
/// `Gamma eta = lambda Sigma eta`, columns unit-normalized.
///
/// When `p >= n` the covariance gets a `1e-6 * trace / p` ridge so the
/// estimator degrades instead of failing.
pub fn batch_sir(data: &BatchDataset, d: usize) -> Result<DMatrix<f64>> {
    let (p, n) = (data.dim(), data.len());
    check_rank(d, p, data.slices())?;
    let summary = SliceSummary::new(data);
    let gamma = summary.gamma();
    if gamma.amax() == 0.0 {
        return Err(OssirError::Degenerate("all slice means are zero".into()));
    }
    let mut sigma = &summary.centered * summary.centered.transpose() / n as f64;
    linalg::symmetrize(&mut sigma);
    if p >= n {
        let ridge = 1e-6 * sigma.trace() / p as f64;
        for i in 0..p {
            sigma[(i, i)] += ridge;
        }
    }
    let eig = linalg::sym_eigen(&sigma)?;
    let top = eig.values[0];
    if !(top > 0.0) || eig.values[p - 1] <= 1e-12 * top {
        return Err(OssirError::Degenerate("sample covariance is singular".into()));
    }
    let inv_sqrt_diag = eig.values.map(|v| 1.0 / v.sqrt());
    let inv_sqrt = &eig.vectors * DMatrix::from_diagonal(&inv_sqrt_diag) * eig.vectors.transpose();
    let mut whitened = &inv_sqrt * gamma * &inv_sqrt;
    linalg::symmetrize(&mut whitened);
    let (_, u) = dense_top_eigen(&whitened, d)?;
    let mut dirs = inv_sqrt * u;
    for mut col in dirs.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    Ok(dirs)
}

/// Eigenpairs of the slice-mean matrix and the artificial responses built from them.
pub struct LassoSirParts {
    pub gamma: DMatrix<f64>,
    pub lambdas: DVector<f64>,
    /// p x d.
    pub eta: DMatrix<f64>,
    /// n x d; row i is `xbar_{h(i)}^T eta Lambda^-1`.
    pub ytilde: DMatrix<f64>,
    /// Centered covariates, p x n.
    pub centered: DMatrix<f64>,
}

pub fn lasso_sir_parts(data: &BatchDataset, d: usize) -> Result<LassoSirParts> {
    check_rank(d, data.dim(), data.slices())?;
    let summary = SliceSummary::new(data);
    let gamma = summary.gamma();
    let (lambdas, eta) = dense_top_eigen(&gamma, d)?;
    if !(lambdas[0] > 0.0) {
        return Err(OssirError::Degenerate("slice-mean matrix is zero".into()));
    }
    let per_slice = summary.means.tr_mul(&eta);
    let ytilde = DMatrix::from_fn(data.len(), d, |i, j| {
        let lam = lambdas[j].max(crate::eigen::EIGENVALUE_FLOOR);
        per_slice[(summary.labels[i], j)] / lam
    });
    Ok(LassoSirParts {
        gamma,
        lambdas,
        eta,
        ytilde,
        centered: summary.centered,
    })
}

/// `C sqrt(log p / (n lambda_j))` for every direction.
pub fn default_penalties(lambdas: &DVector<f64>, p: usize, n: usize, constant: f64) -> Vec<f64> {
    lambdas
        .iter()
        .map(|&l| {
            constant * ((p as f64).ln().max(1.0) / (n as f64 * l.max(crate::eigen::EIGENVALUE_FLOOR))).sqrt()
        })
        .collect()
}

/// Lasso-SIR: one lasso of each artificial-response column on the centered
/// covariates. `penalties = None` uses [`default_penalties`] with
/// [`DEFAULT_PENALTY_CONSTANT`]. Returns unnormalized coefficients (p x d).
pub fn batch_lasso_sir(data: &BatchDataset, d: usize, penalties: Option<&[f64]>) -> Result<DMatrix<f64>> {
    let parts = lasso_sir_parts(data, d)?;
    let mus = match penalties {
        Some(m) if m.len() == d => m.to_vec(),
        Some(m) => return error::config(format!("{} penalties for {d} directions", m.len())),
        None => default_penalties(&parts.lambdas, data.dim(), data.len(), DEFAULT_PENALTY_CONSTANT),
    };
    let design = parts.centered.transpose();
    let mut betas = DMatrix::zeros(data.dim(), d);
    for j in 0..d {
        let fit = lasso_cd(&design, &parts.ytilde.column(j).into_owned(), mus[j], &LassoOptions::default())?;
        betas.set_column(j, &fit.beta);
    }
    Ok(betas)
}

fn check_rank(d: usize, p: usize, h: usize) -> Result<()> {
    if d == 0 || d > p.min(h) {
        return error::config(format!("rank d = {d} must lie in 1..=min(p, H) = {}", p.min(h)));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct LassoOptions {
    /// Stop when the duality gap falls below `tol * max(1, |y|^2 / 2n)`.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_sweeps: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub beta: DVector<f64>,
    pub gap: f64,
    pub sweeps: usize,
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    z.signum() * (z.abs() - t).max(0.0)
}

/// Primal objective `(1/2n) |y - A b|^2 + mu |b|_1`.
pub fn lasso_objective(a: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, mu: f64) -> f64 {
    let n = a.nrows() as f64;
    (y - a * beta).norm_squared() / (2.0 * n) + mu * beta.lp_norm(1)
}

/// Duality gap of `beta` for the lasso with design `a` (n x p).
pub fn lasso_duality_gap(a: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, mu: f64) -> f64 {
    let n = a.nrows() as f64;
    let r = y - a * beta;
    let primal = r.norm_squared() / (2.0 * n) + mu * beta.lp_norm(1);
    let corr = (a.tr_mul(&r) / n).amax();
    let s = if corr > mu { mu / corr } else { 1.0 };
    let nu = &r * (s / n);
    let dual = nu.dot(y) - n / 2.0 * nu.norm_squared();
    (primal - dual).max(0.0)
}

/// Largest violation of the lasso optimality conditions: `|a_k^T r / n| <= mu`
/// on zero coordinates and `a_k^T r / n = mu sign(b_k)` elsewhere.
pub fn lasso_kkt_violation(a: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, mu: f64) -> f64 {
    let n = a.nrows() as f64;
    let grad = a.tr_mul(&(y - a * beta)) / n;
    grad.iter()
        .zip(beta.iter())
        .map(|(&g, &b)| {
            if b == 0.0 {
                (g.abs() - mu).max(0.0)
            } else {
                (g - mu * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Cyclic coordinate descent for `(1/2n) |y - A b|^2 + mu |b|_1`, design `a` n x p.
pub fn lasso_cd(a: &DMatrix<f64>, y: &DVector<f64>, mu: f64, opts: &LassoOptions) -> Result<LassoFit> {
    let (n, p) = a.shape();
    if y.len() != n {
        return error::data(format!("design has {n} rows but response has {}", y.len()));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return error::config(format!("penalty must be non-negative, got {mu}"));
    }
    let nf = n as f64;
    let col_sq: Vec<f64> = (0..p).map(|k| a.column(k).norm_squared() / nf).collect();
    let scale = (y.norm_squared() / (2.0 * nf)).max(1.0);
    let mut beta = DVector::zeros(p);
    let mut resid = y.clone();
    let mut gap = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        for k in 0..p {
            if col_sq[k] == 0.0 {
                continue;
            }
            let old = beta[k];
            let z = a.column(k).dot(&resid) / nf + col_sq[k] * old;
            let new = soft_threshold(z, mu) / col_sq[k];
            if new != old {
                resid.axpy(old - new, &a.column(k), 1.0);
                beta[k] = new;
            }
        }
        if sweep % 10 == 0 || sweep == opts.max_sweeps {
            gap = lasso_duality_gap(a, y, &beta, mu);
            // Without a penalty the dual is degenerate; fall back to stationarity.
            let converged = if mu == 0.0 {
                lasso_kkt_violation(a, y, &beta, 0.0) <= opts.tol
            } else {
                gap <= opts.tol * scale
            };
            if converged {
                return Ok(LassoFit { beta, gap, sweeps: sweep });
            }
        }
    }
    Err(OssirError::NonConvergence {
        iterations: opts.max_sweeps,
        gap,
        tol: opts.tol * scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn top_eigen_of_diagonal() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let (vals, vecs) = dense_top_eigen(&s, 2).unwrap();
        assert_abs_diff_eq!(vals, DVector::from_vec(vec![3.0, 2.0]), epsilon = 1e-12);
        assert_abs_diff_eq!(vecs[(0, 0)].abs(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vecs[(1, 1)].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn top_eigen_rejects_asymmetric() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(dense_top_eigen(&s, 1).is_err());
    }

    #[test]
    fn soft_threshold_values() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
    }

    #[test]
    fn zero_penalty_is_least_squares() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 2.5, 0.5]);
        let fit = lasso_cd(&a, &y, 0.0, &LassoOptions::default()).unwrap();
        let ols = (a.transpose() * &a).cholesky().unwrap().solve(&(a.transpose() * &y));
        assert_abs_diff_eq!(fit.beta, ols, epsilon = 1e-6);
    }

    #[test]
    fn huge_penalty_gives_zero() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let fit = lasso_cd(&a, &y, 1e6, &LassoOptions::default()).unwrap();
        assert_eq!(fit.beta, DVector::zeros(2));
    }

    #[test]
    fn equal_count_slices_put_remainder_last() {
        let x = DMatrix::from_fn(1, 7, |_, j| j as f64);
        let y = DVector::from_fn(7, |i, _| -(i as f64));
        let data = BatchDataset::new(x, y, 3).unwrap();
        // c = 2; sorted responses are observations 6, 5, ..., 0.
        assert_eq!(data.slice_labels(), vec![2, 2, 2, 1, 1, 0, 0]);
    }

    #[test]
    fn null_slice_means_are_degenerate() {
        // Every slice has the same covariate mean.
        let x = DMatrix::from_row_slice(1, 4, &[1.0, -1.0, -1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let data = BatchDataset::new(x, y, 2).unwrap();
        assert!(matches!(batch_sir(&data, 1), Err(OssirError::Degenerate(_))));
    }
}
