use nalgebra::DMatrix;

use super::EigenState;
use crate::error::{self, Result};
use crate::linalg;

/// Relative singular-value cutoff of the pseudo-inverse.
const PINV_CUTOFF: f64 = 1e-10;

impl EigenState {
    /// First-order perturbation update of the eigenpairs of the running
    /// average `Dbar_t = (1/t) sum_i D_i`.
    ///
    /// With `G = Dbar_t - D_{t+1}` and `eps = 1/(t+1)`:
    ///
    /// ```text
    ///   lambda_j <- lambda_j - eps * eta_j^T G eta_j
    ///   eta_j    <- eta_j - eps * (lambda_j I - Dbar_t)^+ G eta_j
    ///   Dbar     <- Dbar - eps * G
    /// ```
    ///
    /// The pseudo-inverse is applied in the eigenbasis of `Dbar_t`. Its null
    /// direction is the eigenvector of `Dbar_t` most aligned with `eta_j`
    /// (exactly the kernel of `lambda_j I - Dbar_t` when `lambda_j` is an
    /// eigenvalue), and the correction is kept orthogonal to `eta_j`.
    pub fn perturbation_step(&mut self, d_new: &DMatrix<f64>, t: u64) -> Result<()> {
        let p = self.dim();
        if d_new.shape() != (p, p) {
            return error::data(format!(
                "kernel matrix is {}x{}, expected {p}x{p}",
                d_new.nrows(),
                d_new.ncols()
            ));
        }
        let Some(dbar) = self.dbar.as_mut() else {
            return error::config("perturbation step needs the running kernel average");
        };
        let eps = 1.0 / (t as f64 + 1.0);
        let g = &*dbar - d_new;
        let eig = linalg::sym_eigen(dbar)?;
        let basis = &eig.vectors;

        for j in 0..self.lambdas.len() {
            let eta = self.vectors.column(j).clone_owned();
            let lambda = self.lambdas[j];
            let g_eta = &g * &eta;
            self.lambdas[j] = lambda - eps * eta.dot(&g_eta);

            let mut coeffs = basis.tr_mul(&g_eta);
            let own = basis
                .tr_mul(&eta)
                .iamax();
            let shifts = eig.values.map(|mu| lambda - mu);
            let largest = shifts.amax();
            for k in 0..p {
                let s = shifts[k];
                coeffs[k] = if k == own || s.abs() <= PINV_CUTOFF * largest {
                    0.0
                } else {
                    coeffs[k] / s
                };
            }
            let mut correction = basis * coeffs;
            let along = correction.dot(&eta);
            correction.axpy(-along, &eta, 1.0);

            let mut next = eta - correction * eps;
            let norm = next.norm();
            if norm > 0.0 {
                next /= norm;
                self.vectors.set_column(j, &next);
            }
        }
        *dbar -= &g * eps;
        linalg::symmetrize(dbar);
        self.step += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{EigenState, Strategy, TrackerConfig};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    fn state(dbar: DMatrix<f64>, lambda: f64) -> EigenState {
        let p = dbar.nrows();
        let mut e1 = DMatrix::zeros(p, 1);
        e1[(0, 0)] = 1.0;
        EigenState::from_parts(
            TrackerConfig::with_strategy(Strategy::Perturbation),
            DVector::from_vec(vec![lambda]),
            e1,
            Some(dbar),
            2,
        )
        .unwrap()
    }

    #[test]
    fn no_perturbation_no_change() {
        let dbar = diag(&[2.0, 1.0]);
        let mut es = state(dbar.clone(), 2.0);
        es.perturbation_step(&dbar, 7).unwrap();
        assert_eq!(es.lambdas()[0], 2.0);
        assert_eq!(es.vectors()[(0, 0)], 1.0);
        assert_eq!(es.dbar().unwrap(), &dbar);
    }

    #[test]
    fn diagonal_first_order_eigenvalue_shift() {
        let eps = 0.3;
        let t = 9u64;
        let mut es = state(diag(&[2.0, 1.0]), 2.0);
        es.perturbation_step(&diag(&[2.0 + eps, 1.0]), t).unwrap();
        assert_abs_diff_eq!(es.lambdas()[0], 2.0 + eps / (t as f64 + 1.0), epsilon = 1e-14);
        assert_abs_diff_eq!(es.vectors()[(0, 0)], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(es.dbar().unwrap()[(0, 0)], 2.0 + eps / 10.0, epsilon = 1e-14);
    }

    #[test]
    fn off_diagonal_perturbation_rotates_towards_first_order_answer() {
        // Q = diag(2, 1), G = -[[0, b], [b, 0]]: first-order eigenvector of
        // Q + eps*(-G) is e1 + eps * b / (2 - 1) e2.
        let b = 0.5;
        let t = 99u64;
        let eps = 1.0 / (t as f64 + 1.0);
        let mut es = state(diag(&[2.0, 1.0]), 2.0);
        let d_new = DMatrix::from_row_slice(2, 2, &[2.0, b, b, 1.0]);
        es.perturbation_step(&d_new, t).unwrap();
        let expected = eps * b;
        assert_abs_diff_eq!(es.vectors()[(1, 0)], expected, epsilon = 1e-6);
    }

    #[test]
    fn missing_running_average_is_a_config_error() {
        let mut es = EigenState::from_parts(
            TrackerConfig::with_strategy(Strategy::Ccipca),
            DVector::from_vec(vec![1.0]),
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            None,
            2,
        )
        .unwrap();
        assert!(es.perturbation_step(&DMatrix::zeros(2, 2), 3).is_err());
    }
}
