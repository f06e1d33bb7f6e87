use nalgebra::{DMatrix, DVector};

use super::EigenState;
use crate::error::{self, Result};
use crate::linalg;

impl EigenState {
    /// Stochastic-gradient (Oja with deflation) step at rate `rate`.
    ///
    /// With `F = dhat / sqrt(H)` and `phi_j = F^T eta_j`:
    ///
    /// ```text
    ///   lambda_j <- lambda_j + rate (phi_j^T phi_j - lambda_j)
    ///   eta_j    <- eta_j + rate / s [F phi_j - eta_j phi_j^T phi_j - 2 sum_{i<j} eta_i phi_i^T phi_j]
    /// ```
    ///
    /// where `s` is the eigenvalue scale recorded at initialization. Columns
    /// are renormalized every step; when `orthonormalize` is set the whole
    /// basis goes through Gram-Schmidt instead.
    pub fn sgd_step(&mut self, dhat: &DMatrix<f64>, rate: f64, orthonormalize: bool) -> Result<()> {
        self.check_dhat(dhat)?;
        if !(rate >= 0.0 && rate.is_finite()) {
            return error::config(format!("SGD rate must be finite and non-negative, got {rate}"));
        }
        let f = dhat / (dhat.ncols() as f64).sqrt();
        let phi = f.tr_mul(&self.vectors);
        let gains = phi.tr_mul(&phi);
        let vector_rate = rate / self.sgd_scale;

        let mut next = self.vectors.clone();
        for j in 0..self.rank() {
            let pj = phi.column(j);
            let mut grad: DVector<f64> = &f * pj;
            grad.axpy(-gains[(j, j)], &self.vectors.column(j), 1.0);
            for i in 0..j {
                grad.axpy(-2.0 * gains[(i, j)], &self.vectors.column(i), 1.0);
            }
            next.column_mut(j).axpy(vector_rate, &grad, 1.0);
            self.lambdas[j] += rate * (gains[(j, j)] - self.lambdas[j]);
        }

        if orthonormalize {
            linalg::gram_schmidt(&mut next);
        } else {
            for mut col in next.column_iter_mut() {
                let n = col.norm();
                if n > 0.0 {
                    col /= n;
                }
            }
        }
        self.vectors = next;
        self.step += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{EigenState, Strategy, TrackerConfig};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn state(lambdas: &[f64], vectors: DMatrix<f64>) -> EigenState {
        EigenState::from_parts(
            TrackerConfig::with_strategy(Strategy::Sgd),
            DVector::from_column_slice(lambdas),
            vectors,
            None,
            1,
        )
        .unwrap()
    }

    #[test]
    fn zero_rate_leaves_state_unchanged() {
        let v = DMatrix::from_column_slice(3, 1, &[0.6, 0.0, 0.8]);
        let mut es = state(&[1.5], v.clone());
        let dhat = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        es.sgd_step(&dhat, 0.0, false).unwrap();
        assert_eq!(es.lambdas()[0], 1.5);
        assert_abs_diff_eq!(es.vectors().clone(), v, epsilon = 1e-15);
    }

    #[test]
    fn eigenvalue_fixed_point_is_squared_projection() {
        let c = DVector::<f64>::from_vec(vec![1.0, 2.0, 0.0]);
        let eta = DMatrix::from_column_slice(3, 1, &[0.6, 0.0, 0.8]);
        let fixed = c.dot(&eta.column(0)).powi(2);
        let mut es = state(&[fixed], eta);
        let dhat = DMatrix::from_column_slice(3, 1, c.as_slice());
        es.sgd_step(&dhat, 0.3, false).unwrap();
        assert_abs_diff_eq!(es.lambdas()[0], fixed, epsilon = 1e-14);
    }

    #[test]
    fn stationary_input_converges_to_top_direction() {
        let c = DVector::from_vec(vec![3.0, -1.0, 1.0, 0.5]);
        let dhat = DMatrix::from_column_slice(4, 1, c.as_slice());
        let mut es = state(&[1.0], DMatrix::from_column_slice(4, 1, &[0.5; 4]));
        for t in 1..=5000u64 {
            es.sgd_step(&dhat, (5.0 / (t as f64 + 10.0)).min(0.5), t % 50 == 0).unwrap();
        }
        let cos = es.vectors().column(0).dot(&c.normalize()).abs();
        assert!(cos > 1.0 - 1e-8, "cos {cos}");
    }

    #[test]
    fn gram_schmidt_steps_are_orthonormal() {
        let dhat = DMatrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 1.0, 0.5, 0.5]);
        let v = DMatrix::from_column_slice(3, 2, &[0.8, 0.6, 0.0, 0.6, 0.8, 0.0]);
        let mut es = state(&[1.0, 0.5], v);
        es.sgd_step(&dhat, 0.2, true).unwrap();
        let v = es.vectors();
        assert!(v.column(0).dot(&v.column(1)).abs() < 1e-12);
        assert!((v.column(1).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_rate_is_rejected() {
        let mut es = state(&[1.0], DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
        assert!(es.sgd_step(&DMatrix::zeros(2, 1), -0.1, false).is_err());
    }
}
