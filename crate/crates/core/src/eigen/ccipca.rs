use nalgebra::{DMatrix, DVector};

use super::{EigenState, VANISHING_NORM};
use crate::error::Result;

impl EigenState {
    /// Candid covariance-free incremental PCA step on the freshly updated `dhat`.
    ///
    /// For `j = 1..d`, with `W_1 = dhat / sqrt(H)` and `u = v_j / |v_j|`:
    ///
    /// ```text
    ///   v_j <- t/(t+1) v_j + 1/(t+1) W_j (W_j^T u)
    ///   W_{j+1} = W_j - eta_j eta_j^T W_j,     eta_j = v_j / |v_j|
    /// ```
    ///
    /// `W W^T u` is always evaluated as two thin products, never as a p x p matrix.
    pub fn ccipca_step(&mut self, dhat: &DMatrix<f64>, t: u64) -> Result<()> {
        self.check_dhat(dhat)?;
        let slices = dhat.ncols() as f64;
        let mut work = dhat / slices.sqrt();
        let keep = t as f64 / (t as f64 + 1.0);
        let gain = 1.0 / (t as f64 + 1.0);
        let raw_v = self.raw_v.get_or_insert_with(|| {
            DMatrix::from_fn(self.vectors.nrows(), self.vectors.ncols(), |i, j| {
                self.vectors[(i, j)] * self.lambdas[j]
            })
        });

        for j in 0..self.lambdas.len() {
            let v = raw_v.column(j).clone_owned();
            let norm = v.norm();
            let updated: DVector<f64> = if norm < VANISHING_NORM {
                // Restart from the deflated slice column of largest norm.
                self.reinitializations += 1;
                let best = (0..work.ncols())
                    .max_by(|&a, &b| work.column(a).norm().total_cmp(&work.column(b).norm()))
                    .expect("at least one slice");
                work.column(best).clone_owned()
            } else {
                let u = &v / norm;
                let proj = work.tr_mul(&u);
                v * keep + (&work * proj) * gain
            };
            raw_v.set_column(j, &updated);

            let len = updated.norm();
            self.lambdas[j] = len;
            if len >= VANISHING_NORM {
                self.vectors.set_column(j, &(&updated / len));
            }
            let eta = self.vectors.column(j).clone_owned();
            let coeffs = work.tr_mul(&eta);
            work.ger(-1.0, &eta, &coeffs, 1.0);
        }
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
            TrackerConfig::with_strategy(Strategy::Ccipca),
            DVector::from_column_slice(lambdas),
            vectors,
            None,
            3,
        )
        .unwrap()
    }

    #[test]
    fn zero_input_shrinks_without_turning() {
        let v0 = DMatrix::from_column_slice(3, 1, &[0.6, 0.8, 0.0]);
        let mut es = state(&[2.0], v0.clone());
        es.ccipca_step(&DMatrix::zeros(3, 3), 9).unwrap();
        assert_abs_diff_eq!(es.lambdas()[0], 2.0 * 0.9, epsilon = 1e-14);
        assert_abs_diff_eq!(es.vectors().clone(), v0, epsilon = 1e-14);
    }

    #[test]
    fn stationary_single_column_converges_to_closed_form() {
        // D = (1/H) c c^T has top eigenpair (|c|^2 / H, c / |c|).
        let c = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.0]);
        let h = 3;
        let mut dhat = DMatrix::zeros(4, h);
        dhat.set_column(1, &c);
        let start = DMatrix::from_column_slice(4, 1, &[0.5, 0.5, 0.5, 0.5]);
        let mut es = state(&[0.1], start);
        for t in 1..=10_000u64 {
            es.ccipca_step(&dhat, t).unwrap();
        }
        let target = c.normalize();
        let cos = es.vectors().column(0).dot(&target).abs().min(1.0);
        assert!(cos.acos() < 1e-3, "angle {}", cos.acos());
        let expected = c.norm_squared() / h as f64;
        assert!((es.lambdas()[0] - expected).abs() / expected < 1e-2);
        assert_abs_diff_eq!(es.lambdas()[0], es.raw_v().unwrap().column(0).norm(), epsilon = 0.0);
    }

    #[test]
    fn vanished_component_is_reinitialized() {
        let mut es = state(&[1.0, 0.0], DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]));
        let dhat = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
        es.ccipca_step(&dhat, 5).unwrap();
        assert_eq!(es.reinitializations(), 1);
        assert_abs_diff_eq!(es.vectors()[(2, 1)].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_start_on_stationary_input_stays_orthonormal() {
        let mut dhat = DMatrix::zeros(3, 3);
        dhat[(0, 0)] = 3.0;
        dhat[(1, 1)] = 1.0;
        let lam = [9.0 / 3.0, 1.0 / 3.0];
        let mut es = state(&lam, DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]));
        for t in 1..500u64 {
            es.ccipca_step(&dhat, t).unwrap();
        }
        let v = es.vectors();
        assert!(v.column(0).dot(&v.column(1)).abs() < 1e-6);
        assert_abs_diff_eq!(es.lambdas()[0], 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(es.lambdas()[1], 1.0 / 3.0, epsilon = 1e-10);
    }
}
