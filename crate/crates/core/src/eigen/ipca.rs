use nalgebra::DMatrix;

use super::{EigenState, VANISHING_NORM};
use crate::error::{self, Result};
use crate::linalg;

impl EigenState {
    /// Reduced-rank incremental PCA step driven by slice column `k`.
    ///
    /// The residual of column `k` against the current basis extends it to
    /// `B = [eta, r / |r|]`, and the new eigenpairs are the top-d eigenpairs of
    /// `B^T F F^T B`, formed through the small `(d+1) x H` product `B^T F`.
    /// A vanishing residual leaves `B = eta`, so the step only rotates.
    pub fn ipca_step(&mut self, dhat: &DMatrix<f64>, k: usize) -> Result<()> {
        self.check_dhat(dhat)?;
        if k >= dhat.ncols() {
            return error::data(format!("slice {k} out of range for {} slices", dhat.ncols()));
        }
        let d = self.rank();
        let f = dhat / (dhat.ncols() as f64).sqrt();
        let col = f.column(k);
        let coeffs = self.vectors.tr_mul(&col);
        let residual = col - &self.vectors * coeffs;
        let rnorm = residual.norm();

        let basis = if rnorm < VANISHING_NORM * col.norm().max(1.0) {
            self.vectors.clone()
        } else {
            let mut b = self.vectors.clone().insert_column(d, 0.0);
            b.set_column(d, &(residual / rnorm));
            b
        };
        let small = basis.tr_mul(&f);
        let mut compressed = &small * small.transpose();
        linalg::symmetrize(&mut compressed);
        let eig = linalg::sym_eigen(&compressed)?;

        for j in 0..d {
            self.lambdas[j] = eig.values[j].max(0.0);
        }
        let mut next = &basis * eig.vectors.columns(0, d);
        linalg::gram_schmidt(&mut next);
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

    fn state(vectors: DMatrix<f64>, slices: usize) -> EigenState {
        let d = vectors.ncols();
        EigenState::from_parts(
            TrackerConfig::with_strategy(Strategy::Ipca),
            DVector::from_element(d, 1.0),
            vectors,
            None,
            slices,
        )
        .unwrap()
    }

    #[test]
    fn column_in_span_only_rotates() {
        let mut es = state(DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]), 2);
        let dhat = DMatrix::from_column_slice(3, 2, &[1.0, 1.0, 0.0, 0.0, 2.0, 0.0]);
        es.ipca_step(&dhat, 0).unwrap();
        for j in 0..2 {
            assert_abs_diff_eq!(es.vectors()[(2, j)], 0.0, epsilon = 1e-14);
        }
        assert!(es.lambdas()[0] >= es.lambdas()[1]);
    }

    #[test]
    fn orthogonal_column_expands_basis() {
        let mut es = state(DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]), 1);
        let dhat = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        es.ipca_step(&dhat, 0).unwrap();
        // F F^T = e2 e2^T, so the top direction of the expanded basis {e1, e2} is e2.
        assert_abs_diff_eq!(es.vectors()[(1, 0)].abs(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(es.lambdas()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn slice_index_is_checked() {
        let mut es = state(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), 2);
        assert!(es.ipca_step(&DMatrix::zeros(2, 2), 2).is_err());
    }
}
