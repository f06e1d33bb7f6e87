// Sparse online least squares: a regularization path over gravity on a
// stream with three active coefficients out of twelve.

use nalgebra::DVector;
use ossir::truncated_lasso::{regularization_path, SparseCoefModel, TruncationParams};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

pub fn run_example() -> ossir::error::Result<Vec<(f64, usize)>> {
    let p = 12;
    let truth = DVector::from_fn(p, |i, _| match i {
        0 => 1.5,
        1 => -1.0,
        2 => 0.5,
        _ => 0.0,
    });
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let stream: Vec<_> = (0..5000)
        .map(|_| {
            let x = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
            let noise: f64 = StandardNormal.sample(&mut rng);
            let y = truth.dot(&x) + 0.3 * noise;
            (x, DVector::from_element(1, y))
        })
        .collect();

    let params = TruncationParams {
        gamma: 0.002,
        gravity: 0.0,
        theta: f64::INFINITY,
        period: 10,
    };
    let template = SparseCoefModel::new(p, 1, params)?;
    let gravities = [0.0, 0.01, 0.1, 0.5];
    let path = regularization_path(&template, &gravities, &stream)?;

    let mut out = Vec::new();
    for (g, model) in gravities.iter().zip(&path) {
        let b = model.sparse_betas();
        let nonzero = b.iter().filter(|v| **v != 0.0).count();
        let err = (b.column(0) - &truth).norm();
        println!("gravity {g:>5}: {nonzero:>2} non-zero, error {err:.3}");
        out.push((*g, nonzero));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
