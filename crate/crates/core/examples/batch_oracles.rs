// Batch SIR and Lasso-SIR on the same sample, against the true direction.

use ossir::batch::{batch_lasso_sir, batch_sir, BatchDataset};
use ossir::simgen::{subspace_distance, SimModel, SimModelSpec};

pub fn run_example() -> ossir::error::Result<(f64, f64)> {
    let spec = SimModelSpec::new(SimModel::Linear, 100)?;
    let truth = spec.true_betas()?;
    let data = BatchDataset::from_observations(&spec.sample_seeded(400, 23), 10)?;

    let sir = batch_sir(&data, 1)?;
    let lasso = batch_lasso_sir(&data, 1, None)?;
    let d_sir = subspace_distance(&truth, &sir);
    let d_lasso = subspace_distance(&truth, &lasso);
    let nonzero = lasso.iter().filter(|v| **v != 0.0).count();
    println!("p = 100, n = 400");
    println!("SIR:       distance {d_sir:.4}");
    println!("Lasso-SIR: distance {d_lasso:.4}, {nonzero} non-zero loadings");
    Ok((d_sir, d_lasso))
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
