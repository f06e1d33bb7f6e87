// Streams observations into the slice kernel and compares the result with
// the kernel computed in one pass over the stored data.

use nalgebra::{DMatrix, DVector};
use ossir::kernel::{Centering, KernelState, SliceGrid, TiePolicy};
use ossir::simgen::{SimModel, SimModelSpec};

pub fn run_example() -> ossir::error::Result<f64> {
    let (p, h) = (8, 5);
    let spec = SimModelSpec::new(SimModel::Linear, p)?;
    let data = spec.sample_seeded(400, 11);

    // Cut points come from the first 50 responses and stay fixed.
    let grid = SliceGrid::from_warmup(&data[..50], h, TiePolicy::default())?;
    let mut kernel = KernelState::new(grid.clone(), p, Centering::Exact);
    for obs in &data {
        kernel.update(obs)?;
    }
    let online = kernel.build_d()?;

    // Column h: (1/n) sum of centred x over slice h. Kernel: (1/H) dhat dhat^T.
    let n = data.len() as f64;
    let mean = data.iter().fold(DVector::zeros(p), |acc, o| acc + &o.x) / n;
    let mut dhat = DMatrix::zeros(p, h);
    for obs in &data {
        let s = grid.slice_index(obs.y)?;
        dhat.column_mut(s).axpy(1.0 / n, &(&obs.x - &mean), 1.0);
    }
    let batch = &dhat * dhat.transpose() / h as f64;

    let gap = (&online - &batch).norm() / batch.norm();
    println!("t = {}, slices = {}", kernel.t(), kernel.num_slices());
    println!("relative gap between streamed and batch kernel: {gap:.2e}");
    Ok(gap)
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
