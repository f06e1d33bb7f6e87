// Runs the four eigen trackers side by side on one stream and reports the
// angle between each tracked leading eigenvector and the exact one.

use ossir::eigen::{EigenState, Strategy, TrackerConfig};
use ossir::kernel::{Centering, KernelState, SliceGrid, TiePolicy};
use ossir::linalg::sym_eigen;
use ossir::simgen::{principal_angles, SimModel, SimModelSpec};

pub fn run_example() -> ossir::error::Result<Vec<(Strategy, f64)>> {
    let (p, h, warm) = (20, 10, 100);
    let spec = SimModelSpec::new(SimModel::Linear, p)?;
    let data = spec.sample_seeded(3000, 5);
    let grid = SliceGrid::from_warmup(&data[..warm], h, TiePolicy::default())?;

    let mut results = Vec::new();
    for strategy in Strategy::ALL {
        let mut kernel = KernelState::new(grid.clone(), p, Centering::Exact);
        for obs in &data[..warm] {
            kernel.update(obs)?;
        }
        let ys: Vec<f64> = data[..warm].iter().map(|o| o.y).collect();
        let mut eigen = EigenState::init(&kernel, 1, TrackerConfig::with_strategy(strategy), &ys)?;
        for obs in &data[warm..] {
            kernel.update(obs)?;
            eigen.step(&kernel, obs.y)?;
        }
        let exact = sym_eigen(&kernel.build_d()?)?;
        let top = exact.vectors.columns(0, 1).into_owned();
        let angle = principal_angles(&top, eigen.vectors())[0];
        println!(
            "{strategy:>12}: lambda {:.4} (exact {:.4}), angle {angle:.4} rad",
            eigen.lambdas()[0],
            exact.values[0]
        );
        results.push((strategy, angle));
    }
    Ok(results)
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
