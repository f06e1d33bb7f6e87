// End-to-end sparse streaming fit: warm up, stream with progress reports,
// snapshot the model and resume from the snapshot.

use ossir::pipeline::{OssirConfig, OssirModel};
use ossir::simgen::{subspace_distance, SimModel, SimModelSpec};

pub fn run_example() -> ossir::error::Result<f64> {
    let spec = SimModelSpec::new(SimModel::Cubic, 50)?;
    let truth = spec.true_betas()?;
    let data = spec.sample_seeded(1000, 17);

    let config = OssirConfig {
        rank: spec.model.rank(),
        gravity: ossir::pipeline::default_gravity(50, 1000),
        ..OssirConfig::default()
    };
    let (warm, rest) = data.split_at(config.warmup);
    let (first, second) = rest.split_at(400);

    let mut model = OssirModel::warmup(warm, config)?;
    model.observe_all(first, 100, Some(&truth), |p| {
        println!(
            "t = {:>4}  lambda_1 = {:.4}  non-zero = {:>3}  distance = {:.4}",
            p.t,
            p.lambdas[0],
            p.nonzero,
            p.distance.unwrap_or(f64::NAN)
        );
    })?;

    let json = model.snapshot()?;
    let mut resumed = OssirModel::restore(&json)?;
    for obs in second {
        resumed.observe(obs)?;
    }

    let estimate = resumed.sparse_directions();
    let distance = subspace_distance(&truth, &estimate.matrix);
    let zeros = estimate.matrix.iter().filter(|v| **v == 0.0).count();
    println!("snapshot size {} bytes", json.len());
    println!("final distance {distance:.4}, {zeros} zero loadings out of {}", estimate.matrix.len());
    Ok(distance)
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
