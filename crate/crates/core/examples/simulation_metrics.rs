// The three simulation models and the subspace distance between spans.

use nalgebra::DMatrix;
use ossir::simgen::{principal_angles, subspace_distance, SimModel, SimModelSpec};

pub fn run_example() -> ossir::error::Result<()> {
    for model in [SimModel::Linear, SimModel::SinExp, SimModel::Cubic] {
        let spec = SimModelSpec::new(model, 10)?;
        let data = spec.sample_seeded(5, 1);
        let b = spec.true_betas()?;
        println!(
            "model {}: rank {}, first response {:.3}, true direction norms {:?}",
            model.id(),
            model.rank(),
            data[0].y,
            b.column_iter().map(|c| c.norm()).collect::<Vec<_>>()
        );
    }

    let a = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
    let rotated = DMatrix::from_column_slice(3, 1, &[0.6_f64.cos(), 0.6_f64.sin(), 0.0]);
    println!(
        "distance to itself {:.3}, to a scaled copy {:.3}",
        subspace_distance(&a, &a),
        subspace_distance(&a, &(&a * -4.0))
    );
    println!(
        "rotation by 0.6 rad: distance {:.4}, principal angle {:.4}",
        subspace_distance(&a, &rotated),
        principal_angles(&a, &rotated)[0]
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
