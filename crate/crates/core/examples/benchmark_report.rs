// A small benchmark comparing a sparse streaming method with batch SIR,
// written to a temporary directory.

use ossir::harness::{self, Method, RunConfig};

pub fn run_example() -> ossir::error::Result<String> {
    let out = std::env::temp_dir().join(format!("ossir-benchmark-{}", std::process::id()));
    let cfg = RunConfig {
        models: vec![1, 3],
        dims: vec![20],
        n: 600,
        methods: vec![Method::M3, Method::M4, Method::M7],
        reps: 3,
        seed: 99,
        out: out.clone(),
        ..RunConfig::default()
    };
    harness::benchmark(&cfg)?;
    let text = std::fs::read_to_string(out.join("summary.txt"))?;
    println!("{text}");
    std::fs::remove_dir_all(&out)?;
    Ok(text)
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
