use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::report::{self, ResultRow, SweepRow};
use super::{cell_seed, input, run_method, Method, RunConfig};
use crate::error::{self, Result};
use crate::kernel::Observation;
use crate::pipeline::{OssirModel, Progress};
use crate::simgen::{self, subspace_distance_flagged};

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn first_or_none(v: &[f64]) -> Option<f64> {
    v.first().copied()
}

/// Runs every method on `cfg.reps` simulated data sets per `(model, p)` and
/// writes `results.csv`, `summary.csv` and `summary.txt` under `cfg.out`.
///
/// A failing method yields an NA row with the error message; the command
/// itself only fails on configuration or I/O errors.
pub fn benchmark(cfg: &RunConfig) -> Result<Vec<report::SummaryRow>> {
    cfg.validate()?;
    prepare_out(&cfg.out)?;

    let mut tasks = Vec::new();
    for &model in &cfg.models {
        for &p in &cfg.dims {
            for rep in 0..cfg.reps {
                tasks.push((model, p, rep));
            }
        }
    }

    let nested: Vec<Vec<ResultRow>> = tasks
        .par_iter()
        .map(|&(model, p, rep)| benchmark_task(cfg, model, p, rep))
        .collect();
    let mut rows: Vec<ResultRow> = nested.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.model, r.p, r.method, r.rep));

    let summary = report::summarize(&rows);
    report::write_results(&cfg.out.join("results.csv"), &rows)?;
    report::write_summary(&cfg.out.join("summary.csv"), &summary)?;
    fs::write(cfg.out.join("summary.txt"), report::render_summary(&summary))?;
    Ok(summary)
}

fn benchmark_task(cfg: &RunConfig, model: u8, p: usize, rep: usize) -> Vec<ResultRow> {
    let seed = cell_seed(cfg.seed, model, p, rep);
    let row = |method: Method, rank: usize| ResultRow {
        method,
        model,
        p,
        n: cfg.n,
        slices: cfg.slices,
        rank,
        rep,
        seed,
        distance: None,
        seconds: None,
        nonzero: None,
        reason: String::new(),
    };
    let setup = cfg.sim_spec(model, p).and_then(|spec| {
        let truth = spec.true_betas()?;
        Ok((spec, truth))
    });
    let (spec, truth) = match setup {
        Ok(v) => v,
        Err(e) => {
            let rank = cfg.rank.unwrap_or(1);
            return cfg
                .methods
                .iter()
                .map(|&m| ResultRow {
                    reason: e.to_string(),
                    ..row(m, rank)
                })
                .collect();
        }
    };
    let rank = cfg.rank.unwrap_or(spec.model.rank());
    let data = spec.sample_seeded(cfg.n, seed);
    let config = cfg.ossir_config(
        p,
        cfg.n,
        rank,
        first_or_none(&cfg.gammas),
        first_or_none(&cfg.gravities),
        cfg.thetas[0],
    );
    cfg.methods
        .iter()
        .map(|&method| {
            let mut r = row(method, rank);
            match run_method(method, &data, &config) {
                Ok(out) => {
                    r.distance = Some(subspace_distance_flagged(&truth, &out.estimate).0);
                    r.seconds = Some(out.seconds);
                    r.nonzero = out.nonzero;
                }
                Err(e) => r.reason = e.to_string(),
            }
            r
        })
        .collect()
}

/// Writes one simulated data set per `(model, p)`: observations and the true
/// directions. A single combination is written as `data.csv` and `truth.csv`.
pub fn simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    prepare_out(&cfg.out)?;
    let single = cfg.models.len() == 1 && cfg.dims.len() == 1;
    let mut written = Vec::new();
    for &model in &cfg.models {
        for &p in &cfg.dims {
            let spec = cfg.sim_spec(model, p)?;
            let data = spec.sample_seeded(cfg.n, cell_seed(cfg.seed, model, p, 0));
            let suffix = if single { String::new() } else { format!("_model{model}_p{p}") };
            let data_path = cfg.out.join(format!("data{suffix}.csv"));
            let truth_path = cfg.out.join(format!("truth{suffix}.csv"));
            simgen::write_csv(&data_path, &data)?;
            write_matrix(&truth_path, &spec.true_betas()?, None)?;
            written.push(data_path);
            written.push(truth_path);
        }
    }
    Ok(written)
}

fn write_matrix(path: &Path, m: &DMatrix<f64>, names: Option<&[String]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["variable".to_string()];
    header.extend((1..=m.ncols()).map(|j| format!("direction{j}")));
    w.write_record(&header)?;
    for i in 0..m.nrows() {
        let name = names.map_or_else(|| format!("x{}", i + 1), |n| n[i].clone());
        let mut rec = vec![name];
        rec.extend(m.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DiagnosticRecord {
    t: u64,
    lambdas: String,
    nonzero: usize,
    degenerate_responses: u64,
}

/// Outcome of a single-stream fit.
#[derive(Debug, Clone)]
pub struct FitSummary {
    pub covariates: Vec<String>,
    /// Unit-normalized sparse directions, p x d.
    pub directions: DMatrix<f64>,
    pub zero_columns: Vec<bool>,
    pub observations: usize,
    pub degenerate_responses: u64,
    pub checkpoints: Vec<Progress>,
}

/// Warms up on the first `cfg.warmup` rows of `cfg.input`, streams the rest and
/// writes `directions.csv`, `diagnostics.csv`, `model.json` and `summary.txt`.
pub fn fit(cfg: &RunConfig) -> Result<FitSummary> {
    cfg.validate()?;
    let Some(path) = cfg.input.as_deref() else {
        return error::config("fit needs an input CSV");
    };
    if !path.exists() {
        return error::config(format!("input file {} does not exist", path.display()));
    }
    let data = input::read_observations(path, &cfg.target)?;
    prepare_out(&cfg.out)?;
    let (summary, snapshot) = fit_stream(cfg, &data.observations, data.covariates.clone())?;
    fs::write(cfg.out.join("model.json"), snapshot)?;

    write_matrix(
        &cfg.out.join("directions.csv"),
        &summary.directions,
        Some(&summary.covariates),
    )?;
    let mut w = csv::Writer::from_path(cfg.out.join("diagnostics.csv"))?;
    for c in &summary.checkpoints {
        w.serialize(DiagnosticRecord {
            t: c.t,
            lambdas: c.lambdas.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" "),
            nonzero: c.nonzero,
            degenerate_responses: summary.degenerate_responses,
        })?;
    }
    w.flush()?;

    let mut text = format!(
        "observations {}\nwarmup {}\ndirections {}\ndegenerate responses {}\n",
        summary.observations,
        cfg.warmup,
        summary.directions.ncols(),
        summary.degenerate_responses
    );
    for (j, zero) in summary.zero_columns.iter().enumerate() {
        if *zero {
            let _ = writeln!(text, "warning: direction {} is all zero", j + 1);
        }
    }
    let _ = writeln!(text, "\n{:>12} {}", "variable", "loadings");
    for (i, name) in summary.covariates.iter().enumerate() {
        let _ = write!(text, "{name:>12}");
        for v in summary.directions.row(i).iter() {
            let _ = write!(text, " {v:>10.5}");
        }
        text.push('\n');
    }
    fs::write(cfg.out.join("summary.txt"), text)?;
    Ok(summary)
}

fn fit_stream(
    cfg: &RunConfig,
    data: &[Observation],
    covariates: Vec<String>,
) -> Result<(FitSummary, String)> {
    if data.len() <= cfg.warmup {
        return error::config(format!(
            "{} rows leave nothing to stream after a warmup of {}",
            data.len(),
            cfg.warmup
        ));
    }
    let p = data[0].dim();
    let config = cfg.ossir_config(
        p,
        data.len(),
        cfg.rank.unwrap_or(1),
        first_or_none(&cfg.gammas),
        first_or_none(&cfg.gravities),
        cfg.thetas[0],
    );
    let (warm, stream) = data.split_at(cfg.warmup);
    let mut model = OssirModel::warmup(warm, config)?;
    let mut checkpoints = Vec::new();
    model.observe_all(stream, cfg.checkpoint_every, None, |p| checkpoints.push(p.clone()))?;
    if checkpoints.last().map(|c| c.t) != Some(model.t()) {
        checkpoints.push(model.progress(None));
    }
    let dirs = model.sparse_directions();
    let summary = FitSummary {
        covariates,
        directions: dirs.matrix,
        zero_columns: dirs.zero_columns,
        observations: data.len(),
        degenerate_responses: model.degenerate_responses(),
        checkpoints,
    };
    Ok((summary, model.snapshot()?))
}

#[derive(Serialize)]
struct SweepResultRecord {
    gamma: String,
    gravity: f64,
    theta: f64,
    rep: usize,
    seed: u64,
    distance: String,
    zeros: String,
    reason: String,
}

/// Evaluates the cross product of the gamma, gravity and theta grids on
/// simulated data from the first model and dimension. Each replication uses
/// one data set for every grid point. The row with the smallest mean distance
/// to the truth is flagged best.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if cfg.models.len() != 1 || cfg.dims.len() != 1 {
        return error::config("sweep takes exactly one model and one dimension");
    }
    let (model, p) = (cfg.models[0], cfg.dims[0]);
    let spec = cfg.sim_spec(model, p)?;
    let truth = spec.true_betas()?;
    let rank = cfg.rank.unwrap_or(spec.model.rank());
    prepare_out(&cfg.out)?;

    let gammas: Vec<Option<f64>> = if cfg.gammas.is_empty() {
        vec![None]
    } else {
        cfg.gammas.iter().copied().map(Some).collect()
    };
    let gravities: Vec<Option<f64>> = if cfg.gravities.is_empty() {
        vec![None]
    } else {
        cfg.gravities.iter().copied().map(Some).collect()
    };
    let mut grid = Vec::new();
    for &gamma in &gammas {
        for &gravity in &gravities {
            for &theta in &cfg.thetas {
                grid.push((gamma, gravity, theta));
            }
        }
    }

    let seeds: Vec<u64> = (0..cfg.reps).map(|r| cell_seed(cfg.seed, model, p, r)).collect();
    let datasets: Vec<Vec<Observation>> = seeds.par_iter().map(|&s| spec.sample_seeded(cfg.n, s)).collect();

    let evaluated: Vec<Vec<(Option<f64>, Option<usize>, String)>> = grid
        .par_iter()
        .map(|&(gamma, gravity, theta)| {
            let config = cfg.ossir_config(p, cfg.n, rank, gamma, gravity, theta);
            datasets
                .iter()
                .map(|data| match fit_simulated(data, &config, &truth) {
                    Ok((d, zeros)) => (Some(d), Some(zeros), String::new()),
                    Err(e) => (None, None, e.to_string()),
                })
                .collect()
        })
        .collect();

    let mut w = csv::Writer::from_path(cfg.out.join("results.csv"))?;
    let mut rows = Vec::with_capacity(grid.len());
    for (&(gamma, gravity, theta), reps) in grid.iter().zip(&evaluated) {
        let gravity = gravity.unwrap_or_else(|| crate::pipeline::default_gravity(p, cfg.n));
        for (rep, (d, z, reason)) in reps.iter().enumerate() {
            w.serialize(SweepResultRecord {
                gamma: gamma.map_or_else(|| "auto".into(), |g| g.to_string()),
                gravity,
                theta,
                rep,
                seed: seeds[rep],
                distance: report::na(*d),
                zeros: z.map_or_else(|| "NA".into(), |z| z.to_string()),
                reason: reason.clone(),
            })?;
        }
        let ok: Vec<(f64, usize)> = reps.iter().filter_map(|(d, z, _)| Some(((*d)?, (*z)?))).collect();
        let mean = |f: &dyn Fn(&(f64, usize)) -> f64| {
            (!ok.is_empty()).then(|| ok.iter().map(f).sum::<f64>() / ok.len() as f64)
        };
        rows.push(SweepRow {
            gamma,
            gravity,
            theta,
            mean_distance: mean(&|r| r.0),
            mean_zeros: mean(&|r| r.1 as f64),
            best: false,
            reason: reps.iter().find(|r| !r.2.is_empty()).map(|r| r.2.clone()).unwrap_or_default(),
        });
    }
    w.flush()?;

    let best = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.mean_distance.map(|d| (i, d)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);
    if let Some(i) = best {
        rows[i].best = true;
    }
    report::write_sweep(&cfg.out.join("summary.csv"), &rows)?;
    fs::write(cfg.out.join("summary.txt"), report::render_sweep(&rows))?;
    Ok(rows)
}

/// Distance of the sparse estimate to `truth` and its count of exact zeros.
fn fit_simulated(
    data: &[Observation],
    config: &crate::pipeline::OssirConfig,
    truth: &DMatrix<f64>,
) -> Result<(f64, usize)> {
    let out = run_method(Method::from_tracker(config.tracker.strategy), data, config)?;
    let zeros = out.estimate.iter().filter(|v| **v == 0.0).count();
    Ok((subspace_distance_flagged(truth, &out.estimate).0, zeros))
}
