use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::Method;
use crate::error::Result;

/// One method on one replication of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub model: u8,
    pub p: usize,
    pub n: usize,
    pub slices: usize,
    pub rank: usize,
    pub rep: usize,
    pub seed: u64,
    pub distance: Option<f64>,
    pub seconds: Option<f64>,
    pub nonzero: Option<usize>,
    /// Failure reason; empty on success.
    pub reason: String,
}

/// Aggregate of one `(method, model, p)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub model: u8,
    pub p: usize,
    pub n: usize,
    pub slices: usize,
    pub rank: usize,
    pub reps: usize,
    pub succeeded: usize,
    pub mean_distance: Option<f64>,
    pub sd_distance: Option<f64>,
    pub mean_seconds: Option<f64>,
    pub reason: String,
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub gamma: Option<f64>,
    pub gravity: f64,
    pub theta: f64,
    pub mean_distance: Option<f64>,
    pub mean_zeros: Option<f64>,
    pub best: bool,
    pub reason: String,
}

pub(crate) fn na(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

fn blank(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

#[derive(Serialize)]
struct ResultRecord<'a> {
    method: &'a str,
    model: u8,
    p: usize,
    n: usize,
    #[serde(rename = "H")]
    slices: usize,
    d: usize,
    rep: usize,
    seed: u64,
    status: &'a str,
    distance: String,
    seconds: String,
    nonzero: String,
    reason: &'a str,
}

#[derive(Serialize)]
struct SummaryRecord<'a> {
    method: &'a str,
    model: u8,
    p: usize,
    n: usize,
    #[serde(rename = "H")]
    slices: usize,
    d: usize,
    #[serde(rename = "N")]
    reps: usize,
    succeeded: usize,
    mean_distance: String,
    sd_distance: String,
    mean_seconds: String,
    reason: &'a str,
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(u8, usize, Method)> = rows.iter().map(|r| (r.model, r.p, r.method)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(model, p, method)| {
            let cell: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.model == model && r.p == p && r.method == method)
                .collect();
            let ok: Vec<&ResultRow> = cell.iter().copied().filter(|r| r.distance.is_some()).collect();
            let dists: Vec<f64> = ok.iter().filter_map(|r| r.distance).collect();
            let secs: Vec<f64> = ok.iter().filter_map(|r| r.seconds).collect();
            let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            let mean_distance = mean(&dists);
            let sd_distance = (dists.len() > 1).then(|| {
                let m = mean_distance.unwrap_or(0.0);
                (dists.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (dists.len() - 1) as f64).sqrt()
            });
            let reason = cell
                .iter()
                .find(|r| !r.reason.is_empty())
                .map(|r| r.reason.clone())
                .unwrap_or_default();
            SummaryRow {
                method,
                model,
                p,
                n: cell[0].n,
                slices: cell[0].slices,
                rank: cell[0].rank,
                reps: cell.len(),
                succeeded: ok.len(),
                mean_distance,
                sd_distance,
                mean_seconds: mean(&secs),
                reason,
            }
        })
        .collect()
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(ResultRecord {
            method: r.method.name(),
            model: r.model,
            p: r.p,
            n: r.n,
            slices: r.slices,
            d: r.rank,
            rep: r.rep,
            seed: r.seed,
            status: if r.reason.is_empty() { "ok" } else { "NA" },
            distance: na(r.distance),
            seconds: na(r.seconds),
            nonzero: r.nonzero.map_or_else(String::new, |v| v.to_string()),
            reason: &r.reason,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(SummaryRecord {
            method: r.method.name(),
            model: r.model,
            p: r.p,
            n: r.n,
            slices: r.slices,
            d: r.rank,
            reps: r.reps,
            succeeded: r.succeeded,
            mean_distance: na(r.mean_distance),
            sd_distance: blank(r.sd_distance),
            mean_seconds: na(r.mean_seconds),
            reason: &r.reason,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Two aligned tables, rows `(model, p)` and one column per method: mean
/// distance, then mean seconds.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut methods: Vec<Method> = rows.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let mut cells: Vec<(u8, usize)> = rows.iter().map(|r| (r.model, r.p)).collect();
    cells.sort();
    cells.dedup();

    let lookup = |model: u8, p: usize, m: Method| rows.iter().find(|r| r.model == model && r.p == p && r.method == m);
    let mut out = String::new();
    for (title, pick) in [
        ("Mean subspace distance", (|r: &SummaryRow| r.mean_distance) as fn(&SummaryRow) -> Option<f64>),
        ("Mean seconds per replication", |r: &SummaryRow| r.mean_seconds),
    ] {
        let _ = writeln!(out, "{title}");
        let _ = write!(out, "{:>6} {:>6}", "model", "p");
        for m in &methods {
            let _ = write!(out, " {:>10}", m.name());
        }
        out.push('\n');
        for &(model, p) in &cells {
            let _ = write!(out, "{model:>6} {p:>6}");
            for &m in &methods {
                let text = match lookup(model, p, m).and_then(pick) {
                    Some(v) if v.abs() >= 1e-4 || v == 0.0 => format!("{v:.4}"),
                    Some(v) => format!("{v:.2e}"),
                    None => "NA".into(),
                };
                let _ = write!(out, " {text:>10}");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    let failures: Vec<&SummaryRow> = rows.iter().filter(|r| !r.reason.is_empty()).collect();
    if !failures.is_empty() {
        let _ = writeln!(out, "Failures");
        for r in failures {
            let _ = writeln!(
                out,
                "  {} model {} p {}: {}/{} failed: {}",
                r.method,
                r.model,
                r.p,
                r.reps - r.succeeded,
                r.reps,
                r.reason
            );
        }
    }
    let _ = writeln!(out, "Methods");
    for m in methods {
        let _ = writeln!(out, "  {}: {}", m.name(), m.description());
    }
    out
}

#[derive(Serialize)]
struct SweepRecord<'a> {
    gamma: String,
    gravity: f64,
    theta: f64,
    mean_distance: String,
    mean_zeros: String,
    best: bool,
    reason: &'a str,
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(SweepRecord {
            gamma: r.gamma.map_or_else(|| "auto".into(), |g| g.to_string()),
            gravity: r.gravity,
            theta: r.theta,
            mean_distance: na(r.mean_distance),
            mean_zeros: na(r.mean_zeros),
            best: r.best,
            reason: &r.reason,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn render_sweep(rows: &[SweepRow]) -> String {
    let mut out = format!(
        "{:>12} {:>10} {:>10} {:>12} {:>10}  best\n",
        "gamma", "gravity", "theta", "distance", "zeros"
    );
    for r in rows {
        let gamma = r.gamma.map_or_else(|| "auto".into(), |g| format!("{g:.3e}"));
        let dist = r.mean_distance.map_or_else(|| "NA".into(), |d| format!("{d:.4}"));
        let zeros = r.mean_zeros.map_or_else(|| "NA".into(), |z| format!("{z:.1}"));
        let _ = writeln!(
            out,
            "{gamma:>12} {:>10.4} {:>10} {dist:>12} {zeros:>10}  {}",
            r.gravity,
            r.theta,
            if r.best { "*" } else { "" }
        );
    }
    out
}
