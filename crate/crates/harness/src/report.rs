//! `modsel report`: rebuild summary tables from the CSV logs of a run
//! directory, without rerunning anything.

use std::fs;
use std::path::{Path, PathBuf};

use modsel::training::SCHEMA_VERSION;
use serde::{Deserialize, Serialize};

use crate::run::{Manifest, MANIFEST};
use crate::{write_json, HarnessError};

/// One logged row of a run CSV, reduced to what the report needs.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedRow {
    pub t: u64,
    pub pulls: Vec<u64>,
    /// Cumulative normalized return per agent.
    pub u: Vec<f64>,
    /// Cumulative exact expected return per agent, when logged.
    pub ubar: Option<Vec<f64>>,
}

impl LoggedRow {
    pub fn total_u(&self) -> f64 {
        self.u.iter().sum()
    }
}

fn corrupt(path: &Path, message: impl std::fmt::Display) -> HarnessError {
    HarnessError::Corrupt {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, HarnessError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| corrupt(path, format!("missing column {name}")))
}

/// Parse a run CSV written by `modsel run`.
pub fn read_log(path: &Path, num_agents: usize) -> Result<Vec<LoggedRow>, HarnessError> {
    let file = fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers().map_err(|e| corrupt(path, e))?.clone();
    let t_col = column(&headers, "t", path)?;
    let n_cols = (0..num_agents)
        .map(|i| column(&headers, &format!("n_{i}"), path))
        .collect::<Result<Vec<_>, _>>()?;
    let u_cols = (0..num_agents)
        .map(|i| column(&headers, &format!("u_{i}"), path))
        .collect::<Result<Vec<_>, _>>()?;
    let ubar_cols: Option<Vec<usize>> = (0..num_agents)
        .map(|i| headers.iter().position(|h| h == format!("ubar_{i}")))
        .collect();

    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| corrupt(path, e))?;
        let field = |col: usize| -> Result<&str, HarnessError> {
            record
                .get(col)
                .ok_or_else(|| corrupt(path, format!("row {}: too few fields", line + 1)))
        };
        let bad = |col: usize| {
            corrupt(
                path,
                format!("row {}: bad value in {}", line + 1, &headers[col]),
            )
        };
        let t: u64 = field(t_col)?.parse().map_err(|_| bad(t_col))?;
        let mut pulls = Vec::with_capacity(num_agents);
        let mut u = Vec::with_capacity(num_agents);
        for (&nc, &uc) in n_cols.iter().zip(&u_cols) {
            pulls.push(field(nc)?.parse().map_err(|_| bad(nc))?);
            u.push(field(uc)?.parse().map_err(|_| bad(uc))?);
        }
        let ubar = match &ubar_cols {
            Some(cols) => Some(
                cols.iter()
                    .map(|&c| field(c)?.parse::<f64>().map_err(|_| bad(c)))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            None => None,
        };
        if rows.last().is_some_and(|prev: &LoggedRow| prev.t >= t) {
            return Err(corrupt(
                path,
                format!("row {}: rounds out of order", line + 1),
            ));
        }
        if pulls.iter().sum::<u64>() != t {
            return Err(corrupt(
                path,
                format!("row {}: pull counts do not add up to t", line + 1),
            ));
        }
        rows.push(LoggedRow { t, pulls, u, ubar });
    }
    if rows.is_empty() {
        return Err(corrupt(path, "no rows"));
    }
    Ok(rows)
}

/// Last logged row with `t ≤ round`, if any.
fn row_at(rows: &[LoggedRow], round: u64) -> Option<&LoggedRow> {
    let idx = rows.partition_point(|r| r.t <= round);
    idx.checked_sub(1).map(|i| &rows[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub t: u64,
    pub regret: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub master_seed: u64,
    pub rounds: u64,
    pub fractions: Vec<f64>,
    /// Mean normalized return over the trailing window.
    pub window_mean_normalized: f64,
    /// `Regret(t)/√t` at `T/8`, `T/4`, `T/2` and `T`; single-phase exact runs only.
    pub scaling: Vec<ScalingPoint>,
}

/// Reduce one parsed log. `optimal_value` enables the scaling table.
pub fn seed_report(
    master_seed: u64,
    rows: &[LoggedRow],
    window: u64,
    optimal_value: Option<f64>,
) -> SeedReport {
    let last = rows.last().expect("read_log rejects empty logs");
    let t = last.t;
    let fractions = last.pulls.iter().map(|&n| n as f64 / t as f64).collect();
    let start = t.saturating_sub(window);
    // with a CSV stride the window starts at the closest logged row before it
    let (from_t, from_u) = row_at(rows, start).map_or((0, 0.0), |r| (r.t, r.total_u()));
    let window_mean_normalized = (last.total_u() - from_u) / (t - from_t) as f64;

    let mut scaling = Vec::new();
    if let Some(v_star) = optimal_value {
        for k in [8, 4, 2, 1] {
            let target = (t / k).max(1);
            if let Some(row) = row_at(rows, target) {
                if let Some(ubar) = &row.ubar {
                    let regret = v_star * row.t as f64 - ubar.iter().sum::<f64>();
                    scaling.push(ScalingPoint {
                        t: row.t,
                        regret,
                        ratio: regret / (row.t as f64).sqrt(),
                    });
                }
            }
        }
    }
    SeedReport {
        master_seed,
        rounds: t,
        fractions,
        window_mean_normalized,
        scaling,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub label: String,
    pub solo: bool,
    pub seeds: Vec<SeedReport>,
    pub mean_window_normalized: f64,
    pub std_window_normalized: f64,
    pub mean_fractions: Vec<f64>,
    /// Seed-averaged `Regret(t)/√t`, aligned with the per-seed scaling rows.
    pub mean_scaling: Vec<ScalingPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub name: String,
    pub total_rounds: u64,
    pub window: usize,
    pub labels: Vec<LabelReport>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

fn label_report(
    label: &str,
    solo: bool,
    dir: &Path,
    manifest: &Manifest,
    agents: usize,
) -> Result<LabelReport, HarnessError> {
    let optimal = match manifest.phases.as_slice() {
        [only] => Some(only.optimal_value),
        _ => None,
    };
    let mut seeds = Vec::with_capacity(manifest.seeds.len());
    for &seed in &manifest.seeds {
        let path = dir.join(format!("seed_{seed}.csv"));
        let rows = read_log(&path, agents)?;
        seeds.push(seed_report(seed, &rows, manifest.window as u64, optimal));
    }
    let returns: Vec<f64> = seeds.iter().map(|s| s.window_mean_normalized).collect();
    let (mean, std) = mean_std(&returns);
    let mean_fractions = (0..agents)
        .map(|i| seeds.iter().map(|s| s.fractions[i]).sum::<f64>() / seeds.len() as f64)
        .collect();
    let points = seeds.iter().map(|s| s.scaling.len()).min().unwrap_or(0);
    let mean_scaling = (0..points)
        .map(|k| {
            let n = seeds.len() as f64;
            ScalingPoint {
                t: seeds[0].scaling[k].t,
                regret: seeds.iter().map(|s| s.scaling[k].regret).sum::<f64>() / n,
                ratio: seeds.iter().map(|s| s.scaling[k].ratio).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(LabelReport {
        label: label.to_string(),
        solo,
        seeds,
        mean_window_normalized: mean,
        std_window_normalized: std,
        mean_fractions,
        mean_scaling,
    })
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, HarnessError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| corrupt(&path, e))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(corrupt(
            &path,
            format!(
                "schema_version {} (expected {SCHEMA_VERSION})",
                manifest.schema_version
            ),
        ));
    }
    Ok(manifest)
}

pub fn build_report(dir: &Path) -> Result<Report, HarnessError> {
    let manifest = read_manifest(dir)?;
    let mut labels = Vec::new();
    for label in &manifest.selectors {
        labels.push(label_report(
            label,
            false,
            &dir.join(label),
            &manifest,
            manifest.num_agents,
        )?);
    }
    for label in &manifest.solo {
        let sub: PathBuf = dir.join("solo").join(label);
        labels.push(label_report(label, true, &sub, &manifest, 1)?);
    }
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        name: manifest.name.clone(),
        total_rounds: manifest.total_rounds,
        window: manifest.window,
        labels,
    })
}

/// Plain-text table: one row per selector or solo agent.
pub fn render(report: &Report) -> String {
    let mut out = format!(
        "{}  (T = {}, window = {}, seeds = {})\n",
        report.name,
        report.total_rounds,
        report.window,
        report.labels.first().map_or(0, |l| l.seeds.len())
    );
    out.push_str(&format!(
        "{:<16} {:>18} {:>12}  {}\n",
        "selector", "norm. return", "regret/√T", "pull fractions"
    ));
    for l in &report.labels {
        let name = if l.solo {
            format!("solo {}", l.label)
        } else {
            l.label.clone()
        };
        let ratio = l
            .mean_scaling
            .last()
            .map_or("-".to_string(), |p| format!("{:.3}", p.ratio));
        let fractions: Vec<String> = l.mean_fractions.iter().map(|f| format!("{f:.3}")).collect();
        out.push_str(&format!(
            "{:<16} {:>10.4} ± {:<6.4} {:>11}  [{}]\n",
            name,
            l.mean_window_normalized,
            l.std_window_normalized,
            ratio,
            fractions.join(", ")
        ));
    }
    out
}

/// Build the report, write `report.json` next to the manifest and return
/// the rendered table.
pub fn cmd_report(dir: &Path) -> Result<String, HarnessError> {
    let report = build_report(dir)?;
    write_json(&dir.join("report.json"), &report)?;
    Ok(render(&report))
}
