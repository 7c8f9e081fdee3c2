//! Fits against target exponents and the files written after a sweep.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::fit::{fit_exponent, ScalingFit};
use crate::table::{write_rows, Row, TableError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Abscissa {
    Lambda,
    LambdaDelta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "p")]
pub enum Quantity {
    /// `‖·‖₂/‖·‖₁`.
    Ratio,
    /// `‖·‖_p`.
    Norm(u8),
    /// `(λδ)^{(n−1)/4}‖ψ‖_p`, the norm before normalization.
    Unnormalized(u8),
}

impl Quantity {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ratio" => Some(Quantity::Ratio),
            "p1" => Some(Quantity::Norm(1)),
            "p2" => Some(Quantity::Norm(2)),
            "p4" => Some(Quantity::Norm(4)),
            "f1" => Some(Quantity::Unnormalized(1)),
            "f2" => Some(Quantity::Unnormalized(2)),
            "f4" => Some(Quantity::Unnormalized(4)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Target {
    pub name: String,
    pub x: Abscissa,
    pub y: Quantity,
    pub exponent: f64,
    pub tolerance: f64,
}

fn norm_of(row: &Row, p: u8) -> Option<f64> {
    match p {
        1 => row.norm_p1,
        2 => row.norm_p2,
        4 => row.norm_p4,
        _ => None,
    }
}

/// `(x, y)` pairs from completed rows, one per degree.
pub fn series(rows: &[Row], x: Abscissa, y: Quantity) -> Vec<(f64, f64)> {
    let mut seen = std::collections::BTreeSet::new();
    rows.iter()
        .filter(|r| r.is_ok() && seen.insert(r.k))
        .filter_map(|r| {
            let xv = match x {
                Abscissa::Lambda => r.lambda,
                Abscissa::LambdaDelta => r.lambda * r.delta,
            };
            let yv = match y {
                Quantity::Ratio => r.norm_p2? / r.norm_p1?,
                Quantity::Norm(p) => norm_of(r, p)?,
                Quantity::Unnormalized(p) => norm_of(r, p)? * (r.lambda * r.delta).powf((r.n as f64 - 1.0) / 4.0),
            };
            Some((xv, yv))
        })
        .collect()
}

/// Ratio law for every table; size laws for flat tables.
pub fn default_targets(rows: &[Row]) -> Vec<Target> {
    let Some(first) = rows.iter().find(|r| r.is_ok()) else {
        return Vec::new();
    };
    let d = first.n as f64 - 1.0;
    if first.is_flat() {
        let mut t = vec![Target {
            name: "ratio_vs_lambda_delta".into(),
            x: Abscissa::LambdaDelta,
            y: Quantity::Ratio,
            exponent: d / 4.0,
            tolerance: 0.05,
        }];
        for p in [1u8, 2, 4] {
            t.push(Target {
                name: format!("size_law_p{p}"),
                x: Abscissa::LambdaDelta,
                y: Quantity::Unnormalized(p),
                exponent: d / 2.0 * (1.0 - 1.0 / p as f64),
                tolerance: 0.05,
            });
        }
        t
    } else {
        vec![Target {
            name: "ratio_vs_lambda".into(),
            x: Abscissa::Lambda,
            y: Quantity::Ratio,
            exponent: d / 4.0,
            tolerance: if first.n == 2 { 0.05 } else { 0.07 },
        }]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetResult {
    pub target: Target,
    pub fit: Option<FitSummary>,
    pub error: Option<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub exponent: f64,
    pub intercept: f64,
    pub max_residual: f64,
    pub samples: usize,
    pub loo_shift: f64,
}

impl From<&ScalingFit> for FitSummary {
    fn from(f: &ScalingFit) -> Self {
        FitSummary {
            exponent: f.exponent,
            intercept: f.intercept,
            max_residual: f.max_residual,
            samples: f.samples,
            loo_shift: f.loo_shift,
        }
    }
}

pub fn evaluate(rows: &[Row], target: &Target) -> TargetResult {
    let pts = series(rows, target.x, target.y);
    match fit_exponent(&pts) {
        Ok(f) => TargetResult {
            target: target.clone(),
            pass: (f.exponent - target.exponent).abs() <= target.tolerance,
            fit: Some(FitSummary::from(&f)),
            error: None,
        },
        Err(e) => TargetResult { target: target.clone(), fit: None, error: Some(e.to_string()), pass: false },
    }
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub rows: usize,
    pub failed_rows: usize,
    pub targets: Vec<TargetResult>,
}

#[derive(Debug, Default)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub summary: Option<PathBuf>,
    pub gnuplot: Option<PathBuf>,
}

/// Writes `<stem>.csv`, and with targets also `<stem>.summary.json` and a
/// whitespace-separated `<stem>.dat` for log-log plots.
pub fn emit_report(rows: &[Row], targets: &[Target], dir: &Path, stem: &str) -> Result<(ReportFiles, Option<Summary>), TableError> {
    fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{stem}.csv"));
    write_rows(fs::File::create(&csv)?, rows)?;
    if targets.is_empty() {
        return Ok((ReportFiles { csv, ..Default::default() }, None));
    }
    let summary = Summary {
        rows: rows.len(),
        failed_rows: rows.iter().filter(|r| !r.is_ok()).count(),
        targets: targets.iter().map(|t| evaluate(rows, t)).collect(),
    };
    let json = dir.join(format!("{stem}.summary.json"));
    let text = serde_json::to_string_pretty(&summary).map_err(|e| std::io::Error::other(e.to_string()))?;
    fs::write(&json, text + "\n")?;
    let dat = dir.join(format!("{stem}.dat"));
    let mut f = std::io::BufWriter::new(fs::File::create(&dat)?);
    writeln!(f, "# k lambda lambda_delta norm_p1 norm_p2 norm_p4 ratio tube_R tube_l2 tube_min_abs")?;
    let opt = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x:e}"));
    for r in rows.iter().filter(|r| r.is_ok()) {
        let ratio = match (r.norm_p2, r.norm_p1) {
            (Some(a), Some(b)) => Some(a / b),
            _ => None,
        };
        writeln!(
            f,
            "{} {:e} {:e} {} {} {} {} {:e} {} {}",
            r.k,
            r.lambda,
            r.lambda * r.delta,
            opt(r.norm_p1),
            opt(r.norm_p2),
            opt(r.norm_p4),
            opt(ratio),
            r.tube_r,
            opt(r.tube_l2),
            opt(r.tube_min_abs)
        )?;
    }
    f.flush()?;
    Ok((ReportFiles { csv, summary: Some(json), gnuplot: Some(dat) }, Some(summary)))
}
