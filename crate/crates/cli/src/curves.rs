use std::fmt::Write;

use marc_core::MetricsRow;

use crate::error::{CliError, Result};

pub const CURVE_HEADER: &str = "step,mean_return";
pub const AGGREGATE_HEADER: &str = "step,mean,ci_low,ci_high,seeds";

/// Mean return of the last `window` episodes finished by each multiple of
/// `every`, up to `total`. Points before the first finished episode are
/// skipped.
pub fn learning_curve(rows: &[MetricsRow], every: u64, total: u64, window: usize) -> Vec<(u64, f64)> {
    let mut out = Vec::new();
    let mut finished = 0;
    let mut step = every;
    while step <= total {
        while finished < rows.len() && rows[finished].env_step <= step {
            finished += 1;
        }
        if finished > 0 {
            let recent = &rows[finished.saturating_sub(window)..finished];
            let mean = recent.iter().map(|r| r.mean_return).sum::<f64>() / recent.len() as f64;
            out.push((step, mean));
        }
        step += every;
    }
    out
}

pub fn curve_csv(curve: &[(u64, f64)]) -> String {
    let mut s = format!("{CURVE_HEADER}\n");
    for (step, v) in curve {
        let _ = writeln!(s, "{step},{v}");
    }
    s
}

pub fn parse_curve_csv(text: &str) -> Result<Vec<(u64, f64)>> {
    let rows = parse_rows(text, &["step", "mean_return"])?;
    rows.into_iter()
        .map(|r| Ok((r[0].parse_step()?, r[1].required()?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatePoint {
    pub step: u64,
    pub mean: f64,
    /// Half-width 1.96·std/√n; absent below two seeds.
    pub ci: Option<f64>,
    pub seeds: usize,
}

/// Steps present in every seed's curve, with the across-seed mean and the
/// 95% normal band.
pub fn aggregate(curves: &[Vec<(u64, f64)>]) -> Vec<AggregatePoint> {
    let Some(first) = curves.first() else {
        return Vec::new();
    };
    let n = curves.len();
    first
        .iter()
        .filter_map(|&(step, _)| {
            let values: Vec<f64> = curves
                .iter()
                .map(|c| c.iter().find(|p| p.0 == step).map(|p| p.1))
                .collect::<Option<_>>()?;
            let mean = values.iter().sum::<f64>() / n as f64;
            let ci = (n >= 2).then(|| {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                1.96 * var.sqrt() / (n as f64).sqrt()
            });
            Some(AggregatePoint {
                step,
                mean,
                ci,
                seeds: n,
            })
        })
        .collect()
}

pub fn aggregate_csv(points: &[AggregatePoint]) -> String {
    let mut s = format!("{AGGREGATE_HEADER}\n");
    for p in points {
        let _ = match p.ci {
            Some(h) => writeln!(s, "{},{},{},{},{}", p.step, p.mean, p.mean - h, p.mean + h, p.seeds),
            None => writeln!(s, "{},{},,,{}", p.step, p.mean, p.seeds),
        };
    }
    s
}

pub fn parse_aggregate_csv(text: &str) -> Result<Vec<AggregatePoint>> {
    let rows = parse_rows(text, &["step", "mean", "ci_low", "ci_high"])?;
    rows.into_iter()
        .map(|r| {
            let mean = r[1].required()?;
            let ci = match (r[2].optional()?, r[3].optional()?) {
                (Some(lo), Some(hi)) => Some((hi - lo) / 2.0),
                _ => None,
            };
            Ok(AggregatePoint {
                step: r[0].parse_step()?,
                mean,
                ci,
                seeds: if ci.is_some() { 2 } else { 1 },
            })
        })
        .collect()
}

struct Cell {
    text: String,
    line: usize,
    column: &'static str,
}

impl Cell {
    fn fail(&self, what: &str) -> CliError {
        CliError::Csv(format!("line {}: column {} {what}: '{}'", self.line, self.column, self.text))
    }

    fn parse_step(&self) -> Result<u64> {
        self.text.parse().map_err(|_| self.fail("is not a step count"))
    }

    fn required(&self) -> Result<f64> {
        self.text.parse().map_err(|_| self.fail("is not a number"))
    }

    fn optional(&self) -> Result<Option<f64>> {
        if self.text.is_empty() {
            Ok(None)
        } else {
            self.required().map(Some)
        }
    }
}

/// Rows of the requested columns, located by header name.
fn parse_rows(text: &str, columns: &[&'static str]) -> Result<Vec<Vec<Cell>>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| CliError::Csv("empty CSV".into()))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let index: Vec<usize> = columns
        .iter()
        .map(|c| {
            names
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| CliError::Csv(format!("missing column '{c}' in header '{header}'")))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<Cell>> = lines
        .map(|(i, l)| {
            let fields: Vec<&str> = l.split(',').map(str::trim).collect();
            index
                .iter()
                .zip(columns)
                .map(|(&j, &column)| Cell {
                    text: fields.get(j).copied().unwrap_or("").to_string(),
                    line: i + 1,
                    column,
                })
                .collect()
        })
        .collect();
    if rows.is_empty() {
        return Err(CliError::Csv("CSV has a header but no rows".into()));
    }
    Ok(rows)
}
