//! File formats: CSV dataset ingestion with an explicit column mapping,
//! CSV emitters for risk curves and allocation tables, and JSON helpers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::RuleOutput;
use crate::sim::{AllocationCell, RiskCurve};
use crate::tobit::Dataset;
use crate::transport::{Coupling, DiscreteMarginal};

/// Column mapping for dataset CSVs. The gender/sex coding of empirical data
/// is never guessed: covariate columns are listed explicitly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvColumns {
    pub y: String,
    pub t: String,
    pub covariates: Vec<String>,
    /// Append a constant-1 covariate named "const".
    #[serde(default)]
    pub add_intercept: bool,
}

/// How the censor point is determined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TauRule {
    /// A known censor point; outcomes are clamped up to it.
    Literal(f64),
    /// Quantile `q` of y among rows whose flag column is nonzero; rows with
    /// a zero flag are set to τ (they carry no outcome information beyond
    /// being below the threshold).
    Quantile { q: f64, flag_column: String },
}

/// Nearest-rank quantile of a sample.
fn quantile_nearest_rank(values: &mut [f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("quantile level must be in [0,1], got {q}")));
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite outcomes"));
    let n = values.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    Ok(values[rank - 1])
}

/// Read a dataset from CSV with headers; returns the dataset and the censor
/// point actually applied (echoed into outputs downstream).
pub fn read_dataset_csv(path: &Path, columns: &CsvColumns, tau_rule: &TauRule) -> Result<(Dataset, f64)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::invalid(format!("CSV is missing column '{name}'")))
    };
    let yc = col(&columns.y)?;
    let tc = col(&columns.t)?;
    let xc: Vec<usize> = columns
        .covariates
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    let flag_col = match tau_rule {
        TauRule::Quantile { flag_column, .. } => Some(col(flag_column)?),
        TauRule::Literal(_) => None,
    };

    let parse = |field: &str, row: usize, name: &str| -> Result<f64> {
        field.trim().parse::<f64>().map_err(|_| {
            Error::invalid(format!("row {row}: cannot parse '{field}' in column '{name}'"))
        })
    };

    let mut raw_y = Vec::new();
    let mut x = Vec::new();
    let mut t = Vec::new();
    let mut flags = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        raw_y.push(parse(&record[yc], idx, &columns.y)?);
        t.push(parse(&record[tc], idx, &columns.t)?);
        let mut row = Vec::with_capacity(xc.len() + usize::from(columns.add_intercept));
        for (&c, name) in xc.iter().zip(&columns.covariates) {
            row.push(parse(&record[c], idx, name)?);
        }
        if columns.add_intercept {
            row.push(1.0);
        }
        x.push(row);
        if let Some(fc) = flag_col {
            flags.push(parse(&record[fc], idx, "flag")? != 0.0);
        }
    }
    if raw_y.is_empty() {
        return Err(Error::invalid("CSV contains no data rows"));
    }

    let (tau, y) = match tau_rule {
        TauRule::Literal(tau) => {
            (*tau, raw_y.iter().map(|v| v.max(*tau)).collect::<Vec<_>>())
        }
        TauRule::Quantile { q, .. } => {
            let mut takers: Vec<f64> = raw_y
                .iter()
                .zip(&flags)
                .filter(|(_, &f)| f)
                .map(|(&v, _)| v)
                .collect();
            if takers.is_empty() {
                return Err(Error::invalid("no rows with a nonzero flag to compute the quantile"));
            }
            let tau = quantile_nearest_rank(&mut takers, *q)?;
            let y = raw_y
                .iter()
                .zip(&flags)
                .map(|(&v, &f)| if f { v.max(tau) } else { tau })
                .collect();
            (tau, y)
        }
    };
    Ok((Dataset::new(y, x, t, tau)?, tau))
}

/// risk_curve.csv: `h,rule,mean_regret,se,n_excluded`.
pub fn write_risk_curve_csv(path: &Path, curve: &RiskCurve) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["h", "rule", "mean_regret", "se", "n_excluded"])?;
    for row in &curve.per_h {
        for (rule, stat) in [("plug_in", &row.plug_in), ("ex_post_bayes", &row.ex_post)] {
            w.write_record([
                row.h.to_string(),
                rule.to_string(),
                stat.mean.to_string(),
                stat.se.to_string(),
                row.n_excluded.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// allocation heatmap CSV: `age,sex,treatment_probability,rule`.
pub fn write_allocation_heatmap_csv(path: &Path, cells: &[AllocationCell]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["age", "sex", "treatment_probability", "rule"])?;
    for c in cells {
        w.write_record([
            c.age.to_string(),
            c.sex.to_string(),
            c.treatment_probability.to_string(),
            c.rule.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Human-readable allocation table for one rule:
/// `bin,level,mass,conditional` (conditional = μ(t|x)).
pub fn write_allocation_csv(
    path: &Path,
    rule: &RuleOutput,
    grid: &DiscreteMarginal,
    levels: &DiscreteMarginal,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin", "level", "mass", "conditional"])?;
    for i in 0..grid.len() {
        for j in 0..levels.len() {
            w.write_record([
                grid.point(i).label.clone(),
                levels.point(j).label.clone(),
                rule.coupling.get(i, j).to_string(),
                rule.coupling.conditional(i, j, grid).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Cell-by-cell difference report between two rules' couplings.
pub fn write_allocation_diff_csv(
    path: &Path,
    a: &RuleOutput,
    b: &RuleOutput,
    grid: &DiscreteMarginal,
    levels: &DiscreteMarginal,
    threshold: f64,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin", "level", "mass_a", "mass_b", "diff"])?;
    for i in 0..grid.len() {
        for j in 0..levels.len() {
            let ma = a.coupling.get(i, j);
            let mb = b.coupling.get(i, j);
            if (ma - mb).abs() > threshold {
                w.write_record([
                    grid.point(i).label.clone(),
                    levels.point(j).label.clone(),
                    ma.to_string(),
                    mb.to_string(),
                    (ma - mb).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path)?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Couplings re-load to the value they were saved from.
pub fn coupling_roundtrip_error(c: &Coupling) -> Result<f64> {
    let text = serde_json::to_string(c)?;
    let back: Coupling = serde_json::from_str(&text)?;
    Ok(c.mass().max_abs_diff(back.mass()))
}
