//! CSV ingestion and report emission.
//!
//! Input contract: rows are observations, columns are variables, comma
//! delimited, UTF-8. A header row is optional and auto-detected by a
//! non-numeric first row; rows with missing or malformed fields are
//! rejected with their 1-based line numbers.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use rao_beta_score::score_tests::TestReport;
use rao_beta_score::sim::MonteCarloSummary;
use rao_beta_score::{Error, Result};

pub const SCHEMA: &str = "rao-beta-score/1";

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Parse an n×p numeric CSV matrix.
pub fn read_data_matrix(path: &Path) -> Result<Array2<f64>> {
    let text = read_text(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    let mut header_seen = false;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, usize> = fields
            .iter()
            .enumerate()
            .map(|(k, f)| f.parse::<f64>().map_err(|_| k))
            .collect();
        match parsed {
            Ok(values) => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data(format!(
                        "{}: line {lineno}: non-finite value",
                        path.display()
                    )));
                }
                match width {
                    None => width = Some(values.len()),
                    Some(w) if w != values.len() => {
                        return Err(Error::Data(format!(
                            "{}: line {lineno}: expected {w} fields, got {}",
                            path.display(),
                            values.len()
                        )));
                    }
                    _ => {}
                }
                rows.push(values);
            }
            Err(field) => {
                // a non-numeric first row is a header; anywhere else it is an error
                if rows.is_empty() && !header_seen {
                    header_seen = true;
                    width = Some(fields.len());
                    continue;
                }
                return Err(Error::Data(format!(
                    "{}: line {lineno}: field {} is not numeric: '{}'",
                    path.display(),
                    field + 1,
                    fields[field]
                )));
            }
        }
    }
    let p = width.ok_or_else(|| Error::Data(format!("{}: no data rows", path.display())))?;
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    let n = rows.len();
    let mut out = Array2::<f64>::zeros((n, p));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct VersionedReport<'a> {
    schema: &'static str,
    #[serde(flatten)]
    report: &'a TestReport,
}

#[derive(Serialize)]
struct VersionedSummary<'a> {
    schema: &'static str,
    #[serde(flatten)]
    summary: &'a MonteCarloSummary,
}

pub fn report_json(report: &TestReport) -> String {
    serde_json::to_string(&VersionedReport {
        schema: SCHEMA,
        report,
    })
    .expect("report serialization cannot fail")
}

pub fn summary_json(summary: &MonteCarloSummary) -> String {
    serde_json::to_string(&VersionedSummary {
        schema: SCHEMA,
        summary,
    })
    .expect("summary serialization cannot fail")
}

pub const REPORT_CSV_HEADER: &str =
    "kind,beta,statistic,df,p_value,n,p,converged,iterations,residual,kappa0_tilde,rho_tilde";

pub fn report_csv_row(report: &TestReport) -> String {
    let mut row = String::new();
    let _ = write!(
        row,
        "{},{},{},{},{},{},{}",
        report.kind.as_str(),
        report.beta,
        report.statistic,
        report.df,
        report.p_value,
        report.n,
        report.p
    );
    match &report.fit {
        Some(fit) => {
            let _ = write!(
                row,
                ",{},{},{},{}",
                fit.converged, fit.iterations, fit.residual, fit.kappa0_tilde
            );
            match fit.rho_tilde {
                Some(rho) => {
                    let _ = write!(row, ",{rho}");
                }
                None => row.push(','),
            }
        }
        None => row.push_str(",,,,,"),
    }
    row
}

pub const SUMMARY_CSV_HEADER: &str = "test,beta,df,replications,completed,non_convergence,\
rejections,rejection_rate,rejection_se,mean_statistic,var_statistic,ks_distance";

pub fn summary_csv_rows(summary: &MonteCarloSummary) -> Vec<String> {
    summary
        .cells
        .iter()
        .map(|c| {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                c.test.as_str(),
                c.beta,
                c.df,
                c.replications,
                c.completed,
                c.non_convergence,
                c.rejections,
                opt(c.rejection_rate),
                opt(c.rejection_se),
                opt(c.mean_statistic),
                opt(c.var_statistic),
                opt(c.ks_distance)
            )
        })
        .collect()
}
