//! Per-group mixture summaries of a benchmark CSV.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use super::{select_model, GmmError, GmmFit, SAMPLES_PER_COMPONENT};

/// Groups smaller than this are skipped.
pub const MIN_GROUP_SAMPLES: usize = 40;
pub const DENSITY_POINTS: usize = 256;
const VALUE_COLUMNS: [&str; 2] = ["elapsed_ms", "vsz_mb"];
const REQUIRED_COLUMNS: [&str; 5] = ["iteration", "size", "op", "elapsed_ms", "vsz_mb"];

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("CSV schema error: missing column {0:?}")]
    MissingColumn(String),
    #[error("row {row}: cannot parse {column} value {value:?}")]
    BadValue { row: usize, column: String, value: String },
    #[error("fit failed for {group}: {source}")]
    Fit { group: GroupKey, source: GmmError },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct GroupKey {
    pub size: String,
    pub op: String,
    pub column: String,
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.size, self.op, self.column)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub group: GroupKey,
    pub fit: GmmFit,
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityCurve {
    pub group: GroupKey,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub curves: Vec<DensityCurve>,
    /// Groups with too few samples, and their sizes.
    pub skipped: Vec<(GroupKey, usize)>,
}

pub fn summarize_csv(path: &Path, k_max: usize, seed: u64) -> Result<Summary, AnalysisError> {
    let file = std::fs::File::open(path)
        .map_err(|source| AnalysisError::Io { path: path.display().to_string(), source })?;
    summarize_reader(file, k_max, seed)
}

/// Groups rows by (size, op) and fits each value column separately. Empty
/// cells (e.g. VSZ unavailable) are left out of their group.
pub fn summarize_reader(reader: impl Read, k_max: usize, seed: u64) -> Result<Summary, AnalysisError> {
    let k_max = k_max.max(1);
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| AnalysisError::MissingColumn(name.to_string()))
    };
    for name in REQUIRED_COLUMNS {
        col(name)?;
    }
    let size_idx = col("size")?;
    let op_idx = col("op")?;
    let value_idx: Vec<usize> = VALUE_COLUMNS.iter().map(|c| col(c)).collect::<Result<_, _>>()?;

    let mut order: Vec<GroupKey> = Vec::new();
    let mut groups: HashMap<GroupKey, Vec<f64>> = HashMap::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let size = record.get(size_idx).unwrap_or_default().trim();
        let op = record.get(op_idx).unwrap_or_default().trim();
        for (column, &idx) in VALUE_COLUMNS.iter().zip(&value_idx) {
            let key = GroupKey { size: size.to_string(), op: op.to_string(), column: column.to_string() };
            let values = groups.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                Vec::new()
            });
            let cell = record.get(idx).unwrap_or_default().trim();
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| AnalysisError::BadValue {
                row: row + 2,
                column: column.to_string(),
                value: cell.to_string(),
            })?;
            values.push(v);
        }
    }

    let min_samples = MIN_GROUP_SAMPLES.max(SAMPLES_PER_COMPONENT * k_max);
    let mut summary = Summary::default();
    for key in order {
        let values = &groups[&key];
        if values.len() < min_samples {
            tracing::warn!(group = %key, samples = values.len(), "skipping group with too few samples");
            summary.skipped.push((key, values.len()));
            continue;
        }
        let fit = select_model(values, k_max, seed).map_err(|source| AnalysisError::Fit { group: key.clone(), source })?;
        let (lo, hi) = curve_range(values, &fit);
        summary.curves.push(DensityCurve { group: key.clone(), points: fit.density_curve(lo, hi, DENSITY_POINTS) });
        summary.rows.push(SummaryRow { group: key, fit });
    }
    Ok(summary)
}

/// Sample range, widened to four standard deviations for constant samples.
fn curve_range(values: &[f64], fit: &GmmFit) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        return (lo, hi);
    }
    let sd = fit.components[0].variance.sqrt();
    (lo - 4.0 * sd, hi + 4.0 * sd)
}

fn fmt_list(values: &[f64]) -> String {
    let inner: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
    format!("[{}]", inner.join(", "))
}

impl Summary {
    /// Columns: size, op, column, n, k, log_likelihood, bic, means, variances, weights, degenerate.
    pub fn write_table_csv(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "size", "op", "column", "n", "k", "log_likelihood", "bic", "means", "variances", "weights", "degenerate",
        ])?;
        for row in &self.rows {
            let f = &row.fit;
            w.write_record([
                row.group.size.clone(),
                row.group.op.clone(),
                row.group.column.clone(),
                f.n.to_string(),
                f.k.to_string(),
                format!("{:.2}", f.log_likelihood),
                format!("{:.2}", f.bic),
                fmt_list(&f.means()),
                fmt_list(&f.variances()),
                fmt_list(&f.weights()),
                f.degenerate.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_markdown(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "| Variables | K | Log Likelihood | BIC | Cluster Mean | Cluster Variance |")?;
        writeln!(out, "|---|---|---|---|---|---|")?;
        for row in &self.rows {
            let f = &row.fit;
            let flag = if f.degenerate { " (degenerate)" } else { "" };
            writeln!(
                out,
                "| {} {} {}{flag} | {} | {:.2} | {:.2} | {} | {} |",
                row.group.size,
                row.group.op,
                row.group.column,
                f.k,
                f.log_likelihood,
                f.bic,
                fmt_list(&f.means()),
                fmt_list(&f.variances()),
            )?;
        }
        Ok(())
    }

    /// Long format `x,density,group` for external plotting.
    pub fn write_density_csv(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "density", "group"])?;
        for curve in &self.curves {
            let group = curve.group.to_string();
            for (x, d) in &curve.points {
                w.write_record([x.to_string(), d.to_string(), group.clone()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
