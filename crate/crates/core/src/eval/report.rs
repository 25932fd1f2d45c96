//! Report files: `table2.csv` (error statistics), `table3.csv` (complexity),
//! `report.txt` (aligned text) and `report.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::bench::ComplexityReport;
use super::stats::{ErrorStats, TABLE2_COLUMNS};
use crate::error::{Error, Result};

pub const TABLE2_FILE: &str = "table2.csv";
pub const TABLE3_FILE: &str = "table3.csv";
pub const TEXT_FILE: &str = "report.txt";
pub const JSON_FILE: &str = "report.json";

pub const TABLE3_COLUMNS: [&str; 3] = ["mean_response_time_ms", "memory_footprint_mb", "memory_peak_mb"];

/// One parsed row of `table2.csv`, in table units.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub model: String,
    pub values: [f64; 15],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelErrors {
    pub model: String,
    pub stats: ErrorStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComplexity {
    pub model: String,
    pub complexity: ComplexityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDump {
    pub error_sign: String,
    pub error_units: String,
    pub accuracy: Vec<ModelErrors>,
    pub complexity: Vec<ModelComplexity>,
}

const SIGN_NOTE: &str = "e = prediction - target (negative means the model under-predicted the FDR)";
const UNITS_NOTE: &str = "e^2 columns are raw fractions; |e| and e columns are percent";

pub fn table2_csv(rows: &[ModelErrors]) -> String {
    let mut out = String::from("model");
    for c in TABLE2_COLUMNS {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for r in rows {
        out.push_str(&r.model);
        for v in r.stats.report_row() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn table3_csv(rows: &[ModelComplexity]) -> String {
    let mut out = format!("model,{}\n", TABLE3_COLUMNS.join(","));
    for r in rows {
        let c = &r.complexity;
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.model, c.mean_response_time_ms, c.memory_footprint_mb, c.memory_peak_mb
        );
    }
    out
}

/// Parses text produced by [`table2_csv`]. The header must match exactly.
pub fn parse_table2_csv(text: &str) -> Result<Vec<ErrorRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::EmptyInput("table2 csv"))?;
    let expected = format!("model,{}", TABLE2_COLUMNS.join(","));
    if header != expected {
        return Err(Error::Precondition(format!("unexpected table2 header: {header}")));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let mut fields = line.split(',');
        let model = fields.next().unwrap_or_default().to_string();
        let parsed: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Precondition(format!("row {}: bad number {f:?}", k + 1)))
            })
            .collect::<Result<_>>()?;
        let values: [f64; 15] = parsed.try_into().map_err(|v: Vec<f64>| {
            Error::Precondition(format!("row {}: expected 15 values, found {}", k + 1, v.len()))
        })?;
        rows.push(ErrorRow { model, values });
    }
    Ok(rows)
}

fn render_text(accuracy: &[ModelErrors], complexity: &[ModelComplexity]) -> String {
    let mut out = String::new();
    if !accuracy.is_empty() {
        out.push_str("Prediction accuracy (statistics on the prediction error)\n");
        out.push_str("  e^2 columns in units of 1e-3, |e| and e columns in %\n\n");
        let mut header = format!("{:<8}", "model");
        for c in TABLE2_COLUMNS {
            let _ = write!(header, "{c:>12}");
        }
        out.push_str(header.trim_end());
        out.push('\n');
        for r in accuracy {
            let row = r.stats.report_row();
            let _ = write!(out, "{:<8}", r.model);
            for (k, v) in row.iter().enumerate() {
                let shown = if k < 5 { v * 1e3 } else { *v };
                let _ = write!(out, "{shown:>12.3}");
            }
            let _ = writeln!(out, "   (n = {})", r.stats.count);
        }
        out.push('\n');
    }
    if !complexity.is_empty() {
        out.push_str("Computational complexity (single-window inference)\n\n");
        let _ = writeln!(
            out,
            "{:<8}{:>24}{:>22}{:>18}{:>10}",
            "model", "mean_response_time_ms", "memory_footprint_mb", "memory_peak_mb", "reps"
        );
        for r in complexity {
            let c = &r.complexity;
            let _ = writeln!(
                out,
                "{:<8}{:>24.4}{:>22.3}{:>18.3}{:>10}",
                r.model, c.mean_response_time_ms, c.memory_footprint_mb, c.memory_peak_mb, c.sample_count
            );
        }
        out.push('\n');
    }
    out.push_str("Notes:\n");
    let _ = writeln!(out, "  sign convention: {SIGN_NOTE}");
    out.push_str("  sigma_abs_e is the population standard deviation (divides by N)\n");
    out.push_str("  percentiles interpolate linearly between closest ranks, h = (n - 1) q / 100\n");
    for r in complexity {
        let _ = writeln!(out, "  {} hardware: {}", r.model, r.complexity.hardware_label);
        let _ = writeln!(out, "  {} memory method: {}", r.model, r.complexity.memory_method);
    }
    out.push_str("  1 MB = 1,048,576 bytes\n");
    out
}

/// Writes every report file that has data into `dir` and returns the paths
/// written. Fails when both inputs are empty.
pub fn write_reports(dir: &Path, accuracy: &[ModelErrors], complexity: &[ModelComplexity]) -> Result<Vec<PathBuf>> {
    if accuracy.is_empty() && complexity.is_empty() {
        return Err(Error::EmptyInput("report: no model results"));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    if !accuracy.is_empty() {
        put(TABLE2_FILE, table2_csv(accuracy))?;
    }
    if !complexity.is_empty() {
        put(TABLE3_FILE, table3_csv(complexity))?;
    }
    put(TEXT_FILE, render_text(accuracy, complexity))?;
    let dump = ReportDump {
        error_sign: SIGN_NOTE.into(),
        error_units: UNITS_NOTE.into(),
        accuracy: accuracy.to_vec(),
        complexity: complexity.to_vec(),
    };
    put(JSON_FILE, serde_json::to_string_pretty(&dump)? + "\n")?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::stats::compute_error_stats;

    fn sample(model: &str) -> ModelErrors {
        let stats = compute_error_stats(&[0.91, 0.7, 0.88, 0.5], &[0.9, 0.8, 0.85, 0.61]).unwrap();
        ModelErrors { model: model.into(), stats }
    }

    #[test]
    fn table2_round_trip() {
        let rows = vec![sample("CNN"), sample("LSTM")];
        let parsed = parse_table2_csv(&table2_csv(&rows)).unwrap();
        assert_eq!(parsed.len(), 2);
        for (p, r) in parsed.iter().zip(&rows) {
            assert_eq!(p.model, r.model);
            assert_eq!(p.values, r.stats.report_row());
        }
    }

    #[test]
    fn one_model_one_row() {
        let csv = table2_csv(&[sample("CNN")]);
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("model,mu_e2,e2_p90,e2_p95,e2_p99,e2_max,mu_abs_e,"));
    }

    #[test]
    fn rejects_empty_and_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write_reports(dir.path(), &[], &[]).is_err());
        assert!(parse_table2_csv("model,x\nCNN,1\n").is_err());
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let written = write_reports(dir.path(), &[sample("CNN")], &[]).unwrap();
        assert_eq!(written.len(), 3);
        let text = fs::read_to_string(dir.path().join(TEXT_FILE)).unwrap();
        assert!(text.contains("prediction - target"));
        let dump: ReportDump = serde_json::from_str(&fs::read_to_string(dir.path().join(JSON_FILE)).unwrap()).unwrap();
        assert_eq!(dump.accuracy[0].stats, sample("CNN").stats);
    }
}
