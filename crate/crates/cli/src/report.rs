//! Run reports and their JSON / CSV forms.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// One task's outcome. Missing or non-finite numbers are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: String,
    pub kind: String,
    pub estimate_re: Option<f64>,
    pub estimate_im: Option<f64>,
    pub stderr: Option<f64>,
    pub max_dev: Option<f64>,
    pub pass: bool,
    pub error: Option<String>,
    #[serde(default)]
    pub details: BTreeMap<String, serde_json::Value>,
}

impl TaskResult {
    pub fn new(task: &str, kind: &str) -> Self {
        TaskResult {
            task: task.to_string(),
            kind: kind.to_string(),
            estimate_re: None,
            estimate_im: None,
            stderr: None,
            max_dev: None,
            pass: false,
            error: None,
            details: BTreeMap::new(),
        }
    }

    pub fn failed(task: &str, kind: &str, error: String) -> Self {
        TaskResult { error: Some(error), ..TaskResult::new(task, kind) }
    }

    pub fn estimate(&mut self, z: num_complex::Complex64) {
        self.estimate_re = finite(z.re);
        self.estimate_im = finite(z.im);
    }

    pub fn detail(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        let v = value.into();
        // serde_json turns non-finite floats into null on its own
        self.details.insert(key.to_string(), v);
    }
}

pub fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub all_pass: bool,
    pub results: Vec<TaskResult>,
}

impl Report {
    pub fn new(results: Vec<TaskResult>) -> Self {
        let all_pass = results.iter().all(|r| r.pass);
        Report { schema_version: REPORT_VERSION, all_pass, results }
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_pass {
            0
        } else {
            1
        }
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    task: &'a str,
    estimate_re: Option<f64>,
    estimate_im: Option<f64>,
    stderr: Option<f64>,
    max_dev: Option<f64>,
    pass: bool,
}

pub fn render_report(report: &Report, format: Format) -> Result<String, ReportError> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            if report.results.is_empty() {
                w.write_record(["task", "estimate_re", "estimate_im", "stderr", "max_dev", "pass"])?;
            }
            for r in &report.results {
                w.serialize(CsvRow {
                    task: &r.task,
                    estimate_re: r.estimate_re,
                    estimate_im: r.estimate_im,
                    stderr: r.stderr,
                    max_dev: r.max_dev,
                    pass: r.pass,
                })?;
            }
            let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
    }
}

pub fn emit_report(report: &Report, format: Format, path: impl AsRef<Path>) -> Result<(), ReportError> {
    let path = path.as_ref();
    let text = render_report(report, format)?;
    std::fs::write(path, text).map_err(|source| ReportError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn sample() -> Report {
        let mut a = TaskResult::new("one", "integrate");
        a.estimate(Complex64::new(0.1 + 0.2, f64::NAN));
        a.stderr = Some(1e-300);
        a.pass = true;
        a.detail("n", 3);
        let b = TaskResult::failed("two", "sup-norm", "boom".into());
        Report::new(vec![a, b])
    }

    #[test]
    fn json_round_trip() {
        let r = sample();
        let text = render_report(&r, Format::Json).unwrap();
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert!(!r.all_pass);
        assert_eq!(r.exit_code(), 1);
        assert!(text.contains("\"estimate_im\": null"));
    }

    #[test]
    fn csv_columns() {
        let text = render_report(&sample(), Format::Csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "task,estimate_re,estimate_im,stderr,max_dev,pass");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("one,0.30000000000000004,,"));
        assert!(lines[2].ends_with(",false"));
    }

    #[test]
    fn empty_report_passes() {
        let r = Report::new(Vec::new());
        assert!(r.all_pass);
        assert_eq!(r.exit_code(), 0);
        assert_eq!(render_report(&r, Format::Csv).unwrap().lines().count(), 1);
    }
}
