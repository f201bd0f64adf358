use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_text, IoError};
use crate::model::{DatasheetSpec, ModelParams};
use crate::solver::{ExtractionResult, StartOutcome};
use crate::validation::{ComparisonTable, CurveFit};

/// Everything one CLI run produced. Serialized as pretty-printed JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool_version: String,
    /// RFC 3339.
    pub timestamp: String,
    /// Labels of the datasets involved (spec files, curves).
    pub datasets: Vec<String>,
    #[serde(default)]
    pub extractions: Vec<ExtractionReport>,
    #[serde(default)]
    pub benchmark_table: Option<ComparisonTable>,
    #[serde(default)]
    pub validation: Option<ValidationReport>,
}

impl ReportDocument {
    pub fn new(timestamp: impl Into<String>) -> Self {
        Self {
            tool_version: crate::VERSION.to_string(),
            timestamp: timestamp.into(),
            datasets: Vec::new(),
            extractions: Vec::new(),
            benchmark_table: None,
            validation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub spec: DatasheetSpec,
    /// `None` when no start converged; `starts` then says why.
    pub selected: Option<ExtractionResult>,
    pub starts: Vec<StartOutcome>,
    /// Fit of the selected parameters against the measured curve, if one was given.
    pub fit: Option<CurveFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub curve_label: String,
    pub params: ModelParams,
    pub fit: CurveFit,
}

pub fn write_report(report: &ReportDocument, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| super::parse_error(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ReportDocument, IoError> {
    let path = path.as_ref();
    serde_json::from_str(&read_text(path)?).map_err(|e| super::parse_error(path, e.to_string()))
}
