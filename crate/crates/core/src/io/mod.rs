//! File formats: datasheet spec (TOML), measured curves (CSV with a `#`
//! metadata block), benchmark tables (TOML), reports (JSON) and plots (SVG).
//!
//! Temperatures are Celsius or Kelvin on disk and Kelvin in memory.

mod plot;
mod report;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::model::{DatasheetSpec, DoubleDiodeParams, ModelError, ModelParams, SingleDiodeParams};
use crate::validation::{BenchmarkEntry, CurvePoint, MeasuredCurve, ValidationError};

pub use plot::{render_plot, render_svg, PlotKind, Series, SeriesStyle};
pub use report::{read_report, write_report, ExtractionReport, ReportDocument, ValidationReport};

pub const CURVE_HEADER: &str = "voltage_V,current_A";
pub const CELSIUS_OFFSET: f64 = 273.15;
pub const DATA_DIR_ENV: &str = "PV_SDM_DATA_DIR";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}, line {line}: {message}")]
    Line {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    Spec { path: PathBuf, source: ModelError },
    #[error("{path}: {source}")]
    Curve {
        path: PathBuf,
        source: ValidationError,
    },
    #[error("{path}: entry {index} ({label}): {message}")]
    Benchmark {
        path: PathBuf,
        index: usize,
        label: String,
        message: String,
    },
    #[error("plot: {0}")]
    Plot(String),
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_error(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Location of the vendored data files: `$PV_SDM_DATA_DIR` when set,
/// otherwise the workspace `data/` directory.
pub fn data_dir() -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"),
    }
}

fn kelvin(celsius: Option<f64>, kelvin: Option<f64>) -> Result<f64, String> {
    match (celsius, kelvin) {
        (Some(c), None) => Ok(c + CELSIUS_OFFSET),
        (None, Some(k)) => Ok(k),
        (Some(_), Some(_)) => {
            Err("give only one of temperature_celsius and temperature_kelvin".into())
        }
        (None, None) => Err("missing key temperature_celsius (or temperature_kelvin)".into()),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    i_sc: f64,
    v_oc: f64,
    i_mpp: f64,
    v_mpp: f64,
    p_mpp: f64,
    n_series: u32,
    temperature_celsius: Option<f64>,
    temperature_kelvin: Option<f64>,
}

/// Parse a datasheet spec from TOML text. `path` only labels errors.
pub fn parse_spec(text: &str, path: &Path) -> Result<DatasheetSpec, IoError> {
    let raw: SpecFile =
        toml::from_str(text).map_err(|e| parse_error(path, e.message().to_string()))?;
    let temperature = kelvin(raw.temperature_celsius, raw.temperature_kelvin)
        .map_err(|m| parse_error(path, m))?;
    DatasheetSpec::new(
        raw.i_sc,
        raw.v_oc,
        raw.i_mpp,
        raw.v_mpp,
        raw.p_mpp,
        raw.n_series,
        temperature,
    )
    .map_err(|source| IoError::Spec {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<DatasheetSpec, IoError> {
    let path = path.as_ref();
    parse_spec(&read_text(path)?, path)
}

#[derive(Default)]
struct CurveMetadata {
    source: Option<String>,
    celsius: Option<f64>,
    kelvin: Option<f64>,
    n_series: Option<u32>,
}

impl CurveMetadata {
    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let number = || {
            value
                .parse::<f64>()
                .map_err(|_| format!("{key}: '{value}' is not a number"))
        };
        match key {
            "source" => self.source = Some(value.to_string()),
            "temperature_celsius" => self.celsius = Some(number()?),
            "temperature_kelvin" => self.kelvin = Some(number()?),
            "n_series" => {
                self.n_series =
                    Some(value.parse().map_err(|_| {
                        format!("n_series: '{value}' is not a non-negative integer")
                    })?)
            }
            _ => return Err(format!("unknown metadata key '{key}'")),
        }
        Ok(())
    }
}

/// Parse a measured curve. Metadata comes from `# key=value` lines before
/// the header; comment lines without `=` are free text. Rows are sorted by
/// voltage and exact duplicate rows dropped.
pub fn parse_measured_curve(text: &str, path: &Path) -> Result<MeasuredCurve, IoError> {
    let line_error = |line: u64, message: String| IoError::Line {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut meta = CurveMetadata::default();
    let mut offset = 0u64;
    let mut body_start = text.len();
    let mut consumed = 0usize;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if let Some(comment) = trimmed.strip_prefix('#') {
            offset += 1;
            consumed += line.len();
            if let Some((key, value)) = comment.split_once('=') {
                meta.set(key.trim(), value.trim())
                    .map_err(|m| line_error(offset, m))?;
            }
        } else {
            body_start = consumed;
            break;
        }
    }
    let body = &text[body_start.min(text.len())..];

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| line_error(offset + 1, format!("unreadable header: {e}")))?
        .clone();
    if headers.iter().collect::<Vec<_>>().join(",") != CURVE_HEADER {
        return Err(line_error(
            offset + 1,
            format!(
                "expected header '{CURVE_HEADER}', found '{}'",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }

    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            line_error(offset + line, format!("malformed row: {e}"))
        })?;
        let line = offset + record.position().map_or(0, |p| p.line());
        let field = |k: usize, name: &str| -> Result<f64, IoError> {
            let raw = record.get(k).unwrap_or_default();
            let value: f64 = raw
                .parse()
                .map_err(|_| line_error(line, format!("{name} '{raw}' is not a number")))?;
            if value.is_finite() {
                Ok(value)
            } else {
                Err(line_error(line, format!("{name} '{raw}' is not finite")))
            }
        };
        points.push(CurvePoint {
            voltage: field(0, "voltage")?,
            current: field(1, "current")?,
        });
    }

    points.sort_by(|a, b| a.voltage.total_cmp(&b.voltage));
    points.dedup();

    let temperature = kelvin(meta.celsius, meta.kelvin).map_err(|m| parse_error(path, m))?;
    let n_series = meta
        .n_series
        .ok_or_else(|| parse_error(path, "missing metadata key n_series"))?;
    let label = meta.source.unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    MeasuredCurve::new(points, label, temperature, n_series).map_err(|source| IoError::Curve {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_measured_curve(path: impl AsRef<Path>) -> Result<MeasuredCurve, IoError> {
    let path = path.as_ref();
    parse_measured_curve(&read_text(path)?, path)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchmarkFile {
    #[serde(default)]
    entry: Vec<RawEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    label: String,
    source: String,
    model: String,
    reported_rmse: f64,
    i_ph: f64,
    r_s: f64,
    r_sh: f64,
    i_s: Option<f64>,
    n: Option<f64>,
    i_s1: Option<f64>,
    i_s2: Option<f64>,
    n1: Option<f64>,
    n2: Option<f64>,
}

impl RawEntry {
    fn into_entry(self) -> Result<BenchmarkEntry, String> {
        let need = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| format!("missing key {name} for model '{}'", self.model))
        };
        let params = match self.model.as_str() {
            "single" => {
                for (name, v) in [
                    ("i_s1", self.i_s1),
                    ("i_s2", self.i_s2),
                    ("n1", self.n1),
                    ("n2", self.n2),
                ] {
                    if v.is_some() {
                        return Err(format!("key {name} does not apply to a single-diode entry"));
                    }
                }
                ModelParams::Single(SingleDiodeParams {
                    i_ph: self.i_ph,
                    i_s: need("i_s", self.i_s)?,
                    n: need("n", self.n)?,
                    r_s: self.r_s,
                    r_sh: self.r_sh,
                })
            }
            "double" => {
                for (name, v) in [("i_s", self.i_s), ("n", self.n)] {
                    if v.is_some() {
                        return Err(format!("key {name} does not apply to a double-diode entry"));
                    }
                }
                ModelParams::Double(DoubleDiodeParams {
                    i_ph: self.i_ph,
                    i_s1: need("i_s1", self.i_s1)?,
                    i_s2: need("i_s2", self.i_s2)?,
                    n1: need("n1", self.n1)?,
                    n2: need("n2", self.n2)?,
                    r_s: self.r_s,
                    r_sh: self.r_sh,
                })
            }
            other => return Err(format!("model must be 'single' or 'double', got '{other}'")),
        };
        params.validate().map_err(|e| e.to_string())?;
        if !(self.reported_rmse.is_finite() && self.reported_rmse >= 0.0) {
            return Err(format!(
                "reported_rmse must be finite and >= 0, got {}",
                self.reported_rmse
            ));
        }
        Ok(BenchmarkEntry {
            label: self.label,
            source: self.source,
            params,
            reported_rmse: self.reported_rmse,
        })
    }
}

/// Parse a benchmark table: `[[entry]]` tables with `label`, `source`,
/// `model = "single" | "double"`, the parameters in SI units and
/// `reported_rmse` in amperes. An empty table parses to an empty list.
pub fn parse_benchmarks(text: &str, path: &Path) -> Result<Vec<BenchmarkEntry>, IoError> {
    let raw: BenchmarkFile =
        toml::from_str(text).map_err(|e| parse_error(path, e.message().to_string()))?;
    raw.entry
        .into_iter()
        .enumerate()
        .map(|(index, e)| {
            let label = e.label.clone();
            e.into_entry().map_err(|message| IoError::Benchmark {
                path: path.to_path_buf(),
                index,
                label,
                message,
            })
        })
        .collect()
}

pub fn load_benchmarks(path: impl AsRef<Path>) -> Result<Vec<BenchmarkEntry>, IoError> {
    let path = path.as_ref();
    parse_benchmarks(&read_text(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test")
    }

    const CURVE: &str = "# source=demo\n# temperature_celsius=25\n# n_series=2\n# free text\nvoltage_V,current_A\n0.0,1.0\n0.2,0.99\n0.4,0.95\n0.5,0.8\n0.6,0.3\n0.65,0.0\n";

    #[test]
    fn curve_metadata_and_points() {
        let c = parse_measured_curve(CURVE, p()).unwrap();
        assert_eq!(c.source_label, "demo");
        assert_eq!(c.temperature, 25.0 + 273.15);
        assert_eq!(c.n_series, 2);
        assert_eq!(c.points.len(), 6);
    }

    #[test]
    fn curve_rows_are_sorted_and_deduplicated() {
        let text = CURVE
            .replace("0.0,1.0\n", "0.4,0.95\n0.0,1.0\n")
            .replace("0.65,0.0\n", "0.65,0.0\n0.1,0.995\n");
        let c = parse_measured_curve(&text, p()).unwrap();
        let v = c.voltages();
        assert_eq!(v, vec![0.0, 0.1, 0.2, 0.4, 0.5, 0.6, 0.65]);
    }

    #[test]
    fn conflicting_duplicate_voltage_is_rejected() {
        let text = CURVE.replace("0.4,0.95\n", "0.4,0.95\n0.4,0.94\n");
        let err = parse_measured_curve(&text, p()).unwrap_err();
        assert!(matches!(
            err,
            IoError::Curve {
                source: ValidationError::NotIncreasing { .. },
                ..
            }
        ));
    }

    #[test]
    fn malformed_row_names_its_line() {
        let text = CURVE.replace("0.5,0.8", "0.5,abc");
        match parse_measured_curve(&text, p()).unwrap_err() {
            IoError::Line { line, message, .. } => {
                assert_eq!(line, 9);
                assert!(message.contains("abc"));
            }
            e => panic!("unexpected {e}"),
        }
        let short = CURVE.replace("0.5,0.8", "0.5");
        assert!(matches!(
            parse_measured_curve(&short, p()).unwrap_err(),
            IoError::Line { line: 9, .. }
        ));
    }

    #[test]
    fn wrong_header_and_missing_metadata() {
        let text = CURVE.replace(CURVE_HEADER, "v,i");
        assert!(matches!(
            parse_measured_curve(&text, p()).unwrap_err(),
            IoError::Line { line: 5, .. }
        ));
        let text = CURVE.replace("# n_series=2\n", "");
        assert!(parse_measured_curve(&text, p())
            .unwrap_err()
            .to_string()
            .contains("n_series"));
        let text = CURVE.replace("# source=demo", "# colour=red");
        assert!(parse_measured_curve(&text, p())
            .unwrap_err()
            .to_string()
            .contains("colour"));
    }

    #[test]
    fn two_point_curve_parses_but_is_too_short() {
        let text = "# temperature_kelvin=300\n# n_series=1\nvoltage_V,current_A\n0,1\n0.5,0\n";
        let err = parse_measured_curve(text, p()).unwrap_err();
        assert!(matches!(
            err,
            IoError::Curve {
                source: ValidationError::TooFewPoints(2),
                ..
            }
        ));
        assert!(err.to_string().contains("at least 5"));
    }

    const SPEC: &str = "i_sc = 1.0\nv_oc = 20.0\ni_mpp = 0.9\nv_mpp = 16.0\np_mpp = 14.4\nn_series = 36\ntemperature_celsius = 25.0\n";

    #[test]
    fn spec_parses_and_converts_celsius() {
        let s = parse_spec(SPEC, p()).unwrap();
        assert_eq!(s.temperature, 298.15);
        assert_eq!(s.n_series, 36);
        let k = parse_spec(
            &SPEC.replace("temperature_celsius = 25.0", "temperature_kelvin = 300.0"),
            p(),
        )
        .unwrap();
        assert_eq!(k.temperature, 300.0);
    }

    #[test]
    fn spec_errors_name_the_key() {
        let unknown = format!("{SPEC}colour = 1\n");
        assert!(parse_spec(&unknown, p())
            .unwrap_err()
            .to_string()
            .contains("colour"));
        let missing = SPEC.replace("v_mpp = 16.0\n", "");
        assert!(parse_spec(&missing, p())
            .unwrap_err()
            .to_string()
            .contains("v_mpp"));
        let bad = SPEC.replace("i_mpp = 0.9", "i_mpp = 1.2");
        assert!(parse_spec(&bad, p())
            .unwrap_err()
            .to_string()
            .contains("i_mpp"));
        let both = format!("{SPEC}temperature_kelvin = 300.0\n");
        assert!(parse_spec(&both, p()).is_err());
    }

    #[test]
    fn benchmark_entries() {
        let text = r#"
[[entry]]
label = "a"
source = "X"
model = "single"
i_ph = 1.0
i_s = 1e-7
n = 1.4
r_s = 0.1
r_sh = 100.0
reported_rmse = 1e-3

[[entry]]
label = "b"
source = "X"
model = "double"
i_ph = 1.0
i_s1 = 1e-7
i_s2 = 0.0
n1 = 1.4
n2 = 2.0
r_s = 0.1
r_sh = 100.0
reported_rmse = 2e-3
"#;
        let e = parse_benchmarks(text, p()).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[1].params.kind(), "double");
        assert!(parse_benchmarks("", p()).unwrap().is_empty());

        let bad = text.replace("n = 1.4\n", "");
        let err = parse_benchmarks(&bad, p()).unwrap_err().to_string();
        assert!(
            err.contains("entry 0") && err.contains("missing key n"),
            "{err}"
        );
        let neg = text.replace(
            "r_sh = 100.0\nreported_rmse = 1e-3",
            "r_sh = -1.0\nreported_rmse = 1e-3",
        );
        assert!(parse_benchmarks(&neg, p())
            .unwrap_err()
            .to_string()
            .contains("r_sh"));
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = load_spec("/nonexistent/x.spec").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.spec"));
    }
}
