//! Measured curves, simulated curves and the error measures between them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{solve_current, DiodeModel, ModelError, ModelParams, OperatingConditions};

pub const MIN_CURVE_POINTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("measured and simulated series differ in length ({measured} vs {simulated})")]
    LengthMismatch { measured: usize, simulated: usize },
    #[error("error measures need at least one sample")]
    Empty,
    #[error("a measured curve needs at least {MIN_CURVE_POINTS} points, got {0}")]
    TooFewPoints(usize),
    #[error("curve voltages must be strictly increasing (point {index}: {voltage} V)")]
    NotIncreasing { index: usize, voltage: f64 },
    #[error("non-finite value in curve at point {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub voltage: f64,
    pub current: f64,
}

/// Experimental I-V samples of one PV source, ordered by voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredCurve {
    pub points: Vec<CurvePoint>,
    pub source_label: String,
    /// Kelvin.
    pub temperature: f64,
    pub n_series: u32,
}

impl MeasuredCurve {
    pub fn new(
        points: Vec<CurvePoint>,
        source_label: impl Into<String>,
        temperature: f64,
        n_series: u32,
    ) -> Result<Self, ValidationError> {
        let curve = Self {
            points,
            source_label: source_label.into(),
            temperature,
            n_series,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.points.len() < MIN_CURVE_POINTS {
            return Err(ValidationError::TooFewPoints(self.points.len()));
        }
        for (index, p) in self.points.iter().enumerate() {
            if !(p.voltage.is_finite() && p.current.is_finite()) {
                return Err(ValidationError::NonFinite(index));
            }
            if index > 0 && p.voltage <= self.points[index - 1].voltage {
                return Err(ValidationError::NotIncreasing {
                    index,
                    voltage: p.voltage,
                });
            }
        }
        OperatingConditions::new(self.n_series, self.temperature)?;
        Ok(())
    }

    pub fn voltages(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.voltage).collect()
    }

    pub fn currents(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.current).collect()
    }

    pub fn conditions(&self) -> OperatingConditions {
        OperatingConditions {
            n_series: self.n_series,
            temperature: self.temperature,
        }
    }
}

/// Model current at each voltage, one Newton solve per point.
pub fn simulate_curve<M: DiodeModel + ?Sized>(
    model: &M,
    cond: &OperatingConditions,
    voltages: &[f64],
) -> Result<Vec<f64>, ModelError> {
    voltages
        .iter()
        .map(|&v| solve_current(model, cond, v))
        .collect()
}

fn check_lengths(measured: &[f64], simulated: &[f64]) -> Result<(), ValidationError> {
    if measured.len() != simulated.len() {
        return Err(ValidationError::LengthMismatch {
            measured: measured.len(),
            simulated: simulated.len(),
        });
    }
    if measured.is_empty() {
        return Err(ValidationError::Empty);
    }
    Ok(())
}

/// Root-mean-square difference of two equally long current series.
pub fn rmse(measured: &[f64], simulated: &[f64]) -> Result<f64, ValidationError> {
    check_lengths(measured, simulated)?;
    let sum: f64 = measured
        .iter()
        .zip(simulated)
        .map(|(m, s)| (m - s) * (m - s))
        .sum();
    Ok((sum / measured.len() as f64).sqrt())
}

pub fn absolute_error_series(
    measured: &[f64],
    simulated: &[f64],
) -> Result<Vec<f64>, ValidationError> {
    check_lengths(measured, simulated)?;
    Ok(measured
        .iter()
        .zip(simulated)
        .map(|(m, s)| (m - s).abs())
        .collect())
}

/// Simulated currents, RMSE and absolute errors of `model` against `curve`.
pub fn validate_against<M: DiodeModel + ?Sized>(
    model: &M,
    curve: &MeasuredCurve,
) -> Result<CurveFit, ValidationError> {
    let voltages = curve.voltages();
    let measured = curve.currents();
    let simulated = simulate_curve(model, &curve.conditions(), &voltages)?;
    Ok(CurveFit {
        rmse: rmse(&measured, &simulated)?,
        absolute_errors: absolute_error_series(&measured, &simulated)?,
        simulated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub rmse: f64,
    pub simulated: Vec<f64>,
    pub absolute_errors: Vec<f64>,
}

/// A published parameter set and the error its authors reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkEntry {
    pub label: String,
    /// Dataset the parameters were fitted to.
    pub source: String,
    pub params: ModelParams,
    pub reported_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub model_kind: String,
    pub reported_rmse: f64,
    pub rmse: Option<f64>,
    /// `rmse / reported_rmse - 1`.
    pub relative_deviation: Option<f64>,
    pub absolute_errors: Vec<f64>,
    pub failure: Option<String>,
}

/// Benchmark rows sorted by computed RMSE; rows that failed to simulate last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub source_label: String,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn labels(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.label.as_str()).collect()
    }

    /// Labels ordered by the reported RMSE.
    pub fn published_order(&self) -> Vec<&str> {
        let mut rows: Vec<&ComparisonRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.reported_rmse.total_cmp(&b.reported_rmse));
        rows.into_iter().map(|r| r.label.as_str()).collect()
    }

    pub fn reproduces_published_ranking(&self) -> bool {
        self.rows.iter().all(|r| r.rmse.is_some()) && self.labels() == self.published_order()
    }
}

pub fn compare_benchmarks(curve: &MeasuredCurve, entries: &[BenchmarkEntry]) -> ComparisonTable {
    let cond = curve.conditions();
    let voltages = curve.voltages();
    let measured = curve.currents();
    let mut rows: Vec<ComparisonRow> = entries
        .par_iter()
        .map(|entry| {
            let outcome = entry
                .params
                .validate()
                .map_err(ValidationError::from)
                .and_then(|_| Ok(simulate_curve(&entry.params, &cond, &voltages)?))
                .and_then(|sim| {
                    Ok((
                        rmse(&measured, &sim)?,
                        absolute_error_series(&measured, &sim)?,
                    ))
                });
            let (rmse, absolute_errors, failure) = match outcome {
                Ok((r, errs)) => (Some(r), errs, None),
                Err(e) => (None, Vec::new(), Some(e.to_string())),
            };
            ComparisonRow {
                label: entry.label.clone(),
                model_kind: entry.params.kind().to_string(),
                reported_rmse: entry.reported_rmse,
                relative_deviation: rmse.map(|r| r / entry.reported_rmse - 1.0),
                rmse,
                absolute_errors,
                failure,
            }
        })
        .collect();
    // stable: ties keep input order
    rows.sort_by(|a, b| match (a.rmse, b.rmse) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    ComparisonTable {
        source_label: curve.source_label.clone(),
        rows,
    }
}
