//! Five-parameter single-diode PV model extraction from datasheet key points.
//!
//! * [`model`]: single- and double-diode circuit equations, current solves,
//!   slopes and characteristic points.
//! * [`system`]: the five-equation residual system and its Jacobian.
//! * [`solver`]: Levenberg–Marquardt extraction with a multistart over `n`.
//! * [`validation`]: measured curves, RMSE and benchmark comparison.
//! * [`io`]: spec/curve/benchmark loaders, JSON reports and SVG plots.

// negated comparisons also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod interp;
pub mod io;
pub mod lambert;
pub mod model;
pub mod solver;
pub mod system;
pub mod validation;

pub use model::{
    key_points, solve_current, DatasheetSpec, DiodeModel, DoubleDiodeParams, ModelError,
    ModelParams, OperatingConditions, SingleDiodeParams,
};
pub use solver::{extract, ExtractionResult, SolverOptions};
pub use system::{build_system, FifthEquationVariant, VariantTag};
pub use validation::{
    compare_benchmarks, validate_against, BenchmarkEntry, ComparisonTable, MeasuredCurve,
};

/// Crate version, recorded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
