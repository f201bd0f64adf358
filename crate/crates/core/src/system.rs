//! The five-equation system that pins down single-diode parameters from
//! datasheet key points.
//!
//! Four rows are shared by every variant: the circuit equation at short
//! circuit, open circuit and the maximum power point, plus stationarity of
//! P(V) at the MPP. The fifth row is the variant:
//!
//! - `ProposedDpdi`: stationarity of P(I) at the MPP,
//! - `SlopeSc`: the I-V slope at short circuit equals `-1/Rsh`,
//! - `SlopeOc`: the I-V slope at open circuit equals `-1/Rs`,
//! - `Area`: the area under the model curve matches the area under a
//!   measured curve.
//!
//! The circuit rows use the key points substituted directly into the
//! single-diode equation (series-resistance drop `Isc·Rs` at short circuit,
//! exponent `(Vmpp + Impp·Rs)/(Ns·n·vt)` at the MPP), and the derivative
//! rows use the exact derivative `(Is/a)·e^x` of the diode term.

use std::sync::Arc;

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interp::{trapezoid_uniform, uniform_grid, InterpError, MonotoneCubic};
use crate::model::{solve_point_from, DatasheetSpec, DiodeModel, ModelError, SingleDiodeParams};
use crate::validation::MeasuredCurve;

pub const DEFAULT_AREA_POINTS: usize = 100_000;
pub const MIN_AREA_POINTS: usize = 1_000;
/// How far (as a fraction of Voc) the measured curve may be extrapolated to
/// reach 0 V or Voc.
pub const MAX_EXTRAPOLATION: f64 = 0.05;

pub type Matrix5 = SMatrix<f64, 5, 5>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("invalid parameters: {0}")]
    InvalidParams(ModelError),
    #[error("invalid datasheet spec: {0}")]
    InvalidSpec(ModelError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("measured curve: {0}")]
    Interpolation(#[from] InterpError),
    #[error("measured curve spans [{lo}, {hi}] V but the area needs [0, {v_oc}] V")]
    CurveCoverage { lo: f64, hi: f64, v_oc: f64 },
    #[error("area integration needs at least {MIN_AREA_POINTS} points, got {0}")]
    TooFewAreaPoints(usize),
    #[error("residual `{0}` is not finite")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    MonotoneCubic,
}

/// Which fifth equation closes the system.
#[derive(Debug, Clone, PartialEq)]
pub enum FifthEquationVariant {
    ProposedDpdi,
    SlopeSc,
    SlopeOc,
    Area {
        curve: Arc<MeasuredCurve>,
        interpolation: Interpolation,
        n_points: usize,
    },
}

/// The variant without its data, as recorded in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantTag {
    ProposedDpdi,
    SlopeSc,
    SlopeOc,
    Area,
}

impl VariantTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            VariantTag::ProposedDpdi => "proposed_dpdi",
            VariantTag::SlopeSc => "slope_sc",
            VariantTag::SlopeOc => "slope_oc",
            VariantTag::Area => "area",
        }
    }

    pub fn fifth_unit(&self) -> &'static str {
        match self {
            VariantTag::ProposedDpdi => "V",
            VariantTag::SlopeSc | VariantTag::SlopeOc => "A/V",
            VariantTag::Area => "A·V",
        }
    }
}

impl FifthEquationVariant {
    pub fn area(curve: MeasuredCurve) -> Self {
        FifthEquationVariant::Area {
            curve: Arc::new(curve),
            interpolation: Interpolation::MonotoneCubic,
            n_points: DEFAULT_AREA_POINTS,
        }
    }

    pub fn tag(&self) -> VariantTag {
        match self {
            FifthEquationVariant::ProposedDpdi => VariantTag::ProposedDpdi,
            FifthEquationVariant::SlopeSc => VariantTag::SlopeSc,
            FifthEquationVariant::SlopeOc => VariantTag::SlopeOc,
            FifthEquationVariant::Area { .. } => VariantTag::Area,
        }
    }
}

pub const COMPONENT_NAMES: [&str; 5] = ["r_sc", "r_oc", "r_mpp", "r_dpdv", "r_fifth"];

/// Five residuals in natural units with the per-row scale used to
/// normalize them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualVector {
    pub values: [f64; 5],
    pub scales: [f64; 5],
}

impl ResidualVector {
    pub fn r_sc(&self) -> f64 {
        self.values[0]
    }
    pub fn r_oc(&self) -> f64 {
        self.values[1]
    }
    pub fn r_mpp(&self) -> f64 {
        self.values[2]
    }
    pub fn r_dpdv(&self) -> f64 {
        self.values[3]
    }
    pub fn r_fifth(&self) -> f64 {
        self.values[4]
    }

    pub fn normalized(&self) -> [f64; 5] {
        std::array::from_fn(|k| self.values[k] / self.scales[k])
    }

    /// Euclidean norm of the normalized residuals.
    pub fn norm(&self) -> f64 {
        self.normalized().iter().map(|r| r * r).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

fn model_eval(
    p: &SingleDiodeParams,
    spec: &DatasheetSpec,
    v: f64,
    i: f64,
) -> Result<crate::model::Evaluation, ModelError> {
    p.evaluate(&spec.conditions(), v, i)
}

/// Circuit equation at (0, Isc), A.
pub fn residual_sc(p: &SingleDiodeParams, spec: &DatasheetSpec) -> Result<f64, ModelError> {
    Ok(model_eval(p, spec, 0.0, spec.i_sc)?.residual)
}

/// Circuit equation at (Voc, 0), A.
pub fn residual_oc(p: &SingleDiodeParams, spec: &DatasheetSpec) -> Result<f64, ModelError> {
    Ok(model_eval(p, spec, spec.v_oc, 0.0)?.residual)
}

/// Circuit equation at (Vmpp, Impp), A.
pub fn residual_mpp(p: &SingleDiodeParams, spec: &DatasheetSpec) -> Result<f64, ModelError> {
    Ok(model_eval(p, spec, spec.v_mpp, spec.i_mpp)?.residual)
}

// -dI/dV of the implicit curve through the datasheet MPP.
fn mpp_conductance(p: &SingleDiodeParams, spec: &DatasheetSpec) -> Result<f64, ModelError> {
    Ok(-model_eval(p, spec, spec.v_mpp, spec.i_mpp)?.slope())
}

/// `Impp + Vmpp·dI/dV` at the datasheet MPP (dP/dV), A.
pub fn residual_dpdv(p: &SingleDiodeParams, spec: &DatasheetSpec) -> Result<f64, ModelError> {
    Ok(spec.i_mpp - spec.v_mpp * mpp_conductance(p, spec)?)
}

/// `Vmpp + Impp·dV/dI` at the datasheet MPP (dP/dI), V.
pub fn residual_dpdi(p: &SingleDiodeParams, spec: &DatasheetSpec) -> Result<f64, ModelError> {
    let g = mpp_conductance(p, spec)?;
    if g == 0.0 {
        return Err(ModelError::ZeroSlope(spec.v_mpp));
    }
    Ok(spec.v_mpp - spec.i_mpp / g)
}

/// Slope at (0, Isc) plus `1/Rsh`, A/V.
pub fn residual_slope_sc(p: &SingleDiodeParams, spec: &DatasheetSpec) -> Result<f64, ModelError> {
    Ok(model_eval(p, spec, 0.0, spec.i_sc)?.slope() + 1.0 / p.r_sh)
}

/// Slope at (Voc, 0) plus `1/Rs`, A/V.
pub fn residual_slope_oc(p: &SingleDiodeParams, spec: &DatasheetSpec) -> Result<f64, ModelError> {
    Ok(model_eval(p, spec, spec.v_oc, 0.0)?.slope() + 1.0 / p.r_s)
}

/// Trapezoid area under the measured curve on `[0, Voc]`, sampled through a
/// monotone cubic interpolant at `n_points` uniform voltages.
pub fn measured_area(
    curve: &MeasuredCurve,
    v_oc: f64,
    n_points: usize,
    interpolation: Interpolation,
) -> Result<f64, SystemError> {
    if n_points < MIN_AREA_POINTS {
        return Err(SystemError::TooFewAreaPoints(n_points));
    }
    let Interpolation::MonotoneCubic = interpolation;
    let interp = MonotoneCubic::new(&curve.voltages(), &curve.currents())?;
    let (lo, hi) = interp.x_range();
    let slack = MAX_EXTRAPOLATION * v_oc;
    if lo > slack || hi < v_oc - slack {
        return Err(SystemError::CurveCoverage { lo, hi, v_oc });
    }
    let grid = uniform_grid(0.0, v_oc, n_points);
    let h = v_oc / (n_points - 1) as f64;
    let samples: Vec<f64> = grid.iter().map(|&v| interp.eval(v)).collect();
    Ok(trapezoid_uniform(h, &samples))
}

/// Trapezoid area under the model curve on `[0, Voc]`.
pub fn model_area(
    p: &SingleDiodeParams,
    spec: &DatasheetSpec,
    n_points: usize,
) -> Result<f64, SystemError> {
    Ok(area_sweep(p, spec, n_points, false)?.0)
}

/// Model area and its gradient with respect to `[Iph, Is, n, Rs, Rsh]`,
/// from the implicit-function derivative `dI/dp = -(df/dp)/(df/dI)` at
/// every grid point.
pub fn model_area_with_gradient(
    p: &SingleDiodeParams,
    spec: &DatasheetSpec,
    n_points: usize,
) -> Result<(f64, [f64; 5]), SystemError> {
    area_sweep(p, spec, n_points, true)
}

fn area_sweep(
    p: &SingleDiodeParams,
    spec: &DatasheetSpec,
    n_points: usize,
    with_gradient: bool,
) -> Result<(f64, [f64; 5]), SystemError> {
    if n_points < MIN_AREA_POINTS {
        return Err(SystemError::TooFewAreaPoints(n_points));
    }
    let cond = spec.conditions();
    let h = spec.v_oc / (n_points - 1) as f64;
    let mut sum = 0.0;
    let mut gradient = [0.0; 5];
    let (mut older, mut old) = (None::<f64>, None::<f64>);
    for (k, v) in uniform_grid(0.0, spec.v_oc, n_points)
        .into_iter()
        .enumerate()
    {
        // linear extrapolation from the two previous points
        let start = match (older, old) {
            (Some(a), Some(b)) => Some(2.0 * b - a),
            (_, b) => b,
        };
        let (i, ev) = solve_point_from(p, &cond, v, start)?;
        let weight = if k == 0 || k == n_points - 1 {
            0.5 * h
        } else {
            h
        };
        sum += weight * i;
        if with_gradient {
            let df = p.residual_gradient(&cond, v, i)?;
            for (g, d) in gradient.iter_mut().zip(df) {
                *g -= weight * d / ev.d_di;
            }
        }
        older = old;
        old = Some(i);
    }
    Ok((sum, gradient))
}

/// Model area minus measured area, A·V.
pub fn residual_area(
    p: &SingleDiodeParams,
    spec: &DatasheetSpec,
    curve: &MeasuredCurve,
    n_points: usize,
) -> Result<f64, SystemError> {
    Ok(model_area(p, spec, n_points)?
        - measured_area(curve, spec.v_oc, n_points, Interpolation::MonotoneCubic)?)
}

/// A datasheet spec and fifth-equation variant, evaluable at any parameter
/// set. Immutable once built.
#[derive(Debug, Clone)]
pub struct EquationSystem {
    spec: DatasheetSpec,
    variant: FifthEquationVariant,
    measured_area: Option<f64>,
    scales: [f64; 5],
}

pub fn build_system(
    spec: &DatasheetSpec,
    variant: FifthEquationVariant,
) -> Result<EquationSystem, SystemError> {
    spec.validate().map_err(SystemError::InvalidSpec)?;
    let measured = match &variant {
        FifthEquationVariant::Area {
            curve,
            interpolation,
            n_points,
        } => Some(measured_area(curve, spec.v_oc, *n_points, *interpolation)?),
        _ => None,
    };
    let fifth_scale = match variant.tag() {
        VariantTag::ProposedDpdi => spec.v_mpp,
        VariantTag::SlopeSc | VariantTag::SlopeOc => spec.i_sc / spec.v_oc,
        VariantTag::Area => spec.i_sc * spec.v_oc,
    };
    Ok(EquationSystem {
        spec: *spec,
        variant,
        measured_area: measured,
        scales: [spec.i_sc, spec.i_sc, spec.i_sc, spec.i_sc, fifth_scale],
    })
}

impl EquationSystem {
    pub fn spec(&self) -> &DatasheetSpec {
        &self.spec
    }

    pub fn variant(&self) -> &FifthEquationVariant {
        &self.variant
    }

    pub fn scales(&self) -> [f64; 5] {
        self.scales
    }

    /// Residual vector at `p`; `p` must satisfy the strict parameter
    /// invariants.
    pub fn residuals(&self, p: &SingleDiodeParams) -> Result<ResidualVector, SystemError> {
        p.validate().map_err(SystemError::InvalidParams)?;
        self.residuals_unchecked(p)
    }

    pub(crate) fn residuals_unchecked(
        &self,
        p: &SingleDiodeParams,
    ) -> Result<ResidualVector, SystemError> {
        let [sc, oc, mpp, dpdv] = self.circuit_rows(p)?;
        let values = [sc, oc, mpp, dpdv, self.fifth_row(p)?];
        for (value, name) in values.iter().zip(COMPONENT_NAMES) {
            if !value.is_finite() {
                return Err(SystemError::NonFinite(name));
            }
        }
        Ok(ResidualVector {
            values,
            scales: self.scales,
        })
    }

    fn circuit_rows(&self, p: &SingleDiodeParams) -> Result<[f64; 4], SystemError> {
        let s = &self.spec;
        Ok([
            residual_sc(p, s)?,
            residual_oc(p, s)?,
            residual_mpp(p, s)?,
            residual_dpdv(p, s)?,
        ])
    }

    fn fifth_row(&self, p: &SingleDiodeParams) -> Result<f64, SystemError> {
        let s = &self.spec;
        Ok(match &self.variant {
            FifthEquationVariant::ProposedDpdi => residual_dpdi(p, s)?,
            FifthEquationVariant::SlopeSc => residual_slope_sc(p, s)?,
            FifthEquationVariant::SlopeOc => residual_slope_oc(p, s)?,
            FifthEquationVariant::Area { n_points, .. } => {
                model_area(p, s, *n_points)? - self.measured_area()
            }
        })
    }

    fn measured_area(&self) -> f64 {
        self.measured_area
            .expect("area variant carries its measured area")
    }

    // Rows evaluated by finite differences: all five, or only the circuit
    // rows when the fifth has an analytic gradient.
    fn fd_rows(&self, p: &SingleDiodeParams) -> Result<Vec<f64>, SystemError> {
        let mut rows = self.circuit_rows(p)?.to_vec();
        if self.variant.tag() != VariantTag::Area {
            rows.push(self.fifth_row(p)?);
        }
        Ok(rows)
    }

    fn analytic_fifth_row(&self, p: &SingleDiodeParams) -> Result<Option<[f64; 5]>, SystemError> {
        match &self.variant {
            FifthEquationVariant::Area { n_points, .. } => {
                Ok(Some(model_area_with_gradient(p, &self.spec, *n_points)?.1))
            }
            _ => Ok(None),
        }
    }
}

const JACOBIAN_REL_STEP: f64 = 1e-7;
const CENTRAL_REL_STEP: f64 = 1e-6;
const ABS_STEP: f64 = 1e-12;

/// Forward-difference Jacobian of the natural-unit residuals with respect
/// to the natural parameters `[Iph, Is, n, Rs, Rsh]`. The area row is
/// analytic.
pub fn jacobian(system: &EquationSystem, p: &SingleDiodeParams) -> Result<Matrix5, SystemError> {
    p.validate().map_err(SystemError::InvalidParams)?;
    fd_jacobian(system, p, false)
}

/// Central-difference Jacobian, second-order accurate. Used where the rank
/// estimate matters, because the one-sided quotient breaks exact row
/// dependencies at the 1e-6 level.
pub fn jacobian_central(
    system: &EquationSystem,
    p: &SingleDiodeParams,
) -> Result<Matrix5, SystemError> {
    p.validate().map_err(SystemError::InvalidParams)?;
    fd_jacobian(system, p, true)
}

fn fd_jacobian(
    system: &EquationSystem,
    p: &SingleDiodeParams,
    central: bool,
) -> Result<Matrix5, SystemError> {
    let x = p.to_array();
    let base = if central {
        Vec::new()
    } else {
        system.fd_rows(p)?
    };
    let mut jac = Matrix5::zeros();
    for col in 0..5 {
        let (mut up, mut down) = (x, x);
        if central {
            // multiplicative steps keep every parameter positive
            let rel = if x[col] == 0.0 { 0.0 } else { CENTRAL_REL_STEP };
            up[col] = if x[col] == 0.0 {
                ABS_STEP
            } else {
                x[col] * (1.0 + rel)
            };
            down[col] = x[col] * (1.0 - rel);
        } else {
            up[col] = x[col] + (JACOBIAN_REL_STEP * x[col].abs()).max(ABS_STEP);
        }
        let h = up[col] - down[col];
        let ru = system.fd_rows(&SingleDiodeParams::from_array(up))?;
        let rd = if central {
            system.fd_rows(&SingleDiodeParams::from_array(down))?
        } else {
            base.clone()
        };
        for row in 0..ru.len() {
            jac[(row, col)] = (ru[row] - rd[row]) / h;
        }
    }
    if let Some(gradient) = system.analytic_fifth_row(p)? {
        for col in 0..5 {
            jac[(4, col)] = gradient[col];
        }
    }
    Ok(jac)
}

/// Jacobian of the normalized residuals with respect to `ln p`, the form the
/// solver iterates on. Dimensionless, so its conditioning is meaningful.
pub fn scaled_jacobian(
    system: &EquationSystem,
    p: &SingleDiodeParams,
    natural: &Matrix5,
) -> Matrix5 {
    let x = p.to_array();
    let scales = system.scales();
    Matrix5::from_fn(|row, col| natural[(row, col)] * x[col] / scales[row])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobianDiagnostics {
    pub singular_values: [f64; 5],
    /// `None` when the smallest singular value is zero.
    pub condition: Option<f64>,
    /// Singular values above `1e-8` times the largest.
    pub rank: usize,
}

pub fn diagnose(jac: &Matrix5) -> JacobianDiagnostics {
    let svd = jac.svd(false, false);
    let mut sv: [f64; 5] = std::array::from_fn(|k| svd.singular_values[k]);
    sv.sort_by(|a, b| b.total_cmp(a));
    let largest = sv[0];
    let smallest = sv[4];
    let condition = (smallest > 0.0)
        .then(|| largest / smallest)
        .filter(|c| c.is_finite());
    let rank = sv.iter().filter(|&&s| s > 1e-8 * largest).count();
    JacobianDiagnostics {
        singular_values: sv,
        condition,
        rank,
    }
}
