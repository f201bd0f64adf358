//! Single- and double-diode equivalent circuits of a PV source.
//!
//! Both circuits relate terminal voltage and current implicitly,
//! `I = f(V, I)`. Everything here works on the residual `f(V, I) - I` and
//! its partial derivatives; the explicit current comes from a damped Newton
//! solve ([`solve_current`]) with a Lambert-W closed form
//! ([`solve_current_lambertw`]) kept alongside as an independent check for
//! the single-diode case.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lambert::lambert_w0_exp;

/// Largest diode exponent evaluated; beyond it the point is reported as
/// non-physical instead of producing `inf`.
pub const MAX_EXPONENT: f64 = 700.0;

const NEWTON_MAX_ITERATIONS: usize = 100;
const ON_CURVE_TOLERANCE: f64 = 1e-9;

/// CODATA exact values. Not configurable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhysicalConstants;

impl PhysicalConstants {
    /// Boltzmann constant, J/K.
    pub const BOLTZMANN: f64 = 1.380649e-23;
    /// Elementary charge, C.
    pub const UNIT_CHARGE: f64 = 1.602176634e-19;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("temperature must be positive and finite, got {0} K")]
    NonPositiveTemperature(f64),
    #[error("n_series must be at least 1")]
    ZeroSeriesCells,
    #[error("invalid parameter `{name}` = {value}: {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("invalid datasheet value `{name}`: {constraint}")]
    InvalidSpec {
        name: &'static str,
        constraint: String,
    },
    #[error("non-finite operating point (V = {voltage}, I = {current})")]
    NonFinite { voltage: f64, current: f64 },
    #[error("diode exponent {0:.6e} exceeds {MAX_EXPONENT}; operating point is non-physical")]
    ExponentOverflow(f64),
    #[error(
        "current solve at V = {voltage} V stopped after {iterations} iterations \
         (I = {current} A, residual = {residual:e} A)"
    )]
    NoConvergence {
        voltage: f64,
        current: f64,
        residual: f64,
        iterations: usize,
    },
    #[error(
        "point (V = {voltage} V, I = {current} A) is off the model curve (residual {residual:e} A)"
    )]
    OffCurve {
        voltage: f64,
        current: f64,
        residual: f64,
    },
    #[error("dI/dV vanishes at V = {0} V")]
    ZeroSlope(f64),
    #[error("Lambert-W form needs finite Rsh and Rs > 0")]
    LambertDomain,
}

/// Thermal voltage kT/q in volts.
pub fn thermal_voltage(temperature: f64) -> Result<f64, ModelError> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(ModelError::NonPositiveTemperature(temperature));
    }
    Ok(PhysicalConstants::BOLTZMANN * temperature / PhysicalConstants::UNIT_CHARGE)
}

/// Cell count and absolute temperature shared by every evaluation of a source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingConditions {
    pub n_series: u32,
    /// Kelvin.
    pub temperature: f64,
}

impl OperatingConditions {
    pub fn new(n_series: u32, temperature: f64) -> Result<Self, ModelError> {
        if n_series == 0 {
            return Err(ModelError::ZeroSeriesCells);
        }
        thermal_voltage(temperature)?;
        Ok(Self {
            n_series,
            temperature,
        })
    }

    pub fn thermal_voltage(&self) -> Result<f64, ModelError> {
        thermal_voltage(self.temperature)
    }

    /// `Ns·n·vt`, the exponent divisor of a diode with ideality `n`.
    pub fn diode_scale(&self, ideality: f64) -> Result<f64, ModelError> {
        if self.n_series == 0 {
            return Err(ModelError::ZeroSeriesCells);
        }
        Ok(f64::from(self.n_series) * ideality * self.thermal_voltage()?)
    }
}

/// Datasheet key points of a PV source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasheetSpec {
    pub i_sc: f64,
    pub v_oc: f64,
    pub i_mpp: f64,
    pub v_mpp: f64,
    pub p_mpp: f64,
    pub n_series: u32,
    /// Kelvin.
    pub temperature: f64,
}

impl DatasheetSpec {
    pub fn new(
        i_sc: f64,
        v_oc: f64,
        i_mpp: f64,
        v_mpp: f64,
        p_mpp: f64,
        n_series: u32,
        temperature: f64,
    ) -> Result<Self, ModelError> {
        let spec = Self {
            i_sc,
            v_oc,
            i_mpp,
            v_mpp,
            p_mpp,
            n_series,
            temperature,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |name, constraint: &str| {
            Err(ModelError::InvalidSpec {
                name,
                constraint: constraint.to_string(),
            })
        };
        for (name, value) in [
            ("i_sc", self.i_sc),
            ("v_oc", self.v_oc),
            ("i_mpp", self.i_mpp),
            ("v_mpp", self.v_mpp),
            ("p_mpp", self.p_mpp),
        ] {
            if !value.is_finite() {
                return bad(name, "must be finite");
            }
        }
        if !(self.i_mpp > 0.0) {
            return bad("i_mpp", "must be > 0");
        }
        if !(self.i_mpp < self.i_sc) {
            return bad("i_mpp", "must be < i_sc");
        }
        if !(self.v_mpp > 0.0) {
            return bad("v_mpp", "must be > 0");
        }
        if !(self.v_mpp < self.v_oc) {
            return bad("v_mpp", "must be < v_oc");
        }
        if self.n_series == 0 {
            return bad("n_series", "must be >= 1");
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad("temperature", "must be > 0 K");
        }
        let product = self.v_mpp * self.i_mpp;
        if (self.p_mpp - product).abs() > 0.01 * self.p_mpp.abs() {
            return Err(ModelError::InvalidSpec {
                name: "p_mpp",
                constraint: format!("must be within 1% of v_mpp * i_mpp = {product}"),
            });
        }
        Ok(())
    }

    pub fn conditions(&self) -> OperatingConditions {
        OperatingConditions {
            n_series: self.n_series,
            temperature: self.temperature,
        }
    }
}

/// The five unknowns of the single-diode circuit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleDiodeParams {
    /// Photon current, A.
    pub i_ph: f64,
    /// Saturation current, A.
    pub i_s: f64,
    /// Ideality factor.
    pub n: f64,
    /// Series resistance, Ω.
    pub r_s: f64,
    /// Shunt resistance, Ω.
    pub r_sh: f64,
}

impl SingleDiodeParams {
    pub fn new(i_ph: f64, i_s: f64, n: f64, r_s: f64, r_sh: f64) -> Result<Self, ModelError> {
        let p = Self {
            i_ph,
            i_s,
            n,
            r_s,
            r_sh,
        };
        p.validate()?;
        Ok(p)
    }

    /// Strict invariants: all five positive, `r_sh > r_s`.
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in self.named() {
            require(
                name,
                value,
                value.is_finite() && value > 0.0,
                "must be finite and > 0",
            )?;
        }
        require("r_sh", self.r_sh, self.r_sh > self.r_s, "must exceed r_s")
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.i_ph, self.i_s, self.n, self.r_s, self.r_sh]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        Self {
            i_ph: v[0],
            i_s: v[1],
            n: v[2],
            r_s: v[3],
            r_sh: v[4],
        }
    }

    pub const NAMES: [&'static str; 5] = ["i_ph", "i_s", "n", "r_s", "r_sh"];

    fn named(&self) -> [(&'static str, f64); 5] {
        let v = self.to_array();
        [
            (Self::NAMES[0], v[0]),
            (Self::NAMES[1], v[1]),
            (Self::NAMES[2], v[2]),
            (Self::NAMES[3], v[3]),
            (Self::NAMES[4], v[4]),
        ]
    }

    // Looser than `validate`: limiting cases such as Rs = 0 or Is = 0 can
    // still be evaluated.
    fn check_evaluable(&self) -> Result<(), ModelError> {
        require("i_ph", self.i_ph, self.i_ph.is_finite(), "must be finite")?;
        require(
            "i_s",
            self.i_s,
            self.i_s.is_finite() && self.i_s >= 0.0,
            "must be >= 0",
        )?;
        require(
            "n",
            self.n,
            self.n.is_finite() && self.n > 0.0,
            "must be > 0",
        )?;
        require(
            "r_s",
            self.r_s,
            self.r_s.is_finite() && self.r_s >= 0.0,
            "must be >= 0",
        )?;
        require(
            "r_sh",
            self.r_sh,
            self.r_sh.is_finite() && self.r_sh > 0.0,
            "must be > 0",
        )
    }
}

/// Seven-parameter double-diode circuit; forward evaluation only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleDiodeParams {
    pub i_ph: f64,
    pub i_s1: f64,
    pub i_s2: f64,
    pub n1: f64,
    pub n2: f64,
    pub r_s: f64,
    pub r_sh: f64,
}

impl DoubleDiodeParams {
    /// Currents may be zero (a removed diode, a dark cell); ideality factors
    /// and resistances must be positive.
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [
            ("i_ph", self.i_ph),
            ("i_s1", self.i_s1),
            ("i_s2", self.i_s2),
        ] {
            require(
                name,
                value,
                value.is_finite() && value >= 0.0,
                "must be finite and >= 0",
            )?;
        }
        for (name, value) in [
            ("n1", self.n1),
            ("n2", self.n2),
            ("r_s", self.r_s),
            ("r_sh", self.r_sh),
        ] {
            require(
                name,
                value,
                value.is_finite() && value > 0.0,
                "must be finite and > 0",
            )?;
        }
        Ok(())
    }

    fn check_evaluable(&self) -> Result<(), ModelError> {
        require("i_ph", self.i_ph, self.i_ph.is_finite(), "must be finite")?;
        for (name, value) in [("i_s1", self.i_s1), ("i_s2", self.i_s2), ("r_s", self.r_s)] {
            require(
                name,
                value,
                value.is_finite() && value >= 0.0,
                "must be >= 0",
            )?;
        }
        for (name, value) in [("n1", self.n1), ("n2", self.n2), ("r_sh", self.r_sh)] {
            require(name, value, value.is_finite() && value > 0.0, "must be > 0")?;
        }
        Ok(())
    }
}

fn require(
    name: &'static str,
    value: f64,
    ok: bool,
    constraint: &'static str,
) -> Result<(), ModelError> {
    if ok {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            value,
            constraint,
        })
    }
}

/// Residual `f(V, I) - I` and its partial derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub residual: f64,
    /// ∂(f - I)/∂I = ∂f/∂I - 1
    pub d_di: f64,
    /// ∂f/∂V
    pub d_dv: f64,
}

impl Evaluation {
    /// Implicit slope dI/dV = (∂f/∂V) / (1 - ∂f/∂I).
    pub fn slope(&self) -> f64 {
        -self.d_dv / self.d_di
    }
}

/// An equivalent circuit whose terminal current is implicit in voltage.
pub trait DiodeModel {
    fn photocurrent(&self) -> f64;

    fn evaluate(
        &self,
        cond: &OperatingConditions,
        v: f64,
        i: f64,
    ) -> Result<Evaluation, ModelError>;

    /// Diode-branch voltage `V + I·Rs` at which the diodes alone would sink
    /// the photocurrent. Used to seed and bound the current solve.
    fn open_circuit_estimate(&self, cond: &OperatingConditions) -> Result<f64, ModelError>;

    fn series_resistance(&self) -> f64;
}

/// Diode current `Is·(e^x - 1)` and conductance `(Is/a)·e^x` with `x = u/a`.
fn diode_branch(i_s: f64, scale: f64, u: f64) -> Result<(f64, f64), ModelError> {
    if i_s == 0.0 {
        return Ok((0.0, 0.0));
    }
    let x = u / scale;
    if x > MAX_EXPONENT {
        return Err(ModelError::ExponentOverflow(x));
    }
    Ok((i_s * x.exp_m1(), i_s / scale * x.exp()))
}

fn check_point(v: f64, i: f64) -> Result<(), ModelError> {
    if v.is_finite() && i.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonFinite {
            voltage: v,
            current: i,
        })
    }
}

fn diode_knee(i_ph: f64, i_s: f64, scale: f64) -> Option<f64> {
    (i_s > 0.0 && i_ph > 0.0).then(|| scale * (i_ph / i_s).ln_1p())
}

impl SingleDiodeParams {
    /// Partial derivatives of the circuit residual at (V, I) with respect to
    /// `[Iph, Is, n, Rs, Rsh]`.
    pub fn residual_gradient(
        &self,
        cond: &OperatingConditions,
        v: f64,
        i: f64,
    ) -> Result<[f64; 5], ModelError> {
        self.check_evaluable()?;
        check_point(v, i)?;
        let scale = cond.diode_scale(self.n)?;
        let u = v + i * self.r_s;
        let (_, gd) = diode_branch(self.i_s, scale, u)?;
        if u / scale > MAX_EXPONENT {
            return Err(ModelError::ExponentOverflow(u / scale));
        }
        Ok([
            1.0,
            -(u / scale).exp_m1(),
            gd * u / self.n,
            -(gd + 1.0 / self.r_sh) * i,
            u / (self.r_sh * self.r_sh),
        ])
    }
}

impl DiodeModel for SingleDiodeParams {
    fn photocurrent(&self) -> f64 {
        self.i_ph
    }

    fn evaluate(
        &self,
        cond: &OperatingConditions,
        v: f64,
        i: f64,
    ) -> Result<Evaluation, ModelError> {
        self.check_evaluable()?;
        check_point(v, i)?;
        let scale = cond.diode_scale(self.n)?;
        let u = v + i * self.r_s;
        let (id, gd) = diode_branch(self.i_s, scale, u)?;
        let dfdv = -gd - 1.0 / self.r_sh;
        // photocurrent last: near a root the subtraction is exact
        Ok(Evaluation {
            residual: self.i_ph - (id + u / self.r_sh + i),
            d_di: self.r_s * dfdv - 1.0,
            d_dv: dfdv,
        })
    }

    fn open_circuit_estimate(&self, cond: &OperatingConditions) -> Result<f64, ModelError> {
        let scale = cond.diode_scale(self.n)?;
        Ok(diode_knee(self.i_ph, self.i_s, scale).unwrap_or(self.i_ph.max(0.0) * self.r_sh))
    }

    fn series_resistance(&self) -> f64 {
        self.r_s
    }
}

impl DiodeModel for DoubleDiodeParams {
    fn photocurrent(&self) -> f64 {
        self.i_ph
    }

    fn evaluate(
        &self,
        cond: &OperatingConditions,
        v: f64,
        i: f64,
    ) -> Result<Evaluation, ModelError> {
        self.check_evaluable()?;
        check_point(v, i)?;
        let u = v + i * self.r_s;
        let (id1, gd1) = diode_branch(self.i_s1, cond.diode_scale(self.n1)?, u)?;
        let (id2, gd2) = diode_branch(self.i_s2, cond.diode_scale(self.n2)?, u)?;
        let dfdv = -gd1 - gd2 - 1.0 / self.r_sh;
        Ok(Evaluation {
            residual: self.i_ph - (id1 + id2 + u / self.r_sh + i),
            d_di: self.r_s * dfdv - 1.0,
            d_dv: dfdv,
        })
    }

    fn open_circuit_estimate(&self, cond: &OperatingConditions) -> Result<f64, ModelError> {
        let k1 = diode_knee(self.i_ph, self.i_s1, cond.diode_scale(self.n1)?);
        let k2 = diode_knee(self.i_ph, self.i_s2, cond.diode_scale(self.n2)?);
        Ok(match (k1, k2) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => self.i_ph.max(0.0) * self.r_sh,
        })
    }

    fn series_resistance(&self) -> f64 {
        self.r_s
    }
}

/// Either circuit, tagged by `model = "single" | "double"` when serialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelParams {
    Single(SingleDiodeParams),
    Double(DoubleDiodeParams),
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            ModelParams::Single(p) => p.validate(),
            ModelParams::Double(p) => p.validate(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ModelParams::Single(_) => "single",
            ModelParams::Double(_) => "double",
        }
    }
}

impl DiodeModel for ModelParams {
    fn photocurrent(&self) -> f64 {
        match self {
            ModelParams::Single(p) => p.photocurrent(),
            ModelParams::Double(p) => p.photocurrent(),
        }
    }

    fn evaluate(
        &self,
        cond: &OperatingConditions,
        v: f64,
        i: f64,
    ) -> Result<Evaluation, ModelError> {
        match self {
            ModelParams::Single(p) => p.evaluate(cond, v, i),
            ModelParams::Double(p) => p.evaluate(cond, v, i),
        }
    }

    fn open_circuit_estimate(&self, cond: &OperatingConditions) -> Result<f64, ModelError> {
        match self {
            ModelParams::Single(p) => p.open_circuit_estimate(cond),
            ModelParams::Double(p) => p.open_circuit_estimate(cond),
        }
    }

    fn series_resistance(&self) -> f64 {
        match self {
            ModelParams::Single(p) => p.r_s,
            ModelParams::Double(p) => p.r_s,
        }
    }
}

/// Residual of the single-diode equation at (V, I), in amperes.
pub fn sdm_residual(
    p: &SingleDiodeParams,
    cond: &OperatingConditions,
    v: f64,
    i: f64,
) -> Result<f64, ModelError> {
    Ok(p.evaluate(cond, v, i)?.residual)
}

/// Residual of the double-diode equation at (V, I), in amperes.
pub fn ddm_residual(
    p: &DoubleDiodeParams,
    cond: &OperatingConditions,
    v: f64,
    i: f64,
) -> Result<f64, ModelError> {
    Ok(p.evaluate(cond, v, i)?.residual)
}

fn newton_tolerance(i_ph: f64) -> f64 {
    1e-12_f64.max(1e-12 * i_ph.abs())
}

/// Terminal current at voltage `v` by damped Newton iteration.
///
/// The residual is strictly decreasing and concave in I, so halving the
/// step until |residual| drops is enough for global convergence.
pub fn solve_current<M: DiodeModel + ?Sized>(
    model: &M,
    cond: &OperatingConditions,
    v: f64,
) -> Result<f64, ModelError> {
    solve_current_from(model, cond, v, None)
}

/// As [`solve_current`], optionally warm-started from a nearby solution.
pub fn solve_current_from<M: DiodeModel + ?Sized>(
    model: &M,
    cond: &OperatingConditions,
    v: f64,
    start: Option<f64>,
) -> Result<f64, ModelError> {
    solve_point_from(model, cond, v, start).map(|(i, _)| i)
}

/// As [`solve_current_from`], also returning the evaluation at the solution.
pub fn solve_point_from<M: DiodeModel + ?Sized>(
    model: &M,
    cond: &OperatingConditions,
    v: f64,
    start: Option<f64>,
) -> Result<(f64, Evaluation), ModelError> {
    check_point(v, 0.0)?;
    let i_ph = model.photocurrent();
    let warm = start
        .filter(|s| s.is_finite())
        .and_then(|s| Some((s, model.evaluate(cond, v, s).ok()?)));
    let (mut i, mut ev) = match warm {
        Some(pair) => pair,
        None => {
            let knee = model.open_circuit_estimate(cond)?;
            let r_s = model.series_resistance();
            let mut i = if i_ph > 0.0 && knee > 0.0 {
                (i_ph * (1.0 - v / knee)).clamp(0.0, i_ph)
            } else {
                0.0
            };
            // keep the diode branch at or below its knee so the first evaluation is finite
            if r_s > 0.0 && knee > 0.0 && v + i * r_s > knee {
                i = (knee - v) / r_s;
            }
            (i, model.evaluate(cond, v, i)?)
        }
    };

    let tol = newton_tolerance(i_ph);
    let mut iterations = 0;
    while iterations < NEWTON_MAX_ITERATIONS {
        if ev.residual.abs() < tol {
            return Ok((i, ev));
        }
        iterations += 1;
        let step = -ev.residual / ev.d_di;
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let candidate = i + t * step;
            if let Ok(next) = model.evaluate(cond, v, candidate) {
                if next.residual.abs() < ev.residual.abs() {
                    i = candidate;
                    ev = next;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if ev.residual.abs() < tol {
        return Ok((i, ev));
    }
    Err(ModelError::NoConvergence {
        voltage: v,
        current: i,
        residual: ev.residual,
        iterations,
    })
}

/// Explicit single-diode current through the principal Lambert-W branch.
///
/// Independent of the Newton path; used as a cross-check. The W argument is
/// carried as its logarithm so large exponents never overflow.
pub fn solve_current_lambertw(
    p: &SingleDiodeParams,
    cond: &OperatingConditions,
    v: f64,
) -> Result<f64, ModelError> {
    p.check_evaluable()?;
    check_point(v, 0.0)?;
    if !(p.r_s > 0.0) {
        return Err(ModelError::LambertDomain);
    }
    let a = cond.diode_scale(p.n)?;
    let (rs, rsh) = (p.r_s, p.r_sh);
    let sum = rs + rsh;
    let linear = (rsh * (p.i_ph + p.i_s) - v) / sum;
    if p.i_s == 0.0 {
        return Ok(linear);
    }
    let log_theta =
        (rs * rsh * p.i_s / (a * sum)).ln() + rsh * (rs * (p.i_ph + p.i_s) + v) / (a * sum);
    Ok(linear - a / rs * lambert_w0_exp(log_theta))
}

fn on_curve<M: DiodeModel + ?Sized>(
    model: &M,
    cond: &OperatingConditions,
    v: f64,
    i: f64,
) -> Result<Evaluation, ModelError> {
    let ev = model.evaluate(cond, v, i)?;
    let tol = ON_CURVE_TOLERANCE.max(ON_CURVE_TOLERANCE * model.photocurrent().abs());
    if ev.residual.abs() > tol {
        return Err(ModelError::OffCurve {
            voltage: v,
            current: i,
            residual: ev.residual,
        });
    }
    Ok(ev)
}

/// Slope dI/dV of the characteristic at an on-curve point.
pub fn di_dv<M: DiodeModel + ?Sized>(
    model: &M,
    cond: &OperatingConditions,
    v: f64,
    i: f64,
) -> Result<f64, ModelError> {
    Ok(on_curve(model, cond, v, i)?.slope())
}

/// dP/dV = I + V·dI/dV at an on-curve point.
pub fn dp_dv<M: DiodeModel + ?Sized>(
    model: &M,
    cond: &OperatingConditions,
    v: f64,
    i: f64,
) -> Result<f64, ModelError> {
    let slope = di_dv(model, cond, v, i)?;
    Ok(i + v * slope)
}

/// dP/dI = V + I·dV/dI at an on-curve point.
pub fn dp_di<M: DiodeModel + ?Sized>(
    model: &M,
    cond: &OperatingConditions,
    v: f64,
    i: f64,
) -> Result<f64, ModelError> {
    let slope = di_dv(model, cond, v, i)?;
    if slope == 0.0 {
        return Err(ModelError::ZeroSlope(v));
    }
    Ok(v + i / slope)
}

/// Open-circuit voltage of the model: the root of the residual at I = 0.
///
/// The residual at I = 0 is strictly decreasing in V, so a bracket grown
/// from V = 0 followed by safeguarded Newton is enough.
pub fn open_circuit_voltage<M: DiodeModel + ?Sized>(
    model: &M,
    cond: &OperatingConditions,
) -> Result<f64, ModelError> {
    let i_ph = model.photocurrent();
    if !(i_ph > 0.0) {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = model.open_circuit_estimate(cond)?.max(f64::MIN_POSITIVE);
    loop {
        let r = model.evaluate(cond, hi, 0.0)?.residual;
        if r <= 0.0 {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    let tol = 1e-15 * i_ph;
    let mut v = 0.5 * (lo + hi);
    for _ in 0..200 {
        let ev = model.evaluate(cond, v, 0.0)?;
        if ev.residual.abs() <= tol {
            return Ok(v);
        }
        if ev.residual > 0.0 {
            lo = v;
        } else {
            hi = v;
        }
        let newton = v - ev.residual / ev.d_dv;
        v = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(v)
}

/// Maximum power point (V, I) of the model, the unique sign change of dP/dV
/// on (0, Voc).
pub fn maximum_power_point<M: DiodeModel + ?Sized>(
    model: &M,
    cond: &OperatingConditions,
) -> Result<(f64, f64), ModelError> {
    let voc = open_circuit_voltage(model, cond)?;
    let dpdv_at = |v: f64| -> Result<(f64, f64), ModelError> {
        let i = solve_current(model, cond, v)?;
        let slope = model.evaluate(cond, v, i)?.slope();
        Ok((i + v * slope, i))
    };
    let (mut lo, mut hi) = (0.0, voc);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (d, _) = dpdv_at(mid)?;
        if d > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v = 0.5 * (lo + hi);
    let i = solve_current(model, cond, v)?;
    Ok((v, i))
}

/// Datasheet key points generated from the model itself.
pub fn key_points<M: DiodeModel + ?Sized>(
    model: &M,
    cond: &OperatingConditions,
) -> Result<DatasheetSpec, ModelError> {
    let i_sc = solve_current(model, cond, 0.0)?;
    let v_oc = open_circuit_voltage(model, cond)?;
    let (v_mpp, i_mpp) = maximum_power_point(model, cond)?;
    DatasheetSpec::new(
        i_sc,
        v_oc,
        i_mpp,
        v_mpp,
        v_mpp * i_mpp,
        cond.n_series,
        cond.temperature,
    )
}
