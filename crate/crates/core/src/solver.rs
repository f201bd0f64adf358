//! Parameter extraction: closed-form starting points, a Levenberg–Marquardt
//! solve of the five-equation system, and a multistart over the ideality
//! factor.
//!
//! The solver iterates on `ln p`, so every iterate keeps all five parameters
//! positive. Residuals are divided by their per-row scale first, which puts
//! amperes, volts and slopes on a comparable footing.
//!
//! With the proposed fifth equation the dP/dV and dP/dI rows vanish
//! together (`r_dpdi = -r_dpdv / g`, with `g = -dI/dV` at the MPP), so the
//! Jacobian has rank four at a root and the roots form a one-parameter
//! family. LM copes with the rank deficiency; which member it lands on
//! depends on the start, and `extract` picks among starts.

use nalgebra::{Cholesky, SVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DatasheetSpec, ModelError, SingleDiodeParams};
use crate::system::{
    build_system, diagnose, jacobian_central, scaled_jacobian, EquationSystem,
    FifthEquationVariant, Matrix5, ResidualVector, SystemError, VariantTag,
};
use crate::validation::{validate_against, MeasuredCurve};

type Vector5 = SVector<f64, 5>;

const MAX_DAMPING: f64 = 1e16;
const MIN_DAMPING: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Bound on the normalized residual norm.
    pub residual_tolerance: f64,
    /// Bound on the largest relative parameter change of an accepted step.
    pub step_tolerance: f64,
    /// Initial LM damping.
    pub damping_init: f64,
    /// Ideality-factor seeds for the multistart.
    pub multistart_n_grid: Vec<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            residual_tolerance: 1e-10,
            step_tolerance: 1e-12,
            damping_init: 1e-3,
            multistart_n_grid: (0..=10).map(|k| 1.0 + 0.1 * k as f64).collect(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |what: &str| Err(SolverError::InvalidOptions(what.to_string()));
        if self.max_iterations == 0 {
            return bad("max_iterations must be >= 1");
        }
        if !(self.residual_tolerance > 0.0 && self.step_tolerance > 0.0) {
            return bad("tolerances must be > 0");
        }
        if !(self.damping_init > 0.0) {
            return bad("damping_init must be > 0");
        }
        if self.multistart_n_grid.is_empty() {
            return bad("multistart_n_grid must not be empty");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("ideality seed {0} outside [1, 2]")]
    SeedOutOfRange(f64),
    #[error("cannot form an initial guess: {0}")]
    DegenerateSpec(String),
    #[error("initial guess violates parameter invariants: {0}")]
    InvalidGuess(ModelError),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// Outcome of one solve (or the selected solve of a multistart).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub params: SingleDiodeParams,
    pub variant: VariantTag,
    pub n_seed: f64,
    pub residuals: ResidualVector,
    /// Normalized residual norm at `params`.
    pub residual_norm: f64,
    pub iterations: usize,
    /// Condition number of the scaled Jacobian at `params`; `None` when singular.
    pub jacobian_condition: Option<f64>,
    pub jacobian_rank: usize,
    pub converged: bool,
    /// Filled when a measured curve is available.
    pub rmse: Option<f64>,
}

/// One start of a multistart run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub n_seed: f64,
    pub result: Option<ExtractionResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("no start converged ({})", summarize(.starts))]
    AllStartsFailed { starts: Vec<StartOutcome> },
}

fn summarize(starts: &[StartOutcome]) -> String {
    starts
        .iter()
        .map(|s| match (&s.result, &s.error) {
            (Some(r), _) => format!(
                "n={:.2}: residual {:.3e} after {} it",
                s.n_seed, r.residual_norm, r.iterations
            ),
            (None, Some(e)) => format!("n={:.2}: {e}", s.n_seed),
            (None, None) => format!("n={:.2}: no result", s.n_seed),
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Closed-form starting point for ideality seed `n_seed`.
///
/// `Iph = Isc`, `Rs = (Voc - Vmpp)/(2·Impp)`, `Rsh = Vmpp/(Isc - Impp)` and
/// `Is` from the open-circuit condition with both resistances ignored.
pub fn initial_guess(spec: &DatasheetSpec, n_seed: f64) -> Result<SingleDiodeParams, SolverError> {
    if !(1.0..=2.0).contains(&n_seed) {
        return Err(SolverError::SeedOutOfRange(n_seed));
    }
    if !(spec.i_mpp < spec.i_sc) {
        return Err(SolverError::DegenerateSpec(
            "i_mpp must be below i_sc".into(),
        ));
    }
    if !(spec.v_mpp < spec.v_oc) {
        return Err(SolverError::DegenerateSpec(
            "v_mpp must be below v_oc".into(),
        ));
    }
    let scale = spec
        .conditions()
        .diode_scale(n_seed)
        .map_err(|e| SolverError::DegenerateSpec(e.to_string()))?;
    let guess = SingleDiodeParams {
        i_ph: spec.i_sc,
        i_s: spec.i_sc / (spec.v_oc / scale).exp_m1(),
        n: n_seed,
        r_s: (spec.v_oc - spec.v_mpp) / (2.0 * spec.i_mpp),
        r_sh: spec.v_mpp / (spec.i_sc - spec.i_mpp),
    };
    guess.validate().map_err(SolverError::InvalidGuess)?;
    Ok(guess)
}

fn params_from_log(x: &Vector5) -> SingleDiodeParams {
    SingleDiodeParams::from_array(std::array::from_fn(|k| x[k].exp()))
}

fn evaluate(system: &EquationSystem, p: &SingleDiodeParams) -> Option<Vector5> {
    p.validate().ok()?;
    let r = system.residuals_unchecked(p).ok()?;
    Some(Vector5::from(r.normalized()))
}

// Central differences: near the ill-conditioned root the one-sided error
// (about 1e-6 in the n column) is enough to stall Gauss-Newton steps.
fn log_jacobian(system: &EquationSystem, p: &SingleDiodeParams) -> Result<Matrix5, SystemError> {
    let natural = jacobian_central(system, p)?;
    Ok(scaled_jacobian(system, p, &natural))
}

const GEODESIC_PROBE: f64 = 0.1;
const GEODESIC_RATIO: f64 = 0.75;

// Step with second-order (geodesic acceleration) correction: the damped
// Gauss-Newton velocity plus half the acceleration from a directional second
// difference along it. Follows curved valleys of the residual surface in far
// fewer iterations. `None` when the correction is too large to trust.
fn accelerated_step(
    system: &EquationSystem,
    x: &Vector5,
    r: &Vector5,
    jac: &Matrix5,
    chol: &Cholesky<f64, nalgebra::Const<5>>,
    velocity: &Vector5,
) -> Option<Vector5> {
    if !velocity.iter().all(|v| v.is_finite()) {
        return None;
    }
    let probe = evaluate(system, &params_from_log(&(x + GEODESIC_PROBE * velocity)));
    let Some(probe) = probe else {
        return Some(*velocity);
    };
    let h = GEODESIC_PROBE;
    let second = (2.0 / h) * ((probe - r) / h - jac * velocity);
    let acceleration = chol.solve(&(-(jac.transpose() * second)));
    if !acceleration.iter().all(|v| v.is_finite())
        || 2.0 * acceleration.norm() > GEODESIC_RATIO * velocity.norm()
    {
        return None;
    }
    Some(velocity + 0.5 * acceleration)
}

/// Levenberg–Marquardt on the normalized residuals in log-parameter space.
///
/// Running out of iterations is not an error: the result comes back with
/// `converged = false` and its diagnostics filled in.
pub fn solve(
    system: &EquationSystem,
    guess: &SingleDiodeParams,
    opts: &SolverOptions,
) -> Result<ExtractionResult, SolverError> {
    opts.validate()?;
    guess.validate().map_err(SolverError::InvalidGuess)?;
    let start = system.residuals(guess)?;

    let mut x = Vector5::from(guess.to_array().map(f64::ln));
    let mut params = *guess;
    let mut r = Vector5::from(start.normalized());
    let mut lambda = opts.damping_init;
    let mut iterations = 0;

    while iterations < opts.max_iterations && r.norm() > opts.residual_tolerance {
        iterations += 1;
        // a perturbed point may leave the evaluable region; stop where we are
        let Ok(jac) = log_jacobian(system, &params) else {
            break;
        };
        let jtj = jac.transpose() * jac;
        let grad = jac.transpose() * r;
        let diag_floor = 1e-12 * jtj.diagonal().max().max(f64::MIN_POSITIVE);

        let mut accepted = None;
        while lambda <= MAX_DAMPING {
            let mut lhs = jtj;
            for k in 0..5 {
                lhs[(k, k)] += lambda * jtj[(k, k)].max(diag_floor);
            }
            let Some(chol) = Cholesky::new(lhs) else {
                lambda *= 10.0;
                continue;
            };
            let velocity = chol.solve(&(-grad));
            if let Some(step) = accelerated_step(system, &x, &r, &jac, &chol, &velocity) {
                let trial_x = x + step;
                let trial = params_from_log(&trial_x);
                if let Some(trial_r) = evaluate(system, &trial) {
                    if trial_r.norm() < r.norm() {
                        accepted = Some((trial_x, trial, trial_r, step));
                        lambda = (lambda * 0.1).max(MIN_DAMPING);
                        break;
                    }
                }
            }
            lambda *= 10.0;
        }

        let Some((new_x, new_params, new_r, step)) = accepted else {
            break;
        };
        x = new_x;
        params = new_params;
        r = new_r;
        if step.amax() < opts.step_tolerance {
            break;
        }
    }

    let mut result = finish(system, params, iterations, opts, system.variant().tag())?;
    result.n_seed = guess.n;
    Ok(result)
}

fn finish(
    system: &EquationSystem,
    params: SingleDiodeParams,
    iterations: usize,
    opts: &SolverOptions,
    variant: VariantTag,
) -> Result<ExtractionResult, SystemError> {
    // certify against a fresh evaluation of the returned parameters
    let residuals = system.residuals(&params)?;
    let residual_norm = residuals.norm();
    let diagnostics = log_jacobian(system, &params).map(|j| diagnose(&j)).ok();
    Ok(ExtractionResult {
        params,
        variant,
        n_seed: f64::NAN,
        residuals,
        residual_norm,
        iterations,
        jacobian_condition: diagnostics.and_then(|d| d.condition),
        jacobian_rank: diagnostics.map_or(0, |d| d.rank),
        converged: residual_norm <= opts.residual_tolerance,
        rmse: None,
    })
}

/// Solve from every ideality seed. Outcomes are in seed order regardless of
/// how the starts were scheduled.
pub fn multistart(
    system: &EquationSystem,
    opts: &SolverOptions,
    curve: Option<&MeasuredCurve>,
) -> Result<Vec<StartOutcome>, SolverError> {
    opts.validate()?;
    let spec = *system.spec();
    Ok(opts
        .multistart_n_grid
        .par_iter()
        .map(|&n_seed| {
            let outcome =
                initial_guess(&spec, n_seed).and_then(|guess| solve(system, &guess, opts));
            match outcome {
                Ok(mut result) => {
                    result.n_seed = n_seed;
                    let mut error = None;
                    if let Some(curve) = curve {
                        match validate_against(&result.params, curve) {
                            Ok(fit) => result.rmse = Some(fit.rmse),
                            Err(e) => error = Some(format!("simulation against curve failed: {e}")),
                        }
                    }
                    StartOutcome {
                        n_seed,
                        result: Some(result),
                        error,
                    }
                }
                Err(e) => StartOutcome {
                    n_seed,
                    result: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

/// Selection metric of a start: RMSE against the curve when one was given,
/// otherwise the residual norm. `None` for starts that cannot be selected.
fn selection_metric(start: &StartOutcome, by_rmse: bool) -> Option<f64> {
    let r = start.result.as_ref()?;
    if !r.converged || start.error.is_some() {
        return None;
    }
    if by_rmse {
        r.rmse
    } else {
        Some(r.residual_norm)
    }
}

/// Index of the selected start: smallest metric, ties to the smallest seed.
pub fn select_start(starts: &[StartOutcome], by_rmse: bool) -> Option<usize> {
    starts
        .iter()
        .enumerate()
        .filter_map(|(k, s)| selection_metric(s, by_rmse).map(|m| (k, m, s.n_seed)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.total_cmp(&b.2)))
        .map(|(k, _, _)| k)
}

/// Full extraction: build the system, multistart over the seeds and keep
/// the best converged start.
pub fn extract(
    spec: &DatasheetSpec,
    variant: FifthEquationVariant,
    opts: &SolverOptions,
    curve: Option<&MeasuredCurve>,
) -> Result<(ExtractionResult, Vec<StartOutcome>), ExtractError> {
    let system = build_system(spec, variant)?;
    let starts = multistart(&system, opts, curve)?;
    match select_start(&starts, curve.is_some()) {
        Some(k) => Ok((
            starts[k]
                .result
                .clone()
                .expect("selected start has a result"),
            starts,
        )),
        None => Err(ExtractError::AllStartsFailed { starts }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{key_points, OperatingConditions};
    use approx::assert_relative_eq;

    fn pwp_spec() -> DatasheetSpec {
        DatasheetSpec::new(1.03163, 16.7753, 0.9162, 12.6049, 11.55, 36, 318.0).unwrap()
    }

    fn rtc_spec() -> DatasheetSpec {
        DatasheetSpec::new(0.7603, 0.5728, 0.6894, 0.4507, 0.3107, 1, 306.0).unwrap()
    }

    #[test]
    fn guess_for_pwp() {
        let g = initial_guess(&pwp_spec(), 1.3).unwrap();
        assert_relative_eq!(
            g.r_s,
            (16.7753 - 12.6049) / (2.0 * 0.9162),
            max_relative = 1e-15
        );
        assert!((g.r_s - 2.27592).abs() < 5e-6);
        assert!((g.r_sh - 109.200).abs() < 5e-4);
        assert_eq!(g.i_ph, 1.03163);
        assert_eq!(g.n, 1.3);
    }

    #[test]
    fn guess_for_rtc() {
        let g = initial_guess(&rtc_spec(), 1.5).unwrap();
        let vt = crate::model::thermal_voltage(306.0).unwrap();
        let expected = 0.7603 / ((0.5728 / (1.5 * vt)).exp() - 1.0);
        assert_relative_eq!(g.i_s, expected, max_relative = 1e-12);
        assert_eq!(g, initial_guess(&rtc_spec(), 1.5).unwrap());
    }

    #[test]
    fn guess_rejects_bad_seed_and_degenerate_spec() {
        assert!(matches!(
            initial_guess(&rtc_spec(), 2.5),
            Err(SolverError::SeedOutOfRange(_))
        ));
        let degenerate = DatasheetSpec {
            i_mpp: 0.7603,
            ..rtc_spec()
        };
        assert!(matches!(
            initial_guess(&degenerate, 1.5),
            Err(SolverError::DegenerateSpec(_))
        ));
    }

    #[test]
    fn invalid_guess_is_a_precondition_error() {
        let sys = build_system(&rtc_spec(), FifthEquationVariant::ProposedDpdi).unwrap();
        let mut g = initial_guess(&rtc_spec(), 1.5).unwrap();
        g.r_s = -0.1;
        assert!(matches!(
            solve(&sys, &g, &SolverOptions::default()),
            Err(SolverError::InvalidGuess(_))
        ));
    }

    #[test]
    fn synthetic_key_points_are_solved_exactly() {
        let truth = SingleDiodeParams::new(2.2, 8e-8, 1.35, 0.22, 310.0).unwrap();
        let spec = key_points(&truth, &OperatingConditions::new(12, 298.0).unwrap()).unwrap();
        // the slope variants only approximate the generator's slopes, so
        // only the proposed system has it as an exact root
        {
            let sys = build_system(&spec, FifthEquationVariant::ProposedDpdi).unwrap();
            let g = initial_guess(&spec, 1.3).unwrap();
            let res = solve(&sys, &g, &SolverOptions::default()).unwrap();
            assert!(res.converged, "{res:?}");
            assert!(res.residual_norm < 1e-10);
            // the recovered set reproduces the key points
            let back = key_points(&res.params, &spec.conditions()).unwrap();
            assert_relative_eq!(back.i_sc, spec.i_sc, max_relative = 1e-8);
            assert_relative_eq!(back.v_oc, spec.v_oc, max_relative = 1e-8);
            assert_relative_eq!(back.v_mpp, spec.v_mpp, max_relative = 1e-5);
        }
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let sys = build_system(&pwp_spec(), FifthEquationVariant::ProposedDpdi).unwrap();
        let opts = SolverOptions {
            max_iterations: 1,
            ..SolverOptions::default()
        };
        let res = solve(&sys, &initial_guess(&pwp_spec(), 1.0).unwrap(), &opts).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 1);
        assert!(res.residual_norm > opts.residual_tolerance);
    }

    #[test]
    fn converged_results_are_certified() {
        let sys = build_system(&rtc_spec(), FifthEquationVariant::ProposedDpdi).unwrap();
        let opts = SolverOptions::default();
        for start in multistart(&sys, &opts, None).unwrap() {
            let Some(r) = start.result else { continue };
            r.params.validate().unwrap();
            if r.converged {
                let again = sys.residuals(&r.params).unwrap().norm();
                assert!((again - r.residual_norm).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn extraction_is_deterministic() {
        let opts = SolverOptions::default();
        let a = extract(&rtc_spec(), FifthEquationVariant::ProposedDpdi, &opts, None).unwrap();
        let b = extract(&rtc_spec(), FifthEquationVariant::ProposedDpdi, &opts, None).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(
            a.0.params.to_array().map(f64::to_bits),
            b.0.params.to_array().map(f64::to_bits)
        );
    }

    #[test]
    fn selection_prefers_lowest_metric_then_lowest_seed() {
        let template = |n_seed: f64, norm: f64, converged: bool| {
            let p = SingleDiodeParams::new(1.0, 1e-7, n_seed, 0.1, 100.0).unwrap();
            StartOutcome {
                n_seed,
                result: Some(ExtractionResult {
                    params: p,
                    variant: VariantTag::ProposedDpdi,
                    n_seed,
                    residuals: ResidualVector {
                        values: [0.0; 5],
                        scales: [1.0; 5],
                    },
                    residual_norm: norm,
                    iterations: 3,
                    jacobian_condition: None,
                    jacobian_rank: 4,
                    converged,
                    rmse: None,
                }),
                error: None,
            }
        };
        let starts = vec![
            template(1.3, 1e-13, true),
            template(1.0, 1e-13, true),
            template(1.1, 1e-16, false),
            template(1.2, 5e-13, true),
        ];
        assert_eq!(select_start(&starts, false), Some(1));
        assert_eq!(select_start(&starts[2..3], false), None);
    }
}
