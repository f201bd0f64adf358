//! Principal branch of the Lambert W function.
//!
//! Two entry points: [`lambert_w0`] for an ordinary argument and
//! [`lambert_w0_exp`] for arguments given by their logarithm, which is how
//! the explicit diode-current formula produces them (the raw argument
//! routinely exceeds `f64::MAX`).

const MAX_ITERATIONS: usize = 64;
const REL_TOL: f64 = 1e-15;

/// W0(x) for x >= -1/e, refined by Halley iteration on `w·e^w - x`.
///
/// Returns NaN below the branch point.
pub fn lambert_w0(x: f64) -> f64 {
    const BRANCH_POINT: f64 = -1.0 / std::f64::consts::E;
    if x.is_nan() || x < BRANCH_POINT {
        return f64::NAN;
    }
    if x == 0.0 {
        return 0.0;
    }
    if x == BRANCH_POINT {
        return -1.0;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }

    let mut w = if x < -0.32 {
        // series about the branch point
        let p = (2.0 * (std::f64::consts::E * x + 1.0)).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        x.ln_1p()
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };

    for _ in 0..MAX_ITERATIONS {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let delta = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= delta;
        if delta.abs() <= REL_TOL * w.abs() {
            break;
        }
    }
    w
}

/// W0(e^z), evaluated without forming e^z once z > 1.
///
/// For large z this solves `w + ln w = z`, which stays well conditioned
/// long after `e^z` has overflowed.
pub fn lambert_w0_exp(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z == f64::NEG_INFINITY {
        return 0.0;
    }
    if z <= 1.0 {
        return lambert_w0(z.exp());
    }
    if z.is_infinite() {
        return f64::INFINITY;
    }

    let lz = z.ln();
    let mut w = z - lz + lz / z;
    for _ in 0..MAX_ITERATIONS {
        let f = w + w.ln() - z;
        let f1 = 1.0 + 1.0 / w;
        let f2 = -1.0 / (w * w);
        let delta = 2.0 * f * f1 / (2.0 * f1 * f1 - f * f2);
        w -= delta;
        if delta.abs() <= REL_TOL * w.abs() {
            break;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_maps_to_zero() {
        assert_eq!(lambert_w0(0.0), 0.0);
    }

    #[test]
    fn omega_constant() {
        assert_relative_eq!(
            lambert_w0(1.0),
            0.567_143_290_409_783_8,
            max_relative = 1e-15
        );
    }

    #[test]
    fn branch_point_and_below() {
        assert_eq!(lambert_w0(-1.0 / std::f64::consts::E), -1.0);
        assert!(lambert_w0(-0.5).is_nan());
    }

    #[test]
    fn satisfies_defining_identity() {
        for &x in &[
            -0.36, -0.3, -0.1, 1e-300, 1e-20, 1e-3, 0.5, 2.0, 10.0, 1e5, 1e100, 1e300,
        ] {
            let w = lambert_w0(x);
            assert_relative_eq!(w * w.exp(), x, max_relative = 1e-13);
        }
    }

    #[test]
    fn log_argument_matches_direct_form() {
        for &z in &[-700.0, -30.0, -1.0, 0.0, 0.5, 1.0, 1.5, 5.0, 50.0, 600.0] {
            assert_relative_eq!(
                lambert_w0_exp(z),
                lambert_w0(f64::exp(z)),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn log_argument_beyond_overflow() {
        for &z in &[710.0, 1e4, 1e8] {
            let w = lambert_w0_exp(z);
            assert_relative_eq!(w + w.ln(), z, max_relative = 1e-15);
        }
    }
}
