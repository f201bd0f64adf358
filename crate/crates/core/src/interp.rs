//! Shape-preserving cubic interpolation and trapezoid quadrature.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InterpError {
    #[error("need at least 2 knots, got {0}")]
    TooFewKnots(usize),
    #[error("knot abscissae must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("x and y lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite knot at index {0}")]
    NonFinite(usize),
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes,
/// the same construction as PCHIP).
///
/// Between knots it never overshoots the data, so a monotone I-V curve stays
/// monotone. Outside the knot range the end cubic is extended.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self, InterpError> {
        if x.len() != y.len() {
            return Err(InterpError::LengthMismatch(x.len(), y.len()));
        }
        let n = x.len();
        if n < 2 {
            return Err(InterpError::TooFewKnots(n));
        }
        for k in 0..n {
            if !(x[k].is_finite() && y[k].is_finite()) {
                return Err(InterpError::NonFinite(k));
            }
            if k > 0 && x[k] <= x[k - 1] {
                return Err(InterpError::NotIncreasing(k));
            }
        }

        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] > 0.0 {
                    // weighted harmonic mean
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            d,
        })
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let k = match self.x.partition_point(|&xk| xk <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }
}

// Three-point end condition, clipped to keep the end interval monotone.
fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

/// `n_points` uniformly spaced abscissae covering `[a, b]` inclusive.
pub fn uniform_grid(a: f64, b: f64, n_points: usize) -> Vec<f64> {
    match n_points {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n_points - 1) as f64;
            (0..n_points)
                .map(|k| {
                    if k == n_points - 1 {
                        b
                    } else {
                        a + h * k as f64
                    }
                })
                .collect()
        }
    }
}

/// Composite trapezoid rule over samples at uniform spacing `h`:
/// `h·Σy - h·(y_first + y_last)/2`.
pub fn trapezoid_uniform(h: f64, y: &[f64]) -> f64 {
    match y {
        [] | [_] => 0.0,
        [first, .., last] => h * (y.iter().sum::<f64>() - 0.5 * (first + last)),
    }
}
