//! Tracking error and the robust control law
//! `u = ẋ_d − Φ̂ − k_e·e − k_s·sgn(e)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("control gains must be strictly positive (k_e = {k_e}, k_s = {k_s})")]
    NonPositiveGain { k_e: f64, k_s: f64 },
    #[error("smoothing width must be positive, got {0}")]
    BadSmoothing(f64),
    #[error("length mismatch: {left} vs {right}")]
    Length { left: usize, right: usize },
}

/// Feedback gains. The stabilizing condition `k_s > ε̄ + Δ` involves
/// unknown plant constants and is not checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlGains {
    pub k_e: f64,
    pub k_s: f64,
}

impl ControlGains {
    pub fn new(k_e: f64, k_s: f64) -> Result<Self, ControlError> {
        let g = Self { k_e, k_s };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.k_e > 0.0 && self.k_s > 0.0 && self.k_e.is_finite() && self.k_s.is_finite()) {
            return Err(ControlError::NonPositiveGain {
                k_e: self.k_e,
                k_s: self.k_s,
            });
        }
        Ok(())
    }
}

/// How the discontinuous term is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignMode {
    /// `sgn` with `sgn(0) = 0`.
    #[default]
    Exact,
    /// `tanh(e / width)`; trades exactness for no chattering.
    Smooth { width: f64 },
}

impl SignMode {
    pub fn validate(&self) -> Result<(), ControlError> {
        match *self {
            SignMode::Exact => Ok(()),
            SignMode::Smooth { width } if width > 0.0 && width.is_finite() => Ok(()),
            SignMode::Smooth { width } => Err(ControlError::BadSmoothing(width)),
        }
    }

    pub fn apply(&self, e: &[f64]) -> Vec<f64> {
        match *self {
            SignMode::Exact => signum(e),
            SignMode::Smooth { width } => e.iter().map(|v| (v / width).tanh()).collect(),
        }
    }
}

/// `e = x − x_d`.
pub fn tracking_error(x: &[f64], x_d: &[f64]) -> Result<Vec<f64>, ControlError> {
    if x.len() != x_d.len() {
        return Err(ControlError::Length {
            left: x.len(),
            right: x_d.len(),
        });
    }
    Ok(x.iter().zip(x_d).map(|(a, b)| a - b).collect())
}

/// Elementwise sign, with exactly-zero entries mapped to 0.
pub fn signum(e: &[f64]) -> Vec<f64> {
    e.iter()
        .map(|&v| {
            if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// `u = ẋ_d − Φ̂ − k_e·e − k_s·sgn(e)`.
pub fn control(xd_dot: &[f64], phi_hat: &[f64], e: &[f64], gains: &ControlGains) -> Vec<f64> {
    control_with(xd_dot, phi_hat, e, gains, SignMode::Exact)
}

pub fn control_with(
    xd_dot: &[f64],
    phi_hat: &[f64],
    e: &[f64],
    gains: &ControlGains,
    mode: SignMode,
) -> Vec<f64> {
    debug_assert!(xd_dot.len() == e.len() && phi_hat.len() == e.len());
    let s = mode.apply(e);
    (0..e.len())
        .map(|i| xd_dot[i] - phi_hat[i] - gains.k_e * e[i] - gains.k_s * s[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PAPER: ControlGains = ControlGains { k_e: 10.5, k_s: 1.5 };

    #[test]
    fn tracking_error_examples() {
        assert_eq!(tracking_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            tracking_error(&[5.0, 1.0, -5.0], &[0.0, -1.0, 1.0]).unwrap(),
            vec![5.0, 2.0, -6.0]
        );
        assert!(tracking_error(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn signum_examples() {
        assert_eq!(signum(&[2.0, -3.0, 0.0]), vec![1.0, -1.0, 0.0]);
        assert_eq!(signum(&[1e-15, -1e-15, 0.0]), vec![1.0, -1.0, 0.0]);
        assert_eq!(signum(&[-0.0]), vec![0.0]);
    }

    #[test]
    fn control_examples() {
        let xd = [2.0, 0.0, 3.0];
        assert_eq!(control(&xd, &[0.0; 3], &[0.0; 3], &PAPER), xd.to_vec());
        assert_eq!(control(&[0.0; 3], &[0.0; 3], &[1.0, 0.0, 0.0], &PAPER), vec![-12.0, 0.0, 0.0]);
    }

    #[test]
    fn exact_cancellation_gives_desired_rate() {
        // ẋ = f + u with Φ̂ = f and e = 0
        let f = [0.3, -2.0, 7.5];
        let xd = [1.0, 2.0, -1.0];
        let u = control(&xd, &f, &[0.0; 3], &PAPER);
        let xdot: Vec<f64> = f.iter().zip(&u).map(|(a, b)| a + b).collect();
        assert_eq!(xdot, xd.to_vec());
    }

    #[test]
    fn gains_must_be_positive() {
        assert!(ControlGains::new(0.0, 1.0).is_err());
        assert!(ControlGains::new(1.0, -1.0).is_err());
        assert!(ControlGains::new(10.5, 1.5).is_ok());
        assert!(SignMode::Smooth { width: 0.0 }.validate().is_err());
    }

    #[test]
    fn smooth_sign_approaches_sign() {
        let s = SignMode::Smooth { width: 1e-3 }.apply(&[0.5, -0.5, 0.0]);
        assert_eq!(s, vec![1.0, -1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn signum_is_odd(e in proptest::collection::vec(-10.0f64..10.0, 1..6)) {
            let neg: Vec<f64> = e.iter().map(|v| -v).collect();
            let lhs = signum(&neg);
            let rhs: Vec<f64> = signum(&e).iter().map(|v| -v).collect();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn tracking_error_is_translation_linear(
            x in proptest::collection::vec(-10.0f64..10.0, 3),
            xd in proptest::collection::vec(-10.0f64..10.0, 3),
            d in proptest::collection::vec(-10.0f64..10.0, 3),
        ) {
            let xs: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
            let diff: Vec<f64> = tracking_error(&xs, &xd).unwrap().iter()
                .zip(tracking_error(&x, &xd).unwrap())
                .map(|(a, b)| a - b)
                .collect();
            for (a, b) in diff.iter().zip(&d) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()) * 10.0);
            }
        }

        #[test]
        fn control_is_affine_in_error(
            xd in proptest::collection::vec(-5.0f64..5.0, 3),
            phi in proptest::collection::vec(-5.0f64..5.0, 3),
            e in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let with_e = control(&xd, &phi, &e, &PAPER);
            let without = control(&xd, &phi, &[0.0; 3], &PAPER);
            let s = signum(&e);
            for i in 0..3 {
                let expected = -PAPER.k_e * e[i] - PAPER.k_s * s[i];
                prop_assert!((with_e[i] - without[i] - expected).abs() <= 1e-12 * 100.0);
            }
        }
    }
}
