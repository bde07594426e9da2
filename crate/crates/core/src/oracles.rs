//! Independent numerical checks: finite-difference and forward-mode
//! Jacobians, an unmasked reference network, the matched plant that makes
//! the ideal weights known, and a discrete Lyapunov decrease monitor.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Matrix};
use crate::network::{self, DropoutMask, NetworkError, NetworkShape, WeightVector};
use crate::sim::{Plant, SimError, TrajectoryRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Central-difference Jacobian of the masked network output with respect to
/// every weight coordinate.
pub fn finite_diff_jacobian(
    x: &[f64],
    mask: &DropoutMask,
    theta: &WeightVector,
    shape: &NetworkShape,
    h: f64,
) -> Result<Matrix, OracleError> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let p = shape.param_count();
    let out = shape.output_dim();
    let mut jac = Matrix::zeros(out, p);
    let mut work = theta.clone();
    for c in 0..p {
        let orig = work.as_slice()[c];
        work.as_mut_slice()[c] = orig + h;
        let (plus, _) = network::forward(x, mask, &work, shape)?;
        work.as_mut_slice()[c] = orig - h;
        let (minus, _) = network::forward(x, mask, &work, shape)?;
        work.as_mut_slice()[c] = orig;
        for r in 0..out {
            jac[(r, c)] = (plus[r] - minus[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Max-norm relative error `max|a − b| / max|b|` (absolute when `b ≡ 0`).
pub fn relative_error(approx: &Matrix, reference: &Matrix) -> f64 {
    let diff = approx.sub(reference).expect("same shape").max_abs();
    let scale = reference.max_abs();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Unmasked network `V_kᵀ tanh(… tanh(V_0ᵀ x_a))` evaluated with dense
/// matrices, sharing no code with the masked forward pass.
pub fn plain_forward(x: &[f64], theta: &WeightVector, shape: &NetworkShape) -> Vec<f64> {
    let mut a = shape.augment_input(x);
    let k = shape.hidden_layers();
    for j in 0..=k {
        let v = theta.layer_matrix(shape, j);
        let z = v.transpose().matvec(&a).expect("layer widths agree");
        a = if j < k { z.iter().map(|s| s.tanh()).collect() } else { z };
    }
    a
}

/// Forward-mode (tangent) Jacobian of [`plain_forward`], one weight at a time.
pub fn plain_jacobian(x: &[f64], theta: &WeightVector, shape: &NetworkShape) -> Matrix {
    let k = shape.hidden_layers();
    let layers: Vec<Matrix> = (0..=k).map(|j| theta.layer_matrix(shape, j)).collect();
    let xa = shape.augment_input(x);
    // primal pass
    let mut inputs = vec![xa.clone()];
    let mut pre = Vec::new();
    for (j, v) in layers.iter().enumerate() {
        let z = v.transpose().matvec(&inputs[j]).expect("widths agree");
        if j < k {
            inputs.push(z.iter().map(|s| s.tanh()).collect());
        }
        pre.push(z);
    }
    let mut jac = Matrix::zeros(shape.output_dim(), shape.param_count());
    for (jw, _) in layers.iter().enumerate() {
        for pw in 0..shape.width(jw) {
            for qw in 0..shape.width(jw + 1) {
                // tangent of the layer input, starting at the perturbed layer
                let mut dz = vec![0.0; shape.width(jw + 1)];
                dz[qw] = inputs[jw][pw];
                for j in jw + 1..=k {
                    let da: Vec<f64> = dz
                        .iter()
                        .zip(&pre[j - 1])
                        .map(|(d, z)| d * (1.0 - z.tanh().powi(2)))
                        .collect();
                    dz = layers[j].transpose().matvec(&da).expect("widths agree");
                }
                let col = shape.weight_index(jw, pw, qw);
                for (r, v) in dz.iter().enumerate() {
                    jac[(r, col)] = *v;
                }
            }
        }
    }
    jac
}

/// Plant whose drift is a frozen all-active network, so `f = Φ(·, I, θ*)`
/// exactly and the reconstruction error is zero.
#[derive(Debug, Clone)]
pub struct MatchedPlant {
    shape: NetworkShape,
    ideal: WeightVector,
    identity: DropoutMask,
}

impl MatchedPlant {
    pub fn new(shape: NetworkShape, ideal: WeightVector) -> Self {
        assert_eq!(ideal.len(), shape.param_count());
        assert_eq!(shape.input_dim(), shape.output_dim(), "drift maps ℝⁿ to ℝⁿ");
        let identity = DropoutMask::identity(&shape, 0);
        Self { shape, ideal, identity }
    }

    /// `θ* ~ N(0, std_dev²)` per coordinate.
    pub fn sample<R: Rng + ?Sized>(shape: NetworkShape, std_dev: f64, rng: &mut R) -> Self {
        let ideal = WeightVector::sample_normal(shape.param_count(), std_dev, rng);
        Self::new(shape, ideal)
    }

    pub fn ideal(&self) -> &WeightVector {
        &self.ideal
    }
}

impl Plant for MatchedPlant {
    fn dim(&self) -> usize {
        self.shape.input_dim()
    }

    fn drift(&self, x: &[f64]) -> Result<Vec<f64>, SimError> {
        Ok(network::forward(x, &self.identity, &self.ideal, &self.shape)?.0)
    }
}

/// `V_L = ½‖e‖² + ‖θ̃‖²/(2γ)` split into its two parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSample {
    pub value: f64,
    pub error_part: f64,
    pub weight_part: f64,
}

pub fn lyapunov_value(e: &[f64], theta_err: &[f64], gain: f64) -> LyapunovSample {
    lyapunov_from_norms(linalg::norm(e), linalg::norm(theta_err), gain)
}

pub fn lyapunov_from_norms(e_norm: f64, theta_err_norm: f64, gain: f64) -> LyapunovSample {
    assert!(gain > 0.0, "Lyapunov function needs a positive gain");
    let error_part = 0.5 * e_norm * e_norm;
    let weight_part = 0.5 * theta_err_norm * theta_err_norm / gain;
    LyapunovSample {
        value: error_part + weight_part,
        error_part,
        weight_part,
    }
}

/// Outcome of [`lyapunov_monitor`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub steps: usize,
    pub eligible: usize,
    pub violations: usize,
    pub excluded_sign_change: usize,
    pub excluded_gain_switch: usize,
    /// Largest `ΔV_L + k_e‖e‖²h − tol` seen (positive means violated).
    pub worst_excess: f64,
    /// Time of the first violating step.
    pub first_violation: Option<f64>,
}

impl MonitorReport {
    pub fn violation_fraction(&self) -> f64 {
        if self.eligible == 0 {
            0.0
        } else {
            self.violations as f64 / self.eligible as f64
        }
    }
}

/// Checks `V_L(t_{i+1}) − V_L(t_i) ≤ −k_e‖e(t_i)‖²·h + tol` step by step,
/// with `tol = 10·h·(1 + ‖u(t_i)‖‖e(t_i)‖)`.
///
/// Steps across a learning-gain switch and steps where any error component
/// touches or crosses zero are not checked. Both endpoints of a step use the
/// gain in force during that step.
pub fn lyapunov_monitor(record: &TrajectoryRecord, k_e: f64) -> Result<MonitorReport, OracleError> {
    let h = record.step;
    let mut report = MonitorReport {
        steps: record.rows.len().saturating_sub(1),
        eligible: 0,
        violations: 0,
        excluded_sign_change: 0,
        excluded_gain_switch: 0,
        worst_excess: f64::NEG_INFINITY,
        first_violation: None,
    };
    for pair in record.rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let (ta, tb) = match (a.theta_err_norm, b.theta_err_norm) {
            (Some(ta), Some(tb)) => (ta, tb),
            _ => {
                return Err(OracleError::Contract(
                    "record has no ideal weights; run it on a matched plant".into(),
                ))
            }
        };
        if a.gain != b.gain {
            report.excluded_gain_switch += 1;
            continue;
        }
        if a.e.iter().zip(&b.e).any(|(ea, eb)| ea * eb <= 0.0) {
            report.excluded_sign_change += 1;
            continue;
        }
        report.eligible += 1;
        let va = lyapunov_from_norms(a.e_norm, ta, a.gain).value;
        let vb = lyapunov_from_norms(b.e_norm, tb, a.gain).value;
        let tol = 10.0 * h * (1.0 + a.u_norm * a.e_norm);
        let excess = (vb - va) + k_e * a.e_norm * a.e_norm * h - tol;
        report.worst_excess = report.worst_excess.max(excess);
        if excess > 0.0 {
            report.violations += 1;
            report.first_violation.get_or_insert(a.t);
        }
    }
    Ok(report)
}
