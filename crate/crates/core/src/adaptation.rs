//! Projection-guarded weight update `θ̂̇ = proj(Γ_θ Φ̂′ᵀ e)` with a scalar,
//! piecewise-constant gain `Γ_θ = γ(t)·I`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdaptationError {
    #[error("invalid adaptation config: {0}")]
    Config(String),
    #[error("weight estimate norm {norm} exceeds the projection region radius {limit}")]
    StateCorruption { norm: f64, limit: f64 },
    #[error("dimension mismatch: {what} is {found}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

/// One entry of the learning-gain schedule: `γ` applies from `start` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainStep {
    pub start: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptationConfig {
    pub gain_schedule: Vec<GainStep>,
    /// Radius `θ̄` of the ball the estimates are kept in.
    pub weight_bound: f64,
    /// Boundary-layer width `ε_p`; the hard limit is `θ̄·√(1+ε_p)`.
    pub projection_tolerance: f64,
}

// Relative slack used when comparing times to schedule boundaries.
const TIME_SLACK: f64 = 1e-9;
// Relative slack on the projection precondition, covering rounding only.
const NORM_SLACK: f64 = 1e-9;

impl AdaptationConfig {
    pub fn constant(gain: f64, weight_bound: f64, projection_tolerance: f64) -> Self {
        Self {
            gain_schedule: vec![GainStep { start: 0.0, gain }],
            weight_bound,
            projection_tolerance,
        }
    }

    pub fn validate(&self) -> Result<(), AdaptationError> {
        let first = self
            .gain_schedule
            .first()
            .ok_or_else(|| AdaptationError::Config("gain schedule is empty".into()))?;
        if first.start != 0.0 {
            return Err(AdaptationError::Config("gain schedule must start at t = 0".into()));
        }
        for w in self.gain_schedule.windows(2) {
            if !(w[1].start > w[0].start) {
                return Err(AdaptationError::Config("gain schedule times must increase strictly".into()));
            }
        }
        if self
            .gain_schedule
            .iter()
            .any(|s| !s.gain.is_finite() || s.gain < 0.0 || !s.start.is_finite())
        {
            return Err(AdaptationError::Config("gains must be finite and nonnegative".into()));
        }
        if !(self.weight_bound.is_finite() && self.weight_bound > 0.0) {
            return Err(AdaptationError::Config("weight bound must be positive".into()));
        }
        if !(self.projection_tolerance.is_finite() && self.projection_tolerance > 0.0) {
            return Err(AdaptationError::Config("projection tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Active gain `γ(t)`.
    pub fn gain_at(&self, t: f64) -> f64 {
        self.gain_schedule
            .iter()
            .rev()
            .find(|s| t >= s.start - TIME_SLACK * s.start.abs().max(1.0))
            .map_or(self.gain_schedule[0].gain, |s| s.gain)
    }

    /// Outer radius `θ̄·√(1+ε_p)` the projection never lets `θ̂` leave.
    pub fn outer_radius(&self) -> f64 {
        self.weight_bound * (1.0 + self.projection_tolerance).sqrt()
    }

    /// Convex boundary function `p(θ) = (‖θ‖² − θ̄²) / (ε_p θ̄²)`.
    pub fn boundary_function(&self, theta: &[f64]) -> f64 {
        let b2 = self.weight_bound * self.weight_bound;
        (linalg::norm_sq(theta) - b2) / (self.projection_tolerance * b2)
    }
}

/// Smooth projection of an update direction `y` at the estimate `θ̂`.
///
/// Returns `y` inside the ball or when `y` points inward; otherwise removes
/// the fraction `p(θ̂)` of its outward radial component.
pub fn projection(theta: &[f64], y: &[f64], cfg: &AdaptationConfig) -> Result<Vec<f64>, AdaptationError> {
    check_projection_args(theta, y, None, cfg)?;
    Ok(project_unchecked(theta, y, cfg, None))
}

/// [`projection`] confined to the coordinates not marked in `frozen`.
///
/// Frozen coordinates of the result are zero and the radial correction uses
/// only the free part of `θ̂`, so frozen weights never move. Since
/// `θ̂ᵀ·result = (1 − p)·θ̂_freeᵀy_free` on the boundary layer, the norm
/// guarantee is the same as for [`projection`], to which this reduces when
/// nothing is frozen.
pub fn projection_in_subspace(
    theta: &[f64],
    y: &[f64],
    frozen: &[bool],
    cfg: &AdaptationConfig,
) -> Result<Vec<f64>, AdaptationError> {
    check_projection_args(theta, y, Some(frozen), cfg)?;
    Ok(project_unchecked(theta, y, cfg, Some(frozen)))
}

fn check_projection_args(
    theta: &[f64],
    y: &[f64],
    frozen: Option<&[bool]>,
    cfg: &AdaptationConfig,
) -> Result<(), AdaptationError> {
    if y.len() != theta.len() {
        return Err(AdaptationError::Dimension {
            what: "update direction",
            expected: theta.len(),
            found: y.len(),
        });
    }
    if let Some(f) = frozen {
        if f.len() != theta.len() {
            return Err(AdaptationError::Dimension {
                what: "frozen set",
                expected: theta.len(),
                found: f.len(),
            });
        }
    }
    let norm = linalg::norm(theta);
    let limit = cfg.outer_radius();
    if !(norm <= limit * (1.0 + NORM_SLACK)) {
        return Err(AdaptationError::StateCorruption { norm, limit });
    }
    Ok(())
}

/// Projection without the norm precondition, for intermediate integrator
/// stages.
pub(crate) fn project_unchecked(theta: &[f64], y: &[f64], cfg: &AdaptationConfig, frozen: Option<&[bool]>) -> Vec<f64> {
    let free = |i: usize| frozen.is_none_or(|f| !f[i]);
    let mut out: Vec<f64> = y.iter().enumerate().map(|(i, &v)| if free(i) { v } else { 0.0 }).collect();
    let p = cfg.boundary_function(theta);
    // ∇p ∝ θ, so the sign of ∇pᵀy is the sign of θᵀy.
    let radial: f64 = (0..theta.len()).filter(|&i| free(i)).map(|i| theta[i] * out[i]).sum();
    if p <= 0.0 || radial <= 0.0 {
        return out;
    }
    // y − p·(θθᵀ/‖θ‖²)·y, with θ restricted to the free coordinates
    let free_sq: f64 = (0..theta.len()).filter(|&i| free(i)).map(|i| theta[i] * theta[i]).sum();
    let coeff = p * radial / free_sq;
    for i in (0..theta.len()).filter(|&i| free(i)) {
        out[i] -= coeff * theta[i];
    }
    out
}

/// Pulls `θ̂` back onto the sphere of radius `radius` by scaling only the
/// free coordinates; falls back to a uniform rescale if the frozen part
/// alone is already too long. Returns whether anything changed.
pub fn clamp_to_ball(theta: &mut [f64], radius: f64, frozen: Option<&[bool]>) -> bool {
    let total = linalg::norm_sq(theta);
    if total <= radius * radius {
        return false;
    }
    let free = |i: usize| frozen.is_none_or(|f| !f[i]);
    let free_sq: f64 = (0..theta.len()).filter(|&i| free(i)).map(|i| theta[i] * theta[i]).sum();
    let frozen_sq = total - free_sq;
    if frozen_sq < radius * radius && free_sq > 0.0 {
        let s = ((radius * radius - frozen_sq) / free_sq).sqrt();
        for (i, v) in theta.iter_mut().enumerate() {
            if free(i) {
                *v *= s;
            }
        }
    } else {
        let s = radius / total.sqrt();
        theta.iter_mut().for_each(|v| *v *= s);
    }
    true
}

/// `proj(γ(t)·Φ̂′ᵀ e)`.
pub fn update_law(
    e: &[f64],
    jacobian: &Matrix,
    t: f64,
    theta: &[f64],
    cfg: &AdaptationConfig,
) -> Result<Vec<f64>, AdaptationError> {
    let y = raw_update(e, jacobian, cfg.gain_at(t), theta.len())?;
    projection(theta, &y, cfg)
}

/// `γ·Φ̂′ᵀ e`, before projection.
pub fn raw_update(e: &[f64], jacobian: &Matrix, gain: f64, params: usize) -> Result<Vec<f64>, AdaptationError> {
    if jacobian.rows() != e.len() {
        return Err(AdaptationError::Dimension {
            what: "jacobian rows",
            expected: e.len(),
            found: jacobian.rows(),
        });
    }
    if jacobian.cols() != params {
        return Err(AdaptationError::Dimension {
            what: "jacobian columns",
            expected: params,
            found: jacobian.cols(),
        });
    }
    let mut y = vec![0.0; params];
    for (r, &er) in e.iter().enumerate() {
        let s = gain * er;
        if s != 0.0 {
            linalg::axpy(s, jacobian.row_slice(r), &mut y);
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> AdaptationConfig {
        AdaptationConfig::constant(1.0, 2.0, 0.1)
    }

    fn scaled(v: &[f64], s: f64) -> Vec<f64> {
        v.iter().map(|x| x * s).collect()
    }

    #[test]
    fn interior_is_passthrough() {
        let theta = [0.5, -1.0, 0.3];
        let y = [10.0, 20.0, -3.0];
        assert_eq!(projection(&theta, &y, &cfg()).unwrap(), y.to_vec());
    }

    #[test]
    fn outward_direction_at_outer_boundary_loses_radial_part() {
        let c = cfg();
        let dir = [0.6, 0.0, 0.8];
        let theta = scaled(&dir, c.outer_radius());
        assert!((c.boundary_function(&theta) - 1.0).abs() < 1e-12);
        let out = projection(&theta, &theta, &c).unwrap();
        // ∇p ∝ θ
        assert!(linalg::dot(&theta, &out).abs() < 1e-12);
    }

    #[test]
    fn inward_direction_at_boundary_is_kept() {
        let c = cfg();
        let theta = scaled(&[0.0, 1.0, 0.0], c.outer_radius());
        let y = scaled(&theta, -1.0);
        assert_eq!(projection(&theta, &y, &c).unwrap(), y);
    }

    #[test]
    fn outside_region_is_state_corruption() {
        let c = cfg();
        let theta = [c.outer_radius() * 1.01, 0.0];
        assert!(matches!(
            projection(&theta, &[1.0, 0.0], &c),
            Err(AdaptationError::StateCorruption { .. })
        ));
    }

    #[test]
    fn gain_schedule_lookup() {
        let c = AdaptationConfig {
            gain_schedule: vec![GainStep { start: 0.0, gain: 100.0 }, GainStep { start: 2.0, gain: 40.0 }],
            weight_bound: 300.0,
            projection_tolerance: 0.1,
        };
        c.validate().unwrap();
        assert_eq!(c.gain_at(0.0), 100.0);
        assert_eq!(c.gain_at(1.999), 100.0);
        assert_eq!(c.gain_at(2.0), 40.0);
        assert_eq!(c.gain_at(1999.0 * 0.001 + 0.001), 40.0);
        assert_eq!(c.gain_at(9.0), 40.0);
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        c.gain_schedule[0].start = 0.5;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.gain_schedule.push(GainStep { start: 0.0, gain: 1.0 });
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.weight_bound = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.projection_tolerance = -1.0;
        assert!(c.validate().is_err());
        cfg().validate().unwrap();
    }

    #[test]
    fn zero_error_gives_zero_update() {
        let jac = Matrix::from_fn(3, 5, |i, j| (i + j) as f64);
        let out = update_law(&[0.0; 3], &jac, 0.0, &[0.1; 5], &cfg()).unwrap();
        assert_eq!(out, vec![0.0; 5]);
    }

    #[test]
    fn zero_jacobian_columns_stay_zero() {
        let mut jac = Matrix::from_fn(3, 6, |i, j| 1.0 + (i * j) as f64);
        for r in 0..3 {
            jac[(r, 2)] = 0.0;
            jac[(r, 4)] = 0.0;
        }
        let out = update_law(&[0.3, -1.2, 2.0], &jac, 0.0, &[0.1; 6], &cfg()).unwrap();
        assert_eq!(out[2], 0.0);
        assert_eq!(out[4], 0.0);
    }

    #[test]
    fn interior_update_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let jac = Matrix::from_fn(3, 7, |_, _| rng.gen_range(-1.0..1.0));
        let e = [0.4, -0.7, 1.3];
        let gain = 37.0;
        let c = AdaptationConfig::constant(gain, 1e3, 0.1);
        let out = update_law(&e, &jac, 0.0, &[0.0; 7], &c).unwrap();
        // γ·Φ′ᵀe via the dense transpose
        let expected = jac.transpose().scale(gain).matvec(&e).unwrap();
        for (a, b) in out.iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn mismatched_jacobian_rejected() {
        let jac = Matrix::zeros(2, 4);
        assert!(update_law(&[1.0; 3], &jac, 0.0, &[0.0; 4], &cfg()).is_err());
        assert!(update_law(&[1.0; 2], &jac, 0.0, &[0.0; 5], &cfg()).is_err());
    }

    #[test]
    fn subspace_projection_without_frozen_matches_full() {
        let c = cfg();
        let theta = scaled(&[0.6, 0.0, 0.8], 0.5 * (c.weight_bound + c.outer_radius()));
        let y = [1.0, -2.0, 3.0];
        assert_eq!(
            projection_in_subspace(&theta, &y, &[false; 3], &c).unwrap(),
            projection(&theta, &y, &c).unwrap()
        );
    }

    #[test]
    fn subspace_projection_leaves_frozen_coordinates_alone() {
        let c = cfg();
        let theta = scaled(&[0.6, 0.48, 0.64], c.outer_radius());
        let y = [2.0, 0.0, 1.0];
        let frozen = [false, true, false];
        let out = projection_in_subspace(&theta, &y, &frozen, &c).unwrap();
        assert_eq!(out[1], 0.0);
        // p = 1 on the outer sphere: no outward motion at all
        assert!(linalg::dot(&theta, &out).abs() < 1e-12);
        let full = projection(&theta, &y, &c).unwrap();
        assert!(full[1] != 0.0);
    }

    #[test]
    fn clamp_examples() {
        let mut inside = vec![1.0, 1.0];
        assert!(!clamp_to_ball(&mut inside, 2.0, None));
        assert_eq!(inside, vec![1.0, 1.0]);

        let mut v = vec![3.0, 4.0];
        assert!(clamp_to_ball(&mut v, 2.5, None));
        assert!((linalg::norm(&v) - 2.5).abs() < 1e-12);
        assert!((v[0] / v[1] - 0.75).abs() < 1e-12);

        let mut v = vec![3.0, 4.0];
        assert!(clamp_to_ball(&mut v, 3.5, Some(&[true, false])));
        assert_eq!(v[0], 3.0);
        assert!((linalg::norm(&v) - 3.5).abs() < 1e-12);

        // frozen part alone too long: uniform rescale
        let mut v = vec![3.0, 4.0];
        assert!(clamp_to_ball(&mut v, 2.0, Some(&[true, false])));
        assert!((linalg::norm(&v) - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn boundary_removal_is_outward_radial(
            dir in proptest::collection::vec(-1.0f64..1.0, 4),
            y in proptest::collection::vec(-5.0f64..5.0, 4),
            frac in 0.0f64..=1.0,
        ) {
            let n = linalg::norm(&dir);
            prop_assume!(n > 1e-3);
            let c = cfg();
            // somewhere in the boundary layer between θ̄ and the outer radius
            let r = c.weight_bound + frac * (c.outer_radius() - c.weight_bound);
            let theta = scaled(&dir, r / n);
            let out = projection(&theta, &y, &c).unwrap();
            let removed = linalg::sub(&y, &out);
            prop_assert!(linalg::dot(&theta, &removed) >= -1e-12);
            // the radial component never grows
            prop_assert!(linalg::dot(&theta, &out) <= linalg::dot(&theta, &y).max(0.0) + 1e-12);
        }

        #[test]
        fn subspace_projection_never_grows_norm_faster_than_full(
            dir in proptest::collection::vec(-1.0f64..1.0, 5),
            y in proptest::collection::vec(-5.0f64..5.0, 5),
            frozen in proptest::collection::vec(any::<bool>(), 5),
            frac in 0.0f64..=1.0,
        ) {
            let n = linalg::norm(&dir);
            prop_assume!(n > 1e-3);
            let c = cfg();
            let r = c.weight_bound + frac * (c.outer_radius() - c.weight_bound);
            let theta = scaled(&dir, r / n);
            let y: Vec<f64> = y.iter().zip(&frozen).map(|(v, &f)| if f { 0.0 } else { *v }).collect();
            let out = projection_in_subspace(&theta, &y, &frozen, &c).unwrap();
            let p = c.boundary_function(&theta);
            // θᵀ·out = (1 − p)·θᵀy on the outward branch, else θᵀy
            let ty = linalg::dot(&theta, &y);
            let expected = if ty > 0.0 && p > 0.0 { (1.0 - p) * ty } else { ty };
            prop_assert!((linalg::dot(&theta, &out) - expected).abs() <= 1e-9 * (1.0 + ty.abs()));
            for (i, &f) in frozen.iter().enumerate() {
                if f { prop_assert_eq!(out[i], 0.0); }
            }
        }
    }
}
