//! Extended Kalman filter cycle for the 6-dim vehicle state with a 5-dim box
//! measurement, plus the fixed-interval smoother run over stored forward
//! passes.
//!
//! The measurement model converts between the tracked back-axle point and the
//! detected box center, which sits `back_axle_fraction·l` ahead of the back
//! axle along the heading.

use nalgebra::{Matrix5, Matrix6, SMatrix, Vector5, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    discrete_process_noise, jacobian_f, propagate, symmetrize, Covariance6, DynamicsError,
    EgoMotion, ProcessNoise, TrackState, MIN_EXTENT,
};
use crate::geometry::wrap_angle;

/// Rejection threshold on the innovation covariance condition number.
const MAX_CONDITION: f64 = 1e12;

/// Diagonal loading applied when a prior covariance fails to factor.
const PRIOR_REGULARIZATION: f64 = 1e-9;

pub type Matrix5x6 = SMatrix<f64, 5, 6>;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("innovation covariance numerically singular (condition number {condition:.3e})")]
    SingularInnovation { condition: f64 },
}

/// A detected box as the filter sees it: center, heading, extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub mx: f64,
    pub my: f64,
    pub mtheta: f64,
    pub ml: f64,
    pub mw: f64,
}

impl Measurement {
    pub fn new(mx: f64, my: f64, mtheta: f64, ml: f64, mw: f64) -> Self {
        Measurement {
            mx,
            my,
            mtheta: wrap_angle(mtheta),
            ml: ml.max(MIN_EXTENT),
            mw: mw.max(MIN_EXTENT),
        }
    }

    pub fn to_vector(self) -> Vector5<f64> {
        Vector5::new(self.mx, self.my, self.mtheta, self.ml, self.mw)
    }
}

/// Diagonal measurement noise, component order (x, y, θ, l, w).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementNoise {
    pub r: [f64; 5],
}

impl MeasurementNoise {
    /// Operating point for regular tracking updates.
    pub fn tracking() -> Self {
        MeasurementNoise {
            r: [0.1, 0.1, 0.015, 0.07, 0.04],
        }
    }

    /// Inflated noise for updates against far-range, low-threshold candidates.
    pub fn extrapolation() -> Self {
        MeasurementNoise {
            r: [0.5, 0.5, 0.06, 0.07, 0.04],
        }
    }

    fn matrix(&self) -> Matrix5<f64> {
        Matrix5::from_diagonal(&Vector5::from(self.r))
    }
}

/// One stored forward-pass step. `transition` is the dynamics Jacobian used
/// to predict *into* this step from the previous one (identity at the first
/// step, where prior == posterior == the birth state).
#[derive(Debug, Clone)]
pub struct FilterStep {
    pub prior_state: TrackState,
    pub prior_cov: Covariance6,
    pub post_state: TrackState,
    pub post_cov: Covariance6,
    pub transition: Matrix6<f64>,
    pub ego: EgoMotion,
}

impl FilterStep {
    /// The step that opens a history: no prediction has happened yet.
    pub fn initial(state: TrackState, cov: Covariance6) -> Self {
        FilterStep {
            prior_state: state,
            prior_cov: cov,
            post_state: state,
            post_cov: cov,
            transition: Matrix6::identity(),
            ego: EgoMotion::stationary(1.0),
        }
    }

    /// Record a prediction that received no measurement.
    pub fn coasted(&mut self) {
        self.post_state = self.prior_state;
        self.post_cov = self.prior_cov;
    }
}

/// EKF time update: propagate the state and push the covariance through the
/// linearized dynamics plus discretized process noise.
pub fn predict(
    state: &TrackState,
    cov: &Covariance6,
    ego: &EgoMotion,
    q: &ProcessNoise,
) -> Result<(TrackState, Covariance6, Matrix6<f64>), FilterError> {
    let prior_state = propagate(state, ego)?;
    let f = jacobian_f(state, ego);
    let prior_cov = symmetrize(&(f * cov * f.transpose() + discrete_process_noise(state, ego, q)));
    Ok((prior_state, prior_cov, f))
}

/// Predicted detection for a state: box center sits `frac·l` ahead of the
/// back axle along the heading.
pub fn measurement_model(state: &TrackState, back_axle_fraction: f64) -> Measurement {
    let (sin_t, cos_t) = state.theta.sin_cos();
    let offset = back_axle_fraction * state.l;
    Measurement::new(
        state.x + offset * cos_t,
        state.y + offset * sin_t,
        state.theta,
        state.l,
        state.w,
    )
}

/// Jacobian of `measurement_model` with respect to the state (5x6).
pub fn measurement_jacobian(state: &TrackState, back_axle_fraction: f64) -> Matrix5x6 {
    let (sin_t, cos_t) = state.theta.sin_cos();
    let offset = back_axle_fraction * state.l;
    let mut h = Matrix5x6::zeros();
    h[(0, 0)] = 1.0;
    h[(0, 2)] = -offset * sin_t;
    h[(0, 4)] = back_axle_fraction * cos_t;
    h[(1, 1)] = 1.0;
    h[(1, 2)] = offset * cos_t;
    h[(1, 4)] = back_axle_fraction * sin_t;
    h[(2, 2)] = 1.0;
    h[(3, 4)] = 1.0;
    h[(4, 5)] = 1.0;
    h
}

/// Result of a measurement update.
#[derive(Debug, Clone)]
pub struct Update {
    pub state: TrackState,
    pub cov: Covariance6,
    /// Innovation after heading-flip resolution and wrapping.
    pub innovation: Vector5<f64>,
}

/// EKF measurement update with Joseph-form covariance.
///
/// Detectors routinely report headings flipped by π; if the wrapped heading
/// innovation exceeds π/2 the measurement heading is flipped to the nearest
/// representative before the update.
pub fn update(
    prior_state: &TrackState,
    prior_cov: &Covariance6,
    z: &Measurement,
    r: &MeasurementNoise,
    back_axle_fraction: f64,
) -> Result<Update, FilterError> {
    let h = measurement_jacobian(prior_state, back_axle_fraction);
    let predicted = measurement_model(prior_state, back_axle_fraction);

    let mut innovation = z.to_vector() - predicted.to_vector();
    let mut dtheta = wrap_angle(innovation[2]);
    if dtheta.abs() > std::f64::consts::FRAC_PI_2 {
        dtheta = wrap_angle(dtheta + std::f64::consts::PI);
    }
    innovation[2] = dtheta;

    let s = symmetrize5(&(h * prior_cov * h.transpose() + r.matrix()));
    let eig = s.symmetric_eigenvalues();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &ev in eig.iter() {
        lo = lo.min(ev);
        hi = hi.max(ev);
    }
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(FilterError::SingularInnovation { condition });
    }

    let s_inv = s.try_inverse().ok_or(FilterError::SingularInnovation {
        condition: f64::INFINITY,
    })?;
    let gain = prior_cov * h.transpose() * s_inv;

    let post = prior_state.to_vector() + gain * innovation;
    let post_state = TrackState::from_vector(&post);

    let ikh = Matrix6::identity() - gain * h;
    let post_cov = symmetrize(&(ikh * prior_cov * ikh.transpose() + gain * r.matrix() * gain.transpose()));

    Ok(Update {
        state: post_state,
        cov: post_cov,
        innovation,
    })
}

fn symmetrize5(m: &Matrix5<f64>) -> Matrix5<f64> {
    (m + m.transpose()) * 0.5
}

/// Factor a symmetric prior, loading the diagonal if it is not positive
/// definite (zero process-noise channels make priors singular).
fn solve_prior(
    prior: &Covariance6,
    rhs: &Matrix6<f64>,
) -> Matrix6<f64> {
    for boost in [0.0, PRIOR_REGULARIZATION, PRIOR_REGULARIZATION * 1e3] {
        let candidate = prior + Matrix6::identity() * boost;
        if let Some(chol) = nalgebra::Cholesky::new(candidate) {
            return chol.solve(rhs);
        }
    }
    // Last resort: pseudo-inverse via SVD.
    prior
        .pseudo_inverse(1e-12)
        .map(|pinv| pinv * rhs)
        .unwrap_or_else(|_| Matrix6::zeros())
}

/// Fixed-interval smoothing over a stored forward pass.
///
/// Backward recursion from the last posterior: the gain maps each posterior
/// through the next step's prior,
/// `C_k = P_{k|k}·F_kᵀ·P_{k+1|k}⁻¹`, the state pulls back the smoothed-minus-
/// prior difference (heading component wrapped), and the covariance follows
/// `P_{k|N} = P_{k|k} + C_k(P_{k+1|N} − P_{k+1|k})C_kᵀ`.
pub fn rts_smooth(history: &[FilterStep]) -> Vec<(TrackState, Covariance6)> {
    let n = history.len();
    if n == 0 {
        return Vec::new();
    }
    let mut out: Vec<(TrackState, Covariance6)> = Vec::with_capacity(n);
    out.push((history[n - 1].post_state, history[n - 1].post_cov));

    for k in (0..n - 1).rev() {
        let step = &history[k];
        let next = &history[k + 1];
        let (smoothed_next, smoothed_next_cov) = out[out.len() - 1];

        // C_k = P_{k|k} F_kᵀ P_{k+1|k}⁻¹, via a symmetric solve:
        // P_{k+1|k} · Cᵀ = F_k · P_{k|k}.
        let rhs = next.transition * step.post_cov;
        let gain = solve_prior(&next.prior_cov, &rhs).transpose();

        let mut diff = smoothed_next.to_vector() - next.prior_state.to_vector();
        diff[2] = wrap_angle(diff[2]);

        let state_vec = step.post_state.to_vector() + gain * diff;
        let state = TrackState::from_vector(&state_vec);

        let cov_diff = smoothed_next_cov - next.prior_cov;
        let cov = symmetrize(&(step.post_cov + gain * cov_diff * gain.transpose()));

        out.push((state, cov));
    }
    out.reverse();
    out
}
