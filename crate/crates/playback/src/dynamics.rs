//! Vehicle motion model expressed relative to a moving ego vehicle.
//!
//! The tracked vehicle is assumed to move at constant speed and heading in
//! the world frame; all time variation of the relative state comes from its
//! own world motion and the ego's motion. With ego rates (vx, vy, wz) the
//! relative-frame ODEs are
//!
//! ```text
//! ẋ = s·cos θ − vx + wz·y
//! ẏ = s·sin θ − vy − wz·x
//! θ̇ = −wz
//! ṡ = l̇ = ẇ = 0
//! ```
//!
//! discretized with a single forward-Euler step per frame.

use nalgebra::{Matrix6, SMatrix, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::wrap_angle;
use crate::types::Pose2;

/// 6x6 state covariance, component order (x, y, θ, s, l, w).
pub type Covariance6 = Matrix6<f64>;

/// Smallest allowed box extent after any state update, in meters.
pub const MIN_EXTENT: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
}

/// Filtered vehicle state: back-axle position and heading relative to the
/// ego reference point, absolute ground speed, and box extents.
///
/// Speed may go negative transiently (reversing vehicles, filter
/// over-corrections); clamping it would bias downstream smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    /// Longitudinal back-axle position, meters.
    pub x: f64,
    /// Lateral back-axle position, meters.
    pub y: f64,
    /// Heading relative to ego, radians in (−π, π].
    pub theta: f64,
    /// Absolute ground speed, m/s.
    pub s: f64,
    /// Box length, meters.
    pub l: f64,
    /// Box width, meters.
    pub w: f64,
}

impl TrackState {
    pub fn new(x: f64, y: f64, theta: f64, s: f64, l: f64, w: f64) -> Self {
        TrackState {
            x,
            y,
            theta: wrap_angle(theta),
            s,
            l: l.max(MIN_EXTENT),
            w: w.max(MIN_EXTENT),
        }
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        TrackState::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn to_vector(self) -> Vector6<f64> {
        Vector6::new(self.x, self.y, self.theta, self.s, self.l, self.w)
    }

    pub fn range(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Ego motion over one frame interval: body-frame rates expressed in the
/// earlier frame, plus the interval length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoMotion {
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
    pub dt: f64,
}

impl EgoMotion {
    pub fn stationary(dt: f64) -> Self {
        EgoMotion {
            vx: 0.0,
            vy: 0.0,
            wz: 0.0,
            dt,
        }
    }

    /// Finite-difference rates from two consecutive world-frame poses,
    /// expressed in the earlier pose's frame.
    pub fn from_poses(prev: &Pose2, next: &Pose2, dt: f64) -> Result<Self, DynamicsError> {
        if !(dt > 0.0) {
            return Err(DynamicsError::NonPositiveDt(dt));
        }
        let (dx, dy) = prev.world_to_local(next.x, next.y);
        let dyaw = wrap_angle(next.yaw - prev.yaw);
        Ok(EgoMotion {
            vx: dx / dt,
            vy: dy / dt,
            wz: dyaw / dt,
            dt,
        })
    }

    /// The same interval traversed in reverse: rates from differencing the
    /// pose pair in the opposite order, expressed in the later frame.
    pub fn reversed_interval(prev: &Pose2, next: &Pose2, dt: f64) -> Result<Self, DynamicsError> {
        EgoMotion::from_poses(next, prev, dt)
    }
}

/// Continuous-time process-noise intensities for the seven noise channels
/// (θ, s, ego-vx, ego-vy, ego-wz, l, w).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessNoise {
    pub e_theta: f64,
    pub e_s: f64,
    pub e_vx: f64,
    pub e_vy: f64,
    pub e_wz: f64,
    pub e_l: f64,
    pub e_w: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        ProcessNoise {
            e_theta: 0.1218,
            e_s: 1.0,
            e_vx: 0.00545,
            e_vy: 0.00545,
            e_wz: 0.00307,
            e_l: 0.01,
            e_w: 0.01,
        }
    }
}

impl ProcessNoise {
    pub fn zero() -> Self {
        ProcessNoise {
            e_theta: 0.0,
            e_s: 0.0,
            e_vx: 0.0,
            e_vy: 0.0,
            e_wz: 0.0,
            e_l: 0.0,
            e_w: 0.0,
        }
    }

    fn diagonal(&self) -> [f64; 7] {
        [
            self.e_theta,
            self.e_s,
            self.e_vx,
            self.e_vy,
            self.e_wz,
            self.e_l,
            self.e_w,
        ]
    }
}

fn derivative(state: &TrackState, ego: &EgoMotion) -> Vector6<f64> {
    let (sin_t, cos_t) = state.theta.sin_cos();
    Vector6::new(
        state.s * cos_t - ego.vx + ego.wz * state.y,
        state.s * sin_t - ego.vy - ego.wz * state.x,
        -ego.wz,
        0.0,
        0.0,
        0.0,
    )
}

/// One forward-Euler step of the relative-frame dynamics, with heading
/// re-wrapped afterwards.
pub fn propagate(state: &TrackState, ego: &EgoMotion) -> Result<TrackState, DynamicsError> {
    if !(ego.dt > 0.0) {
        return Err(DynamicsError::NonPositiveDt(ego.dt));
    }
    let v = state.to_vector() + derivative(state, ego) * ego.dt;
    Ok(TrackState::from_vector(&v))
}

/// Jacobian of `propagate` with respect to the state: F = I + dt·∂f/∂x.
pub fn jacobian_f(state: &TrackState, ego: &EgoMotion) -> Matrix6<f64> {
    let (sin_t, cos_t) = state.theta.sin_cos();
    let dt = ego.dt;
    let mut f = Matrix6::identity();
    f[(0, 1)] = ego.wz * dt;
    f[(0, 2)] = -state.s * sin_t * dt;
    f[(0, 3)] = cos_t * dt;
    f[(1, 0)] = -ego.wz * dt;
    f[(1, 2)] = state.s * cos_t * dt;
    f[(1, 3)] = sin_t * dt;
    f
}

/// Noise-input matrix mapping the seven noise channels onto the state.
/// The ego yaw-rate channel enters the position rows through the lever arm
/// (+y into x, −x into y).
fn noise_input(state: &TrackState) -> SMatrix<f64, 6, 7> {
    let mut l = SMatrix::<f64, 6, 7>::zeros();
    l[(2, 0)] = 1.0; // e_theta -> θ
    l[(3, 1)] = 1.0; // e_s -> s
    l[(0, 2)] = -1.0; // e_vx -> x
    l[(1, 3)] = -1.0; // e_vy -> y
    l[(2, 4)] = -1.0; // e_wz -> θ
    l[(0, 4)] = state.y;
    l[(1, 4)] = -state.x;
    l[(4, 5)] = 1.0; // e_l -> l
    l[(5, 6)] = 1.0; // e_w -> w
    l
}

/// Discretized process noise Q_d = L·diag(q)·Lᵀ·dt, symmetric PSD by
/// construction.
pub fn discrete_process_noise(
    state: &TrackState,
    ego: &EgoMotion,
    q: &ProcessNoise,
) -> Covariance6 {
    let l = noise_input(state);
    let d = SMatrix::<f64, 7, 7>::from_diagonal(&nalgebra::SVector::<f64, 7>::from(q.diagonal()));
    let qd = l * d * l.transpose() * ego.dt;
    symmetrize(&qd)
}

/// Average a matrix with its transpose; the covariance invariant everything
/// downstream relies on.
pub fn symmetrize(m: &Covariance6) -> Covariance6 {
    (m + m.transpose()) * 0.5
}
