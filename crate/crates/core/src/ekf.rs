//! Constant-velocity extended Kalman filter for UAV and dynamic-obstacle
//! tracks, and closed-form collision prediction between tracks.
//!
//! State is `[x, y, vx, vy]`, measurements are positions. The planar,
//! fixed-altitude model is linear, so the Jacobians are the transition and
//! measurement matrices themselves; the predict/update structure is kept so
//! a turn-rate model can replace it.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Disk, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EkfConfig {
    /// White-noise acceleration intensity, m²/s³.
    pub q_proc: f64,
    /// Position measurement variance, m².
    pub r_meas: f64,
    pub initial_position_var: f64,
    pub initial_velocity_var: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            q_proc: 0.5,
            r_meas: 4.0,
            initial_position_var: 25.0,
            initial_velocity_var: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EkfTrack {
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    pub q_proc: f64,
    pub r_meas: f64,
    pub last_update: f64,
}

fn transition(dt: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    f
}

fn process_noise(q: f64, dt: f64) -> Matrix4<f64> {
    let a = dt * dt * dt / 3.0;
    let b = dt * dt / 2.0;
    let mut m = Matrix4::zeros();
    m[(0, 0)] = a;
    m[(1, 1)] = a;
    m[(0, 2)] = b;
    m[(2, 0)] = b;
    m[(1, 3)] = b;
    m[(3, 1)] = b;
    m[(2, 2)] = dt;
    m[(3, 3)] = dt;
    m * q
}

fn measurement_matrix() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

impl EkfTrack {
    pub fn new(position: Point, velocity: Point, t: f64, config: &EkfConfig) -> Self {
        let covariance = Matrix4::from_diagonal(&Vector4::new(
            config.initial_position_var,
            config.initial_position_var,
            config.initial_velocity_var,
            config.initial_velocity_var,
        ));
        Self {
            mean: Vector4::new(position.x, position.y, velocity.x, velocity.y),
            covariance,
            q_proc: config.q_proc,
            r_meas: config.r_meas,
            last_update: t,
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> Point {
        Point::new(self.mean[2], self.mean[3])
    }

    pub fn covariance_trace(&self) -> f64 {
        self.covariance.trace()
    }

    /// Symmetric within 1e−9 and positive definite.
    pub fn covariance_is_spd(&self) -> bool {
        let p = &self.covariance;
        let sym = (p - p.transpose()).abs().max() <= 1e-9 * p.abs().max().max(1.0);
        sym && p.clone().cholesky().is_some()
    }

    /// Constant-velocity propagation by `dt` seconds.
    pub fn predict(&self, dt: f64) -> EkfTrack {
        let f = transition(dt);
        let mut next = self.clone();
        next.mean = f * self.mean;
        let p = f * self.covariance * f.transpose() + process_noise(self.q_proc, dt);
        next.covariance = 0.5 * (p + p.transpose());
        next.last_update = self.last_update + dt;
        next
    }

    /// Position update; returns the updated track and the innovation.
    pub fn update_with_innovation(&self, z: Point) -> Result<(EkfTrack, Vector2<f64>)> {
        if !z.is_finite() {
            return Err(Error::NonPsdCovariance);
        }
        let h = measurement_matrix();
        let r = Matrix2::identity() * self.r_meas;
        let p = self.covariance;
        let innovation = Vector2::new(z.x, z.y) - h * self.mean;
        let s = h * p * h.transpose() + r;
        let s_inv = s.try_inverse().ok_or(Error::NonPsdCovariance)?;
        let k = p * h.transpose() * s_inv;
        let mut next = self.clone();
        next.mean = self.mean + k * innovation;
        // Joseph form keeps the covariance symmetric positive definite
        let i_kh = Matrix4::identity() - k * h;
        let joseph = i_kh * p * i_kh.transpose() + k * r * k.transpose();
        next.covariance = 0.5 * (joseph + joseph.transpose());
        if !next.covariance_is_spd() {
            return Err(Error::NonPsdCovariance);
        }
        Ok((next, innovation))
    }

    pub fn update(&self, z: Point) -> Result<EkfTrack> {
        self.update_with_innovation(z).map(|(t, _)| t)
    }
}

/// What a UAV may collide with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThreatId {
    Obstacle(usize),
    Uav(usize),
}

/// A threat moving linearly (track mean) or standing still (static disk).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threat {
    pub id: ThreatId,
    pub position: Point,
    pub velocity: Point,
    pub radius: f64,
}

impl Threat {
    pub fn from_track(id: ThreatId, track: &EkfTrack, radius: f64) -> Self {
        Self {
            id,
            position: track.position(),
            velocity: track.velocity(),
            radius,
        }
    }

    pub fn from_disk(id: ThreatId, disk: &Disk) -> Self {
        Self {
            id,
            position: disk.center,
            velocity: Point::ZERO,
            radius: disk.radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionAlert {
    pub subject: usize,
    pub threat: ThreatId,
    pub min_distance: f64,
    pub time_to_closest: f64,
    pub horizon: f64,
}

/// Predicts the closest approach between a UAV (position, velocity) and a
/// threat over `[0, horizon]` by propagating both linearly; alerts when the
/// predicted surface distance falls below `d_min`.
pub fn check_collision(subject: usize, uav_position: Point, uav_velocity: Point, threat: &Threat, d_min: f64, horizon: f64) -> Option<CollisionAlert> {
    let r0 = threat.position - uav_position;
    let v = threat.velocity - uav_velocity;
    let vv = v.norm_sq();
    let t_star = if vv > 0.0 { (-r0.dot(v) / vv).clamp(0.0, horizon) } else { 0.0 };
    let min_distance = (r0 + v * t_star).norm() - threat.radius;
    (min_distance < d_min).then_some(CollisionAlert {
        subject,
        threat: threat.id,
        min_distance,
        time_to_closest: t_star,
        horizon,
    })
}

/// [`check_collision`] with a UAV track as the subject.
pub fn check_track_collision(subject: usize, uav: &EkfTrack, threat: &Threat, d_min: f64, horizon: f64) -> Option<CollisionAlert> {
    check_collision(subject, uav.position(), uav.velocity(), threat, d_min, horizon)
}
