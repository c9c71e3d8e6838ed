//! Fixed-timestep rigid-body world.
//!
//! Dynamic bodies fall under gravity and exchange impulses through a
//! sequential-impulse contact solver. Collision objects are immovable. Robot
//! links are kinematic colliders that follow position-controlled joints; their
//! surface velocity enters the friction constraints. Contacts between a robot
//! link and an immovable body cannot be resolved by impulses, so they are
//! reported through a penalty force for the force-torque sensors.

pub mod collide;
mod solver;
mod world;

use serde::{Deserialize, Serialize};

pub use collide::{collide, pair_supported, RawContact};
pub use world::{
    Body, ColliderId, ContactPoint, RobotInstance, SimWorld, StepReport, VisualObject, WorldCommand, WorldError,
};

use crate::math::{Pose, Twist, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialParams {
    pub friction: f64,
    pub restitution: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            friction: 0.5,
            restitution: 0.0,
        }
    }
}

impl MaterialParams {
    pub fn new(friction: f64, restitution: f64) -> Self {
        Self { friction, restitution }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.friction >= 0.0 && self.friction.is_finite()) {
            return Err(format!("friction must be non-negative, got {}", self.friction));
        }
        if !(0.0..=1.0).contains(&self.restitution) {
            return Err(format!("restitution must lie in [0, 1], got {}", self.restitution));
        }
        Ok(())
    }

    /// Pair coefficients: geometric-mean friction, larger restitution.
    pub fn combine(&self, o: &MaterialParams) -> (f64, f64) {
        ((self.friction * o.friction).sqrt(), self.restitution.max(o.restitution))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidBodyState {
    pub pose: Pose,
    pub twist: Twist,
    pub mass: f64,
    /// Principal moments in the body frame.
    pub inertia_diag: Vec3,
    pub material: MaterialParams,
    /// Kinematic bodies ignore forces and keep their prescribed twist.
    pub kinematic: bool,
}

impl RigidBodyState {
    pub fn kinetic_energy(&self) -> f64 {
        if self.kinematic {
            return 0.0;
        }
        let w_body = self.pose.rotation.inverse().rotate(self.twist.angular);
        0.5 * self.mass * self.twist.linear.norm_squared() + 0.5 * w_body.component_mul(w_body).dot(self.inertia_diag)
    }
}

/// Exact simulation time base: one step lasts `num / den` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timebase {
    num: u64,
    den: u64,
}

impl Timebase {
    /// Steps of `1/rate` seconds are represented exactly when `1/dt` is an
    /// integer rate; other values round to whole nanoseconds.
    pub fn from_seconds(dt: f64) -> Self {
        let rate = 1.0 / dt;
        if (rate - rate.round()).abs() < 1e-6 * rate && rate.round() >= 1.0 {
            Self {
                num: 1,
                den: rate.round() as u64,
            }
        } else {
            Self {
                num: (dt * 1e9).round().max(1.0) as u64,
                den: 1_000_000_000,
            }
        }
    }

    pub fn dt(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Time at the end of `steps` steps, floored to whole nanoseconds.
    pub fn time_ns(&self, steps: u64) -> u64 {
        (steps as u128 * self.num as u128 * 1_000_000_000u128 / self.den as u128) as u64
    }

    /// Steps per second when that is a whole number.
    pub fn rate_hz(&self) -> Option<u64> {
        (self.num == 1).then_some(self.den)
    }

    /// Number of completed steps at or before `ns`.
    pub fn steps_at(&self, ns: u64) -> u64 {
        (ns as u128 * self.den as u128 / (self.num as u128 * 1_000_000_000u128)) as u64
    }
}
