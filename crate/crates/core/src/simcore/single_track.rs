//! Kinematic single-track (bicycle) vehicle model.
//!
//! `x' = v cos(theta)`, `y' = v sin(theta)`, `theta' = v tan(delta) / L`,
//! `v' = a`, with the steering angle held over a step.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::num::{wrap_angle, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    #[default]
    Heun,
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Integrator::Euler => "euler",
            Integrator::Heun => "heun",
        })
    }
}

impl FromStr for Integrator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "euler" | "explicit-euler" => Ok(Integrator::Euler),
            "heun" => Ok(Integrator::Heun),
            _ => Err(format!("unknown integrator `{s}` (expected euler or heun)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicState<T> {
    pub position: Vec2<T>,
    /// theta [rad]
    pub heading: T,
    /// v [m/s], never negative
    pub speed: T,
    /// delta [rad], the steering angle applied during the last step
    pub steer: T,
}

impl<T: Real> KinematicState<T> {
    pub fn new(position: Vec2<T>, heading: T, speed: T) -> Self {
        Self {
            position,
            heading,
            speed,
            steer: T::zero(),
        }
    }

    pub fn velocity(&self) -> Vec2<T> {
        Vec2::from_angle(self.heading) * self.speed
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.heading.is_finite() && self.speed.is_finite() && self.steer.is_finite()
    }
}

#[derive(Clone, Copy)]
struct Rate<T> {
    pos: Vec2<T>,
    heading: T,
}

fn rate<T: Real>(heading: T, speed: T, steer: T, wheelbase: T) -> Rate<T> {
    let v = speed.max(T::zero());
    Rate {
        pos: Vec2::from_angle(heading) * v,
        heading: v * steer.tan() / wheelbase,
    }
}

/// Advances the state by `dt` under constant acceleration and steering.
pub fn integrate<T: Real>(state: &KinematicState<T>, accel: T, steer: T, wheelbase: T, dt: T, integrator: Integrator) -> KinematicState<T> {
    let k1 = rate(state.heading, state.speed, steer, wheelbase);
    let speed_end = (state.speed + accel * dt).max(T::zero());
    let (pos, heading) = match integrator {
        Integrator::Euler => (state.position + k1.pos * dt, state.heading + k1.heading * dt),
        Integrator::Heun => {
            let h1 = state.heading + k1.heading * dt;
            let k2 = rate(h1, speed_end, steer, wheelbase);
            let half = T::half() * dt;
            (state.position + (k1.pos + k2.pos) * half, state.heading + (k1.heading + k2.heading) * half)
        }
    };
    KinematicState {
        position: pos,
        heading: wrap_angle(heading),
        speed: speed_end,
        steer,
    }
}

/// Pure-pursuit steering angle that puts `target` on the vehicle's arc.
pub fn pure_pursuit_steer<T: Real>(position: Vec2<T>, heading: T, target: Vec2<T>, wheelbase: T) -> T {
    let d = target - position;
    let l = d.norm();
    if l <= T::epsilon() {
        return T::zero();
    }
    let alpha = wrap_angle(d.angle() - heading);
    (T::two() * wheelbase * alpha.sin()).atan2(l)
}

/// Largest steering magnitude allowed at `speed`: the mechanical limit, and
/// the angle at which `v^2 tan(delta) / L` reaches `max_lateral_accel`.
pub fn steer_limit<T: Real>(speed: T, max_lateral_accel: T, wheelbase: T, max_steer: T) -> T {
    let v2 = speed * speed;
    if v2 <= T::epsilon() {
        return max_steer;
    }
    (max_lateral_accel * wheelbase / v2).atan().min(max_steer)
}

/// Lateral acceleration `v^2 tan(delta) / L`.
pub fn lateral_accel<T: Real>(speed: T, steer: T, wheelbase: T) -> T {
    speed * speed * steer.tan() / wheelbase
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_euler_step() {
        let s = KinematicState::new(Vec2::new(0.0, 0.0), 0.0f64, 10.0);
        let n = integrate(&s, 0.0, 0.0, 2.8, 1.0, Integrator::Euler);
        assert_eq!(n.position, Vec2::new(10.0, 0.0));
    }

    #[test]
    fn speed_never_negative() {
        let s = KinematicState::new(Vec2::zero(), 0.0f32, 1.0);
        let n = integrate(&s, -10.0, 0.0, 2.8, 1.0, Integrator::Heun);
        assert_eq!(n.speed, 0.0);
    }

    #[test]
    fn pure_pursuit_straight_ahead_is_zero() {
        let d = pure_pursuit_steer(Vec2::zero(), 0.0f64, Vec2::new(5.0, 0.0), 2.8);
        assert_eq!(d, 0.0);
        assert!(pure_pursuit_steer(Vec2::zero(), 0.0f64, Vec2::new(5.0, 1.0), 2.8) > 0.0);
    }

    #[test]
    fn steer_limit_bounds_lateral_accel() {
        let lim = steer_limit(10.0f64, 3.0, 2.8, 0.6);
        assert!((lateral_accel(10.0, lim, 2.8) - 3.0).abs() < 1e-12);
        assert_eq!(steer_limit(0.0f64, 3.0, 2.8, 0.6), 0.6);
    }
}
