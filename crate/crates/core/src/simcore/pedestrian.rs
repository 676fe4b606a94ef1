//! Social-force law for pedestrians.
//!
//! `F = (v0 * e_goal - v) / tau + sum_j A exp((r_i + r_j - d_ij) / B) n_ij
//!    + sum_w A exp((r_i - d_iw) / B) n_iw`,
//! with `n` pointing away from the neighbor or wall. Forces are accelerations.

use crate::geom::{point_segment_distance, Vec2};
use crate::num::Real;

use super::params::PedestrianParams;

/// A disc-shaped neighbor (another pedestrian, or a vehicle approximated by a disc).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscNeighbor<T> {
    pub position: Vec2<T>,
    pub radius: T,
}

/// Wall segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle<T> {
    pub a: Vec2<T>,
    pub b: Vec2<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PedestrianForce<T> {
    pub driving: Vec2<T>,
    pub interaction: Vec2<T>,
    pub boundary: Vec2<T>,
    /// A neighbor sat exactly on this agent; the fallback direction was used.
    pub coincident: bool,
}

impl<T: Real> PedestrianForce<T> {
    pub fn total(&self) -> Vec2<T> {
        self.driving + self.interaction + self.boundary
    }
}

/// Unit vector toward `goal`, or zero when already there.
pub fn goal_direction<T: Real>(position: Vec2<T>, goal: Vec2<T>) -> Vec2<T> {
    (goal - position).normalized().unwrap_or_else(Vec2::zero)
}

/// Exponential repulsion magnitude `A exp((r - d) / B)`.
pub fn exp_repulsion<T: Real>(strength: T, range: T, radius_sum: T, distance: T) -> T {
    strength * ((radius_sum - distance) / range).exp()
}

/// Net force on a pedestrian at `position` moving with `velocity`.
///
/// `heading` is only used for the fallback direction of a coincident
/// neighbor: the repulsion then points to the left of the heading with its
/// contact-distance magnitude `A exp((r_i + r_j) / B)`.
pub fn pedestrian_force<T: Real>(
    position: Vec2<T>,
    velocity: Vec2<T>,
    heading: T,
    params: &PedestrianParams<T>,
    goal: Vec2<T>,
    neighbors: &[DiscNeighbor<T>],
    obstacles: &[Obstacle<T>],
) -> PedestrianForce<T> {
    let driving = (goal_direction(position, goal) * params.desired_speed - velocity) / params.relaxation_time;
    let mut interaction = Vec2::zero();
    let mut coincident = false;
    for n in neighbors {
        let diff = position - n.position;
        let d = diff.norm();
        let r = params.radius + n.radius;
        let dir = if d > T::zero() {
            diff / d
        } else {
            coincident = true;
            Vec2::from_angle(heading).perp()
        };
        interaction += dir * exp_repulsion(params.repulsion_strength, params.repulsion_range, r, d);
    }
    let mut boundary = Vec2::zero();
    for w in obstacles {
        let (d, t) = point_segment_distance(position, w.a, w.b);
        let closest = w.a.lerp(w.b, t);
        let dir = match (position - closest).normalized() {
            Some(u) => u,
            None => (w.b - w.a).normalized().map(|u| u.perp()).unwrap_or_else(Vec2::zero),
        };
        boundary += dir * exp_repulsion(params.repulsion_strength, params.repulsion_range, params.radius, d);
    }
    PedestrianForce {
        driving,
        interaction,
        boundary,
        coincident,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_at_desired_velocity() {
        let p = PedestrianParams::<f64>::default();
        let f = pedestrian_force(Vec2::zero(), Vec2::new(p.desired_speed, 0.0), 0.0, &p, Vec2::new(10.0, 0.0), &[], &[]);
        assert!(f.total().norm() < 1e-12);
    }

    #[test]
    fn coincident_neighbor_uses_left_fallback() {
        let p = PedestrianParams::<f64>::default();
        let n = [DiscNeighbor { position: Vec2::zero(), radius: 0.3 }];
        let f = pedestrian_force(Vec2::zero(), Vec2::zero(), 0.0, &p, Vec2::zero(), &n, &[]);
        assert!(f.coincident);
        let expect = p.repulsion_strength * (0.6f64 / p.repulsion_range).exp();
        assert!((f.interaction.y - expect).abs() < 1e-9 && f.interaction.x.abs() < 1e-12);
    }

    #[test]
    fn wall_pushes_away() {
        let p = PedestrianParams::<f32>::default();
        let w = [Obstacle { a: Vec2::new(-5.0, 1.0), b: Vec2::new(5.0, 1.0) }];
        let f = pedestrian_force(Vec2::zero(), Vec2::zero(), 0.0, &p, Vec2::zero(), &[], &w);
        assert!(f.boundary.y < 0.0);
    }
}
