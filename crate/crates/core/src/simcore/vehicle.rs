//! Social-force vehicle model: longitudinal and lateral demands.
//!
//! The longitudinal demand is the most restrictive of a set of terms, each an
//! acceleration: relaxation toward the desired speed, curve and speed-limit
//! envelopes, kinematic braking behind a slower leader, stopping for priority
//! traffic at the yield line and stopping for pedestrians on a crosswalk.
//! Exponential repulsion from agents ahead in the corridor is added on top. The lateral demand is a target offset from the route
//! centerline, tracked by a spring-damper.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{wrap_angle, Real};
use crate::trajdata::{AgentKind, TrafficSpace};
use crate::Vec2d;

use super::params::VehicleParams;
use super::route::{Route, RouteConflict};
use super::single_track::KinematicState;

/// Standstill distance kept to an obstacle ahead [m].
const STANDSTILL_GAP: f64 = 1.0;
/// Clearance added around conflict-area occupancy predictions [m].
const OCCUPANCY_MARGIN: f64 = 0.5;
/// Within this distance of a stop line a yielding vehicle brakes fully [m].
const HOLD_DISTANCE: f64 = 0.3;
/// Stop this far before a crosswalk [m].
const CROSSWALK_SETBACK: f64 = 1.0;

/// Switches for the individual force terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForceTerms {
    pub curve: bool,
    pub following: bool,
    pub priority: bool,
    pub crosswalk: bool,
    pub vru_shy: bool,
    pub boundary: bool,
}

impl Default for ForceTerms {
    fn default() -> Self {
        Self {
            curve: true,
            following: true,
            priority: true,
            crosswalk: true,
            vru_shy: true,
            boundary: true,
        }
    }
}

/// Read-only view of an agent at the start of a step.
#[derive(Debug, Clone)]
pub struct AgentView {
    pub id: i64,
    pub kind: AgentKind,
    pub length: f64,
    pub width: f64,
    pub state: KinematicState<f64>,
    pub route: Option<Arc<Route>>,
    /// Arc length along `route`.
    pub s: f64,
}

impl AgentView {
    pub fn radius(&self, pedestrian_radius: f64) -> f64 {
        if self.kind == AgentKind::Pedestrian {
            pedestrian_radius
        } else {
            0.5 * self.width
        }
    }

    /// Half extent of the footprint along direction `dir` (unit vector).
    pub fn half_extent_along(&self, dir: Vec2d, pedestrian_radius: f64) -> f64 {
        if self.kind == AgentKind::Pedestrian {
            return pedestrian_radius;
        }
        let h = Vec2d::from_angle(self.state.heading);
        0.5 * self.length * h.dot(dir).abs() + 0.5 * self.width * h.cross(dir).abs()
    }
}

/// Per-term breakdown of a vehicle's demand; unconstrained terms are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DemandTerms {
    pub free: f64,
    pub curve: Option<f64>,
    /// Kinematic braking needed to match the speed of the closest leader.
    pub following: Option<f64>,
    /// Summed exponential repulsion from agents ahead in the corridor (<= 0).
    pub repulsion: f64,
    pub priority: Option<f64>,
    pub crosswalk: Option<f64>,
    pub vru_shift: f64,
    pub boundary_shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleDemand {
    /// Longitudinal acceleration demand, clamped to `[-max_decel, max_accel]`.
    pub accel: f64,
    /// Target lateral offset from the route centerline (left positive).
    pub lateral_offset: f64,
    pub terms: DemandTerms,
}

/// Curve speed `sqrt(a_lat / |kappa|)`; infinite on straight segments.
pub fn curve_speed<T: Real>(max_lateral_accel: T, curvature: T) -> T {
    let k = curvature.abs();
    if k <= T::lit(1e-6) {
        T::infinity()
    } else {
        (max_lateral_accel / k).sqrt()
    }
}

/// Constant deceleration that brings `v` down to `target` over `distance`;
/// zero when already at or below the target. Distances under one meter are
/// treated as one meter so the term stays a finite proportional controller.
pub fn kinematic_decel<T: Real>(v: T, target: T, distance: T) -> T {
    if v <= target {
        return T::zero();
    }
    -(v * v - target * target) / (T::two() * distance.max(T::one()))
}

/// Deceleration needed to stop exactly within `distance`.
pub fn stopping_decel<T: Real>(v: T, distance: T) -> T {
    if distance <= T::zero() {
        return T::neg_infinity();
    }
    -(v * v) / (T::two() * distance)
}

/// Lateral offset target and longitudinal demand for one vehicle.
#[allow(clippy::too_many_arguments)]
pub fn vehicle_force(
    me: &AgentView,
    params: &VehicleParams<f64>,
    route: &Route,
    lateral: f64,
    preferred_offset: f64,
    others: &[AgentView],
    space: &TrafficSpace,
    terms: ForceTerms,
    pedestrian_radius: f64,
) -> Result<VehicleDemand> {
    let s = me.s;
    let v = me.state.speed;
    let lane_width = route.lane_width_at(space, s);
    if lateral.abs() > 1.5 * lane_width + 2.0 {
        return Err(Error::OffRoute {
            agent_id: me.id,
            detail: format!("{lateral:.2} m from the route centerline at s = {s:.2}"),
        });
    }
    let front = s + 0.5 * me.length;
    let mut t = DemandTerms {
        free: (params.desired_speed.min(route.speed_limit_at(space, s)) - v) / params.relaxation_time,
        ..Default::default()
    };

    let horizon = v * v / params.max_decel + 15.0;
    if terms.curve {
        let mut worst = f64::INFINITY;
        let mut d = 0.0;
        while d <= horizon {
            let sd = s + d;
            if sd > route.length() {
                break;
            }
            let vc = curve_speed(params.max_lateral_accel, route.path.curvature_at(sd)).min(route.speed_limit_at(space, sd));
            worst = worst.min(kinematic_decel(v, vc, d));
            d += 1.0;
        }
        if worst < 0.0 {
            t.curve = Some(worst);
        }
    }

    if terms.following {
        (t.following, t.repulsion) = following_term(me, params, route, lateral, others, horizon.max(30.0), pedestrian_radius);
    }
    if terms.priority {
        t.priority = priority_yield(me, params, route, others, space).and_then(|d| stop_demand(v, d, params.max_decel));
    }
    if terms.crosswalk {
        t.crosswalk = crosswalk_term(me, params, route, others, space, pedestrian_radius, front);
    }

    let mut accel = t.free;
    for c in [t.curve, t.following, t.priority, t.crosswalk].into_iter().flatten() {
        accel = accel.min(c);
    }
    let accel = (accel + t.repulsion).clamp(-params.max_decel, params.max_accel);

    // lateral target
    let cap = (0.5 * (lane_width - me.width)).max(0.0);
    let mut target = preferred_offset;
    if terms.vru_shy {
        t.vru_shift = vru_shift(me, params, route, lateral, others, pedestrian_radius);
        target += t.vru_shift;
    }
    if terms.boundary {
        // both lane edges push inward; they cancel on the centerline
        let edge = |gap: f64| params.boundary_repulsion_strength * (-gap.max(0.0) / params.boundary_repulsion_range).exp();
        t.boundary_shift = edge(cap + target) - edge(cap - target);
        target += t.boundary_shift;
    }
    let lateral_offset = target.clamp(-cap, cap);

    Ok(VehicleDemand {
        accel,
        lateral_offset,
        terms: t,
    })
}

/// Demand for stopping with the front at `distance` ahead, or `None` when the
/// vehicle cannot stop comfortably any more and commits.
fn stop_demand(v: f64, distance: f64, max_decel: f64) -> Option<f64> {
    if distance < HOLD_DISTANCE {
        return Some(-max_decel);
    }
    let a = stopping_decel(v, distance);
    (a >= -max_decel).then_some(a)
}

fn following_term(
    me: &AgentView,
    params: &VehicleParams<f64>,
    route: &Route,
    lateral: f64,
    others: &[AgentView],
    reach: f64,
    pedestrian_radius: f64,
) -> (Option<f64>, f64) {
    let v = me.state.speed;
    let mut closing: Option<f64> = None;
    let mut repulsion = 0.0;
    let s_hi = (me.s + reach).min(route.length());
    for o in others {
        if o.id == me.id || o.state.position.dist(me.state.position) > reach + o.length + me.length {
            continue;
        }
        let pr = route.path.project_window(o.state.position, me.s, s_hi);
        let along = pr.s - me.s;
        // exactly level agents are resolved by id so that exactly one of them leads
        if along < 0.0 || (along == 0.0 && o.id < me.id) || pr.s >= route.length() - 1e-9 && pr.distance > 0.5 * me.width + o.length {
            continue;
        }
        let tangent = route.path.tangent_at(pr.s);
        let o_half_lat = o.half_extent_along(tangent.perp(), pedestrian_radius);
        if (pr.lateral - lateral).abs() > 0.5 * me.width + o_half_lat + 0.3 {
            continue;
        }
        let gap = along - 0.5 * me.length - o.half_extent_along(tangent, pedestrian_radius) - STANDSTILL_GAP;
        let v_lead = o.state.velocity().dot(tangent).max(0.0);
        let need = if gap <= 0.0 {
            Some(-params.max_decel)
        } else if v > v_lead {
            Some(-(v - v_lead).powi(2) / (2.0 * gap))
        } else {
            None
        };
        if let Some(need) = need {
            closing = Some(closing.map_or(need, |c: f64| c.min(need)));
        }
        // the repulsion range stretches with speed: the gap kept grows by v * tau
        let effective = gap - v * params.relaxation_time;
        repulsion -= params.agent_repulsion_strength * (-effective.max(0.0) / params.agent_repulsion_range).exp()
            * if effective < 0.0 { 1.0 - effective / params.agent_repulsion_range } else { 1.0 };
    }
    (closing, repulsion)
}

/// Time to cover `d` starting at `v`, accelerating at `a` up to `v_cap`.
pub fn travel_time(d: f64, v: f64, a: f64, v_cap: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    let v_cap = v_cap.max(v).max(1e-3);
    if a <= 0.0 || v >= v_cap {
        return d / v.max(1e-3);
    }
    let d_acc = (v_cap * v_cap - v * v) / (2.0 * a);
    if d <= d_acc {
        (-v + (v * v + 2.0 * a * d).sqrt()) / a
    } else {
        (v_cap - v) / a + (d - d_acc) / v_cap
    }
}

/// Distance an agent still has to travel to the point `other_s` on lane `lane`,
/// or `None` when it is not heading there.
fn distance_to_lane_point(o: &AgentView, space: &TrafficSpace, lane: usize, other_s: f64) -> Option<f64> {
    if let Some(r) = &o.route {
        if let Some(start) = r.lane_start(lane) {
            return Some(start + other_s - o.s);
        }
        if !r.lanes.is_empty() {
            return None;
        }
    }
    // no lane information: match the pose against the lane and its predecessors
    let l = &space.lanes[lane];
    let on = |c: &crate::geom::Polyline<f64>| {
        let pr = c.project(o.state.position);
        let dh = wrap_angle(c.heading_at(pr.s) - o.state.heading).abs();
        (pr.distance <= 0.5 * l.width + 0.5 && dh < std::f64::consts::FRAC_PI_4).then_some(pr.s)
    };
    if let Some(s) = on(&l.centerline) {
        return Some(other_s - s);
    }
    for p in &space.lanes {
        if p.successors.contains(&l.id) {
            if let Some(s) = on(&p.centerline) {
                return Some(p.centerline.length() - s + other_s);
            }
        }
    }
    None
}

/// Whether another agent has already passed the yield line in front of `lane`.
fn committed(o: &AgentView, lane: usize) -> bool {
    o.route
        .as_ref()
        .and_then(|r| r.route_lane(lane))
        .and_then(|l| l.entry_yield_line)
        .is_some_and(|y| o.s + 0.5 * o.length > y)
}

/// Distance from the front bumper to the yield line when the vehicle has to
/// give way there, `None` otherwise.
///
/// Own arrival at each conflict is predicted with full acceleration from the
/// current speed; other agents are predicted at constant speed. A conflict
/// requires yielding when the two occupancy intervals, padded by the yield
/// gap, overlap. Lower-priority agents that already passed their own yield
/// line are treated as priority traffic.
pub fn priority_yield(me: &AgentView, params: &VehicleParams<f64>, route: &Route, others: &[AgentView], space: &TrafficSpace) -> Option<f64> {
    let front = me.s + 0.5 * me.length;
    let mut stop_at: Option<f64> = None;
    for c in &route.conflicts {
        let Some(line) = c.yield_line else { continue };
        if front >= line || me.s > c.s {
            continue;
        }
        if must_yield_at(me, params, route, c, others, space) {
            let d = line - front;
            stop_at = Some(stop_at.map_or(d, |x: f64| x.min(d)));
        }
    }
    stop_at
}

fn must_yield_at(me: &AgentView, params: &VehicleParams<f64>, route: &Route, c: &RouteConflict, others: &[AgentView], space: &TrafficSpace) -> bool {
    let v = me.state.speed;
    let d_c = c.s - me.s;
    let v_cap = params.desired_speed.min(curve_speed(params.max_lateral_accel, route.path.curvature_at(c.s)));
    for o in others {
        if o.id == me.id || o.kind == AgentKind::Pedestrian {
            continue;
        }
        if !(c.other_has_priority || committed(o, c.other_lane)) {
            continue;
        }
        let Some(d_o) = distance_to_lane_point(o, space, c.other_lane, c.other_s) else {
            continue;
        };
        let me_ext = 0.5 * me.length + 0.5 * o.width + OCCUPANCY_MARGIN;
        let o_ext = 0.5 * o.length + 0.5 * me.width + OCCUPANCY_MARGIN;
        if d_o + o_ext < 0.0 {
            continue; // already through
        }
        let v_o = o.state.speed;
        let (b0, b1) = if d_o - o_ext <= 0.0 {
            (0.0, if v_o > 0.1 { (d_o + o_ext) / v_o } else { f64::INFINITY })
        } else if v_o > 0.1 {
            ((d_o - o_ext) / v_o, (d_o + o_ext) / v_o)
        } else {
            continue; // standing outside the area
        };
        let a0 = travel_time(d_c - me_ext, v, params.max_accel, v_cap);
        let a1 = travel_time(d_c + me_ext, v, params.max_accel, v_cap);
        let gap = params.yield_gap;
        if a0 < b1 + gap && b0 < a1 + gap {
            return true;
        }
    }
    false
}

fn crosswalk_term(
    me: &AgentView,
    params: &VehicleParams<f64>,
    route: &Route,
    others: &[AgentView],
    space: &TrafficSpace,
    pedestrian_radius: f64,
    front: f64,
) -> Option<f64> {
    let v = me.state.speed;
    let mut worst: Option<f64> = None;
    for cw in &route.crosswalks {
        if front >= cw.s_entry || me.s > cw.s_exit {
            continue;
        }
        let poly = &space.crosswalks[cw.crosswalk];
        let mid = route.path.point_at(0.5 * (cw.s_entry + cw.s_exit));
        let tangent = route.path.tangent_at(0.5 * (cw.s_entry + cw.s_exit));
        let occupied = others.iter().any(|o| {
            if o.kind != AgentKind::Pedestrian {
                return false;
            }
            let p = o.state.position;
            let inside = crate::geom::point_in_polygon(poly, p) || polygon_distance(poly, p) <= pedestrian_radius + 0.5;
            if !inside {
                return false;
            }
            let lat = tangent.cross(p - mid);
            let lat_speed = tangent.cross(o.state.velocity());
            let near = lat.abs() <= 0.5 * me.width + 2.5;
            let approaching = lat * lat_speed < 0.0;
            near || approaching
        });
        if occupied {
            if let Some(a) = stop_demand(v, cw.s_entry - CROSSWALK_SETBACK - front, params.max_decel) {
                worst = Some(worst.map_or(a, |w: f64| w.min(a)));
            }
        }
    }
    worst
}

fn polygon_distance(poly: &[Vec2d], p: Vec2d) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| crate::geom::point_segment_distance(p, poly[i], poly[(i + 1) % n]).0)
        .fold(f64::INFINITY, f64::min)
}

fn vru_shift(me: &AgentView, params: &VehicleParams<f64>, route: &Route, lateral: f64, others: &[AgentView], pedestrian_radius: f64) -> f64 {
    let mut shift: f64 = 0.0;
    let s_hi = (me.s + 15.0).min(route.length());
    for o in others {
        if o.id == me.id || !o.kind.is_vru() || o.state.position.dist(me.state.position) > 20.0 {
            continue;
        }
        let pr = route.path.project_window(o.state.position, me.s, s_hi);
        if pr.s - me.s <= -0.5 * me.length {
            continue;
        }
        let rel = pr.lateral - lateral;
        let gap = rel.abs() - 0.5 * me.width - o.radius(pedestrian_radius);
        if gap < params.vru_shy_distance && gap > -0.5 * me.width {
            let s = -(params.vru_shy_distance - gap) * rel.signum();
            if s.abs() > shift.abs() {
                shift = s;
            }
        }
    }
    shift
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use crate::trajdata::Compass;

    fn view(id: i64, route: Arc<Route>, s: f64, v: f64) -> AgentView {
        let p = route.path.point_at(s);
        AgentView {
            id,
            kind: AgentKind::Car,
            length: 4.5,
            width: 1.8,
            state: KinematicState::new(p, route.path.heading_at(s), v),
            route: Some(route),
            s,
        }
    }

    #[test]
    fn empty_straight_road_at_desired_speed_is_neutral() {
        let space = synth::four_way_space();
        let r = Arc::new(Route::between(&space, AgentKind::Car, Compass::W, Compass::E).unwrap());
        let p = VehicleParams::car();
        let me = view(1, r.clone(), 5.0, p.desired_speed);
        let d = vehicle_force(&me, &p, &r, 0.0, 0.0, std::slice::from_ref(&me), &space, ForceTerms::default(), 0.3).unwrap();
        assert!(d.accel.abs() < 1e-12, "{d:?}");
        assert!(d.lateral_offset.abs() < 1e-3);
    }

    #[test]
    fn curve_speed_closed_form() {
        assert!((curve_speed(2.5f64, 1.0 / 20.0) - 50f64.sqrt()).abs() < 1e-12);
        assert!(curve_speed(2.5f64, 0.0).is_infinite());
    }

    #[test]
    fn travel_time_matches_kinematics() {
        assert!((travel_time(10.0, 0.0, 2.0, 100.0) - 10f64.sqrt()).abs() < 1e-12);
        assert!((travel_time(10.0, 5.0, 2.0, 5.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn off_route_is_an_error() {
        let space = synth::four_way_space();
        let r = Arc::new(Route::between(&space, AgentKind::Car, Compass::W, Compass::E).unwrap());
        let me = view(7, r.clone(), 5.0, 5.0);
        let e = vehicle_force(&me, &VehicleParams::car(), &r, 20.0, 0.0, &[], &space, ForceTerms::default(), 0.3).unwrap_err();
        assert!(matches!(e, Error::OffRoute { agent_id: 7, .. }));
    }
}
