//! Routes: a chain of lanes flattened into one path, with the priority
//! conflicts and crosswalk crossings along it resolved up front.

use crate::error::{Error, Result};
use crate::geom::{point_in_polygon, Polyline};
use crate::num::wrap_angle;
use crate::trajdata::{AgentKind, Compass, TrafficSpace};
use crate::Vec2d;

/// Lane width assumed for free (lane-less) routes [m].
pub const FREE_LANE_WIDTH: f64 = 3.5;
const FREE_SPEED_LIMIT: f64 = 13.89;

#[derive(Debug, Clone, PartialEq)]
pub struct RouteLane {
    pub lane: usize,
    pub s_start: f64,
    pub s_end: f64,
    /// Yield line (route arc length) in front of this lane, if any.
    pub entry_yield_line: Option<f64>,
}

/// Crossing or merge with a lane not on this route.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteConflict {
    /// Arc length of the conflict point along this route.
    pub s: f64,
    pub point: Vec2d,
    pub other_lane: usize,
    /// Arc length of the conflict point along the other lane.
    pub other_s: f64,
    /// Yield line governing this conflict, as route arc length.
    pub yield_line: Option<f64>,
    /// Traffic on the other lane goes first.
    pub other_has_priority: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrosswalkSpan {
    pub crosswalk: usize,
    pub s_entry: f64,
    pub s_exit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub path: Polyline<f64>,
    pub lanes: Vec<RouteLane>,
    pub conflicts: Vec<RouteConflict>,
    pub crosswalks: Vec<CrosswalkSpan>,
}

fn lane_turn(space: &TrafficSpace, lane: usize) -> f64 {
    let c = &space.lanes[lane].centerline;
    wrap_angle(c.heading_at(c.length()) - c.heading_at(0.0))
}

/// Whether traffic on `other` goes before traffic on `me` at their conflict.
///
/// Lower rank wins. Between equal ranks an oncoming left turn yields to
/// oncoming traffic that is not turning left; otherwise the lane
/// approaching from the right wins.
pub fn other_has_priority(space: &TrafficSpace, me: usize, other: usize) -> bool {
    let (rm, ro) = (space.lanes[me].priority_rank, space.lanes[other].priority_rank);
    if ro != rm {
        return ro < rm;
    }
    let dm = space.lanes[me].centerline.tangent_at(0.0);
    let d_o = space.lanes[other].centerline.tangent_at(0.0);
    const LEFT: f64 = 0.5;
    if dm.dot(d_o) < -0.7 {
        return lane_turn(space, me) > LEFT && lane_turn(space, other) <= LEFT;
    }
    dm.cross(d_o) > 0.0
}

impl Route {
    /// Route along a lane chain; consecutive lanes must be successors.
    pub fn from_lanes(space: &TrafficSpace, lanes: &[usize]) -> Result<Self> {
        let Some(&first) = lanes.first() else {
            return Err(Error::Config("route needs at least one lane".into()));
        };
        let mut path = space.lanes[first].centerline.clone();
        let mut chain = vec![RouteLane {
            lane: first,
            s_start: 0.0,
            s_end: path.length(),
            entry_yield_line: None,
        }];
        for w in lanes.windows(2) {
            let (a, b) = (&space.lanes[w[0]], &space.lanes[w[1]]);
            if !a.successors.contains(&b.id) {
                return Err(Error::Config(format!("lane `{}` does not continue into `{}`", a.id, b.id)));
            }
            let s_start = path.length();
            path = path
                .concat(&b.centerline)
                .ok_or_else(|| Error::Geometry(format!("cannot join lanes `{}` and `{}`", a.id, b.id)))?;
            // concat drops a duplicated joint point, so the offset is exact
            let prev = chain.last().unwrap();
            chain.push(RouteLane {
                lane: w[1],
                s_start,
                s_end: path.length(),
                entry_yield_line: a.yield_s.map(|ys| prev.s_start + ys),
            });
        }
        let mut route = Self {
            path,
            lanes: chain,
            conflicts: Vec::new(),
            crosswalks: Vec::new(),
        };
        route.conflicts = route.find_conflicts(space);
        route.crosswalks = route.find_crosswalks(space);
        Ok(route)
    }

    /// Route that follows an arbitrary path with no lane semantics.
    pub fn free(path: Polyline<f64>) -> Self {
        Self {
            path,
            lanes: Vec::new(),
            conflicts: Vec::new(),
            crosswalks: Vec::new(),
        }
    }

    /// Vehicle route from the approach nearest to `entry` to the exit lane nearest to `exit`.
    pub fn between(space: &TrafficSpace, kind: AgentKind, entry: Compass, exit: Compass) -> Result<Self> {
        let refpos = |c: Compass| {
            space
                .reference_points_for(kind)
                .find(|r| r.label == c)
                .map(|r| r.position)
                .ok_or_else(|| Error::NotFound(format!("no {kind} reference point `{c}` in `{}`", space.id)))
        };
        let (pe, px) = (refpos(entry)?, refpos(exit)?);
        let has_pred: Vec<bool> = {
            let mut v = vec![false; space.lanes.len()];
            for l in &space.lanes {
                for s in &l.successors {
                    if let Some(i) = space.lane_idx(s) {
                        v[i] = true;
                    }
                }
            }
            v
        };
        let pick = |sources: bool, p: Vec2d| {
            (0..space.lanes.len())
                .filter(|&i| if sources { !has_pred[i] } else { space.lanes[i].successors.is_empty() })
                .min_by(|&a, &b| {
                    let pa = if sources { space.lanes[a].centerline.first() } else { space.lanes[a].centerline.last() };
                    let pb = if sources { space.lanes[b].centerline.first() } else { space.lanes[b].centerline.last() };
                    pa.dist(p).total_cmp(&pb.dist(p))
                })
        };
        let from = pick(true, pe).ok_or_else(|| Error::NotFound("no source lane".into()))?;
        let to = pick(false, px).ok_or_else(|| Error::NotFound("no sink lane".into()))?;
        let chain = space
            .lane_path(from, to)
            .ok_or_else(|| Error::NotFound(format!("no lane path {entry}->{exit} in `{}`", space.id)))?;
        Self::from_lanes(space, &chain)
    }

    /// Route for an agent observed at a pose, heading for `exit` if given.
    /// Falls back to the current lane, then to a straight run along the heading.
    pub fn from_pose(space: &TrafficSpace, kind: AgentKind, position: Vec2d, heading: f64, exit: Option<Compass>) -> Self {
        let current = space.nearest_lane(position, heading, 0.5 * FREE_LANE_WIDTH + 1.0);
        if let Some(cur) = current {
            if let Some(exit) = exit {
                let exit_pos = space.reference_points_for(kind).find(|r| r.label == exit).map(|r| r.position);
                if let Some(px) = exit_pos {
                    let sinks: Vec<usize> = (0..space.lanes.len()).filter(|&i| space.lanes[i].successors.is_empty()).collect();
                    if let Some(&to) = sinks.iter().min_by(|&&a, &&b| {
                        space.lanes[a].centerline.last().dist(px).total_cmp(&space.lanes[b].centerline.last().dist(px))
                    }) {
                        if let Some(chain) = space.lane_path(cur, to) {
                            if let Ok(r) = Self::from_lanes(space, &chain) {
                                return r;
                            }
                        }
                    }
                }
            }
            // keep following successors while the choice is unambiguous
            let mut chain = vec![cur];
            while let [only] = space.lanes[*chain.last().unwrap()].successors.as_slice() {
                match space.lane_idx(only) {
                    Some(n) if !chain.contains(&n) => chain.push(n),
                    _ => break,
                }
            }
            if let Ok(r) = Self::from_lanes(space, &chain) {
                return r;
            }
        }
        let dir = Vec2d::from_angle(heading);
        Self::free(Polyline::new(vec![position - dir * 1.0, position + dir * 60.0]).expect("non-degenerate"))
    }

    pub fn length(&self) -> f64 {
        self.path.length()
    }

    /// Route lane containing arc length `s`.
    pub fn lane_at(&self, s: f64) -> Option<&RouteLane> {
        self.lanes
            .iter()
            .find(|l| s < l.s_end)
            .or_else(|| self.lanes.last())
    }

    /// Start of `lane` along this route.
    pub fn lane_start(&self, lane: usize) -> Option<f64> {
        self.lanes.iter().find(|l| l.lane == lane).map(|l| l.s_start)
    }

    pub fn speed_limit_at(&self, space: &TrafficSpace, s: f64) -> f64 {
        self.lane_at(s).map_or(FREE_SPEED_LIMIT, |l| space.lanes[l.lane].speed_limit)
    }

    pub fn lane_width_at(&self, space: &TrafficSpace, s: f64) -> f64 {
        self.lane_at(s).map_or(FREE_LANE_WIDTH, |l| space.lanes[l.lane].width)
    }

    pub fn route_lane(&self, lane: usize) -> Option<&RouteLane> {
        self.lanes.iter().find(|l| l.lane == lane)
    }

    fn find_conflicts(&self, space: &TrafficSpace) -> Vec<RouteConflict> {
        let mut out = Vec::new();
        let on_route = |i: usize| self.lanes.iter().any(|l| l.lane == i);
        for rl in &self.lanes {
            let yield_line = rl.entry_yield_line;
            let mut push = |other: usize, s_on_lane: f64, other_s: f64, point: Vec2d| {
                out.push(RouteConflict {
                    s: rl.s_start + s_on_lane,
                    point,
                    other_lane: other,
                    other_s,
                    yield_line,
                    other_has_priority: other_has_priority(space, rl.lane, other),
                });
            };
            for c in space.conflicts() {
                let (other, s_m, s_o) = if c.lane_a == rl.lane {
                    (c.lane_b, c.s_a, c.s_b)
                } else if c.lane_b == rl.lane {
                    (c.lane_a, c.s_b, c.s_a)
                } else {
                    continue;
                };
                if !on_route(other) {
                    push(other, s_m, s_o, c.point);
                }
            }
            // merges: lanes ending where this lane ends
            let me = &space.lanes[rl.lane];
            if me.successors.is_empty() {
                continue;
            }
            for (o, lane) in space.lanes.iter().enumerate() {
                if o == rl.lane || on_route(o) || lane.successors.is_empty() {
                    continue;
                }
                if lane.centerline.last().dist(me.centerline.last()) < 1e-6 {
                    push(o, me.centerline.length(), lane.centerline.length(), me.centerline.last());
                }
            }
        }
        out.sort_by(|a, b| a.s.total_cmp(&b.s).then(a.other_lane.cmp(&b.other_lane)));
        out
    }

    fn find_crosswalks(&self, space: &TrafficSpace) -> Vec<CrosswalkSpan> {
        const STEP: f64 = 0.25;
        let n = (self.path.length() / STEP).ceil() as usize;
        let mut out = Vec::new();
        for (ci, poly) in space.crosswalks.iter().enumerate() {
            let mut entry: Option<f64> = None;
            for i in 0..=n {
                let s = (i as f64 * STEP).min(self.path.length());
                let inside = point_in_polygon(poly, self.path.point_at(s));
                match (inside, entry) {
                    (true, None) => entry = Some(s),
                    (false, Some(e)) => {
                        out.push(CrosswalkSpan { crosswalk: ci, s_entry: e, s_exit: s });
                        entry = None;
                    }
                    _ => {}
                }
            }
            if let Some(e) = entry {
                out.push(CrosswalkSpan {
                    crosswalk: ci,
                    s_entry: e,
                    s_exit: self.path.length(),
                });
            }
        }
        out.sort_by(|a, b| a.s_entry.total_cmp(&b.s_entry));
        out
    }
}
