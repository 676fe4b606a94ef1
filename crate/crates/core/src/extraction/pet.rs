//! Post-encroachment time from footprint occupancy of a conflict area.
//!
//! Occupancy is evaluated on sampled poses and then refined between frames
//! by bisection on linearly interpolated poses, so entry and exit times are
//! not quantized to the frame period.

use serde::{Deserialize, Serialize};

use super::conflict::ConflictArea;
use crate::num::wrap_angle;
use crate::trajdata::{footprint_of, Track};

const BISECTION_STEPS: usize = 40;

/// Instant expressed as a frame index plus a fraction of the following period.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Instant {
    frame: i64,
    frac: f64,
}

impl Instant {
    fn seconds(self, rate: f64) -> f64 {
        (self.frame as f64 + self.frac) / rate
    }

    fn minus(self, other: Instant, rate: f64) -> f64 {
        ((self.frame - other.frame) as f64 + (self.frac - other.frac)) / rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PetResult {
    /// Seconds; absent when no ordering can be established.
    pub pet: Option<f64>,
    pub first_agent: Option<i64>,
    pub second_agent: Option<i64>,
    /// Time the first agent leaves the area [s].
    pub exit_time: Option<f64>,
    /// Time the second agent enters the area [s].
    pub entry_time: Option<f64>,
    /// Occupancy intervals overlapped; pet is then 0.
    pub simultaneous: bool,
    pub first_interval: Option<(f64, f64)>,
    pub second_interval: Option<(f64, f64)>,
    /// Index of the area (among those passed in) that produced the pet.
    pub area_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl PetResult {
    pub fn absent(reason: impl Into<String>) -> Self {
        Self {
            pet: None,
            first_agent: None,
            second_agent: None,
            exit_time: None,
            entry_time: None,
            simultaneous: false,
            first_interval: None,
            second_interval: None,
            area_index: None,
            reason: Some(reason.into()),
        }
    }
}

struct Occupant<'a> {
    track: &'a Track,
    ped_radius: f64,
}

impl Occupant<'_> {
    fn occupies_at(&self, area: &ConflictArea, frame: i64, frac: f64) -> bool {
        let t = self.track;
        let Some(a) = t.sample_at(frame) else {
            return false;
        };
        let (pos, heading) = if frac > 0.0 {
            match t.sample_at(frame + 1) {
                Some(b) => (
                    a.position.lerp(b.position, frac),
                    a.heading + wrap_angle(b.heading - a.heading) * frac,
                ),
                None => (a.position, a.heading),
            }
        } else {
            (a.position, a.heading)
        };
        let fp = footprint_of(t.kind, t.length, t.width, pos, heading, self.ped_radius);
        area.pieces.iter().any(|p| fp.overlaps_polygon(p))
    }

    /// Continuous occupancy interval `[entry, exit]`, if any sample overlaps.
    fn interval(&self, area: &ConflictArea) -> Option<(Instant, Instant)> {
        let t = self.track;
        let reach = 0.5 * t.length.hypot(t.width) + self.ped_radius + 1e-9;
        let bounds = area.polygon.bounds().inflate(reach);
        let near = |p: crate::Vec2d| p.x >= bounds.min.x && p.x <= bounds.max.x && p.y >= bounds.min.y && p.y <= bounds.max.y;

        let mut first = None;
        let mut last = None;
        for s in &t.samples {
            if near(s.position) && self.occupies_at(area, s.frame, 0.0) {
                if first.is_none() {
                    first = Some(s.frame);
                }
                last = Some(s.frame);
            }
        }
        let (f_in, f_out) = (first?, last?);

        let entry = if f_in > t.initial_frame {
            // not occupied at (f_in - 1, 0), occupied at (f_in, 0)
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                if self.occupies_at(area, f_in - 1, mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            if hi >= 1.0 {
                Instant { frame: f_in, frac: 0.0 }
            } else {
                Instant { frame: f_in - 1, frac: hi }
            }
        } else {
            Instant { frame: f_in, frac: 0.0 }
        };
        let exit = if f_out < t.final_frame {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                if self.occupies_at(area, f_out, mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Instant { frame: f_out, frac: lo }
        } else {
            Instant { frame: f_out, frac: 0.0 }
        };
        Some((entry, exit))
    }
}

fn pet_for_area(a: &Track, b: &Track, area: &ConflictArea, rate: f64, ped_radius: f64) -> Result<PetResult, String> {
    let ia = Occupant { track: a, ped_radius }.interval(area);
    let ib = Occupant { track: b, ped_radius }.interval(area);
    let (ia, ib) = match (ia, ib) {
        (Some(x), Some(y)) => (x, y),
        (None, _) => return Err(format!("agent {} never occupies the conflict area", a.track_id)),
        (_, None) => return Err(format!("agent {} never occupies the conflict area", b.track_id)),
    };
    // earlier entry goes first; ties broken by earlier exit, then smaller id
    let a_first = match ia.0.partial_cmp(&ib.0) {
        Some(std::cmp::Ordering::Less) => true,
        Some(std::cmp::Ordering::Greater) => false,
        _ => match ia.1.partial_cmp(&ib.1) {
            Some(std::cmp::Ordering::Less) => true,
            Some(std::cmp::Ordering::Greater) => false,
            _ => a.track_id <= b.track_id,
        },
    };
    let ((first, fi), (second, si)) = if a_first { ((a, ia), (b, ib)) } else { ((b, ib), (a, ia)) };
    let gap = si.0.minus(fi.1, rate);
    let simultaneous = gap <= 0.0;
    Ok(PetResult {
        pet: Some(if simultaneous { 0.0 } else { gap }),
        first_agent: Some(first.track_id),
        second_agent: Some(second.track_id),
        exit_time: Some(fi.1.seconds(rate)),
        entry_time: Some(si.0.seconds(rate)),
        simultaneous,
        first_interval: Some((fi.0.seconds(rate), fi.1.seconds(rate))),
        second_interval: Some((si.0.seconds(rate), si.1.seconds(rate))),
        area_index: None,
        reason: None,
    })
}

/// PET over the given areas; the smallest present value wins.
pub fn compute_pet(track_a: &Track, track_b: &Track, areas: &[ConflictArea], frame_rate: f64, pedestrian_radius: f64) -> PetResult {
    if areas.is_empty() {
        return PetResult::absent("no conflict area");
    }
    let mut best: Option<PetResult> = None;
    let mut last_reason = String::new();
    for (i, area) in areas.iter().enumerate() {
        match pet_for_area(track_a, track_b, area, frame_rate, pedestrian_radius) {
            Ok(mut r) => {
                r.area_index = Some(i);
                let better = match &best {
                    None => true,
                    Some(b) => r.pet.unwrap() < b.pet.unwrap(),
                };
                if better {
                    best = Some(r);
                }
            }
            Err(reason) => last_reason = reason,
        }
    }
    best.unwrap_or_else(|| PetResult::absent(last_reason))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::conflict::find_conflict_areas;
    use crate::trajdata::{AgentKind, TrackSample};
    use crate::Vec2d;

    /// Straight constant-speed track passing `through` at time `t_cross`.
    pub(crate) fn crossing(id: i64, dir: Vec2d, through: Vec2d, speed: f64, t_cross: f64, rate: f64, frames: i64) -> Track {
        let samples = (0..frames)
            .map(|f| {
                let t = f as f64 / rate;
                TrackSample {
                    frame: f,
                    position: through + dir * (speed * (t - t_cross)),
                    heading: dir.angle(),
                    velocity: dir * speed,
                    acceleration: Vec2d::zero(),
                }
            })
            .collect();
        Track::new(id, AgentKind::Car, 1.8, 4.5, samples)
    }

    #[test]
    fn pet_for_separated_crossings() {
        let rate = 25.0;
        let a = crossing(1, Vec2d::new(1.0, 0.0), Vec2d::zero(), 10.0, 5.0, rate, 400);
        let b = crossing(2, Vec2d::new(0.0, 1.0), Vec2d::zero(), 10.0, 8.0, rate, 400);
        let areas = find_conflict_areas(&[Vec2d::new(-60.0, 0.0), Vec2d::new(60.0, 0.0)], 0.9, &[Vec2d::new(0.0, -90.0), Vec2d::new(0.0, 90.0)], 0.9).unwrap();
        let r = compute_pet(&a, &b, &areas, rate, 0.3);
        // the area is the 1.8 m square at the origin; a car 4.5 m long
        // overlaps it while its center is within 2.25 + 0.9 m of the origin:
        // exit of A at 5 + 0.315 s, entry of B at 8 - 0.315 s.
        let expected = 3.0 - 2.0 * 0.315;
        assert!((r.pet.unwrap() - expected).abs() < 1e-6, "{r:?}");
        assert_eq!(r.first_agent, Some(1));
        assert!(!r.simultaneous);

        let swapped = compute_pet(&b, &a, &areas, rate, 0.3);
        assert_eq!(swapped.pet, r.pet);
        assert_eq!(swapped.first_agent, Some(1));
    }

    #[test]
    fn simultaneous_occupancy_is_zero() {
        let rate = 25.0;
        let a = crossing(1, Vec2d::new(1.0, 0.0), Vec2d::zero(), 10.0, 5.0, rate, 300);
        let b = crossing(2, Vec2d::new(0.0, 1.0), Vec2d::zero(), 10.0, 5.2, rate, 300);
        let areas = find_conflict_areas(&[Vec2d::new(-60.0, 0.0), Vec2d::new(60.0, 0.0)], 0.9, &[Vec2d::new(0.0, -60.0), Vec2d::new(0.0, 60.0)], 0.9).unwrap();
        let r = compute_pet(&a, &b, &areas, rate, 0.3);
        assert_eq!(r.pet, Some(0.0));
        assert!(r.simultaneous);
    }

    #[test]
    fn missing_area_or_occupancy_is_absent() {
        let rate = 25.0;
        let a = crossing(1, Vec2d::new(1.0, 0.0), Vec2d::zero(), 10.0, 5.0, rate, 50);
        let b = crossing(2, Vec2d::new(0.0, 1.0), Vec2d::zero(), 10.0, 8.0, rate, 50);
        assert!(compute_pet(&a, &b, &[], rate, 0.3).pet.is_none());
        let areas = find_conflict_areas(&[Vec2d::new(-60.0, 0.0), Vec2d::new(60.0, 0.0)], 0.9, &[Vec2d::new(0.0, -60.0), Vec2d::new(0.0, 60.0)], 0.9).unwrap();
        // b's lifetime (2 s) ends far before the crossing
        let r = compute_pet(&a, &b, &areas, rate, 0.3);
        assert!(r.pet.is_none());
        assert!(r.reason.unwrap().contains("never occupies"));
    }
}
