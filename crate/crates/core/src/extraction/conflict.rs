//! Conflict areas as intersections of buffered paths.
//!
//! A buffered path is the union of one rectangle per polyline segment,
//! `2 * half_width` wide and extended by `half_width` past both segment
//! ends so consecutive rectangles cover the joint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{convex_hull, ConvexPolygon, Polyline};
use crate::Vec2d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictArea {
    /// Convex hull of the overlap, for reporting.
    pub polygon: ConvexPolygon<f64>,
    /// Exact overlap as a union of convex pieces; occupancy tests use these.
    pub pieces: Vec<ConvexPolygon<f64>>,
    /// Arc length along the first path at the area centroid.
    pub a_path_s: f64,
    pub b_path_s: f64,
}

impl ConflictArea {
    pub fn area_upper_bound(&self) -> f64 {
        self.pieces.iter().map(ConvexPolygon::area).sum()
    }
}

/// The convex rectangles making up a buffered path.
pub fn buffered_bands(path: &Polyline<f64>, half_width: f64) -> Vec<ConvexPolygon<f64>> {
    path.points()
        .windows(2)
        .filter_map(|w| ConvexPolygon::segment_band(w[0], w[1], half_width, half_width))
        .collect()
}

fn checked_path(points: &[Vec2d], which: &str) -> Result<Polyline<f64>> {
    if points.len() < 2 {
        return Err(Error::Geometry(format!("{which} path needs at least 2 points")));
    }
    Polyline::new(points.to_vec()).ok_or_else(|| Error::Geometry(format!("{which} path has zero length")))
}

/// All conflict areas between two buffered paths, ordered along path `a`.
pub fn find_conflict_areas(path_a: &[Vec2d], half_width_a: f64, path_b: &[Vec2d], half_width_b: f64) -> Result<Vec<ConflictArea>> {
    let pa = checked_path(path_a, "first")?;
    let pb = checked_path(path_b, "second")?;
    if !(half_width_a > 0.0 && half_width_b > 0.0) {
        return Err(Error::Geometry("buffer half-widths must be > 0".into()));
    }
    if !pa.bounds().inflate(half_width_a).overlaps(&pb.bounds().inflate(half_width_b)) {
        return Ok(Vec::new());
    }
    let ba = buffered_bands(&pa, half_width_a);
    let bb = buffered_bands(&pb, half_width_b);
    let bbox_b: Vec<_> = bb.iter().map(ConvexPolygon::bounds).collect();

    let mut pieces: Vec<ConvexPolygon<f64>> = Vec::new();
    for ra in &ba {
        let bx = ra.bounds();
        for (rb, bxb) in bb.iter().zip(&bbox_b) {
            if !bx.overlaps(bxb) {
                continue;
            }
            if let Some(p) = ra.intersection(rb) {
                pieces.push(p);
            }
        }
    }
    if pieces.is_empty() {
        return Ok(Vec::new());
    }

    // connected components of overlapping pieces
    let n = pieces.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut c = i;
        while p[c] != r {
            let next = p[c];
            p[c] = r;
            c = next;
        }
        r
    }
    let boxes: Vec<_> = pieces.iter().map(|p| p.bounds()).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if boxes[i].overlaps(&boxes[j]) && pieces[i].overlaps(&pieces[j]) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<ConvexPolygon<f64>>> = Default::default();
    for (i, p) in pieces.into_iter().enumerate() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(p);
    }

    let mut areas: Vec<ConflictArea> = groups
        .into_values()
        .map(|group| {
            let pts: Vec<Vec2d> = group.iter().flat_map(|p| p.vertices().iter().copied()).collect();
            let polygon = ConvexPolygon::new(convex_hull(&pts));
            let c = polygon.centroid();
            ConflictArea {
                a_path_s: pa.project(c).s,
                b_path_s: pb.project(c).s,
                polygon,
                pieces: group,
            }
        })
        .collect();
    areas.sort_by(|x, y| x.a_path_s.total_cmp(&y.a_path_s));
    Ok(areas)
}

/// First conflict area along path `a`, if the buffered paths overlap at all.
pub fn find_conflict_area(path_a: &[Vec2d], half_width_a: f64, path_b: &[Vec2d], half_width_b: f64) -> Result<Option<ConflictArea>> {
    Ok(find_conflict_areas(path_a, half_width_a, path_b, half_width_b)?.into_iter().next())
}

/// Drops samples closer than `spacing` to the previous kept one; keeps the last.
pub fn thin_path(points: &[Vec2d], spacing: f64) -> Vec<Vec2d> {
    let mut out: Vec<Vec2d> = Vec::new();
    for &p in points {
        match out.last() {
            Some(q) if q.dist(p) < spacing => {}
            _ => out.push(p),
        }
    }
    if let (Some(&last), Some(&kept)) = (points.last(), out.last()) {
        if kept != last {
            if out.len() >= 2 && kept.dist(last) < spacing * 0.5 {
                out.pop();
            }
            out.push(last);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64) -> Vec2d {
        Vec2d::new(x, y)
    }

    #[test]
    fn perpendicular_paths_meet_at_origin() {
        let a = [v(-10.0, 0.0), v(10.0, 0.0)];
        let b = [v(0.0, -10.0), v(0.0, 10.0)];
        let area = find_conflict_area(&a, 1.0, &b, 1.0).unwrap().unwrap();
        let c = area.polygon.centroid();
        assert!(c.norm() < 1e-9);
        assert!((area.polygon.area() - 4.0).abs() < 1e-9);
        assert!((area.a_path_s - 10.0).abs() < 1e-9);
    }

    #[test]
    fn parallel_paths_apart_have_none() {
        let a = [v(-10.0, 0.0), v(10.0, 0.0)];
        let b = [v(-10.0, 10.0), v(10.0, 10.0)];
        assert!(find_conflict_area(&a, 1.0, &b, 1.0).unwrap().is_none());
    }

    #[test]
    fn degenerate_path_errors() {
        let a = [v(1.0, 1.0), v(1.0, 1.0)];
        let b = [v(0.0, -10.0), v(0.0, 10.0)];
        assert!(matches!(find_conflict_area(&a, 1.0, &b, 1.0), Err(Error::Geometry(_))));
        assert!(find_conflict_area(&[v(0.0, 0.0)], 1.0, &b, 1.0).is_err());
    }

    #[test]
    fn two_crossings_give_two_areas() {
        let a = [v(-20.0, 0.0), v(20.0, 0.0)];
        let b = [v(-10.0, -10.0), v(-10.0, 10.0), v(10.0, 10.0), v(10.0, -10.0)];
        let areas = find_conflict_areas(&a, 0.5, &b, 0.5).unwrap();
        assert_eq!(areas.len(), 2);
        assert!(areas[0].a_path_s < areas[1].a_path_s);
    }

    #[test]
    fn thinning_keeps_ends() {
        let pts: Vec<Vec2d> = (0..=100).map(|i| v(i as f64 * 0.1, 0.0)).collect();
        let t = thin_path(&pts, 1.0);
        assert_eq!(t.first(), pts.first());
        assert_eq!(t.last(), pts.last());
        assert!(t.windows(2).all(|w| w[0].dist(w[1]) >= 0.5 - 1e-12));
    }
}
