//! Planar geometry: vectors, polylines and convex polygons.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Vec2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    /// Unit vector at `angle` radians CCW from +x.
    #[inline]
    pub fn from_angle(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c, s)
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3d cross product.
    #[inline]
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn dist(self, o: Self) -> T {
        (self - o).norm()
    }

    /// Normalized copy, or `None` for a zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > T::zero() && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    /// Rotated by +90 degrees (left normal).
    #[inline]
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    #[inline]
    pub fn angle(self) -> T {
        self.y.atan2(self.x)
    }

    pub fn rotate(self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    #[inline]
    pub fn lerp(self, o: Self, t: T) -> Self {
        self + (o - self) * t
    }
}

impl<T: Real> Add for Vec2<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Real> AddAssign for Vec2<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl<T: Real> Sub for Vec2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Real> SubAssign for Vec2<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl<T: Real> Mul<T> for Vec2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

impl<T: Real> Div<T> for Vec2<T> {
    type Output = Self;
    #[inline]
    fn div(self, k: T) -> Self {
        Self::new(self.x / k, self.y / k)
    }
}

impl<T: Real> Neg for Vec2<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Distance from `p` to the segment `a`-`b`, and the clamped segment parameter.
pub fn point_segment_distance<T: Real>(p: Vec2<T>, a: Vec2<T>, b: Vec2<T>) -> (T, T) {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    let t = if len_sq > T::zero() {
        ((p - a).dot(ab) / len_sq).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    ((a + ab * t).dist(p), t)
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection<T> {
    /// Arc length of the foot point.
    pub s: T,
    /// Signed offset, positive to the left of the travel direction.
    pub lateral: T,
    pub distance: T,
    pub segment: usize,
}

/// Open polyline with cached cumulative arc lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline<T> {
    points: Vec<Vec2<T>>,
    cum: Vec<T>,
    curvature: Vec<T>,
}

impl<T: Real> Polyline<T> {
    /// Builds a polyline. Consecutive duplicate points are dropped; `None`
    /// when fewer than two distinct points remain.
    pub fn new(points: Vec<Vec2<T>>) -> Option<Self> {
        let mut pts: Vec<Vec2<T>> = Vec::with_capacity(points.len());
        for p in points {
            if !p.is_finite() {
                return None;
            }
            if pts.last().map_or(true, |q| q.dist(p) > T::zero()) {
                pts.push(p);
            }
        }
        if pts.len() < 2 {
            return None;
        }
        let mut cum = Vec::with_capacity(pts.len());
        cum.push(T::zero());
        for w in pts.windows(2) {
            let last = *cum.last().unwrap();
            cum.push(last + w[0].dist(w[1]));
        }
        let curvature = vertex_curvature(&pts);
        Some(Self {
            points: pts,
            cum,
            curvature,
        })
    }

    pub fn points(&self) -> &[Vec2<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> T {
        *self.cum.last().unwrap()
    }

    pub fn arc_lengths(&self) -> &[T] {
        &self.cum
    }

    pub fn first(&self) -> Vec2<T> {
        self.points[0]
    }

    pub fn last(&self) -> Vec2<T> {
        *self.points.last().unwrap()
    }

    fn segment_at(&self, s: T) -> usize {
        let n = self.points.len();
        match self
            .cum
            .binary_search_by(|c| c.partial_cmp(&s).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// Point at arc length `s`; extrapolates linearly beyond both ends.
    pub fn point_at(&self, s: T) -> Vec2<T> {
        let i = self.segment_at(s);
        let a = self.points[i];
        let b = self.points[i + 1];
        let seg = self.cum[i + 1] - self.cum[i];
        a + (b - a) * ((s - self.cum[i]) / seg)
    }

    /// Unit tangent at arc length `s`.
    pub fn tangent_at(&self, s: T) -> Vec2<T> {
        let i = self.segment_at(s);
        let d = self.points[i + 1] - self.points[i];
        d / d.norm()
    }

    pub fn heading_at(&self, s: T) -> T {
        self.tangent_at(s).angle()
    }

    /// Signed curvature (positive = turning left), linearly interpolated
    /// between per-vertex three-point estimates.
    pub fn curvature_at(&self, s: T) -> T {
        let s = s.max(T::zero()).min(self.length());
        let i = self.segment_at(s);
        let seg = self.cum[i + 1] - self.cum[i];
        let t = (s - self.cum[i]) / seg;
        self.curvature[i] + (self.curvature[i + 1] - self.curvature[i]) * t
    }

    pub fn vertex_curvatures(&self) -> &[T] {
        &self.curvature
    }

    /// Orthogonal projection onto the closest segment.
    pub fn project(&self, p: Vec2<T>) -> Projection<T> {
        self.project_range(p, 0, self.points.len() - 1)
    }

    /// Projection restricted to arc lengths within `[s_lo, s_hi]` segments.
    pub fn project_window(&self, p: Vec2<T>, s_lo: T, s_hi: T) -> Projection<T> {
        let lo = self.segment_at(s_lo);
        let hi = (self.segment_at(s_hi) + 1).min(self.points.len() - 1);
        self.project_range(p, lo, hi.max(lo + 1))
    }

    fn project_range(&self, p: Vec2<T>, lo: usize, hi: usize) -> Projection<T> {
        let mut best = Projection {
            s: T::zero(),
            lateral: T::zero(),
            distance: T::infinity(),
            segment: lo,
        };
        for i in lo..hi {
            let a = self.points[i];
            let b = self.points[i + 1];
            let (d, t) = point_segment_distance(p, a, b);
            if d < best.distance {
                let seg = self.cum[i + 1] - self.cum[i];
                let dir = (b - a) / seg;
                best = Projection {
                    s: self.cum[i] + seg * t,
                    lateral: dir.cross(p - a),
                    distance: d,
                    segment: i,
                };
            }
        }
        best
    }

    /// Resamples at (at most) `spacing` meters, always keeping both ends.
    pub fn resample(&self, spacing: T) -> Self {
        let len = self.length();
        let n = (len / spacing).ceil().to_usize().unwrap_or(1).max(1);
        let pts = (0..=n)
            .map(|k| self.point_at(len * T::from_usize(k).unwrap() / T::from_usize(n).unwrap()))
            .collect();
        Self::new(pts).unwrap_or_else(|| self.clone())
    }

    /// Polyline shifted laterally by `offset` (left positive).
    pub fn offset(&self, offset: T) -> Option<Self> {
        let n = self.points.len();
        let pts = (0..n)
            .map(|i| {
                let a = self.points[i.saturating_sub(1).min(n - 2)];
                let b = self.points[(i + 1).min(n - 1).max(1)];
                let t = (b - a).normalized().unwrap_or(Vec2::new(T::one(), T::zero()));
                self.points[i] + t.perp() * offset
            })
            .collect();
        Self::new(pts)
    }

    /// Concatenation, dropping a duplicated junction point.
    pub fn concat(&self, other: &Self) -> Option<Self> {
        let mut pts = self.points.clone();
        pts.extend_from_slice(&other.points);
        Self::new(pts)
    }

    pub fn bounds(&self) -> Aabb<T> {
        Aabb::from_points(&self.points)
    }
}

fn vertex_curvature<T: Real>(pts: &[Vec2<T>]) -> Vec<T> {
    let n = pts.len();
    let mut k = vec![T::zero(); n];
    for i in 1..n.saturating_sub(1) {
        let (a, b, c) = (pts[i - 1], pts[i], pts[i + 1]);
        let ab = a.dist(b);
        let bc = b.dist(c);
        let ca = c.dist(a);
        let denom = ab * bc * ca;
        if denom > T::zero() {
            // Menger curvature: 4 * signed triangle area / product of sides.
            k[i] = T::two() * (b - a).cross(c - a) / denom;
        }
    }
    if n > 2 {
        k[0] = k[1];
        k[n - 1] = k[n - 2];
    }
    k
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb<T> {
    pub min: Vec2<T>,
    pub max: Vec2<T>,
}

impl<T: Real> Aabb<T> {
    pub fn from_points(pts: &[Vec2<T>]) -> Self {
        let mut min = Vec2::new(T::infinity(), T::infinity());
        let mut max = Vec2::new(T::neg_infinity(), T::neg_infinity());
        for p in pts {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Self { min, max }
    }

    pub fn inflate(self, r: T) -> Self {
        Self {
            min: Vec2::new(self.min.x - r, self.min.y - r),
            max: Vec2::new(self.max.x + r, self.max.y + r),
        }
    }

    pub fn overlaps(&self, o: &Self) -> bool {
        self.min.x <= o.max.x && o.min.x <= self.max.x && self.min.y <= o.max.y && o.min.y <= self.max.y
    }
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon<T> {
    vertices: Vec<Vec2<T>>,
}

impl<T: Real> ConvexPolygon<T> {
    /// Wraps vertices, reversing them if given clockwise. No convexity check.
    pub fn new(mut vertices: Vec<Vec2<T>>) -> Self {
        if signed_area(&vertices) < T::zero() {
            vertices.reverse();
        }
        Self { vertices }
    }

    /// Oriented rectangle centered at `center`, `length` along `heading`.
    pub fn rectangle(center: Vec2<T>, heading: T, length: T, width: T) -> Self {
        let f = Vec2::from_angle(heading) * (length * T::half());
        let l = Vec2::from_angle(heading).perp() * (width * T::half());
        Self {
            vertices: vec![center - f - l, center + f - l, center + f + l, center - f + l],
        }
    }

    /// Rectangle covering segment `a`-`b` with `half_width` on each side,
    /// extended by `cap` past both ends.
    pub fn segment_band(a: Vec2<T>, b: Vec2<T>, half_width: T, cap: T) -> Option<Self> {
        let dir = (b - a).normalized()?;
        let len = a.dist(b) + cap * T::two();
        let center = (a + b) * T::half();
        Some(Self::rectangle(center, dir.angle(), len, half_width * T::two()))
    }

    pub fn vertices(&self) -> &[Vec2<T>] {
        &self.vertices
    }

    pub fn area(&self) -> T {
        signed_area(&self.vertices).abs()
    }

    pub fn centroid(&self) -> Vec2<T> {
        let n = self.vertices.len();
        let a = signed_area(&self.vertices);
        if n < 3 || a == T::zero() {
            let sum = self.vertices.iter().fold(Vec2::zero(), |acc, &p| acc + p);
            return sum / T::from_usize(n.max(1)).unwrap();
        }
        let mut c = Vec2::zero();
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let w = p.cross(q);
            c += (p + q) * w;
        }
        c / (T::lit(6.0) * a)
    }

    pub fn bounds(&self) -> Aabb<T> {
        Aabb::from_points(&self.vertices)
    }

    pub fn contains(&self, p: Vec2<T>) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            (b - a).cross(p - a) >= T::zero()
        })
    }

    /// Distance from `p` to the polygon (0 inside).
    pub fn distance_to(&self, p: Vec2<T>) -> T {
        if self.contains(p) {
            return T::zero();
        }
        let n = self.vertices.len();
        (0..n)
            .map(|i| point_segment_distance(p, self.vertices[i], self.vertices[(i + 1) % n]).0)
            .fold(T::infinity(), T::min)
    }

    /// Separating-axis overlap test; touching counts as overlap.
    pub fn overlaps(&self, other: &Self) -> bool {
        if self.vertices.len() < 3 || other.vertices.len() < 3 {
            return false;
        }
        !has_separating_axis(&self.vertices, &other.vertices)
            && !has_separating_axis(&other.vertices, &self.vertices)
    }

    pub fn overlaps_disc(&self, center: Vec2<T>, radius: T) -> bool {
        self.distance_to(center) <= radius
    }

    /// Convex clipping (Sutherland-Hodgman against a convex clipper).
    pub fn intersection(&self, clip: &Self) -> Option<Self> {
        let mut out = self.vertices.clone();
        let n = clip.vertices.len();
        for i in 0..n {
            if out.is_empty() {
                break;
            }
            let a = clip.vertices[i];
            let b = clip.vertices[(i + 1) % n];
            let inside = |p: Vec2<T>| (b - a).cross(p - a) >= T::zero();
            let input = std::mem::take(&mut out);
            let m = input.len();
            for j in 0..m {
                let cur = input[j];
                let prev = input[(j + m - 1) % m];
                let (ci, pi) = (inside(cur), inside(prev));
                if ci {
                    if !pi {
                        out.push(line_intersection(prev, cur, a, b));
                    }
                    out.push(cur);
                } else if pi {
                    out.push(line_intersection(prev, cur, a, b));
                }
            }
        }
        if out.len() < 3 {
            return None;
        }
        let poly = Self { vertices: out };
        if poly.area() > T::zero() {
            Some(poly)
        } else {
            None
        }
    }
}

fn has_separating_axis<T: Real>(a: &[Vec2<T>], b: &[Vec2<T>]) -> bool {
    let n = a.len();
    (0..n).any(|i| {
        let p = a[i];
        let q = a[(i + 1) % n];
        let edge = q - p;
        // all of b strictly to the right of the CCW edge
        b.iter().all(|&v| edge.cross(v - p) < T::zero())
    })
}

fn line_intersection<T: Real>(p: Vec2<T>, q: Vec2<T>, a: Vec2<T>, b: Vec2<T>) -> Vec2<T> {
    let r = q - p;
    let s = b - a;
    let denom = r.cross(s);
    if denom == T::zero() {
        return q;
    }
    let t = (a - p).cross(s) / denom;
    p + r * t
}

pub fn signed_area<T: Real>(pts: &[Vec2<T>]) -> T {
    let n = pts.len();
    if n < 3 {
        return T::zero();
    }
    let mut a = T::zero();
    for i in 0..n {
        a += pts[i].cross(pts[(i + 1) % n]);
    }
    a * T::half()
}

/// Convex hull (Andrew's monotone chain), counter-clockwise.
pub fn convex_hull<T: Real>(points: &[Vec2<T>]) -> Vec<Vec2<T>> {
    let mut pts: Vec<Vec2<T>> = points.to_vec();
    pts.sort_by(|a, b| {
        a.x.partial_cmp(&b.x)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.y.partial_cmp(&b.y).unwrap_or(std::cmp::Ordering::Equal))
    });
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Vec2<T>> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2
            && (lower[lower.len() - 1] - lower[lower.len() - 2]).cross(p - lower[lower.len() - 2])
                <= T::zero()
        {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Vec2<T>> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2
            && (upper[upper.len() - 1] - upper[upper.len() - 2]).cross(p - upper[upper.len() - 2])
                <= T::zero()
        {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Point-in-polygon for simple (possibly non-convex) polygons, even-odd rule.
pub fn point_in_polygon<T: Real>(poly: &[Vec2<T>], p: Vec2<T>) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Intersection point of segments `a0-a1` and `b0-b1`, with both parameters.
pub fn segment_intersection<T: Real>(
    a0: Vec2<T>,
    a1: Vec2<T>,
    b0: Vec2<T>,
    b1: Vec2<T>,
) -> Option<(Vec2<T>, T, T)> {
    let r = a1 - a0;
    let s = b1 - b0;
    let denom = r.cross(s);
    if denom == T::zero() {
        return None;
    }
    let t = (b0 - a0).cross(s) / denom;
    let u = (b0 - a0).cross(r) / denom;
    if t >= T::zero() && t <= T::one() && u >= T::zero() && u <= T::one() {
        Some((a0 + r * t, t, u))
    } else {
        None
    }
}
