//! Planar geometry in metric coordinates: points, segments, rectangles and
//! polygons with holes.
//!
//! All coordinates are metres in a local projected frame. Rings are stored
//! open (the closing vertex is not repeated).

use serde::{Deserialize, Serialize};

/// Absolute tolerance used for orientation and on-segment tests.
const GEOM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn sub(&self, other: &Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }

    fn cross(&self, other: &Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    fn dot(&self, other: &Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    fn lerp(&self, other: &Point, t: f64) -> Point {
        Point::new(self.x + t * (other.x - self.x), self.y + t * (other.y - self.y))
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min: Point::new(min_x, min_y),
            max: Point::new(max_x, max_y),
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// True when either side has zero (or negative) length or a coordinate is not finite.
    pub fn is_degenerate(&self) -> bool {
        !(self.width() > 0.0 && self.height() > 0.0)
            || ![self.min.x, self.min.y, self.max.x, self.max.y]
                .iter()
                .all(|v| v.is_finite())
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Smallest rectangle containing every point; `None` for an empty iterator.
    pub fn bounding<'a>(points: impl IntoIterator<Item = &'a Point>) -> Option<Rect> {
        let mut iter = points.into_iter();
        let first = iter.next()?;
        let mut r = Rect {
            min: *first,
            max: *first,
        };
        for p in iter {
            r.min.x = r.min.x.min(p.x);
            r.min.y = r.min.y.min(p.y);
            r.max.x = r.max.x.max(p.x);
            r.max.y = r.max.y.max(p.y);
        }
        Some(r)
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect::new(
            self.min.x.min(other.min.x),
            self.min.y.min(other.min.y),
            self.max.x.max(other.max.x),
            self.max.y.max(other.max.y),
        )
    }

    pub fn center(&self) -> Point {
        self.min.lerp(&self.max, 0.5)
    }

    /// Counter-clockwise polygon with the same extent.
    pub fn to_polygon(&self) -> Polygon {
        Polygon::new(vec![
            self.min,
            Point::new(self.max.x, self.min.y),
            self.max,
            Point::new(self.min.x, self.max.y),
        ])
    }
}

/// Closed line segment from `a` to `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

/// Result of intersecting two segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentIntersection {
    None,
    /// Single crossing or touching point, with its parameter along each segment.
    Point { point: Point, t: f64, u: f64 },
    /// Collinear overlap between the parameters `t0..t1` of the first segment.
    Overlap { t0: f64, t1: f64 },
}

impl Segment {
    pub const fn new(a: Point, b: Point) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(&self.b)
    }

    pub fn point_at(&self, t: f64) -> Point {
        self.a.lerp(&self.b, t)
    }

    /// Perpendicular foot of `p`, clamped to the segment ends. Returns the point
    /// and its parameter in `[0, 1]`.
    pub fn closest_point(&self, p: &Point) -> (Point, f64) {
        let d = self.b.sub(&self.a);
        let len2 = d.dot(&d);
        if len2 == 0.0 {
            return (self.a, 0.0);
        }
        let t = (p.sub(&self.a).dot(&d) / len2).clamp(0.0, 1.0);
        if t == 0.0 {
            (self.a, 0.0)
        } else if t == 1.0 {
            (self.b, 1.0)
        } else {
            (self.point_at(t), t)
        }
    }

    pub fn distance_to(&self, p: &Point) -> f64 {
        self.closest_point(p).0.distance(p)
    }

    pub fn intersect(&self, other: &Segment) -> SegmentIntersection {
        let r = self.b.sub(&self.a);
        let s = other.b.sub(&other.a);
        let qp = other.a.sub(&self.a);
        let denom = r.cross(&s);
        let scale = r.dot(&r).sqrt() * s.dot(&s).sqrt();
        if scale == 0.0 {
            return SegmentIntersection::None;
        }
        if denom.abs() <= GEOM_EPS * scale {
            // parallel
            if qp.cross(&r).abs() > GEOM_EPS * scale.max(1.0) * r.dot(&r).sqrt().max(1.0) {
                return SegmentIntersection::None;
            }
            let rr = r.dot(&r);
            let t_a = qp.dot(&r) / rr;
            let t_b = other.b.sub(&self.a).dot(&r) / rr;
            let (lo, hi) = (t_a.min(t_b).max(0.0), t_a.max(t_b).min(1.0));
            if lo > hi {
                return SegmentIntersection::None;
            }
            if lo == hi {
                let u = if t_a == lo { 0.0 } else { 1.0 };
                return SegmentIntersection::Point {
                    point: self.point_at(lo),
                    t: lo,
                    u,
                };
            }
            return SegmentIntersection::Overlap { t0: lo, t1: hi };
        }
        let t = qp.cross(&s) / denom;
        let u = qp.cross(&r) / denom;
        let tol = 1e-12;
        if t < -tol || t > 1.0 + tol || u < -tol || u > 1.0 + tol {
            return SegmentIntersection::None;
        }
        let t = t.clamp(0.0, 1.0);
        let u = u.clamp(0.0, 1.0);
        SegmentIntersection::Point {
            point: self.point_at(t),
            t,
            u,
        }
    }
}

/// Polygon with an exterior ring and optional holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Vec<Point>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub holes: Vec<Vec<Point>>,
}

impl Polygon {
    /// Builds a polygon without holes. A repeated closing vertex is dropped.
    pub fn new(exterior: Vec<Point>) -> Self {
        Self {
            exterior: open_ring(exterior),
            holes: Vec::new(),
        }
    }

    pub fn with_holes(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Self {
        Self {
            exterior: open_ring(exterior),
            holes: holes.into_iter().map(open_ring).collect(),
        }
    }

    pub fn area(&self) -> f64 {
        let holes: f64 = self.holes.iter().map(|h| ring_signed_area(h).abs()).sum();
        ring_signed_area(&self.exterior).abs() - holes
    }

    /// Area-weighted centroid. `None` when the area is zero.
    pub fn centroid(&self) -> Option<Point> {
        let (mut a, mut cx, mut cy) = ring_moments(&self.exterior, true);
        for h in &self.holes {
            let (ha, hx, hy) = ring_moments(h, true);
            a -= ha;
            cx -= hx;
            cy -= hy;
        }
        if a.abs() <= GEOM_EPS || !a.is_finite() {
            return None;
        }
        Some(Point::new(cx / a, cy / a))
    }

    pub fn bbox(&self) -> Option<Rect> {
        Rect::bounding(&self.exterior)
    }

    /// Even-odd containment over all rings; boundary points count as inside.
    pub fn contains(&self, p: &Point) -> bool {
        if on_ring_boundary(&self.exterior, p) {
            return true;
        }
        if !ring_contains(&self.exterior, p) {
            return false;
        }
        for h in &self.holes {
            if on_ring_boundary(h, p) {
                return true;
            }
            if ring_contains(h, p) {
                return false;
            }
        }
        true
    }

    /// Exterior ring has at least three vertices, finite coordinates, nonzero
    /// area and no crossing or touching between non-adjacent edges.
    pub fn is_simple(&self) -> bool {
        let ring = &self.exterior;
        let n = ring.len();
        if n < 3 || !ring.iter().all(|p| p.x.is_finite() && p.y.is_finite()) {
            return false;
        }
        if ring_signed_area(ring).abs() <= GEOM_EPS {
            return false;
        }
        let segs: Vec<Segment> = ring_segments(ring).collect();
        if segs.iter().any(|s| s.length() == 0.0) {
            return false;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                match segs[i].intersect(&segs[j]) {
                    SegmentIntersection::None => {}
                    SegmentIntersection::Overlap { .. } => return false,
                    SegmentIntersection::Point { .. } if adjacent => {}
                    SegmentIntersection::Point { .. } => return false,
                }
            }
        }
        true
    }

    /// Area of the intersection of two polygons.
    ///
    /// Each ring pair is intersected by ear-clipping the second ring into
    /// triangles and clipping the first ring against every triangle.
    pub fn intersection_area(&self, other: &Polygon) -> f64 {
        let mut total = ring_intersection_area(&self.exterior, &other.exterior);
        for h in &self.holes {
            total -= ring_intersection_area(h, &other.exterior);
        }
        for oh in &other.holes {
            total -= ring_intersection_area(&self.exterior, oh);
            for h in &self.holes {
                total += ring_intersection_area(h, oh);
            }
        }
        total.max(0.0)
    }
}

fn open_ring(mut ring: Vec<Point>) -> Vec<Point> {
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring
}

/// Shoelace signed area; positive for counter-clockwise rings.
pub fn ring_signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let p = ring[i];
        let q = ring[(i + 1) % n];
        s += p.x * q.y - q.x * p.y;
    }
    0.5 * s
}

/// First moments (area, area * cx, area * cy) of a ring, optionally oriented
/// so that the area is positive.
fn ring_moments(ring: &[Point], positive: bool) -> (f64, f64, f64) {
    let n = ring.len();
    if n < 3 {
        return (0.0, 0.0, 0.0);
    }
    // shift to the first vertex to limit cancellation on large coordinates
    let o = ring[0];
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let p = ring[i].sub(&o);
        let q = ring[(i + 1) % n].sub(&o);
        let w = p.x * q.y - q.x * p.y;
        a += w;
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    a *= 0.5;
    cx /= 6.0;
    cy /= 6.0;
    if positive && a < 0.0 {
        a = -a;
        cx = -cx;
        cy = -cy;
    }
    (a, cx + a * o.x, cy + a * o.y)
}

pub fn ring_segments(ring: &[Point]) -> impl Iterator<Item = Segment> + '_ {
    let n = ring.len();
    (0..n).map(move |i| Segment::new(ring[i], ring[(i + 1) % n]))
}

fn on_ring_boundary(ring: &[Point], p: &Point) -> bool {
    ring_segments(ring).any(|s| s.distance_to(p) <= 1e-9)
}

fn ring_contains(ring: &[Point], p: &Point) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (pi, pj) = (ring[i], ring[j]);
        if (pi.y > p.y) != (pj.y > p.y) {
            let x = pj.x + (p.y - pj.y) * (pi.x - pj.x) / (pi.y - pj.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn ccw(ring: &[Point]) -> Vec<Point> {
    let mut r = ring.to_vec();
    if ring_signed_area(&r) < 0.0 {
        r.reverse();
    }
    r
}

/// Ear-clipping triangulation of a simple ring.
fn triangulate(ring: &[Point]) -> Vec<[Point; 3]> {
    let pts = ccw(ring);
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    let mut tris = Vec::new();
    let mut guard = 0usize;
    while idx.len() > 3 && guard < pts.len() * pts.len() {
        guard += 1;
        let n = idx.len();
        let mut clipped = false;
        for k in 0..n {
            let (ia, ib, ic) = (idx[(k + n - 1) % n], idx[k], idx[(k + 1) % n]);
            let (a, b, c) = (pts[ia], pts[ib], pts[ic]);
            let turn = b.sub(&a).cross(&c.sub(&b));
            if turn <= 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&m| {
                m != ia && m != ib && m != ic && point_in_triangle(&pts[m], &a, &b, &c)
            });
            if blocked {
                continue;
            }
            tris.push([a, b, c]);
            idx.remove(k);
            clipped = true;
            break;
        }
        if !clipped {
            // drop a collinear vertex rather than looping forever
            let n = idx.len();
            let k = (0..n)
                .find(|&k| {
                    let (a, b, c) = (pts[idx[(k + n - 1) % n]], pts[idx[k]], pts[idx[(k + 1) % n]]);
                    b.sub(&a).cross(&c.sub(&b)).abs() <= GEOM_EPS
                })
                .unwrap_or(0);
            idx.remove(k);
        }
    }
    if idx.len() == 3 {
        let (a, b, c) = (pts[idx[0]], pts[idx[1]], pts[idx[2]]);
        if b.sub(&a).cross(&c.sub(&b)) > 0.0 {
            tris.push([a, b, c]);
        }
    }
    tris
}

fn point_in_triangle(p: &Point, a: &Point, b: &Point, c: &Point) -> bool {
    let d1 = b.sub(a).cross(&p.sub(a));
    let d2 = c.sub(b).cross(&p.sub(b));
    let d3 = a.sub(c).cross(&p.sub(c));
    d1 >= 0.0 && d2 >= 0.0 && d3 >= 0.0
}

/// Sutherland-Hodgman clip of `subject` against the convex counter-clockwise `clip`.
fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let (ca, cb) = (clip[i], clip[(i + 1) % n]);
        let edge = cb.sub(&ca);
        let inside = |p: &Point| edge.cross(&p.sub(&ca)) >= 0.0;
        let input = std::mem::take(&mut output);
        let m = input.len();
        for k in 0..m {
            let cur = input[k];
            let prev = input[(k + m - 1) % m];
            let (cin, pin) = (inside(&cur), inside(&prev));
            if cin != pin {
                let d = cur.sub(&prev);
                let denom = edge.cross(&d);
                if denom != 0.0 {
                    let t = edge.cross(&ca.sub(&prev)) / denom;
                    output.push(prev.lerp(&cur, t));
                }
            }
            if cin {
                output.push(cur);
            }
        }
    }
    output
}

fn ring_intersection_area(subject: &[Point], clip: &[Point]) -> f64 {
    let subject = ccw(subject);
    triangulate(clip)
        .iter()
        .map(|tri| ring_signed_area(&clip_convex(&subject, tri)).abs())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pts(coords: &[(f64, f64)]) -> Vec<Point> {
        coords.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    #[test]
    fn l_shape_centroid() {
        let l = Polygon::new(pts(&[(0., 0.), (2., 0.), (2., 1.), (1., 1.), (1., 2.), (0., 2.)]));
        // decomposition oracle: [0,2]x[0,1] (area 2) plus [0,1]x[1,2] (area 1)
        let expected = (2.0 * 1.0 + 1.0 * 0.5) / 3.0;
        let c = l.centroid().unwrap();
        assert_relative_eq!(c.x, expected, epsilon = 1e-12);
        assert_relative_eq!(c.y, expected, epsilon = 1e-12);
        assert_relative_eq!(expected, 5.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(l.area(), 3.0);
        assert!(l.is_simple());
    }

    #[test]
    fn closing_vertex_is_dropped_and_orientation_ignored() {
        let cw = Polygon::new(pts(&[(0., 0.), (0., 1.), (1., 1.), (1., 0.), (0., 0.)]));
        assert_eq!(cw.exterior.len(), 4);
        assert_relative_eq!(cw.area(), 1.0);
        let c = cw.centroid().unwrap();
        assert_relative_eq!(c.x, 0.5);
    }

    #[test]
    fn bowtie_is_not_simple() {
        let bow = Polygon::new(pts(&[(0., 0.), (1., 1.), (1., 0.), (0., 1.)]));
        assert!(!bow.is_simple());
        let line = Polygon::new(pts(&[(0., 0.), (1., 0.), (2., 0.)]));
        assert!(!line.is_simple());
    }

    #[test]
    fn hole_reduces_area_and_containment() {
        let p = Polygon::with_holes(
            pts(&[(0., 0.), (4., 0.), (4., 4.), (0., 4.)]),
            vec![pts(&[(1., 1.), (1., 3.), (3., 3.), (3., 1.)])],
        );
        assert_relative_eq!(p.area(), 12.0);
        assert!(!p.contains(&Point::new(2., 2.)));
        assert!(p.contains(&Point::new(0.5, 2.)));
        let c = p.centroid().unwrap();
        assert_relative_eq!(c.x, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn closest_point_perpendicular_and_clamped() {
        let s = Segment::new(Point::new(0., 0.), Point::new(10., 0.));
        let (p, t) = s.closest_point(&Point::new(5., 10.));
        assert_eq!(p, Point::new(5., 0.));
        assert_relative_eq!(t, 0.5);
        let (p, t) = s.closest_point(&Point::new(15., 10.));
        assert_eq!(p, Point::new(10., 0.));
        assert_eq!(t, 1.0);
        assert_relative_eq!(s.distance_to(&Point::new(15., 10.)), 125f64.sqrt());
    }

    #[test]
    fn segment_crossing_and_overlap() {
        let h = Segment::new(Point::new(-1., 0.), Point::new(1., 0.));
        let v = Segment::new(Point::new(0., -1.), Point::new(0., 1.));
        match h.intersect(&v) {
            SegmentIntersection::Point { point, t, u } => {
                assert_relative_eq!(point.x, 0.0);
                assert_relative_eq!(t, 0.5);
                assert_relative_eq!(u, 0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
        let a = Segment::new(Point::new(0., 0.), Point::new(2., 0.));
        let b = Segment::new(Point::new(1., 0.), Point::new(3., 0.));
        assert_eq!(a.intersect(&b), SegmentIntersection::Overlap { t0: 0.5, t1: 1.0 });
        let c = Segment::new(Point::new(0., 1.), Point::new(2., 1.));
        assert_eq!(a.intersect(&c), SegmentIntersection::None);
    }

    #[test]
    fn intersection_area_rectangles_and_concave() {
        let a = Rect::new(0., 0., 2., 2.).to_polygon();
        let b = Rect::new(1., 1., 3., 3.).to_polygon();
        assert_relative_eq!(a.intersection_area(&b), 1.0, epsilon = 1e-12);
        let l = Polygon::new(pts(&[(0., 0.), (2., 0.), (2., 1.), (1., 1.), (1., 2.), (0., 2.)]));
        let unit = Rect::new(1., 1., 2., 2.).to_polygon();
        assert_relative_eq!(l.intersection_area(&unit), 0.0, epsilon = 1e-12);
        let big = Rect::new(-5., -5., 5., 5.).to_polygon();
        assert_relative_eq!(l.intersection_area(&big), 3.0, epsilon = 1e-12);
        assert_relative_eq!(big.intersection_area(&l), 3.0, epsilon = 1e-12);
    }
}
