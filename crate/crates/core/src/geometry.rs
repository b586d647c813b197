//! Planar primitives shared by the diagram builder, the index and the
//! simulator: points, sites, boxes, circumcenters, edge clipping and the
//! brute-force nearest-site oracle.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for degeneracy tests (collinearity, coincident sites).
pub const EPS_GEOM: f64 = 1e-9;

/// Identifier of a site. Doubles as the sensor address.
pub type SiteId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("points are collinear, no finite circumcenter")]
    CollinearInput,
    #[error("site set is empty")]
    EmptySiteSet,
    #[error("coordinate is not finite: ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("invalid bounding box: min must be strictly below max on both axes")]
    InvalidBox,
}

#[derive(Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Like [`Point::new`] but rejects NaN and infinities.
    pub fn try_new(x: f64, y: f64) -> Result<Self, GeometryError> {
        if x.is_finite() && y.is_finite() {
            Ok(Self { x, y })
        } else {
            Err(GeometryError::NonFinite(x, y))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn dist2(self, other: Self) -> f64 {
        let d = self - other;
        d.dot(d)
    }

    pub fn dist(self, other: Self) -> f64 {
        self.dist2(other).sqrt()
    }

    pub fn midpoint(self, other: Self) -> Self {
        Self::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl Add for Point {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: SiteId,
    pub position: Point,
}

impl Site {
    pub const fn new(id: SiteId, x: f64, y: f64) -> Self {
        Self {
            id,
            position: Point::new(x, y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

impl BoundingBox {
    pub fn new(min: Point, max: Point) -> Result<Self, GeometryError> {
        if !min.is_finite() || !max.is_finite() || min.x >= max.x || min.y >= max.y {
            return Err(GeometryError::InvalidBox);
        }
        Ok(Self { min, max })
    }

    pub fn from_coords(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        Self::new(Point::new(x0, y0), Point::new(x1, y1))
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

    /// Closed containment.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Open containment, the requirement for diagram sites.
    pub fn strictly_contains(&self, p: Point) -> bool {
        p.x > self.min.x && p.x < self.max.x && p.y > self.min.y && p.y < self.max.y
    }

    /// Corners in counter-clockwise order starting at `min`.
    pub fn corners(&self) -> [Point; 4] {
        [
            self.min,
            Point::new(self.max.x, self.min.y),
            self.max,
            Point::new(self.min.x, self.max.y),
        ]
    }
}

/// Twice the signed area of triangle `abc`; positive when counter-clockwise.
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

/// Center of the circle through three points.
///
/// Computed relative to `a` to limit cancellation on large coordinates.
pub fn circumcenter(a: Point, b: Point, c: Point) -> Result<Point, GeometryError> {
    let ab = b - a;
    let ac = c - a;
    let d = 2.0 * ab.cross(ac);
    if (0.5 * d).abs() < EPS_GEOM {
        return Err(GeometryError::CollinearInput);
    }
    let ab2 = ab.dot(ab);
    let ac2 = ac.dot(ac);
    let ux = (ac.y * ab2 - ab.y * ac2) / d;
    let uy = (ab.x * ac2 - ac.x * ab2) / d;
    Ok(Point::new(a.x + ux, a.y + uy))
}

/// Id of the site closest to `q`; equidistant sites resolve to the smallest id.
pub fn nearest_site_bruteforce(sites: &[Site], q: Point) -> Result<SiteId, GeometryError> {
    let mut best: Option<(f64, SiteId)> = None;
    for s in sites {
        let d = s.position.dist2(q);
        best = match best {
            Some((bd, bid)) if bd < d || (bd == d && bid <= s.id) => Some((bd, bid)),
            _ => Some((d, s.id)),
        };
    }
    best.map(|(_, id)| id).ok_or(GeometryError::EmptySiteSet)
}

/// A straight edge before clipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Edge {
    /// Infinite line through `point` along `dir`.
    Line {
        point: Point,
        dir: Point,
    },
    /// Half-line starting at `origin` along `dir`.
    Ray {
        origin: Point,
        dir: Point,
    },
    Segment {
        a: Point,
        b: Point,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub fn length(&self) -> f64 {
        self.a.dist(self.b)
    }

    pub fn midpoint(&self) -> Point {
        self.a.midpoint(self.b)
    }

    pub fn lerp(&self, t: f64) -> Point {
        self.a + (self.b - self.a) * t
    }
}

/// Intersection of `edge` with `bbox` (Liang-Barsky). `None` when empty.
pub fn clip_to_box(edge: Edge, bbox: &BoundingBox) -> Option<Segment> {
    let (origin, dir, mut t0, mut t1) = match edge {
        Edge::Line { point, dir } => (point, dir, f64::NEG_INFINITY, f64::INFINITY),
        Edge::Ray { origin, dir } => (origin, dir, 0.0, f64::INFINITY),
        Edge::Segment { a, b } => (a, b - a, 0.0, 1.0),
    };
    if dir.x == 0.0 && dir.y == 0.0 {
        // Degenerate direction: a point, or a zero-length segment.
        return bbox.contains(origin).then_some(Segment {
            a: origin,
            b: origin,
        });
    }
    let slabs = [
        (dir.x, origin.x, bbox.min.x, bbox.max.x),
        (dir.y, origin.y, bbox.min.y, bbox.max.y),
    ];
    for (d, o, lo, hi) in slabs {
        if d == 0.0 {
            if o < lo || o > hi {
                return None;
            }
            continue;
        }
        let mut ta = (lo - o) / d;
        let mut tb = (hi - o) / d;
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    let clamp = |p: Point| {
        Point::new(
            p.x.clamp(bbox.min.x, bbox.max.x),
            p.y.clamp(bbox.min.y, bbox.max.y),
        )
    };
    Some(Segment {
        a: clamp(origin + dir * t0),
        b: clamp(origin + dir * t1),
    })
}

/// Signed area of a simple polygon (positive when counter-clockwise).
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    0.5 * (0..n)
        .map(|i| poly[i].cross(poly[(i + 1) % n]))
        .sum::<f64>()
}

/// True when every turn of the counter-clockwise polygon is non-negative
/// within `tol` (relative to the edge lengths).
pub fn is_convex_ccw(poly: &[Point], tol: f64) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    (0..n).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = poly[(i + 2) % n];
        let scale = (b - a).dot(b - a).sqrt() * (c - b).dot(c - b).sqrt();
        orient(a, b, c) >= -tol * scale.max(1.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn circumcenter_of_right_triangle_is_hypotenuse_midpoint() {
        let c = circumcenter(p(0.0, 0.0), p(4.0, 0.0), p(0.0, 4.0)).unwrap();
        assert!((c.x - 2.0).abs() < 1e-12 && (c.y - 2.0).abs() < 1e-12);
    }

    #[test]
    fn circumcenter_rejects_collinear() {
        assert_eq!(
            circumcenter(p(0.0, 0.0), p(1.0, 0.0), p(2.0, 0.0)),
            Err(GeometryError::CollinearInput)
        );
    }

    #[test]
    fn circumcenter_random_triples_are_equidistant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 100 {
            let mut q = || p(rng.random_range(-1e4..1e4), rng.random_range(-1e4..1e4));
            let (a, b, c) = (q(), q(), q());
            let Ok(center) = circumcenter(a, b, c) else {
                continue;
            };
            let (da, db, dc) = (center.dist(a), center.dist(b), center.dist(c));
            assert!((da - db).abs() < 1e-9, "{da} {db}");
            assert!((da - dc).abs() < 1e-9, "{da} {dc}");
            checked += 1;
        }
    }

    #[test]
    fn nearest_site_examples() {
        let one = [Site::new(0, 0.0, 0.0)];
        assert_eq!(nearest_site_bruteforce(&one, p(5.0, 5.0)), Ok(0));
        let two = [Site::new(0, 0.0, 0.0), Site::new(1, 10.0, 0.0)];
        assert_eq!(nearest_site_bruteforce(&two, p(4.0, 0.0)), Ok(0));
        assert_eq!(nearest_site_bruteforce(&two, p(5.0, 0.0)), Ok(0));
        let swapped = [Site::new(1, 10.0, 0.0), Site::new(0, 0.0, 0.0)];
        assert_eq!(nearest_site_bruteforce(&swapped, p(5.0, 0.0)), Ok(0));
        assert_eq!(
            nearest_site_bruteforce(&[], p(0.0, 0.0)),
            Err(GeometryError::EmptySiteSet)
        );
    }

    #[test]
    fn clip_examples() {
        let bbox = BoundingBox::from_coords(0.0, 0.0, 10.0, 10.0).unwrap();
        let s = clip_to_box(
            Edge::Line {
                point: p(5.0, 3.0),
                dir: p(0.0, 1.0),
            },
            &bbox,
        )
        .unwrap();
        assert_eq!((s.a, s.b), (p(5.0, 0.0), p(5.0, 10.0)));

        let inside = Edge::Segment {
            a: p(1.0, 2.0),
            b: p(3.0, 4.0),
        };
        let s = clip_to_box(inside, &bbox).unwrap();
        assert_eq!((s.a, s.b), (p(1.0, 2.0), p(3.0, 4.0)));

        let s = clip_to_box(
            Edge::Ray {
                origin: p(5.0, 5.0),
                dir: p(1.0, 0.0),
            },
            &bbox,
        )
        .unwrap();
        assert_eq!((s.a, s.b), (p(5.0, 5.0), p(10.0, 5.0)));

        let outside = Edge::Ray {
            origin: p(11.0, 5.0),
            dir: p(1.0, 1.0),
        };
        assert!(clip_to_box(outside, &bbox).is_none());
    }

    #[test]
    fn box_validation() {
        assert!(BoundingBox::from_coords(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoundingBox::from_coords(0.0, 0.0, f64::NAN, 1.0).is_err());
        assert!(Point::try_new(f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn convexity_check() {
        let sq = [p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)];
        assert!(is_convex_ccw(&sq, 1e-9));
        assert!((polygon_area(&sq) - 1.0).abs() < 1e-15);
        let dart = [p(0.0, 0.0), p(2.0, 0.0), p(1.0, 0.2), p(1.0, 2.0)];
        assert!(!is_convex_ccw(&dart, 1e-9));
    }
}
