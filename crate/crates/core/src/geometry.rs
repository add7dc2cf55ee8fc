//! Planar geometry used for junction interiors.

use serde::{Deserialize, Serialize};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        libm::hypot(self.x, self.y)
    }

    pub fn unit(self) -> Point {
        let n = self.norm();
        if n == 0.0 {
            self
        } else {
            self.scale(1.0 / n)
        }
    }

    /// Right-hand normal of a heading (y axis points north).
    pub fn right(self) -> Point {
        Point::new(self.y, -self.x)
    }

    pub fn distance(self, o: Point) -> f64 {
        self.sub(o).norm()
    }

    /// Compass bearing of this vector in radians, clockwise from north, in `[0, 2π)`.
    pub fn bearing(self) -> f64 {
        let b = libm::atan2(self.x, self.y);
        if b < 0.0 {
            b + 2.0 * core::f64::consts::PI
        } else {
            b
        }
    }
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    b.sub(a).cross(c.sub(a))
}

fn sign(v: f64) -> i8 {
    if v > EPS {
        1
    } else if v < -EPS {
        -1
    } else {
        0
    }
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) - EPS && p.x <= a.x.max(b.x) + EPS && p.y >= a.y.min(b.y) - EPS && p.y <= a.y.max(b.y) + EPS
}

/// Closed-segment intersection test (touching and collinear overlap count).
pub fn segments_intersect(a1: Point, a2: Point, b1: Point, b2: Point) -> bool {
    let d1 = sign(orient(b1, b2, a1));
    let d2 = sign(orient(b1, b2, a2));
    let d3 = sign(orient(a1, a2, b1));
    let d4 = sign(orient(a1, a2, b2));
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && on_segment(b1, b2, a1))
        || (d2 == 0 && on_segment(b1, b2, a2))
        || (d3 == 0 && on_segment(a1, a2, b1))
        || (d4 == 0 && on_segment(a1, a2, b2))
}

/// True if any segment of `a` touches any segment of `b`.
pub fn polylines_intersect(a: &[Point], b: &[Point]) -> bool {
    a.windows(2).any(|sa| b.windows(2).any(|sb| segments_intersect(sa[0], sa[1], sb[0], sb[1])))
}

pub fn polyline_length(p: &[Point]) -> f64 {
    p.windows(2).map(|s| s[0].distance(s[1])).sum()
}

/// Intersection of the infinite lines `p + t·d` and `q + s·e`, if not parallel.
pub fn line_intersection(p: Point, d: Point, q: Point, e: Point) -> Option<Point> {
    let denom = d.cross(e);
    if denom.abs() < 1e-9 {
        return None;
    }
    let t = q.sub(p).cross(e) / denom;
    Some(p.add(d.scale(t)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_segments() {
        let a = (Point::new(-1.0, 0.0), Point::new(1.0, 0.0));
        let b = (Point::new(0.0, -1.0), Point::new(0.0, 1.0));
        assert!(segments_intersect(a.0, a.1, b.0, b.1));
    }

    #[test]
    fn parallel_disjoint() {
        let a = (Point::new(-1.0, 0.0), Point::new(1.0, 0.0));
        let b = (Point::new(-1.0, 1.0), Point::new(1.0, 1.0));
        assert!(!segments_intersect(a.0, a.1, b.0, b.1));
    }

    #[test]
    fn collinear_overlap_and_touch() {
        let a = (Point::new(0.0, 0.0), Point::new(2.0, 0.0));
        let b = (Point::new(1.0, 0.0), Point::new(3.0, 0.0));
        assert!(segments_intersect(a.0, a.1, b.0, b.1));
        let c = (Point::new(2.0, 0.0), Point::new(2.0, 5.0));
        assert!(segments_intersect(a.0, a.1, c.0, c.1));
        let d = (Point::new(2.1, 0.0), Point::new(3.0, 0.0));
        assert!(!segments_intersect(a.0, a.1, d.0, d.1));
    }

    #[test]
    fn bearing_is_clockwise_from_north() {
        let q = core::f64::consts::FRAC_PI_2;
        assert!((Point::new(0.0, 1.0).bearing()).abs() < 1e-12);
        assert!((Point::new(1.0, 0.0).bearing() - q).abs() < 1e-12);
        assert!((Point::new(0.0, -1.0).bearing() - 2.0 * q).abs() < 1e-12);
        assert!((Point::new(-1.0, 0.0).bearing() - 3.0 * q).abs() < 1e-12);
    }
}
