//! Planar primitives used by the environment: points, velocity-like vectors,
//! and validated simple polygons with boundary-inclusive containment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance below which a point is treated as lying on a polygon edge.
pub const EDGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("polygon has zero area")]
    DegenerateArea,
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
}

/// A location in the field. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        euclidean_distance(*self, *other)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

/// A planar vector (velocity or force). Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

pub fn euclidean_distance(p: Point2, q: Point2) -> f64 {
    (p.x - q.x).hypot(p.y - q.y)
}

/// Twice the signed area of triangle (a, b, c); positive when counter-clockwise.
fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test, touching endpoints included.
pub fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

pub fn distance_to_segment(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return euclidean_distance(p, a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    euclidean_distance(p, Point2::new(a.x + t * dx, a.y + t * dy))
}

fn signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum();
    twice / 2.0
}

/// A simple polygon with positive area, vertices stored counter-clockwise.
///
/// The closing edge from the last vertex back to the first is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl TryFrom<Vec<Point2>> for Polygon {
    type Error = GeometryError;

    fn try_from(vertices: Vec<Point2>) -> Result<Self, Self::Error> {
        validate_polygon(vertices)
    }
}

impl From<Polygon> for Vec<Point2> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

/// Checks simplicity and area, then returns the polygon in counter-clockwise order.
///
/// When the input is clockwise the first vertex is kept in place and the rest
/// are reversed, so validating an already-normalized polygon is a no-op.
pub fn validate_polygon(mut vertices: Vec<Point2>) -> Result<Polygon, GeometryError> {
    let n = vertices.len();
    if n < 3 {
        return Err(GeometryError::TooFewVertices(n));
    }
    if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
        return Err(GeometryError::NonFinite(i));
    }
    let edge = |i: usize| (vertices[i], vertices[(i + 1) % n]);
    for i in 0..n {
        let (a, b) = edge(i);
        if a == b {
            return Err(GeometryError::SelfIntersecting(i, i));
        }
        for j in (i + 1)..n {
            let (c, d) = edge(j);
            let adjacent_next = j == i + 1;
            let adjacent_wrap = i == 0 && j == n - 1;
            let crosses = if adjacent_next {
                // shared vertex b == c; overlap only if the edges fold back on each other
                orient(a, b, d) == 0.0 && (on_segment(a, b, d) || on_segment(c, d, a))
            } else if adjacent_wrap {
                // shared vertex d == a
                orient(a, b, c) == 0.0 && (on_segment(a, b, c) || on_segment(c, d, b))
            } else {
                segments_intersect(a, b, c, d)
            };
            if crosses {
                return Err(GeometryError::SelfIntersecting(i, j));
            }
        }
    }
    let area = signed_area(&vertices);
    let (min, max) = bounds_of(&vertices);
    let scale = (max.x - min.x).max(max.y - min.y);
    if area.abs() <= 1e-12 * scale * scale {
        return Err(GeometryError::DegenerateArea);
    }
    if area < 0.0 {
        vertices[1..].reverse();
    }
    Ok(Polygon { vertices })
}

fn bounds_of(vertices: &[Point2]) -> (Point2, Point2) {
    vertices.iter().fold(
        (
            Point2::new(f64::INFINITY, f64::INFINITY),
            Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        ),
        |(lo, hi), v| {
            (
                Point2::new(lo.x.min(v.x), lo.y.min(v.y)),
                Point2::new(hi.x.max(v.x), hi.y.max(v.y)),
            )
        },
    )
}

impl Polygon {
    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounds(&self) -> (Point2, Point2) {
        bounds_of(&self.vertices)
    }

    pub fn distance_to_boundary(&self, p: Point2) -> f64 {
        self.edges()
            .map(|(a, b)| distance_to_segment(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Boundary-inclusive containment: points within [`EDGE_TOLERANCE`] of an
    /// edge are inside, everything else is decided by ray casting.
    pub fn contains(&self, p: Point2) -> bool {
        if !p.is_finite() {
            return false;
        }
        if self.distance_to_boundary(p) <= EDGE_TOLERANCE {
            return true;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

pub fn contains(poly: &Polygon, p: Point2) -> bool {
    poly.contains(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Polygon {
        validate_polygon(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(euclidean_distance(Point2::new(0.0, 0.0), Point2::new(3.0, 4.0)), 5.0);
        assert_eq!(euclidean_distance(Point2::new(7.0, 2.0), Point2::new(7.0, 2.0)), 0.0);
        let d = euclidean_distance(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0));
        assert!((d - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn square_containment() {
        let sq = square();
        assert!(sq.contains(Point2::new(0.5, 0.5)));
        assert!(!sq.contains(Point2::new(2.0, 2.0)));
        assert!(sq.contains(Point2::new(1.0, 0.5)));
        assert!(sq.contains(Point2::new(0.0, 0.0)));
        assert!(!sq.contains(Point2::new(1.0 + 1e-6, 0.5)));
        assert!(!sq.contains(Point2::new(f64::NAN, 0.5)));
    }

    #[test]
    fn validation_errors() {
        assert_eq!(
            validate_polygon(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)]),
            Err(GeometryError::TooFewVertices(2))
        );
        let bowtie = vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 2.0),
            Point2::new(2.0, 0.0),
            Point2::new(0.0, 2.0),
        ];
        assert!(matches!(
            validate_polygon(bowtie),
            Err(GeometryError::SelfIntersecting(..))
        ));
        let collinear = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(2.0, 2.0),
        ];
        assert!(validate_polygon(collinear).is_err());
        let inf = vec![
            Point2::new(0.0, 0.0),
            Point2::new(f64::INFINITY, 0.0),
            Point2::new(0.0, 1.0),
        ];
        assert_eq!(validate_polygon(inf), Err(GeometryError::NonFinite(1)));
    }

    #[test]
    fn folded_back_edge_is_rejected() {
        let spike = vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
        ];
        assert!(matches!(
            validate_polygon(spike),
            Err(GeometryError::SelfIntersecting(..))
        ));
    }

    #[test]
    fn clockwise_input_is_normalized() {
        let cw = validate_polygon(vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
        ])
        .unwrap();
        assert!(cw.area() > 0.0);
        assert_eq!(cw.vertices()[0], Point2::new(0.0, 0.0));
        assert_eq!(cw, square());
        let again = validate_polygon(cw.vertices().to_vec()).unwrap();
        assert_eq!(again, cw);
    }

    #[test]
    fn serde_roundtrip_revalidates() {
        let json = serde_json::to_string(&square()).unwrap();
        assert_eq!(json, "[[0.0,0.0],[1.0,0.0],[1.0,1.0],[0.0,1.0]]");
        let back: Polygon = serde_json::from_str(&json).unwrap();
        assert_eq!(back, square());
        assert!(serde_json::from_str::<Polygon>("[[0,0],[2,2],[2,0],[0,2]]").is_err());
    }

    #[test]
    fn concave_polygon() {
        // L-shape
        let l = validate_polygon(vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 2.0),
            Point2::new(0.0, 2.0),
        ])
        .unwrap();
        assert!(l.contains(Point2::new(0.5, 1.5)));
        assert!(!l.contains(Point2::new(1.5, 1.5)));
        assert_eq!(l.area(), 3.0);
    }
}
