//! Planar points, point configurations and uniform rectangular grids.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    #[inline]
    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    #[inline]
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    #[inline]
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    #[inline]
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    #[inline]
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Coordinate frame of a configuration: macroscopic positions `x_i` or
/// blown-up positions `x'_i = √N x_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Macroscopic,
    BlownUp,
}

impl Frame {
    pub fn as_str(self) -> &'static str {
        match self {
            Frame::Macroscopic => "macroscopic",
            Frame::BlownUp => "blown_up",
        }
    }
}

impl std::str::FromStr for Frame {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macroscopic" | "macro" => Ok(Frame::Macroscopic),
            "blown_up" | "blownup" | "blown-up" => Ok(Frame::BlownUp),
            other => Err(Error::Validation(format!("unknown frame '{other}'"))),
        }
    }
}

/// A finite list of planar positions tagged with its frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointConfiguration {
    pub points: Vec<Point>,
    pub frame: Frame,
}

impl PointConfiguration {
    pub fn new(points: Vec<Point>, frame: Frame) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::Validation(format!("point {i} has a non-finite coordinate")));
        }
        Ok(PointConfiguration { points, frame })
    }

    pub fn empty(frame: Frame) -> Self {
        PointConfiguration { points: Vec::new(), frame }
    }

    pub fn macroscopic(points: Vec<Point>) -> Result<Self> {
        Self::new(points, Frame::Macroscopic)
    }

    pub fn blown_up(points: Vec<Point>) -> Result<Self> {
        Self::new(points, Frame::BlownUp)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn require_frame(&self, frame: Frame) -> Result<()> {
        if self.frame != frame {
            return Err(Error::WrongFrame { expected: frame, found: self.frame });
        }
        Ok(())
    }

    /// Smallest pairwise distance, `+∞` for fewer than two points.
    pub fn min_gap(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            for q in &self.points[i + 1..] {
                best = best.min(p.dist(*q));
            }
        }
        best
    }

    /// Energy operations need pairwise-distinct points.
    pub fn require_distinct(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            for (j, q) in self.points.iter().enumerate().skip(i + 1) {
                if p == q {
                    return Err(Error::CoincidentPoints { i, j });
                }
            }
        }
        Ok(())
    }

    pub fn translated(&self, shift: Point) -> Self {
        PointConfiguration {
            points: self.points.iter().map(|&p| p + shift).collect(),
            frame: self.frame,
        }
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    /// Square of side `side` centred at `c` (the `C(c, side)` of the notation).
    pub fn square(c: Point, side: f64) -> Self {
        let a = 0.5 * side;
        Rect::new(c.x - a, c.y - a, c.x + a, c.y + a)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    /// Half-open membership `[x0, x1) × [y0, y1)` so that adjacent windows
    /// partition the plane.
    #[inline]
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x < self.x1 && p.y >= self.y0 && p.y < self.y1
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x0 >= self.x0 - 1e-12
            && other.x1 <= self.x1 + 1e-12
            && other.y0 >= self.y0 - 1e-12
            && other.y1 <= self.y1 + 1e-12
    }

    pub fn overlap_area(&self, other: &Rect) -> f64 {
        let w = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let h = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0);
        w * h
    }

    /// Euclidean distance from `p` to the rectangle (zero inside).
    pub fn distance_to(&self, p: Point) -> f64 {
        let dx = (self.x0 - p.x).max(0.0).max(p.x - self.x1);
        let dy = (self.y0 - p.y).max(0.0).max(p.y - self.y1);
        dx.hypot(dy)
    }

    /// Distance from an interior point to the boundary.
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        (p.x - self.x0)
            .min(self.x1 - p.x)
            .min(p.y - self.y0)
            .min(self.y1 - p.y)
    }

    pub fn translated(&self, s: Point) -> Rect {
        Rect::new(self.x0 + s.x, self.y0 + s.y, self.x1 + s.x, self.y1 + s.y)
    }
}

/// Uniform rectangular grid. `origin` is the lower-left corner; a grid can be
/// read cell-centred (`center`) or node-based (`node`) depending on the owner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: Point,
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn new(origin: Point, spacing: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Validation(format!("grid spacing must be positive, got {spacing}")));
        }
        if nx == 0 || ny == 0 {
            return Err(Error::Validation("grid must have at least one cell per axis".into()));
        }
        if !origin.is_finite() {
            return Err(Error::Validation("grid origin must be finite".into()));
        }
        Ok(Grid { origin, spacing, nx, ny })
    }

    /// Cell-centred grid with spacing `h` covering `rect` (rounded outward).
    pub fn covering(rect: Rect, h: f64) -> Result<Self> {
        let nx = ((rect.width() / h) - 1e-9).ceil().max(1.0) as usize;
        let ny = ((rect.height() / h) - 1e-9).ceil().max(1.0) as usize;
        let c = rect.center();
        let origin = Point::new(c.x - 0.5 * nx as f64 * h, c.y - 0.5 * ny as f64 * h);
        Grid::new(origin, h, nx, ny)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major index (y outer, x inner).
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.origin.x + (i as f64 + 0.5) * self.spacing,
            self.origin.y + (j as f64 + 0.5) * self.spacing,
        )
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.origin.x + i as f64 * self.spacing,
            self.origin.y + j as f64 * self.spacing,
        )
    }

    pub fn cell_rect(&self, i: usize, j: usize) -> Rect {
        let p = self.node(i, j);
        Rect::new(p.x, p.y, p.x + self.spacing, p.y + self.spacing)
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing * self.spacing
    }

    /// Extent of the cells, `[origin, origin + n·h]`.
    pub fn bounds(&self) -> Rect {
        Rect::new(
            self.origin.x,
            self.origin.y,
            self.origin.x + self.nx as f64 * self.spacing,
            self.origin.y + self.ny as f64 * self.spacing,
        )
    }

    /// Cell containing `p`, if any.
    pub fn locate(&self, p: Point) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin.x) / self.spacing;
        let fy = (p.y - self.origin.y) / self.spacing;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (i, j) = (fx.floor() as usize, fy.floor() as usize);
        (i < self.nx && j < self.ny).then_some((i, j))
    }

    pub fn scaled(&self, factor: f64) -> Grid {
        Grid { origin: self.origin * factor, spacing: self.spacing * factor, nx: self.nx, ny: self.ny }
    }

    pub fn translated(&self, shift: Point) -> Grid {
        Grid { origin: self.origin + shift, ..*self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covering_grid_contains_rect() {
        let r = Rect::square(Point::ORIGIN, 2.5);
        let g = Grid::covering(r, 0.01).unwrap();
        assert_eq!(g.nx, 250);
        assert!(g.bounds().contains_rect(&r));
        assert!((g.center(0, 0).x + 1.245).abs() < 1e-12);
    }

    #[test]
    fn locate_matches_cell_rect() {
        let g = Grid::new(Point::new(-1.0, -2.0), 0.5, 4, 8).unwrap();
        let (i, j) = g.locate(Point::new(0.3, 1.1)).unwrap();
        assert!(g.cell_rect(i, j).contains(Point::new(0.3, 1.1)));
        assert!(g.locate(Point::new(1.01, 0.0)).is_none());
    }

    #[test]
    fn distinct_check() {
        let c = PointConfiguration::macroscopic(vec![Point::new(0.0, 0.0), Point::new(0.0, 0.0)])
            .unwrap();
        assert!(matches!(c.require_distinct(), Err(Error::CoincidentPoints { i: 0, j: 1 })));
        assert!(PointConfiguration::macroscopic(vec![Point::new(f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn overlap_area_partial() {
        let a = Rect::new(0.0, 0.0, 1.0, 1.0);
        let b = Rect::new(0.5, 0.25, 2.0, 2.0);
        assert!((a.overlap_area(&b) - 0.375).abs() < 1e-15);
    }
}
