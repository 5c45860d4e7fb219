//! Screening of a field in a square annulus: tiling with integer charges,
//! local Neumann problems, transition points and the screened field.

mod build;

pub use build::{
    build_transition, gluing_check, jitter_family, FluxReport, GluingReport, ScreeningEnergy, ScreeningResult, SubRect,
};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::energy::TruncationParam;
use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};
use crate::potential::EquilibriumMeasure;
use crate::quadrature::GaussLegendre;

/// Frozen constant of the screened energy bound `energy ≤ C·energy_scale`,
/// calibrated over l ∈ {4, 8, 16} and two decades of flux amplitude (observed ratio ≤ 5.85).
pub const ENERGY_BOUND_CONSTANT: f64 = 8.0;

/// Background density with exact (or quadrature) rectangle masses.
pub trait Background: Sync {
    fn density(&self, p: Point) -> f64;
    fn mass(&self, r: &Rect) -> f64;
}

impl Background for EquilibriumMeasure {
    fn density(&self, p: Point) -> f64 {
        self.density_at(p)
    }

    fn mass(&self, r: &Rect) -> f64 {
        self.mass_in_rect(r)
    }
}

/// A density given by a smooth function; masses by 4×4 Gauss–Legendre on
/// unit-sized pieces.
pub struct SmoothBackground<F: Fn(Point) -> f64 + Sync> {
    pub f: F,
}

impl<F: Fn(Point) -> f64 + Sync> Background for SmoothBackground<F> {
    fn density(&self, p: Point) -> f64 {
        (self.f)(p)
    }

    fn mass(&self, r: &Rect) -> f64 {
        let gl = GaussLegendre::new(4);
        let nx = r.width().ceil().max(1.0) as usize;
        let ny = r.height().ceil().max(1.0) as usize;
        let (dx, dy) = (r.width() / nx as f64, r.height() / ny as f64);
        let mut acc = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                let x0 = r.x0 + i as f64 * dx;
                let y0 = r.y0 + j as f64 * dy;
                acc += gl.integrate_rect(&Rect::new(x0, y0, x0 + dx, y0 + dy), &self.f);
            }
        }
        acc
    }
}

/// Piecewise-constant normal component `E·n` on the boundary of the square
/// `C(center, side)`, `per_side` equal segments per side, ordered
/// counterclockwise from the south-west corner: south (W→E), east (S→N),
/// north (E→W), west (N→S).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterFlux {
    pub center: Point,
    pub side: f64,
    pub per_side: usize,
    pub values: Vec<f64>,
}

const SIDE_NORMALS: [Point; 4] = [Point::new(0.0, -1.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0), Point::new(-1.0, 0.0)];

impl OuterFlux {
    pub fn zeros(center: Point, side: f64, per_side: usize) -> Result<Self> {
        Self::from_values(center, side, per_side, vec![0.0; 4 * per_side])
    }

    pub fn from_values(center: Point, side: f64, per_side: usize, values: Vec<f64>) -> Result<Self> {
        if !(side > 0.0) || per_side == 0 || values.len() != 4 * per_side || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("boundary flux needs 4·per_side finite values on a positive side".into()));
        }
        Ok(OuterFlux { center, side, per_side, values })
    }

    /// Average of `f(p, n)` over each segment.
    pub fn from_fn(center: Point, side: f64, per_side: usize, f: impl Fn(Point, Point) -> f64) -> Result<Self> {
        let gl = GaussLegendre::new(6);
        let hs = side / per_side as f64;
        let mut values = Vec::with_capacity(4 * per_side);
        for k in 0..4 * per_side {
            let s0 = k as f64 * hs;
            let n = SIDE_NORMALS[k / per_side];
            let avg = gl.integrate(s0, s0 + hs, |s| f(Self::point_at(center, side, s), n)) / hs;
            values.push(avg);
        }
        Self::from_values(center, side, per_side, values)
    }

    fn point_at(c: Point, side: f64, s: f64) -> Point {
        let (x0, y0) = (c.x - 0.5 * side, c.y - 0.5 * side);
        let (x1, y1) = (x0 + side, y0 + side);
        match ((s / side).floor() as usize).min(3) {
            0 => Point::new(x0 + s, y0),
            1 => Point::new(x1, y0 + (s - side)),
            2 => Point::new(x1 - (s - 2.0 * side), y1),
            _ => Point::new(x0, y1 - (s - 3.0 * side)),
        }
    }

    pub fn segment_len(&self) -> f64 {
        self.side / self.per_side as f64
    }

    /// `∮ E·n`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.segment_len()
    }

    /// `∮ |E·n|²`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.segment_len()
    }

    pub fn scaled(&self, factor: f64) -> OuterFlux {
        OuterFlux { values: self.values.iter().map(|v| v * factor).collect(), ..self.clone() }
    }

    /// Arclength interval of a straight segment lying on the side whose
    /// outward normal is `n`, or `None`.
    pub fn arc_range(&self, a: Point, b: Point, n: Point) -> Option<(f64, f64)> {
        let side = self.side;
        let tol = 1e-9 * side.max(1.0);
        let (x0, y0) = (self.center.x - 0.5 * side, self.center.y - 0.5 * side);
        let (x1, y1) = (x0 + side, y0 + side);
        let k = SIDE_NORMALS.iter().position(|m| (*m - n).norm() < 1e-9)?;
        let (on, sa, sb) = match k {
            0 => ((a.y - y0).abs() < tol && (b.y - y0).abs() < tol, a.x - x0, b.x - x0),
            1 => ((a.x - x1).abs() < tol && (b.x - x1).abs() < tol, side + a.y - y0, side + b.y - y0),
            2 => ((a.y - y1).abs() < tol && (b.y - y1).abs() < tol, 2.0 * side + x1 - a.x, 2.0 * side + x1 - b.x),
            _ => ((a.x - x0).abs() < tol && (b.x - x0).abs() < tol, 3.0 * side + y1 - a.y, 3.0 * side + y1 - b.y),
        };
        let lo = (k as f64) * side;
        on.then(|| (sa.min(sb).clamp(lo, lo + side), sa.max(sb).clamp(lo, lo + side)))
    }

    /// `∫ E·n` over the arclength interval `[s0, s1]`.
    pub fn integral_between(&self, s0: f64, s1: f64) -> f64 {
        let hs = self.segment_len();
        let k0 = ((s0 / hs).floor().max(0.0) as usize).min(self.values.len() - 1);
        let mut acc = 0.0;
        let mut k = k0;
        while k < self.values.len() {
            let a = (k as f64 * hs).max(s0);
            let b = ((k + 1) as f64 * hs).min(s1);
            if b <= a && (k as f64) * hs >= s1 {
                break;
            }
            if b > a {
                acc += self.values[k] * (b - a);
            }
            k += 1;
        }
        acc
    }

    /// `∫ E·n` over a segment of the boundary; zero when the segment is not on it.
    pub fn segment_integral(&self, a: Point, b: Point, n: Point) -> f64 {
        self.arc_range(a, b, n).map_or(0.0, |(s0, s1)| self.integral_between(s0, s1))
    }
}

/// Prescribed normal flux on part of a tiled region's boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FluxBoundary {
    /// No prescribed flux.
    None,
    /// `E·n` on the outer square, normals pointing out of the square.
    Outer(OuterFlux),
    /// The same data seen from outside the square: a tile edge with outward
    /// normal `−n` carries `−E·n`.
    Inner(OuterFlux),
}

impl FluxBoundary {
    /// `∫ E·n` over a tile edge with outward normal `n`.
    pub fn edge_integral(&self, a: Point, b: Point, n: Point) -> f64 {
        match self {
            FluxBoundary::None => 0.0,
            FluxBoundary::Outer(f) => f.segment_integral(a, b, n),
            FluxBoundary::Inner(f) => -f.segment_integral(a, b, n * -1.0),
        }
    }

    pub fn carries(&self, a: Point, b: Point, n: Point) -> bool {
        match self {
            FluxBoundary::None => false,
            FluxBoundary::Outer(f) => f.arc_range(a, b, n).is_some(),
            FluxBoundary::Inner(f) => f.arc_range(a, b, n * -1.0).is_some(),
        }
    }
}

/// Prescribed flux `∫ E·n` through a straight piece of a tile's boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeFlux {
    pub a: Point,
    pub b: Point,
    /// Unit normal pointing out of the tile.
    pub normal: Point,
    pub flux: f64,
}

/// A tile with its background mass, boundary flux and integer charge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tile {
    pub id: usize,
    pub rect: Rect,
    /// `∫_H μ`.
    pub mass: f64,
    /// `∫ E·n` over the edges on the prescribed boundary.
    pub boundary_flux: f64,
    /// Flux through shared edges moving a fractional charge between strips.
    pub transfers: Vec<EdgeFlux>,
    /// `m̄ = ∫_H μ / |H|`.
    pub m_bar: f64,
    /// `m = charge / |H|`.
    pub m: f64,
    pub charge: usize,
    /// Exact tile charge minus `charge` (absorbed by rescaling `m`).
    pub rounding: f64,
}

impl Tile {
    /// Tile charge before rounding: `∫μ − (1/2π)·(outgoing flux)`.
    pub fn exact_charge(&self) -> f64 {
        self.mass - (self.boundary_flux + self.transfers.iter().map(|t| t.flux).sum::<f64>()) / (2.0 * PI)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningOptions {
    /// Cell size of the per-tile Neumann solves.
    pub solve_spacing: f64,
    /// Cells per side of the per-point Neumann solves.
    pub point_cells: usize,
    /// Spacing of the sampled output field.
    pub field_spacing: f64,
    /// Constant `C` in `M ≤ C·min(m_low², 1)·l³`.
    pub inequality_constant: f64,
    /// Hölder exponent used for `C_μ`.
    pub kappa: f64,
}

impl Default for ScreeningOptions {
    fn default() -> Self {
        ScreeningOptions { solve_spacing: 0.25, point_cells: 15, field_spacing: 0.5, inequality_constant: 0.01, kappa: 1.0 }
    }
}

/// A square annulus `C(z, R₂) ∖ C(z, R₁)` (sides `R₁ < R₂`) with background
/// and the normal field on the outer boundary.
pub struct ScreeningProblem<'a> {
    pub center: Point,
    pub r1: f64,
    pub r2: f64,
    pub l: f64,
    pub background: &'a dyn Background,
    pub boundary_flux: OuterFlux,
    pub eta1: TruncationParam,
    pub options: ScreeningOptions,
    pub m_low: f64,
    pub m_high: f64,
    pub c_mu: f64,
    /// `M = ∮ |E·n|²`.
    pub flux_energy: f64,
}

impl<'a> ScreeningProblem<'a> {
    pub fn new(
        center: Point,
        r1: f64,
        r2: f64,
        l: f64,
        background: &'a dyn Background,
        boundary_flux: OuterFlux,
        eta1: TruncationParam,
    ) -> Result<Self> {
        Self::with_options(center, r1, r2, l, background, boundary_flux, eta1, ScreeningOptions::default())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_options(
        center: Point,
        r1: f64,
        r2: f64,
        l: f64,
        background: &'a dyn Background,
        boundary_flux: OuterFlux,
        eta1: TruncationParam,
        options: ScreeningOptions,
    ) -> Result<Self> {
        if !(l > 0.0 && r1 > 0.0 && r2 > r1) {
            return Err(Error::Validation(format!("need 0 < R1 < R2 and l > 0, got R1={r1}, R2={r2}, l={l}")));
        }
        let gap = r2 - r1;
        let eps = 1e-9 * r2;
        if gap < 2.0 * l - eps || gap > 3.0 * l + eps {
            return Err(Error::Validation(format!("R2 − R1 = {gap} must lie in [2l, 3l] with l = {l}")));
        }
        if (boundary_flux.side - r2).abs() > eps || (boundary_flux.center - center).norm() > eps {
            return Err(Error::Validation("boundary flux must live on ∂C(z, R2)".into()));
        }
        let (m_low, m_high, c_mu) = density_bounds(background, center, r1, r2, options.kappa);
        if !(m_low > 0.0) {
            return Err(Error::Validation(format!("background must be positive on the annulus, min {m_low}")));
        }
        let flux_energy = boundary_flux.energy();
        Ok(ScreeningProblem { center, r1, r2, l, background, boundary_flux, eta1, options, m_low, m_high, c_mu, flux_energy })
    }

    pub fn annulus_area(&self) -> f64 {
        self.r2 * self.r2 - self.r1 * self.r1
    }

    pub fn annulus_mass(&self) -> f64 {
        annulus_strips(self.center, self.r1, self.r2, self.l)
            .iter()
            .map(|s| self.background.mass(&(s.make)(s.start, s.end)))
            .sum()
    }

    /// `∫_{annulus} μ − (1/2π) ∮ E·n`: the number of transition points.
    pub fn expected_points(&self) -> f64 {
        self.annulus_mass() - self.boundary_flux.integral() / (2.0 * PI)
    }

    /// Right-hand side of the screening inequality.
    pub fn inequality_bound(&self) -> f64 {
        self.options.inequality_constant * self.m_low.powi(2).min(1.0) * self.l.powi(3)
    }

    /// `l·M + |A|·C_μ·l^{2+κ} + |A|·log(1/η₁)`.
    pub fn energy_scale(&self) -> f64 {
        let a = self.annulus_area();
        self.l * self.flux_energy + a * self.c_mu * self.l.powf(2.0 + self.options.kappa) - a * self.eta1.eta.ln()
    }

    pub(crate) fn inner_rect(&self) -> Rect {
        Rect::square(self.center, self.r1)
    }

    pub(crate) fn outer_rect(&self) -> Rect {
        Rect::square(self.center, self.r2)
    }
}

/// Min, max and Hölder constant of the density sampled on the annulus.
fn density_bounds(bg: &dyn Background, c: Point, r1: f64, r2: f64, kappa: f64) -> (f64, f64, f64) {
    let step = ((r2 * r2 - r1 * r1) / 1500.0).sqrt().max(0.05);
    let n = (r2 / step).ceil() as usize;
    let h = r2 / n as f64;
    let inner = Rect::square(c, r1);
    let mut samples = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let p = Point::new(c.x - 0.5 * r2 + (i as f64 + 0.5) * h, c.y - 0.5 * r2 + (j as f64 + 0.5) * h);
            if !inner.contains(p) {
                samples.push((p, bg.density(p)));
            }
        }
    }
    let lo = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let mut holder: f64 = 0.0;
    for (k, a) in samples.iter().enumerate() {
        for b in &samples[k + 1..] {
            holder = holder.max((a.1 - b.1).abs() / a.0.dist(b.0).powf(kappa));
        }
    }
    (lo, hi, holder)
}

/// A row of tiles swept from `start` to `end` along one coordinate.
pub(crate) struct Strip {
    pub start: f64,
    pub end: f64,
    pub pieces: usize,
    pub make: Box<dyn Fn(f64, f64) -> Rect + Sync>,
}

fn pieces(len: f64, l: f64) -> usize {
    ((len / l).round() as usize).max(1)
}

/// Bottom and top span the full outer width; left and right fill between.
/// Swept counterclockwise so consecutive strips share an edge.
pub(crate) fn annulus_strips(c: Point, r1: f64, r2: f64, l: f64) -> Vec<Strip> {
    let (x0, x1, y0, y1) = (c.x - 0.5 * r2, c.x + 0.5 * r2, c.y - 0.5 * r2, c.y + 0.5 * r2);
    let (i0, i1, j0, j1) = (c.x - 0.5 * r1, c.x + 0.5 * r1, c.y - 0.5 * r1, c.y + 0.5 * r1);
    let b = 0.5 * (r2 - r1);
    let bottom = move |a: f64, b: f64| Rect::new(a.min(b), y0, a.max(b), j0);
    let top = move |a: f64, b: f64| Rect::new(a.min(b), j1, a.max(b), y1);
    // Corner blocks are strips of their own so every inner corner is a tile vertex.
    vec![
        Strip { start: x0, end: i0, pieces: pieces(b, l), make: Box::new(bottom) },
        Strip { start: i0, end: i1, pieces: pieces(r1, l), make: Box::new(bottom) },
        Strip { start: i1, end: x1, pieces: pieces(b, l), make: Box::new(bottom) },
        Strip { start: j0, end: j1, pieces: pieces(r1, l), make: Box::new(move |a, b| Rect::new(i1, a.min(b), x1, a.max(b))) },
        Strip { start: x1, end: i1, pieces: pieces(b, l), make: Box::new(top) },
        Strip { start: i1, end: i0, pieces: pieces(r1, l), make: Box::new(top) },
        Strip { start: i0, end: x0, pieces: pieces(b, l), make: Box::new(top) },
        Strip { start: j1, end: j0, pieces: pieces(r1, l), make: Box::new(move |a, b| Rect::new(x0, a.min(b), i0, a.max(b))) },
    ]
}

/// Rows of a filled square, swept alternately left-to-right and back.
pub(crate) fn square_strips(c: Point, side: f64, l: f64) -> Vec<Strip> {
    let rows = pieces(side, l);
    let h = side / rows as f64;
    let (x0, x1, y0) = (c.x - 0.5 * side, c.x + 0.5 * side, c.y - 0.5 * side);
    (0..rows)
        .map(|r| {
            let (ya, yb) = (y0 + r as f64 * h, y0 + (r + 1) as f64 * h);
            let (start, end) = if r % 2 == 0 { (x0, x1) } else { (x1, x0) };
            Strip { start, end, pieces: pieces(side, l), make: Box::new(move |a: f64, b: f64| Rect::new(a.min(b), ya, a.max(b), yb)) }
        })
        .collect()
}

/// The common edge of two touching rectangles, with the normal out of `a`.
fn shared_edge(a: &Rect, b: &Rect) -> Option<(Point, Point, Point)> {
    let tol = 1e-9 * (a.width() + a.height());
    let (lo_x, hi_x) = (a.x0.max(b.x0), a.x1.min(b.x1));
    let (lo_y, hi_y) = (a.y0.max(b.y0), a.y1.min(b.y1));
    if (a.y1 - b.y0).abs() < tol && hi_x > lo_x + tol {
        return Some((Point::new(lo_x, a.y1), Point::new(hi_x, a.y1), Point::new(0.0, 1.0)));
    }
    if (a.y0 - b.y1).abs() < tol && hi_x > lo_x + tol {
        return Some((Point::new(lo_x, a.y0), Point::new(hi_x, a.y0), Point::new(0.0, -1.0)));
    }
    if (a.x1 - b.x0).abs() < tol && hi_y > lo_y + tol {
        return Some((Point::new(a.x1, lo_y), Point::new(a.x1, hi_y), Point::new(1.0, 0.0)));
    }
    if (a.x0 - b.x1).abs() < tol && hi_y > lo_y + tol {
        return Some((Point::new(a.x0, lo_y), Point::new(a.x0, hi_y), Point::new(-1.0, 0.0)));
    }
    None
}

pub(crate) fn rect_edges(r: &Rect) -> [(Point, Point, Point); 4] {
    [
        (Point::new(r.x0, r.y0), Point::new(r.x1, r.y0), Point::new(0.0, -1.0)),
        (Point::new(r.x1, r.y0), Point::new(r.x1, r.y1), Point::new(1.0, 0.0)),
        (Point::new(r.x1, r.y1), Point::new(r.x0, r.y1), Point::new(0.0, 1.0)),
        (Point::new(r.x0, r.y1), Point::new(r.x0, r.y0), Point::new(-1.0, 0.0)),
    ]
}

/// Tile the strips in order, moving each interior cut by at most `l/10`
/// so every tile charge is an integer; the fractional remainder of a
/// strip's last tile crosses into the next strip through their shared edge.
pub(crate) fn tile_strips(
    strips: &[Strip],
    background: &dyn Background,
    flux: &FluxBoundary,
    l: f64,
    m_low: f64,
) -> Result<Vec<Tile>> {
    let boundary_of = |r: &Rect| -> f64 { rect_edges(r).iter().map(|&(a, b, n)| flux.edge_integral(a, b, n)).sum() };
    let exact = |r: &Rect, extra: f64| background.mass(r) - (boundary_of(r) + extra) / (2.0 * PI);
    let mut tiles: Vec<Tile> = Vec::new();
    let mut pending: Option<EdgeFlux> = None;
    let slack = 0.1 * l;
    for (si, strip) in strips.iter().enumerate() {
        let dir = (strip.end - strip.start).signum();
        let step = (strip.end - strip.start) / strip.pieces as f64;
        let mut a = strip.start;
        for j in 0..strip.pieces {
            let mut transfers: Vec<EdgeFlux> = pending.take().into_iter().collect();
            let incoming: f64 = transfers.iter().map(|t| t.flux).sum();
            let last = j + 1 == strip.pieces;
            let (c, q) = if !last {
                let nominal = strip.start + (j + 1) as f64 * step;
                let (lo, hi) = (nominal - dir * slack, nominal + dir * slack);
                let f = |c: f64| exact(&(strip.make)(a, c), incoming);
                let (f_lo, f_hi, f_nom) = (f(lo), f(hi), f(nominal));
                let target = f_nom.round().clamp(f_lo.min(f_hi).ceil(), f_lo.max(f_hi).floor());
                if !(target >= f_lo.min(f_hi) && target <= f_lo.max(f_hi)) {
                    return Err(Error::Screening(format!(
                        "tile {}: no integer charge reachable within l/10 (charge range {f_lo:.4}..{f_hi:.4})",
                        tiles.len()
                    )));
                }
                let (mut u, mut v) = (lo, hi);
                let up = f_hi > f_lo;
                for _ in 0..200 {
                    let mid = 0.5 * (u + v);
                    if (f(mid) < target) == up {
                        u = mid;
                    } else {
                        v = mid;
                    }
                }
                let c = 0.5 * (u + v);
                (c, f(c))
            } else {
                let c = strip.end;
                let mut q = exact(&(strip.make)(a, c), incoming);
                if si + 1 < strips.len() {
                    let frac = q - q.round();
                    let next = &strips[si + 1];
                    let next_step = (next.end - next.start) / next.pieces as f64;
                    let neighbour = (next.make)(next.start, next.start + next_step);
                    let (ea, eb, n) = shared_edge(&(strip.make)(a, c), &neighbour)
                        .ok_or_else(|| Error::Screening(format!("strips {si} and {} do not touch", si + 1)))?;
                    let out = EdgeFlux { a: ea, b: eb, normal: n, flux: 2.0 * PI * frac };
                    transfers.push(out);
                    pending = Some(EdgeFlux { normal: n * -1.0, flux: -out.flux, ..out });
                    q -= frac;
                }
                (c, q)
            };
            let rect = (strip.make)(a, c);
            let area = rect.area();
            let charge = q.round();
            if charge < 1.0 {
                return Err(Error::Screening(format!("tile {} would carry no point (charge {q:.4})", tiles.len())));
            }
            let mass = background.mass(&rect);
            let tile = Tile {
                id: tiles.len(),
                rect,
                mass,
                boundary_flux: boundary_of(&rect),
                transfers,
                m_bar: mass / area,
                m: charge / area,
                charge: charge as usize,
                rounding: q - charge,
            };
            if (tile.m - tile.m_bar).abs() >= 0.5 * m_low {
                return Err(Error::Screening(format!(
                    "tile {}: |m − m̄| = {:.4} not below m_low/2 = {:.4}",
                    tile.id,
                    (tile.m - tile.m_bar).abs(),
                    0.5 * m_low
                )));
            }
            tiles.push(tile);
            a = c;
        }
    }
    Ok(tiles)
}

/// Split the annulus into tiles with integer charges.
pub fn tile_annulus(problem: &ScreeningProblem) -> Result<Vec<Tile>> {
    let bound = problem.inequality_bound();
    if problem.flux_energy > bound {
        return Err(Error::ScreeningInequality { m: problem.flux_energy, bound });
    }
    let strips = annulus_strips(problem.center, problem.r1, problem.r2, problem.l);
    tile_strips(&strips, problem.background, &FluxBoundary::Outer(problem.boundary_flux.clone()), problem.l, problem.m_low)
}
