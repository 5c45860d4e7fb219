use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitDisc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{rect_edges, Background, FluxBoundary, ScreeningOptions, ScreeningProblem, Tile};
use crate::error::{Error, Result};
use crate::fieldgrid::{neumann_poisson, BoundaryFlux, CellLattice, GridField, NeumannSolution};
use crate::geometry::{Grid, Point, PointConfiguration, Rect};
use crate::quadrature::{neg_log_rect, GaussLegendre};

/// Sub-rectangle of area `1/m` of a tile, with its point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubRect {
    pub rect: Rect,
    pub tile: usize,
    pub point: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningEnergy {
    /// `Σ_i ∫ |∇h₁|²`.
    pub tile_fields: f64,
    /// `Σ_α ∫ |∇h₂,η|²`.
    pub point_fields: f64,
    /// `2 Σ_α ∫ ∇h₁·∇h₂`.
    pub cross: f64,
}

#[derive(Debug, Clone)]
struct Solved {
    sol: NeumannSolution,
    flux: BoundaryFlux,
    /// Uniform shift removed from the right-hand side.
    shift: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScreeningResult {
    pub tiles: Vec<Tile>,
    pub subrects: Vec<SubRect>,
    /// Index range of each tile's sub-rectangles.
    pub tile_ranges: Vec<(usize, usize)>,
    pub points: PointConfiguration,
    pub n_tran: usize,
    /// Point count predicted by the background mass and the boundary flux.
    pub expected_points: f64,
    /// `∫ |E^tran_η₁|²` over the tiled region.
    pub energy: f64,
    pub energy_parts: ScreeningEnergy,
    pub eta1: f64,
    pub m_high: f64,
    pub min_gap: f64,
    pub min_boundary_distance: f64,
    pub jitter_radius: f64,
    /// `n_tran · log(π r²)` for jitter radius `r`.
    #[serde(with = "neg_inf_as_null")]
    pub log_volume: f64,
    pub options: ScreeningOptions,
    pub outer: Rect,
    pub inner: Option<Rect>,
    pub flux: FluxBoundary,
    pub field: GridField,
    #[serde(skip)]
    tile_solves: Vec<Solved>,
    #[serde(skip)]
    point_solves: Vec<Solved>,
}

/// Split a tile of integer charge `q` into `q` equal rectangles arranged in
/// rows (or columns), choosing the row count with the smallest aspect ratio.
pub(crate) fn split_tile(r: &Rect, q: usize) -> (Vec<Rect>, f64) {
    let aspect_of = |len: f64, across: f64, rows: usize| -> f64 {
        let base = q / rows;
        let extra = q % rows;
        let mut worst: f64 = 1.0;
        for c in [base, base + 1] {
            if c == 0 || (c == base + 1 && extra == 0) {
                continue;
            }
            let (w, h) = (len / c as f64, across * c as f64 / q as f64);
            worst = worst.max(w / h).max(h / w);
        }
        worst
    };
    let mut best = (f64::INFINITY, 1, true);
    for rows in 1..=q {
        for horizontal in [true, false] {
            let (len, across) = if horizontal { (r.width(), r.height()) } else { (r.height(), r.width()) };
            let a = aspect_of(len, across, rows);
            if a < best.0 {
                best = (a, rows, horizontal);
            }
        }
    }
    let (aspect, rows, horizontal) = best;
    let (base, extra) = (q / rows, q % rows);
    let (len, across) = if horizontal { (r.width(), r.height()) } else { (r.height(), r.width()) };
    let mut out = Vec::with_capacity(q);
    let mut offset = 0.0;
    for k in 0..rows {
        let c = base + usize::from(k < extra);
        let thick = across * c as f64 / q as f64;
        let step = len / c as f64;
        for m in 0..c {
            let (u0, u1) = (m as f64 * step, if m + 1 == c { len } else { (m + 1) as f64 * step });
            let (v0, v1) = (offset, if k + 1 == rows { across } else { offset + thick });
            out.push(if horizontal {
                Rect::new(r.x0 + u0, r.y0 + v0, r.x0 + u1, r.y0 + v1)
            } else {
                Rect::new(r.x0 + v0, r.y0 + u0, r.x0 + v1, r.y0 + u1)
            });
        }
        offset += thick;
    }
    (out, aspect)
}

fn face_endpoints(mid: Point, n: Point, len: f64) -> (Point, Point) {
    let t = Point::new(-n.y, n.x) * (0.5 * len);
    (mid - t, mid + t)
}

/// Length of the overlap of two collinear segments with the same normal.
fn collinear_overlap(a: Point, b: Point, c: Point, d: Point, n: Point) -> f64 {
    let tol = 1e-9 * (1.0 + a.norm());
    if n.x == 0.0 {
        if (a.y - c.y).abs() > tol {
            return 0.0;
        }
        (a.x.max(b.x).min(c.x.max(d.x)) - a.x.min(b.x).max(c.x.min(d.x))).max(0.0)
    } else {
        if (a.x - c.x).abs() > tol {
            return 0.0;
        }
        (a.y.max(b.y).min(c.y.max(d.y)) - a.y.min(b.y).max(c.y.min(d.y))).max(0.0)
    }
}

fn tile_boundary_flux(t: &Tile, lat: &CellLattice, flux: &FluxBoundary) -> BoundaryFlux {
    BoundaryFlux {
        values: (0..lat.boundary_len())
            .map(|k| {
                let (mid, n, len) = lat.boundary_face(k);
                let (a, b) = face_endpoints(mid, n, len);
                let mut g = flux.edge_integral(a, b, n);
                for tr in &t.transfers {
                    if (tr.normal - n).norm() < 1e-12 {
                        let ov = collinear_overlap(a, b, tr.a, tr.b, n);
                        g += tr.flux * ov / tr.a.dist(tr.b);
                    }
                }
                g / len
            })
            .collect(),
    }
}

fn shift_of(sol: &NeumannSolution) -> f64 {
    sol.defect / (2.0 * PI * sol.lattice.rect.area())
}

fn solve_tile(t: &Tile, bg: &dyn Background, flux: &FluxBoundary, h: f64) -> Result<Solved> {
    let wrap = |e: Error| Error::Tile { tile: t.id, source: Box::new(e) };
    let lat = CellLattice::with_spacing(t.rect, h).map_err(wrap)?;
    let area = lat.cell_area();
    // The exact tile charge keeps the data compatible; any rounding shows up
    // as a uniform residual charge in the tile.
    let m_exact = t.exact_charge() / t.rect.area();
    let mut rhs = Vec::with_capacity(lat.len());
    for j in 0..lat.ny {
        for i in 0..lat.nx {
            rhs.push(m_exact - bg.mass(&lat.cell_rect(i, j)) / area);
        }
    }
    let bf = tile_boundary_flux(t, &lat, flux);
    let sol = neumann_poisson(&lat, &rhs, &bf).map_err(wrap)?;
    Ok(Solved { shift: shift_of(&sol), sol, flux: bf })
}

/// Angle subtended at `p` by the segment `[a, b]`.
fn subtended(p: Point, a: Point, b: Point) -> f64 {
    let (u, v) = (a - p, b - p);
    (u.x * v.y - u.y * v.x).atan2(u.dot(v)).abs()
}

/// `w` with `−Δw = −2πm`, `∂_n w = −∂_n(−log|x − p|)`.
fn solve_point(r: &Rect, p: Point, m: f64, cells: usize) -> Result<Solved> {
    let lat = CellLattice::new(*r, cells, cells)?;
    let rhs = vec![-m; lat.len()];
    let bf = BoundaryFlux {
        values: (0..lat.boundary_len())
            .map(|k| {
                let (mid, n, len) = lat.boundary_face(k);
                let (a, b) = face_endpoints(mid, n, len);
                subtended(p, a, b) / len
            })
            .collect(),
    };
    let sol = neumann_poisson(&lat, &rhs, &bf)?;
    Ok(Solved { shift: shift_of(&sol), sol, flux: bf })
}

/// Dirichlet energy including the half cells along the boundary.
fn field_energy(s: &Solved) -> f64 {
    let lat = &s.sol.lattice;
    let mut e = s.sol.dirichlet_energy();
    for k in 0..lat.boundary_len() {
        let (_, n, len) = lat.boundary_face(k);
        let d = if n.x == 0.0 { lat.hy() } else { lat.hx() };
        e += s.flux.values[k].powi(2) * len * 0.5 * d;
    }
    e
}

/// `∮_{∂R} Φ ∂_nΦ` for `Φ = −log|x − p|`.
fn boundary_log_term(r: &Rect, p: Point) -> f64 {
    let gl = GaussLegendre::new(32);
    let edge = |d: f64, s0: f64, s1: f64| -> f64 {
        let (fa, fb) = ((s0 / d).atan(), (s1 / d).atan());
        (fb - fa) * d.ln() - gl.integrate(fa, fb, |f| f.cos().ln())
    };
    edge(p.y - r.y0, r.x0 - p.x, r.x1 - p.x)
        + edge(r.x1 - p.x, r.y0 - p.y, r.y1 - p.y)
        + edge(r.y1 - p.y, r.x0 - p.x, r.x1 - p.x)
        + edge(p.x - r.x0, r.y0 - p.y, r.y1 - p.y)
}

/// `∫_R |∇(Φ + w)_η|²` for the point solution.
fn point_energy(r: &Rect, p: Point, m: f64, s: &Solved, eta: f64) -> Result<f64> {
    let rho = r.distance_to_boundary(p);
    if eta >= rho {
        return Err(Error::UnderResolved { eta, reason: format!("η-disk leaves its cell (distance {rho:.3e})") });
    }
    let sterm = boundary_log_term(r, p);
    Ok(-sterm - 2.0 * PI * eta.ln() - 4.0 * PI * m * neg_log_rect(p, r) + field_energy(s))
}

/// Piecewise-linear (lowest-order Raviart–Thomas) gradient reconstruction.
fn rt0_gradient(s: &Solved, x: Point) -> Point {
    let l = &s.sol.lattice;
    let (nx, ny) = (l.nx, l.ny);
    let fx = ((x.x - l.rect.x0) / l.hx()).clamp(0.0, nx as f64);
    let fy = ((x.y - l.rect.y0) / l.hy()).clamp(0.0, ny as f64);
    let i = (fx.floor() as usize).min(nx - 1);
    let j = (fy.floor() as usize).min(ny - 1);
    let (tx, ty) = (fx - i as f64, fy - j as f64);
    let g = &s.flux.values;
    let left = if i == 0 { -g[2 * nx + ny + (ny - 1 - j)] } else { (s.sol.get(i, j) - s.sol.get(i - 1, j)) / l.hx() };
    let right = if i + 1 == nx { g[nx + j] } else { (s.sol.get(i + 1, j) - s.sol.get(i, j)) / l.hx() };
    let down = if j == 0 { -g[i] } else { (s.sol.get(i, j) - s.sol.get(i, j - 1)) / l.hy() };
    let up = if j + 1 == ny { g[nx + ny + (nx - 1 - i)] } else { (s.sol.get(i, j + 1) - s.sol.get(i, j)) / l.hy() };
    Point::new((1.0 - tx) * left + tx * right, (1.0 - ty) * down + ty * up)
}

fn contains_closed(r: &Rect, p: Point) -> bool {
    p.x >= r.x0 && p.x <= r.x1 && p.y >= r.y0 && p.y <= r.y1
}

impl ScreeningResult {
    /// `E^tran(x)`; zero outside the tiles. Needs the solves, so not
    /// available on a deserialised result.
    pub fn field_at(&self, x: Point) -> Point {
        if self.tile_solves.is_empty() {
            return Point::ORIGIN;
        }
        let Some(t) = self.tiles.iter().position(|t| contains_closed(&t.rect, x)) else {
            return Point::ORIGIN;
        };
        let mut e = rt0_gradient(&self.tile_solves[t], x);
        let (a, b) = self.tile_ranges[t];
        if let Some(k) = (a..b).find(|&k| contains_closed(&self.subrects[k].rect, x)) {
            let d = x - self.subrects[k].point;
            let r2 = d.norm_sq();
            if r2 > 0.0 {
                e = e + d * (-1.0 / r2);
            }
            e = e + rt0_gradient(&self.point_solves[k], x);
        }
        e
    }

    pub fn has_solves(&self) -> bool {
        !self.tile_solves.is_empty()
    }

    /// Discrete flux conditions on every face of the tile and point lattices.
    pub fn flux_report(&self) -> FluxReport {
        let mut rep = FluxReport::default();
        for (t, s) in self.tiles.iter().zip(&self.tile_solves) {
            let lat = &s.sol.lattice;
            for k in 0..lat.boundary_len() {
                let (mid, n, len) = lat.boundary_face(k);
                let (a, b) = face_endpoints(mid, n, len);
                let actual = s.flux.values[k] * len;
                let on_outer = self.flux.carries(a, b, n);
                let expected = self.flux.edge_integral(a, b, n)
                    + t.transfers
                        .iter()
                        .filter(|tr| (tr.normal - n).norm() < 1e-12)
                        .map(|tr| tr.flux * collinear_overlap(a, b, tr.a, tr.b, n) / tr.a.dist(tr.b))
                        .sum::<f64>();
                let err = (actual - expected).abs();
                if on_outer {
                    rep.prescribed_max_error = rep.prescribed_max_error.max(err);
                    rep.prescribed_total += actual;
                } else if self.inner.is_some_and(|r| on_rect_boundary(&r, a, b)) {
                    rep.inner_max = rep.inner_max.max(actual.abs());
                } else {
                    rep.internal_max_error = rep.internal_max_error.max(err);
                }
            }
            let total: f64 = s.flux.values.iter().enumerate().map(|(k, v)| v * lat.boundary_face(k).2).sum();
            let defect = (total / (2.0 * PI) + t.charge as f64 - t.mass).abs();
            rep.tile_charge_defect = rep.tile_charge_defect.max(defect);
        }
        for (sr, s) in self.subrects.iter().zip(&self.point_solves) {
            for (a, b, _) in rect_edges(&sr.rect) {
                let w = edge_flux_of(s, a, b);
                rep.point_edge_max = rep.point_edge_max.max((w - subtended(sr.point, a, b)).abs());
            }
            let lat = &s.sol.lattice;
            let m = self.tiles[sr.tile].m;
            for j in 0..lat.ny {
                for i in 0..lat.nx {
                    let c = lat.cell_rect(i, j);
                    let mut div = 2.0 * PI * (-m - s.shift) * lat.cell_area();
                    div += cell_outflux(s, i, j);
                    let phi: f64 = rect_edges(&c).iter().map(|&(a, b, _)| signed_angle(sr.point, a, b)).sum();
                    let inside = c.contains(sr.point);
                    let defect = (div + phi + 2.0 * PI * f64::from(u8::from(inside))).abs();
                    if inside {
                        rep.charge_cell_defect = rep.charge_cell_defect.max(defect);
                    } else {
                        rep.cell_defect = rep.cell_defect.max(defect);
                    }
                }
            }
        }
        rep
    }
}

fn on_rect_boundary(r: &Rect, a: Point, b: Point) -> bool {
    let tol = 1e-9 * (r.width() + r.height());
    let vert = |x: f64| (a.x - x).abs() < tol && (b.x - x).abs() < tol && a.y.min(b.y) >= r.y0 - tol && a.y.max(b.y) <= r.y1 + tol;
    let horiz = |y: f64| (a.y - y).abs() < tol && (b.y - y).abs() < tol && a.x.min(b.x) >= r.x0 - tol && a.x.max(b.x) <= r.x1 + tol;
    vert(r.x0) || vert(r.x1) || horiz(r.y0) || horiz(r.y1)
}

/// Flux of `∇w` through a whole edge of its own lattice rectangle.
fn edge_flux_of(s: &Solved, a: Point, b: Point) -> f64 {
    let lat = &s.sol.lattice;
    (0..lat.boundary_len())
        .filter_map(|k| {
            let (mid, n, len) = lat.boundary_face(k);
            let (p, q) = face_endpoints(mid, n, len);
            let ov = collinear_overlap(p, q, a, b, n);
            (ov > 0.0).then(|| s.flux.values[k] * ov)
        })
        .sum()
}

/// Outward flux of the discrete gradient through cell `(i, j)`.
fn cell_outflux(s: &Solved, i: usize, j: usize) -> f64 {
    let l = &s.sol.lattice;
    let (nx, ny) = (l.nx, l.ny);
    let g = &s.flux.values;
    let c = s.sol.get(i, j);
    let (hx, hy) = (l.hx(), l.hy());
    let west = if i == 0 { g[2 * nx + ny + (ny - 1 - j)] } else { (s.sol.get(i - 1, j) - c) / hx };
    let east = if i + 1 == nx { g[nx + j] } else { (s.sol.get(i + 1, j) - c) / hx };
    let south = if j == 0 { g[i] } else { (s.sol.get(i, j - 1) - c) / hy };
    let north = if j + 1 == ny { g[nx + ny + (nx - 1 - i)] } else { (s.sol.get(i, j + 1) - c) / hy };
    (west + east) * hy + (south + north) * hx
}

/// `∫_{[a,b]} ∂_n Φ` along a cell edge traversed counterclockwise.
fn signed_angle(p: Point, a: Point, b: Point) -> f64 {
    let (u, v) = (a - p, b - p);
    -(u.x * v.y - u.y * v.x).atan2(u.dot(v))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FluxReport {
    /// Largest face error against the prescribed boundary flux.
    pub prescribed_max_error: f64,
    pub prescribed_total: f64,
    /// Largest face flux on the inner boundary (should vanish).
    pub inner_max: f64,
    /// Largest face error on edges shared between tiles.
    pub internal_max_error: f64,
    /// Largest `|∮ ∇w·n − ∮ −∂_nΦ|` over sub-rectangle edges.
    pub point_edge_max: f64,
    /// Largest per-tile `|(1/2π)∮ E·n + charge − mass|`.
    pub tile_charge_defect: f64,
    /// Largest discrete Gauss-law defect over point-lattice cells without a charge.
    pub cell_defect: f64,
    /// The same over the cells holding a charge.
    pub charge_cell_defect: f64,
}

struct Assembly<'a> {
    background: &'a dyn Background,
    flux: FluxBoundary,
    outer: Rect,
    inner: Option<Rect>,
    eta1: f64,
    m_high: f64,
    expected_points: f64,
    options: ScreeningOptions,
}

fn place_points(tiles: &[Tile]) -> (Vec<SubRect>, Vec<(usize, usize)>) {
    let mut subrects = Vec::new();
    let mut ranges = Vec::new();
    for t in tiles {
        let start = subrects.len();
        let (rects, _) = split_tile(&t.rect, t.charge);
        subrects.extend(rects.into_iter().map(|r| SubRect { rect: r, tile: t.id, point: r.center() }));
        ranges.push((start, subrects.len()));
    }
    (subrects, ranges)
}

fn finish(
    asm: &Assembly,
    tiles: Vec<Tile>,
    subrects: Vec<SubRect>,
    tile_ranges: Vec<(usize, usize)>,
    tile_solves: Vec<Solved>,
    jitter_radius: f64,
) -> Result<ScreeningResult> {
    let eta = asm.eta1;
    let cells = asm.options.point_cells;
    let point_solves: Vec<Solved> = subrects
        .par_iter()
        .map(|s| {
            solve_point(&s.rect, s.point, tiles[s.tile].m, cells)
                .map_err(|e| Error::Tile { tile: s.tile, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    let per_point: Vec<(f64, f64)> = subrects
        .par_iter()
        .zip(&point_solves)
        .map(|(s, ps)| {
            let e = point_energy(&s.rect, s.point, tiles[s.tile].m, ps, eta)?;
            let h1 = &tile_solves[s.tile].sol;
            let cross = 4.0 * PI * (h1.value_at(s.point) - h1.average_over(&s.rect));
            Ok((e, cross))
        })
        .collect::<Result<_>>()?;
    let parts = ScreeningEnergy {
        tile_fields: tile_solves.iter().map(field_energy).sum(),
        point_fields: per_point.iter().map(|p| p.0).sum(),
        cross: per_point.iter().map(|p| p.1).sum(),
    };
    let points = PointConfiguration::blown_up(subrects.iter().map(|s| s.point).collect())?;
    let n_tran = points.n();
    let min_boundary_distance = points
        .points
        .iter()
        .map(|&p| {
            let d = asm.outer.distance_to_boundary(p);
            asm.inner.map_or(d, |r| d.min(r.distance_to(p)))
        })
        .fold(f64::INFINITY, f64::min);
    let grid = Grid::covering(asm.outer, asm.options.field_spacing)?;
    let mut result = ScreeningResult {
        tiles,
        subrects,
        tile_ranges,
        min_gap: points.min_gap(),
        points,
        n_tran,
        expected_points: asm.expected_points,
        energy: parts.tile_fields + parts.point_fields + parts.cross,
        energy_parts: parts,
        eta1: eta,
        m_high: asm.m_high,
        min_boundary_distance,
        jitter_radius,
        log_volume: n_tran as f64 * (PI * jitter_radius * jitter_radius).ln(),
        options: asm.options,
        outer: asm.outer,
        inner: asm.inner,
        flux: asm.flux.clone(),
        field: GridField { grid, values: Vec::new() },
        tile_solves,
        point_solves,
    };
    let field = GridField::from_fn(grid, |x| result.field_at(x));
    result.field = field;
    Ok(result)
}

fn assemble(asm: &Assembly, tiles: Vec<Tile>) -> Result<ScreeningResult> {
    let tile_solves: Vec<Solved> = tiles
        .par_iter()
        .map(|t| solve_tile(t, asm.background, &asm.flux, asm.options.solve_spacing))
        .collect::<Result<_>>()?;
    let (subrects, ranges) = place_points(&tiles);
    finish(asm, tiles, subrects, ranges, tile_solves, 0.0)
}

/// Solve the tile and point problems and assemble the transition field.
pub fn build_transition(problem: &ScreeningProblem, tiles: Vec<Tile>) -> Result<ScreeningResult> {
    let asm = Assembly {
        background: problem.background,
        flux: FluxBoundary::Outer(problem.boundary_flux.clone()),
        outer: problem.outer_rect(),
        inner: Some(problem.inner_rect()),
        eta1: problem.eta1.eta,
        m_high: problem.m_high,
        expected_points: problem.expected_points(),
        options: problem.options,
    };
    assemble(&asm, tiles)
}

/// Zero-flux tiling of a full square (`inner = None`) or of an annulus with
/// the flux prescribed on its inner boundary, as used around a transition
/// layer.
pub(crate) fn build_region(
    background: &dyn Background,
    outer: Rect,
    inner: Option<Rect>,
    flux: FluxBoundary,
    l: f64,
    eta1: f64,
    options: ScreeningOptions,
) -> Result<ScreeningResult> {
    let c = outer.center();
    let strips = match inner {
        Some(r) => super::annulus_strips(c, r.width(), outer.width(), l),
        None => super::square_strips(c, outer.width(), l),
    };
    let (m_low, m_high, _) = super::density_bounds(background, c, inner.map_or(0.0, |r| r.width()), outer.width(), 1.0);
    let tiles = super::tile_strips(&strips, background, &flux, l, m_low)?;
    let mass: f64 = tiles.iter().map(|t| t.mass).sum();
    let flux_total: f64 = tiles.iter().map(|t| t.boundary_flux).sum();
    let asm = Assembly {
        background,
        flux,
        outer,
        inner,
        eta1,
        m_high,
        expected_points: mass - flux_total / (2.0 * PI),
        options,
    };
    assemble(&asm, tiles)
}

/// Move every point uniformly within a disk of radius
/// `radius_fraction · m_high^{−1/2}` and re-solve the point problems.
pub fn jitter_family(result: &ScreeningResult, radius_fraction: f64, seed: u64) -> Result<ScreeningResult> {
    if !(0.0..=0.1).contains(&radius_fraction) {
        return Err(Error::Validation(format!("jitter radius fraction must lie in [0, 1/10], got {radius_fraction}")));
    }
    if !result.has_solves() {
        return Err(Error::Validation("jitter needs a freshly built screening result".into()));
    }
    let radius = radius_fraction / result.m_high.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subrects: Vec<SubRect> = result
        .subrects
        .iter()
        .map(|s| {
            let [u, v]: [f64; 2] = UnitDisc.sample(&mut rng);
            SubRect { point: s.rect.center() + Point::new(u, v) * radius, ..*s }
        })
        .collect();
    struct NoBackground;
    impl Background for NoBackground {
        fn density(&self, _: Point) -> f64 {
            0.0
        }
        fn mass(&self, _: &Rect) -> f64 {
            0.0
        }
    }
    let asm = Assembly {
        background: &NoBackground,
        flux: result.flux.clone(),
        outer: result.outer,
        inner: result.inner,
        eta1: result.eta1,
        m_high: result.m_high,
        expected_points: result.expected_points,
        options: result.options,
    };
    finish(&asm, result.tiles.clone(), subrects, result.tile_ranges.clone(), result.tile_solves.clone(), radius)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GluingReport {
    pub interior_points: usize,
    pub transition_points: usize,
    pub exterior_points: usize,
    pub total_points: usize,
    pub declared_total: usize,
    /// `|flux out of the transition layer + flux out of the exterior|` on their common square.
    pub outer_interface_mismatch: f64,
    /// Largest face flux on either side of the inner interface.
    pub inner_interface_max: f64,
    /// Largest per-tile and per-cell Gauss-law defect over the three pieces.
    pub max_tile_defect: f64,
    pub max_cell_defect: f64,
    pub max_charge_cell_defect: f64,
}

/// Glue a transition layer between a zero-flux interior filling `C(z, R₁)`
/// and an exterior annulus `C(z, R₃) ∖ C(z, R₂)` carrying the matching flux
/// on `∂C(z, R₂)` and none outside, then audit counts and fluxes.
pub fn gluing_check(
    problem: &ScreeningProblem,
    transition: &ScreeningResult,
    r3: f64,
    declared_total: usize,
) -> Result<GluingReport> {
    let opts = problem.options;
    let interior = build_region(problem.background, problem.inner_rect(), None, FluxBoundary::None, problem.l, problem.eta1.eta, opts)?;
    let exterior = build_region(
        problem.background,
        Rect::square(problem.center, r3),
        Some(problem.outer_rect()),
        FluxBoundary::Inner(problem.boundary_flux.clone()),
        problem.l,
        problem.eta1.eta,
        opts,
    )?;
    let outer_face_total = |r: &ScreeningResult, square: &Rect| -> f64 {
        r.tile_solves
            .iter()
            .map(|s| {
                let lat = &s.sol.lattice;
                (0..lat.boundary_len())
                    .filter_map(|k| {
                        let (mid, n, len) = lat.boundary_face(k);
                        let (a, b) = face_endpoints(mid, n, len);
                        on_rect_boundary(square, a, b).then(|| s.flux.values[k] * len)
                    })
                    .sum::<f64>()
            })
            .sum()
    };
    let r2 = problem.outer_rect();
    let r1 = problem.inner_rect();
    let mismatch = (outer_face_total(transition, &r2) + outer_face_total(&exterior, &r2)).abs();
    let reports = [interior.flux_report(), transition.flux_report(), exterior.flux_report()];
    let interior_edge_max = interior
        .tile_solves
        .iter()
        .flat_map(|s| {
            let lat = s.sol.lattice;
            (0..lat.boundary_len()).filter_map(move |k| {
                let (mid, n, len) = lat.boundary_face(k);
                let (a, b) = face_endpoints(mid, n, len);
                on_rect_boundary(&r1, a, b).then(|| (s.flux.values[k] * len).abs())
            })
        })
        .fold(0.0, f64::max);
    let total = interior.n_tran + transition.n_tran + exterior.n_tran;
    Ok(GluingReport {
        interior_points: interior.n_tran,
        transition_points: transition.n_tran,
        exterior_points: exterior.n_tran,
        total_points: total,
        declared_total,
        outer_interface_mismatch: mismatch,
        inner_interface_max: reports[1].inner_max.max(interior_edge_max),
        max_tile_defect: reports.iter().map(|r| r.tile_charge_defect).fold(0.0, f64::max),
        max_cell_defect: reports.iter().map(|r| r.cell_defect).fold(0.0, f64::max),
        max_charge_cell_defect: reports.iter().map(|r| r.charge_cell_defect).fold(0.0, f64::max),
    })
}

/// JSON has no infinities: an empty jitter family is stored as `null`.
mod neg_inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() { s.serialize_f64(*v) } else { s.serialize_none() }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}
