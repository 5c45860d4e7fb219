//! Electric fields of point charges against a gridded background, their
//! truncation, and Neumann Poisson solves on rectangles.
//!
//! Sign conventions: the local potential is
//! `H(x) = Σ_p −log|x − p| − U(x)` with `U = −log ∗ μ`, and the field is
//! `E = ∇H`, so a lone charge at the origin has `E(x) = −x/|x|²` and
//! `−div E = 2π(ν − μ)`.

mod neumann;

pub use neumann::{neumann_poisson, BoundaryFlux, CellLattice, NeumannSolution, COMPATIBILITY_LIMIT};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::convolve::Convolver;
use crate::energy::TruncationParam;
use crate::error::{Error, Result};
use crate::geometry::{Grid, Point, PointConfiguration};
use crate::potential::{log_gradient_kernel, log_kernel, EquilibriumMeasure};

/// Vector field sampled at the cell centres of `grid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub grid: Grid,
    pub values: Vec<Point>,
}

/// Scalar field sampled at the cell centres of `grid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarGrid {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn zeros(grid: Grid) -> Self {
        ScalarGrid { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(grid.center(i, j)));
            }
        }
        ScalarGrid { grid, values }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }
}

impl GridField {
    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> Point + Sync) -> Self {
        use rayon::prelude::*;
        let values = (0..grid.len())
            .into_par_iter()
            .map(|k| f(grid.center(k % grid.nx, k / grid.nx)))
            .collect();
        GridField { grid, values }
    }

    /// `Σ |E|² h²` over the cells.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sq()).sum::<f64>() * self.grid.cell_area()
    }
}

const MARGIN: usize = 2;
const MULTIPOLE_ORDER: usize = 40;
const FAR_FACTOR: f64 = 1.5;

/// `∇U` and `U` for a gridded background measure, evaluable anywhere.
///
/// Inside the grid (plus a two-cell margin) values are bilinear interpolants
/// of exact cell integrals at the cell centres; outside it a direct sum is
/// used up to twice the box radius and a complex multipole expansion beyond.
#[derive(Debug)]
pub struct BackgroundField {
    measure: EquilibriumMeasure,
    lattice: Grid,
    gx: Vec<f64>,
    gy: Vec<f64>,
    u: OnceLock<Vec<f64>>,
    center: Point,
    charge: f64,
    moments: Vec<Complex64>,
    direct_radius: f64,
}

impl BackgroundField {
    pub fn new(mu: &EquilibriumMeasure) -> Self {
        let g = mu.grid;
        let center = mu.centroid();
        // Multipoles are used beyond 1.5× the source radius; the lattice covers the rest.
        let mut source_radius: f64 = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                if mu.density[g.index(i, j)] != 0.0 {
                    source_radius = source_radius.max(g.center(i, j).dist(center));
                }
            }
        }
        let reach = FAR_FACTOR * (source_radius + g.spacing);
        let b = g.bounds();
        let short = [center.x - b.x0, b.x1 - center.x, center.y - b.y0, b.y1 - center.y]
            .iter()
            .map(|d| reach - d)
            .fold(0.0, f64::max);
        let m = MARGIN + (short / g.spacing).ceil() as usize;
        let lattice = Grid::new(
            g.origin - Point::new(m as f64 * g.spacing, m as f64 * g.spacing),
            g.spacing,
            g.nx + 2 * m,
            g.ny + 2 * m,
        )
        .expect("extended lattice");
        let dst = (lattice.nx, lattice.ny);
        let off = (-(m as isize), -(m as isize));
        let (gx, gy) = rayon::join(
            || Convolver::new((g.nx, g.ny), dst, off, log_gradient_kernel(g.spacing, 0)).apply(&mu.density),
            || Convolver::new((g.nx, g.ny), dst, off, log_gradient_kernel(g.spacing, 1)).apply(&mu.density),
        );
        let a = g.cell_area();
        let mut moments = vec![Complex64::new(0.0, 0.0); MULTIPOLE_ORDER + 1];
        for j in 0..g.ny {
            for i in 0..g.nx {
                let d = mu.density[g.index(i, j)];
                if d == 0.0 {
                    continue;
                }
                let c = g.center(i, j) - center;
                let w = Complex64::new(c.x, c.y);
                let mut pw = Complex64::new(d * a, 0.0);
                for mk in moments.iter_mut().skip(1) {
                    pw *= w;
                    *mk += pw;
                }
            }
        }
        BackgroundField {
            measure: mu.clone(),
            lattice,
            gx,
            gy,
            u: OnceLock::new(),
            center,
            charge: mu.total_mass,
            moments,
            direct_radius: reach,
        }
    }

    pub fn measure(&self) -> &EquilibriumMeasure {
        &self.measure
    }

    pub fn total_charge(&self) -> f64 {
        self.charge
    }

    fn u_lattice(&self) -> &[f64] {
        self.u.get_or_init(|| {
            let g = self.measure.grid;
            let m = ((self.lattice.nx - g.nx) / 2) as isize;
            Convolver::new((g.nx, g.ny), (self.lattice.nx, self.lattice.ny), (-m, -m), log_kernel(g.spacing))
                .apply(&self.measure.density)
        })
    }

    /// Bilinear weights on the lattice of centres, if `p` lies inside it.
    fn stencil(&self, p: Point) -> Option<([usize; 4], [f64; 4])> {
        let l = &self.lattice;
        let fx = (p.x - l.origin.x) / l.spacing - 0.5;
        let fy = (p.y - l.origin.y) / l.spacing - 0.5;
        if !(fx >= 0.0 && fy >= 0.0 && fx <= (l.nx - 1) as f64 && fy <= (l.ny - 1) as f64) {
            return None;
        }
        let i = (fx.floor() as usize).min(l.nx - 2);
        let j = (fy.floor() as usize).min(l.ny - 2);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let k = l.index(i, j);
        Some((
            [k, k + 1, k + l.nx, k + l.nx + 1],
            [(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty],
        ))
    }

    fn far_f(&self, p: Point) -> (Complex64, Complex64) {
        // f(z) = −Q log z + Σ M_k/(k z^k); returns (f, f').
        let z = Complex64::new(p.x - self.center.x, p.y - self.center.y);
        let inv = z.inv();
        let mut f = -self.charge * z.ln();
        let mut df = -self.charge * inv;
        let mut pw = Complex64::new(1.0, 0.0);
        for (k, mk) in self.moments.iter().enumerate().skip(1) {
            pw *= inv;
            f += mk * pw / k as f64;
            df -= mk * pw * inv;
        }
        (f, df)
    }

    /// `∇U(p)`.
    pub fn grad_u(&self, p: Point) -> Point {
        if let Some((k, w)) = self.stencil(p) {
            let gx = (0..4).map(|s| w[s] * self.gx[k[s]]).sum();
            let gy = (0..4).map(|s| w[s] * self.gy[k[s]]).sum();
            return Point::new(gx, gy);
        }
        if p.dist(self.center) <= self.direct_radius {
            return self.measure.log_potential_gradient_at(p);
        }
        let (_, df) = self.far_f(p);
        Point::new(df.re, -df.im)
    }

    /// `U(p) = ∫ −log|p − y| dμ(y)`.
    pub fn u(&self, p: Point) -> f64 {
        if let Some((k, w)) = self.stencil(p) {
            let u = self.u_lattice();
            return (0..4).map(|s| w[s] * u[k[s]]).sum();
        }
        if p.dist(self.center) <= self.direct_radius {
            return self.measure.log_potential_at(p);
        }
        self.far_f(p).0.re
    }
}

/// `Σ_p −(x − p)/|x − p|²`.
#[inline]
pub fn charge_field(points: &[Point], x: Point) -> Point {
    let (mut ex, mut ey) = (0.0, 0.0);
    for p in points {
        let d = x - *p;
        let s = -1.0 / d.norm_sq();
        ex += s * d.x;
        ey += s * d.y;
    }
    Point::new(ex, ey)
}

/// `E^loc(x)` for charges at `points` against the background.
#[inline]
pub fn local_field_at(points: &[Point], bg: &BackgroundField, x: Point) -> Point {
    charge_field(points, x) - bg.grad_u(x)
}

/// Truncated field `E_η(x)`: each charge contributes only outside its η-disk.
#[inline]
pub fn truncated_field_at(points: &[Point], bg: &BackgroundField, eta: f64, x: Point) -> Point {
    let (mut ex, mut ey) = (0.0, 0.0);
    let eta2 = eta * eta;
    for p in points {
        let d = x - *p;
        let r2 = d.norm_sq();
        if r2 >= eta2 {
            let s = -1.0 / r2;
            ex += s * d.x;
            ey += s * d.y;
        }
    }
    Point::new(ex, ey) - bg.grad_u(x)
}

/// Truncated local potential `Σ_p −log max(|x − p|, η) − U(x)`.
pub fn truncated_potential_at(points: &[Point], bg: &BackgroundField, eta: f64, x: Point) -> f64 {
    let mut h = 0.0;
    for p in points {
        h -= x.dist(*p).max(eta).ln();
    }
    h - bg.u(x)
}

/// Points displaced off cell centres of `grid` by `h/7` along the diagonal;
/// returns the adjusted points and the indices that moved.
pub fn jitter_off_nodes(points: &[Point], grid: &Grid) -> (Vec<Point>, Vec<usize>) {
    let h = grid.spacing;
    let mut out = points.to_vec();
    let mut moved = Vec::new();
    for (k, p) in out.iter_mut().enumerate() {
        let fx = (p.x - grid.origin.x) / h - 0.5;
        let fy = (p.y - grid.origin.y) / h - 0.5;
        if (fx - fx.round()).abs() < 1e-12 && (fy - fy.round()).abs() < 1e-12 {
            *p = *p + Point::new(h / 7.0, h / 7.0);
            moved.push(k);
        }
    }
    (out, moved)
}

/// `E^loc` sampled on `window`. Points sitting exactly on a sample location
/// are nudged by `h/7`; their indices are returned.
pub fn local_field(
    config: &PointConfiguration,
    bg: &BackgroundField,
    window: Grid,
) -> Result<(GridField, Vec<usize>)> {
    config.require_frame(crate::geometry::Frame::BlownUp)?;
    let (pts, moved) = jitter_off_nodes(&config.points, &window);
    Ok((GridField::from_fn(window, |x| local_field_at(&pts, bg, x)), moved))
}

/// `E_η = E − Σ_p ∇f_η(· − p)` on the same samples.
pub fn truncate_field(field: &GridField, config: &PointConfiguration, eta: TruncationParam) -> Result<GridField> {
    let h = field.grid.spacing;
    if eta.eta <= 2.0 * h {
        return Err(Error::UnderResolved {
            eta: eta.eta,
            reason: format!("grid spacing {h} must be below η/2"),
        });
    }
    let mut out = field.clone();
    let g = field.grid;
    for (k, v) in out.values.iter_mut().enumerate() {
        let x = g.center(k % g.nx, k / g.nx);
        for p in &config.points {
            *v = *v - crate::energy::truncation_gradient(eta, x - *p);
        }
    }
    Ok(out)
}
