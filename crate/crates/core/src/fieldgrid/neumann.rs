//! Cell-centred finite-volume solve of `−Δh = 2π·rhs` on a rectangle with
//! prescribed outward normal derivative `∂_n h = g` on the boundary.
//!
//! The discrete operator is diagonalised by the DCT-II basis along each axis,
//! so the solve is direct. Boundary data is one value per boundary face,
//! ordered counterclockwise: south (west→east), east (south→north),
//! north (east→west), west (north→south).

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};

/// Relative compatibility defect accepted (and removed) before erroring.
pub const COMPATIBILITY_LIMIT: f64 = 1e-2;

/// A rectangle split into `nx × ny` equal cells (not necessarily square).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellLattice {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
}

impl CellLattice {
    pub fn new(rect: Rect, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || !(rect.width() > 0.0) || !(rect.height() > 0.0) {
            return Err(Error::Validation(format!("degenerate lattice {nx}×{ny} on {rect:?}")));
        }
        Ok(CellLattice { rect, nx, ny })
    }

    /// Lattice with cells of side close to `h`.
    pub fn with_spacing(rect: Rect, h: f64) -> Result<Self> {
        let nx = (rect.width() / h).round().max(1.0) as usize;
        let ny = (rect.height() / h).round().max(1.0) as usize;
        Self::new(rect, nx, ny)
    }

    pub fn hx(&self) -> f64 {
        self.rect.width() / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.rect.height() / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.rect.x0 + (i as f64 + 0.5) * self.hx(),
            self.rect.y0 + (j as f64 + 0.5) * self.hy(),
        )
    }

    pub fn cell_rect(&self, i: usize, j: usize) -> Rect {
        let (hx, hy) = (self.hx(), self.hy());
        let x0 = self.rect.x0 + i as f64 * hx;
        let y0 = self.rect.y0 + j as f64 * hy;
        Rect::new(x0, y0, x0 + hx, y0 + hy)
    }

    pub fn boundary_len(&self) -> usize {
        2 * (self.nx + self.ny)
    }

    /// Midpoint, outward normal and length of boundary face `k`.
    pub fn boundary_face(&self, k: usize) -> (Point, Point, f64) {
        let (nx, ny) = (self.nx, self.ny);
        let (hx, hy) = (self.hx(), self.hy());
        let r = &self.rect;
        if k < nx {
            (Point::new(r.x0 + (k as f64 + 0.5) * hx, r.y0), Point::new(0.0, -1.0), hx)
        } else if k < nx + ny {
            let j = k - nx;
            (Point::new(r.x1, r.y0 + (j as f64 + 0.5) * hy), Point::new(1.0, 0.0), hy)
        } else if k < 2 * nx + ny {
            let i = nx - 1 - (k - nx - ny);
            (Point::new(r.x0 + (i as f64 + 0.5) * hx, r.y1), Point::new(0.0, 1.0), hx)
        } else {
            let j = ny - 1 - (k - 2 * nx - ny);
            (Point::new(r.x0, r.y0 + (j as f64 + 0.5) * hy), Point::new(-1.0, 0.0), hy)
        }
    }

    /// Cell adjacent to boundary face `k`.
    pub fn boundary_cell(&self, k: usize) -> (usize, usize) {
        let (nx, ny) = (self.nx, self.ny);
        if k < nx {
            (k, 0)
        } else if k < nx + ny {
            (nx - 1, k - nx)
        } else if k < 2 * nx + ny {
            (nx - 1 - (k - nx - ny), ny - 1)
        } else {
            (0, ny - 1 - (k - 2 * nx - ny))
        }
    }
}

/// Outward normal derivative per boundary face, in the lattice's face order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFlux {
    pub values: Vec<f64>,
}

impl BoundaryFlux {
    pub fn zeros(lat: &CellLattice) -> Self {
        BoundaryFlux { values: vec![0.0; lat.boundary_len()] }
    }

    /// Sample `f(midpoint, outward normal)` on every face.
    pub fn from_fn(lat: &CellLattice, f: impl Fn(Point, Point) -> f64) -> Self {
        let values = (0..lat.boundary_len())
            .map(|k| {
                let (p, n, _) = lat.boundary_face(k);
                f(p, n)
            })
            .collect();
        BoundaryFlux { values }
    }

    /// `Σ g·len`.
    pub fn integral(&self, lat: &CellLattice) -> f64 {
        self.values.iter().enumerate().map(|(k, g)| g * lat.boundary_face(k).2).sum()
    }

    /// `Σ g²·len`.
    pub fn energy(&self, lat: &CellLattice) -> f64 {
        self.values.iter().enumerate().map(|(k, g)| g * g * lat.boundary_face(k).2).sum()
    }
}

/// Zero-mean solution with the compatibility defect that was removed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeumannSolution {
    pub lattice: CellLattice,
    pub values: Vec<f64>,
    /// `2π Σ rhs·area + Σ g·len` before correction.
    pub defect: f64,
    pub relative_defect: f64,
    /// `‖L h − b‖∞ / ‖b‖∞` after the solve.
    pub residual: f64,
}

impl NeumannSolution {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.lattice.nx + i]
    }

    /// Discrete Dirichlet energy `Σ_interior faces (Δh)²·len/d`.
    pub fn dirichlet_energy(&self) -> f64 {
        let l = &self.lattice;
        let (hx, hy) = (l.hx(), l.hy());
        let mut e = 0.0;
        for j in 0..l.ny {
            for i in 0..l.nx {
                let c = self.get(i, j);
                if i + 1 < l.nx {
                    let d = self.get(i + 1, j) - c;
                    e += d * d * hy / hx;
                }
                if j + 1 < l.ny {
                    let d = self.get(i, j + 1) - c;
                    e += d * d * hx / hy;
                }
            }
        }
        e
    }

    /// Bilinear interpolation of the centre values (clamped at the edges).
    pub fn value_at(&self, p: Point) -> f64 {
        let l = &self.lattice;
        let fx = ((p.x - l.rect.x0) / l.hx() - 0.5).clamp(0.0, (l.nx - 1) as f64);
        let fy = ((p.y - l.rect.y0) / l.hy() - 0.5).clamp(0.0, (l.ny - 1) as f64);
        let i = (fx.floor() as usize).min(l.nx.saturating_sub(2));
        let j = (fy.floor() as usize).min(l.ny.saturating_sub(2));
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let at = |a: usize, b: usize| self.get(a.min(l.nx - 1), b.min(l.ny - 1));
        (1.0 - tx) * (1.0 - ty) * at(i, j)
            + tx * (1.0 - ty) * at(i + 1, j)
            + (1.0 - tx) * ty * at(i, j + 1)
            + tx * ty * at(i + 1, j + 1)
    }

    /// Area-weighted mean over a sub-rectangle of the lattice.
    pub fn average_over(&self, r: &Rect) -> f64 {
        let l = &self.lattice;
        let (mut acc, mut area) = (0.0, 0.0);
        for j in 0..l.ny {
            for i in 0..l.nx {
                let w = l.cell_rect(i, j).overlap_area(r);
                if w > 0.0 {
                    acc += w * self.get(i, j);
                    area += w;
                }
            }
        }
        if area > 0.0 {
            acc / area
        } else {
            self.value_at(r.center())
        }
    }

    /// Centre-to-centre gradient `∂h/∂x` on interior vertical faces
    /// (`(nx−1)·ny` values) and `∂h/∂y` on horizontal faces (`nx·(ny−1)`).
    pub fn face_gradients(&self) -> (Vec<f64>, Vec<f64>) {
        let l = &self.lattice;
        let mut gx = Vec::with_capacity((l.nx - 1) * l.ny);
        let mut gy = Vec::with_capacity(l.nx * (l.ny - 1));
        for j in 0..l.ny {
            for i in 0..l.nx - 1 {
                gx.push((self.get(i + 1, j) - self.get(i, j)) / l.hx());
            }
        }
        for j in 0..l.ny - 1 {
            for i in 0..l.nx {
                gy.push((self.get(i, j + 1) - self.get(i, j)) / l.hy());
            }
        }
        (gx, gy)
    }
}

fn dct_matrix(n: usize) -> Vec<f64> {
    // Row k, column i: orthonormal DCT-II basis cos(πk(i+½)/n).
    let mut c = vec![0.0; n * n];
    for k in 0..n {
        let w = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            c[k * n + i] = w * (PI * k as f64 * (i as f64 + 0.5) / n as f64).cos();
        }
    }
    c
}

fn apply_operator(lat: &CellLattice, h: &[f64]) -> Vec<f64> {
    let (nx, ny) = (lat.nx, lat.ny);
    let (ix2, iy2) = (1.0 / (lat.hx() * lat.hx()), 1.0 / (lat.hy() * lat.hy()));
    let mut out = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let c = h[k];
            let mut s = 0.0;
            if i > 0 {
                s += (c - h[k - 1]) * ix2;
            }
            if i + 1 < nx {
                s += (c - h[k + 1]) * ix2;
            }
            if j > 0 {
                s += (c - h[k - nx]) * iy2;
            }
            if j + 1 < ny {
                s += (c - h[k + nx]) * iy2;
            }
            out[k] = s;
        }
    }
    out
}

/// Solve `−Δh = 2π·rhs` with `∂_n h = flux`, fixing the constant by zero mean.
///
/// The compatibility defect `2π Σ rhs·area + Σ g·len` is removed by a uniform
/// shift of `rhs` and reported; a relative defect above
/// [`COMPATIBILITY_LIMIT`] is an error.
pub fn neumann_poisson(lat: &CellLattice, rhs: &[f64], flux: &BoundaryFlux) -> Result<NeumannSolution> {
    let (nx, ny) = (lat.nx, lat.ny);
    if rhs.len() != nx * ny || flux.values.len() != lat.boundary_len() {
        return Err(Error::Validation("Neumann data does not match the lattice".into()));
    }
    if rhs.iter().chain(&flux.values).any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite Neumann data".into()));
    }
    let area = lat.cell_area();
    let total_area = area * (nx * ny) as f64;
    let flux_int = flux.integral(lat);
    let src: f64 = rhs.iter().sum::<f64>() * area;
    let defect = 2.0 * PI * src + flux_int;
    let scale = 2.0 * PI * rhs.iter().map(|v| v.abs()).sum::<f64>() * area
        + flux.values.iter().enumerate().map(|(k, g)| g.abs() * lat.boundary_face(k).2).sum::<f64>();
    // Floor the scale so rounding noise on vanishing data is not flagged.
    let floor = 1e-9 * (total_area + lat.rect.width() + lat.rect.height());
    let relative_defect = defect.abs() / scale.max(floor);
    if relative_defect > COMPATIBILITY_LIMIT {
        return Err(Error::IncompatibleNeumann { defect: relative_defect, limit: COMPATIBILITY_LIMIT });
    }
    let shift = defect / (2.0 * PI * total_area);
    let mut b: Vec<f64> = rhs.iter().map(|r| 2.0 * PI * (r - shift)).collect();
    for (k, g) in flux.values.iter().enumerate() {
        let (i, j) = lat.boundary_cell(k);
        b[j * nx + i] += g * lat.boundary_face(k).2 / area;
    }

    let cx = dct_matrix(nx);
    let cy = dct_matrix(ny);
    // B̂ = Cy · B · Cxᵀ
    let mut tmp = vec![0.0; nx * ny];
    for j in 0..ny {
        for k in 0..nx {
            let mut s = 0.0;
            for i in 0..nx {
                s += cx[k * nx + i] * b[j * nx + i];
            }
            tmp[j * nx + k] = s;
        }
    }
    let mut hat = vec![0.0; nx * ny];
    for l in 0..ny {
        for k in 0..nx {
            let mut s = 0.0;
            for j in 0..ny {
                s += cy[l * ny + j] * tmp[j * nx + k];
            }
            hat[l * nx + k] = s;
        }
    }
    let (hx, hy) = (lat.hx(), lat.hy());
    for l in 0..ny {
        let ly = (2.0 - 2.0 * (PI * l as f64 / ny as f64).cos()) / (hy * hy);
        for k in 0..nx {
            let lx = (2.0 - 2.0 * (PI * k as f64 / nx as f64).cos()) / (hx * hx);
            let lam = lx + ly;
            hat[l * nx + k] = if k == 0 && l == 0 { 0.0 } else { hat[l * nx + k] / lam };
        }
    }
    // H = Cyᵀ · Ĥ · Cx
    for j in 0..ny {
        for k in 0..nx {
            let mut s = 0.0;
            for l in 0..ny {
                s += cy[l * ny + j] * hat[l * nx + k];
            }
            tmp[j * nx + k] = s;
        }
    }
    let mut h = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let mut s = 0.0;
            for k in 0..nx {
                s += cx[k * nx + i] * tmp[j * nx + k];
            }
            h[j * nx + i] = s;
        }
    }
    let mean = h.iter().sum::<f64>() / (nx * ny) as f64;
    h.iter_mut().for_each(|v| *v -= mean);

    let lh = apply_operator(lat, &h);
    let bmax = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let rmax = lh.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
    let residual = rmax / bmax.max(1e-6);
    if residual > 1e-8 {
        return Err(Error::NoConvergence { what: "Neumann spectral solve", iterations: 1, residual });
    }
    Ok(NeumannSolution { lattice: *lat, values: h, defect, relative_defect, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_data_gives_zero() {
        let lat = CellLattice::new(Rect::new(0.0, 0.0, 2.0, 1.0), 8, 5).unwrap();
        let s = neumann_poisson(&lat, &vec![0.0; 40], &BoundaryFlux::zeros(&lat)).unwrap();
        assert!(s.values.iter().all(|v| *v == 0.0));
        assert_eq!(s.defect, 0.0);
    }

    #[test]
    fn face_order_is_counterclockwise() {
        let lat = CellLattice::new(Rect::new(0.0, 0.0, 3.0, 2.0), 3, 2).unwrap();
        let normals: Vec<Point> = (0..lat.boundary_len()).map(|k| lat.boundary_face(k).1).collect();
        assert_eq!(normals[0], Point::new(0.0, -1.0));
        assert_eq!(normals[3], Point::new(1.0, 0.0));
        assert_eq!(normals[5], Point::new(0.0, 1.0));
        assert_eq!(normals[8], Point::new(-1.0, 0.0));
        assert_eq!(lat.boundary_face(5).0, Point::new(2.5, 2.0));
        assert_eq!(lat.boundary_cell(9), (0, 0));
    }

    #[test]
    fn manufactured_solution_converges_at_second_order() {
        let (lx, ly) = (2.0, 1.5);
        let exact = |p: Point| (PI * p.x / lx).cos();
        let mut errs = Vec::new();
        for n in [16usize, 32, 64] {
            let lat = CellLattice::new(Rect::new(0.0, 0.0, lx, ly), n, (n * 3) / 4).unwrap();
            let rhs: Vec<f64> = (0..lat.ny)
                .flat_map(|j| (0..lat.nx).map(move |i| (i, j)))
                .map(|(i, j)| (PI / lx).powi(2) * exact(lat.center(i, j)) / (2.0 * PI))
                .collect();
            let s = neumann_poisson(&lat, &rhs, &BoundaryFlux::zeros(&lat)).unwrap();
            let err = (0..lat.ny)
                .flat_map(|j| (0..lat.nx).map(move |i| (i, j)))
                .map(|(i, j)| (s.get(i, j) - exact(lat.center(i, j))).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        let order = (errs[1] / errs[2]).log2();
        assert!((order - 2.0).abs() < 0.2, "order {order} from {errs:?}");
    }

    #[test]
    fn flux_data_is_honoured() {
        // h = x²/2 − y²/2 is harmonic with ∂_n h = ±x, ±y on the faces.
        let lat = CellLattice::new(Rect::new(-1.0, -0.5, 1.0, 0.5), 64, 32).unwrap();
        let flux = BoundaryFlux::from_fn(&lat, |p, n| n.x * p.x - n.y * p.y);
        let s = neumann_poisson(&lat, &vec![0.0; lat.len()], &flux).unwrap();
        assert!(s.relative_defect < 1e-12);
        let exact = |p: Point| 0.5 * (p.x * p.x - p.y * p.y) - (1.0 / 6.0 - 1.0 / 24.0);
        let err = (0..lat.ny)
            .flat_map(|j| (0..lat.nx).map(move |i| (i, j)))
            .map(|(i, j)| (s.get(i, j) - exact(lat.center(i, j))).abs())
            .fold(0.0, f64::max);
        assert!(err < 2e-3, "max error {err}");
        assert!(s.values.iter().sum::<f64>().abs() < 1e-12 * lat.len() as f64);
    }

    #[test]
    fn small_defect_is_removed_large_is_rejected() {
        let lat = CellLattice::new(Rect::new(0.0, 0.0, 1.0, 1.0), 10, 10).unwrap();
        let mut rhs = vec![0.0; 100];
        rhs[0] = 1.0;
        let mut flux = BoundaryFlux::zeros(&lat);
        // Exactly balanced, then perturb by 0.1%.
        let g = -2.0 * PI * 0.01 / 4.0;
        flux.values.iter_mut().for_each(|v| *v = g * 1.001);
        let s = neumann_poisson(&lat, &rhs, &flux).unwrap();
        assert!(s.relative_defect > 0.0 && s.relative_defect < 1e-2);
        assert!(s.residual < 1e-8);
        flux.values.iter_mut().for_each(|v| *v = 0.0);
        assert!(matches!(neumann_poisson(&lat, &rhs, &flux), Err(Error::IncompatibleNeumann { .. })));
    }
}
