//! Confining potentials, equilibrium measures and the effective potential ζ.
//!
//! The equilibrium measure is computed as the solution of the discrete
//! obstacle problem on a cell-centred grid: find a non-negative piecewise
//! constant density μ of unit mass with
//!
//! ```text
//!   2 (K μ)_i + V_i = C   on the support,
//!   2 (K μ)_i + V_i ≥ C   off the support,
//! ```
//!
//! where `K` is the cell-integrated `−log` kernel. The support is found by a
//! primal–dual active-set iteration; each inner solve is a projected
//! conjugate-gradient iteration on the zero-mass subspace, preconditioned by
//! the 5-point Laplacian (`−Δ(−log ∗ μ) = 2πμ`).

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use crate::convolve::Convolver;
use crate::error::{Error, Result};
use crate::geometry::{Grid, Point, Rect};
use crate::quadrature::{neg_log_rect, neg_log_rect_gradient};

/// Cells at Chebyshev distance up to this use the exact rectangle integral;
/// beyond it the midpoint rule (exact to O(h⁴/r⁴) for the harmonic kernel).
pub(crate) const NEAR_CELLS: isize = 8;

/// Support detection threshold on the density.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

/// A confining potential `V` on the plane, in macroscopic units.
pub trait Potential: Send + Sync {
    fn name(&self) -> String;
    fn evaluate(&self, p: Point) -> f64;
    fn gradient(&self, p: Point) -> Point;

    /// `ΔV`; defaults to a centred finite difference.
    fn laplacian(&self, p: Point) -> f64 {
        let h = 1e-4;
        let c = self.evaluate(p);
        (self.evaluate(p + Point::new(h, 0.0))
            + self.evaluate(p - Point::new(h, 0.0))
            + self.evaluate(p + Point::new(0.0, h))
            + self.evaluate(p - Point::new(0.0, h))
            - 4.0 * c)
            / (h * h)
    }

    /// Hölder exponent of the equilibrium density, declared per potential.
    fn kappa(&self) -> f64;

    /// Box on which `V` is finite and which contains the support.
    fn bounding_box(&self) -> Rect;

    /// Sanity proxy for strong confinement: `V/2 − log|x|` is larger at the
    /// bounding-box corners than at the origin. The logarithm is clipped at
    /// `|x| = 1` so the origin value is finite.
    fn growth_check(&self) -> bool {
        let phi = |p: Point| self.evaluate(p) / 2.0 - p.norm().max(1.0).ln();
        let b = self.bounding_box();
        let at0 = phi(Point::ORIGIN);
        [
            Point::new(b.x0, b.y0),
            Point::new(b.x1, b.y0),
            Point::new(b.x0, b.y1),
            Point::new(b.x1, b.y1),
        ]
        .iter()
        .all(|&c| phi(c).is_finite() && phi(c) > at0)
    }
}

/// `V(x) = coef · |x|^exponent` with `exponent ≥ 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialPower {
    pub coef: f64,
    pub exponent: f64,
}

impl RadialPower {
    pub fn new(coef: f64, exponent: f64) -> Result<Self> {
        if !(coef > 0.0 && coef.is_finite()) || !(exponent >= 2.0 && exponent.is_finite()) {
            return Err(Error::Validation(format!(
                "radial power potential needs coef > 0 and exponent ≥ 2 (got {coef}, {exponent})"
            )));
        }
        Ok(RadialPower { coef, exponent })
    }

    /// `V(x) = |x|²`, the Ginibre case at β = 2.
    pub fn quadratic() -> Self {
        RadialPower { coef: 1.0, exponent: 2.0 }
    }

    /// Radius of the (disk) support: mass `c·p·R^p / 2 = 1`.
    pub fn support_radius(&self) -> f64 {
        (2.0 / (self.coef * self.exponent)).powf(1.0 / self.exponent)
    }
}

impl Potential for RadialPower {
    fn name(&self) -> String {
        format!("radial_power(coef={},exponent={})", self.coef, self.exponent)
    }

    fn evaluate(&self, p: Point) -> f64 {
        self.coef * p.norm_sq().powf(0.5 * self.exponent)
    }

    fn gradient(&self, p: Point) -> Point {
        let r2 = p.norm_sq();
        if r2 == 0.0 {
            return Point::ORIGIN;
        }
        p * (self.coef * self.exponent * r2.powf(0.5 * self.exponent - 1.0))
    }

    fn laplacian(&self, p: Point) -> f64 {
        let a = self.exponent;
        if a == 2.0 {
            return 4.0 * self.coef;
        }
        self.coef * a * a * p.norm_sq().powf(0.5 * a - 1.0)
    }

    fn kappa(&self) -> f64 {
        1.0
    }

    fn bounding_box(&self) -> Rect {
        Rect::square(Point::ORIGIN, 2.5 * self.support_radius())
    }
}

/// A potential shifted by a constant (the equilibrium measure is unchanged).
pub struct Shifted<P> {
    pub inner: P,
    pub shift: f64,
}

impl<P: Potential> Potential for Shifted<P> {
    fn name(&self) -> String {
        format!("{}+{}", self.inner.name(), self.shift)
    }
    fn evaluate(&self, p: Point) -> f64 {
        self.inner.evaluate(p) + self.shift
    }
    fn gradient(&self, p: Point) -> Point {
        self.inner.gradient(p)
    }
    fn laplacian(&self, p: Point) -> f64 {
        self.inner.laplacian(p)
    }
    fn kappa(&self) -> f64 {
        self.inner.kappa()
    }
    fn bounding_box(&self) -> Rect {
        self.inner.bounding_box()
    }
}

/// Serializable potential description used by experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Quadratic {
        #[serde(default = "one")]
        coef: f64,
    },
    RadialPower {
        coef: f64,
        exponent: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec::Quadratic { coef: 1.0 }
    }
}

impl PotentialSpec {
    pub fn build(&self) -> Result<RadialPower> {
        match *self {
            PotentialSpec::Quadratic { coef } => RadialPower::new(coef, 2.0),
            PotentialSpec::RadialPower { coef, exponent } => RadialPower::new(coef, exponent),
        }
    }
}

/// Kernel `K(di, dj) = ∫_{cell at offset} −log|y| dy` for spacing `h`.
pub(crate) fn log_kernel(h: f64) -> impl Fn(isize, isize) -> f64 + Sync {
    move |di, dj| {
        if di.abs().max(dj.abs()) <= NEAR_CELLS {
            let c = Point::new(di as f64 * h, dj as f64 * h);
            neg_log_rect(Point::ORIGIN, &Rect::square(c, h))
        } else {
            let r = h * ((di * di + dj * dj) as f64).sqrt();
            -h * h * r.ln()
        }
    }
}

/// Gradient kernel: x or y component of `∇_p ∫_{cell} −log|p − y| dy` at a
/// target centre offset `(di, dj)` from the source centre.
pub(crate) fn log_gradient_kernel(h: f64, component: usize) -> impl Fn(isize, isize) -> f64 + Sync {
    move |di, dj| {
        let d = Point::new(di as f64 * h, dj as f64 * h);
        let g = if di.abs().max(dj.abs()) <= NEAR_CELLS {
            neg_log_rect_gradient(d, &Rect::square(Point::ORIGIN, h))
        } else {
            d * (-h * h / d.norm_sq())
        };
        if component == 0 {
            g.x
        } else {
            g.y
        }
    }
}

/// Diagnostics of the obstacle solve.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub outer_iterations: usize,
    pub cg_iterations: usize,
    /// `max_support |2Kμ + V − C| / max(|C|, 1)`.
    pub el_residual: f64,
    /// The Euler–Lagrange constant `C`.
    pub el_constant: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_outer: usize,
    pub max_cg: usize,
    pub cg_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tolerance: 1e-4, max_outer: 60, max_cg: 4000, cg_tolerance: 1e-11 }
    }
}

#[derive(Default)]
struct Cache {
    conv: OnceLock<Arc<Convolver>>,
    cell_potential: OnceLock<Vec<f64>>,
    self_energy: OnceLock<f64>,
}

impl std::fmt::Debug for Cache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Cache")
    }
}

/// Gridded equilibrium density with support mask and unit mass (or mass `N`
/// after blow-up).
#[derive(Debug)]
pub struct EquilibriumMeasure {
    pub grid: Grid,
    pub density: Vec<f64>,
    pub support_mask: Vec<bool>,
    pub total_mass: f64,
    pub stats: SolveStats,
    cache: Cache,
}

impl Clone for EquilibriumMeasure {
    fn clone(&self) -> Self {
        EquilibriumMeasure {
            grid: self.grid,
            density: self.density.clone(),
            support_mask: self.support_mask.clone(),
            total_mass: self.total_mass,
            stats: self.stats,
            cache: Cache::default(),
        }
    }
}

impl EquilibriumMeasure {
    /// Wrap an explicit density; cells below the threshold are masked out.
    pub fn from_density(grid: Grid, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.len() {
            return Err(Error::Validation("density length does not match grid".into()));
        }
        if density.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::Validation("density must be finite and non-negative".into()));
        }
        let density: Vec<f64> =
            density.into_iter().map(|d| if d < SUPPORT_THRESHOLD { 0.0 } else { d }).collect();
        let support_mask = density.iter().map(|&d| d > 0.0).collect();
        let total_mass = density.iter().sum::<f64>() * grid.cell_area();
        Ok(EquilibriumMeasure {
            grid,
            density,
            support_mask,
            total_mass,
            stats: SolveStats::default(),
            cache: Cache::default(),
        })
    }

    /// Constant density `m` on a disk, rasterised by cell centres.
    pub fn uniform_disk(grid: Grid, center: Point, radius: f64, m: f64) -> Result<Self> {
        let mut d = vec![0.0; grid.len()];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                if grid.center(i, j).dist(center) < radius {
                    d[grid.index(i, j)] = m;
                }
            }
        }
        Self::from_density(grid, d)
    }

    fn convolver(&self) -> Arc<Convolver> {
        self.cache
            .conv
            .get_or_init(|| {
                let g = self.grid;
                Arc::new(Convolver::new((g.nx, g.ny), (g.nx, g.ny), (0, 0), log_kernel(g.spacing)))
            })
            .clone()
    }

    /// `U(c_i) = ∫ −log|c_i − y| dμ(y)` at every cell centre.
    pub fn cell_potential(&self) -> &[f64] {
        self.cache.cell_potential.get_or_init(|| self.convolver().apply(&self.density))
    }

    /// Background self-interaction `∬ −log|x − y| dμ dμ`, cached.
    ///
    /// The outer integral over each cell uses the centre value plus the
    /// fourth-order term `h²/24·ΔU`, with `ΔU = −2π·m` exact inside a cell.
    pub fn self_energy(&self) -> f64 {
        *self.cache.self_energy.get_or_init(|| {
            let u = self.cell_potential();
            let h2 = self.grid.spacing * self.grid.spacing;
            let corr = -2.0 * std::f64::consts::PI * h2 / 24.0;
            self.grid.cell_area() * self.density.iter().zip(u).map(|(m, u)| m * (u + corr * m)).sum::<f64>()
        })
    }

    /// `∫ −log|p − y| dμ(y)` at an arbitrary point.
    pub fn log_potential_at(&self, p: Point) -> f64 {
        let g = &self.grid;
        let h = g.spacing;
        let a = h * h;
        let fi = ((p.x - g.origin.x) / h - 0.5).round() as isize;
        let fj = ((p.y - g.origin.y) / h - 0.5).round() as isize;
        let mut acc = 0.0;
        for j in 0..g.ny {
            let row = &self.density[j * g.nx..(j + 1) * g.nx];
            let near_row = (j as isize - fj).abs() <= NEAR_CELLS;
            for (i, &m) in row.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                if near_row && (i as isize - fi).abs() <= NEAR_CELLS {
                    acc += m * neg_log_rect(p, &g.cell_rect(i, j));
                } else {
                    acc -= m * a * 0.5 * (p - g.center(i, j)).norm_sq().ln();
                }
            }
        }
        acc
    }

    /// `∇_p ∫ −log|p − y| dμ(y)` at an arbitrary point.
    pub fn log_potential_gradient_at(&self, p: Point) -> Point {
        let g = &self.grid;
        let h = g.spacing;
        let a = h * h;
        let fi = ((p.x - g.origin.x) / h - 0.5).round() as isize;
        let fj = ((p.y - g.origin.y) / h - 0.5).round() as isize;
        let (mut gx, mut gy) = (0.0, 0.0);
        for j in 0..g.ny {
            let row = &self.density[j * g.nx..(j + 1) * g.nx];
            let near_row = (j as isize - fj).abs() <= NEAR_CELLS;
            for (i, &m) in row.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                if near_row && (i as isize - fi).abs() <= NEAR_CELLS {
                    let v = neg_log_rect_gradient(p, &g.cell_rect(i, j));
                    gx += m * v.x;
                    gy += m * v.y;
                } else {
                    let d = p - g.center(i, j);
                    let s = -m * a / d.norm_sq();
                    gx += s * d.x;
                    gy += s * d.y;
                }
            }
        }
        Point::new(gx, gy)
    }

    /// Density at a point (zero outside the grid).
    pub fn density_at(&self, p: Point) -> f64 {
        self.grid.locate(p).map_or(0.0, |(i, j)| self.density[self.grid.index(i, j)])
    }

    pub fn max_density(&self) -> f64 {
        self.density.iter().cloned().fold(0.0, f64::max)
    }

    /// `∫_rect dμ`, exact for the piecewise-constant density.
    pub fn mass_in_rect(&self, r: &Rect) -> f64 {
        let g = &self.grid;
        let h = g.spacing;
        let clamp = |v: f64, n: usize| v.floor().max(0.0).min(n as f64) as usize;
        let i0 = clamp((r.x0 - g.origin.x) / h, g.nx);
        let i1 = clamp((r.x1 - g.origin.x) / h + 1.0, g.nx);
        let j0 = clamp((r.y0 - g.origin.y) / h, g.ny);
        let j1 = clamp((r.y1 - g.origin.y) / h + 1.0, g.ny);
        let mut acc = 0.0;
        for j in j0..j1 {
            for i in i0..i1 {
                let m = self.density[g.index(i, j)];
                if m != 0.0 {
                    acc += m * g.cell_rect(i, j).overlap_area(r);
                }
            }
        }
        acc
    }

    /// `∫ f dμ` with a 3×3 Gauss rule per cell.
    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        let gl = crate::quadrature::GaussLegendre::new(3);
        let g = &self.grid;
        let mut acc = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let m = self.density[g.index(i, j)];
                if m != 0.0 {
                    acc += m * gl.integrate_rect(&g.cell_rect(i, j), &f);
                }
            }
        }
        acc
    }

    /// Support radius around `center` (largest distance of a support cell centre).
    pub fn support_radius(&self, center: Point) -> f64 {
        let g = &self.grid;
        let mut r: f64 = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                if self.support_mask[g.index(i, j)] {
                    r = r.max(g.center(i, j).dist(center) + g.spacing * std::f64::consts::FRAC_1_SQRT_2);
                }
            }
        }
        r
    }

    /// Mass-weighted centre of the measure.
    pub fn centroid(&self) -> Point {
        let g = &self.grid;
        let mut acc = Point::ORIGIN;
        let mut m = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let d = self.density[g.index(i, j)];
                acc = acc + g.center(i, j) * d;
                m += d;
            }
        }
        if m > 0.0 {
            acc * (1.0 / m)
        } else {
            Point::ORIGIN
        }
    }

    /// `I(μ) = ∬ −log dμ dμ + ∫ V dμ`, both with the same fourth-order cell rule.
    pub fn rate_function(&self, potential: &dyn Potential) -> f64 {
        let g = &self.grid;
        let h2 = g.spacing * g.spacing;
        let mut v = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let d = self.density[g.index(i, j)];
                if d != 0.0 {
                    let c = g.center(i, j);
                    v += d * (potential.evaluate(c) + h2 / 24.0 * potential.laplacian(c));
                }
            }
        }
        self.self_energy() + v * g.cell_area()
    }

    pub fn translated(&self, shift: Point) -> Self {
        EquilibriumMeasure {
            grid: self.grid.translated(shift),
            density: self.density.clone(),
            support_mask: self.support_mask.clone(),
            total_mass: self.total_mass,
            stats: self.stats,
            cache: Cache::default(),
        }
    }
}

/// Solve for the equilibrium measure of `potential` on `grid`.
pub fn equilibrium_measure(potential: &dyn Potential, grid: Grid) -> Result<EquilibriumMeasure> {
    equilibrium_measure_with(potential, grid, SolverOptions::default())
}

pub fn equilibrium_measure_with(
    potential: &dyn Potential,
    grid: Grid,
    opts: SolverOptions,
) -> Result<EquilibriumMeasure> {
    let bb = potential.bounding_box();
    if !grid.bounds().contains_rect(&bb) {
        return Err(Error::Validation(format!(
            "grid {:?} does not cover the potential's bounding box {:?}",
            grid.bounds(),
            bb
        )));
    }
    let n = grid.len();
    let a = grid.cell_area();
    let centers: Vec<Point> = (0..grid.ny)
        .flat_map(|j| (0..grid.nx).map(move |i| (i, j)))
        .map(|(i, j)| grid.center(i, j))
        .collect();
    let v: Vec<f64> = centers.iter().map(|&c| potential.evaluate(c)).collect();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("potential is not finite on the grid".into()));
    }
    let guess: Vec<f64> = centers.iter().map(|&c| (potential.laplacian(c) / (4.0 * PI)).max(0.0)).collect();
    if guess.iter().all(|&m| m <= 0.0) {
        return Err(Error::NoEquilibrium("ΔV ≤ 0 everywhere on the grid".into()));
    }

    // Initial support: sublevel set of V carrying unit mass of ΔV/4π.
    let mut order: Vec<usize> = (0..n).filter(|&i| guess[i] > 0.0).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut support = vec![false; n];
    let mut mass = 0.0;
    for &i in &order {
        support[i] = true;
        mass += guess[i] * a;
        if mass >= 1.0 {
            break;
        }
    }

    let conv = Convolver::new((grid.nx, grid.ny), (grid.nx, grid.ny), (0, 0), log_kernel(grid.spacing));
    let solver = ActiveSetSolver { grid, conv: &conv, v: &v };
    let mut stats = SolveStats::default();
    let mut density = vec![0.0; n];
    for outer in 1..=opts.max_outer {
        let (mu, cg_its) = solver.solve_on(&support, opts)?;
        stats.cg_iterations += cg_its;
        let ku = conv.apply(&mu);
        let g: Vec<f64> = ku.iter().zip(&v).map(|(k, v)| 2.0 * k + v).collect();
        let ns = support.iter().filter(|&&s| s).count() as f64;
        let c = (0..n).filter(|&i| support[i]).map(|i| g[i]).sum::<f64>() / ns;
        let scale = c.abs().max(1.0);
        let residual = (0..n)
            .filter(|&i| support[i])
            .map(|i| (g[i] - c).abs())
            .fold(0.0, f64::max)
            / scale;
        let add_tol = 1e-10 * scale;
        let mut next = support.clone();
        let mut changed = false;
        for i in 0..n {
            let keep = if support[i] { mu[i] > SUPPORT_THRESHOLD } else { g[i] < c - add_tol };
            if keep != support[i] {
                changed = true;
            }
            next[i] = keep;
        }
        stats.outer_iterations = outer;
        stats.el_residual = residual;
        stats.el_constant = c;
        density = mu;
        if !changed {
            if residual <= opts.tolerance {
                let mut eq = EquilibriumMeasure::from_density(grid, density)?;
                // Exact renormalisation after masking sub-threshold cells.
                let m = eq.total_mass;
                eq.density.iter_mut().for_each(|d| *d /= m);
                eq.total_mass = eq.density.iter().sum::<f64>() * a;
                eq.stats = stats;
                return Ok(eq);
            }
            return Err(Error::NoConvergence {
                what: "equilibrium measure",
                iterations: outer,
                residual,
            });
        }
        if next.iter().all(|&s| !s) {
            return Err(Error::NoEquilibrium("support became empty".into()));
        }
        support = next;
    }
    let _ = density;
    Err(Error::NoConvergence {
        what: "equilibrium measure active set",
        iterations: opts.max_outer,
        residual: stats.el_residual,
    })
}

const STAGNATION_WINDOW: usize = 100;
const STAGNATION_ACCEPT: f64 = 1e-8;

struct ActiveSetSolver<'a> {
    grid: Grid,
    conv: &'a Convolver,
    v: &'a [f64],
}

impl ActiveSetSolver<'_> {
    fn project(x: &mut [f64], s: &[bool], ns: f64) {
        let mean = x.iter().zip(s).filter(|(_, &s)| s).map(|(x, _)| *x).sum::<f64>() / ns;
        for (xi, &si) in x.iter_mut().zip(s) {
            if si {
                *xi -= mean;
            } else {
                *xi = 0.0;
            }
        }
    }

    fn apply(&self, x: &[f64], s: &[bool]) -> Vec<f64> {
        let mut y = self.conv.apply(x);
        for (yi, &si) in y.iter_mut().zip(s) {
            if !si {
                *yi = 0.0;
            }
        }
        y
    }

    /// `r ↦ −Δ_h r / 2π` with zero extension off the support.
    fn precondition(&self, r: &[f64], s: &[bool]) -> Vec<f64> {
        let g = &self.grid;
        let inv = 1.0 / (2.0 * PI * g.spacing * g.spacing) / g.cell_area();
        let mut z = vec![0.0; r.len()];
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.index(i, j);
                if !s[k] {
                    continue;
                }
                let at = |ii: isize, jj: isize| -> f64 {
                    if ii < 0 || jj < 0 || ii >= g.nx as isize || jj >= g.ny as isize {
                        0.0
                    } else {
                        r[g.index(ii as usize, jj as usize)]
                    }
                };
                let (ii, jj) = (i as isize, j as isize);
                let lap = at(ii + 1, jj) + at(ii - 1, jj) + at(ii, jj + 1) + at(ii, jj - 1) - 4.0 * r[k];
                z[k] = -lap * inv;
            }
        }
        z
    }

    /// Density on the given support solving the Euler–Lagrange equation with
    /// unit mass (projected PCG on the zero-mass subspace).
    fn solve_on(&self, s: &[bool], opts: SolverOptions) -> Result<(Vec<f64>, usize)> {
        let a = self.grid.cell_area();
        let ns = s.iter().filter(|&&b| b).count() as f64;
        let mu0: Vec<f64> = s.iter().map(|&b| if b { 1.0 / (ns * a) } else { 0.0 }).collect();
        let k0 = self.apply(&mu0, s);
        let mut b: Vec<f64> = (0..s.len())
            .map(|i| if s[i] { -0.5 * self.v[i] - k0[i] } else { 0.0 })
            .collect();
        Self::project(&mut b, s, ns);
        let bnorm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut nu = vec![0.0; s.len()];
        let mut its = 0;
        if bnorm > 0.0 {
            let mut r = b.clone();
            let mut z = self.precondition(&r, s);
            Self::project(&mut z, s, ns);
            let mut p = z.clone();
            let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let (mut best, mut since_best) = (f64::INFINITY, 0usize);
            loop {
                its += 1;
                let mut ap = self.apply(&p, s);
                Self::project(&mut ap, s, ns);
                let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
                if pap <= 0.0 {
                    return Err(Error::NoConvergence {
                        what: "obstacle inner solve (non-positive curvature)",
                        iterations: its,
                        residual: pap,
                    });
                }
                let alpha = rz / pap;
                for i in 0..nu.len() {
                    nu[i] += alpha * p[i];
                    r[i] -= alpha * ap[i];
                }
                let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                if rn <= opts.cg_tolerance * bnorm {
                    break;
                }
                // Rounding floor: no real progress for a while, already well converged.
                if rn < 0.9 * best {
                    best = rn;
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= STAGNATION_WINDOW && best <= STAGNATION_ACCEPT * bnorm {
                        break;
                    }
                }
                if its >= opts.max_cg {
                    return Err(Error::NoConvergence { what: "obstacle inner solve", iterations: its, residual: rn / bnorm });
                }
                z = self.precondition(&r, s);
                Self::project(&mut z, s, ns);
                let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
                let beta = rz_new / rz;
                rz = rz_new;
                for i in 0..p.len() {
                    p[i] = z[i] + beta * p[i];
                }
            }
        }
        Ok((mu0.iter().zip(&nu).map(|(a, b)| a + b).collect(), its))
    }
}

/// `ζ = U^μ + V/2 − c` on the measure's grid, with `c = min_support(U + V/2)`.
#[derive(Debug, Clone)]
pub struct EffectivePotential {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub constant: f64,
}

impl EffectivePotential {
    /// ζ at an arbitrary point (direct quadrature of the log potential).
    pub fn at(&self, eq: &EquilibriumMeasure, potential: &dyn Potential, p: Point) -> f64 {
        eq.log_potential_at(p) + 0.5 * potential.evaluate(p) - self.constant
    }
}

pub fn effective_potential(potential: &dyn Potential, eq: &EquilibriumMeasure) -> EffectivePotential {
    let g = eq.grid;
    let u = eq.cell_potential();
    let raw: Vec<f64> = (0..g.ny)
        .flat_map(|j| (0..g.nx).map(move |i| (i, j)))
        .map(|(i, j)| u[g.index(i, j)] + 0.5 * potential.evaluate(g.center(i, j)))
        .collect();
    let constant = raw
        .iter()
        .zip(&eq.support_mask)
        .filter(|(_, &s)| s)
        .map(|(v, _)| *v)
        .fold(f64::INFINITY, f64::min);
    EffectivePotential { grid: g, values: raw.iter().map(|v| v - constant).collect(), constant }
}

/// Blown-up measure `μ'(x) = μ(x/√N)`: spacing ×√N, identical density values.
pub fn blowup_density(eq: &EquilibriumMeasure, n: usize) -> Result<EquilibriumMeasure> {
    if n == 0 {
        return Err(Error::Validation("blow-up needs N ≥ 1".into()));
    }
    let s = (n as f64).sqrt();
    let grid = eq.grid.scaled(s);
    let total_mass = eq.density.iter().sum::<f64>() * grid.cell_area();
    Ok(EquilibriumMeasure {
        grid,
        density: eq.density.clone(),
        support_mask: eq.support_mask.clone(),
        total_mass,
        stats: eq.stats,
        cache: Cache::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_eq(h: f64) -> EquilibriumMeasure {
        let v = RadialPower::quadratic();
        let grid = Grid::covering(v.bounding_box(), h).unwrap();
        equilibrium_measure(&v, grid).unwrap()
    }

    #[test]
    fn quadratic_density_is_circular_law() {
        let eq = quad_eq(0.04);
        assert!((eq.total_mass - 1.0).abs() < 1e-8);
        assert!(eq.stats.el_residual < 1e-4);
        let g = eq.grid;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let c = g.center(i, j);
                let d = eq.density[g.index(i, j)];
                if c.norm() < 0.85 {
                    assert!((d - 1.0 / PI).abs() < 5e-3, "interior density {d} at {c:?}");
                }
                if c.norm() > 1.1 {
                    assert_eq!(d, 0.0);
                }
            }
        }
    }

    #[test]
    fn steeper_quadratic_shrinks_support() {
        let v = RadialPower::new(2.0, 2.0).unwrap();
        let grid = Grid::covering(v.bounding_box(), 0.03).unwrap();
        let eq = equilibrium_measure(&v, grid).unwrap();
        assert!((eq.total_mass - 1.0).abs() < 1e-8);
        assert!((eq.density_at(Point::new(0.2, 0.1)) - 2.0 / PI).abs() < 2e-2);
        assert_eq!(eq.density_at(Point::new(0.85, 0.0)), 0.0);
    }

    #[test]
    fn zeta_vanishes_on_support_and_matches_closed_form_outside() {
        let v = RadialPower::quadratic();
        let eq = quad_eq(0.04);
        let z = effective_potential(&v, &eq);
        assert!(z.values.iter().all(|&x| x >= -1e-6));
        for (val, &s) in z.values.iter().zip(&eq.support_mask) {
            if s {
                assert!(val.abs() < 1e-6);
            }
        }
        let outside = z.at(&eq, &v, Point::new(2.0, 0.0));
        let exact = -(2f64.ln()) + 2.0 - 0.5;
        assert!((outside - exact).abs() < 2e-3, "{outside} vs {exact}");
        assert!(z.at(&eq, &v, Point::new(0.3, 0.2)).abs() < 1e-3);
    }

    #[test]
    fn constant_shift_leaves_density_unchanged() {
        let v = RadialPower::quadratic();
        let grid = Grid::covering(v.bounding_box(), 0.05).unwrap();
        let a = equilibrium_measure(&v, grid).unwrap();
        let b = equilibrium_measure(&Shifted { inner: v, shift: 3.7 }, grid).unwrap();
        let diff = a.density.iter().zip(&b.density).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "max density difference {diff}");
    }

    #[test]
    fn blowup_scales_spacing_and_mass() {
        let eq = quad_eq(0.05);
        let same = blowup_density(&eq, 1).unwrap();
        assert_eq!(same.density, eq.density);
        assert_eq!(same.grid, eq.grid);
        let b = blowup_density(&eq, 4).unwrap();
        assert!((b.grid.spacing - 2.0 * eq.grid.spacing).abs() < 1e-15);
        assert!((b.total_mass - 4.0 * eq.total_mass).abs() < 1e-6 * 4.0);
        assert!((b.density_at(Point::new(1.5, 0.3)) - 1.0 / PI).abs() < 1e-2);
        assert_eq!(b.density_at(Point::new(2.3, 0.0)), 0.0);
    }

    #[test]
    fn negative_laplacian_has_no_equilibrium() {
        struct Hill;
        impl Potential for Hill {
            fn name(&self) -> String {
                "hill".into()
            }
            fn evaluate(&self, p: Point) -> f64 {
                -p.norm_sq()
            }
            fn gradient(&self, p: Point) -> Point {
                p * -2.0
            }
            fn kappa(&self) -> f64 {
                1.0
            }
            fn bounding_box(&self) -> Rect {
                Rect::square(Point::ORIGIN, 2.0)
            }
        }
        let grid = Grid::covering(Hill.bounding_box(), 0.1).unwrap();
        assert!(matches!(equilibrium_measure(&Hill, grid), Err(Error::NoEquilibrium(_))));
        assert!(!Hill.growth_check());
        assert!(RadialPower::quadratic().growth_check());
    }

    #[test]
    fn cell_potential_agrees_with_pointwise_quadrature() {
        let eq = quad_eq(0.05);
        let u = eq.cell_potential();
        let g = eq.grid;
        for &(i, j) in &[(3usize, 7usize), (25, 25), (40, 12)] {
            let direct = eq.log_potential_at(g.center(i, j));
            assert!((direct - u[g.index(i, j)]).abs() < 1e-10);
        }
        // Two routes to the self-energy of the circular law (1/4).
        assert!((eq.self_energy() - 0.25).abs() < 5e-3);
    }
}
