//! Quadrature of `∫ |E_η|² + 2π·n·log η` for finite configurations.
//!
//! Each charge `p_i` gets a polar patch of radius `ρ_i = min(½, 0.48·d_i)`
//! (`d_i` the nearest-neighbour distance) carrying a smooth cutoff `χ_i`
//! equal to one on `[0, a_i]`. Inside a patch the own-charge term is split
//! off so the `1/r²` singularity is integrated in `log r`; the remainder
//! `(1 − Σχ_i)|E_η|²` is smooth and integrated on an adaptively refined
//! Cartesian mesh, with geometric shells out to a large radius for the
//! whole-plane version.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use super::TruncationParam;
use crate::error::{Error, Result};
use crate::fieldgrid::{truncated_field_at, BackgroundField};
use crate::geometry::{Frame, Point, PointConfiguration, Rect};
use crate::quadrature::GaussLegendre;

/// Frozen slack constant of the almost-monotonicity in η: for `η < η₁`,
/// `F(η) − F(η₁) ≥ −C·n·‖μ'‖∞·η₁` with `F = value/(2π)`.
pub const MONOTONICITY_CONSTANT: f64 = 1.0;

/// Integration region: the whole plane or an axis-aligned window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Plane,
    Window(Rect),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    /// Base Cartesian cell size (blown-up units).
    pub cell: f64,
    /// Angular trapezoid points per patch.
    pub angular: usize,
    /// Outer radius of the far-field shells, in units of the box half-side.
    pub far_factor: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions { cell: 0.25, angular: 64, far_factor: 200.0 }
    }
}

struct Patch {
    p: Point,
    rho: f64,
    a: f64,
}

fn smooth_step(t: f64) -> f64 {
    // 1 at t ≤ 0, 0 at t ≥ 1, C^∞ in between.
    if t <= 0.0 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    let f = |s: f64| (-1.0 / s).exp();
    let (u, v) = (f(t), f(1.0 - t));
    v / (u + v)
}

impl Patch {
    fn chi(&self, x: Point) -> f64 {
        let r = x.dist(self.p);
        smooth_step((r - self.a) / (self.rho - self.a))
    }
}

fn build_patches(points: &[Point], eta: f64) -> Result<Vec<Patch>> {
    let n = points.len();
    let d: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| points[i].dist(points[j]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for (i, &p) in points.iter().enumerate() {
        if d[i] == 0.0 {
            return Err(Error::CoincidentPoints { i, j: (0..n).find(|&j| j != i && points[j] == p).unwrap_or(i) });
        }
        let rho = (0.48 * d[i]).min(0.5);
        let a = (0.5 * rho).max(1.02 * eta);
        if a > 0.8 * rho {
            return Err(Error::UnderResolved {
                eta,
                reason: format!(
                    "charge {i} has a neighbour at distance {:.4}; η must stay below {:.4}",
                    d[i],
                    0.8 * rho / 1.02
                ),
            });
        }
        out.push(Patch { p, rho, a });
    }
    Ok(out)
}

struct Integrator<'a> {
    points: &'a [Point],
    bg: &'a BackgroundField,
    eta: f64,
    patches: Vec<Patch>,
    window: Option<Rect>,
    opts: QuadratureOptions,
    gl4: GaussLegendre,
    gl8: GaussLegendre,
    gl16: GaussLegendre,
    gl24: GaussLegendre,
}

impl Integrator<'_> {
    fn inside(&self, x: Point) -> f64 {
        match &self.window {
            Some(w) if !w.contains(x) => 0.0,
            _ => 1.0,
        }
    }

    /// Field of everything except charge `i` (whose η-disk alone meets the patch).
    fn others(&self, i: usize, x: Point) -> Point {
        let (mut ex, mut ey) = (0.0, 0.0);
        for (j, p) in self.points.iter().enumerate() {
            if j != i {
                let d = x - *p;
                let r2 = d.norm_sq();
                ex -= d.x / r2;
                ey -= d.y / r2;
            }
        }
        Point::new(ex, ey) - self.bg.grad_u(x)
    }

    fn patch(&self, i: usize) -> f64 {
        let pa = &self.patches[i];
        let m = self.opts.angular;
        let dth = TAU / m as f64;
        let (eta, a, rho) = (self.eta, pa.a, pa.rho);
        let (s0, s1) = (eta.ln(), a.ln());
        // Split the log-radius panel into pieces of length ≤ 1.
        let pieces = ((s1 - s0).ceil().max(1.0)) as usize;
        let mut total = 0.0;
        for k in 0..m {
            let th = (k as f64 + 0.5) * dth;
            let e = Point::new(th.cos(), th.sin());
            let mut acc = 0.0;
            for (r, w) in self.gl8.on(0.0, eta) {
                let x = pa.p + e * r;
                acc += w * r * self.others(i, x).norm_sq() * self.inside(x);
            }
            for q in 0..pieces {
                let lo = s0 + (s1 - s0) * q as f64 / pieces as f64;
                let hi = s0 + (s1 - s0) * (q + 1) as f64 / pieces as f64;
                for (s, w) in self.gl16.on(lo, hi) {
                    let r = s.exp();
                    let x = pa.p + e * r;
                    let f = self.others(i, x);
                    acc += w * (1.0 - 2.0 * e.dot(f) * r + f.norm_sq() * r * r) * self.inside(x);
                }
            }
            for (r, w) in self.gl24.on(a, rho) {
                let x = pa.p + e * r;
                let f = self.others(i, x) - e * (1.0 / r);
                acc += w * r * smooth_step((r - a) / (rho - a)) * f.norm_sq() * self.inside(x);
            }
            total += acc * dth;
        }
        total
    }

    fn cell(&self, r: Rect, depth: usize) -> f64 {
        let size = r.width().max(r.height());
        let mut refine = false;
        for pa in &self.patches {
            let dmin = r.distance_to(pa.p);
            if dmin >= 2.0 * pa.rho {
                continue;
            }
            let corners = [
                Point::new(r.x0, r.y0),
                Point::new(r.x1, r.y0),
                Point::new(r.x0, r.y1),
                Point::new(r.x1, r.y1),
            ];
            let dmax = corners.iter().map(|c| c.dist(pa.p)).fold(0.0, f64::max);
            if dmax <= pa.a {
                return 0.0;
            }
            if size > (pa.rho - pa.a) / 3.0 {
                refine = true;
            }
        }
        if refine && depth < 14 {
            let c = r.center();
            return [
                Rect::new(r.x0, r.y0, c.x, c.y),
                Rect::new(c.x, r.y0, r.x1, c.y),
                Rect::new(r.x0, c.y, c.x, r.y1),
                Rect::new(c.x, c.y, r.x1, r.y1),
            ]
            .iter()
            .map(|q| self.cell(*q, depth + 1))
            .sum();
        }
        self.gl4.integrate_rect(&r, |x| {
            let chi: f64 = self
                .patches
                .iter()
                .filter(|pa| x.dist(pa.p) < pa.rho)
                .map(|pa| pa.chi(x))
                .sum();
            let w = 1.0 - chi;
            if w <= 0.0 {
                0.0
            } else {
                w * truncated_field_at(self.points, self.bg, self.eta, x).norm_sq()
            }
        })
    }

    fn mesh(&self, b: Rect) -> f64 {
        let h = self.opts.cell;
        let nx = (b.width() / h).ceil().max(1.0) as usize;
        let ny = (b.height() / h).ceil().max(1.0) as usize;
        let (hx, hy) = (b.width() / nx as f64, b.height() / ny as f64);
        (0..nx * ny)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k % nx, k / nx);
                let x0 = b.x0 + i as f64 * hx;
                let y0 = b.y0 + j as f64 * hy;
                self.cell(Rect::new(x0, y0, x0 + hx, y0 + hy), 0)
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum()
    }

    fn shells(&self, b: Rect) -> f64 {
        // Square annuli [s, 2s] around the box, each cut into 12 squares.
        let c = b.center();
        let s0 = 0.5 * b.width();
        let mut blocks = Vec::new();
        let mut s = s0;
        let mut k = 0;
        while s < self.opts.far_factor * s0 {
            let sub = if k == 0 { 4 } else if k == 1 { 2 } else { 1 };
            for bj in 0..4 {
                for bi in 0..4 {
                    if (1..3).contains(&bi) && (1..3).contains(&bj) {
                        continue;
                    }
                    let x0 = c.x - 2.0 * s + bi as f64 * s;
                    let y0 = c.y - 2.0 * s + bj as f64 * s;
                    let d = s / sub as f64;
                    for sj in 0..sub {
                        for si in 0..sub {
                            let (u, v) = (x0 + si as f64 * d, y0 + sj as f64 * d);
                            blocks.push(Rect::new(u, v, u + d, v + d));
                        }
                    }
                }
            }
            s *= 2.0;
            k += 1;
        }
        blocks
            .par_iter()
            .map(|r| self.gl8.integrate_rect(r, |x| truncated_field_at(self.points, self.bg, self.eta, x).norm_sq()))
            .collect::<Vec<f64>>()
            .iter()
            .sum()
    }
}

/// `∫_region |E_η|² + 2π·n·log η`, where `n` counts the charges inside the
/// region. Divide by `2π` to compare with `w_N`.
pub fn renormalized_energy(
    config: &PointConfiguration,
    bg: &BackgroundField,
    region: Region,
    eta: TruncationParam,
    opts: QuadratureOptions,
) -> Result<f64> {
    config.require_frame(Frame::BlownUp)?;
    let points = &config.points;
    let patches = build_patches(points, eta.eta)?;
    let it = Integrator {
        points,
        bg,
        eta: eta.eta,
        patches,
        window: match region {
            Region::Plane => None,
            Region::Window(w) => Some(w),
        },
        opts,
        gl4: GaussLegendre::new(4),
        gl8: GaussLegendre::new(8),
        gl16: GaussLegendre::new(16),
        gl24: GaussLegendre::new(24),
    };
    let patch_sum: f64 = (0..points.len()).into_par_iter().map(|i| it.patch(i)).collect::<Vec<f64>>().iter().sum();
    let (body, count) = match region {
        Region::Window(w) => (it.mesh(w), points.iter().filter(|p| w.contains(**p)).count()),
        Region::Plane => {
            let lb = bg.measure().grid.bounds();
            let (mut x0, mut y0, mut x1, mut y1) = (lb.x0, lb.y0, lb.x1, lb.y1);
            for p in points {
                x0 = x0.min(p.x);
                y0 = y0.min(p.y);
                x1 = x1.max(p.x);
                y1 = y1.max(p.y);
            }
            let c = Point::new(0.5 * (x0 + x1), 0.5 * (y0 + y1));
            let half = 0.5 * (x1 - x0).max(y1 - y0);
            let margin = (0.5 * half).max(3.0);
            let b = Rect::square(c, 2.0 * (half + margin));
            (it.mesh(b) + it.shells(b), points.len())
        }
    };
    Ok(patch_sum + body + TAU * count as f64 * eta.eta.ln())
}

/// Values at several η and their least-squares fit `a + b·η²`, whose
/// intercept `a` is the η → 0 limit. The leading η-dependence is quadratic
/// once the smeared charges are disjoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaExtrapolation {
    pub etas: Vec<f64>,
    pub values: Vec<f64>,
    pub intercept: f64,
    /// Coefficient `b` of `η²`.
    pub slope: f64,
}

pub fn renormalized_energy_extrapolated(
    config: &PointConfiguration,
    bg: &BackgroundField,
    region: Region,
    etas: &[f64],
    opts: QuadratureOptions,
) -> Result<EtaExtrapolation> {
    if etas.len() < 2 {
        return Err(Error::Validation("η extrapolation needs at least two values".into()));
    }
    let mut values = Vec::with_capacity(etas.len());
    for &e in etas {
        values.push(renormalized_energy(config, bg, region, TruncationParam::new(e)?, opts)?);
    }
    let n = etas.len() as f64;
    let xs: Vec<f64> = etas.iter().map(|e| e * e).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = values.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&values).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(EtaExtrapolation { etas: etas.to_vec(), values, intercept: my - slope * mx, slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::w_n_pairwise;
    use crate::geometry::Grid;
    use crate::potential::EquilibriumMeasure;

    fn empty_bg() -> BackgroundField {
        let g = Grid::new(Point::new(-1.0, -1.0), 0.5, 4, 4).unwrap();
        BackgroundField::new(&EquilibriumMeasure::from_density(g, vec![0.0; 16]).unwrap())
    }

    #[test]
    fn empty_window_without_background_is_zero() {
        let c = PointConfiguration::empty(Frame::BlownUp);
        let v = renormalized_energy(
            &c,
            &empty_bg(),
            Region::Window(Rect::square(Point::ORIGIN, 4.0)),
            TruncationParam::new(0.01).unwrap(),
            QuadratureOptions::default(),
        )
        .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn two_charges_in_a_neutralising_disk() {
        // Compare with the pairwise route on a small neutral system.
        let h = 0.05;
        let g = Grid::covering(Rect::square(Point::ORIGIN, 3.0), h).unwrap();
        let mu = EquilibriumMeasure::uniform_disk(g, Point::ORIGIN, 1.0, 1.0).unwrap();
        let m = mu.total_mass;
        let mu = EquilibriumMeasure::from_density(g, mu.density.iter().map(|d| d * 2.0 / m).collect()).unwrap();
        let bg = BackgroundField::new(&mu);
        let c = PointConfiguration::blown_up(vec![Point::new(-0.4, 0.1), Point::new(0.45, -0.05)]).unwrap();
        let w = w_n_pairwise(&c, &mu).unwrap();
        let ex = renormalized_energy_extrapolated(&c, &bg, Region::Plane, &[0.1, 0.01, 0.001], QuadratureOptions::default())
            .unwrap();
        assert!((ex.intercept / TAU - w).abs() < 2e-3 * w.abs().max(1.0), "{} vs {w}", ex.intercept / TAU);
    }

    #[test]
    fn crowded_charges_are_under_resolved() {
        let c = PointConfiguration::blown_up(vec![Point::ORIGIN, Point::new(0.05, 0.0)]).unwrap();
        let r = renormalized_energy(
            &c,
            &empty_bg(),
            Region::Plane,
            TruncationParam::new(0.1).unwrap(),
            QuadratureOptions::default(),
        );
        assert!(matches!(r, Err(Error::UnderResolved { .. })));
    }
}
