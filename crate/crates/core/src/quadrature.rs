//! Closed-form integrals of the logarithmic kernel over rectangles, and
//! Gauss–Legendre rules.
//!
//! The primitive used throughout is
//! `P(x, y) = ∬ ln(x² + y²) dx dy = xy ln(x²+y²) − 3xy + x² atan(y/x) + y² atan(x/y)`,
//! with partial derivative `P_x = y ln(x²+y²) − 2y + 2x atan(y/x)`.

use crate::geometry::{Point, Rect};

/// `∬_{[-1/2,1/2]²} −log|y| dy`, the mean of `−log` over the unit square.
pub const UNIT_SQUARE_MEAN_NEG_LOG: f64 = 1.061_175_426_882_524_3;

#[inline]
fn sq_atan(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * a * (b / a).atan()
    }
}

#[inline]
fn primitive(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    let xy = x * y;
    let log_term = if r2 > 0.0 { xy * r2.ln() } else { 0.0 };
    log_term - 3.0 * xy + sq_atan(x, y) + sq_atan(y, x)
}

#[inline]
fn primitive_dx(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    let log_term = if r2 > 0.0 { y * r2.ln() } else { 0.0 };
    let at = if x == 0.0 { 0.0 } else { 2.0 * x * (y / x).atan() };
    log_term - 2.0 * y + at
}

/// Double difference of `f(p.x − s, p.y − t)` over the rectangle corners.
#[inline]
fn corner_sum(f: impl Fn(f64, f64) -> f64, p: Point, r: &Rect) -> f64 {
    let (bu, au) = (p.x - r.x0, p.x - r.x1);
    let (bv, av) = (p.y - r.y0, p.y - r.y1);
    f(bu, bv) - f(au, bv) - f(bu, av) + f(au, av)
}

/// `∫_rect −log|p − y| dy`, exact for any `p` (inside or outside).
pub fn neg_log_rect(p: Point, r: &Rect) -> f64 {
    -0.5 * corner_sum(primitive, p, r)
}

/// `∇_p ∫_rect −log|p − y| dy = ∫_rect −(p − y)/|p − y|² dy`, exact.
pub fn neg_log_rect_gradient(p: Point, r: &Rect) -> Point {
    let gx = -0.5 * corner_sum(primitive_dx, p, r);
    let gy = -0.5 * corner_sum(|u, v| primitive_dx(v, u), p, r);
    Point::new(gx, gy)
}

/// `∫ −log|y|` over a square of side `h` centred at the singularity.
pub fn neg_log_self_cell(h: f64) -> f64 {
    h * h * (UNIT_SQUARE_MEAN_NEG_LOG - h.ln())
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, 0.0);
                for k in 0..n {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
                }
                dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
                let dz = p0 / dp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            // Recompute the derivative at the converged node.
            let (mut p0, mut p1) = (1.0, 0.0);
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
            }
            if z * z != 1.0 {
                dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (c, s) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (c + s * x, s * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Tensor-product rule on a rectangle.
    pub fn integrate_rect(&self, r: &Rect, f: impl Fn(Point) -> f64) -> f64 {
        let mut acc = 0.0;
        for (y, wy) in self.on(r.y0, r.y1) {
            for (x, wx) in self.on(r.x0, r.x1) {
                acc += wx * wy * f(Point::new(x, y));
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_neg_log(p: Point, r: &Rect, n: usize) -> f64 {
        // Midpoint rule on an n×n subgrid; only used away from the singularity.
        let (hx, hy) = (r.width() / n as f64, r.height() / n as f64);
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..n {
                let y = Point::new(r.x0 + (i as f64 + 0.5) * hx, r.y0 + (j as f64 + 0.5) * hy);
                acc += -(p.dist(y)).ln();
            }
        }
        acc * hx * hy
    }

    #[test]
    fn unit_square_constant_matches_closed_form() {
        let c = (3.0 + 2f64.ln() - std::f64::consts::FRAC_PI_2) / 2.0;
        assert!((c - UNIT_SQUARE_MEAN_NEG_LOG).abs() < 1e-15);
        let r = Rect::square(Point::ORIGIN, 1.0);
        assert!((neg_log_rect(Point::ORIGIN, &r) - c).abs() < 1e-14);
    }

    #[test]
    fn self_cell_scales_like_log() {
        let h = 0.01;
        let r = Rect::square(Point::new(3.0, -2.0), h);
        let exact = neg_log_rect(Point::new(3.0, -2.0), &r);
        assert!((exact - neg_log_self_cell(h)).abs() < 1e-15);
    }

    #[test]
    fn rectangle_integral_matches_brute_force_off_cell() {
        let r = Rect::new(0.2, -0.3, 0.9, 0.4);
        for p in [Point::new(1.5, 0.1), Point::new(-0.4, 2.0), Point::new(0.5, -1.0)] {
            let exact = neg_log_rect(p, &r);
            let brute = brute_neg_log(p, &r, 400);
            assert!((exact - brute).abs() < 1e-6, "{exact} vs {brute}");
        }
    }

    #[test]
    fn singular_point_inside_rectangle() {
        // Split the rectangle at the singular point into four pieces each
        // having it at a corner; the corner formula must agree.
        let r = Rect::new(-0.3, -0.2, 0.5, 0.7);
        let p = Point::new(0.1, 0.05);
        let whole = neg_log_rect(p, &r);
        let parts = [
            Rect::new(r.x0, r.y0, p.x, p.y),
            Rect::new(p.x, r.y0, r.x1, p.y),
            Rect::new(r.x0, p.y, p.x, r.y1),
            Rect::new(p.x, p.y, r.x1, r.y1),
        ];
        let sum: f64 = parts.iter().map(|q| neg_log_rect(p, q)).sum();
        assert!((whole - sum).abs() < 1e-14);
        // Polar quadrature oracle: ∫ −log r over the rectangle seen from p.
        let gl = GaussLegendre::new(40);
        let mut polar = 0.0;
        let segs = 64;
        for s in 0..segs {
            let (a, b) = (
                s as f64 * std::f64::consts::TAU / segs as f64,
                (s + 1) as f64 * std::f64::consts::TAU / segs as f64,
            );
            polar += gl.integrate(a, b, |th| {
                let (c, sn) = (th.cos(), th.sin());
                let tx = if c > 0.0 { (r.x1 - p.x) / c } else if c < 0.0 { (r.x0 - p.x) / c } else { f64::INFINITY };
                let ty = if sn > 0.0 { (r.y1 - p.y) / sn } else if sn < 0.0 { (r.y0 - p.y) / sn } else { f64::INFINITY };
                let rb = tx.min(ty);
                // ∫_0^R −ln(ρ) ρ dρ = R²/4 − R² ln R / 2
                rb * rb / 4.0 - rb * rb * rb.ln() / 2.0
            });
        }
        assert!((whole - polar).abs() < 1e-5, "{whole} vs {polar}");
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let r = Rect::new(-0.3, -0.2, 0.5, 0.7);
        let h = 1e-6;
        for p in [Point::new(0.1, 0.05), Point::new(2.0, -1.0), Point::new(0.45, 0.62)] {
            let g = neg_log_rect_gradient(p, &r);
            let fx = (neg_log_rect(p + Point::new(h, 0.0), &r) - neg_log_rect(p - Point::new(h, 0.0), &r)) / (2.0 * h);
            let fy = (neg_log_rect(p + Point::new(0.0, h), &r) - neg_log_rect(p - Point::new(0.0, h), &r)) / (2.0 * h);
            assert!((g.x - fx).abs() < 1e-7 && (g.y - fy).abs() < 1e-7, "{g:?} vs ({fx},{fy})");
        }
        // At a corner the integrand is only log-singular; compare to adaptive quadrature.
        let g = neg_log_rect_gradient(Point::new(0.5, 0.7), &r);
        assert!((g.x + 0.937_351_253_377_197_8).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let gl = GaussLegendre::new(6);
        let v = gl.integrate(-1.0, 2.0, |x| x.powi(11) - 3.0 * x.powi(4));
        let exact = (2f64.powi(12) - 1.0) / 12.0 - 3.0 * (32.0 + 1.0) / 5.0;
        assert!((v - exact).abs() < 1e-10);
        let s: f64 = gl.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }
}
