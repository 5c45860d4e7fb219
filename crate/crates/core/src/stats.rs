//! Blow-up, discrepancy, local-law statistics, empirical-field summaries and
//! the δ-schedule.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::energy::{renormalized_energy, QuadratureOptions, Region, TruncationParam};
use crate::error::{Error, Result};
use crate::fieldgrid::BackgroundField;
use crate::geometry::{Frame, Point, PointConfiguration, Rect};
use crate::potential::EquilibriumMeasure;

/// Square `center + [−half_side, half_side]²` in blown-up coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub center: Point,
    pub half_side: f64,
}

impl Window {
    pub fn new(center: Point, half_side: f64) -> Result<Self> {
        if !(half_side > 0.0 && half_side.is_finite()) || !center.is_finite() {
            return Err(Error::Validation(format!("window half-side must be positive, got {half_side}")));
        }
        Ok(Window { center, half_side })
    }

    /// Window of side `r` (the square `C(center, r)`).
    pub fn of_side(center: Point, r: f64) -> Result<Self> {
        Self::new(center, 0.5 * r)
    }

    pub fn side(&self) -> f64 {
        2.0 * self.half_side
    }

    pub fn rect(&self) -> Rect {
        Rect::square(self.center, self.side())
    }

    pub fn scaled(&self, factor: f64) -> Window {
        Window { center: self.center, half_side: self.half_side * factor }
    }
}

fn require_inside(mu: &EquilibriumMeasure, r: &Rect) -> Result<()> {
    if !mu.grid.bounds().contains_rect(r) {
        return Err(Error::WindowOutsideGrid(format!("{r:?} not inside {:?}", mu.grid.bounds())));
    }
    Ok(())
}

/// `x'_i = √n · x_i`.
pub fn blow_up(config: &PointConfiguration, n: usize) -> Result<PointConfiguration> {
    config.require_frame(Frame::Macroscopic)?;
    let s = (n as f64).sqrt();
    PointConfiguration::new(config.points.iter().map(|&p| p * s).collect(), Frame::BlownUp)
}

/// Inverse of [`blow_up`].
pub fn blow_down(config: &PointConfiguration, n: usize) -> Result<PointConfiguration> {
    config.require_frame(Frame::BlownUp)?;
    let s = 1.0 / (n as f64).sqrt();
    PointConfiguration::new(config.points.iter().map(|&p| p * s).collect(), Frame::Macroscopic)
}

pub fn count_in(config: &PointConfiguration, r: &Rect) -> usize {
    config.points.iter().filter(|p| r.contains(**p)).count()
}

/// Point count in the window minus the background mass there.
pub fn discrepancy(config: &PointConfiguration, mu_prime: &EquilibriumMeasure, window: &Window) -> Result<f64> {
    config.require_frame(Frame::BlownUp)?;
    let r = window.rect();
    require_inside(mu_prime, &r)?;
    Ok(count_in(config, &r) as f64 - mu_prime.mass_in_rect(&r))
}

/// `(D²·min(1, D₊/R²), ∫_{C_{2R}} |E_η|²)` for the window of side `R`.
pub fn discrepancy_energy_check(
    config: &PointConfiguration,
    bg: &BackgroundField,
    window: &Window,
    eta: TruncationParam,
    opts: QuadratureOptions,
) -> Result<(f64, f64)> {
    let d = discrepancy(config, bg.measure(), window)?;
    let big = window.scaled(2.0).rect();
    require_inside(bg.measure(), &big)?;
    let r = window.side();
    let lhs = d * d * (d.max(0.0) / (r * r)).min(1.0);
    let n_in = count_in(config, &big) as f64;
    let renorm = renormalized_energy(config, bg, Region::Window(big), eta, opts)?;
    let rhs = renorm - 2.0 * PI * n_in * eta.eta.ln();
    Ok((lhs, rhs))
}

/// Smooth compactly supported test functions with exact norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BumpKind {
    Zero,
    /// `(1 + cos πr)/2` on the unit disk.
    RadialCosine,
    /// `cos²(πx/2)·cos²(πy/2)` on `[−1, 1]²`.
    TensorCosine,
}

/// `f(z) = f̃((z − center)/scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub kind: BumpKind,
    pub center: Point,
    pub scale: f64,
}

impl TestFunction {
    pub fn new(kind: BumpKind, center: Point, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Validation(format!("test function scale must be positive, got {scale}")));
        }
        Ok(TestFunction { kind, center, scale })
    }

    pub fn eval(&self, z: Point) -> f64 {
        let u = (z - self.center) * (1.0 / self.scale);
        match self.kind {
            BumpKind::Zero => 0.0,
            BumpKind::RadialCosine => {
                let r = u.norm();
                if r < 1.0 {
                    0.5 * (1.0 + (PI * r).cos())
                } else {
                    0.0
                }
            }
            BumpKind::TensorCosine => {
                if u.x.abs() < 1.0 && u.y.abs() < 1.0 {
                    (0.5 * PI * u.x).cos().powi(2) * (0.5 * PI * u.y).cos().powi(2)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self.kind {
            BumpKind::Zero => 0.0,
            _ => 1.0,
        }
    }

    pub fn grad_sup_norm(&self) -> f64 {
        match self.kind {
            BumpKind::Zero => 0.0,
            _ => 0.5 * PI / self.scale,
        }
    }

    /// Bounding square of the support.
    pub fn support(&self) -> Rect {
        Rect::square(self.center, 2.0 * self.scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLawReport {
    pub n: usize,
    pub delta: f64,
    pub delta1: f64,
    pub statistic: f64,
    pub discrepancy: f64,
    pub window: Window,
    pub test_function: BumpKind,
    pub grad_bound_term: f64,
    pub sup_bound_term: f64,
}

/// `∫ f dμ` over the cells meeting the support of `f`.
fn integrate_test(mu: &EquilibriumMeasure, f: &TestFunction) -> f64 {
    if f.kind == BumpKind::Zero {
        return 0.0;
    }
    let gl = crate::quadrature::GaussLegendre::new(4);
    let g = mu.grid;
    let s = f.support();
    let h = g.spacing;
    let lo_i = (((s.x0 - g.origin.x) / h).floor().max(0.0) as usize).min(g.nx);
    let hi_i = (((s.x1 - g.origin.x) / h).ceil().max(0.0) as usize).min(g.nx);
    let lo_j = (((s.y0 - g.origin.y) / h).floor().max(0.0) as usize).min(g.ny);
    let hi_j = (((s.y1 - g.origin.y) / h).ceil().max(0.0) as usize).min(g.ny);
    let mut acc = 0.0;
    for j in lo_j..hi_j {
        for i in lo_i..hi_i {
            let d = mu.density[g.index(i, j)];
            if d != 0.0 {
                acc += d * gl.integrate_rect(&g.cell_rect(i, j), |z| f.eval(z));
            }
        }
    }
    acc
}

/// `n^{−2δ} |Σ_i f(x'_i) − ∫ f dμ'|` for `f` supported in `C(z0', n^δ)`.
pub fn local_law_statistic(
    config: &PointConfiguration,
    mu_prime: &EquilibriumMeasure,
    z0: Point,
    delta: f64,
    n: usize,
    f: &TestFunction,
) -> Result<LocalLawReport> {
    config.require_frame(Frame::BlownUp)?;
    let nf = n as f64;
    let window = Window::of_side(z0, nf.powf(delta))?;
    let allowed = window.rect();
    let sup = f.support();
    let tol = 1e-12 * allowed.width();
    if f.kind != BumpKind::Zero
        && !(sup.x0 >= allowed.x0 - tol && sup.y0 >= allowed.y0 - tol && sup.x1 <= allowed.x1 + tol && sup.y1 <= allowed.y1 + tol)
    {
        return Err(Error::SupportViolation(format!("{sup:?} ⊄ {allowed:?}")));
    }
    require_inside(mu_prime, &allowed)?;
    let sum: f64 = config.points.iter().map(|&p| f.eval(p)).sum();
    let integral = integrate_test(mu_prime, f);
    let statistic = nf.powf(-2.0 * delta) * (sum - integral).abs();
    let delta1 = choose_deltas(delta, 1.0, 0.5).map(|s| s.delta1).unwrap_or(f64::NAN);
    Ok(LocalLawReport {
        n,
        delta,
        delta1,
        statistic,
        discrepancy: discrepancy(config, mu_prime, &window)?,
        window,
        test_function: f.kind,
        grad_bound_term: f.grad_sup_norm() * nf.powf(delta1),
        sup_bound_term: f.sup_norm() * nf.powf(-2.0 * delta / 3.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldStatsOptions {
    /// Translation stride (blown-up units).
    pub stride: f64,
    pub radii: Vec<f64>,
    pub nn_bin: f64,
    pub nn_bins: usize,
    pub pair_rmax: f64,
    pub pair_bins: usize,
}

impl Default for FieldStatsOptions {
    fn default() -> Self {
        FieldStatsOptions {
            stride: 1.0,
            radii: vec![0.5, 1.0, 1.5, 2.0, 3.0, 4.0],
            nn_bin: 0.1,
            nn_bins: 30,
            pair_rmax: 5.0,
            pair_bins: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumberVariance {
    pub radius: f64,
    pub translations: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub window: Window,
    pub points: usize,
    pub intensity: f64,
    pub number_variance: Vec<NumberVariance>,
    /// Normalised histogram of nearest-neighbour distances.
    pub nearest_neighbour: Vec<f64>,
    pub nn_bin: f64,
    /// Pair correlation `g(r)` at bin centres `(k + ½)·Δr`.
    pub pair_correlation: Vec<f64>,
    pub pair_bin: f64,
    pub pair_references: usize,
}

/// Translation-averaged summaries of the configuration seen from a stride
/// grid of positions inside `C(z0', n^{δ₁})` (minus-sampling at the edges).
pub fn empirical_field_stats(
    config: &PointConfiguration,
    z0: Point,
    delta1: f64,
    n: usize,
    opts: &FieldStatsOptions,
) -> Result<FieldStats> {
    config.require_frame(Frame::BlownUp)?;
    if !(opts.stride > 0.0) {
        return Err(Error::Validation("stride must be positive".into()));
    }
    let window = Window::of_side(z0, (n as f64).powf(delta1))?;
    let rect = window.rect();
    let inside: Vec<Point> = config.points.iter().copied().filter(|p| rect.contains(*p)).collect();
    if inside.len() < 10 {
        return Err(Error::TooFewPoints { found: inside.len(), needed: 10 });
    }
    let intensity = inside.len() as f64 / rect.area();

    let mut number_variance = Vec::new();
    for &r in &opts.radii {
        let span = rect.width() - 2.0 * r;
        if span < 0.0 {
            continue;
        }
        let steps = (span / opts.stride).floor() as usize + 1;
        let offset = 0.5 * (span - (steps - 1) as f64 * opts.stride);
        let mut counts = Vec::with_capacity(steps * steps);
        for j in 0..steps {
            for i in 0..steps {
                let c = Point::new(
                    rect.x0 + r + offset + i as f64 * opts.stride,
                    rect.y0 + r + offset + j as f64 * opts.stride,
                );
                counts.push(inside.iter().filter(|p| p.dist(c) < r).count() as f64);
            }
        }
        let m = counts.iter().sum::<f64>() / counts.len() as f64;
        let v = counts.iter().map(|c| (c - m).powi(2)).sum::<f64>() / counts.len() as f64;
        number_variance.push(NumberVariance { radius: r, translations: counts.len(), mean: m, variance: v });
    }

    let mut nn = vec![0.0; opts.nn_bins];
    for p in &inside {
        let d = config.points.iter().map(|q| q.dist(*p)).filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min);
        let b = (d / opts.nn_bin) as usize;
        if b < nn.len() {
            nn[b] += 1.0;
        }
    }
    let total = inside.len() as f64;
    nn.iter_mut().for_each(|v| *v /= total * opts.nn_bin);

    let dr = opts.pair_rmax / opts.pair_bins as f64;
    let mut pairs = vec![0.0; opts.pair_bins];
    let refs: Vec<Point> = inside.iter().copied().filter(|p| rect.distance_to_boundary(*p) >= opts.pair_rmax).collect();
    for p in &refs {
        for q in &inside {
            let d = p.dist(*q);
            if d > 0.0 && d < opts.pair_rmax {
                pairs[(d / dr) as usize] += 1.0;
            }
        }
    }
    let pair_correlation = if refs.is_empty() {
        Vec::new()
    } else {
        pairs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let ring = PI * (((k + 1) as f64 * dr).powi(2) - (k as f64 * dr).powi(2));
                c / (refs.len() as f64 * intensity * ring)
            })
            .collect()
    };
    Ok(FieldStats {
        window,
        points: inside.len(),
        intensity,
        number_variance,
        nearest_neighbour: nn,
        nn_bin: opts.nn_bin,
        pair_correlation,
        pair_bin: dr,
        pair_references: refs.len(),
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Exponent schedule `0 < δ₃ < δ₂ < δ₁ < δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaSchedule {
    pub delta: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub lower_bound: f64,
}

pub fn schedule_gamma(kappa: f64) -> f64 {
    ((1.0 + kappa / 2.0) / (1.0 + kappa / 3.0)).sqrt()
}

pub fn schedule_alpha(kappa: f64) -> f64 {
    let g = schedule_gamma(kappa);
    (g - 1.0) / (1.0 - g / 3.0)
}

/// `max(3δ/4, δ(1−α)/(1−α²), δ(1+κ/2) − κ/2)`.
pub fn delta1_lower_bound(delta: f64, kappa: f64) -> f64 {
    let a = schedule_alpha(kappa);
    (0.75 * delta).max(delta * (1.0 - a) / (1.0 - a * a)).max(delta * (1.0 + kappa / 2.0) - kappa / 2.0)
}

impl DeltaSchedule {
    /// Each required inequality with its name; all must be true.
    pub fn checks(&self) -> [(&'static str, bool); 7] {
        let (d, d1, d2, d3, k) = (self.delta, self.delta1, self.delta2, self.delta3, self.kappa);
        [
            ("0 < δ₃", 0.0 < d3),
            ("δ₃ < δ₂ < δ₁ < δ", d3 < d2 && d2 < d1 && d1 < d),
            ("δ₁ > 2δ/3", d1 > 2.0 * d / 3.0),
            ("3δ₃ > δ", 3.0 * d3 > d),
            ("δ₁ + 3δ₃ + κ(δ₃ − ½) < 2δ₁", d1 + 3.0 * d3 + k * (d3 - 0.5) < 2.0 * d1),
            ("2δ − δ₂ < 2δ₁", 2.0 * d - d2 < 2.0 * d1),
            ("2δ < δ₂ + 3δ₃", 2.0 * d < d2 + 3.0 * d3),
        ]
    }
}

pub fn choose_deltas(delta: f64, kappa: f64, delta1_position: f64) -> Result<DeltaSchedule> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::Validation(format!("δ must lie in (0, 1/2], got {delta}")));
    }
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::Validation(format!("κ must lie in (0, 1], got {kappa}")));
    }
    if !(delta1_position > 0.0 && delta1_position < 1.0) {
        return Err(Error::Validation(format!("δ₁ position must lie in (0, 1), got {delta1_position}")));
    }
    let gamma = schedule_gamma(kappa);
    let alpha = schedule_alpha(kappa);
    let lower_bound = delta1_lower_bound(delta, kappa);
    let delta1 = lower_bound + delta1_position * (delta - lower_bound);
    let delta3 = delta * gamma / 3.0;
    let delta2 = alpha * alpha * delta3 + (1.0 - alpha * alpha) * delta1;
    let s = DeltaSchedule { delta, delta1, delta2, delta3, gamma, alpha, kappa, lower_bound };
    if let Some((name, _)) = s.checks().iter().find(|(_, ok)| !ok) {
        return Err(Error::Validation(format!(
            "δ-schedule inequality {name} fails for δ = {delta}, κ = {kappa}, position = {delta1_position}"
        )));
    }
    Ok(s)
}

/// `(count in C(z0', R), m_eq(z₀)·R², |count − prediction|/n^{2δ₁})`, `R = n^{δ₁}`.
pub fn points_in_square_check(
    config: &PointConfiguration,
    mu_prime: &EquilibriumMeasure,
    z0: Point,
    delta1: f64,
    n: usize,
) -> Result<(usize, f64, f64)> {
    config.require_frame(Frame::BlownUp)?;
    let r = (n as f64).powf(delta1);
    let w = Window::of_side(z0, r)?;
    require_inside(mu_prime, &w.rect())?;
    let count = count_in(config, &w.rect());
    let prediction = mu_prime.density_at(z0) * r * r;
    Ok((count, prediction, (count as f64 - prediction).abs() / (n as f64).powf(2.0 * delta1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Grid;

    fn unit_background(side: f64) -> EquilibriumMeasure {
        let g = Grid::covering(Rect::square(Point::ORIGIN, side), 0.25).unwrap();
        EquilibriumMeasure::from_density(g, vec![1.0; g.len()]).unwrap()
    }

    fn lattice(side: usize) -> PointConfiguration {
        let h = side as f64 / 2.0;
        let pts = (0..side * side)
            .map(|k| Point::new((k % side) as f64 + 0.5 - h, (k / side) as f64 + 0.5 - h))
            .collect();
        PointConfiguration::blown_up(pts).unwrap()
    }

    #[test]
    fn blow_up_round_trip() {
        let c = PointConfiguration::macroscopic(vec![Point::new(1.0, 0.0), Point::new(0.3, -0.7)]).unwrap();
        let b = blow_up(&c, 4).unwrap();
        assert_eq!(b.points[0], Point::new(2.0, 0.0));
        assert_eq!(blow_up(&c, 1).unwrap().points, c.points);
        let back = blow_down(&b, 4).unwrap();
        for (p, q) in back.points.iter().zip(&c.points) {
            assert!((*p - *q).norm() < 1e-15);
        }
        assert!(blow_up(&b, 4).is_err());
    }

    #[test]
    fn discrepancy_basics() {
        let mu = unit_background(20.0);
        let w = Window::new(Point::ORIGIN, 3.0).unwrap();
        let empty = PointConfiguration::empty(Frame::BlownUp);
        assert!((discrepancy(&empty, &mu, &w).unwrap() + 36.0).abs() < 1e-9);
        let lat = lattice(16);
        assert!(discrepancy(&lat, &mu, &w).unwrap().abs() < 1e-9);
        let mut more = lat.clone();
        more.points.push(Point::new(0.1, 0.1));
        assert!((discrepancy(&more, &mu, &w).unwrap() - discrepancy(&lat, &mu, &w).unwrap() - 1.0).abs() < 1e-12);
        let big = Window::new(Point::ORIGIN, 30.0).unwrap();
        assert!(matches!(discrepancy(&lat, &mu, &big), Err(Error::WindowOutsideGrid(_))));
    }

    #[test]
    fn discrepancy_is_additive() {
        let mu = unit_background(20.0);
        let lat = lattice(15);
        let whole = Window::new(Point::new(0.3, 0.1), 4.0).unwrap();
        let quads: Vec<Window> = [(-2.0, -2.0), (2.0, -2.0), (-2.0, 2.0), (2.0, 2.0)]
            .iter()
            .map(|&(dx, dy)| Window::new(Point::new(0.3 + dx, 0.1 + dy), 2.0).unwrap())
            .collect();
        let parts: f64 = quads.iter().map(|w| discrepancy(&lat, &mu, w).unwrap()).sum();
        assert!((parts - discrepancy(&lat, &mu, &whole).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn bump_norms() {
        let f = TestFunction::new(BumpKind::RadialCosine, Point::ORIGIN, 2.0).unwrap();
        assert_eq!(f.eval(Point::ORIGIN), 1.0);
        let g = |f: &TestFunction, p: Point| {
            let e = 1e-6;
            let dx = (f.eval(p + Point::new(e, 0.0)) - f.eval(p - Point::new(e, 0.0))) / (2.0 * e);
            let dy = (f.eval(p + Point::new(0.0, e)) - f.eval(p - Point::new(0.0, e))) / (2.0 * e);
            Point::new(dx, dy).norm()
        };
        assert!((g(&f, Point::new(1.0, 0.0)) - f.grad_sup_norm()).abs() < 1e-6);
        let t = TestFunction::new(BumpKind::TensorCosine, Point::ORIGIN, 1.0).unwrap();
        assert!((g(&t, Point::new(0.5, 0.0)) - t.grad_sup_norm()).abs() < 1e-6);
        let mut worst: f64 = 0.0;
        for k in 0..200 {
            let p = Point::new(-1.0 + 0.01 * k as f64, 0.37 - 0.003 * k as f64);
            worst = worst.max(g(&t, p)).max(g(&f, p * 2.0));
        }
        assert!(worst <= t.grad_sup_norm() + 1e-6);
    }

    #[test]
    fn local_law_statistic_cases() {
        let mu = unit_background(40.0);
        let n = 256;
        let delta = 0.4;
        let s = 0.5 * (n as f64).powf(delta);
        let zero = TestFunction::new(BumpKind::Zero, Point::ORIGIN, s).unwrap();
        let lat = lattice(30);
        assert_eq!(local_law_statistic(&lat, &mu, Point::ORIGIN, delta, n, &zero).unwrap().statistic, 0.0);
        let f = TestFunction::new(BumpKind::RadialCosine, Point::ORIGIN, s).unwrap();
        let clustered = PointConfiguration::blown_up(vec![Point::ORIGIN; n]).unwrap();
        let rep = local_law_statistic(&clustered, &mu, Point::ORIGIN, delta, n, &f).unwrap();
        // ∫ (1+cos πr)/2 over the disk of radius s = s²·π(1/2 − 2/π²).
        let integral = s * s * PI * (0.5 - 2.0 / (PI * PI));
        let expected = (n as f64).powf(-2.0 * delta) * (n as f64 - integral);
        assert!((rep.statistic - expected).abs() < 1e-6 * expected, "{} vs {expected}", rep.statistic);
        let too_big = TestFunction::new(BumpKind::RadialCosine, Point::ORIGIN, 1.1 * s).unwrap();
        assert!(matches!(
            local_law_statistic(&lat, &mu, Point::ORIGIN, delta, n, &too_big),
            Err(Error::SupportViolation(_))
        ));
    }

    #[test]
    fn local_law_translation_invariance() {
        let mu = unit_background(40.0);
        let lat = lattice(24);
        let n = 64;
        let s = 0.5 * (n as f64).powf(0.4);
        let z = Point::new(0.37, -0.21);
        let f = TestFunction::new(BumpKind::TensorCosine, z, s).unwrap();
        let a = local_law_statistic(&lat, &mu, z, 0.4, n, &f).unwrap().statistic;
        // Shift everything by a whole number of background cells.
        let t = Point::new(1.25, -0.5);
        let f2 = TestFunction::new(BumpKind::TensorCosine, z + t, s).unwrap();
        let b = local_law_statistic(&lat.translated(t), &mu.translated(t), z + t, 0.4, n, &f2).unwrap().statistic;
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn golden_delta_schedule() {
        let s = choose_deltas(0.5, 1.0, 0.5).unwrap();
        assert!((s.gamma - 1.060_660_171_779_821_2).abs() < 1e-12);
        assert!((s.alpha - 0.093_836_321_356_054_16).abs() < 1e-12);
        assert!((s.lower_bound - 0.457_106_781_186_547_63).abs() < 1e-12);
        assert!((s.delta1 - 0.478_553_390_593_273_84).abs() < 1e-12);
        assert!((s.delta2 - 0.475_896_169_776_073_3).abs() < 1e-12);
        assert!((s.delta3 - 0.176_776_695_296_636_87).abs() < 1e-12);
        assert!(choose_deltas(0.6, 1.0, 0.5).is_err());
        assert!(choose_deltas(0.5, 0.0, 0.5).is_err());
    }

    #[test]
    fn lower_bound_iteration_vanishes() {
        let mut d = 0.5;
        let mut steps = 0;
        while d >= 0.01 {
            d = delta1_lower_bound(d, 1.0);
            steps += 1;
            assert!(steps < 1000);
        }
        assert!(steps > 1);
    }

    #[test]
    fn points_in_square_cases() {
        let mu = unit_background(60.0);
        let n = 1024;
        let empty = PointConfiguration::empty(Frame::BlownUp);
        let (c, p, gap) = points_in_square_check(&empty, &mu, Point::ORIGIN, 0.45, n).unwrap();
        assert_eq!(c, 0);
        assert!((gap - p / (n as f64).powf(0.9)).abs() < 1e-15);
        let lat = lattice(40);
        let (_, _, gap) = points_in_square_check(&lat, &mu, Point::new(0.01, 0.02), 0.45, n).unwrap();
        let r = (n as f64).powf(0.45);
        assert!(gap < 4.0 * r / r.powi(2), "gap {gap}");
    }

    #[test]
    fn poisson_number_variance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let side = 60.0;
        let n_pts = (side * side) as usize;
        let pts = (0..n_pts)
            .map(|_| Point::new((rng.random::<f64>() - 0.5) * side, (rng.random::<f64>() - 0.5) * side))
            .collect();
        let c = PointConfiguration::blown_up(pts).unwrap();
        let n = 3600;
        let d1 = (side.ln() / (n as f64).ln()) - 1e-9;
        let o = FieldStatsOptions { radii: vec![1.0, 2.0], stride: 4.0, ..Default::default() };
        let st = empirical_field_stats(&c, Point::ORIGIN, d1, n, &o).unwrap();
        for nv in &st.number_variance {
            let expect = PI * nv.radius * nv.radius;
            // Well-separated translations are close to independent.
            let se = expect * (2.0 / nv.translations as f64).sqrt() * 2.0;
            assert!((nv.variance - expect).abs() < 3.0 * se, "r={} var={} vs {expect}", nv.radius, nv.variance);
        }
        let g_mean = st.pair_correlation.iter().sum::<f64>() / st.pair_correlation.len() as f64;
        assert!((g_mean - 1.0).abs() < 0.1);
        let few = PointConfiguration::blown_up(vec![Point::ORIGIN; 3]).unwrap();
        assert!(matches!(empirical_field_stats(&few, Point::ORIGIN, 0.5, 100, &o), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn ks_distance_of_exact_quantiles_is_small() {
        let s: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!((ks_distance(&s, |x| x) - 0.0005).abs() < 1e-12);
    }
}
