//! Metropolis sampling of `dP ∝ exp(−β/2 · H_N)` and the Kostlan radial
//! oracle for the β = 2 quadratic case.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::hamiltonian;
use crate::error::{Error, Result};
use crate::geometry::{Frame, Point, PointConfiguration};
use crate::potential::{EquilibriumMeasure, Potential};

/// Identity of the generator, recorded in output metadata.
pub const RNG_NAME: &str = "rand_chacha 0.9 ChaCha8Rng (seed_from_u64, stream = replica index)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    #[default]
    Metropolis,
    Mala,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n: usize,
    pub beta: f64,
    /// Proposal scale in macroscopic units; defaults to `0.3/√N`.
    #[serde(default)]
    pub proposal_sigma: Option<f64>,
    pub n_sweeps: usize,
    pub burn_in_sweeps: usize,
    pub thin: usize,
    pub seed: u64,
    #[serde(default)]
    pub move_kind: MoveKind,
}

impl SamplerConfig {
    pub fn new(n: usize, beta: f64, n_sweeps: usize, burn_in_sweeps: usize, thin: usize, seed: u64) -> Self {
        SamplerConfig { n, beta, proposal_sigma: None, n_sweeps, burn_in_sweeps, thin, seed, move_kind: MoveKind::Metropolis }
    }

    pub fn sigma(&self) -> f64 {
        self.proposal_sigma.unwrap_or(0.3 / (self.n as f64).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Validation("sampler needs n ≥ 1".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Validation(format!("β must be positive, got {}", self.beta)));
        }
        if self.n_sweeps <= self.burn_in_sweeps {
            return Err(Error::Validation(format!(
                "n_sweeps ({}) must exceed burn_in_sweeps ({})",
                self.n_sweeps, self.burn_in_sweeps
            )));
        }
        if self.thin == 0 {
            return Err(Error::Validation("thin must be ≥ 1".into()));
        }
        if !(self.sigma() > 0.0 && self.sigma().is_finite()) {
            return Err(Error::Validation("proposal_sigma must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub samples: Vec<PointConfiguration>,
    pub acceptance_rate: f64,
    /// `H_N` after every post-burn-in sweep.
    pub energy_trace: Vec<f64>,
    pub accepted: u64,
    pub proposed: u64,
}

/// `H_N(…, y, …) − H_N(…, x_k, …)` in `O(N)`.
pub fn delta_energy(points: &[Point], k: usize, y: Point, potential: &dyn Potential) -> f64 {
    let x = points[k];
    let n = points.len();
    // Σ_j ln(|x − x_j|² / |y − x_j|²), batching products to save logarithms.
    let mut acc = 0.0;
    let mut prod = 1.0;
    let mut count = 0;
    for (j, p) in points.iter().enumerate() {
        if j == k {
            continue;
        }
        prod *= (x - *p).norm_sq() / (y - *p).norm_sq();
        count += 1;
        if count == 8 {
            acc += prod.ln();
            prod = 1.0;
            count = 0;
        }
    }
    acc += prod.ln();
    // 2·Σ(−log|y−x_j| + log|x−x_j|) = Σ ln(|x−x_j|²/|y−x_j|²)
    acc + n as f64 * (potential.evaluate(y) - potential.evaluate(x))
}

/// Metropolis acceptance `min(1, exp(−β/2 · ΔH))`.
pub fn acceptance_probability(beta: f64, delta_h: f64) -> f64 {
    (-0.5 * beta * delta_h).exp().min(1.0)
}

/// `∇_{x_k} H_N`.
fn particle_gradient(points: &[Point], k: usize, potential: &dyn Potential) -> Point {
    let x = points[k];
    let mut g = Point::ORIGIN;
    for (j, p) in points.iter().enumerate() {
        if j != k {
            let d = x - *p;
            g = g - d * (2.0 / d.norm_sq());
        }
    }
    g + potential.gradient(x) * points.len() as f64
}

/// I.i.d. draws from the gridded density (inverse CDF over cells, uniform within).
pub fn draw_from_measure(eq: &EquilibriumMeasure, n: usize, rng: &mut impl Rng) -> Result<Vec<Point>> {
    let mut cum = Vec::with_capacity(eq.density.len());
    let mut s = 0.0;
    for d in &eq.density {
        s += d;
        cum.push(s);
    }
    if s <= 0.0 {
        return Err(Error::Validation("cannot sample from a measure with zero mass".into()));
    }
    let g = eq.grid;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * s;
        let k = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        let r = g.cell_rect(k % g.nx, k / g.nx);
        out.push(Point::new(r.x0 + rng.random::<f64>() * r.width(), r.y0 + rng.random::<f64>() * r.height()));
    }
    Ok(out)
}

fn gaussian2(rng: &mut impl Rng) -> Point {
    Point::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

fn run_chain(cfg: &SamplerConfig, potential: &dyn Potential, mut x: Vec<Point>, rng: &mut ChaCha8Rng) -> Result<Chain> {
    let n = cfg.n;
    let sigma = cfg.sigma();
    let tau = 0.5 * sigma * sigma;
    let beta = cfg.beta;
    let energy = |pts: &[Point]| hamiltonian(&PointConfiguration { points: pts.to_vec(), frame: Frame::Macroscopic }, potential);
    let mut h = energy(&x)?;
    let mut samples = Vec::new();
    let mut trace = Vec::with_capacity(cfg.n_sweeps - cfg.burn_in_sweeps);
    let (mut acc, mut prop) = (0u64, 0u64);
    for sweep in 0..cfg.n_sweeps {
        for k in 0..n {
            let (y, log_q) = match cfg.move_kind {
                MoveKind::Metropolis => (x[k] + gaussian2(rng) * sigma, 0.0),
                MoveKind::Mala => {
                    // Drift along −β/2 ∇H; log q(x|y) − log q(y|x) enters the ratio.
                    let gx = particle_gradient(&x, k, potential);
                    let y = x[k] - gx * (tau * 0.5 * beta) + gaussian2(rng) * sigma;
                    let old = x[k];
                    x[k] = y;
                    let gy = particle_gradient(&x, k, potential);
                    x[k] = old;
                    let fwd = (y - (old - gx * (tau * 0.5 * beta))).norm_sq();
                    let bwd = (old - (y - gy * (tau * 0.5 * beta))).norm_sq();
                    (y, -(bwd - fwd) / (4.0 * tau))
                }
            };
            prop += 1;
            if !y.is_finite() {
                continue;
            }
            let dh = delta_energy(&x, k, y, potential);
            let log_a = -0.5 * beta * dh + log_q;
            if log_a >= 0.0 || rng.random::<f64>() < log_a.exp() {
                x[k] = y;
                h += dh;
                acc += 1;
            }
        }
        if sweep % 64 == 63 {
            h = energy(&x)?;
        }
        if sweep >= cfg.burn_in_sweeps {
            trace.push(h);
            if (sweep - cfg.burn_in_sweeps).is_multiple_of(cfg.thin) {
                samples.push(PointConfiguration { points: x.clone(), frame: Frame::Macroscopic });
            }
        }
    }
    Ok(Chain {
        samples,
        acceptance_rate: if prop > 0 { acc as f64 / prop as f64 } else { 0.0 },
        energy_trace: trace,
        accepted: acc,
        proposed: prop,
    })
}

fn rng_for(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Run one chain from a given initial configuration.
pub fn sample_gibbs(cfg: &SamplerConfig, potential: &dyn Potential, init: &PointConfiguration) -> Result<Chain> {
    cfg.validate()?;
    init.require_frame(Frame::Macroscopic)?;
    if init.n() != cfg.n {
        return Err(Error::Validation(format!("initial configuration has {} points, expected {}", init.n(), cfg.n)));
    }
    let mut rng = rng_for(cfg.seed, 0);
    run_chain(cfg, potential, init.points.clone(), &mut rng)
}

/// Run one chain initialised by i.i.d. draws from `eq` (same RNG stream).
pub fn sample_gibbs_from_measure(cfg: &SamplerConfig, potential: &dyn Potential, eq: &EquilibriumMeasure) -> Result<Chain> {
    replica(cfg, potential, eq, 0)
}

fn replica(cfg: &SamplerConfig, potential: &dyn Potential, eq: &EquilibriumMeasure, r: u64) -> Result<Chain> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, r);
    let x = draw_from_measure(eq, cfg.n, &mut rng)?;
    run_chain(cfg, potential, x, &mut rng)
}

/// Independent replicas on RNG streams `0..count`, run in parallel.
pub fn sample_replicas(
    cfg: &SamplerConfig,
    potential: &dyn Potential,
    eq: &EquilibriumMeasure,
    count: usize,
) -> Result<Vec<Chain>> {
    (0..count as u64).into_par_iter().map(|r| replica(cfg, potential, eq, r)).collect()
}

/// Kostlan's law: moduli of complex Ginibre eigenvalues (unit-disk
/// normalisation) are distributed as `{√(γ_k/n)}` with `γ_k ~ Gamma(k, 1)`
/// independent.
pub fn ginibre_radial_oracle(n: usize, n_samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gammas: Vec<Gamma<f64>> = (1..=n).map(|k| Gamma::new(k as f64, 1.0).expect("shape > 0")).collect();
    (0..n_samples)
        .map(|_| gammas.iter().map(|g| (g.sample(&mut rng) / n as f64).sqrt()).collect())
        .collect()
}

fn ln_factorial(j: usize) -> f64 {
    // Exact sum for small j, Stirling series beyond.
    if j < 32 {
        return (2..=j).map(|i| (i as f64).ln()).sum();
    }
    let x = j as f64 + 1.0;
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x.powi(3))
        + 1.0 / (1260.0 * x.powi(5))
}

fn ln_poisson_pmf(j: usize, x: f64) -> f64 {
    if x == 0.0 {
        return if j == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -x + j as f64 * x.ln() - ln_factorial(j)
}

/// `P(Poisson(x) ≤ m)`, summing whichever tail is small.
pub fn poisson_cdf(m: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if (m as f64) < x {
        let s: f64 = (0..=m).map(|j| ln_poisson_pmf(j, x).exp()).sum();
        s.min(1.0)
    } else {
        let mut tail = 0.0;
        let mut j = m + 1;
        loop {
            let t = ln_poisson_pmf(j, x).exp();
            tail += t;
            if t < 1e-18 * tail.max(1e-300) || j > m + 1 + 10 * ((x.sqrt() as usize) + 10) {
                break;
            }
            j += 1;
        }
        (1.0 - tail).max(0.0)
    }
}

/// `P(γ_k ≤ x)` for `γ_k ~ Gamma(k, 1)`, `k ≥ 1`.
pub fn gamma_cdf(k: usize, x: f64) -> f64 {
    1.0 - poisson_cdf(k - 1, x)
}

/// Expected fraction of Kostlan radii `≤ r`: `(1/n) Σ_k P(γ_k ≤ n r²)`,
/// evaluated in closed form as `E[min(X, n)]/n` with `X ~ Poisson(n r²)`.
pub fn kostlan_radial_cdf(n: usize, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let x = n as f64 * r * r;
    let below = if n >= 2 { poisson_cdf(n - 2, x) } else { 0.0 };
    let at_least_n = 1.0 - poisson_cdf(n - 1, x);
    ((x * below + n as f64 * at_least_n) / n as f64).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub samples: usize,
    pub acceptance_rate: f64,
    /// Integrated autocorrelation time of the energy trace (sweeps).
    pub autocorrelation_time: f64,
    pub effective_sample_size: f64,
    /// Set when the trace has zero variance.
    pub degenerate: bool,
}

/// Integrated autocorrelation time with Sokal's automatic window (`c = 5`).
pub fn integrated_autocorrelation(trace: &[f64]) -> (f64, bool) {
    let n = trace.len();
    let mean = trace.iter().sum::<f64>() / n as f64;
    let var = trace.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if !(var > 0.0) {
        return (n as f64, true);
    }
    let mut tau = 1.0;
    for t in 1..n {
        let c: f64 = (0..n - t).map(|i| (trace[i] - mean) * (trace[i + t] - mean)).sum::<f64>() / (n as f64 * var);
        tau += 2.0 * c;
        if t as f64 >= 5.0 * tau {
            break;
        }
    }
    (tau.max(1.0 / n as f64), false)
}

pub fn diagnose_chain(chain: &Chain) -> Result<ChainDiagnostics> {
    let n = chain.energy_trace.len();
    if n < 10 {
        return Err(Error::ChainTooShort(n));
    }
    let (tau, degenerate) = integrated_autocorrelation(&chain.energy_trace);
    Ok(ChainDiagnostics {
        samples: n,
        acceptance_rate: chain.acceptance_rate,
        autocorrelation_time: tau,
        effective_sample_size: n as f64 / tau,
        degenerate,
    })
}
