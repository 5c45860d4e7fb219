//! Hamiltonian, next-order energy `w_N`, the splitting identity, truncation
//! and renormalized-energy estimates.

mod minimality;
mod renormalized;

pub use minimality::{minimality_probe, MinimalityProbe};
pub use renormalized::{
    renormalized_energy, renormalized_energy_extrapolated, EtaExtrapolation, QuadratureOptions, Region,
    MONOTONICITY_CONSTANT,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Frame, Point, PointConfiguration};
use crate::potential::{blowup_density, effective_potential, EquilibriumMeasure, Potential};

/// Truncation radius `η ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationParam {
    pub eta: f64,
}

impl TruncationParam {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::Validation(format!("truncation η must lie in (0, 1), got {eta}")));
        }
        Ok(TruncationParam { eta })
    }
}

/// `f_η(x) = (−log(|x|/η))_+`; `+∞` at the origin.
pub fn truncation_kernel(eta: TruncationParam, x: Point) -> f64 {
    let r = x.norm();
    if r == 0.0 {
        return f64::INFINITY;
    }
    (eta.eta.ln() - r.ln()).max(0.0)
}

/// `∇f_η(x) = −x/|x|²` inside the η-disk, zero outside (and at the origin).
pub fn truncation_gradient(eta: TruncationParam, x: Point) -> Point {
    let r2 = x.norm_sq();
    if r2 >= eta.eta * eta.eta || r2 == 0.0 {
        return Point::ORIGIN;
    }
    x * (-1.0 / r2)
}

/// `Σ_{i≠j} −log|x_i − x_j|`, erroring on coincident points.
fn pair_sum(points: &[Point]) -> Result<f64> {
    let n = points.len();
    let per: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in i + 1..n {
                let d2 = (points[i] - points[j]).norm_sq();
                if d2 == 0.0 {
                    return Err(Error::CoincidentPoints { i, j });
                }
                s -= d2.ln();
            }
            Ok(s)
        })
        .collect();
    let mut total = 0.0;
    for s in per {
        total += s?;
    }
    // Each unordered pair contributes 2·(−log r) = −ln r².
    Ok(total)
}

/// `H_N = Σ_{i≠j} −log|x_i − x_j| + N Σ_i V(x_i)` in the macroscopic frame.
pub fn hamiltonian(config: &PointConfiguration, potential: &dyn Potential) -> Result<f64> {
    config.require_frame(Frame::Macroscopic)?;
    let pairs = pair_sum(&config.points)?;
    let n = config.n() as f64;
    let v: f64 = config.points.iter().map(|&p| potential.evaluate(p)).sum();
    Ok(pairs + n * v)
}

/// `w_N = Σ_{i≠j} −log|x'_i − x'_j| − 2 Σ_i U'(x'_i) + ∬ −log dμ' dμ'`
/// for a blown-up configuration and blown-up background.
pub fn w_n_pairwise(config: &PointConfiguration, mu_prime: &EquilibriumMeasure) -> Result<f64> {
    config.require_frame(Frame::BlownUp)?;
    let pairs = pair_sum(&config.points)?;
    let cross: f64 = config.points.par_iter().map(|&p| mu_prime.log_potential_at(p)).collect::<Vec<f64>>().iter().sum();
    Ok(pairs - 2.0 * cross + mu_prime.self_energy())
}

/// Terms of the splitting identity for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub hamiltonian: f64,
    pub w_n: f64,
    pub zeta_sum: f64,
    pub i_mu: f64,
    pub splitting_residual: f64,
    pub metadata: EnergyMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyMetadata {
    pub n: usize,
    pub beta: Option<f64>,
    pub potential: String,
    pub grid_spacing: f64,
    pub eta: Vec<f64>,
}

impl EnergyReport {
    pub fn relative_residual(&self) -> f64 {
        self.splitting_residual.abs() / self.hamiltonian.abs().max(f64::MIN_POSITIVE)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Reusable pieces of the splitting check for one potential and measure.
pub struct SplittingContext<'a> {
    pub potential: &'a dyn Potential,
    pub eq: &'a EquilibriumMeasure,
    pub i_mu: f64,
    zeta: crate::potential::EffectivePotential,
}

impl<'a> SplittingContext<'a> {
    pub fn new(potential: &'a dyn Potential, eq: &'a EquilibriumMeasure) -> Self {
        let zeta = effective_potential(potential, eq);
        SplittingContext { potential, eq, i_mu: eq.rate_function(potential), zeta }
    }

    pub fn zeta_constant(&self) -> f64 {
        self.zeta.constant
    }

    /// Check with a precomputed blown-up background for `config.n()`.
    pub fn check_with(&self, config: &PointConfiguration, mu_prime: &EquilibriumMeasure) -> Result<EnergyReport> {
        let n = config.n();
        let h = hamiltonian(config, self.potential)?;
        let s = (n as f64).sqrt();
        let blown = PointConfiguration::new(config.points.iter().map(|&p| p * s).collect(), Frame::BlownUp)?;
        let w = w_n_pairwise(&blown, mu_prime)?;
        let zeta_sum: f64 =
            config.points.par_iter().map(|&p| self.zeta.at(self.eq, self.potential, p)).collect::<Vec<f64>>().iter().sum();
        let nf = n as f64;
        let rhs = if n == 0 {
            0.0
        } else {
            nf * nf * self.i_mu - 0.5 * nf * nf.ln() + w + 2.0 * nf * zeta_sum
        };
        Ok(EnergyReport {
            hamiltonian: h,
            w_n: w,
            zeta_sum,
            i_mu: self.i_mu,
            splitting_residual: h - rhs,
            metadata: EnergyMetadata {
                n,
                beta: None,
                potential: self.potential.name(),
                grid_spacing: self.eq.grid.spacing,
                eta: Vec::new(),
            },
        })
    }

    pub fn check(&self, config: &PointConfiguration) -> Result<EnergyReport> {
        let mu_prime = blowup_density(self.eq, config.n().max(1))?;
        self.check_with(config, &mu_prime)
    }
}

/// Evaluate every term of the splitting identity for a macroscopic configuration.
pub fn splitting_check(
    config: &PointConfiguration,
    potential: &dyn Potential,
    eq: &EquilibriumMeasure,
) -> Result<EnergyReport> {
    config.require_frame(Frame::Macroscopic)?;
    SplittingContext::new(potential, eq).check(config)
}
