//! Discrete check that the local field minimises energy among fields with
//! the same divergence: `E^loc + ∇^⊥ψ` for compactly supported `ψ`.
//!
//! The truncated local potential lives on grid nodes and its gradient on
//! edges; `ψ` lives on cell centres and its rotated gradient on the same
//! edges. Summation by parts then makes the cross term vanish identically.

use serde::{Deserialize, Serialize};

use super::TruncationParam;
use crate::error::{Error, Result};
use crate::fieldgrid::{truncated_potential_at, BackgroundField, ScalarGrid};
use crate::geometry::{Frame, PointConfiguration};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimalityProbe {
    pub local_energy: f64,
    pub perturbed_energy: f64,
    /// `2 Σ E·∇^⊥ψ h²`, zero up to rounding.
    pub cross_term: f64,
}

pub fn minimality_probe(
    config: &PointConfiguration,
    bg: &BackgroundField,
    stream: &ScalarGrid,
    eta: TruncationParam,
) -> Result<MinimalityProbe> {
    config.require_frame(Frame::BlownUp)?;
    let g = stream.grid;
    let (nx, ny) = (g.nx, g.ny);
    if nx < 3 || ny < 3 {
        return Err(Error::Validation("stream function grid needs at least 3×3 cells".into()));
    }
    for j in 0..ny {
        for i in 0..nx {
            if (i == 0 || j == 0 || i == nx - 1 || j == ny - 1) && stream.get(i, j) != 0.0 {
                return Err(Error::Validation(format!(
                    "stream function support touches the window boundary at cell ({i}, {j})"
                )));
            }
        }
    }
    let h = g.spacing;
    use rayon::prelude::*;
    let nodes: Vec<f64> = (0..(nx + 1) * (ny + 1))
        .into_par_iter()
        .map(|k| truncated_potential_at(&config.points, bg, eta.eta, g.node(k % (nx + 1), k / (nx + 1))))
        .collect();
    let hn = |i: usize, j: usize| nodes[j * (nx + 1) + i];
    let psi = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
            0.0
        } else {
            stream.get(i as usize, j as usize)
        }
    };
    let (mut local, mut pert, mut cross) = (0.0, 0.0, 0.0);
    let mut add = |e: f64, q: f64| {
        local += e * e;
        pert += (e + q) * (e + q);
        cross += 2.0 * e * q;
    };
    // Horizontal edges carry E_x and −∂_yψ.
    for j in 0..=ny {
        for i in 0..nx {
            let e = (hn(i + 1, j) - hn(i, j)) / h;
            let (ii, jj) = (i as isize, j as isize);
            add(e, -(psi(ii, jj) - psi(ii, jj - 1)) / h);
        }
    }
    // Vertical edges carry E_y and ∂_xψ.
    for j in 0..ny {
        for i in 0..=nx {
            let e = (hn(i, j + 1) - hn(i, j)) / h;
            let (ii, jj) = (i as isize, j as isize);
            add(e, (psi(ii, jj) - psi(ii - 1, jj)) / h);
        }
    }
    let a = h * h;
    Ok(MinimalityProbe { local_energy: local * a, perturbed_energy: pert * a, cross_term: cross * a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Grid, Point};
    use crate::potential::EquilibriumMeasure;

    fn setup() -> (PointConfiguration, BackgroundField, Grid) {
        let g = Grid::covering(crate::geometry::Rect::square(Point::ORIGIN, 6.0), 0.1).unwrap();
        let mu = EquilibriumMeasure::uniform_disk(g, Point::ORIGIN, 2.0, 0.5).unwrap();
        let c = PointConfiguration::blown_up(vec![Point::new(0.3, 0.2), Point::new(-1.1, 0.4), Point::new(0.5, -1.3)])
            .unwrap();
        (c, BackgroundField::new(&mu), Grid::covering(crate::geometry::Rect::square(Point::ORIGIN, 4.0), 0.05).unwrap())
    }

    #[test]
    fn zero_stream_function_changes_nothing() {
        let (c, bg, w) = setup();
        let p = minimality_probe(&c, &bg, &ScalarGrid::zeros(w), TruncationParam::new(0.1).unwrap()).unwrap();
        assert_eq!(p.local_energy, p.perturbed_energy);
    }

    #[test]
    fn bump_perturbation_only_adds_energy() {
        let (c, bg, w) = setup();
        let s = ScalarGrid::from_fn(w, |x| {
            let r2 = (x - Point::new(0.2, 0.1)).norm_sq();
            if r2 < 1.0 {
                (1.0 - r2).powi(3)
            } else {
                0.0
            }
        });
        let p = minimality_probe(&c, &bg, &s, TruncationParam::new(0.1).unwrap()).unwrap();
        assert!(p.perturbed_energy > p.local_energy);
        assert!(p.cross_term.abs() < 1e-9 * p.local_energy);
    }

    #[test]
    fn support_on_boundary_is_rejected() {
        let (c, bg, w) = setup();
        let mut s = ScalarGrid::zeros(w);
        s.values[3] = 1.0;
        assert!(minimality_probe(&c, &bg, &s, TruncationParam::new(0.1).unwrap()).is_err());
    }
}
