//! Two-dimensional Coulomb gas: equilibrium measures, energies, sampling,
//! electric fields and screening constructions.

pub mod convolve;
pub mod energy;
pub mod error;
pub mod experiment;
pub mod fieldgrid;
pub mod geometry;
pub mod io;
pub mod potential;
pub mod quadrature;
pub mod sampler;
pub mod screening;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{Frame, Grid, Point, PointConfiguration, Rect};
