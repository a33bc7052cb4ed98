//! Spectral analysis and Langevin simulation of the Mpemba effect in
//! valley–river loss landscapes, with warmup–stable–decay learning-rate
//! schedules derived from the slow relaxation mode.

pub mod cli;
pub mod config;
pub mod error;
pub mod format;
pub mod landscape;
pub mod mpemba;
pub mod schedule;
pub mod simulator;
pub mod spectral;
pub mod spline;
pub mod svg;
pub mod tridiag;

pub use error::{Error, Result};
pub use landscape::{
    FreeEnergyField, Grid, LandscapeSpec, RiverProfile, TimeConvention, ValleyCurvature,
};
pub use spectral::{SpectralDecomposition, StationaryDistribution};
