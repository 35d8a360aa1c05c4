//! Weighted nonlinear least squares for echo fringes and Rabi scans.
//!
//! Covariances are `χ²_red · (JᵀWJ)⁻¹` at the optimum. Near the `b_perp = 0`
//! boundary the `b_perp` uncertainty comes from the profile instead.

mod dataset;
mod echo_fit;
mod grid;
pub mod lm;
mod profile;
mod rabi;

use nalgebra::DMatrix;

pub use dataset::{Dataset, DatasetError, EchoDataset, RabiDataset, Record};
pub use echo_fit::{echo_prediction, fit_echo, fit_echo_with, EchoFitParams, EchoModel, FitResult};
pub use grid::{grid_oracle, GridBounds, GridOptimum, GridResolution};
pub use profile::{profile_identifiability, EchoParam, ProfilePoint};
pub use rabi::{fit_rabi, RabiFit, RabiGuess};

pub const MIN_ECHO_POINTS: usize = 8;
pub const MIN_RABI_POINTS: usize = 6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("need at least {need} data points, got {got}")]
    TooFewPoints { got: usize, need: usize },
    #[error("invalid initial guess: {0}")]
    InvalidInitial(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("parameters not identifiable: {0}")]
    Identifiability(String),
    #[error("unknown parameter '{0}' (expected b_perp, phi0, contrast or baseline)")]
    UnknownParameter(String),
    #[error("model evaluated to a non-finite value at every starting point")]
    NonFinite,
}

pub(crate) struct Covariance {
    pub matrix: DMatrix<f64>,
    pub singular: bool,
}

/// `scale · (JᵀJ)⁻¹` for a weighted Jacobian. Falls back to a pseudo-inverse
/// when the correlation matrix is numerically singular.
pub(crate) fn covariance(j: &DMatrix<f64>, scale: f64) -> Covariance {
    let n = j.ncols();
    let a = j.transpose() * j;
    let d: Vec<f64> = (0..n).map(|i| a[(i, i)].sqrt()).collect();
    let mut singular = d.iter().any(|v| !(*v > 0.0));
    let mut corr = a.clone();
    if !singular {
        for r in 0..n {
            for c in 0..n {
                corr[(r, c)] /= d[r] * d[c];
            }
        }
        let eig = corr.clone().symmetric_eigen();
        singular = eig.eigenvalues.min() < 1e-12;
    }
    let inv = if singular {
        a.clone().pseudo_inverse(1e-12 * a.amax().max(f64::MIN_POSITIVE)).unwrap_or_else(|_| DMatrix::zeros(n, n))
    } else {
        let ci = corr.cholesky().map(|c| c.inverse()).unwrap_or_else(|| DMatrix::zeros(n, n));
        DMatrix::from_fn(n, n, |r, c| ci[(r, c)] / (d[r] * d[c]))
    };
    let m = inv * scale;
    Covariance {
        matrix: (&m + m.transpose()) * 0.5,
        singular,
    }
}
