//! Oscillation diagnostics on sample paths: free-energy slopes `tau`, Cauchy
//! profiles across levels, the generalized inverse of a monotone path and the
//! multifractal time change with its Hölder-exponent estimate.

mod oscillation;
mod timechange;

pub use oscillation::{
    cauchy_profile, default_tau_window, diameter, oscillations, oscillations_of, tau_estimate, TauEstimate,
};
pub use timechange::{
    default_holder_window, holder_estimate, invert_monotone, time_change, HolderEstimate,
    MonotoneInverse, ParametricCurve,
};

use crate::cascade::CascadeError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("every cell has zero oscillation at level {0}")]
    AllCellsZero(u32),
    #[error("path is not real and nondecreasing at index {0}")]
    NotMonotone(usize),
    #[error("level {level} exceeds the path level {path_level}")]
    LevelTooDeep { level: u32, path_level: u32 },
    #[error("window {lo}..={hi} needs at least {needed} levels")]
    WindowTooShort { lo: u32, hi: u32, needed: u32 },
    #[error("no cell has positive length and oscillation ({excluded} excluded)")]
    DegenerateCells { excluded: usize },
    #[error("path needs at least two levels")]
    TooShallow,
    #[error(transparent)]
    Cascade(#[from] CascadeError),
}

/// Ordinary least squares `y = intercept + slope x`; returns
/// `(slope, intercept, max |residual|)`.
pub(crate) fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    (slope, intercept, resid)
}
